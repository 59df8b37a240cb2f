//! CSV ingestion, vocabularies, label derivation, splitting and synthetic data.
//!
//! Input files have a header row with a `scenario` column, `label_0` ..
//! `label_{M-1}` columns, and every remaining column treated as a categorical
//! feature field (in header order).

mod movielens;
mod split;
mod synth;
mod vocab;

pub use movielens::{
    derive_labels, derive_movielens, load_movielens_dir, AgeBuckets, RatingRow, UserRow,
};
pub use split::{split, SplitIndices, SplitSpec};
pub use synth::{
    gen_synthetic, value_index, value_name, FieldRoles, GroundTruth, SynthSpec, SyntheticData,
};
pub use vocab::{build_vocab, FieldVocab, Vocab};

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const SCENARIO_COLUMN: &str = "scenario";
pub const LABEL_PREFIX: &str = "label_";

/// One encoded row.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instance {
    pub field_ids: Vec<u32>,
    pub scenario: usize,
    pub labels: Vec<u8>,
}

/// A raw CSV row with its 1-based line number in the source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRow {
    pub line: u64,
    pub values: Vec<String>,
}

/// Header plus raw string rows.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<RawRow>,
}

impl RawTable {
    pub fn new(header: Vec<String>) -> Self {
        RawTable {
            header,
            rows: Vec::new(),
        }
    }

    /// Appends a row, numbering it as if it were written to a file (header is line 1).
    pub fn push(&mut self, values: Vec<String>) {
        let line = self.rows.len() as u64 + 2;
        self.rows.push(RawRow { line, values });
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let mut table = RawTable::new(header);
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            table.rows.push(RawRow {
                line,
                values: record.iter().map(str::to_string).collect(),
            });
        }
        Ok(table)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        for row in &self.rows {
            writeln!(w, "{}", row.values.join(","))?;
        }
        Ok(())
    }
}

/// Column layout of an input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub scenario_col: usize,
    pub label_cols: Vec<usize>,
    pub field_cols: Vec<usize>,
    pub field_names: Vec<String>,
}

impl Schema {
    pub fn from_header(header: &[String]) -> Result<Self> {
        let scenario_col = header
            .iter()
            .position(|h| h == SCENARIO_COLUMN)
            .ok_or_else(|| Error::Schema(format!("missing column `{SCENARIO_COLUMN}`")))?;
        let mut label_cols = Vec::new();
        while let Some(pos) = header
            .iter()
            .position(|h| *h == format!("{LABEL_PREFIX}{}", label_cols.len()))
        {
            label_cols.push(pos);
        }
        if label_cols.is_empty() {
            return Err(Error::Schema(format!("missing column `{LABEL_PREFIX}0`")));
        }
        if let Some(stray) = header
            .iter()
            .find(|h| h.starts_with(LABEL_PREFIX) && !label_cols.iter().any(|&c| header[c] == **h))
        {
            return Err(Error::Schema(format!(
                "label column `{stray}` is not part of a contiguous label_0..label_{} run",
                label_cols.len() - 1
            )));
        }
        let field_cols: Vec<usize> = (0..header.len())
            .filter(|c| *c != scenario_col && !label_cols.contains(c))
            .collect();
        if field_cols.is_empty() {
            return Err(Error::Schema("no feature columns".into()));
        }
        let field_names = field_cols.iter().map(|&c| header[c].clone()).collect();
        Ok(Schema {
            scenario_col,
            label_cols,
            field_cols,
            field_names,
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.label_cols.len()
    }

    pub fn num_fields(&self) -> usize {
        self.field_cols.len()
    }

    fn width(&self) -> usize {
        1 + self.label_cols.len() + self.field_cols.len()
    }
}

/// A row that could not be encoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub line: u64,
    pub reason: String,
}

/// Encoded instances plus the metadata needed to size a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub field_names: Vec<String>,
    pub num_tasks: usize,
    pub num_scenarios: usize,
    pub vocab_sizes: Vec<usize>,
    pub instances: Vec<Instance>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetMeta {
    pub num_scenarios: usize,
    pub num_tasks: usize,
    pub num_fields: usize,
    pub vocab_sizes: Vec<usize>,
    pub scenario_counts: Vec<usize>,
}

impl Dataset {
    pub fn meta(&self) -> DatasetMeta {
        let mut scenario_counts = vec![0; self.num_scenarios];
        for inst in &self.instances {
            scenario_counts[inst.scenario] += 1;
        }
        DatasetMeta {
            num_scenarios: self.num_scenarios,
            num_tasks: self.num_tasks,
            num_fields: self.field_names.len(),
            vocab_sizes: self.vocab_sizes.clone(),
            scenario_counts,
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            field_names: self.field_names.clone(),
            num_tasks: self.num_tasks,
            num_scenarios: self.num_scenarios,
            vocab_sizes: self.vocab_sizes.clone(),
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// Result of encoding a whole table: every row is either encoded or rejected.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub dataset: Dataset,
    pub rejections: Vec<Rejection>,
}

/// Encodes one row. Unseen feature values map to id 0.
pub fn encode(
    row: &RawRow,
    vocab: &Vocab,
    schema: &Schema,
    max_scenarios: Option<usize>,
) -> Result<Instance> {
    let reject = |reason: String| Error::Row {
        line: row.line,
        reason,
    };
    if row.values.len() != schema.width() {
        return Err(reject(format!(
            "expected {} columns, found {}",
            schema.width(),
            row.values.len()
        )));
    }
    let raw_scenario = row.values[schema.scenario_col].trim();
    let scenario: usize = raw_scenario
        .parse()
        .map_err(|_| reject(format!("unparseable scenario `{raw_scenario}`")))?;
    if let Some(k) = max_scenarios {
        if scenario >= k {
            return Err(reject(format!("scenario {scenario} out of range (K = {k})")));
        }
    }
    let labels = schema
        .label_cols
        .iter()
        .enumerate()
        .map(|(m, &c)| match row.values[c].trim() {
            "0" => Ok(0u8),
            "1" => Ok(1u8),
            other => Err(reject(format!("unparseable label_{m} `{other}`"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let field_ids = schema
        .field_cols
        .iter()
        .enumerate()
        .map(|(f, &c)| vocab.encode(f, &row.values[c]))
        .collect();
    Ok(Instance {
        field_ids,
        scenario,
        labels,
    })
}

/// Encodes every row of `table`. The scenario count is taken from
/// `num_scenarios` if given, otherwise inferred as `max(scenario) + 1`.
pub fn encode_table(table: &RawTable, vocab: &Vocab, num_scenarios: Option<usize>) -> Result<Encoded> {
    let schema = Schema::from_header(&table.header)?;
    if vocab.num_fields() != schema.num_fields() {
        return Err(Error::Schema(format!(
            "vocabulary has {} fields but the file has {}",
            vocab.num_fields(),
            schema.num_fields()
        )));
    }
    for (f, name) in schema.field_names.iter().enumerate() {
        if vocab.field(f).name != *name {
            return Err(Error::Schema(format!(
                "field {f} is `{name}` in the file but `{}` in the vocabulary",
                vocab.field(f).name
            )));
        }
    }
    let mut instances = Vec::with_capacity(table.rows.len());
    let mut rejections = Vec::new();
    for row in &table.rows {
        match encode(row, vocab, &schema, num_scenarios) {
            Ok(inst) => instances.push(inst),
            Err(Error::Row { line, reason }) => rejections.push(Rejection { line, reason }),
            Err(e) => return Err(e),
        }
    }
    let num_scenarios = num_scenarios
        .unwrap_or_else(|| instances.iter().map(|i| i.scenario + 1).max().unwrap_or(0));
    Ok(Encoded {
        dataset: Dataset {
            field_names: schema.field_names.clone(),
            num_tasks: schema.num_tasks(),
            num_scenarios,
            vocab_sizes: vocab.sizes(),
            instances,
        },
        rejections,
    })
}

/// Builds the vocabulary from the table's feature columns and encodes it.
pub fn ingest(table: &RawTable, min_frequency: usize) -> Result<(Vocab, Encoded)> {
    let schema = Schema::from_header(&table.header)?;
    let vocab = build_vocab(table, &schema.field_names, min_frequency)?;
    let encoded = encode_table(table, &vocab, None)?;
    Ok((vocab, encoded))
}
