use std::collections::HashMap;
use std::path::Path;

use serde_json::{Map, Value};

use super::RawTable;
use crate::error::{Error, Result};

const MIN_FREQ_KEY: &str = "_min_frequency";

/// Field-local mapping from raw string to id. Id 0 is reserved for
/// unseen and low-frequency values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldVocab {
    pub name: String,
    ids: HashMap<String, u32>,
    /// values in id order (`values[i]` has id `i + 1`)
    values: Vec<String>,
}

impl FieldVocab {
    fn new(name: String) -> Self {
        FieldVocab {
            name,
            ids: HashMap::new(),
            values: Vec::new(),
        }
    }

    fn insert(&mut self, value: String) -> Result<()> {
        let id = self.values.len() as u32 + 1;
        if self.ids.insert(value.clone(), id).is_some() {
            return Err(Error::Schema(format!(
                "duplicate value `{value}` in field `{}`",
                self.name
            )));
        }
        self.values.push(value);
        Ok(())
    }

    pub fn get(&self, value: &str) -> Option<u32> {
        self.ids.get(value).copied()
    }

    /// Number of ids including the reserved id 0.
    pub fn size(&self) -> usize {
        self.values.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    fields: Vec<FieldVocab>,
    min_frequency: usize,
}

impl Vocab {
    pub fn num_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn field(&self, f: usize) -> &FieldVocab {
        &self.fields[f]
    }

    pub fn min_frequency(&self) -> usize {
        self.min_frequency
    }

    pub fn encode(&self, field: usize, value: &str) -> u32 {
        self.fields[field].get(value).unwrap_or(0)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.fields.iter().map(FieldVocab::size).collect()
    }

    pub fn to_json(&self) -> Value {
        let mut root = Map::new();
        for field in &self.fields {
            let mut m = Map::new();
            for (i, v) in field.values.iter().enumerate() {
                m.insert(v.clone(), Value::from(i as u64 + 1));
            }
            root.insert(field.name.clone(), Value::Object(m));
        }
        root.insert(MIN_FREQ_KEY.into(), Value::from(self.min_frequency as u64));
        Value::Object(root)
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let root = value
            .as_object()
            .ok_or_else(|| Error::Schema("vocabulary must be a JSON object".into()))?;
        let min_frequency = root
            .get(MIN_FREQ_KEY)
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Schema(format!("vocabulary is missing `{MIN_FREQ_KEY}`")))?
            as usize;
        let mut fields = Vec::new();
        for (name, entries) in root.iter().filter(|(k, _)| *k != MIN_FREQ_KEY) {
            let entries = entries
                .as_object()
                .ok_or_else(|| Error::Schema(format!("field `{name}` must map values to ids")))?;
            let mut pairs = entries
                .iter()
                .map(|(v, id)| {
                    id.as_u64()
                        .filter(|&id| id >= 1)
                        .map(|id| (id, v.clone()))
                        .ok_or_else(|| Error::Schema(format!("bad id for `{v}` in field `{name}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            pairs.sort();
            let mut field = FieldVocab::new(name.clone());
            for (expected, (id, v)) in (1u64..).zip(pairs) {
                if id != expected {
                    return Err(Error::Schema(format!(
                        "field `{name}` ids are not dense: expected {expected}, found {id}"
                    )));
                }
                field.insert(v)?;
            }
            fields.push(field);
        }
        Ok(Vocab {
            fields,
            min_frequency,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json())?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&serde_json::from_str(&text)?)
    }
}

/// Builds field-local vocabularies, keeping values seen at least
/// `min_frequency` times. Ids are assigned from 1 in first-appearance order.
pub fn build_vocab(table: &RawTable, field_columns: &[String], min_frequency: usize) -> Result<Vocab> {
    if min_frequency < 1 {
        return Err(Error::Config("min_frequency must be >= 1".into()));
    }
    let mut fields = Vec::with_capacity(field_columns.len());
    for name in field_columns {
        if name == MIN_FREQ_KEY {
            return Err(Error::Schema(format!("`{MIN_FREQ_KEY}` is reserved")));
        }
        let col = table
            .column(name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut order: Vec<&str> = Vec::new();
        for row in &table.rows {
            if let Some(v) = row.values.get(col) {
                let c = counts.entry(v.as_str()).or_insert(0);
                if *c == 0 {
                    order.push(v.as_str());
                }
                *c += 1;
            }
        }
        let mut field = FieldVocab::new(name.clone());
        for v in order {
            if counts[v] >= min_frequency {
                field.insert(v.to_string())?;
            }
        }
        fields.push(field);
    }
    Ok(Vocab {
        fields,
        min_frequency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> RawTable {
        let text = "scenario,label_0,occ,city\n\
                    0,1,occ=artist,paris\n\
                    0,0,occ=doctor,paris\n\
                    1,1,occ=doctor,occ=doctor\n\
                    1,0,occ=lawyer,rome\n\
                    1,0,occ=lawyer,rome\n";
        RawTable::from_reader(text.as_bytes()).unwrap()
    }

    #[test]
    fn low_frequency_values_are_dropped() {
        let v = build_vocab(&table(), &["occ".into(), "city".into()], 2).unwrap();
        assert_eq!(v.encode(0, "occ=artist"), 0);
        assert_eq!(v.encode(0, "occ=doctor"), 1);
        assert_eq!(v.encode(0, "occ=lawyer"), 2);
        assert_eq!(v.sizes(), vec![3, 3]);
    }

    #[test]
    fn min_frequency_one_keeps_everything() {
        let v = build_vocab(&table(), &["occ".into(), "city".into()], 1).unwrap();
        assert_eq!(v.field(0).size(), 4);
        assert!(["occ=artist", "occ=doctor", "occ=lawyer"]
            .iter()
            .all(|s| v.encode(0, s) >= 1));
    }

    #[test]
    fn vocabularies_are_field_local() {
        let v = build_vocab(&table(), &["occ".into(), "city".into()], 1).unwrap();
        // "occ=doctor" appears in both fields and gets independent ids
        assert_eq!(v.encode(0, "occ=doctor"), 2);
        assert_eq!(v.encode(1, "occ=doctor"), 2);
        assert_eq!(v.encode(1, "paris"), 1);
        assert_eq!(v.encode(0, "paris"), 0);
    }

    #[test]
    fn missing_column_is_named() {
        let err = build_vocab(&table(), &["age".into()], 1).unwrap_err();
        assert!(err.to_string().contains("`age`"));
    }

    #[test]
    fn json_round_trip() {
        let t = table();
        let v = build_vocab(&t, &["occ".into(), "city".into()], 2).unwrap();
        let json = v.to_json();
        assert_eq!(json["_min_frequency"], 2);
        assert_eq!(json["occ"]["occ=doctor"], 1);
        let back = Vocab::from_json(&json).unwrap();
        assert_eq!(back, v);
        for row in &t.rows {
            for f in 0..2 {
                assert_eq!(back.encode(f, &row.values[f + 2]), v.encode(f, &row.values[f + 2]));
            }
        }
    }

    #[test]
    fn non_dense_ids_rejected() {
        let json: Value = serde_json::json!({"a": {"x": 1, "y": 3}, "_min_frequency": 1});
        assert!(Vocab::from_json(&json).is_err());
    }
}
