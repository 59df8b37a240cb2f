use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Instance;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

const SPLIT_STREAM: u64 = 0x5350_4c49_5400_0000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(ratios: [f64; 3], seed: u64) -> Self {
        SplitSpec { ratios, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
            return Err(Error::Config(format!(
                "split ratios must each lie in (0, 1), got {:?}",
                self.ratios
            )));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::new([0.8, 0.1, 0.1], 0)
    }
}

/// Instance indices for each partition.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-scenario seeded shuffle followed by cuts at `floor(r_train n)` and
/// `floor((r_train + r_val) n)`. Scenarios with fewer than 3 instances go
/// entirely to train.
pub fn split(instances: &[Instance], num_scenarios: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let mut by_scenario: Vec<Vec<usize>> = vec![Vec::new(); num_scenarios];
    for (i, inst) in instances.iter().enumerate() {
        let bucket = by_scenario.get_mut(inst.scenario).ok_or_else(|| {
            Error::Input(format!(
                "instance {i} has scenario {} but K = {num_scenarios}",
                inst.scenario
            ))
        })?;
        bucket.push(i);
    }

    let mut out = SplitIndices::default();
    for (k, mut idx) in by_scenario.into_iter().enumerate() {
        let n = idx.len();
        if n < 3 {
            if n > 0 {
                log::warn!("scenario {k} has only {n} instances; assigning all to train");
            }
            out.train.extend(idx);
            continue;
        }
        let mut rng = stream_rng(spec.seed, SPLIT_STREAM + k as u64);
        idx.shuffle(&mut rng);
        let cut1 = cut(spec.ratios[0], n);
        let cut2 = cut(spec.ratios[0] + spec.ratios[1], n);
        out.train.extend_from_slice(&idx[..cut1]);
        out.val.extend_from_slice(&idx[cut1..cut2]);
        out.test.extend_from_slice(&idx[cut2..]);
    }
    Ok(out)
}

fn cut(ratio: f64, n: usize) -> usize {
    // guard against 0.9 * 10 = 8.999...
    ((ratio * n as f64 + 1e-9).floor() as usize).min(n)
}
