//! Synthetic multi-scenario multi-task data with planted structure.
//!
//! Every field value carries a latent scalar. The label of task `m` in
//! scenario `k` is Bernoulli(sigmoid(bias + sum_f weight[k][m][f] * latent[f][value])).
//! Fields play one of three roles:
//!
//! * shared-signal: same weight in every (scenario, task) cell,
//! * task-signal: weighted only for "its" task,
//! * scenario-signal: values concentrate in a scenario-specific band and the
//!   weight depends on the scenario.
//!
//! In conflict mode the last task ignores the scenario-signal field entirely
//! while that field's latents get a large variance, so scenario-specific
//! information is pure noise for that task.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{RawTable, LABEL_PREFIX, SCENARIO_COLUMN};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tensor::sigmoid;

const SYNTH_STREAM: u64 = 0x5359_4e54_4800_0000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub scenarios: usize,
    pub tasks: usize,
    pub fields: usize,
    pub rows_per_scenario: usize,
    pub conflict: bool,
    pub seed: u64,
    pub values_per_field: usize,
}

impl SynthSpec {
    pub fn new(scenarios: usize, tasks: usize, rows_per_scenario: usize, conflict: bool, seed: u64) -> Self {
        SynthSpec {
            scenarios,
            tasks,
            fields: 6,
            rows_per_scenario,
            conflict,
            seed,
            values_per_field: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRoles {
    pub shared_signal: Vec<usize>,
    pub scenario_signal: usize,
    pub task_signal: Vec<usize>,
}

/// Everything needed to recompute ground-truth label probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub roles: FieldRoles,
    /// `latent[f][v]`
    pub latent: Vec<Vec<f64>>,
    /// `weights[k][m][f]`
    pub weights: Vec<Vec<Vec<f64>>>,
    /// `bias[k][m]`
    pub bias: Vec<Vec<f64>>,
    /// Probability that a scenario-signal value is drawn from the scenario's own band.
    pub band_probability: f64,
    /// Latent standard deviation of the scenario-signal field.
    pub scenario_latent_std: f64,
}

impl GroundTruth {
    /// Ground-truth logit for value indices `values` (one per field).
    pub fn score(&self, k: usize, m: usize, values: &[usize]) -> f64 {
        self.bias[k][m]
            + values
                .iter()
                .enumerate()
                .map(|(f, &v)| self.weights[k][m][f] * self.latent[f][v])
                .sum::<f64>()
    }

    pub fn probability(&self, k: usize, m: usize, values: &[usize]) -> f64 {
        sigmoid(self.score(k, m, values))
    }

    /// Whether the scenario-signal field carries zero weight for task `m` in every scenario.
    pub fn scenario_field_ignored(&self, m: usize) -> bool {
        let f = self.roles.scenario_signal;
        self.weights.iter().all(|w| w[m][f] == 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub table: RawTable,
    pub truth: GroundTruth,
}

pub fn value_name(v: usize) -> String {
    format!("v{v}")
}

/// Parses a value written by [`value_name`].
pub fn value_index(s: &str) -> Option<usize> {
    s.strip_prefix('v')?.parse().ok()
}

pub fn gen_synthetic(spec: &SynthSpec) -> Result<SyntheticData> {
    let (k_n, m_n, f_n, v_n) = (spec.scenarios, spec.tasks, spec.fields, spec.values_per_field);
    if k_n < 2 || m_n < 2 || f_n < 4 {
        return Err(Error::Input(format!(
            "synthetic data needs K >= 2, M >= 2, F >= 4 (got K={k_n}, M={m_n}, F={f_n})"
        )));
    }
    if v_n < k_n {
        return Err(Error::Input(format!(
            "values_per_field ({v_n}) must be at least the scenario count ({k_n})"
        )));
    }

    let scenario_signal = f_n - 1;
    let n_task_fields = m_n.min(f_n - 2);
    let task_signal: Vec<usize> = (1..=n_task_fields).collect();
    let shared_signal: Vec<usize> = (0..scenario_signal)
        .filter(|f| !task_signal.contains(f))
        .collect();
    let roles = FieldRoles {
        shared_signal,
        scenario_signal,
        task_signal,
    };

    let mut rng = stream_rng(spec.seed, SYNTH_STREAM);
    let scenario_latent_std = if spec.conflict { 3.0 } else { 1.0 };
    let latent: Vec<Vec<f64>> = (0..f_n)
        .map(|f| {
            let std = if f == scenario_signal { scenario_latent_std } else { 1.0 };
            let normal = Normal::new(0.0, std).expect("positive std");
            (0..v_n).map(|_| normal.sample(&mut rng)).collect()
        })
        .collect();

    let shared_w: Vec<f64> = roles
        .shared_signal
        .iter()
        .map(|_| rng.random_range(0.6..1.0))
        .collect();
    let scenario_w: Vec<f64> = (0..k_n)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * rng.random_range(0.5..1.0)
        })
        .collect();
    let mut weights = vec![vec![vec![0.0; f_n]; m_n]; k_n];
    let mut bias = vec![vec![0.0; m_n]; k_n];
    for k in 0..k_n {
        for m in 0..m_n {
            let w = &mut weights[k][m];
            for (i, &f) in roles.shared_signal.iter().enumerate() {
                w[f] = shared_w[i];
            }
            w[roles.task_signal[m % n_task_fields]] = 1.0;
            let conflicted = spec.conflict && m == m_n - 1;
            w[scenario_signal] = if conflicted { 0.0 } else { scenario_w[k] };
            bias[k][m] = rng.random_range(-0.5..0.5);
        }
    }

    let truth = GroundTruth {
        spec: spec.clone(),
        roles,
        latent,
        weights,
        bias,
        band_probability: 0.8,
        scenario_latent_std,
    };

    let header = std::iter::once(SCENARIO_COLUMN.to_string())
        .chain((0..m_n).map(|m| format!("{LABEL_PREFIX}{m}")))
        .chain((0..f_n).map(|f| format!("f{f}")))
        .collect();
    let mut table = RawTable::new(header);
    let band = v_n / k_n;
    let mut values = vec![0usize; f_n];
    for k in 0..k_n {
        for _ in 0..spec.rows_per_scenario {
            for (f, v) in values.iter_mut().enumerate() {
                *v = if f == scenario_signal && rng.random_bool(truth.band_probability) {
                    k * band + rng.random_range(0..band)
                } else {
                    rng.random_range(0..v_n)
                };
            }
            let mut row = Vec::with_capacity(1 + m_n + f_n);
            row.push(k.to_string());
            for m in 0..m_n {
                let p = truth.probability(k, m, &values);
                row.push(u8::from(rng.random_bool(p)).to_string());
            }
            row.extend(values.iter().map(|&v| value_name(v)));
            table.push(row);
        }
    }
    Ok(SyntheticData { table, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_header() {
        let d = gen_synthetic(&SynthSpec::new(3, 2, 50, false, 1)).unwrap();
        assert_eq!(d.table.rows.len(), 150);
        assert_eq!(
            d.table.header,
            vec!["scenario", "label_0", "label_1", "f0", "f1", "f2", "f3", "f4", "f5"]
        );
        assert_eq!(d.truth.roles.scenario_signal, 5);
        assert_eq!(d.truth.roles.task_signal, vec![1, 2]);
        assert_eq!(d.truth.roles.shared_signal, vec![0, 3, 4]);
    }

    #[test]
    fn same_seed_same_data() {
        let a = gen_synthetic(&SynthSpec::new(2, 2, 100, true, 9)).unwrap();
        let b = gen_synthetic(&SynthSpec::new(2, 2, 100, true, 9)).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.truth, b.truth);
        let c = gen_synthetic(&SynthSpec::new(2, 2, 100, true, 10)).unwrap();
        assert_ne!(a.table, c.table);
    }

    #[test]
    fn conflicted_task_ignores_scenario_field() {
        let d = gen_synthetic(&SynthSpec::new(3, 2, 200, true, 4)).unwrap();
        let t = &d.truth;
        assert!(t.scenario_field_ignored(1));
        assert!(!t.scenario_field_ignored(0));
        // permuting the scenario-signal field leaves task-1 probabilities unchanged
        let sf = t.roles.scenario_signal;
        let rows: Vec<Vec<usize>> = d
            .table
            .rows
            .iter()
            .map(|r| r.values[3..].iter().map(|s| value_index(s).unwrap()).collect())
            .collect();
        for (i, r) in rows.iter().enumerate() {
            let k: usize = d.table.rows[i].values[0].parse().unwrap();
            let mut permuted = r.clone();
            permuted[sf] = rows[(i * 7 + 3) % rows.len()][sf];
            assert_eq!(t.probability(k, 1, r), t.probability(k, 1, &permuted));
        }
    }

    #[test]
    fn scenario_field_concentrates_in_band() {
        let d = gen_synthetic(&SynthSpec::new(2, 2, 2000, false, 3)).unwrap();
        let sf = 3 + d.truth.roles.scenario_signal;
        let in_band = d
            .table
            .rows
            .iter()
            .filter(|r| r.values[0] == "0")
            .filter(|r| value_index(&r.values[sf]).unwrap() < 10)
            .count();
        // 0.8 + 0.2 * 0.5 = 0.9 expected
        assert!((1700..1900).contains(&in_band), "{in_band}");
    }

    #[test]
    fn rejects_degenerate_shapes() {
        assert!(gen_synthetic(&SynthSpec::new(1, 2, 10, false, 0)).is_err());
        let mut s = SynthSpec::new(2, 2, 10, false, 0);
        s.fields = 3;
        assert!(gen_synthetic(&s).is_err());
    }
}
