//! AUC, logloss, per-cell reports and the flow pruning-ratio report.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Flow, GateRow, NUM_FLOWS};
use crate::tensor::bce_loss;

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Area under the ROC curve via the Mann-Whitney rank statistic, with
/// average ranks for tied scores. Single-class input is undefined.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Input("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&y| y != 0).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes ({positives} positive, {negatives} negative)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let avg = (i + j + 2) as f64 / 2.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] != 0).count();
        rank_sum += avg * pos_in_group as f64;
        i = j + 1;
    }
    let (p, n) = (positives as f64, negatives as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mean binary cross-entropy with clipped probabilities.
pub fn logloss(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::UndefinedMetric("logloss of an empty set".into()));
    }
    let mut total = 0.0;
    for (&p, &y) in scores.iter().zip(labels) {
        total += bce_loss(p, f64::from(y))?;
    }
    Ok(total / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub scenario: usize,
    pub task: usize,
    pub count: usize,
    /// `None` when the cell is empty or single-class
    pub auc: Option<f64>,
    pub logloss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub cells: Vec<CellReport>,
    /// Unweighted mean of the defined cell AUCs.
    pub macro_auc: Option<f64>,
    /// AUC pooled over scenarios per task, then averaged over tasks.
    pub pooled_auc: Option<f64>,
    pub macro_logloss: Option<f64>,
}

impl EvalReport {
    pub fn cell(&self, k: usize, m: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.scenario == k && c.task == m)
    }

    pub fn summary_line(&self) -> String {
        format!(
            "overall macro_auc={} pooled_auc={} macro_logloss={}",
            fmt_opt(self.macro_auc),
            fmt_opt(self.pooled_auc),
            fmt_opt(self.macro_logloss)
        )
    }

    /// `k,m,n,auc,logloss`, with `NA` for undefined values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,m,n,auc,logloss\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                c.scenario,
                c.task,
                c.count,
                fmt_opt(c.auc),
                fmt_opt(c.logloss)
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-(scenario, task) AUC and logloss. `predictions[i][m]` belongs to
/// instance `i` of `dataset`.
pub fn cell_report(predictions: &[Vec<f64>], dataset: &Dataset) -> Result<EvalReport> {
    if predictions.len() != dataset.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} instances",
            predictions.len(),
            dataset.len()
        )));
    }
    let (k_n, m_n) = (dataset.num_scenarios, dataset.num_tasks);
    if let Some((i, p)) = predictions.iter().enumerate().find(|(_, p)| p.len() != m_n) {
        return Err(Error::Input(format!(
            "prediction {i} has {} tasks, expected {m_n}",
            p.len()
        )));
    }
    let mut scores = vec![vec![Vec::new(); m_n]; k_n];
    let mut labels = vec![vec![Vec::new(); m_n]; k_n];
    for (inst, pred) in dataset.instances.iter().zip(predictions) {
        for m in 0..m_n {
            scores[inst.scenario][m].push(pred[m]);
            labels[inst.scenario][m].push(inst.labels[m]);
        }
    }
    let mut cells = Vec::with_capacity(k_n * m_n);
    for k in 0..k_n {
        for m in 0..m_n {
            let (s, y) = (&scores[k][m], &labels[k][m]);
            cells.push(CellReport {
                scenario: k,
                task: m,
                count: s.len(),
                auc: auc(s, y).ok(),
                logloss: logloss(s, y).ok(),
            });
        }
    }
    let pooled = (0..m_n).map(|m| {
        let s: Vec<f64> = (0..k_n).flat_map(|k| scores[k][m].iter().copied()).collect();
        let y: Vec<u8> = (0..k_n).flat_map(|k| labels[k][m].iter().copied()).collect();
        auc(&s, &y).ok()
    });
    let pooled: Vec<Option<f64>> = pooled.collect();
    Ok(EvalReport {
        macro_auc: mean(cells.iter().filter_map(|c| c.auc)),
        pooled_auc: if pooled.iter().all(Option::is_some) {
            mean(pooled.into_iter().flatten())
        } else {
            None
        },
        macro_logloss: mean(cells.iter().filter_map(|c| c.logloss)),
        cells,
    })
}

/// `ratios[k][m][j]`: fraction of instances of scenario `k` whose gate for
/// task `m`, flow `j` prunes (value above one half; exactly 1 for hard gates).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskReport {
    pub counts: Vec<usize>,
    pub ratios: Vec<Vec<[f64; NUM_FLOWS]>>,
}

impl MaskReport {
    pub fn ratio(&self, k: usize, m: usize, flow: Flow) -> f64 {
        self.ratios[k][m][flow as usize]
    }

    /// Mean over scenarios (weighted by instance count) of the given flows for task `m`.
    pub fn task_mean(&self, m: usize, flows: &[Flow]) -> f64 {
        let total: usize = self.counts.iter().sum();
        if total == 0 || flows.is_empty() {
            return 0.0;
        }
        let mut acc = 0.0;
        for (k, &n) in self.counts.iter().enumerate() {
            let r: f64 = flows.iter().map(|&f| self.ratio(k, m, f)).sum::<f64>() / flows.len() as f64;
            acc += r * n as f64;
        }
        acc / total as f64
    }

    /// `k,m,flow,prune_ratio` with flows named `sh-sh`, `sh-m`, `k-sh`, `k-m`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,m,flow,prune_ratio\n");
        for (k, per_task) in self.ratios.iter().enumerate() {
            for (m, row) in per_task.iter().enumerate() {
                for flow in Flow::ALL {
                    let _ = writeln!(out, "{k},{m},{},{}", flow.name(), row[flow as usize]);
                }
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Pruning ratios from per-instance gates (`gates[i]` is instance `i`'s `M x 4` matrix).
pub fn mask_report(gates: &[Vec<GateRow>], dataset: &Dataset) -> Result<MaskReport> {
    if gates.len() != dataset.len() {
        return Err(Error::Input(format!(
            "{} gate matrices for {} instances",
            gates.len(),
            dataset.len()
        )));
    }
    let (k_n, m_n) = (dataset.num_scenarios, dataset.num_tasks);
    let mut counts = vec![0usize; k_n];
    let mut pruned = vec![vec![[0usize; NUM_FLOWS]; m_n]; k_n];
    for (inst, g) in dataset.instances.iter().zip(gates) {
        if g.len() != m_n {
            return Err(Error::Input(format!("gate matrix with {} rows, expected {m_n}", g.len())));
        }
        counts[inst.scenario] += 1;
        for m in 0..m_n {
            for j in 0..NUM_FLOWS {
                if g[m][j] > 0.5 {
                    pruned[inst.scenario][m][j] += 1;
                }
            }
        }
    }
    let ratios = pruned
        .iter()
        .zip(&counts)
        .map(|(per_task, &n)| {
            per_task
                .iter()
                .map(|row| row.map(|c| if n == 0 { 0.0 } else { c as f64 / n as f64 }))
                .collect()
        })
        .collect();
    Ok(MaskReport { counts, ratios })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Instance;
    use proptest::prelude::*;

    fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    if si > sj {
                        wins += 1.0;
                    } else if si == sj {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.1], &[1, 0, 0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5, 0.5], &[1, 0]).unwrap(), 0.5);
        assert_eq!(auc(&[0.4, 0.7, 0.4], &[0, 1, 1]).unwrap(), 0.75);
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedMetric(_))));
        assert!(auc(&[0.1], &[1, 0]).is_err());
    }

    #[test]
    fn logloss_examples() {
        assert!((logloss(&[0.5; 4], &[1, 0, 1, 0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(logloss(&[1.0, 0.0], &[1, 0]).unwrap() < 1e-11);
        assert!((logloss(&[0.9], &[0]).unwrap() - 2.302_585_092_994_045_5).abs() < 1e-12);
    }

    fn dataset(k_n: usize, m_n: usize, rows: &[(usize, Vec<u8>)]) -> Dataset {
        Dataset {
            field_names: vec!["f".into()],
            num_tasks: m_n,
            num_scenarios: k_n,
            vocab_sizes: vec![1],
            instances: rows
                .iter()
                .map(|(k, y)| Instance {
                    field_ids: vec![0],
                    scenario: *k,
                    labels: y.clone(),
                })
                .collect(),
        }
    }

    #[test]
    fn single_cell_overall_equals_cell() {
        let d = dataset(1, 1, &[(0, vec![1]), (0, vec![0]), (0, vec![1]), (0, vec![0])]);
        let preds = vec![vec![0.8], vec![0.3], vec![0.2], vec![0.1]];
        let r = cell_report(&preds, &d).unwrap();
        assert_eq!(r.macro_auc, r.cells[0].auc);
        assert_eq!(r.pooled_auc, r.cells[0].auc);
        assert!((r.cells[0].auc.unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn macro_mean_by_hand() {
        // three scenarios x two tasks, each cell with two rows
        let mut rows = Vec::new();
        let mut preds = Vec::new();
        for k in 0..3 {
            rows.push((k, vec![1, 1]));
            rows.push((k, vec![0, 0]));
            // task 0 always ranked right; task 1 right only in scenario 0
            preds.push(vec![0.9, if k == 0 { 0.9 } else { 0.1 }]);
            preds.push(vec![0.1, if k == 0 { 0.1 } else { 0.9 }]);
        }
        let r = cell_report(&preds, &dataset(3, 2, &rows)).unwrap();
        let expected = (1.0 + 1.0 + 1.0 + 1.0 + 0.0 + 0.0) / 6.0;
        assert!((r.macro_auc.unwrap() - expected).abs() < 1e-15);
        assert_eq!(r.cell(1, 1).unwrap().auc, Some(0.0));
    }

    #[test]
    fn single_class_cell_is_flagged_and_excluded() {
        let d = dataset(2, 1, &[(0, vec![1]), (0, vec![0]), (1, vec![1]), (1, vec![1])]);
        let preds = vec![vec![0.7], vec![0.2], vec![0.5], vec![0.6]];
        let r = cell_report(&preds, &d).unwrap();
        assert_eq!(r.cell(1, 0).unwrap().auc, None);
        assert_eq!(r.macro_auc, Some(1.0));
        assert!(r.to_csv().contains("1,0,2,NA,"));
    }

    #[test]
    fn mask_report_ratios() {
        let d = dataset(2, 1, &[(0, vec![1]), (0, vec![0]), (1, vec![1])]);
        let gates = vec![
            vec![[1.0, 0.0, 1.0, 0.0]],
            vec![[1.0, 0.0, 0.0, 0.0]],
            vec![[0.0, 1.0, 1.0, 1.0]],
        ];
        let r = mask_report(&gates, &d).unwrap();
        assert_eq!(r.ratios[0][0], [1.0, 0.0, 0.5, 0.0]);
        assert_eq!(r.ratios[1][0], [0.0, 1.0, 1.0, 1.0]);
        let csv = r.to_csv();
        assert!(csv.starts_with("k,m,flow,prune_ratio\n0,0,sh-sh,1\n0,0,sh-m,0\n0,0,k-sh,0.5\n"));
    }

    fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..200).prop_flat_map(|n| {
            (
                // a coarse grid forces plenty of ties
                prop::collection::vec((0i32..12).prop_map(|v| f64::from(v) / 4.0), n),
                prop::collection::vec(0u8..=1, n),
            )
        })
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_oracle((scores, labels) in scored_labels()) {
            let pos = labels.iter().filter(|&&y| y == 1).count();
            prop_assume!(pos > 0 && pos < labels.len());
            let fast = auc(&scores, &labels).unwrap();
            prop_assert!((fast - brute_auc(&scores, &labels)).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&fast));
        }

        #[test]
        fn auc_invariant_under_monotone_transform((scores, labels) in scored_labels()) {
            let pos = labels.iter().filter(|&&y| y == 1).count();
            prop_assume!(pos > 0 && pos < labels.len());
            let t: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + 1.0).collect();
            prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&t, &labels).unwrap());
        }

        #[test]
        fn auc_complement_without_ties(seed in any::<u64>(), n in 2usize..100) {
            use rand::{seq::SliceRandom, Rng};
            let mut rng = crate::rng::stream_rng(seed, 0);
            let mut scores: Vec<f64> = (0..n).map(|i| i as f64).collect();
            scores.shuffle(&mut rng);
            let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
            let pos = labels.iter().filter(|&&y| y == 1).count();
            prop_assume!(pos > 0 && pos < n);
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let sum = auc(&scores, &labels).unwrap() + auc(&neg, &labels).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
