//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if any
//! criterion fails. Criterion 12 needs an extracted MovieLens-1M directory in
//! `AUTOIFS_ML1M_DIR` and reports SKIP otherwise.
//!
//! Run with `cargo test -p autoifs --test acceptance -- --nocapture`.

use std::path::Path;
use std::time::Instant;

use autoifs::config::{RunConfig, EPOCH_GRID, GAMMA_GRID};
use autoifs::data::{gen_synthetic, ingest, AgeBuckets, Dataset, Instance, RawTable, SynthSpec};
use autoifs::metrics::{auc, cell_report, mask_report};
use autoifs::micro::MicroModel;
use autoifs::model::{dense_param_count, param_count, prune, Flow, ForwardCache, ModelDims, MsmtModel};
use autoifs::rng::stream_rng;
use autoifs::run::{self, model_dims, network_param_count, Splits};
use autoifs::selector::{temperature, unit_step, FlowSelector};
use autoifs::tensor::{sigmoid, Activation, Parameterized};
use autoifs::train::{accumulate_batch, evaluate, final_policy, run_two_stage, AutoIfs, BatchOptions, Scratch};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[derive(Debug)]
enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn randomize<R: Rng>(model: &mut MsmtModel, rng: &mut R, scale: f64) {
    for p in model.params_mut().params_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-scale..scale));
    }
}

fn random_instance<R: Rng>(dims: &ModelDims, rng: &mut R) -> Instance {
    Instance {
        field_ids: dims.vocab_sizes.iter().map(|&v| rng.random_range(0..v as u32)).collect(),
        scenario: rng.random_range(0..dims.num_scenarios),
        labels: (0..dims.num_tasks).map(|_| u8::from(rng.random_bool(0.5))).collect(),
    }
}

fn test_dims() -> ModelDims {
    ModelDims {
        vocab_sizes: vec![7, 9, 5],
        embed_dim: 4,
        hidden_dim: 8,
        rank: 3,
        num_scenarios: 3,
        num_tasks: 2,
    }
}

/// Row-major `a (n x k) * b (k x p)`.
fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * p];
    for i in 0..n {
        for j in 0..p {
            out[i * p + j] = (0..k).map(|t| a[i * k + t] * b[t * p + j]).sum();
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let report = match run::gradcheck(1e-5, 0) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let secs = start.elapsed().as_secs_f64();
    verdict(
        report.max_relative_error <= 1e-5 && secs < 10.0,
        format!(
            "worst relative error {:.2e} (<= 1e-5) over {} parameters in {secs:.2}s (< 10s)",
            report.max_relative_error, report.checked
        ),
    )
}

fn embedding_grad(net: &mut AutoIfs, batch: &[&Instance], opts: &BatchOptions) -> (Vec<f64>, Vec<f64>) {
    for g in net.param_groups_mut() {
        g.zero_grad();
    }
    let mut scratch = Scratch::new(net);
    accumulate_batch(net, batch, opts, &mut stream_rng(0, 0), &mut scratch).unwrap();
    let id = net.model.embedding_id();
    let de = net.model.params().get(id).grad.clone();
    let ds = net.selector.params().params().iter().flat_map(|p| p.grad.clone()).collect();
    (de, ds)
}

fn criterion_2() -> Outcome {
    let mut checked = 0;
    for seed in 0..20 {
        let mut micro = MicroModel::new(seed * 7).unwrap();
        let batch: Vec<Instance> = micro.batch.clone();
        let refs: Vec<&Instance> = batch.iter().collect();
        let active = micro.opts;
        let detached = BatchOptions {
            train_selector: false,
            ..active
        };
        let no_sparsity = BatchOptions { lambda: 0.0, ..active };
        let (de_active, ds_active) = embedding_grad(&mut micro.net, &refs, &active);
        let (de_detached, _) = embedding_grad(&mut micro.net, &refs, &detached);
        let (de_plain, ds_plain) = embedding_grad(&mut micro.net, &refs, &no_sparsity);
        if de_active.iter().all(|&v| v == 0.0) {
            return Outcome::Fail(format!("seed {seed}: embedding gradient is identically zero"));
        }
        if de_active != de_detached {
            return Outcome::Fail(format!("seed {seed}: dE differs between active and detached selector"));
        }
        if de_active != de_plain {
            return Outcome::Fail(format!("seed {seed}: the sparsity term changed dE"));
        }
        if ds_active == ds_plain {
            return Outcome::Fail(format!("seed {seed}: the sparsity term did not reach the selector"));
        }
        checked += 1;
    }
    Outcome::Pass(format!(
        "{checked} micro-models: dE bitwise equal with selector active/detached and with lambda > 0 / lambda = 0"
    ))
}

fn criterion_3() -> Outcome {
    let dims = test_dims();
    let (d_in, h, r) = (dims.input_dim(), dims.hidden_dim, dims.rank);
    let mut rng = stream_rng(3, 3);
    let mut model = MsmtModel::new(dims.clone(), Activation::Identity, &mut rng).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        randomize(&mut model, &mut rng, 1.0);
        for p in model.params_mut().params_mut() {
            if p.name.ends_with("bias") {
                p.value.fill(0.0);
            }
        }
        let inst = random_instance(&dims, &mut rng);
        let e = model.embed(&inst.field_ids).unwrap();
        let flows = model.compute_flows(&e, inst.scenario).unwrap();
        let v = |id| model.params().value(id).data().to_vec();
        let (ws, _, wt, _) = model.shared_units();
        let (ak, bk, _) = model.scenario_adapter(inst.scenario);
        // f_s^sh(e) + f_s^k(e)
        let s: Vec<f64> = matmul(&v(ws), &e, h, d_in, 1)
            .iter()
            .zip(matmul(&v(bk), &matmul(&v(ak), &e, r, d_in, 1), h, r, 1))
            .map(|(a, b)| a + b)
            .collect();
        for m in 0..dims.num_tasks {
            let (at, bt, _) = model.task_adapter(m);
            let composite = matmul(&v(wt), &s, 1, h, 1)[0] + matmul(&v(bt), &matmul(&v(at), &s, r, h, 1), 1, r, 1)[0];
            worst = worst.max((flows.fused[m] - composite).abs());
        }
    }
    verdict(worst <= 1e-10, format!("1000 random inputs, worst |Q - composite| {worst:.2e} (<= 1e-10)"))
}

fn criterion_4() -> Outcome {
    let tau = 1e4;
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for i in -20_000..=20_000 {
        let w = f64::from(i) * 5e-4;
        if w.abs() < 1e-3 {
            continue;
        }
        worst = worst.max((sigmoid(w * tau) - unit_step(w)).abs());
        n += 1;
    }
    let mut endpoints = true;
    for &gamma in GAMMA_GRID.iter() {
        for &p in EPOCH_GRID.iter() {
            endpoints &= temperature(0, p, gamma).unwrap() == 1.0;
            endpoints &= temperature(p, p, gamma).unwrap() == gamma;
        }
    }
    verdict(
        worst <= 1e-4 && endpoints,
        format!("{n} grid points, worst gap {worst:.2e} (<= 1e-4); tau(0)=1 and tau(P)=gamma exact on every grid pair: {endpoints}"),
    )
}

fn criterion_5() -> Outcome {
    let dims = test_dims();
    let mut rng = stream_rng(5, 5);
    let mut model = MsmtModel::new(dims.clone(), Activation::Relu, &mut rng).unwrap();
    let mut fd_worst: f64 = 0.0;
    for _ in 0..1000 {
        randomize(&mut model, &mut rng, 1.0);
        let inst = random_instance(&dims, &mut rng);
        let mut cache = ForwardCache::new(&dims);
        model.forward(&inst, &mut cache).unwrap();
        let flows = cache.flows();
        if prune(flows, &[[0.0; 4]; 2]).unwrap() != flows.fused {
            return Outcome::Fail("gates all 0 do not reproduce Q".into());
        }
        if model.predict(&inst, &[[1.0; 4]; 2]).unwrap() != vec![0.5, 0.5] {
            return Outcome::Fail("gates all 1 do not give probability 0.5".into());
        }
        for m in 0..2 {
            for j in 0..4 {
                // every other gate at 1 contributes an exact zero, so the unit step is exact
                let on = [[1.0; 4]; 2];
                let mut off = on;
                off[m][j] = 0.0;
                let slope = prune(flows, &on).unwrap()[m] - prune(flows, &off).unwrap()[m];
                if slope != -flows.flow(m, j) {
                    return Outcome::Fail(format!("gate ({m},{j}): slope {slope} vs flow {}", flows.flow(m, j)));
                }
            }
        }
        // from an interior point the slope agrees up to floating-point round-off
        let base: [[f64; 4]; 2] = [
            std::array::from_fn(|_| rng.random_range(0.0..1.0)),
            std::array::from_fn(|_| rng.random_range(0.0..1.0)),
        ];
        let at = prune(flows, &base).unwrap();
        for m in 0..2 {
            let magnitude: f64 = flows.flows_for(m).iter().map(|h| h.abs()).sum();
            for j in 0..4 {
                let step = 1.0 - base[m][j];
                let mut moved = base;
                moved[m][j] = 1.0;
                let slope = (prune(flows, &moved).unwrap()[m] - at[m]) / step;
                let bound = 16.0 * f64::EPSILON * magnitude / step;
                fd_worst = fd_worst.max((slope + flows.flow(m, j)).abs() / bound);
            }
        }
    }
    verdict(
        fd_worst <= 1.0,
        format!("1000 random inputs: all-0 gates == Q bitwise, all-1 gates -> 0.5 exactly, unit single-gate step == -flow_j bitwise; interior steps within {:.2} of the round-off bound", fd_worst),
    )
}

fn criterion_6() -> Outcome {
    let dims = test_dims();
    let mut rng = stream_rng(6, 6);
    let mut model = MsmtModel::new(dims.clone(), Activation::Relu, &mut rng).unwrap();
    let mut live = 0;
    for trial in 0..500 {
        randomize(&mut model, &mut rng, 1.0);
        let m = trial % dims.num_tasks;
        let inst = random_instance(&dims, &mut rng);
        let dlogit: Vec<f64> = (0..dims.num_tasks).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut gates = [[0.0; 4]; 2];
        for row in gates.iter_mut() {
            for g in row.iter_mut() {
                *g = rng.random_range(0.0..1.0);
            }
        }
        let grads = |model: &mut MsmtModel, gates: &[[f64; 4]]| {
            model.params_mut().zero_grad();
            let mut cache = ForwardCache::new(&dims);
            model.forward(&inst, &mut cache).unwrap();
            model.backward(&mut cache, &dlogit, gates, None);
            let (a, b, bias) = model.task_adapter(m);
            [a, b, bias]
                .iter()
                .flat_map(|&id| model.params().get(id).grad.clone())
                .collect::<Vec<f64>>()
        };
        if grads(&mut model, &gates).iter().any(|&g| g != 0.0) {
            live += 1;
        }
        gates[m][Flow::SharedTask as usize] = 1.0;
        gates[m][Flow::ScenarioTask as usize] = 1.0;
        if let Some(g) = grads(&mut model, &gates).into_iter().find(|&g| g != 0.0) {
            return Outcome::Fail(format!("trial {trial}: task {m} adapter gradient {g} with both paths pruned"));
        }
    }
    verdict(
        live > 400,
        format!("500 random models: A_t, B_t, b_t gradients exactly 0 with columns 1 and 3 hard 1 (nonzero in {live}/500 with soft gates)"),
    )
}

fn brute_force_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
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

fn criterion_7() -> Outcome {
    let mut rng = stream_rng(7, 7);
    let mut worst: f64 = 0.0;
    let mut with_ties = 0;
    for case in 0..100 {
        let n = rng.random_range(2..=200);
        let levels = if case % 2 == 0 { 5 } else { 1_000_000 };
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels)) / 7.0).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.4))).collect();
        labels[0] = 1;
        labels[1] = 0;
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            with_ties += 1;
        }
        let fast = auc(&scores, &labels).unwrap();
        worst = worst.max((fast - brute_force_auc(&scores, &labels)).abs());
    }
    verdict(
        worst <= 1e-12,
        format!("100 cases (n <= 200, {with_ties} with ties), worst |fast - brute force| {worst:.2e} (<= 1e-12)"),
    )
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let synth = tmp.path().join("synth");
    run::gen_synth(&SynthSpec::new(3, 2, 400, true, 8), &synth).unwrap();
    let data = synth.join("data.csv");
    let cfg = RunConfig {
        seed: 8,
        embedding_dim: 8,
        hidden_dim: 16,
        rank: 4,
        epochs: 5,
        rewind_epoch: 2,
        batch_size: 128,
        selector_hidden: vec![16, 8],
        ..Default::default()
    };
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for d in &dirs {
        if let Err(e) = run::train(&cfg, &data, d) {
            return Outcome::Fail(e.to_string());
        }
    }
    let mut files = vec![run::EPOCHS_FILE.to_string()];
    files.extend((1..=cfg.epochs).map(run::stage1_checkpoint_name));
    for f in &files {
        let a = std::fs::read(dirs[0].join(f)).unwrap();
        let b = std::fs::read(dirs[1].join(f)).unwrap();
        if a != b {
            return Outcome::Fail(format!("{f} differs between identical runs"));
        }
    }
    Outcome::Pass(format!("epochs.csv and {} checkpoints bitwise identical across two runs", cfg.epochs))
}

/// Closed forms written out independently of the library.
fn hand_counts(f: usize, d: usize, h: usize, r: usize, k: usize, m: usize, widths: &[usize]) -> (usize, usize, usize) {
    let x = f * d;
    let units = (h * x + h) + k * (r * x + h * r + h) + (h + 1) + m * (r * h + r + 1);
    let mut selector = 0;
    let mut prev = x;
    for &w in widths {
        selector += prev * w + w;
        prev = w;
    }
    selector += m * (4 * prev + 4);
    let dense = (h * x + h) + k * (h * x + h) + (h + 1) + m * (h + 1);
    (units, selector, dense)
}

fn criterion_9() -> Outcome {
    let mut rng = stream_rng(9, 9);
    for trial in 0..20 {
        let fields = rng.random_range(1..6);
        let dims = ModelDims {
            vocab_sizes: (0..fields).map(|_| rng.random_range(2..30)).collect(),
            embed_dim: rng.random_range(1..9),
            hidden_dim: rng.random_range(1..17),
            rank: rng.random_range(0..6),
            num_scenarios: rng.random_range(1..5),
            num_tasks: rng.random_range(1..4),
        };
        let widths: Vec<usize> = (0..rng.random_range(1..3)).map(|_| rng.random_range(1..10)).collect();
        let cfg = RunConfig {
            embedding_dim: dims.embed_dim,
            hidden_dim: dims.hidden_dim,
            rank: dims.rank,
            selector_hidden: widths.clone(),
            ..Default::default()
        };
        let (units, selector, dense) = hand_counts(
            fields,
            dims.embed_dim,
            dims.hidden_dim,
            dims.rank,
            dims.num_scenarios,
            dims.num_tasks,
            &widths,
        );
        let counts = network_param_count(&dims, &cfg);
        let net = AutoIfs::new(dims.clone(), &cfg).unwrap();
        let allocated: usize = net.param_groups().iter().map(|g| g.num_scalars()).sum();
        let embedding = dims.total_vocab() * dims.embed_dim;
        let dense_lib = dense_param_count(fields, dims.embed_dim, dims.hidden_dim, dims.num_scenarios, dims.num_tasks, dims.total_vocab());
        if counts.units() != units
            || counts.selector != selector
            || counts.embedding != embedding
            || counts.total() != allocated
            || dense_lib.units() != dense
        {
            return Outcome::Fail(format!("trial {trial}: {counts:?} vs hand ({units}, {selector}, {dense}), allocated {allocated}"));
        }
    }
    // MovieLens-1M: 7 fields, K = 3 age groups, M = 2 tasks, default hyperparameters
    let cfg = RunConfig::default();
    let (units, selector, dense) = hand_counts(7, cfg.embedding_dim, cfg.hidden_dim, cfg.rank, 3, 2, &cfg.selector_hidden);
    let lib = param_count(7, cfg.embedding_dim, cfg.hidden_dim, cfg.rank, 3, 2, 0, FlowSelector::param_count(7 * cfg.embedding_dim, &cfg.selector_hidden, 2));
    let ours = units + selector;
    verdict(
        lib.non_embedding() == ours && ours < dense,
        format!(
            "20 random configs match; MovieLens default non-embedding {ours} (units {units} + selector {selector}) vs dense {dense}, reduction {:.3}x ({:.3}x without the selector)",
            dense as f64 / ours as f64,
            dense as f64 / units as f64
        ),
    )
}

/// Settings shared by the synthetic behavioral criteria.
fn synthetic_config(seed: u64) -> RunConfig {
    RunConfig {
        seed,
        split_seed: seed,
        lambda: 1e-3,
        epochs: 10,
        rewind_epoch: 9,
        batch_size: 256,
        ..Default::default()
    }
}

fn synthetic_splits(seed: u64, conflict: bool, cfg: &RunConfig) -> Splits {
    let synth = gen_synthetic(&SynthSpec::new(3, 2, 10_000, conflict, seed)).unwrap();
    let (_, encoded) = ingest(&synth.table, cfg.min_frequency).unwrap();
    Splits::new(&encoded.dataset, cfg).unwrap()
}

/// One-hot rows (active column indices, intercept at 0) and labels of scenario `k`.
fn one_hot(data: &Dataset, k: usize) -> (Vec<Vec<usize>>, Vec<Vec<u8>>) {
    let mut offsets = Vec::new();
    let mut next = 1;
    for &v in &data.vocab_sizes {
        offsets.push(next);
        next += v;
    }
    data.instances
        .iter()
        .filter(|i| i.scenario == k)
        .map(|i| {
            let x = i.field_ids.iter().zip(&offsets).map(|(&id, &o)| o + id as usize).collect();
            (x, i.labels.clone())
        })
        .unzip()
}

/// Ridge logistic regression by Newton's method.
fn fit_logistic(xs: &[Vec<usize>], y: &[f64], dim: usize, ridge: f64) -> DVector<f64> {
    let mut w = DVector::zeros(dim);
    for _ in 0..50 {
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for (x, &yi) in xs.iter().zip(y) {
            let active: Vec<usize> = std::iter::once(0).chain(x.iter().copied()).collect();
            let p = sigmoid(active.iter().map(|&j| w[j]).sum());
            for &a in &active {
                grad[a] += p - yi;
                for &b in &active {
                    hess[(a, b)] += p * (1.0 - p);
                }
            }
        }
        for j in 1..dim {
            grad[j] += ridge * w[j];
            hess[(j, j)] += ridge;
        }
        let step = hess.cholesky().expect("ridge keeps the Hessian positive definite").solve(&grad);
        w -= &step;
        if step.amax() < 1e-10 {
            break;
        }
    }
    w
}

fn oracle_aucs(splits: &Splits) -> Vec<Vec<f64>> {
    let dim = 1 + splits.train.vocab_sizes.iter().sum::<usize>();
    (0..splits.train.num_scenarios)
        .map(|k| {
            let (xtr, ytr) = one_hot(&splits.train, k);
            let (xte, yte) = one_hot(&splits.test, k);
            (0..splits.train.num_tasks)
                .map(|m| {
                    let y: Vec<f64> = ytr.iter().map(|l| f64::from(l[m])).collect();
                    let w = fit_logistic(&xtr, &y, dim, 1.0);
                    let scores: Vec<f64> = xte.iter().map(|x| w[0] + x.iter().map(|&j| w[j]).sum::<f64>()).collect();
                    let labels: Vec<u8> = yte.iter().map(|l| l[m]).collect();
                    auc(&scores, &labels).unwrap()
                })
                .collect()
        })
        .collect()
}

/// `(scenario, task, AutoIFS AUC, oracle AUC)` per cell.
type Cells = Vec<(usize, usize, f64, f64)>;

fn criterion_10() -> Outcome {
    let per_seed: Vec<Result<(u64, Cells), String>> = (0..3u64)
        .map(|seed| {
            let cfg = synthetic_config(seed);
            let splits = synthetic_splits(seed, false, &cfg);
            let out = run_two_stage(model_dims(&splits.train, &cfg), &splits.train, Some(&splits.val), &cfg)
                .map_err(|e| e.to_string())?;
            let eval = evaluate(&out.net, &splits.test, final_policy(&cfg), cfg.seed).map_err(|e| e.to_string())?;
            let report = cell_report(&eval.predictions, &splits.test).map_err(|e| e.to_string())?;
            let oracle = oracle_aucs(&splits);
            let mut cells = Vec::new();
            for (k, row) in oracle.iter().enumerate() {
                for (m, &o) in row.iter().enumerate() {
                    let ours = report.cell(k, m).and_then(|c| c.auc).ok_or("undefined cell AUC")?;
                    cells.push((k, m, ours, o));
                }
            }
            Ok((seed, cells))
        })
        .collect();
    let mut worst = (0.0f64, String::new());
    let mut lines = Vec::new();
    for r in per_seed {
        let (seed, cells) = match r {
            Ok(v) => v,
            Err(e) => return Outcome::Fail(e),
        };
        let gaps: Vec<String> = cells.iter().map(|&(_, _, a, o)| format!("{:+.4}", a - o)).collect();
        lines.push(format!("seed {seed} [{}]", gaps.join(" ")));
        for (k, m, a, o) in cells {
            if (a - o).abs() > worst.0 {
                worst = ((a - o).abs(), format!("seed {seed} cell ({k},{m}): {a:.4} vs oracle {o:.4}"));
            }
        }
    }
    verdict(
        worst.0 <= 0.02,
        format!("worst |AUC - oracle| {:.4} (<= 0.02) at {}; gaps {}", worst.0, worst.1, lines.join("; ")),
    )
}

struct ConflictRun {
    conflicted: f64,
    clean: f64,
    auc: f64,
    no_selection_auc: f64,
}

fn conflict_run(seed: u64) -> Result<ConflictRun, String> {
    let cfg = synthetic_config(seed);
    let splits = synthetic_splits(seed, true, &cfg);
    let dims = model_dims(&splits.train, &cfg);
    let e = |e: autoifs::Error| e.to_string();
    let out = run_two_stage(dims.clone(), &splits.train, Some(&splits.val), &cfg).map_err(e)?;
    let eval = evaluate(&out.net, &splits.test, final_policy(&cfg), cfg.seed).map_err(e)?;
    let masks = mask_report(&eval.gates, &splits.test).map_err(e)?;
    let report = cell_report(&eval.predictions, &splits.test).map_err(e)?;

    let ablation = RunConfig {
        no_selection: true,
        ..cfg.clone()
    };
    let base = run_two_stage(dims, &splits.train, Some(&splits.val), &ablation).map_err(e)?;
    let base_eval = evaluate(&base.net, &splits.test, final_policy(&ablation), ablation.seed).map_err(e)?;
    let base_report = cell_report(&base_eval.predictions, &splits.test).map_err(e)?;

    let specific = [Flow::ScenarioShared, Flow::ScenarioTask];
    let m_last = splits.test.num_tasks - 1;
    Ok(ConflictRun {
        conflicted: masks.task_mean(m_last, &specific),
        clean: masks.task_mean(0, &specific),
        auc: report.macro_auc.ok_or("undefined AUC")?,
        no_selection_auc: base_report.macro_auc.ok_or("undefined AUC")?,
    })
}

fn criterion_11() -> Outcome {
    let runs: Result<Vec<ConflictRun>, String> = (0..5u64).map(conflict_run).collect();
    let runs = match runs {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e),
    };
    let n = runs.len() as f64;
    let mean = |f: fn(&ConflictRun) -> f64| runs.iter().map(f).sum::<f64>() / n;
    let (conflicted, clean) = (mean(|r| r.conflicted), mean(|r| r.clean));
    let (ours, base) = (mean(|r| r.auc), mean(|r| r.no_selection_auc));
    let per_seed: Vec<String> = runs
        .iter()
        .map(|r| format!("{:.2}/{:.2} {:+.4}", r.conflicted, r.clean, r.auc - r.no_selection_auc))
        .collect();
    verdict(
        conflicted > clean && ours >= base - 0.002,
        format!(
            "prune ratio of k->sh,k->m: conflicted task {conflicted:.3} vs clean task {clean:.3}; macro AUC {ours:.4} vs no_selection {base:.4} (delta {:+.4}, needs >= -0.002; strictly greater: {}); per seed [{}]",
            ours - base,
            ours > base,
            per_seed.join(", ")
        ),
    )
}

fn criterion_12() -> Outcome {
    let Some(dir) = std::env::var_os("AUTOIFS_ML1M_DIR") else {
        return Outcome::Skip("AUTOIFS_ML1M_DIR not set; MovieLens-1M is not bundled".into());
    };
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("ml1m.csv");
    if let Err(e) = run::prep_movielens(Path::new(&dir), &AgeBuckets::default(), &csv) {
        return Outcome::Fail(e.to_string());
    }
    let table = RawTable::read_csv(&csv).unwrap();
    let cfg = RunConfig {
        min_frequency: 1,
        ..Default::default()
    };
    let (_, encoded) = ingest(&table, cfg.min_frequency).unwrap();
    let splits = Splits::new(&encoded.dataset, &cfg).unwrap();
    let dims = model_dims(&splits.train, &cfg);
    let start = Instant::now();
    let out = run_two_stage(dims.clone(), &splits.train, Some(&splits.val), &cfg).unwrap();
    let epochs = out.stage1_logs.len() + out.reuse_logs.len();
    let per_epoch = start.elapsed().as_secs_f64() / epochs as f64;
    let eval = evaluate(&out.net, &splits.test, final_policy(&cfg), cfg.seed).unwrap();
    let ours = cell_report(&eval.predictions, &splits.test).unwrap().macro_auc.unwrap();

    let degenerate = RunConfig {
        no_selection: true,
        no_reuse: true,
        ..cfg.clone()
    };
    let base = run_two_stage(dims, &splits.train, Some(&splits.val), &degenerate).unwrap();
    let base_eval = evaluate(&base.net, &splits.test, final_policy(&degenerate), degenerate.seed).unwrap();
    let base_auc = cell_report(&base_eval.predictions, &splits.test).unwrap().macro_auc.unwrap();
    verdict(
        (0.805..=0.845).contains(&ours) && ours >= base_auc && per_epoch <= 300.0,
        format!("macro AUC {ours:.4} (in [0.805, 0.845]), degenerate {base_auc:.4} (delta {:+.4} >= 0), {per_epoch:.1}s per epoch (<= 300s)", ours - base_auc),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

#[test]
fn acceptance() {
    let criteria: [Criterion; 12] = [
        ("gradient integrity", criterion_1),
        ("stop-gradient", criterion_2),
        ("decomposition identity", criterion_3),
        ("gate limit", criterion_4),
        ("pruning algebra", criterion_5),
        ("dead-path gradients", criterion_6),
        ("AUC oracle", criterion_7),
        ("determinism", criterion_8),
        ("parameter accounting", criterion_9),
        ("synthetic learning sanity", criterion_10),
        ("conflict pruning", criterion_11),
        ("MovieLens-1M reproduction", criterion_12),
    ];
    println!();
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed.push(i + 1);
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
