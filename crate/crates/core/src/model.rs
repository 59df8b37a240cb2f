//! The multi-scenario multi-task backbone.
//!
//! Four information units are built from affine maps:
//!
//! * scenario-shared `f_s^sh(x) = W_s x + b_s` (full rank),
//! * scenario-specific `f_s^k(x) = B_k A_k x + b_k` (rank `r`, one per scenario),
//! * task-shared `f_t^sh(x) = W_t x + b_t` (full rank, output width 1),
//! * task-specific `f_t^m(x) = B_m A_m x + b_m` (rank `r`, one per task, width 1).
//!
//! Composing a scenario unit with a task unit gives the four relationship
//! flows, which are fused by addition and then pruned by subtraction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Instance;
use crate::error::{Error, Result};
use crate::tensor::{
    add_assign, dot, matvec, matvec_t_acc, outer_acc, sigmoid, Activation, ParamGroup, ParamId,
    Tensor,
};

pub const NUM_FLOWS: usize = 4;

/// Gate values for the four flows of one task: `[sh-sh, sh-m, k-sh, k-m]`.
pub type GateRow = [f64; NUM_FLOWS];

/// Flow order used by gates, reports and fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    SharedShared = 0,
    SharedTask = 1,
    ScenarioShared = 2,
    ScenarioTask = 3,
}

impl Flow {
    pub const ALL: [Flow; NUM_FLOWS] = [
        Flow::SharedShared,
        Flow::SharedTask,
        Flow::ScenarioShared,
        Flow::ScenarioTask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Flow::SharedShared => "sh-sh",
            Flow::SharedTask => "sh-m",
            Flow::ScenarioShared => "k-sh",
            Flow::ScenarioTask => "k-m",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Per-field vocabulary sizes, including the reserved id 0.
    pub vocab_sizes: Vec<usize>,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub rank: usize,
    pub num_scenarios: usize,
    pub num_tasks: usize,
}

impl ModelDims {
    pub fn num_fields(&self) -> usize {
        self.vocab_sizes.len()
    }

    /// Width of the concatenated embedding `F * d`.
    pub fn input_dim(&self) -> usize {
        self.num_fields() * self.embed_dim
    }

    pub fn total_vocab(&self) -> usize {
        self.vocab_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_sizes.is_empty() || self.vocab_sizes.contains(&0) {
            return Err(Error::Config("every field needs a vocabulary of size >= 1".into()));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("embedding and hidden widths must be positive".into()));
        }
        if self.num_scenarios == 0 || self.num_tasks == 0 {
            return Err(Error::Config("need at least one scenario and one task".into()));
        }
        Ok(())
    }
}

/// The four flows and their fusion for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSet {
    /// `h^{sh,sh}`, shared by all tasks
    pub shared_shared: f64,
    /// `h^{k,sh}`, shared by all tasks
    pub scenario_shared: f64,
    /// `h^{sh,m}` per task
    pub shared_task: Vec<f64>,
    /// `h^{k,m}` per task
    pub scenario_task: Vec<f64>,
    /// `Q^{k,m} = h^{sh,sh} + h^{sh,m} + h^{k,sh} + h^{k,m}` per task
    pub fused: Vec<f64>,
}

impl FlowSet {
    fn zeros(num_tasks: usize) -> Self {
        FlowSet {
            shared_shared: 0.0,
            scenario_shared: 0.0,
            shared_task: vec![0.0; num_tasks],
            scenario_task: vec![0.0; num_tasks],
            fused: vec![0.0; num_tasks],
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.fused.len()
    }

    #[inline]
    pub fn flow(&self, m: usize, j: usize) -> f64 {
        match j {
            0 => self.shared_shared,
            1 => self.shared_task[m],
            2 => self.scenario_shared,
            3 => self.scenario_task[m],
            _ => panic!("flow index {j} out of range"),
        }
    }

    #[inline]
    pub fn flows_for(&self, m: usize) -> [f64; NUM_FLOWS] {
        [
            self.shared_shared,
            self.shared_task[m],
            self.scenario_shared,
            self.scenario_task[m],
        ]
    }

    fn fuse(&mut self) {
        for m in 0..self.fused.len() {
            self.fused[m] =
                self.shared_shared + self.shared_task[m] + self.scenario_shared + self.scenario_task[m];
        }
    }
}

/// Subtraction pruning: `logit_m = Q_m - sum_j g_mj h_j = sum_j (1 - g_mj) h_j`.
///
/// Evaluated in the second form so that all-zero gates reproduce `Q` bitwise
/// and all-one gates give exactly 0.
pub fn prune(flows: &FlowSet, gates: &[GateRow]) -> Result<Vec<f64>> {
    if gates.len() != flows.num_tasks() {
        return Err(Error::dim(
            "prune",
            format!("gates [{}, 4]", gates.len()),
            format!("flows for {} tasks", flows.num_tasks()),
        ));
    }
    if let Some((m, row)) = gates
        .iter()
        .enumerate()
        .find(|(_, row)| row.iter().any(|g| !(0.0..=1.0).contains(g)))
    {
        return Err(Error::Input(format!("gate row {m} outside [0, 1]: {row:?}")));
    }
    let mut out = vec![0.0; gates.len()];
    prune_into(flows, gates, &mut out);
    Ok(out)
}

#[inline]
pub(crate) fn prune_into(flows: &FlowSet, gates: &[GateRow], out: &mut [f64]) {
    for (m, (o, g)) in out.iter_mut().zip(gates).enumerate() {
        let h = flows.flows_for(m);
        *o = (1.0 - g[0]) * h[0] + (1.0 - g[1]) * h[1] + (1.0 - g[2]) * h[2] + (1.0 - g[3]) * h[3];
    }
}

#[derive(Debug, Clone)]
struct ModelIds {
    embedding: ParamId,
    scen_weight: ParamId,
    scen_bias: ParamId,
    scen_a: Vec<ParamId>,
    scen_b: Vec<ParamId>,
    scen_lora_bias: Vec<ParamId>,
    task_weight: ParamId,
    task_bias: ParamId,
    task_a: Vec<ParamId>,
    task_b: Vec<ParamId>,
    task_lora_bias: Vec<ParamId>,
}

/// Per-instance intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    rows: Vec<usize>,
    scenario: usize,
    e: Vec<f64>,
    pre_sh: Vec<f64>,
    u_sh: Vec<f64>,
    z_k: Vec<f64>,
    pre_k: Vec<f64>,
    u_k: Vec<f64>,
    /// `A_m u_sh`, `num_tasks x rank`
    task_z_sh: Vec<f64>,
    /// `A_m u_k`, `num_tasks x rank`
    task_z_k: Vec<f64>,
    flows: FlowSet,
    // backward scratch
    du_sh: Vec<f64>,
    du_k: Vec<f64>,
    de: Vec<f64>,
    dz: Vec<f64>,
}

impl ForwardCache {
    pub fn new(dims: &ModelDims) -> Self {
        let (h, r, m) = (dims.hidden_dim, dims.rank, dims.num_tasks);
        ForwardCache {
            rows: vec![0; dims.num_fields()],
            scenario: 0,
            e: vec![0.0; dims.input_dim()],
            pre_sh: vec![0.0; h],
            u_sh: vec![0.0; h],
            z_k: vec![0.0; r],
            pre_k: vec![0.0; h],
            u_k: vec![0.0; h],
            task_z_sh: vec![0.0; m * r],
            task_z_k: vec![0.0; m * r],
            flows: FlowSet::zeros(m),
            du_sh: vec![0.0; h],
            du_k: vec![0.0; h],
            de: vec![0.0; dims.input_dim()],
            dz: vec![0.0; r],
        }
    }

    pub fn flows(&self) -> &FlowSet {
        &self.flows
    }

    /// The concatenated embedding `e` of the last forward pass.
    pub fn embedding(&self) -> &[f64] {
        &self.e
    }

    pub fn scenario(&self) -> usize {
        self.scenario
    }

    /// Pre-activations of the scenario stage (shared then specific).
    pub fn scenario_preactivations(&self) -> impl Iterator<Item = f64> + '_ {
        self.pre_sh.iter().chain(&self.pre_k).copied()
    }
}

#[derive(Debug, Clone)]
pub struct MsmtModel {
    dims: ModelDims,
    activation: Activation,
    group: ParamGroup,
    ids: ModelIds,
    field_offsets: Vec<usize>,
}

impl MsmtModel {
    /// Xavier-uniform for the embedding, full-rank matrices and `A` factors;
    /// zeros for `B` factors and every bias.
    pub fn new<R: Rng + ?Sized>(dims: ModelDims, activation: Activation, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        let (d_in, h, r) = (dims.input_dim(), dims.hidden_dim, dims.rank);
        let mut g = ParamGroup::new();
        let embedding = g.add(
            "embedding",
            Tensor::xavier_uniform(dims.total_vocab(), dims.embed_dim, rng),
            true,
        );
        let scen_weight = g.add("scenario_shared.weight", Tensor::xavier_uniform(h, d_in, rng), true);
        let scen_bias = g.add("scenario_shared.bias", Tensor::zeros(&[h]), false);
        let mut scen_a = Vec::new();
        let mut scen_b = Vec::new();
        let mut scen_lora_bias = Vec::new();
        for k in 0..dims.num_scenarios {
            scen_a.push(g.add(format!("scenario.{k}.lora_a"), Tensor::xavier_uniform(r, d_in, rng), true));
            scen_b.push(g.add(format!("scenario.{k}.lora_b"), Tensor::zeros(&[h, r]), true));
            scen_lora_bias.push(g.add(format!("scenario.{k}.bias"), Tensor::zeros(&[h]), false));
        }
        let task_weight = g.add("task_shared.weight", Tensor::xavier_uniform(1, h, rng), true);
        let task_bias = g.add("task_shared.bias", Tensor::zeros(&[1]), false);
        let mut task_a = Vec::new();
        let mut task_b = Vec::new();
        let mut task_lora_bias = Vec::new();
        for m in 0..dims.num_tasks {
            task_a.push(g.add(format!("task.{m}.lora_a"), Tensor::xavier_uniform(r, h, rng), true));
            task_b.push(g.add(format!("task.{m}.lora_b"), Tensor::zeros(&[1, r]), true));
            task_lora_bias.push(g.add(format!("task.{m}.bias"), Tensor::zeros(&[1]), false));
        }
        let field_offsets = dims
            .vocab_sizes
            .iter()
            .scan(0, |acc, &v| {
                let off = *acc;
                *acc += v;
                Some(off)
            })
            .collect();
        Ok(MsmtModel {
            dims,
            activation,
            group: g,
            ids: ModelIds {
                embedding,
                scen_weight,
                scen_bias,
                scen_a,
                scen_b,
                scen_lora_bias,
                task_weight,
                task_bias,
                task_a,
                task_b,
                task_lora_bias,
            },
            field_offsets,
        })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &ParamGroup {
        &self.group
    }

    pub fn params_mut(&mut self) -> &mut ParamGroup {
        &mut self.group
    }

    /// Embedding table row of `id` in field `field`.
    pub fn embedding_row(&self, field: usize, id: u32) -> usize {
        self.field_offsets[field] + id as usize
    }

    fn lookup_rows(&self, field_ids: &[u32], rows: &mut [usize]) -> Result<()> {
        if field_ids.len() != self.dims.num_fields() {
            return Err(Error::dim(
                "embed",
                format!("{} field ids", field_ids.len()),
                format!("{} fields", self.dims.num_fields()),
            ));
        }
        for (f, (&id, row)) in field_ids.iter().zip(rows.iter_mut()).enumerate() {
            let size = self.dims.vocab_sizes[f];
            if id as usize >= size {
                return Err(Error::Index {
                    field: format!("#{f}"),
                    id,
                    size,
                });
            }
            *row = self.field_offsets[f] + id as usize;
        }
        Ok(())
    }

    fn gather(&self, rows: &[usize], e: &mut [f64]) {
        let d = self.dims.embed_dim;
        let table = self.group.value(self.ids.embedding).data();
        for (f, &row) in rows.iter().enumerate() {
            e[f * d..(f + 1) * d].copy_from_slice(&table[row * d..(row + 1) * d]);
        }
    }

    /// Concatenation of the `F` embedding rows selected by `field_ids`.
    pub fn embed(&self, field_ids: &[u32]) -> Result<Vec<f64>> {
        let mut rows = vec![0; self.dims.num_fields()];
        self.lookup_rows(field_ids, &mut rows)?;
        let mut e = vec![0.0; self.dims.input_dim()];
        self.gather(&rows, &mut e);
        Ok(e)
    }

    /// The four flows and their fusion for embedding `e` in scenario `k`.
    pub fn compute_flows(&self, e: &[f64], k: usize) -> Result<FlowSet> {
        if e.len() != self.dims.input_dim() {
            return Err(Error::dim(
                "compute_flows",
                format!("e [{}]", e.len()),
                format!("input width {}", self.dims.input_dim()),
            ));
        }
        self.check_scenario(k)?;
        let mut cache = ForwardCache::new(&self.dims);
        cache.e.copy_from_slice(e);
        cache.scenario = k;
        self.forward_from_embedding(&mut cache);
        Ok(cache.flows)
    }

    fn check_scenario(&self, k: usize) -> Result<()> {
        if k >= self.dims.num_scenarios {
            return Err(Error::Input(format!(
                "scenario {k} out of range (K = {})",
                self.dims.num_scenarios
            )));
        }
        Ok(())
    }

    /// Full forward pass for one instance into `cache`.
    pub fn forward(&self, inst: &Instance, cache: &mut ForwardCache) -> Result<()> {
        self.check_scenario(inst.scenario)?;
        self.lookup_rows(&inst.field_ids, &mut cache.rows)?;
        cache.scenario = inst.scenario;
        let rows = std::mem::take(&mut cache.rows);
        self.gather(&rows, &mut cache.e);
        cache.rows = rows;
        self.forward_from_embedding(cache);
        Ok(())
    }

    fn forward_from_embedding(&self, c: &mut ForwardCache) {
        let (d_in, h, r) = (self.dims.input_dim(), self.dims.hidden_dim, self.dims.rank);
        let g = &self.group;
        let act = self.activation;
        let k = c.scenario;

        // scenario stage
        matvec(g.value(self.ids.scen_weight).data(), h, d_in, &c.e, &mut c.pre_sh);
        add_assign(&mut c.pre_sh, g.value(self.ids.scen_bias).data());
        matvec(g.value(self.ids.scen_a[k]).data(), r, d_in, &c.e, &mut c.z_k);
        matvec(g.value(self.ids.scen_b[k]).data(), h, r, &c.z_k, &mut c.pre_k);
        add_assign(&mut c.pre_k, g.value(self.ids.scen_lora_bias[k]).data());
        for i in 0..h {
            c.u_sh[i] = act.apply(c.pre_sh[i]);
            c.u_k[i] = act.apply(c.pre_k[i]);
        }

        // task stage
        let w_t = g.value(self.ids.task_weight).data();
        let b_t = g.value(self.ids.task_bias).data()[0];
        c.flows.shared_shared = dot(w_t, &c.u_sh) + b_t;
        c.flows.scenario_shared = dot(w_t, &c.u_k) + b_t;
        for m in 0..self.dims.num_tasks {
            let a = g.value(self.ids.task_a[m]).data();
            let b = g.value(self.ids.task_b[m]).data();
            let bias = g.value(self.ids.task_lora_bias[m]).data()[0];
            let zs = &mut c.task_z_sh[m * r..(m + 1) * r];
            matvec(a, r, h, &c.u_sh, zs);
            c.flows.shared_task[m] = dot(b, zs) + bias;
            let zk = &mut c.task_z_k[m * r..(m + 1) * r];
            matvec(a, r, h, &c.u_k, zk);
            c.flows.scenario_task[m] = dot(b, zk) + bias;
        }
        c.flows.fuse();
    }

    /// Probabilities `sigmoid(prune(flows, gates))` for one instance.
    pub fn predict(&self, inst: &Instance, gates: &[GateRow]) -> Result<Vec<f64>> {
        let mut cache = ForwardCache::new(&self.dims);
        self.forward(inst, &mut cache)?;
        Ok(prune(&cache.flows, gates)?.into_iter().map(sigmoid).collect())
    }

    /// Accumulates parameter gradients given `d loss / d logit` per task.
    ///
    /// When `dgates` is given, `d loss / d gate` (= `-flow * dlogit`) is added to it.
    pub fn backward(
        &mut self,
        c: &mut ForwardCache,
        dlogit: &[f64],
        gates: &[GateRow],
        dgates: Option<&mut [GateRow]>,
    ) {
        let (d_in, h, r, d) = (
            self.dims.input_dim(),
            self.dims.hidden_dim,
            self.dims.rank,
            self.dims.embed_dim,
        );
        let k = c.scenario;
        let act = self.activation;
        let ids = &self.ids;
        let g = &mut self.group;

        if let Some(dg) = dgates {
            for m in 0..dlogit.len() {
                let flows = c.flows.flows_for(m);
                for j in 0..NUM_FLOWS {
                    dg[m][j] += -flows[j] * dlogit[m];
                }
            }
        }

        c.du_sh.iter_mut().for_each(|x| *x = 0.0);
        c.du_k.iter_mut().for_each(|x| *x = 0.0);

        // task-shared unit, used by h^{sh,sh} and h^{k,sh}
        let mut d_shsh = 0.0;
        let mut d_ksh = 0.0;
        for m in 0..dlogit.len() {
            d_shsh += (1.0 - gates[m][0]) * dlogit[m];
            d_ksh += (1.0 - gates[m][2]) * dlogit[m];
        }
        {
            let p = g.get_mut(ids.task_weight);
            if d_shsh != 0.0 {
                crate::tensor::axpy(d_shsh, &c.u_sh, &mut p.grad);
                crate::tensor::axpy(d_shsh, p.value.data(), &mut c.du_sh);
            }
            if d_ksh != 0.0 {
                crate::tensor::axpy(d_ksh, &c.u_k, &mut p.grad);
                crate::tensor::axpy(d_ksh, p.value.data(), &mut c.du_k);
            }
            g.get_mut(ids.task_bias).grad[0] += d_shsh + d_ksh;
        }

        // task-specific adapters, used by h^{sh,m} and h^{k,m}
        for m in 0..dlogit.len() {
            let d_shm = (1.0 - gates[m][1]) * dlogit[m];
            let d_km = (1.0 - gates[m][3]) * dlogit[m];
            if d_shm == 0.0 && d_km == 0.0 {
                continue;
            }
            let zs = &c.task_z_sh[m * r..(m + 1) * r];
            let zk = &c.task_z_k[m * r..(m + 1) * r];
            let mut dz_sh = vec![0.0; r];
            let mut dz_k = vec![0.0; r];
            {
                let p = g.get_mut(ids.task_b[m]);
                crate::tensor::axpy(d_shm, zs, &mut p.grad);
                crate::tensor::axpy(d_km, zk, &mut p.grad);
                crate::tensor::axpy(d_shm, p.value.data(), &mut dz_sh);
                crate::tensor::axpy(d_km, p.value.data(), &mut dz_k);
            }
            g.get_mut(ids.task_lora_bias[m]).grad[0] += d_shm + d_km;
            let p = g.get_mut(ids.task_a[m]);
            outer_acc(&mut p.grad, &dz_sh, &c.u_sh);
            outer_acc(&mut p.grad, &dz_k, &c.u_k);
            matvec_t_acc(p.value.data(), r, h, &dz_sh, &mut c.du_sh);
            matvec_t_acc(p.value.data(), r, h, &dz_k, &mut c.du_k);
        }

        // through the activation
        for i in 0..h {
            c.du_sh[i] *= act.derivative(c.pre_sh[i], c.u_sh[i]);
            c.du_k[i] *= act.derivative(c.pre_k[i], c.u_k[i]);
        }
        let dpre_sh = &c.du_sh;
        let dpre_k = &c.du_k;

        c.de.iter_mut().for_each(|x| *x = 0.0);
        {
            let p = g.get_mut(ids.scen_weight);
            outer_acc(&mut p.grad, dpre_sh, &c.e);
            matvec_t_acc(p.value.data(), h, d_in, dpre_sh, &mut c.de);
        }
        add_assign(&mut g.get_mut(ids.scen_bias).grad, dpre_sh);

        c.dz.iter_mut().for_each(|x| *x = 0.0);
        {
            let p = g.get_mut(ids.scen_b[k]);
            outer_acc(&mut p.grad, dpre_k, &c.z_k);
            matvec_t_acc(p.value.data(), h, r, dpre_k, &mut c.dz);
        }
        add_assign(&mut g.get_mut(ids.scen_lora_bias[k]).grad, dpre_k);
        {
            let p = g.get_mut(ids.scen_a[k]);
            outer_acc(&mut p.grad, &c.dz, &c.e);
            matvec_t_acc(p.value.data(), r, d_in, &c.dz, &mut c.de);
        }

        // scatter into the touched embedding rows only
        let p = g.get_mut(ids.embedding);
        for (f, &row) in c.rows.iter().enumerate() {
            add_assign(&mut p.grad[row * d..(row + 1) * d], &c.de[f * d..(f + 1) * d]);
        }
    }

    /// Parameter ids of the task-specific adapter `m`: `(A, B, bias)`.
    pub fn task_adapter(&self, m: usize) -> (ParamId, ParamId, ParamId) {
        (self.ids.task_a[m], self.ids.task_b[m], self.ids.task_lora_bias[m])
    }

    /// Parameter ids of the scenario-specific adapter `k`: `(A, B, bias)`.
    pub fn scenario_adapter(&self, k: usize) -> (ParamId, ParamId, ParamId) {
        (self.ids.scen_a[k], self.ids.scen_b[k], self.ids.scen_lora_bias[k])
    }

    pub fn embedding_id(&self) -> ParamId {
        self.ids.embedding
    }

    /// Ids of the full-rank units: `(W_s, b_s, W_t, b_t)`.
    pub fn shared_units(&self) -> (ParamId, ParamId, ParamId, ParamId) {
        (
            self.ids.scen_weight,
            self.ids.scen_bias,
            self.ids.task_weight,
            self.ids.task_bias,
        )
    }
}

/// Exact parameter counts per group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub embedding: usize,
    pub scenario_shared: usize,
    /// all `K` scenario adapters
    pub scenario_specific: usize,
    pub task_shared: usize,
    /// all `M` task adapters
    pub task_specific: usize,
    pub selector: usize,
}

impl ParamCounts {
    /// The four information units.
    pub fn units(&self) -> usize {
        self.scenario_shared + self.scenario_specific + self.task_shared + self.task_specific
    }

    pub fn non_embedding(&self) -> usize {
        self.units() + self.selector
    }

    pub fn total(&self) -> usize {
        self.embedding + self.non_embedding()
    }
}

/// Closed-form parameter counts. `selector` is supplied by the caller
/// (see `FlowSelector::param_count`).
#[allow(clippy::too_many_arguments)]
pub fn param_count(
    fields: usize,
    embed_dim: usize,
    hidden_dim: usize,
    rank: usize,
    scenarios: usize,
    tasks: usize,
    total_vocab: usize,
    selector: usize,
) -> ParamCounts {
    let d_in = fields * embed_dim;
    ParamCounts {
        embedding: total_vocab * embed_dim,
        scenario_shared: hidden_dim * d_in + hidden_dim,
        scenario_specific: scenarios * (rank * d_in + hidden_dim * rank + hidden_dim),
        task_shared: hidden_dim + 1,
        task_specific: tasks * (rank * hidden_dim + rank + 1),
        selector,
    }
}

/// Counts for the same backbone with every low-rank adapter replaced by a
/// full-rank matrix of the same input/output width.
pub fn dense_param_count(
    fields: usize,
    embed_dim: usize,
    hidden_dim: usize,
    scenarios: usize,
    tasks: usize,
    total_vocab: usize,
) -> ParamCounts {
    let d_in = fields * embed_dim;
    ParamCounts {
        embedding: total_vocab * embed_dim,
        scenario_shared: hidden_dim * d_in + hidden_dim,
        scenario_specific: scenarios * (hidden_dim * d_in + hidden_dim),
        task_shared: hidden_dim + 1,
        task_specific: tasks * (hidden_dim + 1),
        selector: 0,
    }
}
