//! Solver embeddings built from representative instances, and a pair-scoring
//! selector that can take on solvers it was never trained with.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Graph, ParamId, ParamStore, Tensor, Var};
use crate::encoder::checkpoint::{Checkpoint, CheckpointError};
use crate::encoder::{AttentionLayer, Encoder, EncoderConfig, EncoderError, EncoderMode};
use crate::instance::{ProblemKind, RoutingInstance};
use crate::model::{train, Mlp, ModelError, TrainConfig, TrainError, Trainable, SCALE_NORM};
use crate::zoo::PerformanceTable;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("solver `{0}` never attains a row minimum and cannot be embedded")]
    NoRepresentatives(String),
    #[error("embedding config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl From<AutodiffError> for EmbedError {
    fn from(e: AutodiffError) -> Self {
        Self::Model(e.into())
    }
}

impl From<EncoderError> for EmbedError {
    fn from(e: EncoderError) -> Self {
        Self::Model(e.into())
    }
}

impl From<CheckpointError> for EmbedError {
    fn from(e: CheckpointError) -> Self {
        Self::Model(e.into())
    }
}

/// Rows won by `solver` (ties included), ordered by own objective over the
/// second-smallest objective in the row, ascending; ties by instance id. The
/// first `max(1, ⌊fraction·wins⌋)` ids are returned.
pub fn representative_instances(table: &PerformanceTable, solver: usize, fraction: f64) -> Result<Vec<String>, EmbedError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EmbedError::Config(format!("fraction {fraction} outside (0, 1]")));
    }
    let sid = table
        .solver_ids()
        .get(solver)
        .ok_or_else(|| EmbedError::Config(format!("solver column {solver} out of range")))?;
    let mut wins: Vec<(f64, &str)> = Vec::new();
    for (r, id) in table.instance_ids().iter().enumerate() {
        let mut row: Vec<f64> = (0..table.n_solvers()).map(|s| table.objective(r, s)).collect();
        let own = row[solver];
        row.sort_by(f64::total_cmp);
        if !own.is_finite() || own > row[0] {
            continue;
        }
        let runner_up = row.get(1).copied().unwrap_or(own);
        let ratio = if runner_up > 0.0 { own / runner_up } else { 1.0 };
        wins.push((ratio, id));
    }
    if wins.is_empty() {
        return Err(EmbedError::NoRepresentatives(sid.clone()));
    }
    wins.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
    let keep = ((fraction * wins.len() as f64).floor() as usize).max(1);
    Ok(wins[..keep].iter().map(|w| w.1.to_string()).collect())
}

/// Shadow copy θ' of selected live parameters, moved toward θ by an
/// exponential moving average.
#[derive(Clone, Debug)]
pub struct MomentumTokenizer {
    momentum: f64,
    ids: Vec<ParamId>,
    shadow: ParamStore,
}

impl MomentumTokenizer {
    /// Starts with θ' = θ for the parameters in `ids`.
    pub fn new(live: &ParamStore, ids: Vec<ParamId>, momentum: f64) -> Result<Self, EmbedError> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(EmbedError::Config(format!("momentum {momentum} outside [0, 1)")));
        }
        Ok(Self { momentum, ids, shadow: live.clone() })
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    /// Shadow values, addressed with the live store's ids.
    pub fn shadow(&self) -> &ParamStore {
        &self.shadow
    }

    pub fn shadow_mut(&mut self) -> &mut ParamStore {
        &mut self.shadow
    }

    /// θ' ← m·θ' + (1−m)·θ.
    pub fn update(&mut self, live: &ParamStore) {
        let m = self.momentum;
        for &id in &self.ids {
            let src = live.get(id).data();
            for (s, &t) in self.shadow.get_mut(id).data_mut().iter_mut().zip(src) {
                *s = m * *s + (1.0 - m) * t;
            }
        }
    }

    fn flatten(&self) -> Vec<f64> {
        self.ids.iter().flat_map(|&id| self.shadow.get(id).data().iter().copied()).collect()
    }

    fn load_flat(&mut self, flat: &[f64]) {
        let mut at = 0;
        for &id in &self.ids {
            let t = self.shadow.get_mut(id).data_mut();
            t.copy_from_slice(&flat[at..at + t.len()]);
            at += t.len();
        }
    }
}

/// Self-attention over the tokens and a learned summary token, then one
/// cross-attention step where the summary is the only query.
#[derive(Clone, Debug)]
pub struct SummaryTransformer {
    summary: ParamId,
    mix: AttentionLayer,
    pool: AttentionLayer,
}

impl SummaryTransformer {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, dim: usize, heads: usize, ff: usize, rng: &mut R) -> Result<Self, EmbedError> {
        let init: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.1..0.1)).collect();
        Ok(Self {
            summary: store.add(format!("{prefix}.summary"), Tensor::row_vector(&init)),
            mix: AttentionLayer::new(store, &format!("{prefix}.mix"), dim, heads, ff, rng)?,
            pool: AttentionLayer::new(store, &format!("{prefix}.pool"), dim, heads, ff, rng)?,
        })
    }

    pub fn summary_param(&self) -> ParamId {
        self.summary
    }

    /// `tokens` is `T×D` with `T ≥ 1`; the result is `1×D`.
    pub fn embed(&self, g: &mut Graph, store: &ParamStore, tokens: Var) -> Result<Var, EmbedError> {
        let t = g.value(tokens).rows();
        if t == 0 {
            return Err(EmbedError::Config("no tokens to summarize".into()));
        }
        let s = g.param(store, self.summary);
        let x = g.concat_rows(&[tokens, s])?;
        let y = self.mix.forward(g, store, x)?;
        let idx: Vec<usize> = (0..t).collect();
        let toks = g.gather_rows(y, &idx)?;
        let s = g.gather_rows(y, &[t])?;
        Ok(self.pool.forward_cross(g, store, s, toks)?)
    }
}

/// MLP over `instance ‖ solver ‖ N/500` rows.
#[derive(Clone, Debug)]
pub struct PairHead {
    mlp: Mlp,
}

impl PairHead {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut widths = vec![2 * dim + 1];
        widths.extend(hidden);
        widths.push(1);
        Self { mlp: Mlp::new(store, prefix, &widths, rng) }
    }

    /// One score per row of `solvers` (`M×D`) for the `1×D` instance
    /// representation; returned as `1×M`.
    pub fn score(&self, g: &mut Graph, store: &ParamStore, inst: Var, solvers: Var, scale: f64) -> Result<Var, AutodiffError> {
        let m = g.value(solvers).rows();
        let rep = g.gather_rows(inst, &vec![0; m])?;
        let n = g.constant(Tensor::filled(m, 1, scale));
        let x = g.concat_cols(&[rep, solvers, n])?;
        let s = self.mlp.forward(g, store, x)?;
        g.transpose(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairConfig {
    /// Must be hierarchical; tokens and embeddings are `output_dim` wide.
    pub encoder: EncoderConfig,
    pub summary_heads: usize,
    pub summary_ff: usize,
    pub head_hidden: Vec<usize>,
    pub momentum: f64,
    pub fraction: f64,
    pub init_seed: u64,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            summary_heads: 8,
            summary_ff: 512,
            head_hidden: vec![256, 256],
            momentum: 0.99,
            fraction: 0.01,
            init_seed: 0,
        }
    }
}

/// An embedded solver: its summary vector and the instances it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverFeature {
    pub solver_id: String,
    pub embedding: Vec<f64>,
    pub representatives: Vec<String>,
}

#[derive(Clone, Debug)]
struct Slot {
    id: String,
    representatives: Vec<String>,
    /// Shadow-encoder representations, `T×D`.
    tokens: Tensor,
}

/// Live encoder, summary transformer and pair head scoring every
/// (instance, solver) pair; solvers are described by their tokens.
#[derive(Clone, Debug)]
pub struct PairSelector {
    config: PairConfig,
    kind: ProblemKind,
    store: ParamStore,
    encoder: Encoder,
    summary: SummaryTransformer,
    head: PairHead,
    tokenizer: MomentumTokenizer,
    slots: Vec<Slot>,
    /// Instances behind each slot, kept so tokens can follow the shadow.
    reps: Vec<Vec<RoutingInstance>>,
    solver_ids: Vec<String>,
}

impl PairSelector {
    /// Fresh parameters; `solvers` pairs each id with its representative instances.
    pub fn new(config: &PairConfig, kind: ProblemKind, solvers: Vec<(String, Vec<RoutingInstance>)>) -> Result<Self, EmbedError> {
        if solvers.is_empty() {
            return Err(EmbedError::Config("empty solver list".into()));
        }
        let mut sel = Self::blank(config, kind)?;
        for (id, insts) in solvers {
            sel.push_solver(id, insts)?;
        }
        Ok(sel)
    }

    fn blank(config: &PairConfig, kind: ProblemKind) -> Result<Self, EmbedError> {
        config.encoder.validate()?;
        if config.encoder.mode != EncoderMode::Hierarchical {
            return Err(EmbedError::Config("solver tokens need the hierarchical encoder".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&config.encoder, kind, &mut store, "encoder", &mut rng)?;
        let dim = encoder.output_dim();
        let summary = SummaryTransformer::new(&mut store, "summary", dim, config.summary_heads, config.summary_ff, &mut rng)?;
        let head = PairHead::new(&mut store, "pair", dim, &config.head_hidden, &mut rng);
        let ids: Vec<ParamId> = store.ids().filter(|&id| store.name(id).starts_with("encoder.")).collect();
        let tokenizer = MomentumTokenizer::new(&store, ids, config.momentum)?;
        Ok(Self {
            config: config.clone(),
            kind,
            store,
            encoder,
            summary,
            head,
            tokenizer,
            slots: Vec::new(),
            reps: Vec::new(),
            solver_ids: Vec::new(),
        })
    }

    /// Representatives for every table column, drawn from `insts`.
    pub fn from_table(config: &PairConfig, kind: ProblemKind, table: &PerformanceTable, insts: &[RoutingInstance]) -> Result<Self, EmbedError> {
        let solvers = table_representatives(table, insts, config.fraction)?;
        Self::new(config, kind, solvers)
    }

    pub fn config(&self) -> &PairConfig {
        &self.config
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn tokenizer(&self) -> &MomentumTokenizer {
        &self.tokenizer
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn summary(&self) -> &SummaryTransformer {
        &self.summary
    }

    pub fn head(&self) -> &PairHead {
        &self.head
    }

    fn tokens_for(&self, id: &str, insts: &[RoutingInstance]) -> Result<Tensor, EmbedError> {
        if insts.is_empty() {
            return Err(EmbedError::NoRepresentatives(id.to_string()));
        }
        let rows = insts
            .par_iter()
            .map(|i| self.encoder.represent(self.tokenizer.shadow(), i))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Tensor::from_rows(&rows))
    }

    fn push_solver(&mut self, id: String, insts: Vec<RoutingInstance>) -> Result<(), EmbedError> {
        let tokens = self.tokens_for(&id, &insts)?;
        self.slots.push(Slot { id: id.clone(), representatives: insts.iter().map(|i| i.id.clone()).collect(), tokens });
        self.reps.push(insts);
        self.solver_ids.push(id);
        Ok(())
    }

    /// Re-encodes every representative with the current shadow encoder.
    pub fn refresh_tokens(&mut self) -> Result<(), EmbedError> {
        let fresh = self
            .slots
            .par_iter()
            .zip(&self.reps)
            .map(|(slot, insts)| self.tokens_for(&slot.id, insts))
            .collect::<Result<Vec<_>, _>>()?;
        for (slot, t) in self.slots.iter_mut().zip(fresh) {
            slot.tokens = t;
        }
        Ok(())
    }

    /// `M×D` solver embeddings on `g`.
    fn embeddings_var(&self, g: &mut Graph, store: &ParamStore) -> Result<Var, EmbedError> {
        let rows = self
            .slots
            .iter()
            .map(|s| {
                let t = g.constant(s.tokens.clone());
                self.summary.embed(g, store, t)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(g.concat_rows(&rows)?)
    }

    /// Current embedding of every solver, in score order.
    pub fn solver_features(&self) -> Result<Vec<SolverFeature>, EmbedError> {
        let mut g = Graph::new();
        let e = self.embeddings_var(&mut g, &self.store)?;
        let e = g.value(e);
        Ok(self
            .slots
            .iter()
            .enumerate()
            .map(|(i, s)| SolverFeature {
                solver_id: s.id.clone(),
                embedding: e.row(i).to_vec(),
                representatives: s.representatives.clone(),
            })
            .collect())
    }

    fn check_kind(&self, inst: &RoutingInstance) -> Result<(), EmbedError> {
        if inst.kind != self.kind {
            return Err(EmbedError::Config(format!("selector scores {} instances, got `{}`", self.kind.as_str(), inst.id)));
        }
        Ok(())
    }

    fn pair_scores(&self, g: &mut Graph, store: &ParamStore, inst: &RoutingInstance, solvers: Var) -> Result<Var, EmbedError> {
        self.check_kind(inst)?;
        let rep = self.encoder.encode(g, store, inst)?;
        Ok(self.head.score(g, store, rep, solvers, inst.scale() as f64 / SCALE_NORM)?)
    }

    /// Scores against precomputed solver embeddings.
    fn score_with(&self, inst: &RoutingInstance, emb: &Tensor) -> Result<Vec<f64>, EmbedError> {
        let mut g = Graph::new();
        let e = g.constant(emb.clone());
        let s = self.pair_scores(&mut g, &self.store, inst, e)?;
        Ok(g.value(s).data().to_vec())
    }

    fn embedding_matrix(&self) -> Result<Tensor, EmbedError> {
        let rows: Vec<Vec<f64>> = self.solver_features()?.into_iter().map(|f| f.embedding).collect();
        Ok(Tensor::from_rows(&rows))
    }

    pub fn score(&self, inst: &RoutingInstance) -> Result<Vec<f64>, EmbedError> {
        self.score_with(inst, &self.embedding_matrix()?)
    }

    /// Embeds one more solver with the frozen networks. The new solver's
    /// score is appended as the last column.
    pub fn integrate_unseen_solver(&self, id: impl Into<String>, representatives: Vec<RoutingInstance>) -> Result<Self, EmbedError> {
        let mut ext = self.clone();
        ext.push_solver(id.into(), representatives)?;
        Ok(ext)
    }

    /// Live parameters, the shadow encoder and every solver's tokens.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = serde_json::json!({
            "pair": self.config,
            "kind": self.kind,
            "representatives": self.slots.iter().map(|s| &s.representatives).collect::<Vec<_>>(),
        });
        let mut ck = Checkpoint::from_store(meta, self.solver_ids.clone(), &self.store);
        for &id in &self.tokenizer.ids {
            ck.tensors.push((format!("shadow.{}", self.store.name(id)), self.tokenizer.shadow.get(id).clone()));
        }
        for (i, s) in self.slots.iter().enumerate() {
            ck.tensors.push((format!("tokens.{i}"), s.tokens.clone()));
        }
        ck
    }

    /// Restores a frozen selector. Representative instances are not stored,
    /// so [`refresh_tokens`](Self::refresh_tokens) keeps the saved tokens.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, EmbedError> {
        let field = |k: &str| ck.meta.get(k).cloned().ok_or_else(|| EmbedError::Config(format!("checkpoint meta lacks `{k}`")));
        let parse = |e: serde_json::Error| EmbedError::Config(format!("checkpoint meta: {e}"));
        let config: PairConfig = serde_json::from_value(field("pair")?).map_err(parse)?;
        let kind: ProblemKind = serde_json::from_value(field("kind")?).map_err(parse)?;
        let reps: Vec<Vec<String>> = serde_json::from_value(field("representatives")?).map_err(parse)?;
        if reps.len() != ck.solver_ids.len() {
            return Err(EmbedError::Config("representative lists do not match solver ids".into()));
        }
        if reps.is_empty() {
            return Err(EmbedError::Config("checkpoint holds no solvers".into()));
        }
        let mut sel = Self::blank(&config, kind)?;
        let mut live = Vec::new();
        let mut shadow: HashMap<&str, &Tensor> = HashMap::new();
        let mut tokens: Vec<Option<Tensor>> = vec![None; reps.len()];
        for (name, t) in &ck.tensors {
            if let Some(rest) = name.strip_prefix("shadow.") {
                shadow.insert(rest, t);
            } else if let Some(i) = name.strip_prefix("tokens.") {
                let i: usize = i.parse().map_err(|_| EmbedError::Config(format!("bad tensor name `{name}`")))?;
                let slot = tokens.get_mut(i).ok_or_else(|| EmbedError::Config(format!("stray `{name}`")))?;
                if t.cols() != sel.encoder.output_dim() || t.rows() == 0 {
                    return Err(EmbedError::Config(format!("`{name}` has shape {:?}", t.shape())));
                }
                *slot = Some(t.clone());
            } else {
                live.push((name.clone(), t.clone()));
            }
        }
        Checkpoint { meta: ck.meta.clone(), solver_ids: ck.solver_ids.clone(), tensors: live }.load_into(&mut sel.store)?;
        sel.tokenizer.shadow = sel.store.clone();
        for &id in &sel.tokenizer.ids {
            let name = sel.store.name(id);
            let t = shadow.get(name).ok_or_else(|| EmbedError::Config(format!("checkpoint lacks `shadow.{name}`")))?;
            if t.shape() != sel.store.get(id).shape() {
                return Err(EmbedError::Config(format!("`shadow.{name}` has shape {:?}", t.shape())));
            }
            *sel.tokenizer.shadow.get_mut(id) = (*t).clone();
        }
        for ((id, reps), t) in ck.solver_ids.iter().zip(reps).zip(tokens) {
            let tokens = t.ok_or_else(|| EmbedError::Config(format!("checkpoint lacks tokens for `{id}`")))?;
            sel.slots.push(Slot { id: id.clone(), representatives: reps, tokens });
            sel.reps.push(Vec::new());
            sel.solver_ids.push(id.clone());
        }
        Ok(sel)
    }
}

impl Trainable for PairSelector {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn solver_ids(&self) -> &[String] {
        &self.solver_ids
    }

    fn score_var(&self, g: &mut Graph, store: &ParamStore, inst: &RoutingInstance) -> Result<Var, ModelError> {
        let e = self.embeddings_var(g, store).map_err(into_model)?;
        self.pair_scores(g, store, inst, e).map_err(into_model)
    }

    fn score_all(&self, insts: &[RoutingInstance]) -> Result<Vec<Vec<f64>>, ModelError> {
        let emb = self.embedding_matrix().map_err(into_model)?;
        insts.par_iter().map(|i| self.score_with(i, &emb).map_err(into_model)).collect()
    }

    fn after_step(&mut self) -> Result<(), ModelError> {
        self.tokenizer.update(&self.store);
        self.refresh_tokens().map_err(into_model)
    }

    fn snapshot(&self) -> Vec<f64> {
        let mut v = self.store.flatten();
        v.extend(self.tokenizer.flatten());
        v
    }

    fn restore(&mut self, snap: &[f64]) -> Result<(), ModelError> {
        let n = self.store.num_scalars();
        self.store.load_flat(&snap[..n]);
        self.tokenizer.load_flat(&snap[n..]);
        self.refresh_tokens().map_err(into_model)
    }
}

fn into_model(e: EmbedError) -> ModelError {
    match e {
        EmbedError::Model(m) => m,
        other => ModelError::Config(other.to_string()),
    }
}

/// For each table column, its representative instances looked up in `insts`.
pub fn table_representatives(
    table: &PerformanceTable,
    insts: &[RoutingInstance],
    fraction: f64,
) -> Result<Vec<(String, Vec<RoutingInstance>)>, EmbedError> {
    let by_id: HashMap<&str, &RoutingInstance> = insts.iter().map(|i| (i.id.as_str(), i)).collect();
    (0..table.n_solvers())
        .map(|s| {
            let ids = representative_instances(table, s, fraction)?;
            let reps = ids
                .iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .map(|i| (*i).clone())
                        .ok_or_else(|| EmbedError::Config(format!("representative `{id}` not among the given instances")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok((table.solver_ids()[s].clone(), reps))
        })
        .collect()
}

/// Mean recorded gap of executing the `k` highest-scored solvers, where
/// `columns[j]` maps score position `j` to a table column.
pub fn topk_recorded_gap(table: &PerformanceTable, rows: &[usize], scores: &[Vec<f64>], columns: &[usize], k: usize) -> f64 {
    let total: f64 = rows
        .iter()
        .zip(scores)
        .map(|(&r, s)| {
            let mut order: Vec<usize> = (0..s.len()).collect();
            order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
            order.iter().take(k).map(|&j| table.gap(r, columns[j])).fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / rows.len() as f64
}

/// Result of one leave-one-out run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaveOneOut {
    pub removed: String,
    pub top1_without: f64,
    pub top1_with: f64,
    pub top2_without: f64,
    pub top2_with: f64,
}

/// Drops the solver with the second-lowest mean training gap, trains a pair
/// selector on the rest, then embeds the dropped solver from `held_out`
/// representatives and compares test gaps with and without it.
#[allow(clippy::too_many_arguments)]
pub fn leave_one_out(
    config: &PairConfig,
    train_cfg: &TrainConfig,
    kind: ProblemKind,
    table: &PerformanceTable,
    train_set: &[RoutingInstance],
    val_set: &[RoutingInstance],
    held_out: &[RoutingInstance],
    test_set: &[RoutingInstance],
) -> Result<LeaveOneOut, EmbedError> {
    let m = table.n_solvers();
    if m < 3 {
        return Err(EmbedError::Config("leave-one-out needs at least three solvers".into()));
    }
    let index = table.row_index();
    let rows_of = |set: &[RoutingInstance]| -> Result<Vec<usize>, EmbedError> {
        set.iter()
            .map(|i| index.get(i.id.as_str()).copied().ok_or_else(|| EmbedError::Config(format!("`{}` missing from table", i.id))))
            .collect()
    };
    let train_rows = rows_of(train_set)?;
    let train_table = table.select_rows(&train_rows);
    let mut by_gap: Vec<usize> = (0..m).collect();
    by_gap.sort_by(|&a, &b| train_table.solver_mean_gap(a).total_cmp(&train_table.solver_mean_gap(b)).then(a.cmp(&b)));
    let removed = by_gap[1];
    let kept: Vec<usize> = (0..m).filter(|&s| s != removed).collect();

    let reduced = table.select_solvers(&kept);
    let init = PairSelector::from_table(config, kind, &reduced.select_rows(&train_rows), train_set)?;
    let trained = train(init, train_set, val_set, &reduced, train_cfg)?.model;

    let held_table = table.select_rows(&rows_of(held_out)?);
    let rep_ids = representative_instances(&held_table, removed, config.fraction)?;
    let by_id: HashMap<&str, &RoutingInstance> = held_out.iter().map(|i| (i.id.as_str(), i)).collect();
    let reps: Vec<RoutingInstance> = rep_ids.iter().map(|id| by_id[id.as_str()].clone()).collect();
    let extended = trained.integrate_unseen_solver(table.solver_ids()[removed].clone(), reps)?;

    let test_rows = rows_of(test_set)?;
    let without = Trainable::score_all(&trained, test_set)?;
    let with = Trainable::score_all(&extended, test_set)?;
    let mut ext_cols = kept.clone();
    ext_cols.push(removed);
    Ok(LeaveOneOut {
        removed: table.solver_ids()[removed].clone(),
        top1_without: topk_recorded_gap(table, &test_rows, &without, &kept, 1),
        top1_with: topk_recorded_gap(table, &test_rows, &with, &ext_cols, 1),
        top2_without: topk_recorded_gap(table, &test_rows, &without, &kept, 2),
        top2_with: topk_recorded_gap(table, &test_rows, &with, &ext_cols, 2),
    })
}
