//! Score heads over the solver zoo, ranking labels, losses and training.

mod train;

pub use train::{train, write_history_csv, EpochRecord, LossKind, TrainConfig, TrainError, TrainOutcome, Trainable};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{losses, AutodiffError, Graph, ParamId, ParamStore, Tensor, Var};
use crate::encoder::checkpoint::{Checkpoint, CheckpointError};
use crate::encoder::{Encoder, EncoderConfig, EncoderError};
use crate::features::{feature_len, manual_features};
use crate::instance::{InstanceError, ProblemKind, RoutingInstance};
use crate::zoo::PerformanceTable;

/// Divisor applied to N before it joins the representation.
pub const SCALE_NORM: f64 = 500.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("label index {index} out of range for {m} solvers")]
    Index { index: usize, m: usize },
    #[error("ranking is not a permutation of 0..{0}")]
    Permutation(usize),
    #[error("every solver failed on this instance")]
    AllFailed,
    #[error("objective row contains NaN")]
    Nan,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model config: {0}")]
    Config(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// What the head sees as the instance representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    Neural,
    /// Standardized hand-crafted features, no encoder.
    Manual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub features: FeatureSource,
    pub encoder: EncoderConfig,
    pub head_hidden: Vec<usize>,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            features: FeatureSource::Neural,
            encoder: EncoderConfig::default(),
            head_hidden: vec![256, 256],
            init_seed: 0,
        }
    }
}

/// Per-column standardization of manual features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNorm {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let w = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..w).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..w)
            .map(|j| {
                let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

/// Dense layers with tanh between them; the last layer is linear.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    pub fn new<R: rand::Rng>(store: &mut ParamStore, prefix: &str, widths: &[usize], rng: &mut R) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                (
                    store.add_xavier(format!("{prefix}.w{i}"), w[0], w[1], rng),
                    store.add_zeros(format!("{prefix}.b{i}"), 1, w[1]),
                )
            })
            .collect();
        Self { layers }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var, AutodiffError> {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let (wv, bv) = (g.param(store, w), g.param(store, b));
            h = g.matmul(h, wv)?;
            h = g.add_row(h, bv)?;
            if i + 1 < self.layers.len() {
                h = g.tanh(h);
            }
        }
        Ok(h)
    }

    /// Parameters of the final layer.
    pub fn output_layer(&self) -> (ParamId, ParamId) {
        *self.layers.last().expect("at least one layer")
    }
}

/// Encoder (or manual features) plus MLP head mapping an instance to one
/// score per solver, in `solver_ids` order.
#[derive(Clone, Debug)]
pub struct SelectionModel {
    config: ModelConfig,
    kind: ProblemKind,
    solver_ids: Vec<String>,
    store: ParamStore,
    encoder: Option<Encoder>,
    norm: Option<FeatureNorm>,
    head: Mlp,
}

impl SelectionModel {
    /// Fresh parameters drawn from `config.init_seed`. Manual-feature models
    /// need `norm`, fitted on the training instances.
    pub fn new(
        config: &ModelConfig,
        kind: ProblemKind,
        solver_ids: Vec<String>,
        norm: Option<FeatureNorm>,
    ) -> Result<Self, ModelError> {
        if solver_ids.is_empty() {
            return Err(ModelError::Config("empty solver list".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let (encoder, rep) = match config.features {
            FeatureSource::Neural => {
                let e = Encoder::new(&config.encoder, kind, &mut store, "encoder", &mut rng)?;
                let d = e.output_dim();
                (Some(e), d)
            }
            FeatureSource::Manual => {
                let len = feature_len(kind);
                match &norm {
                    Some(n) if n.mean.len() == len && n.std.len() == len => {}
                    _ => return Err(ModelError::Config(format!("manual features need a {len}-column normalizer"))),
                }
                (None, len)
            }
        };
        let mut widths = vec![rep + 1];
        widths.extend(&config.head_hidden);
        widths.push(solver_ids.len());
        let head = Mlp::new(&mut store, "head", &widths, &mut rng);
        Ok(Self {
            config: config.clone(),
            kind,
            solver_ids,
            store,
            encoder,
            norm: if config.features == FeatureSource::Manual { norm } else { None },
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn solver_ids(&self) -> &[String] {
        &self.solver_ids
    }

    pub fn n_solvers(&self) -> usize {
        self.solver_ids.len()
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn encoder(&self) -> Option<&Encoder> {
        self.encoder.as_ref()
    }

    pub fn head(&self) -> &Mlp {
        &self.head
    }

    /// Zeroes every head parameter.
    pub fn zero_head(&mut self) {
        let ids: Vec<ParamId> = self.store.ids().filter(|&id| self.store.name(id).starts_with("head.")).collect();
        for id in ids {
            let t = self.store.get_mut(id);
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn check_kind(&self, inst: &RoutingInstance) -> Result<(), ModelError> {
        if inst.kind != self.kind {
            return Err(ModelError::Config(format!(
                "model scores {} instances, got {} `{}`",
                self.kind.as_str(),
                inst.kind.as_str(),
                inst.id
            )));
        }
        Ok(())
    }

    /// Representation ‖ N/500 as a `1×(r+1)` node.
    pub fn representation(&self, g: &mut Graph, store: &ParamStore, inst: &RoutingInstance) -> Result<Var, ModelError> {
        self.check_kind(inst)?;
        let rep = match (&self.encoder, &self.norm) {
            (Some(e), _) => e.encode(g, store, inst)?,
            (None, Some(norm)) => {
                let f = norm.apply(&manual_features(inst)?);
                g.constant(Tensor::row_vector(&f))
            }
            (None, None) => unreachable!("constructor guarantees a feature source"),
        };
        let scale = g.constant(Tensor::scalar(inst.scale() as f64 / SCALE_NORM));
        Ok(g.concat_cols(&[rep, scale])?)
    }

    /// Score row (`1×M`) on `g`, reading parameters from `store`.
    pub fn score_var(&self, g: &mut Graph, store: &ParamStore, inst: &RoutingInstance) -> Result<Var, ModelError> {
        let x = self.representation(g, store, inst)?;
        Ok(self.head.forward(g, store, x)?)
    }

    pub fn score(&self, inst: &RoutingInstance) -> Result<Vec<f64>, ModelError> {
        let mut g = Graph::new();
        let s = self.score_var(&mut g, &self.store, inst)?;
        Ok(g.value(s).data().to_vec())
    }

    /// Scores for many instances, evaluated in parallel; order preserved.
    pub fn score_all(&self, insts: &[RoutingInstance]) -> Result<Vec<Vec<f64>>, ModelError> {
        insts.par_iter().map(|i| self.score(i)).collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = serde_json::json!({
            "model": self.config,
            "kind": self.kind,
            "norm": self.norm,
        });
        Checkpoint::from_store(meta, self.solver_ids.clone(), &self.store)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ModelError> {
        let field = |k: &str| ck.meta.get(k).cloned().ok_or_else(|| ModelError::Config(format!("checkpoint meta lacks `{k}`")));
        let parse = |e: serde_json::Error| ModelError::Config(format!("checkpoint meta: {e}"));
        let config: ModelConfig = serde_json::from_value(field("model")?).map_err(parse)?;
        let kind: ProblemKind = serde_json::from_value(field("kind")?).map_err(parse)?;
        let norm: Option<FeatureNorm> = serde_json::from_value(field("norm")?).map_err(parse)?;
        let mut model = Self::new(&config, kind, ck.solver_ids.clone(), norm)?;
        ck.load_into(&mut model.store)?;
        Ok(model)
    }
}

/// Fits the manual-feature normalizer on `insts`.
pub fn fit_feature_norm(insts: &[RoutingInstance]) -> Result<FeatureNorm, InstanceError> {
    let rows = insts.par_iter().map(manual_features).collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureNorm::fit(&rows))
}

/// Supervision derived from one objective row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labels {
    pub best: usize,
    /// Solver indices by ascending objective, ties by index.
    pub ranking: Vec<usize>,
}

/// Failures are `+∞` and rank last.
pub fn build_labels(objectives: &[f64]) -> Result<Labels, LabelError> {
    if objectives.iter().any(|v| v.is_nan()) {
        return Err(LabelError::Nan);
    }
    if objectives.is_empty() || objectives.iter().all(|v| v.is_infinite()) {
        return Err(LabelError::AllFailed);
    }
    let mut ranking: Vec<usize> = (0..objectives.len()).collect();
    ranking.sort_by(|&a, &b| objectives[a].total_cmp(&objectives[b]).then(a.cmp(&b)));
    Ok(Labels { best: ranking[0], ranking })
}

fn check_permutation(phi: &[usize], m: usize) -> Result<(), LabelError> {
    let mut seen = vec![false; m];
    if phi.len() != m {
        return Err(LabelError::Permutation(m));
    }
    for &i in phi {
        if i >= m || std::mem::replace(&mut seen[i], true) {
            return Err(LabelError::Permutation(m));
        }
    }
    Ok(())
}

/// `−log softmax(scores)[best]`.
pub fn classification_loss(scores: &[f64], best: usize) -> Result<f64, LabelError> {
    if best >= scores.len() {
        return Err(LabelError::Index { index: best, m: scores.len() });
    }
    Ok(losses::softmax_cross_entropy(scores, best))
}

/// Plackett-Luce negative log-likelihood of the ranking `phi`.
pub fn ranking_loss(scores: &[f64], phi: &[usize]) -> Result<f64, LabelError> {
    check_permutation(phi, scores.len())?;
    Ok(losses::plackett_luce_nll(scores, phi))
}

/// Index of the highest score, ties by lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Percent of `rows` whose chosen solver attains the row minimum objective.
pub fn choice_accuracy(table: &PerformanceTable, rows: &[usize], choices: &[usize]) -> f64 {
    assert_eq!(rows.len(), choices.len(), "one choice per row");
    if rows.is_empty() {
        return 0.0;
    }
    let hits = rows
        .iter()
        .zip(choices)
        .filter(|&(&r, &c)| {
            let min = (0..table.n_solvers()).map(|s| table.objective(r, s)).fold(f64::INFINITY, f64::min);
            table.objective(r, c) <= min
        })
        .count();
    100.0 * hits as f64 / rows.len() as f64
}

/// Greedy selection accuracy of `model` on `insts`, whose ids must all be
/// rows of `table` with columns in the model's solver order.
pub fn selection_accuracy(
    model: &SelectionModel,
    table: &PerformanceTable,
    insts: &[RoutingInstance],
) -> Result<f64, ModelError> {
    let rows = table_rows(table, insts)?;
    check_columns(model, table)?;
    let choices: Vec<usize> = model.score_all(insts)?.iter().map(|s| argmax(s)).collect();
    Ok(choice_accuracy(table, &rows, &choices))
}

pub(crate) fn table_rows(table: &PerformanceTable, insts: &[RoutingInstance]) -> Result<Vec<usize>, ModelError> {
    let index = table.row_index();
    insts
        .iter()
        .map(|i| {
            index
                .get(i.id.as_str())
                .copied()
                .ok_or_else(|| ModelError::Config(format!("instance `{}` missing from the performance table", i.id)))
        })
        .collect()
}

pub(crate) fn check_columns(model: &SelectionModel, table: &PerformanceTable) -> Result<(), ModelError> {
    if model.solver_ids() != table.solver_ids() {
        return Err(ModelError::Config(format!(
            "model solvers {:?} differ from table columns {:?}",
            model.solver_ids(),
            table.solver_ids()
        )));
    }
    Ok(())
}
