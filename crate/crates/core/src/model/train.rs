use std::io::Write;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{argmax, build_labels, table_rows, Labels, ModelError, SelectionModel};
use crate::autodiff::{AdamConfig, AdamState, Graph, Gradients, ParamStore, Var};
use crate::instance::{RoutingInstance, SYMMETRIES};
use crate::zoo::PerformanceTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Classification,
    Ranking,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
    /// Train on a random dihedral view of each instance every epoch.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 1e-6,
            epochs: 50,
            batch_size: 64,
            seed: 0,
            loss: LossKind::Ranking,
            augment: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("train config: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {what}")]
    Diverged { epoch: usize, batch: usize, what: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_gap: f64,
}

/// A scorer whose parameters [`train`] can fit against a performance table.
pub trait Trainable {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Column order of the score row.
    fn solver_ids(&self) -> &[String];
    /// Score row (`1×M`) on `g`, reading trainable parameters from `store`.
    fn score_var(&self, g: &mut Graph, store: &ParamStore, inst: &RoutingInstance) -> Result<Var, ModelError>;
    fn score_all(&self, insts: &[RoutingInstance]) -> Result<Vec<Vec<f64>>, ModelError>;
    /// Called after every optimizer step.
    fn after_step(&mut self) -> Result<(), ModelError> {
        Ok(())
    }
    /// Everything needed to restore the current state, trainable or not.
    fn snapshot(&self) -> Vec<f64> {
        self.params().flatten()
    }
    fn restore(&mut self, snap: &[f64]) -> Result<(), ModelError> {
        self.params_mut().load_flat(snap);
        Ok(())
    }
}

impl Trainable for SelectionModel {
    fn params(&self) -> &ParamStore {
        SelectionModel::params(self)
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        SelectionModel::params_mut(self)
    }
    fn solver_ids(&self) -> &[String] {
        SelectionModel::solver_ids(self)
    }
    fn score_var(&self, g: &mut Graph, store: &ParamStore, inst: &RoutingInstance) -> Result<Var, ModelError> {
        SelectionModel::score_var(self, g, store, inst)
    }
    fn score_all(&self, insts: &[RoutingInstance]) -> Result<Vec<Vec<f64>>, ModelError> {
        SelectionModel::score_all(self, insts)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T = SelectionModel> {
    /// Parameters from the epoch with the lowest validation gap.
    pub model: T,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub steps: u64,
}

/// Mean greedy-selection gap of `model` over the given table rows.
pub(crate) fn greedy_gap<T: Trainable>(model: &T, table: &PerformanceTable, insts: &[RoutingInstance], rows: &[usize]) -> Result<f64, ModelError> {
    let scores = model.score_all(insts)?;
    let total: f64 = rows.iter().zip(&scores).map(|(&r, s)| table.gap(r, argmax(s))).sum();
    Ok(total / rows.len() as f64)
}

/// Adam over shuffled mini-batches. Each batch accumulates per-instance
/// gradients and averages them; the returned model is the best epoch by
/// validation greedy gap (earliest on ties).
pub fn train<T: Trainable>(
    init: T,
    train_set: &[RoutingInstance],
    val_set: &[RoutingInstance],
    table: &PerformanceTable,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>, TrainError> {
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(TrainError::Config("epochs and batch_size must be at least 1".into()));
    }
    if val_set.is_empty() {
        return Err(TrainError::Config("empty validation set".into()));
    }
    if init.solver_ids() != table.solver_ids() {
        return Err(ModelError::Config(format!(
            "model solvers {:?} differ from table columns {:?}",
            init.solver_ids(),
            table.solver_ids()
        ))
        .into());
    }
    let train_rows = table_rows(table, train_set)?;
    let val_rows = table_rows(table, val_set)?;

    let mut examples: Vec<(usize, Labels)> = Vec::with_capacity(train_set.len());
    for (k, &r) in train_rows.iter().enumerate() {
        let row: Vec<f64> = (0..table.n_solvers()).map(|s| table.objective(r, s)).collect();
        match build_labels(&row) {
            Ok(l) => examples.push((k, l)),
            Err(e) => warn!("excluding `{}` from training: {e}", train_set[k].id),
        }
    }
    if examples.is_empty() {
        return Err(TrainError::Config("no trainable instances".into()));
    }

    let mut model = init;
    let adam_cfg = AdamConfig { lr: cfg.lr, weight_decay: cfg.weight_decay, ..AdamConfig::default() };
    let mut adam = AdamState::new(model.params(), adam_cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = Gradients::zeros_like(model.params());
            for &e in chunk {
                let (k, labels) = &examples[e];
                let view;
                let inst = if cfg.augment {
                    view = SYMMETRIES[rng.gen_range(0..SYMMETRIES.len())].transform(&train_set[*k]);
                    &view
                } else {
                    &train_set[*k]
                };
                let mut g = Graph::new();
                let scores = model.score_var(&mut g, model.params(), inst)?;
                let loss = match cfg.loss {
                    LossKind::Classification => g.softmax_cross_entropy(scores, labels.best),
                    LossKind::Ranking => g.plackett_luce_nll(scores, &labels.ranking),
                }
                .map_err(ModelError::from)?;
                let value = g.value(loss).item();
                if !value.is_finite() {
                    return Err(TrainError::Diverged { epoch, batch, what: format!("loss {value} on `{}`", inst.id) });
                }
                loss_sum += value;
                g.backward(loss).map_err(ModelError::from)?;
                grads.accumulate(&g.param_grads(model.params()));
            }
            grads.scale(1.0 / chunk.len() as f64);
            adam.step(model.params_mut(), &grads)
                .map_err(|e| TrainError::Diverged { epoch, batch, what: e.to_string() })?;
            model.after_step()?;
        }
        let train_loss = loss_sum / examples.len() as f64;
        let val_gap = greedy_gap(&model, table, val_set, &val_rows)?;
        info!("epoch {epoch}: train loss {train_loss:.6}, validation gap {val_gap:.4}%");
        history.push(EpochRecord { epoch, train_loss, val_gap });
        if best.as_ref().map_or(true, |b| val_gap < b.0) {
            best = Some((val_gap, epoch, model.snapshot()));
        }
    }
    let (_, best_epoch, flat) = best.expect("at least one epoch");
    model.restore(&flat)?;
    Ok(TrainOutcome { model, history, best_epoch, steps: adam.steps() })
}

/// `epoch,train_loss,val_gap` rows with shortest round-trip floats.
pub fn write_history_csv<W: Write>(mut w: W, history: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(w, "epoch,train_loss,val_gap")?;
    for r in history {
        writeln!(w, "{},{},{}", r.epoch, r.train_loss, r.val_gap)?;
    }
    Ok(())
}
