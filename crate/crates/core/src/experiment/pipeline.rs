use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use crate::embed::{PairSelector, SolverFeature};
use crate::encoder::checkpoint::Checkpoint;
use crate::instance::{generate_dataset, load_dataset, save_dataset, RoutingInstance};
use crate::model::{fit_feature_norm, train, write_history_csv, FeatureSource, SelectionModel, TrainOutcome};
use crate::strategy::write_decisions_jsonl;
use crate::zoo::{build_performance_table, eliminate_zoo, PerformanceTable, SolverHandle};

use super::compare::{baseline_rows, compare_scored, portfolio_row, score_rows, write_sweep_csv};
use super::config::ExperimentConfig;
use super::report::{aggregate, emit_report, ReportRow};
use super::ExperimentError;

#[derive(Clone, Debug)]
pub struct Datasets {
    pub train: Vec<RoutingInstance>,
    pub val: Vec<RoutingInstance>,
    pub test: Vec<RoutingInstance>,
}

impl Datasets {
    pub fn all(&self) -> Vec<RoutingInstance> {
        self.train.iter().chain(&self.val).chain(&self.test).cloned().collect()
    }
}

fn stage<T>(name: &'static str, artifacts: &[&Path], f: impl FnOnce() -> Result<T, ExperimentError>) -> Result<T, ExperimentError> {
    info!("stage {name}");
    f().map_err(|e| ExperimentError::Stage {
        stage: name,
        artifacts: artifacts.iter().map(|p| p.to_path_buf()).collect(),
        source: Box::new(e),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| ExperimentError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, ExperimentError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    }
    fs::File::create(path).map(BufWriter::new).map_err(|e| ExperimentError::io(path, e))
}

fn rows_of(table: &PerformanceTable, insts: &[RoutingInstance]) -> Result<Vec<usize>, ExperimentError> {
    let index = table.row_index();
    insts
        .iter()
        .map(|i| index.get(i.id.as_str()).copied().ok_or_else(|| ExperimentError::Contract(format!("`{}` missing from the table", i.id))))
        .collect()
}

/// Generates (or reuses) the train / val / test splits under the data root.
/// Instances always come back from disk so reruns see identical values.
pub fn gen_data(cfg: &ExperimentConfig) -> Result<Datasets, ExperimentError> {
    let root = cfg.data_root().join(cfg.kind.as_str());
    stage("gen-data", &[&root], || {
        let gen = cfg.dataset.generator(cfg.kind);
        let d = &cfg.dataset;
        let load = |name: &str, first: u64, count: usize| -> Result<Vec<RoutingInstance>, ExperimentError> {
            let dir = root.join(name);
            if let Ok((man, insts)) = load_dataset(&dir) {
                if man.generator == gen && insts.len() == count && man.instances.first().map(|e| e.index) == Some(first) {
                    info!("reusing {}", dir.display());
                    return Ok(insts);
                }
            }
            let insts = generate_dataset(&gen, first, count)?;
            save_dataset(&dir, &gen, &insts)?;
            Ok(load_dataset(&dir)?.1)
        };
        Ok(Datasets {
            train: load("train", 0, d.train)?,
            val: load("val", d.train as u64, d.val)?,
            test: load("test", (d.train + d.val) as u64, d.test)?,
        })
    })
}

#[derive(Serialize, serde::Deserialize, PartialEq)]
struct ZooRecord {
    table_seed: u64,
    solvers: Vec<SolverHandle>,
}

/// Runs every zoo member on every instance, or reuses `table.jsonl` when it
/// was built from the same zoo, seed and instances.
pub fn run_zoo(cfg: &ExperimentConfig, data: &Datasets) -> Result<PerformanceTable, ExperimentError> {
    let table_path = cfg.out_dir.join("table.jsonl");
    let zoo_path = cfg.out_dir.join("zoo.json");
    stage("run-zoo", &[&table_path, &zoo_path], || {
        let record = ZooRecord { table_seed: cfg.zoo.table_seed, solvers: cfg.zoo()? };
        let all = data.all();
        let ids: Vec<&str> = all.iter().map(|i| i.id.as_str()).collect();
        let same_zoo = fs::read_to_string(&zoo_path)
            .ok()
            .and_then(|t| serde_json::from_str::<ZooRecord>(&t).ok())
            .is_some_and(|r| r == record);
        if same_zoo {
            if let Ok(t) = PerformanceTable::load(&table_path) {
                if t.instance_ids().iter().map(String::as_str).eq(ids.iter().copied()) {
                    info!("reusing {}", table_path.display());
                    return Ok(t);
                }
            }
        }
        let jobs = if cfg.jobs == 0 { rayon::current_num_threads() } else { cfg.jobs };
        let table = build_performance_table(&record.solvers, &all, jobs, cfg.zoo.table_seed, None)?;
        fs::create_dir_all(&cfg.out_dir).map_err(|e| ExperimentError::io(&cfg.out_dir, e))?;
        table.save(&table_path)?;
        write_json(&zoo_path, &record)?;
        Ok(PerformanceTable::load(&table_path)?)
    })
}

/// Drops low-contribution solvers (judged on the training rows) when
/// `zoo.eliminate` is set; otherwise returns the table unchanged.
pub fn eliminate_stage(cfg: &ExperimentConfig, table: &PerformanceTable, data: &Datasets) -> Result<PerformanceTable, ExperimentError> {
    if !cfg.zoo.eliminate {
        return Ok(table.clone());
    }
    let path = cfg.out_dir.join("elimination.json");
    stage("eliminate", &[&path], || {
        let report = eliminate_zoo(&table.select_rows(&rows_of(table, &data.train)?), cfg.zoo.delta)?;
        write_json(&path, &report)?;
        let cols: Vec<usize> = report.final_zoo.iter().map(|id| table.solver_index(id).expect("id from this table")).collect();
        info!("zoo after elimination: {:?}", report.final_zoo);
        Ok(table.select_solvers(&cols))
    })
}

/// Artifacts of one training seed.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub dir: PathBuf,
    pub outcome: TrainOutcome,
}

/// Trains the selection model with `seed` as both init and shuffle seed.
pub fn train_seed(cfg: &ExperimentConfig, seed: u64, data: &Datasets, table: &PerformanceTable) -> Result<SeedRun, ExperimentError> {
    let dir = cfg.out_dir.join(format!("seed-{seed}"));
    let ckpt = dir.join("model.ckpt");
    let history = dir.join("history.csv");
    stage("train", &[&ckpt, &history], || {
        let mut mcfg = cfg.model.clone();
        mcfg.init_seed = seed;
        let norm = match mcfg.features {
            FeatureSource::Manual => Some(fit_feature_norm(&data.train)?),
            FeatureSource::Neural => None,
        };
        let init = SelectionModel::new(&mcfg, cfg.kind, table.solver_ids().to_vec(), norm)?;
        let mut tcfg = cfg.train.clone();
        tcfg.seed = seed;
        let outcome = train(init, &data.train, &data.val, table, &tcfg)?;
        fs::create_dir_all(&dir).map_err(|e| ExperimentError::io(&dir, e))?;
        outcome.model.to_checkpoint().save(&ckpt)?;
        write_history_csv(create(&history)?, &outcome.history).map_err(|e| ExperimentError::io(&history, e))?;
        Ok(SeedRun { seed, dir: dir.clone(), outcome })
    })
}

/// Report rows for one trained model on the test split: each solver, the
/// single-best solver, the oracle, every configured strategy and the fixed
/// portfolios. Writes decisions, sweeps and the per-seed report into `dir`.
pub fn evaluate_seed(
    cfg: &ExperimentConfig,
    model: &SelectionModel,
    dir: &Path,
    data: &Datasets,
    table: &PerformanceTable,
) -> Result<Vec<ReportRow>, ExperimentError> {
    let decisions = dir.join("decisions.jsonl");
    let sweep = dir.join("sweep.csv");
    stage("evaluate", &[&decisions, &sweep, &dir.join("report.csv")], || {
        let timing = cfg.report.timing;
        let test_rows = rows_of(table, &data.test)?;
        let train_rows = rows_of(table, &data.train)?;
        let scored = score_rows(model, table, &data.test)?;
        let cmp = compare_scored(table, &scored, &cfg.strategies, timing, cfg.report.sweeps)?;
        let mut rows = baseline_rows(table, &test_rows, &train_rows, timing);
        rows.extend(cmp.rows);
        for &k in &cfg.report.portfolio_sizes {
            if k <= table.n_solvers() {
                rows.push(portfolio_row(table, &test_rows, k, timing)?);
            }
        }
        write_decisions_jsonl(create(&decisions)?, &cmp.decisions, table.solver_ids()).map_err(|e| ExperimentError::io(&decisions, e))?;
        if cfg.report.sweeps {
            write_sweep_csv(create(&sweep)?, &cmp.sweep)?;
        }
        emit_report(dir, "report", &rows)?;
        Ok(rows)
    })
}

/// Everything [`run_pipeline`] produced.
#[derive(Clone, Debug)]
pub struct PipelineSummary {
    pub per_seed: Vec<Vec<ReportRow>>,
    pub aggregate: Vec<ReportRow>,
    pub report_csv: PathBuf,
    pub report_json: PathBuf,
    pub table: PerformanceTable,
    pub data: Datasets,
    pub runs: Vec<SeedRun>,
}

pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineSummary, ExperimentError> {
    cfg.validate()?;
    let data = gen_data(cfg)?;
    let full = run_zoo(cfg, &data)?;
    let table = eliminate_stage(cfg, &full, &data)?;
    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let run = train_seed(cfg, seed, &data, &table)?;
        per_seed.push(evaluate_seed(cfg, &run.outcome.model, &run.dir, &data, &table)?);
        runs.push(run);
    }
    let agg = aggregate(&per_seed)?;
    let (report_csv, report_json) = stage("report", &[&cfg.out_dir], || emit_report(&cfg.out_dir, "report", &agg))?;
    Ok(PipelineSummary { per_seed, aggregate: agg, report_csv, report_json, table, data, runs })
}

/// Trains the pair-scoring selector on the training split and writes its
/// checkpoint and solver features.
pub fn embed_solvers(
    cfg: &ExperimentConfig,
    data: &Datasets,
    table: &PerformanceTable,
) -> Result<(PairSelector, Vec<SolverFeature>), ExperimentError> {
    let ckpt = cfg.out_dir.join("pair.ckpt");
    let features = cfg.out_dir.join("solver_features.json");
    stage("embed-solvers", &[&ckpt, &features], || {
        let train_table = table.select_rows(&rows_of(table, &data.train)?);
        let mut pcfg = cfg.pair.model.clone();
        pcfg.init_seed = cfg.seeds[0];
        let init = PairSelector::from_table(&pcfg, cfg.kind, &train_table, &data.train)?;
        let mut tcfg = cfg.pair.train.clone();
        tcfg.seed = cfg.seeds[0];
        let out = train(init, &data.train, &data.val, table, &tcfg)?;
        let feats = out.model.solver_features()?;
        fs::create_dir_all(&cfg.out_dir).map_err(|e| ExperimentError::io(&cfg.out_dir, e))?;
        out.model.to_checkpoint().save(&ckpt)?;
        write_json(&features, &feats)?;
        Ok((out.model, feats))
    })
}

/// Loads a checkpoint written by [`train_seed`].
pub fn load_model(path: &Path) -> Result<SelectionModel, ExperimentError> {
    Ok(SelectionModel::from_checkpoint(&Checkpoint::load(path)?)?)
}
