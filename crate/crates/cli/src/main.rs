use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use zoosel::experiment::{
    aggregate, compare_scored, eliminate_stage, embed_solvers, emit_report, evaluate_seed, gen_data, load_model,
    portfolio_baseline, read_report_json, run_pipeline, run_zoo, score_rows, train_seed, write_sweep_csv,
    ExperimentConfig,
};
use zoosel::strategy::Strategy;
use zoosel::zoo::{eliminate_zoo, zoo_statistics, PerformanceTable};

#[derive(Parser)]
#[command(name = "zoosel", version, about = "Per-instance solver selection over a routing heuristic zoo")]
struct Cli {
    /// Experiment config (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run with this single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Strategy, repeatable: greedy | topk:K | reject:RATIO,K | topp:P
    #[arg(long, global = true)]
    strategy: Vec<Strategy>,
    /// Zoo file replacing the built-in zoo.
    #[arg(long, global = true)]
    zoo: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or reuse) the train / val / test splits.
    GenData,
    /// Build the performance table.
    RunZoo,
    /// Contribution-based zoo elimination on the training rows.
    Eliminate {
        /// Threshold in percentage points; defaults to `zoo.delta`.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Train one selection model per seed.
    Train,
    /// Evaluate trained models on the test split and write per-seed reports.
    Evaluate,
    /// Print strategy results for trained models and write sweep tables.
    Compare,
    /// Best fixed size-k portfolio on the test split.
    PortfolioBaseline {
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
    },
    /// Train the pair-scoring selector and export solver features.
    EmbedSolvers,
    /// Aggregate per-seed reports into `report.csv` / `report.json`.
    Report,
    /// Every stage, end to end.
    Run,
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    if !cli.strategy.is_empty() {
        cfg.strategies = cli.strategy.clone();
    }
    if let Some(z) = &cli.zoo {
        cfg.zoo.path = Some(z.clone());
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_rows(rows: &[zoosel::experiment::ReportRow]) {
    println!("{:<40} {:>10} {:>8} {:>10} {:>9}", "method", "gap %", "std", "time s", "acc %");
    for r in rows {
        let opt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |v| format!("{v:.p$}"));
        println!("{:<40} {:>10.4} {:>8.4} {:>10} {:>9}", r.method, r.gap_mean, r.gap_std, opt(r.time_s, 4), opt(r.accuracy, 1));
    }
}

fn table_for(cfg: &ExperimentConfig) -> Result<(zoosel::experiment::Datasets, PerformanceTable)> {
    let data = gen_data(cfg)?;
    let full = run_zoo(cfg, &data)?;
    let table = eliminate_stage(cfg, &full, &data)?;
    Ok((data, table))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = config(&cli)?;
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global().context("thread pool")?;
    }
    match &cli.command {
        Command::GenData => {
            let d = gen_data(&cfg)?;
            println!(
                "{} train / {} val / {} test instances under {}",
                d.train.len(),
                d.val.len(),
                d.test.len(),
                cfg.data_root().join(cfg.kind.as_str()).display()
            );
        }
        Command::RunZoo => {
            let data = gen_data(&cfg)?;
            let table = run_zoo(&cfg, &data)?;
            let stats = zoo_statistics(&table)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
        Command::Eliminate { delta } => {
            let data = gen_data(&cfg)?;
            let table = run_zoo(&cfg, &data)?;
            let index = table.row_index();
            let rows: Vec<usize> = data.train.iter().map(|i| index[i.id.as_str()]).collect();
            let report = eliminate_zoo(&table.select_rows(&rows), delta.unwrap_or(cfg.zoo.delta))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Train => {
            let (data, table) = table_for(&cfg)?;
            for &seed in &cfg.seeds {
                let run = train_seed(&cfg, seed, &data, &table)?;
                println!("seed {seed}: best epoch {} of {}, checkpoint {}", run.outcome.best_epoch, run.outcome.history.len(), run.dir.join("model.ckpt").display());
            }
        }
        Command::Evaluate => {
            let (data, table) = table_for(&cfg)?;
            for &seed in &cfg.seeds {
                let dir = cfg.out_dir.join(format!("seed-{seed}"));
                let model = load_model(&dir.join("model.ckpt"))?;
                println!("seed {seed}");
                print_rows(&evaluate_seed(&cfg, &model, &dir, &data, &table)?);
            }
        }
        Command::Compare => {
            let (data, table) = table_for(&cfg)?;
            for &seed in &cfg.seeds {
                let dir = cfg.out_dir.join(format!("seed-{seed}"));
                let model = load_model(&dir.join("model.ckpt"))?;
                let scored = score_rows(&model, &table, &data.test)?;
                let cmp = compare_scored(&table, &scored, &cfg.strategies, cfg.report.timing, true)?;
                println!("seed {seed}");
                print_rows(&cmp.rows);
                let path = dir.join("sweep.csv");
                write_sweep_csv(std::fs::File::create(&path).with_context(|| path.display().to_string())?, &cmp.sweep)?;
                println!("sweep written to {}", path.display());
            }
        }
        Command::PortfolioBaseline { k } => {
            let (data, table) = table_for(&cfg)?;
            let index = table.row_index();
            let rows: Vec<usize> = data.test.iter().map(|i| index[i.id.as_str()]).collect();
            let test = table.select_rows(&rows);
            let ks = if k.is_empty() { cfg.report.portfolio_sizes.clone() } else { k.clone() };
            for k in ks {
                let (subset, gap) = portfolio_baseline(&test, k)?;
                let names: Vec<&str> = subset.iter().map(|&s| table.solver_ids()[s].as_str()).collect();
                println!("k={k}: {} mean gap {gap:.4}%", names.join(" + "));
            }
        }
        Command::EmbedSolvers => {
            let (data, table) = table_for(&cfg)?;
            let (_, feats) = embed_solvers(&cfg, &data, &table)?;
            for f in feats {
                println!("{}: {} representatives", f.solver_id, f.representatives.len());
            }
        }
        Command::Report => {
            let per_seed = cfg
                .seeds
                .iter()
                .map(|s| read_report_json(&cfg.out_dir.join(format!("seed-{s}")).join("report.json")))
                .collect::<Result<Vec<_>, _>>()?;
            if per_seed.is_empty() {
                bail!("no per-seed reports");
            }
            let agg = aggregate(&per_seed)?;
            let (csv, json) = emit_report(&cfg.out_dir, "report", &agg)?;
            print_rows(&agg);
            println!("wrote {} and {}", csv.display(), json.display());
        }
        Command::Run => {
            let summary = run_pipeline(&cfg)?;
            print_rows(&summary.aggregate);
            println!("wrote {} and {}", summary.report_csv.display(), summary.report_json.display());
        }
    }
    Ok(())
}
