use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cfkit::data::write_submission;
use cfkit::experiment::{
    evaluate, run_blend, run_experiment, run_predict, sweep_rank, write_metrics, ConfigMap, ExperimentConfig,
};
use cfkit::synthetic::{low_rank_ratings, LowRankSpec};
use cfkit::Result;

/// Collaborative-filtering experiments: train, evaluate, sweep ranks, blend, predict.
#[derive(Parser)]
#[command(name = "cfkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one preset on the training split and report train/validation RMSE.
    Train(Common),
    /// Score several presets (`--presets a;b;c`) on the same split.
    Evaluate(Common),
    /// Validation RMSE of svd, als, funksvd and bfm-r-ui over a list of ranks.
    SweepRank(Common),
    /// Fit a linear blend of base presets on a held-out part of the training split.
    Blend(Common),
    /// Train on all ratings and write predictions for `--queries`.
    Predict(Common),
    /// Write a synthetic low-rank ratings file.
    Synth(SynthArgs),
}

#[derive(Args, Default)]
struct Common {
    /// Ratings file (`Id,Prediction` with `r<u>_c<i>` ids).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Flat `key = value` config file; flags and CFKIT_* variables override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Training fraction of the train/validation split.
    #[arg(long)]
    split: Option<f64>,
    /// Preset name, optionally with inline overrides (`als:rank=5`).
    #[arg(long)]
    preset: Option<String>,
    /// `;`-separated presets for evaluate and blend.
    #[arg(long)]
    presets: Option<String>,
    #[arg(long)]
    out_metrics: Option<PathBuf>,
    #[arg(long)]
    out_submission: Option<PathBuf>,
    /// Binary dump of a trained factor model (svd, als, funksvd).
    #[arg(long)]
    out_model: Option<PathBuf>,
    /// Blend dataset CSV.
    #[arg(long)]
    out_blend: Option<PathBuf>,
    /// Pairs to predict, in the ratings format (values ignored).
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Ranks for sweep-rank, e.g. `1..16` or `2,4,8`.
    #[arg(long)]
    ranks: Option<String>,
    /// Blend combiner: ols, ridge or lasso.
    #[arg(long)]
    method: Option<String>,
    /// Retrain base models on the whole training part before final blend predictions.
    #[arg(long)]
    refit: bool,
    /// Write 0 instead of wall time so metrics files are reproducible.
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    rank: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    neighbors: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    max_iter: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    /// Any other config key, repeatable: `--set burn_in=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn into_config(self) -> Result<ExperimentConfig> {
        let mut map = ConfigMap::new();
        if let Some(p) = &self.config {
            map.merge_file(p)?;
        }
        map.merge_env(std::env::vars())?;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.to_string_lossy().into_owned());
        let flags = [
            ("data", path(&self.data)),
            ("seed", self.seed.map(|s| s.to_string())),
            ("split", self.split.map(|s| s.to_string())),
            ("preset", self.preset),
            ("presets", self.presets),
            ("out_metrics", path(&self.out_metrics)),
            ("out_submission", path(&self.out_submission)),
            ("out_model", path(&self.out_model)),
            ("out_blend", path(&self.out_blend)),
            ("queries", path(&self.queries)),
            ("ranks", self.ranks),
            ("blend_method", self.method),
            ("refit", self.refit.then(|| "true".to_owned())),
            ("timing", self.no_timing.then(|| "false".to_owned())),
            ("rank", self.rank),
            ("lambda", self.lambda),
            ("iters", self.iters),
            ("eta", self.eta),
            ("epochs", self.epochs),
            ("neighbors", self.neighbors),
            ("alpha", self.alpha),
            ("sigma", self.sigma),
            ("max_iter", self.max_iter),
            ("epsilon", self.epsilon),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                map.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| cfkit::CfError::Config(format!("--set `{kv}` is not KEY=VALUE")))?;
            map.set(k, v)?;
        }
        ExperimentConfig::from_map(&map)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    users: usize,
    #[arg(long, default_value_t = 100)]
    items: usize,
    #[arg(long, default_value_t = 4)]
    rank: usize,
    #[arg(long, default_value_t = 0.2)]
    density: f64,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    /// Round ratings to whole stars.
    #[arg(long)]
    integer: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn print_rows(rows: &[cfkit::experiment::MetricsRow]) -> Result<()> {
    write_metrics(rows, io::stdout().lock())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => print_rows(&[run_experiment(&c.into_config()?)?]),
        Command::Evaluate(c) => print_rows(&evaluate(&c.into_config()?)?),
        Command::SweepRank(c) => {
            let cfg = c.into_config()?;
            print_rows(&sweep_rank(&cfg, &cfg.ranks)?)
        }
        Command::Blend(c) => {
            let report = run_blend(&c.into_config()?)?;
            print_rows(&report.rows)?;
            let w: Vec<String> = report.model.weights.iter().map(|w| w.to_string()).collect();
            eprintln!("intercept {} weights [{}]", report.model.intercept, w.join(", "));
            Ok(())
        }
        Command::Predict(c) => {
            let cfg = c.into_config()?;
            let set = run_predict(&cfg)?;
            if cfg.out_submission.is_none() {
                write_submission(&set, io::stdout().lock())?;
            }
            Ok(())
        }
        Command::Synth(s) => {
            let spec = LowRankSpec {
                n_users: s.users,
                n_items: s.items,
                rank: s.rank,
                density: s.density,
                noise: s.noise,
                integer: s.integer,
                seed: s.seed,
            };
            let m = low_rank_ratings(&spec)?;
            let mut w = BufWriter::new(File::create(&s.out)?);
            writeln!(w, "Id,Prediction")?;
            for e in m.entries() {
                writeln!(w, "r{}_c{},{}", e.user + 1, e.item + 1, e.value)?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
