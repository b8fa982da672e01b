//! Experiment orchestration behind the command line: configuration,
//! train/validate runs, rank sweeps, blending and submissions.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::blend::{fit_blender, make_blend_run, BlendDataset, BlendMethod, BlendModel};
use crate::data::{
    clip_rating, load_pairs, load_ratings, rmse_values, split_ratings, LoadOptions, PredictionSet, RatingMatrix,
};
use crate::error::{CfError, Result};
use crate::presets::{blend_preset, Preset};

/// Prefix of environment variables that override configuration keys,
/// e.g. `CFKIT_SEED=7`.
pub const ENV_PREFIX: &str = "CFKIT_";

/// Models of a rank sweep when none are configured.
pub const SWEEP_MODELS: [&str; 4] = ["svd", "als", "funksvd", "bfm-r-ui"];

const RUN_KEYS: &[&str] = &[
    "data",
    "seed",
    "split",
    "preset",
    "presets",
    "ranks",
    "sweep_models",
    "out_metrics",
    "out_submission",
    "out_model",
    "out_blend",
    "queries",
    "n_users",
    "n_items",
    "timing",
    "blend_method",
    "blend_alpha",
    "blend_split",
    "refit",
];

const MODEL_KEYS: &[&str] = &[
    "rank",
    "lambda",
    "iters",
    "eta",
    "alpha",
    "beta",
    "epochs",
    "init_std",
    "burn_in",
    "cutpoint_step",
    "alpha_0",
    "beta_0",
    "alpha_lambda",
    "beta_lambda",
    "mu_0",
    "gamma_0",
    "neighbors",
    "user_weight",
    "sigma",
    "max_iter",
    "epsilon",
];

/// Raw `key = value` settings, later sources overriding earlier ones.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigMap(BTreeMap<String, String>);

impl ConfigMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let key = key.trim().replace('-', "_");
        if !RUN_KEYS.contains(&key.as_str()) && !MODEL_KEYS.contains(&key.as_str()) {
            return Err(CfError::config(format!("unknown config key `{key}`")));
        }
        self.0.insert(key, value.into().trim().to_owned());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Parses a flat config file: `key = value` lines, `#` comments.
    pub fn merge_file_text(&mut self, text: &str) -> Result<()> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CfError::Parse { line: k + 1, msg: format!("expected key = value, got `{line}`") })?;
            self.set(key, value)
                .map_err(|e| CfError::Parse { line: k + 1, msg: e.to_string() })?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CfError::config(format!("cannot read config {}: {e}", path.display())))?;
        self.merge_file_text(&text)
    }

    /// Applies `CFKIT_<KEY>` variables from `vars`.
    pub fn merge_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        for (k, v) in vars {
            if let Some(key) = k.strip_prefix(ENV_PREFIX) {
                self.set(&key.to_ascii_lowercase(), v)
                    .map_err(|e| CfError::config(format!("environment variable {k}: {e}")))?;
            }
        }
        Ok(())
    }
}

fn parse_key<T: std::str::FromStr>(map: &ConfigMap, key: &str) -> Result<Option<T>> {
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|_| CfError::config(format!("invalid value `{v}` for `{key}`"))))
        .transpose()
}

fn parse_list(value: Option<&str>) -> Vec<String> {
    value
        .map(|v| v.split(';').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned).collect())
        .unwrap_or_default()
}

fn parse_ranks(value: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let bad = || CfError::config(format!("invalid rank `{part}`"));
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (usize, usize) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    Ok(out)
}

fn output_path(map: &ConfigMap, key: &str) -> Result<Option<PathBuf>> {
    let Some(p) = map.get(key) else { return Ok(None) };
    let path = PathBuf::from(p);
    let parent = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(CfError::config(format!("`{key}`: directory {} does not exist", parent.display())));
    }
    Ok(Some(path))
}

fn input_path(map: &ConfigMap, key: &str) -> Result<Option<PathBuf>> {
    let Some(p) = map.get(key) else { return Ok(None) };
    let path = PathBuf::from(p);
    if !path.is_file() {
        return Err(CfError::config(format!("`{key}`: file {} does not exist", path.display())));
    }
    Ok(Some(path))
}

/// Validated experiment settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data: PathBuf,
    pub seed: u64,
    /// Fraction of ratings used for training; the rest is validation.
    pub split: f64,
    pub preset: Option<String>,
    /// Presets for `evaluate` and `blend`, `;`-separated in config text.
    pub presets: Vec<String>,
    /// Hyperparameter overrides, applied to every preset that accepts the key.
    pub overrides: Vec<(String, String)>,
    pub ranks: Vec<usize>,
    pub sweep_models: Vec<String>,
    pub out_metrics: Option<PathBuf>,
    pub out_submission: Option<PathBuf>,
    pub out_model: Option<PathBuf>,
    pub out_blend: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub n_users: Option<usize>,
    pub n_items: Option<usize>,
    /// Record wall time; off writes 0 so metrics files compare bit-exactly.
    pub timing: bool,
    /// Overrides the method a blend preset carries; OLS for explicit preset lists.
    pub blend_method: Option<BlendMethod>,
    pub blend_alpha: Option<f64>,
    /// Fraction of the training part used to fit base models when blending.
    pub blend_split: f64,
    /// Retrain base models on the whole training part for final predictions.
    pub refit: bool,
}

impl ExperimentConfig {
    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        let data = input_path(map, "data")?.ok_or_else(|| CfError::config("missing `data`"))?;
        let split = parse_key(map, "split")?.unwrap_or(0.8);
        let blend_split = parse_key(map, "blend_split")?.unwrap_or(0.8);
        for (k, f) in [("split", split), ("blend_split", blend_split)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(CfError::config(format!("`{k}` = {f} not in (0, 1)")));
            }
        }
        let ranks = map.get("ranks").map(parse_ranks).transpose()?.unwrap_or_default();
        let mut sweep_models = parse_list(map.get("sweep_models"));
        if sweep_models.is_empty() {
            sweep_models = SWEEP_MODELS.iter().map(|s| s.to_string()).collect();
        }
        let overrides = map
            .0
            .iter()
            .filter(|(k, _)| MODEL_KEYS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(ExperimentConfig {
            data,
            seed: parse_key(map, "seed")?.unwrap_or(42),
            split,
            preset: map.get("preset").map(str::to_owned),
            presets: parse_list(map.get("presets")),
            overrides,
            ranks,
            sweep_models,
            out_metrics: output_path(map, "out_metrics")?,
            out_submission: output_path(map, "out_submission")?,
            out_model: output_path(map, "out_model")?,
            out_blend: output_path(map, "out_blend")?,
            queries: input_path(map, "queries")?,
            n_users: parse_key(map, "n_users")?,
            n_items: parse_key(map, "n_items")?,
            timing: parse_key(map, "timing")?.unwrap_or(true),
            blend_method: map.get("blend_method").map(str::parse).transpose()?,
            blend_alpha: parse_key(map, "blend_alpha")?,
            blend_split,
            refit: parse_key(map, "refit")?.unwrap_or(false),
        })
    }

    pub fn load_data(&self) -> Result<RatingMatrix> {
        let f = File::open(&self.data)?;
        let opts = LoadOptions { n_users: self.n_users, n_items: self.n_items, relaxed: false };
        load_ratings(BufReader::new(f), opts)
    }

    pub fn load_queries(&self) -> Result<Vec<(usize, usize)>> {
        match &self.queries {
            Some(p) => load_pairs(BufReader::new(File::open(p)?)),
            None => Ok(Vec::new()),
        }
    }

    /// Resolves `name`, applies the overrides it accepts and the run seed.
    pub fn resolve(&self, name: &str) -> Result<Preset> {
        let mut p = Preset::parse(name)?;
        for (k, v) in &self.overrides {
            if p.keys().contains(&k.as_str()) {
                p.set(k, v)?;
            }
        }
        p.set_seed(self.seed);
        Ok(p)
    }

    fn check_overrides(&self, presets: &[Preset]) -> Result<()> {
        for (k, _) in &self.overrides {
            if !presets.iter().any(|p| p.keys().contains(&k.as_str())) {
                return Err(CfError::config(format!("no selected preset takes parameter `{k}`")));
            }
        }
        Ok(())
    }

    fn main_preset(&self) -> Result<Preset> {
        let name = self.preset.as_deref().ok_or_else(|| CfError::config("missing `preset`"))?;
        let p = self.resolve(name)?;
        self.check_overrides(std::slice::from_ref(&p))?;
        Ok(p)
    }
}

/// One line of the metrics CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub model: String,
    pub rank: Option<usize>,
    pub seed: u64,
    pub train_rmse: f64,
    pub val_rmse: f64,
    pub seconds: f64,
}

pub const METRICS_HEADER: &str = "model,rank,seed,train_rmse,val_rmse,seconds";

impl fmt::Display for MetricsRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rank = self.rank.map(|r| r.to_string()).unwrap_or_default();
        let model = if self.model.contains(',') { format!("\"{}\"", self.model) } else { self.model.clone() };
        write!(f, "{model},{rank},{},{},{},{:.3}", self.seed, self.train_rmse, self.val_rmse, self.seconds)
    }
}

pub fn write_metrics(rows: &[MetricsRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_metrics_to(cfg: &ExperimentConfig, rows: &[MetricsRow]) -> Result<()> {
    if let Some(p) = &cfg.out_metrics {
        write_metrics(rows, create(p)?)?;
    }
    Ok(())
}

fn write_submission_to(path: &Path, pairs: &[(usize, usize)], values: &[f64]) -> Result<()> {
    let set = PredictionSet::from_values(pairs, values)?;
    crate::data::write_submission(&set, create(path)?)
}

fn clipped_rmse(pred: &[f64], truth: &RatingMatrix) -> f64 {
    let clipped: Vec<f64> = pred.iter().map(|&v| clip_rating(v)).collect();
    let values: Vec<f64> = truth.entries().iter().map(|e| e.value).collect();
    rmse_values(&clipped, &values)
}

struct Evaluation {
    row: MetricsRow,
    extra: Vec<f64>,
    model: Option<crate::factor::FactorModel>,
}

fn evaluate_preset(
    preset: &Preset,
    train: &RatingMatrix,
    val: &RatingMatrix,
    extra: &[(usize, usize)],
    cfg: &ExperimentConfig,
) -> Result<Evaluation> {
    let mut queries = train.pairs();
    queries.extend(val.pairs());
    queries.extend_from_slice(extra);
    let start = Instant::now();
    let (mut preds, model) = preset
        .fit_predict_full(train, &queries)
        .map_err(|e| CfError::Model { model: preset.name().to_owned(), source: Box::new(e) })?;
    let seconds = if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let extra_preds = preds.split_off(train.len() + val.len());
    let val_preds = preds.split_off(train.len());
    let row = MetricsRow {
        model: preset.name().to_owned(),
        rank: preset.rank(),
        seed: cfg.seed,
        train_rmse: clipped_rmse(&preds, train),
        val_rmse: clipped_rmse(&val_preds, val),
        seconds,
    };
    Ok(Evaluation { row, extra: extra_preds, model })
}

/// Trains the configured preset on the training split and scores both
/// splits. Writes the metrics row, the query submission (validation pairs
/// when no query file is set) and the factor model dump when requested.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsRow> {
    let preset = cfg.main_preset()?;
    if cfg.out_model.is_some() && !preset.is_factor_model() {
        return Err(CfError::config(format!("preset `{}` has no model dump format", preset.name())));
    }
    let m = cfg.load_data()?;
    let split = split_ratings(&m, cfg.split, cfg.seed)?;
    let mut extra = cfg.load_queries()?;
    if cfg.queries.is_none() && cfg.out_submission.is_some() {
        extra = split.validation.pairs();
    }
    let ev = evaluate_preset(&preset, &split.train, &split.validation, &extra, cfg)?;
    write_metrics_to(cfg, std::slice::from_ref(&ev.row))?;
    if let Some(p) = &cfg.out_submission {
        write_submission_to(p, &extra, &ev.extra)?;
    }
    if let (Some(p), Some(model)) = (&cfg.out_model, &ev.model) {
        model.save(create(p)?)?;
    }
    Ok(ev.row)
}

/// Scores every preset of `presets` (or the single `preset`) on one split.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    let names: Vec<String> = if cfg.presets.is_empty() {
        vec![cfg.preset.clone().ok_or_else(|| CfError::config("missing `preset` or `presets`"))?]
    } else {
        cfg.presets.clone()
    };
    let presets = names.iter().map(|n| cfg.resolve(n)).collect::<Result<Vec<_>>>()?;
    cfg.check_overrides(&presets)?;
    let m = cfg.load_data()?;
    let split = split_ratings(&m, cfg.split, cfg.seed)?;
    let rows = presets
        .iter()
        .map(|p| Ok(evaluate_preset(p, &split.train, &split.validation, &[], cfg)?.row))
        .collect::<Result<Vec<_>>>()?;
    write_metrics_to(cfg, &rows)?;
    Ok(rows)
}

/// One row per (model, rank) for the configured sweep models.
pub fn sweep_rank(cfg: &ExperimentConfig, ranks: &[usize]) -> Result<Vec<MetricsRow>> {
    if ranks.is_empty() {
        return Err(CfError::config("rank list is empty"));
    }
    let base = cfg.sweep_models.iter().map(|n| cfg.resolve(n)).collect::<Result<Vec<_>>>()?;
    if let Some(p) = base.iter().find(|p| p.rank().is_none()) {
        return Err(CfError::config(format!("sweep model `{}` has no rank", p.name())));
    }
    let m = cfg.load_data()?;
    let split = split_ratings(&m, cfg.split, cfg.seed)?;
    let mut rows = Vec::with_capacity(base.len() * ranks.len());
    for p in &base {
        for &k in ranks {
            let preset = p.clone().with_rank(k)?;
            rows.push(evaluate_preset(&preset, &split.train, &split.validation, &[], cfg)?.row);
        }
    }
    write_metrics_to(cfg, &rows)?;
    Ok(rows)
}

/// Outcome of a blending run.
#[derive(Clone, Debug)]
pub struct BlendReport {
    pub dataset: BlendDataset,
    pub model: BlendModel,
    /// Base models then the blend. `train_rmse` is measured on the rows the
    /// combiner was fit on, `val_rmse` on the held-back validation split.
    pub rows: Vec<MetricsRow>,
}

/// Splits off a validation part, builds the blend dataset from the rest,
/// fits the combiner and scores everything on the validation part.
pub fn run_blend(cfg: &ExperimentConfig) -> Result<BlendReport> {
    let (names, method): (Vec<String>, BlendMethod) = if !cfg.presets.is_empty() {
        (cfg.presets.clone(), cfg.blend_method.unwrap_or(BlendMethod::Ols))
    } else {
        let name = cfg.preset.as_deref().unwrap_or("blend-final");
        let (names, method) =
            blend_preset(name).ok_or_else(|| CfError::config(format!("unknown preset `{name}` for blending")))?;
        (names.into_iter().map(str::to_owned).collect(), cfg.blend_method.unwrap_or(method))
    };
    let alpha = cfg.blend_alpha.unwrap_or(method.default_alpha());
    let presets = names.iter().map(|n| cfg.resolve(n)).collect::<Result<Vec<_>>>()?;
    cfg.check_overrides(&presets)?;

    let m = cfg.load_data()?;
    let split = split_ratings(&m, cfg.split, cfg.seed)?;
    let extra = cfg.load_queries()?;
    let mut queries = split.validation.pairs();
    queries.extend_from_slice(&extra);
    let start = Instant::now();
    let run = make_blend_run(&split.train, &presets, cfg.blend_split, cfg.seed, &queries, cfg.refit)?;
    let model = fit_blender(&run.dataset, method, alpha)?;
    let seconds = if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 };

    let n_val = split.validation.len();
    let mut rows = Vec::with_capacity(presets.len() + 1);
    for (j, p) in presets.iter().enumerate() {
        rows.push(MetricsRow {
            model: p.name().to_owned(),
            rank: p.rank(),
            seed: cfg.seed,
            train_rmse: clipped_rmse(&run.dataset.columns[j], &blend_targets(&run.dataset)),
            val_rmse: clipped_rmse(&run.query_columns[j][..n_val], &split.validation),
            seconds: 0.0,
        });
    }
    let blend_rows: Vec<f64> = (0..queries.len())
        .map(|q| {
            let x: Vec<f64> = run.query_columns.iter().map(|c| c[q]).collect();
            crate::blend::blend_predict(&model, &x)
        })
        .collect::<Result<_>>()?;
    let fitted = model.predict_dataset(&run.dataset)?;
    rows.push(MetricsRow {
        model: format!("blend-{}", method_label(method)),
        rank: None,
        seed: cfg.seed,
        train_rmse: clipped_rmse(&fitted, &blend_targets(&run.dataset)),
        val_rmse: clipped_rmse(&blend_rows[..n_val], &split.validation),
        seconds,
    });
    write_metrics_to(cfg, &rows)?;
    if let Some(p) = &cfg.out_blend {
        run.dataset.write_csv(create(p)?)?;
    }
    if let Some(p) = &cfg.out_submission {
        let (pairs, values) = if extra.is_empty() {
            (&queries[..n_val], &blend_rows[..n_val])
        } else {
            (&queries[n_val..], &blend_rows[n_val..])
        };
        write_submission_to(p, pairs, values)?;
    }
    Ok(BlendReport { dataset: run.dataset, model, rows })
}

fn method_label(m: BlendMethod) -> &'static str {
    match m {
        BlendMethod::Ols => "ols",
        BlendMethod::Ridge => "ridge",
        BlendMethod::Lasso => "lasso",
    }
}

fn blend_targets(d: &BlendDataset) -> RatingMatrix {
    let entries = d
        .targets
        .iter()
        .enumerate()
        .map(|(k, &value)| crate::data::Rating { user: k, item: 0, value })
        .collect();
    RatingMatrix::new_unbounded(d.n_rows(), 1, entries).expect("one entry per row")
}

/// Trains on all ratings and predicts the query file.
pub fn run_predict(cfg: &ExperimentConfig) -> Result<PredictionSet> {
    let preset = cfg.main_preset()?;
    let queries = cfg.load_queries()?;
    if cfg.queries.is_none() {
        return Err(CfError::config("predict needs `queries`"));
    }
    let m = cfg.load_data()?;
    let (values, model) = preset
        .fit_predict_full(&m, &queries)
        .map_err(|e| CfError::Model { model: preset.name().to_owned(), source: Box::new(e) })?;
    let set = PredictionSet::from_values(&queries, &values)?;
    if let Some(p) = &cfg.out_submission {
        crate::data::write_submission(&set, create(p)?)?;
    }
    if let (Some(p), Some(model)) = (&cfg.out_model, &model) {
        model.save(create(p)?)?;
    }
    Ok(set)
}
