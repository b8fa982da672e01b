//! Named model configurations and a uniform fit-then-predict entry point.
//!
//! A preset string is a name optionally followed by inline overrides:
//! `bfm-r-ui:rank=8,iters=100`. Names:
//!
//! * `global-mean`, `svd`, `als`, `funksvd`
//! * `bfm-r-<schema>` and `bfm-op-<schema>` with schema `ui`, `uiiu`, `uiii`, `uiiuii`
//! * `<axis>-<measure>-<weighting>-<k|all>[-w<user weight>]`, e.g. `item-pcc-normal-60`
//!   or `both-pcc-normal-30-w0.06`; the weighting may be left out for `none`
//! * `scsr`
//! * numbered presets `(1)`..`(15)` (also `row1`..`row15`)

use std::fmt;

use crate::data::RatingMatrix;
use crate::error::{CfError, Result};
use crate::factor::{als_train, funksvd_train, svd_baseline, AlsConfig, FactorModel, FunkConfig};
use crate::fm::{bfm_fit_ordered_probit, bfm_fit_regression, FeatureBuilder, FeatureSchema, GibbsConfig, Task};
use crate::scsr::{scsr_train, ScsrConfig};
use crate::similarity::{
    apply_weighting, compute_similarity, predict_combined, Axis, Measure, Neighbors, NeighborhoodModel,
    SimilarityConfig, Weighting,
};

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    GlobalMean,
    Svd { rank: usize },
    Als(AlsConfig),
    FunkSvd(FunkConfig),
    Bfm { task: Task, schema: FeatureSchema, gibbs: GibbsConfig },
    Neighborhood(SimilarityConfig),
    /// Reinforces the similarity matrices of `init` (always both axes).
    Scsr { init: SimilarityConfig, cfg: ScsrConfig },
}

/// A resolved preset: its display name and full configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    name: String,
    pub spec: ModelSpec,
}

/// Numbered presets `(n)` and the named preset each one maps to.
pub const TABLE_ROWS: [(u32, &str); 15] = [
    (1, "item-pcc-normal-30"),
    (2, "item-pcc-normal-all"),
    (3, "item-pcc-none-30"),
    (4, "item-pcc-none-all"),
    (5, "both-pcc-normal-30-w0.06"),
    (6, "item-sigra-none-all"),
    (7, "both-cosine-normal-30-w0.5"),
    (8, "bfm-r-ui"),
    (9, "bfm-r-uiiu"),
    (10, "bfm-r-uiii"),
    (11, "bfm-r-uiiuii"),
    (12, "bfm-op-ui"),
    (13, "bfm-op-uiiu"),
    (14, "bfm-op-uiii"),
    (15, "bfm-op-uiiuii"),
];

/// Base models of the `blend-final` ensemble: rows (8)-(15) and (1)-(5).
pub const BLEND_FINAL: [&str; 13] = [
    "(8)", "(9)", "(10)", "(11)", "(12)", "(13)", "(14)", "(15)", "(1)", "(2)", "(3)", "(4)", "(5)",
];

fn table_row(label: &str) -> Option<Result<&'static str>> {
    let n = label
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .or_else(|| label.strip_prefix("row"))?
        .parse::<u32>()
        .ok()?;
    if n == 16 {
        return Some(Err(CfError::config("numbered preset (16) is a neural model and is not available")));
    }
    Some(TABLE_ROWS.iter().find(|(r, _)| *r == n).map(|(_, p)| *p).ok_or_else(|| {
        CfError::config(format!("unknown preset `{label}`"))
    }))
}

fn unknown(name: &str) -> CfError {
    CfError::config(format!("unknown preset `{name}`"))
}

fn parse_similarity(name: &str) -> Option<SimilarityConfig> {
    let mut parts: Vec<&str> = name.split('-').collect();
    let weight = match parts.last() {
        Some(p) if p.starts_with('w') && parts.len() > 3 => {
            let w = p[1..].parse::<f64>().ok()?;
            parts.pop();
            Some(w)
        }
        _ => None,
    };
    let (axis, measure, weighting, k) = match parts.as_slice() {
        [a, m, w, k] => (a, m, w.parse::<Weighting>().ok()?, k),
        [a, m, k] => (a, m, Weighting::None, k),
        _ => return None,
    };
    let axis: Axis = axis.parse().ok()?;
    let mut cfg = SimilarityConfig::new(axis, measure.parse().ok()?, weighting, k.parse().ok()?);
    if let Some(w) = weight {
        if axis != Axis::Both {
            return None;
        }
        cfg.user_weight = w;
    }
    Some(cfg)
}

fn resolve_name(name: &str) -> Result<ModelSpec> {
    if let Some(row) = table_row(name) {
        return resolve_name(row?);
    }
    let spec = match name {
        "global-mean" => ModelSpec::GlobalMean,
        "svd" => ModelSpec::Svd { rank: 5 },
        "als" => ModelSpec::Als(AlsConfig::default()),
        "funksvd" => ModelSpec::FunkSvd(FunkConfig::default()),
        "scsr" => ModelSpec::Scsr {
            init: SimilarityConfig::new(Axis::Both, Measure::Pcc, Weighting::Normal, Neighbors::All),
            cfg: ScsrConfig::default(),
        },
        _ => {
            let bfm = |rest: &str, task| -> Result<ModelSpec> {
                let schema = FeatureSchema::from_label(rest).map_err(|_| unknown(name))?;
                Ok(ModelSpec::Bfm { task, schema, gibbs: GibbsConfig::default() })
            };
            if let Some(rest) = name.strip_prefix("bfm-r-") {
                bfm(rest, Task::Regression)?
            } else if let Some(rest) = name.strip_prefix("bfm-op-") {
                bfm(rest, Task::OrderedProbit)?
            } else {
                ModelSpec::Neighborhood(parse_similarity(name).ok_or_else(|| unknown(name))?)
            }
        }
    };
    Ok(spec)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| CfError::config(format!("invalid value `{value}` for `{key}`")))
}

impl Preset {
    /// Resolves `name[:key=value,...]`.
    pub fn parse(text: &str) -> Result<Self> {
        let (name, overrides) = match text.split_once(':') {
            Some((n, o)) => (n.trim(), Some(o)),
            None => (text.trim(), None),
        };
        let mut preset = Preset { name: text.trim().to_owned(), spec: resolve_name(name)? };
        for kv in overrides.into_iter().flat_map(|o| o.split(',')).filter(|s| !s.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CfError::config(format!("override `{kv}` is not key=value")))?;
            preset.set(k.trim(), v.trim())?;
        }
        Ok(preset)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rename(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Keys accepted by [`Preset::set`] for this model.
    pub fn keys(&self) -> &'static [&'static str] {
        match &self.spec {
            ModelSpec::GlobalMean => &[],
            ModelSpec::Svd { .. } => &["rank"],
            ModelSpec::Als(_) => &["rank", "lambda", "iters"],
            ModelSpec::FunkSvd(_) => &["rank", "eta", "lambda", "alpha", "beta", "epochs", "init_std"],
            ModelSpec::Bfm { .. } => &[
                "rank", "iters", "burn_in", "init_std", "cutpoint_step", "alpha_0", "beta_0", "alpha_lambda",
                "beta_lambda", "mu_0", "gamma_0",
            ],
            ModelSpec::Neighborhood(_) => &["neighbors", "beta", "user_weight"],
            ModelSpec::Scsr { .. } => &["alpha", "sigma", "max_iter", "epsilon", "neighbors", "user_weight"],
        }
    }

    /// Applies one hyperparameter override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !self.keys().contains(&key) {
            return Err(CfError::config(format!("preset `{}` has no parameter `{key}`", self.name)));
        }
        match &mut self.spec {
            ModelSpec::GlobalMean => unreachable!(),
            ModelSpec::Svd { rank } => *rank = parse_num(key, value)?,
            ModelSpec::Als(c) => match key {
                "rank" => c.rank = parse_num(key, value)?,
                "lambda" => c.lambda = parse_num(key, value)?,
                _ => c.iterations = parse_num(key, value)?,
            },
            ModelSpec::FunkSvd(c) => match key {
                "rank" => c.rank = parse_num(key, value)?,
                "eta" => c.eta = parse_num(key, value)?,
                "lambda" => {
                    c.alpha = parse_num(key, value)?;
                    c.beta = c.alpha;
                }
                "alpha" => c.alpha = parse_num(key, value)?,
                "beta" => c.beta = parse_num(key, value)?,
                "epochs" => c.epochs = parse_num(key, value)?,
                _ => c.init_std = parse_num(key, value)?,
            },
            ModelSpec::Bfm { gibbs, .. } => {
                let h = &mut gibbs.hyper;
                match key {
                    "rank" => gibbs.rank = parse_num(key, value)?,
                    "iters" => gibbs.n_iter = parse_num(key, value)?,
                    "burn_in" => gibbs.burn_in = Some(parse_num(key, value)?),
                    "init_std" => gibbs.init_std = parse_num(key, value)?,
                    "cutpoint_step" => gibbs.cutpoint_step = parse_num(key, value)?,
                    "alpha_0" => h.alpha_0 = parse_num(key, value)?,
                    "beta_0" => h.beta_0 = parse_num(key, value)?,
                    "alpha_lambda" => h.alpha_lambda = parse_num(key, value)?,
                    "beta_lambda" => h.beta_lambda = parse_num(key, value)?,
                    "mu_0" => h.mu_0 = parse_num(key, value)?,
                    _ => h.gamma_0 = parse_num(key, value)?,
                }
            }
            ModelSpec::Neighborhood(c) => match key {
                "neighbors" => c.k_neighbors = value.parse()?,
                "beta" => c.beta = parse_num(key, value)?,
                _ => c.user_weight = parse_num(key, value)?,
            },
            ModelSpec::Scsr { init, cfg } => match key {
                "alpha" => cfg.alpha = parse_num(key, value)?,
                "sigma" => cfg.sigma = parse_num(key, value)?,
                "max_iter" => cfg.max_iter = parse_num(key, value)?,
                "epsilon" => cfg.epsilon = parse_num(key, value)?,
                "neighbors" => init.k_neighbors = value.parse()?,
                _ => init.user_weight = parse_num(key, value)?,
            },
        }
        Ok(())
    }

    pub fn rank(&self) -> Option<usize> {
        match &self.spec {
            ModelSpec::Svd { rank } => Some(*rank),
            ModelSpec::Als(c) => Some(c.rank),
            ModelSpec::FunkSvd(c) => Some(c.rank),
            ModelSpec::Bfm { gibbs, .. } => Some(gibbs.rank),
            _ => None,
        }
    }

    pub fn with_rank(mut self, rank: usize) -> Result<Self> {
        if self.rank().is_none() {
            return Err(CfError::config(format!("preset `{}` has no rank", self.name)));
        }
        self.set("rank", &rank.to_string())?;
        Ok(self)
    }

    /// Seeds every stochastic component.
    pub fn set_seed(&mut self, seed: u64) {
        match &mut self.spec {
            ModelSpec::FunkSvd(c) => c.seed = seed,
            ModelSpec::Bfm { gibbs, .. } => gibbs.seed = seed,
            ModelSpec::Scsr { cfg, .. } => cfg.seed = seed,
            _ => {}
        }
    }

    pub fn is_factor_model(&self) -> bool {
        matches!(self.spec, ModelSpec::Svd { .. } | ModelSpec::Als(_) | ModelSpec::FunkSvd(_))
    }

    /// Trains a latent-factor preset.
    pub fn fit_factor(&self, train: &RatingMatrix) -> Result<FactorModel> {
        match &self.spec {
            ModelSpec::Svd { rank } => svd_baseline(train, *rank),
            ModelSpec::Als(c) => als_train(train, c),
            ModelSpec::FunkSvd(c) => funksvd_train(train, c),
            _ => Err(CfError::config(format!("preset `{}` is not a factor model", self.name))),
        }
    }

    /// Trains on `train` and returns raw (unclipped) predictions for `queries`.
    pub fn fit_predict(&self, train: &RatingMatrix, queries: &[(usize, usize)]) -> Result<Vec<f64>> {
        Ok(self.fit_predict_full(train, queries)?.0)
    }

    /// Like [`Preset::fit_predict`], also handing back the factor model when
    /// there is one.
    pub fn fit_predict_full(
        &self,
        train: &RatingMatrix,
        queries: &[(usize, usize)],
    ) -> Result<(Vec<f64>, Option<FactorModel>)> {
        if let Some(&(u, i)) = queries.iter().find(|&&(u, i)| u >= train.n_users() || i >= train.n_items()) {
            return Err(CfError::key(format!("query ({u}, {i}) outside the rating matrix")));
        }
        match &self.spec {
            ModelSpec::GlobalMean => Ok((vec![train.global_mean(); queries.len()], None)),
            ModelSpec::Svd { .. } | ModelSpec::Als(_) | ModelSpec::FunkSvd(_) => {
                let model = self.fit_factor(train)?;
                Ok((model.predict_pairs(queries)?, Some(model)))
            }
            ModelSpec::Bfm { task, schema, gibbs } => {
                let builder = FeatureBuilder::new(train, schema);
                let train_rows = builder.training();
                let query_rows = builder.query(queries)?;
                let out = match task {
                    Task::Regression => bfm_fit_regression(&train_rows, gibbs, &query_rows)?,
                    Task::OrderedProbit => bfm_fit_ordered_probit(&train_rows, gibbs, &query_rows)?,
                };
                Ok((out.predictions, None))
            }
            ModelSpec::Neighborhood(cfg) => {
                let model = NeighborhoodModel::fit(train, cfg)?;
                Ok((model.predict_pairs(train, queries)?, None))
            }
            ModelSpec::Scsr { init, cfg } => {
                init.validate()?;
                let initial = |axis| apply_weighting(&compute_similarity(train, axis, init.measure)?, init);
                let reinforced = scsr_train(train, &initial(Axis::User)?, &initial(Axis::Item)?, cfg)?;
                let (su, si) = (&reinforced.user_sim, &reinforced.item_sim);
                let preds = queries
                    .iter()
                    .map(|&(u, i)| predict_combined(train, su, si, u, i, init.k_neighbors, init.user_weight))
                    .collect();
                Ok((preds, None))
            }
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Blend presets: `blend-final` (OLS), `blend-final-ridge`, `blend-final-lasso`.
pub fn blend_preset(name: &str) -> Option<(Vec<&'static str>, crate::blend::BlendMethod)> {
    use crate::blend::BlendMethod;
    let method = match name {
        "blend-final" => BlendMethod::Ols,
        "blend-final-ridge" => BlendMethod::Ridge,
        "blend-final-lasso" => BlendMethod::Lasso,
        _ => return None,
    };
    Some((BLEND_FINAL.to_vec(), method))
}
