//! Stacked blending: base-model predictions on a held-out split become the
//! regressors of a linear combiner.

use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{split_ratings, RatingMatrix};
use crate::error::{CfError, Result};
use crate::presets::Preset;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlendMethod {
    Ols,
    Ridge,
    Lasso,
}

impl FromStr for BlendMethod {
    type Err = CfError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" | "linear" => Ok(BlendMethod::Ols),
            "ridge" => Ok(BlendMethod::Ridge),
            "lasso" => Ok(BlendMethod::Lasso),
            other => Err(CfError::config(format!("unknown blend method `{other}`"))),
        }
    }
}

impl BlendMethod {
    /// Regularization strength used when none is given.
    pub fn default_alpha(self) -> f64 {
        match self {
            BlendMethod::Ols => 0.0,
            BlendMethod::Ridge => 0.01,
            BlendMethod::Lasso => 0.001,
        }
    }
}

/// Base-model predictions (one column per model) with the true ratings.
#[derive(Clone, Debug, PartialEq)]
pub struct BlendDataset {
    /// `columns[j][r]` = prediction of model `j` for row `r`.
    pub columns: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub model_names: Vec<String>,
    pub split_seed: u64,
}

impl BlendDataset {
    pub fn new(columns: Vec<Vec<f64>>, targets: Vec<f64>, model_names: Vec<String>, split_seed: u64) -> Result<Self> {
        if columns.len() != model_names.len() {
            return Err(CfError::Shape { expected: model_names.len(), got: columns.len() });
        }
        for c in &columns {
            if c.len() != targets.len() {
                return Err(CfError::Shape { expected: targets.len(), got: c.len() });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(CfError::numeric("blend feature contains a non-finite value"));
            }
        }
        Ok(BlendDataset { columns, targets, model_names, split_seed })
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_models(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[r]).collect()
    }

    /// CSV with the model names then `target` as header.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let mut header = self.model_names.join(",");
        if !header.is_empty() {
            header.push(',');
        }
        writeln!(w, "{header}target")?;
        for r in 0..self.n_rows() {
            for c in &self.columns {
                write!(w, "{},", c[r])?;
            }
            writeln!(w, "{}", self.targets[r])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(source: impl BufRead, split_seed: u64) -> Result<Self> {
        let mut lines = source.lines();
        let header = lines.next().ok_or_else(|| CfError::Parse { line: 1, msg: "empty blend file".into() })??;
        let mut names: Vec<String> = header.trim().split(',').map(str::to_owned).collect();
        if names.pop().as_deref() != Some("target") {
            return Err(CfError::Parse { line: 1, msg: "last column must be `target`".into() });
        }
        let mut columns = vec![Vec::new(); names.len()];
        let mut targets = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .trim()
                .split(',')
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| CfError::Parse { line: k + 2, msg: e.to_string() })?;
            if vals.len() != names.len() + 1 {
                return Err(CfError::Parse { line: k + 2, msg: format!("expected {} fields", names.len() + 1) });
            }
            for (c, v) in columns.iter_mut().zip(&vals) {
                c.push(*v);
            }
            targets.push(vals[names.len()]);
        }
        BlendDataset::new(columns, targets, names, split_seed)
    }
}

/// Fitted linear combiner `intercept + sum_j weight_j * prediction_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlendModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
    pub method: BlendMethod,
    pub alpha: f64,
}

pub fn blend_predict(b: &BlendModel, model_predictions: &[f64]) -> Result<f64> {
    if model_predictions.len() != b.weights.len() {
        return Err(CfError::Shape { expected: b.weights.len(), got: model_predictions.len() });
    }
    Ok(b.intercept + b.weights.iter().zip(model_predictions).map(|(w, x)| w * x).sum::<f64>())
}

impl BlendModel {
    pub fn predict_dataset(&self, d: &BlendDataset) -> Result<Vec<f64>> {
        (0..d.n_rows()).map(|r| blend_predict(self, &d.row(r))).collect()
    }
}

const LASSO_TOL: f64 = 1e-8;
const LASSO_MAX_SWEEPS: usize = 10_000;

/// Fits the combiner. The intercept is never penalized. Ridge minimizes
/// `|y - Xw|^2 + alpha |w|^2`; lasso minimizes
/// `|y - Xw|^2 / (2N) + alpha |w|_1` by coordinate descent.
pub fn fit_blender(d: &BlendDataset, method: BlendMethod, alpha: f64) -> Result<BlendModel> {
    let (n, p) = (d.n_rows(), d.n_models());
    if p == 0 {
        return Err(CfError::config("blending needs at least one model column"));
    }
    if n <= p {
        return Err(CfError::config(format!("blending needs more rows ({n}) than models ({p})")));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(CfError::config(format!("blend alpha {alpha} must be >= 0")));
    }
    let y_mean = d.targets.iter().sum::<f64>() / n as f64;
    let x_means: Vec<f64> = d.columns.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let xc = DMatrix::from_fn(n, p, |r, j| d.columns[j][r] - x_means[j]);
    let yc = DVector::from_fn(n, |r, _| d.targets[r] - y_mean);

    let weights: Vec<f64> = match method {
        BlendMethod::Ols => {
            let svd = xc.clone().svd(true, true);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if smin.is_nan() || smin <= smax * 1e-10 {
                return Err(CfError::numeric(
                    "rank-deficient blend design (collinear model columns); use ridge instead",
                ));
            }
            let w = svd.solve(&yc, 0.0).map_err(|e| CfError::numeric(e.to_string()))?;
            w.iter().copied().collect()
        }
        BlendMethod::Ridge => {
            let mut gram = xc.transpose() * &xc;
            for j in 0..p {
                gram[(j, j)] += alpha;
            }
            let rhs = xc.transpose() * &yc;
            let chol = gram.cholesky().ok_or_else(|| {
                CfError::numeric("singular ridge system; increase alpha")
            })?;
            chol.solve(&rhs).iter().copied().collect()
        }
        BlendMethod::Lasso => lasso_cd(&xc, &yc, alpha)?,
    };
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(CfError::numeric("blend weights are not finite"));
    }
    let intercept = y_mean - weights.iter().zip(&x_means).map(|(w, m)| w * m).sum::<f64>();
    Ok(BlendModel { intercept, weights, method, alpha })
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn lasso_cd(xc: &DMatrix<f64>, yc: &DVector<f64>, alpha: f64) -> Result<Vec<f64>> {
    let (n, p) = xc.shape();
    let norms: Vec<f64> = (0..p).map(|j| xc.column(j).norm_squared()).collect();
    let mut w = vec![0.0; p];
    let mut resid = yc.clone();
    let threshold = alpha * n as f64;
    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_step: f64 = 0.0;
        let mut max_w: f64 = 0.0;
        for j in 0..p {
            if norms[j] == 0.0 {
                continue;
            }
            let col = xc.column(j);
            let rho = col.dot(&resid) + norms[j] * w[j];
            let new = soft_threshold(rho, threshold) / norms[j];
            let delta = new - w[j];
            if delta != 0.0 {
                resid.axpy(-delta, &col, 1.0);
                w[j] = new;
            }
            max_step = max_step.max(delta.abs());
            max_w = max_w.max(new.abs());
        }
        if max_step <= LASSO_TOL * max_w.max(1.0) {
            return Ok(w);
        }
    }
    Err(CfError::numeric(format!("lasso did not converge in {LASSO_MAX_SWEEPS} sweeps")))
}

/// Base-model predictions on the held-out part of a split, plus optional
/// predictions on extra query pairs from the same fits.
#[derive(Clone, Debug)]
pub struct BlendRun {
    pub dataset: BlendDataset,
    /// `query_columns[j][q]` for every extra query pair.
    pub query_columns: Vec<Vec<f64>>,
}

/// Splits `m`, trains every preset on the training part and collects each
/// model's predictions on the held-out part as one column.
pub fn make_blend_dataset(m: &RatingMatrix, presets: &[Preset], fraction: f64, seed: u64) -> Result<BlendDataset> {
    Ok(make_blend_run(m, presets, fraction, seed, &[], false)?.dataset)
}

/// Like [`make_blend_dataset`], also predicting `queries`. With `refit`,
/// query predictions come from models retrained on all of `m`.
pub fn make_blend_run(
    m: &RatingMatrix,
    presets: &[Preset],
    fraction: f64,
    seed: u64,
    queries: &[(usize, usize)],
    refit: bool,
) -> Result<BlendRun> {
    if presets.is_empty() {
        return Err(CfError::config("blending needs at least one model preset"));
    }
    let split = split_ratings(m, fraction, seed)?;
    let held_out = split.validation.pairs();
    let outputs: Vec<(Vec<f64>, Vec<f64>)> = presets
        .par_iter()
        .map(|preset| {
            let wrap = |e| CfError::Model { model: preset.name().to_owned(), source: Box::new(e) };
            if refit {
                let val = preset.fit_predict(&split.train, &held_out).map_err(wrap)?;
                let q = if queries.is_empty() { Vec::new() } else { preset.fit_predict(m, queries).map_err(wrap)? };
                Ok((val, q))
            } else {
                let mut all = held_out.clone();
                all.extend_from_slice(queries);
                let mut preds = preset.fit_predict(&split.train, &all).map_err(wrap)?;
                let q = preds.split_off(held_out.len());
                Ok((preds, q))
            }
        })
        .collect::<Result<_>>()?;
    let (columns, query_columns): (Vec<_>, Vec<_>) = outputs.into_iter().unzip();
    let targets = split.validation.entries().iter().map(|e| e.value).collect();
    let names = presets.iter().map(|p| p.name().to_owned()).collect();
    let dataset = BlendDataset::new(columns, targets, names, seed)?;
    Ok(BlendRun { dataset, query_columns })
}
