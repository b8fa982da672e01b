//! Latent-factor models: truncated SVD, ALS and FunkSVD.
//!
//! All three trainers work on column-normalized ratings and produce the same
//! [`FactorModel`]; a prediction is the denormalized inner product of a user
//! row and an item column.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::data::{normalize, NormalizationMode, NormalizationState, RatingMatrix};
use crate::error::{CfError, Result};
use crate::seeded_rng;

const EIGEN_TOLERANCE: f64 = 1e-10;
const EIGEN_MAX_ITER: usize = 1000;

/// User and item factors plus the normalization they were trained under.
///
/// Factors are stored row-major: `user_factors[u * k + f]` and
/// `item_factors[i * k + f]` (the item matrix is kept transposed).
#[derive(Clone, Debug, PartialEq)]
pub struct FactorModel {
    rank: usize,
    n_users: usize,
    n_items: usize,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
    norm: NormalizationState,
}

impl FactorModel {
    pub fn new(
        rank: usize,
        user_factors: Vec<f64>,
        item_factors: Vec<f64>,
        norm: NormalizationState,
    ) -> Result<Self> {
        if rank == 0 {
            return Err(CfError::config("rank must be at least 1"));
        }
        if !user_factors.len().is_multiple_of(rank) || !item_factors.len().is_multiple_of(rank) {
            return Err(CfError::Shape { expected: rank, got: user_factors.len() % rank });
        }
        let n_items = item_factors.len() / rank;
        if norm.n_items() != n_items {
            return Err(CfError::Shape { expected: n_items, got: norm.n_items() });
        }
        if user_factors.iter().chain(&item_factors).any(|v| !v.is_finite()) {
            return Err(CfError::numeric("non-finite factor entry"));
        }
        Ok(FactorModel {
            rank,
            n_users: user_factors.len() / rank,
            n_items,
            user_factors,
            item_factors,
            norm,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn normalization(&self) -> &NormalizationState {
        &self.norm
    }

    pub fn user_row(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.rank..(u + 1) * self.rank]
    }

    pub fn item_col(&self, i: usize) -> &[f64] {
        &self.item_factors[i * self.rank..(i + 1) * self.rank]
    }

    /// Inner product in normalized space.
    pub fn score(&self, u: usize, i: usize) -> f64 {
        dot(self.user_row(u), self.item_col(i))
    }

    /// Denormalized, unclipped rating estimate.
    pub fn predict(&self, u: usize, i: usize) -> Result<f64> {
        if u >= self.n_users || i >= self.n_items {
            return Err(CfError::key(format!(
                "({u}, {i}) outside {}x{} model",
                self.n_users, self.n_items
            )));
        }
        Ok(self.norm.denormalize(i, self.score(u, i)))
    }

    pub fn predict_pairs(&self, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        pairs.iter().map(|&(u, i)| self.predict(u, i)).collect()
    }

    /// Training RMSE in rating space over the observed entries of `m`.
    pub fn rmse_on(&self, m: &RatingMatrix) -> f64 {
        if m.is_empty() {
            return 0.0;
        }
        let sse: f64 = m
            .entries()
            .iter()
            .map(|e| {
                let d = self.norm.denormalize(e.item, self.score(e.user, e.item)) - e.value;
                d * d
            })
            .sum();
        (sse / m.len() as f64).sqrt()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// Serialization

const MAGIC: &[u8; 8] = b"CFKFACT\0";
const FORMAT_VERSION: u32 = 1;

impl FactorModel {
    /// Little-endian binary dump: magic, version, dims, normalization, factors.
    pub fn save(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        for n in [self.rank, self.n_users, self.n_items] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        let mode = match self.norm.mode {
            NormalizationMode::None => 0u8,
            NormalizationMode::Column => 1u8,
        };
        w.write_all(&[mode])?;
        w.write_all(&self.norm.global_mean.to_le_bytes())?;
        for v in self
            .norm
            .column_means
            .iter()
            .chain(&self.norm.column_stds)
            .chain(&self.user_factors)
            .chain(&self.item_factors)
        {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CfError::config("not a factor model dump (bad magic)"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(CfError::config(format!("unsupported model format version {version}")));
        }
        let read_u64 = |r: &mut dyn Read| -> Result<usize> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b) as usize)
        };
        let rank = read_u64(&mut r)?;
        let n_users = read_u64(&mut r)?;
        let n_items = read_u64(&mut r)?;
        let mut mode = [0u8; 1];
        r.read_exact(&mut mode)?;
        let mode = match mode[0] {
            0 => NormalizationMode::None,
            1 => NormalizationMode::Column,
            m => return Err(CfError::config(format!("unknown normalization mode {m}"))),
        };
        let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf)?;
            Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let global_mean = read_f64s(1)?[0];
        let column_means = read_f64s(n_items)?;
        let column_stds = read_f64s(n_items)?;
        let user_factors = read_f64s(n_users * rank)?;
        let item_factors = read_f64s(n_items * rank)?;
        let norm = NormalizationState { mode, column_means, column_stds, global_mean };
        FactorModel::new(rank, user_factors, item_factors, norm)
    }
}

// ---------------------------------------------------------------------------
// Truncated SVD

/// Rank-`k` truncated SVD of a dense matrix via the eigendecomposition of the
/// smaller Gram matrix. Returns (left n x k, singular values, right m x k).
pub fn truncated_svd(a: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (n, m) = a.shape();
    if k == 0 || k > n.min(m) {
        return Err(CfError::config(format!("rank {k} not in [1, {}]", n.min(m))));
    }
    let tall = n >= m;
    let gram = if tall { a.transpose() * a } else { a * a.transpose() };
    let eig = SymmetricEigen::try_new(gram, EIGEN_TOLERANCE, EIGEN_MAX_ITER)
        .ok_or_else(|| CfError::numeric("eigendecomposition did not converge"))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let sigma: Vec<f64> = order[..k].iter().map(|&j| eig.eigenvalues[j].max(0.0).sqrt()).collect();
    let basis = DMatrix::from_fn(eig.eigenvectors.nrows(), k, |r, c| eig.eigenvectors[(r, order[c])]);
    let other = if tall { a * &basis } else { a.transpose() * &basis };
    let cutoff = sigma[0] * 1e-13;
    let other = DMatrix::from_fn(other.nrows(), k, |r, c| {
        if sigma[c] > cutoff {
            other[(r, c)] / sigma[c]
        } else {
            0.0
        }
    });
    if tall {
        Ok((other, sigma, basis))
    } else {
        Ok((basis, sigma, other))
    }
}

/// Dense normalized matrix with unobserved entries imputed as 0.
fn dense_normalized(m: &RatingMatrix) -> Result<(DMatrix<f64>, NormalizationState)> {
    let (z, norm) = normalize(m)?;
    let mut a = DMatrix::zeros(m.n_users(), m.n_items());
    for e in z.entries() {
        a[(e.user, e.item)] = e.value;
    }
    Ok((a, norm))
}

/// SVD baseline: normalize column-wise, impute zeros, keep the top `k`
/// singular triplets and split each singular value as its square root into
/// both factors.
pub fn svd_baseline(m: &RatingMatrix, k: usize) -> Result<FactorModel> {
    let max_rank = m.n_users().min(m.n_items());
    if k == 0 || k > max_rank {
        return Err(CfError::config(format!("svd rank {k} not in [1, {max_rank}]")));
    }
    let (a, norm) = dense_normalized(m)?;
    let (left, sigma, right) = truncated_svd(&a, k)?;
    let roots: Vec<f64> = sigma.iter().map(|s| s.sqrt()).collect();
    let mut uf = vec![0.0; m.n_users() * k];
    let mut vf = vec![0.0; m.n_items() * k];
    for f in 0..k {
        for u in 0..m.n_users() {
            uf[u * k + f] = left[(u, f)] * roots[f];
        }
        for i in 0..m.n_items() {
            vf[i * k + f] = right[(i, f)] * roots[f];
        }
    }
    FactorModel::new(k, uf, vf, norm)
}

// ---------------------------------------------------------------------------
// ALS

#[derive(Clone, Debug, PartialEq)]
pub struct AlsConfig {
    pub rank: usize,
    pub lambda: f64,
    pub iterations: usize,
}

impl Default for AlsConfig {
    fn default() -> Self {
        AlsConfig { rank: 3, lambda: 0.1, iterations: 20 }
    }
}

impl AlsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(CfError::config("als rank must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(CfError::config(format!("als lambda {} must be >= 0", self.lambda)));
        }
        Ok(())
    }
}

/// Masked ALS objective in normalized space:
/// sum over observed (z - u.v)^2 + lambda (|U|^2 + |V|^2).
pub fn als_objective(z: &RatingMatrix, model: &FactorModel, lambda: f64) -> f64 {
    let data: f64 = z
        .entries()
        .iter()
        .map(|e| {
            let d = e.value - model.score(e.user, e.item);
            d * d
        })
        .sum();
    let reg: f64 = model.user_factors.iter().chain(&model.item_factors).map(|v| v * v).sum();
    data + lambda * reg
}

/// Solves the ridge normal equations for every row of one side.
/// `profile(a)` yields the observed counterpart ids and normalized values.
fn ridge_solve_side<'a, P>(
    n_rows: usize,
    rank: usize,
    lambda: f64,
    other: &[f64],
    profile: P,
    side: &str,
) -> Result<Vec<f64>>
where
    P: Fn(usize) -> (&'a [usize], &'a [f64]) + Sync,
{
    let rows: Vec<Vec<f64>> = (0..n_rows)
        .into_par_iter()
        .map(|a| {
            let (idx, vals) = profile(a);
            let mut gram = DMatrix::<f64>::zeros(rank, rank);
            let mut rhs = DVector::<f64>::zeros(rank);
            for (&b, &z) in idx.iter().zip(vals) {
                let v = &other[b * rank..(b + 1) * rank];
                for r in 0..rank {
                    rhs[r] += z * v[r];
                    for c in 0..=r {
                        gram[(r, c)] += v[r] * v[c];
                    }
                }
            }
            for r in 0..rank {
                for c in 0..r {
                    gram[(c, r)] = gram[(r, c)];
                }
                gram[(r, r)] += lambda;
            }
            let chol = gram.cholesky().ok_or_else(|| {
                CfError::numeric(format!(
                    "singular normal equations for {side} {a}; use lambda > 0"
                ))
            })?;
            Ok(chol.solve(&rhs).iter().copied().collect())
        })
        .collect::<Result<_>>()?;
    Ok(rows.concat())
}

/// ALS over observed entries, initialized from [`svd_baseline`].
pub fn als_train(m: &RatingMatrix, cfg: &AlsConfig) -> Result<FactorModel> {
    als_train_traced(m, cfg).map(|(model, _)| model)
}

/// Like [`als_train`], also returning the masked objective after the SVD
/// initialization and after every half-step (user solve, then item solve).
pub fn als_train_traced(m: &RatingMatrix, cfg: &AlsConfig) -> Result<(FactorModel, Vec<f64>)> {
    cfg.validate()?;
    let mut model = svd_baseline(m, cfg.rank)?;
    let z = m.map_values(|e| model.norm.normalize(e.item, e.value));
    let k = cfg.rank;
    let mut trace = vec![als_objective(&z, &model, cfg.lambda)];
    for _ in 0..cfg.iterations {
        model.user_factors = ridge_solve_side(
            m.n_users(),
            k,
            cfg.lambda,
            &model.item_factors,
            |u| z.user_profile(u),
            "user row",
        )?;
        trace.push(als_objective(&z, &model, cfg.lambda));
        model.item_factors = ridge_solve_side(
            m.n_items(),
            k,
            cfg.lambda,
            &model.user_factors,
            |i| z.item_profile(i),
            "item column",
        )?;
        trace.push(als_objective(&z, &model, cfg.lambda));
    }
    if model.user_factors.iter().chain(&model.item_factors).any(|v| !v.is_finite()) {
        return Err(CfError::numeric("als produced non-finite factors"));
    }
    Ok((model, trace))
}

// ---------------------------------------------------------------------------
// FunkSVD

#[derive(Clone, Debug, PartialEq)]
pub struct FunkConfig {
    pub rank: usize,
    /// Learning rate.
    pub eta: f64,
    /// L2 penalty on user rows.
    pub alpha: f64,
    /// L2 penalty on item columns.
    pub beta: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Std of the Gaussian initialization.
    pub init_std: f64,
}

impl Default for FunkConfig {
    fn default() -> Self {
        FunkConfig { rank: 3, eta: 1e-3, alpha: 5e-3, beta: 5e-3, epochs: 100, seed: 0, init_std: 0.1 }
    }
}

impl FunkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(CfError::config("funksvd rank must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(CfError::config(format!("funksvd eta {} must be > 0", self.eta)));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(CfError::config("funksvd alpha and beta must be >= 0"));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(CfError::config("funksvd init_std must be >= 0"));
        }
        Ok(())
    }
}

/// Per-entry loss minimized by one SGD step:
/// 0.5 (target - u.v)^2 + 0.5 alpha |u|^2 + 0.5 beta |v|^2.
pub fn funk_entry_loss(u: &[f64], v: &[f64], target: f64, alpha: f64, beta: f64) -> f64 {
    let e = target - dot(u, v);
    0.5 * e * e + 0.5 * alpha * dot(u, u) + 0.5 * beta * dot(v, v)
}

/// One SGD step on [`funk_entry_loss`]; both factors move along the gradient
/// evaluated at the pre-step point. Returns the pre-step residual.
#[inline]
pub fn funk_sgd_step(u: &mut [f64], v: &mut [f64], target: f64, eta: f64, alpha: f64, beta: f64) -> f64 {
    let e = target - dot(u, v);
    for (uf, vf) in u.iter_mut().zip(v.iter_mut()) {
        let (u0, v0) = (*uf, *vf);
        *uf += eta * (e * v0 - alpha * u0);
        *vf += eta * (e * u0 - beta * v0);
    }
    e
}

pub fn funksvd_train(m: &RatingMatrix, cfg: &FunkConfig) -> Result<FactorModel> {
    funksvd_train_traced(m, cfg).map(|(model, _)| model)
}

/// Like [`funksvd_train`], also returning the training RMSE (rating space)
/// before the first epoch and after each epoch.
pub fn funksvd_train_traced(m: &RatingMatrix, cfg: &FunkConfig) -> Result<(FactorModel, Vec<f64>)> {
    cfg.validate()?;
    let (z, norm) = normalize(m)?;
    let k = cfg.rank;
    let mut rng = seeded_rng(cfg.seed);
    let init = Normal::new(0.0, cfg.init_std).map_err(|e| CfError::config(e.to_string()))?;
    let user_factors: Vec<f64> = (0..m.n_users() * k).map(|_| init.sample(&mut rng)).collect();
    let item_factors: Vec<f64> = (0..m.n_items() * k).map(|_| init.sample(&mut rng)).collect();
    let mut model = FactorModel::new(k, user_factors, item_factors, norm)?;
    let mut trace = vec![model.rmse_on(m)];
    let mut order: Vec<usize> = (0..z.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            let e = z.entries()[idx];
            let (uf, vf) = (&mut model.user_factors, &mut model.item_factors);
            funk_sgd_step(
                &mut uf[e.user * k..(e.user + 1) * k],
                &mut vf[e.item * k..(e.item + 1) * k],
                e.value,
                cfg.eta,
                cfg.alpha,
                cfg.beta,
            );
        }
        let rmse = model.rmse_on(m);
        if !rmse.is_finite() {
            return Err(CfError::numeric(format!(
                "funksvd diverged at epoch {epoch}; try a smaller eta than {}",
                cfg.eta
            )));
        }
        trace.push(rmse);
    }
    Ok((model, trace))
}
