//! Synthetic rating data for tests, benchmarks and demos.

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::{Rating, RatingMatrix, MAX_RATING, MIN_RATING};
use crate::error::{CfError, Result};
use crate::fm::FmModel;
use crate::seeded_rng;

/// Low-rank-plus-noise rating generator.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub rank: usize,
    /// Fraction of cells observed.
    pub density: f64,
    /// Std of additive Gaussian noise.
    pub noise: f64,
    /// Round to the nearest star (1..5).
    pub integer: bool,
    pub seed: u64,
}

impl Default for LowRankSpec {
    fn default() -> Self {
        LowRankSpec { n_users: 100, n_items: 60, rank: 3, density: 0.3, noise: 0.1, integer: false, seed: 0 }
    }
}

/// Dense ground truth `3 + U V^T` scaled so entries have std ~0.8, with
/// `n_users * rank` and `rank * n_items` standard-normal factors.
pub fn low_rank_truth(n_users: usize, n_items: usize, rank: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded_rng(seed);
    let mut draw = |n: usize| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..rank).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    };
    let u = draw(n_users);
    let v = draw(n_items);
    let scale = 0.8 / (rank.max(1) as f64).sqrt();
    u.iter()
        .map(|ur| v.iter().map(|vr| 3.0 + scale * ur.iter().zip(vr).map(|(a, b)| a * b).sum::<f64>()).collect())
        .collect()
}

/// Every user and item keeps at least one rating when the density allows it.
pub fn random_mask(n_users: usize, n_items: usize, density: f64, seed: u64) -> Result<Vec<(usize, usize)>> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(CfError::config(format!("density {density} not in (0, 1]")));
    }
    let total = n_users * n_items;
    let want = ((density * total as f64).round() as usize).clamp(1, total.max(1));
    let mut rng = seeded_rng(seed);
    let mut cells: Vec<bool> = vec![false; total];
    for c in sample(&mut rng, total, want).into_iter() {
        cells[c] = true;
    }
    // guarantee coverage
    for u in 0..n_users {
        if !(0..n_items).any(|i| cells[u * n_items + i]) {
            cells[u * n_items + rng.random_range(0..n_items)] = true;
        }
    }
    for i in 0..n_items {
        if !(0..n_users).any(|u| cells[u * n_items + i]) {
            cells[rng.random_range(0..n_users) * n_items + i] = true;
        }
    }
    Ok((0..total).filter(|&c| cells[c]).map(|c| (c / n_items, c % n_items)).collect())
}

pub fn low_rank_ratings(spec: &LowRankSpec) -> Result<RatingMatrix> {
    if spec.rank == 0 || spec.n_users == 0 || spec.n_items == 0 {
        return Err(CfError::config("synthetic data needs rank, users and items >= 1"));
    }
    let truth = low_rank_truth(spec.n_users, spec.n_items, spec.rank, spec.seed);
    let mask = random_mask(spec.n_users, spec.n_items, spec.density, spec.seed.wrapping_add(1))?;
    let mut rng = seeded_rng(spec.seed.wrapping_add(2));
    let noise = Normal::new(0.0, spec.noise).map_err(|e| CfError::config(e.to_string()))?;
    let entries = mask
        .into_iter()
        .map(|(user, item)| {
            let mut value = (truth[user][item] + noise.sample(&mut rng)).clamp(MIN_RATING, MAX_RATING);
            if spec.integer {
                value = value.round();
            }
            Rating { user, item, value }
        })
        .collect();
    RatingMatrix::new(spec.n_users, spec.n_items, entries)
}

/// A random degree-2 FM: `w0 ~ N(0, 1)`, `w ~ N(0, 0.5^2)`, `V ~ N(0, 0.5^2)`.
pub fn random_fm(n_features: usize, k: usize, seed: u64) -> FmModel {
    let mut rng = seeded_rng(seed);
    let mut fm = FmModel::zeros(n_features, k);
    fm.w0 = StandardNormal.sample(&mut rng);
    let half = Normal::new(0.0, 0.5).expect("valid std");
    fm.w.iter_mut().for_each(|w| *w = half.sample(&mut rng));
    fm.v.iter_mut().for_each(|v| *v = half.sample(&mut rng));
    fm
}
