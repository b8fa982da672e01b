use cfkit::factor::{als_train, als_train_traced, funksvd_train_traced, AlsConfig, FunkConfig};
use cfkit::synthetic::{low_rank_ratings, LowRankSpec};

use crate::common::{random_dense, to_matrix};
use crate::{ensure, lib, Verdict};

const ALS_REL_TOL: f64 = 1e-9;
const EXACT_FIT_RMSE: f64 = 1e-6;

pub fn run() -> Verdict {
    let spec = LowRankSpec { n_users: 50, n_items: 30, rank: 3, density: 0.3, noise: 0.1, integer: false, seed: 8 };
    let m = lib(low_rank_ratings(&spec))?;

    let (_, objective) = lib(als_train_traced(&m, &AlsConfig { rank: 3, lambda: 0.1, iterations: 20 }))?;
    ensure!(objective.len() == 41, "expected 41 objective values, got {}", objective.len());
    for (t, w) in objective.windows(2).enumerate() {
        ensure!(w[1] <= w[0] * (1.0 + ALS_REL_TOL), "als objective rose at half-step {}: {} -> {}", t + 1, w[0], w[1]);
    }

    let cfg = FunkConfig { epochs: 100, seed: 3, ..FunkConfig::default() };
    let (_, rmse) = lib(funksvd_train_traced(&m, &cfg))?;
    let sampled: Vec<f64> = rmse.iter().step_by(10).copied().collect();
    for (t, w) in sampled.windows(2).enumerate() {
        ensure!(w[1] <= w[0], "funksvd rmse rose between epochs {} and {}: {} -> {}", 10 * t, 10 * t + 10, w[0], w[1]);
    }

    let full = to_matrix(&random_dense(12, 8, 1.0, 4));
    ensure!(full.len() == 96, "fully observed fixture has {} entries", full.len());
    let exact = lib(als_train(&full, &AlsConfig { rank: 8, lambda: 0.0, iterations: 20 }))?;
    let fit = exact.rmse_on(&full);
    ensure!(fit < EXACT_FIT_RMSE, "full-rank lambda=0 als rmse {fit:e}");

    Ok(format!(
        "als objective {:.4} -> {:.4} over 40 half-steps, funksvd rmse {:.4} -> {:.4}, full-rank als rmse {fit:.1e}",
        objective[0],
        objective[40],
        sampled[0],
        sampled[sampled.len() - 1]
    ))
}
