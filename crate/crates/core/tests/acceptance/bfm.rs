use cfkit::data::rmse_values;
use cfkit::fm::{
    bfm_fit_ordered_probit, bfm_fit_regression, FeatureMatrix, FeatureSchema, GibbsConfig,
};
use cfkit::seeded_rng;
use cfkit::synthetic::random_fm;
use rand::seq::index::sample;
use rand_distr::{Distribution, Normal};

use crate::{ensure, lib, Verdict};

const N_USERS: usize = 100;
const N_ITEMS: usize = 80;
const N_ROWS: usize = 2000;
const N_TRAIN: usize = 1600;
const K: usize = 4;
const NOISE: f64 = 0.1;
const SWEEPS: usize = 300;

/// Worst held-out RMSE of this sampler over fixture seeds 1..=5 (0.1695), plus 50%.
const RECOVERY_BOUND: f64 = 0.2542;

struct Fixture {
    train: FeatureMatrix,
    test: FeatureMatrix,
    /// Noise-free predictions of the generating FM on the test rows.
    test_clean: Vec<f64>,
}

fn design(rows: &[(usize, usize)], targets: Vec<f64>) -> FeatureMatrix {
    let groups = (0..N_USERS).map(|_| 0).chain((0..N_ITEMS).map(|_| 1)).collect();
    let x = rows.iter().map(|&(u, i)| vec![(u, 1.0), (N_USERS + i, 1.0)]).collect();
    FeatureMatrix::from_rows(x, targets, N_USERS + N_ITEMS, groups, FeatureSchema::ui()).unwrap()
}

/// 2000 distinct (user, item) rows with targets from a random rank-4 FM
/// plus Gaussian noise; the first 1600 rows train, the rest test.
fn fixture(seed: u64, map: impl Fn(f64) -> f64) -> Fixture {
    let truth = random_fm(N_USERS + N_ITEMS, K, seed);
    let mut rng = seeded_rng(seed ^ 0x5eed);
    let cells: Vec<(usize, usize)> =
        sample(&mut rng, N_USERS * N_ITEMS, N_ROWS).into_iter().map(|c| (c / N_ITEMS, c % N_ITEMS)).collect();
    let noise = Normal::new(0.0, NOISE).unwrap();
    let clean: Vec<f64> =
        cells.iter().map(|&(u, i)| truth.predict(&[u, N_USERS + i], &[1.0, 1.0]).unwrap()).collect();
    let y: Vec<f64> = clean.iter().map(|&c| map(c + noise.sample(&mut rng))).collect();
    Fixture {
        train: design(&cells[..N_TRAIN], y[..N_TRAIN].to_vec()),
        test: design(&cells[N_TRAIN..], y[N_TRAIN..].to_vec()),
        test_clean: clean[N_TRAIN..].to_vec(),
    }
}

/// Held-out RMSE of the sampler and of the generating FM itself.
fn recovery(seed: u64) -> Result<(f64, f64), String> {
    let f = fixture(seed, |y| y);
    let cfg = GibbsConfig { rank: K, n_iter: SWEEPS, seed, ..GibbsConfig::default() };
    let out = lib(bfm_fit_regression(&f.train, &cfg, &f.test))?;
    Ok((rmse_values(&out.predictions, f.test.targets()), rmse_values(&f.test_clean, f.test.targets())))
}

fn ordered_probit(seed: u64) -> Result<String, String> {
    // categories from the quintiles of a reference sample of the latent FM
    let reference = fixture(seed, |y| y);
    let mut sorted: Vec<f64> = reference.train.targets().to_vec();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..5).map(|q| sorted[q * sorted.len() / 5]).collect();
    let f = fixture(seed, |y| 1.0 + cuts.iter().filter(|&&c| y > c).count() as f64);
    let cfg = GibbsConfig { rank: K, n_iter: 200, seed, ..GibbsConfig::default() };
    let out = lib(bfm_fit_ordered_probit(&f.train, &cfg, &f.test))?;
    ensure!(out.retained == 200 - cfg.burn_in(), "retained {} samples", out.retained);
    ensure!(out.cutpoint_samples.len() == out.retained, "missing cutpoint samples");
    for (s, c) in out.cutpoint_samples.iter().enumerate() {
        ensure!(c.windows(2).all(|w| w[0] < w[1]), "retained sample {s} has unordered cutpoints {c:?}");
    }
    for (r, p) in out.predictions.iter().enumerate() {
        ensure!((1.0..=5.0).contains(p), "ordered-probit prediction {p} for test row {r}");
    }
    let rmse = rmse_values(&out.predictions, f.test.targets());
    Ok(format!("ordered probit: {} ordered cutpoint samples, category rmse {rmse:.3}", out.retained))
}

pub fn run() -> Verdict {
    let (rmse, oracle) = recovery(0)?;
    ensure!(rmse <= RECOVERY_BOUND, "held-out rmse {rmse:.4} above bound {RECOVERY_BOUND}");
    let op = ordered_probit(1)?;
    Ok(format!("regression held-out rmse {rmse:.4} <= {RECOVERY_BOUND} (generating fm {oracle:.4}); {op}"))
}
