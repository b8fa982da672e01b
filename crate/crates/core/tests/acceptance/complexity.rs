use std::time::Instant;

use cfkit::fm::{FeatureMatrix, FeatureSchema, GibbsConfig, GibbsSampler, Task};
use cfkit::scsr::{csr_update_reference, scsr_iteration, ScsrConfig};
use cfkit::seeded_rng;
use cfkit::similarity::{compute_similarity, Axis, Measure};
use rand::Rng;

use crate::common::{random_dense, to_matrix};
use crate::{ensure, lib, Verdict};

const GIBBS_DOUBLING_MAX: f64 = 2.5;
const SCSR_RATIO_MAX: f64 = 0.25;
const ROUNDS: usize = 9;
const SWEEPS: usize = 20;

fn seconds(f: &mut impl FnMut() -> Result<(), String>) -> Result<f64, String> {
    let t = Instant::now();
    f()?;
    Ok(t.elapsed().as_secs_f64())
}

/// Median over interleaved rounds of (time of `a`, time of `b`, b/a), so
/// background load hits both sides alike.
fn paired(
    mut a: impl FnMut() -> Result<(), String>,
    mut b: impl FnMut() -> Result<(), String>,
) -> Result<(f64, f64, f64), String> {
    let mut rounds = Vec::with_capacity(ROUNDS);
    for _ in 0..ROUNDS {
        let (ta, tb) = (seconds(&mut a)?, seconds(&mut b)?);
        rounds.push((ta, tb, tb / ta));
    }
    rounds.sort_by(|x, y| x.2.total_cmp(&y.2));
    Ok(rounds[ROUNDS / 2])
}

fn gibbs_rows(n: usize) -> FeatureMatrix {
    let (users, items) = (500, 400);
    let mut rng = seeded_rng(n as u64);
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|_| vec![(rng.random_range(0..users), 1.0), (users + rng.random_range(0..items), 1.0)])
        .collect();
    let targets = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
    let groups = (0..users).map(|_| 0).chain((0..items).map(|_| 1)).collect();
    FeatureMatrix::from_rows(rows, targets, users + items, groups, FeatureSchema::ui()).unwrap()
}

fn sweeps(sampler: &mut GibbsSampler) -> Result<(), String> {
    (0..SWEEPS).try_for_each(|_| lib(sampler.sweep()))
}

pub fn run() -> Verdict {
    let n = 10_000;
    let cfg = GibbsConfig { rank: 8, n_iter: SWEEPS, seed: 1, ..GibbsConfig::default() };
    let (small, large) = (gibbs_rows(n), gibbs_rows(2 * n));
    let mut s1 = lib(GibbsSampler::new(&small, &cfg, Task::Regression))?;
    let mut s2 = lib(GibbsSampler::new(&large, &cfg, Task::Regression))?;
    sweeps(&mut s1)?;
    sweeps(&mut s2)?;
    let (t1, t2, doubling) = paired(|| sweeps(&mut s1), || sweeps(&mut s2))?;
    ensure!(doubling <= GIBBS_DOUBLING_MAX, "doubling rows scaled sweep time by {doubling:.2}");

    let d = random_dense(200, 100, 0.5, 77);
    let m = to_matrix(&d);
    let u = lib(compute_similarity(&m, Axis::User, Measure::Pcc))?;
    let v = lib(compute_similarity(&m, Axis::Item, Measure::Pcc))?;
    let cfg = ScsrConfig { sigma: 15, ..ScsrConfig::default() };
    let (t_full, t_scsr, ratio) = paired(
        || lib(csr_update_reference(&m, &u, &v, cfg.alpha)).map(|_| ()),
        || lib(scsr_iteration(&m, &u, &v, &cfg, 1)).map(|_| ()),
    )?;
    ensure!(ratio <= SCSR_RATIO_MAX, "scsr iteration {t_scsr:.4}s vs full csr {t_full:.4}s, ratio {ratio:.3}");

    Ok(format!(
        "gibbs {SWEEPS} sweeps: {t1:.3}s at {n} rows, {t2:.3}s at {} rows (x{doubling:.2}); scsr {t_scsr:.4}s vs csr {t_full:.4}s (ratio {ratio:.3}); medians of {ROUNDS} rounds",
        2 * n
    ))
}
