use cfkit::fm::fm_predict;
use cfkit::scsr::{csr_update_reference, scsr_iteration, ScsrConfig};
use cfkit::seeded_rng;
use cfkit::similarity::{compute_similarity, Axis, Measure};
use cfkit::synthetic::random_fm;
use rand::seq::index::sample;
use rand::Rng;

use crate::common::{csr_half_naive, max_abs_diff, pcc_centered_cosine, random_dense, square, to_matrix, transpose};
use crate::{ensure, lib, Verdict};

const FM_TOL: f64 = 1e-10;
const EXACT_TOL: f64 = 1e-12;

fn fm_fast_vs_pairwise() -> Result<f64, String> {
    let (p, k) = (60, 8);
    let fm = random_fm(p, k, 17);
    let mut rng = seeded_rng(18);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let nnz = rng.random_range(1..=15);
        let row: Vec<(usize, f64)> =
            sample(&mut rng, p, nnz).into_iter().map(|j| (j, rng.random_range(-2.0..2.0))).collect();
        let (cols, vals): (Vec<usize>, Vec<f64>) = row.iter().copied().unzip();
        let fast = lib(fm_predict(&fm, &cols, &vals))?;
        worst = worst.max((fast - crate::common::fm_pairwise(&fm, &row)).abs());
    }
    ensure!(worst <= FM_TOL, "fm fast form differs from pairwise sum by {worst:e}");
    Ok(worst)
}

fn scsr_vs_reference() -> Result<f64, String> {
    let d = random_dense(8, 6, 0.6, 21);
    let m = to_matrix(&d);
    let t = transpose(&d);
    let max_profile = d.iter().chain(&t).map(|r| r.iter().flatten().count()).max().unwrap_or(1);
    let cfg = ScsrConfig { sigma: max_profile, seed: 5, ..ScsrConfig::default() };
    let mut u = lib(compute_similarity(&m, Axis::User, Measure::Pcc))?;
    let mut v = lib(compute_similarity(&m, Axis::Item, Measure::Pcc))?;
    let (mut ur, mut vr) = (u.clone(), v.clone());
    let mut worst: f64 = 0.0;
    for it in 1..=cfg.max_iter {
        // the reference itself is checked against a dense brute-force oracle
        let u_naive = csr_half_naive(&d, &square(vr.values(), 6), &square(ur.values(), 8), cfg.alpha).concat();
        let v_naive =
            csr_half_naive(&transpose(&d), &square(ur.values(), 8), &square(vr.values(), 6), cfg.alpha).concat();
        (u, v) = lib(scsr_iteration(&m, &u, &v, &cfg, it))?;
        (ur, vr) = lib(csr_update_reference(&m, &ur, &vr, cfg.alpha))?;
        for diff in [
            max_abs_diff(u.values(), ur.values()),
            max_abs_diff(v.values(), vr.values()),
            max_abs_diff(ur.values(), &u_naive),
            max_abs_diff(vr.values(), &v_naive),
        ] {
            worst = worst.max(diff);
        }
        ensure!(worst <= EXACT_TOL, "iteration {it}: scsr/reference/oracle differ by {worst:e}");
    }
    Ok(worst)
}

fn pcc_vs_centered_cosine() -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let d = random_dense(30, 20, 0.35, 100 + seed);
        let m = to_matrix(&d);
        for (axis, rows) in [(Axis::User, d.clone()), (Axis::Item, transpose(&d))] {
            let s = lib(compute_similarity(&m, axis, Measure::Pcc))?;
            for a in 0..rows.len() {
                for b in 0..rows.len() {
                    if a != b {
                        worst = worst.max((s.get(a, b) - pcc_centered_cosine(&rows[a], &rows[b])).abs());
                    }
                }
            }
        }
    }
    ensure!(worst <= EXACT_TOL, "pcc differs from centered cosine by {worst:e}");
    Ok(worst)
}

pub fn run() -> Verdict {
    let fm = fm_fast_vs_pairwise()?;
    let scsr = scsr_vs_reference()?;
    let pcc = pcc_vs_centered_cosine()?;
    Ok(format!("fm max diff {fm:.1e} (1000 probes), scsr/csr max diff {scsr:.1e}, pcc max diff {pcc:.1e}"))
}
