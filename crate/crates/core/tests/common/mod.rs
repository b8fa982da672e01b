//! Independent brute-force oracles and fixtures shared by integration tests.
#![allow(dead_code)]

use cfkit::data::{Rating, RatingMatrix};
use cfkit::fm::FmModel;
use cfkit::seeded_rng;
use rand::Rng;

/// Dense `n_users x n_items` grid, `None` where unobserved.
pub type Dense = Vec<Vec<Option<f64>>>;

/// Random integer ratings on a random mask; every row and column non-empty.
pub fn random_dense(n_users: usize, n_items: usize, density: f64, seed: u64) -> Dense {
    let mut rng = seeded_rng(seed);
    let mut d: Dense = (0..n_users)
        .map(|_| {
            (0..n_items)
                .map(|_| rng.random_bool(density).then(|| rng.random_range(1..=5) as f64))
                .collect()
        })
        .collect();
    for row in &mut d {
        if row.iter().all(Option::is_none) {
            let i = rng.random_range(0..n_items);
            row[i] = Some(rng.random_range(1..=5) as f64);
        }
    }
    for i in 0..n_items {
        if d.iter().all(|row| row[i].is_none()) {
            let u = rng.random_range(0..n_users);
            d[u][i] = Some(rng.random_range(1..=5) as f64);
        }
    }
    d
}

pub fn to_matrix(d: &Dense) -> RatingMatrix {
    let n_items = d.first().map_or(0, Vec::len);
    let entries = d
        .iter()
        .enumerate()
        .flat_map(|(user, row)| {
            row.iter().enumerate().filter_map(move |(item, v)| v.map(|value| Rating { user, item, value }))
        })
        .collect();
    RatingMatrix::new(d.len(), n_items, entries).unwrap()
}

pub fn transpose(d: &Dense) -> Dense {
    let n_items = d.first().map_or(0, Vec::len);
    (0..n_items).map(|i| d.iter().map(|row| row[i]).collect()).collect()
}

/// Textbook degree-2 FM: bias + linear + explicit double sum over pairs.
pub fn fm_pairwise(fm: &FmModel, row: &[(usize, f64)]) -> f64 {
    let mut y = fm.w0;
    for &(j, x) in row {
        y += fm.w[j] * x;
    }
    for a in 0..row.len() {
        for b in a + 1..row.len() {
            let (ja, xa) = row[a];
            let (jb, xb) = row[b];
            let dot: f64 = (0..fm.k).map(|f| fm.v[ja * fm.k + f] * fm.v[jb * fm.k + f]).sum();
            y += dot * xa * xb;
        }
    }
    y
}

/// Pearson correlation computed as the cosine of mean-centered vectors on
/// the common support; means over each full profile.
pub fn pcc_centered_cosine(a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    let mean = |v: &[Option<f64>]| {
        let obs: Vec<f64> = v.iter().flatten().copied().collect();
        obs.iter().sum::<f64>() / obs.len() as f64
    };
    let (ma, mb) = (mean(a), mean(b));
    let pairs: Vec<(f64, f64)> =
        a.iter().zip(b).filter_map(|(x, y)| Some((x.as_ref()? - ma, y.as_ref()? - mb))).collect();
    if pairs.is_empty() {
        return 0.0;
    }
    let dot: f64 = pairs.iter().map(|(x, y)| x * y).sum();
    let na: f64 = pairs.iter().map(|(x, _)| x * x).sum::<f64>().sqrt();
    let nb: f64 = pairs.iter().map(|(_, y)| y * y).sum::<f64>().sqrt();
    if na * nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// One full CSR half-step on dense matrices: for every pair a < b of rows
/// of `d`, average the counterpart similarities of all (p, q) with p rated
/// by a and q rated by b, weighted by `1 - 2|r_ap - r_bq|` on ratings
/// scaled to [0, 1], then damp by `alpha`.
pub fn csr_half_naive(d: &Dense, counterpart: &[Vec<f64>], prev: &[Vec<f64>], alpha: f64) -> Vec<Vec<f64>> {
    let n = d.len();
    let scale = |r: f64| (r - 1.0) / 4.0;
    let mut next = prev.to_vec();
    for a in 0..n {
        for b in a + 1..n {
            let (mut num, mut den) = (0.0, 0.0);
            for (p, ra) in d[a].iter().enumerate() {
                let Some(ra) = ra else { continue };
                for (q, rb) in d[b].iter().enumerate() {
                    let Some(rb) = rb else { continue };
                    let w = 1.0 - 2.0 * (scale(*ra) - scale(*rb)).abs();
                    num += w * counterpart[p][q];
                    den += w.abs();
                }
            }
            let v = if den > 0.0 { (1.0 - alpha) * prev[a][b] + alpha * num / den } else { prev[a][b] };
            next[a][b] = v;
            next[b][a] = v;
        }
    }
    next
}

pub fn square(values: &[f64], n: usize) -> Vec<Vec<f64>> {
    values.chunks(n).map(<[f64]>::to_vec).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
