//! Comprehensive similarity reinforcement (CSR) and its stochastic variant.
//!
//! Each iteration refreshes every off-diagonal user similarity from the item
//! similarities of the two users' rated items, weighted by how closely their
//! ratings agree, and then every item similarity from the user similarities
//! symmetrically. Both halves read only the previous iteration's matrices.
//!
//! The stochastic variant replaces each profile by a random subset of at
//! most `sigma` entries, so one pair update costs O(sigma^2) instead of
//! O(|I_a| |I_b|).

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::data::RatingMatrix;
use crate::error::{CfError, Result};
use crate::similarity::SimilarityMatrix;
use crate::{mix_seed, seeded_rng};

#[derive(Clone, Debug, PartialEq)]
pub struct ScsrConfig {
    /// Damping: 0 keeps the previous matrix, 1 replaces it.
    pub alpha: f64,
    pub max_iter: usize,
    /// Frobenius-norm change below which both matrices count as converged.
    pub epsilon: f64,
    /// Profile sample size per pair.
    pub sigma: usize,
    pub seed: u64,
}

impl Default for ScsrConfig {
    fn default() -> Self {
        ScsrConfig { alpha: 0.5, max_iter: 15, epsilon: 1e-4, sigma: 15, seed: 0 }
    }
}

impl ScsrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(CfError::config(format!("scsr alpha {} not in [0, 1]", self.alpha)));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(CfError::config("scsr epsilon must be > 0"));
        }
        if self.sigma == 0 {
            return Err(CfError::config("scsr sigma must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ReinforcedSimilarities {
    pub user_sim: SimilarityMatrix,
    pub item_sim: SimilarityMatrix,
    pub iterations_run: usize,
    pub converged: bool,
    /// (user, item) Frobenius deltas of every iteration.
    pub deltas: Vec<(f64, f64)>,
}

/// Rating agreement weight `1 - 2|r1 - r2|` for ratings scaled to [0, 1].
#[inline]
pub fn pair_weight(r1: f64, r2: f64) -> f64 {
    1.0 - 2.0 * (r1 - r2).abs()
}

/// Maps a 1..5 rating onto [0, 1].
#[inline]
pub fn unit_rating(r: f64) -> f64 {
    (r - 1.0) / 4.0
}

fn check_shapes(r: &RatingMatrix, users: &SimilarityMatrix, items: &SimilarityMatrix) -> Result<()> {
    if users.len() != r.n_users() {
        return Err(CfError::Shape { expected: r.n_users(), got: users.len() });
    }
    if items.len() != r.n_items() {
        return Err(CfError::Shape { expected: r.n_items(), got: items.len() });
    }
    Ok(())
}

type Profile<'a> = (&'a [usize], &'a [f64]);

fn mirror(n: usize, prev: &[f64], upper: Vec<Vec<f64>>) -> Vec<f64> {
    let mut out = prev.to_vec();
    for (a, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let b = a + 1 + off;
            out[a * n + b] = v;
            out[b * n + a] = v;
        }
    }
    out
}

#[inline]
fn damped(old: f64, num: f64, den: f64, alpha: f64) -> f64 {
    if den > 0.0 {
        (1.0 - alpha) * old + alpha * num / den
    } else {
        old
    }
}

/// Full-profile half step: every pair (a, b) uses all of `I_a x I_b`.
fn full_half(profiles: &[Profile], counterpart: &SimilarityMatrix, prev: &[f64], alpha: f64) -> Vec<f64> {
    let n = profiles.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let (ia, ra) = profiles[a];
            (a + 1..n)
                .map(|b| {
                    let (ib, rb) = profiles[b];
                    let (mut num, mut den) = (0.0, 0.0);
                    for (&p, &rp) in ia.iter().zip(ra) {
                        for (&q, &rq) in ib.iter().zip(rb) {
                            let w = pair_weight(rp, rq);
                            num += w * counterpart.get(p, q);
                            den += w.abs();
                        }
                    }
                    damped(prev[a * n + b], num, den, alpha)
                })
                .collect()
        })
        .collect();
    mirror(n, prev, upper)
}

/// Exact CSR update of both matrices (no sampling).
pub fn csr_update_reference(
    r: &RatingMatrix,
    users: &SimilarityMatrix,
    items: &SimilarityMatrix,
    alpha: f64,
) -> Result<(SimilarityMatrix, SimilarityMatrix)> {
    check_shapes(r, users, items)?;
    let unit = r.map_values(|e| unit_rating(e.value));
    let user_profiles: Vec<Profile> = (0..unit.n_users()).map(|u| unit.user_profile(u)).collect();
    let item_profiles: Vec<Profile> = (0..unit.n_items()).map(|i| unit.item_profile(i)).collect();
    let u_next = full_half(&user_profiles, items, users.values(), alpha);
    let v_next = full_half(&item_profiles, users, items.values(), alpha);
    Ok((users.with_values(u_next)?, items.with_values(v_next)?))
}

fn draw(profile: Profile, sigma: usize, rng: &mut crate::Rng, buf: &mut Vec<(usize, f64)>) {
    buf.clear();
    let (ids, vals) = profile;
    if ids.len() <= sigma {
        buf.extend(ids.iter().copied().zip(vals.iter().copied()));
    } else {
        buf.extend(sample(rng, ids.len(), sigma).into_iter().map(|k| (ids[k], vals[k])));
    }
}

fn stochastic_half(
    profiles: &[Profile],
    counterpart: &SimilarityMatrix,
    prev: &[f64],
    alpha: f64,
    sigma: usize,
    stream: u64,
) -> Vec<f64> {
    let n = profiles.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut sa = Vec::with_capacity(sigma);
            let mut sb = Vec::with_capacity(sigma);
            (a + 1..n)
                .map(|b| {
                    let pair = ((a as u64) << 32) | b as u64;
                    let mut rng = seeded_rng(mix_seed(stream ^ mix_seed(pair)));
                    draw(profiles[a], sigma, &mut rng, &mut sa);
                    draw(profiles[b], sigma, &mut rng, &mut sb);
                    let (mut num, mut den) = (0.0, 0.0);
                    for &(p, rp) in &sa {
                        for &(q, rq) in &sb {
                            let w = pair_weight(rp, rq);
                            num += w * counterpart.get(p, q);
                            den += w.abs();
                        }
                    }
                    damped(prev[a * n + b], num, den, alpha)
                })
                .collect()
        })
        .collect();
    mirror(n, prev, upper)
}

/// One stochastic iteration (user half, then item half), both reading the
/// previous matrices. `iteration` selects the random streams.
pub fn scsr_iteration(
    r: &RatingMatrix,
    users: &SimilarityMatrix,
    items: &SimilarityMatrix,
    cfg: &ScsrConfig,
    iteration: usize,
) -> Result<(SimilarityMatrix, SimilarityMatrix)> {
    check_shapes(r, users, items)?;
    cfg.validate()?;
    let unit = r.map_values(|e| unit_rating(e.value));
    let user_profiles: Vec<Profile> = (0..unit.n_users()).map(|u| unit.user_profile(u)).collect();
    let item_profiles: Vec<Profile> = (0..unit.n_items()).map(|i| unit.item_profile(i)).collect();
    let base = mix_seed(cfg.seed ^ mix_seed(iteration as u64));
    let u_next = stochastic_half(&user_profiles, items, users.values(), cfg.alpha, cfg.sigma, mix_seed(base ^ 1));
    let v_next = stochastic_half(&item_profiles, users, items.values(), cfg.alpha, cfg.sigma, mix_seed(base ^ 2));
    Ok((users.with_values(u_next)?, items.with_values(v_next)?))
}

fn frobenius_delta(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Stochastic CSR from initial user and item similarity matrices.
pub fn scsr_train(
    r: &RatingMatrix,
    users: &SimilarityMatrix,
    items: &SimilarityMatrix,
    cfg: &ScsrConfig,
) -> Result<ReinforcedSimilarities> {
    cfg.validate()?;
    check_shapes(r, users, items)?;
    let mut u = users.clone();
    let mut v = items.clone();
    let mut deltas = Vec::new();
    let mut converged = false;
    for it in 1..=cfg.max_iter {
        let (u_next, v_next) = scsr_iteration(r, &u, &v, cfg, it)?;
        let du = frobenius_delta(u_next.values(), u.values());
        let dv = frobenius_delta(v_next.values(), v.values());
        if !(du.is_finite() && dv.is_finite()) {
            return Err(CfError::numeric(format!("non-finite similarity at scsr iteration {it}")));
        }
        deltas.push((du, dv));
        u = u_next;
        v = v_next;
        if du < cfg.epsilon && dv < cfg.epsilon {
            converged = true;
            break;
        }
    }
    Ok(ReinforcedSimilarities { user_sim: u, item_sim: v, iterations_run: deltas.len(), converged, deltas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Rating;
    use crate::similarity::{apply_weighting, compute_similarity, Axis, Measure, Neighbors, SimilarityConfig, Weighting};
    use rand::Rng;

    #[test]
    fn pair_weight_examples() {
        assert_eq!(pair_weight(0.25, 0.25), 1.0);
        assert_eq!(pair_weight(0.0, 0.5), 0.0);
        assert_eq!(pair_weight(0.0, 1.0), -1.0);
        assert_eq!(unit_rating(1.0), 0.0);
        assert_eq!(unit_rating(5.0), 1.0);
    }

    fn random_instance(n_users: usize, n_items: usize, density: f64, seed: u64) -> RatingMatrix {
        let mut rng = seeded_rng(seed);
        let mut entries = Vec::new();
        for u in 0..n_users {
            for i in 0..n_items {
                if rng.random::<f64>() < density {
                    entries.push(Rating { user: u, item: i, value: rng.random_range(1..=5) as f64 });
                }
            }
        }
        RatingMatrix::new(n_users, n_items, entries).unwrap()
    }

    fn initial(r: &RatingMatrix) -> (SimilarityMatrix, SimilarityMatrix) {
        let cfg = SimilarityConfig::new(Axis::Item, Measure::Pcc, Weighting::Normal, Neighbors::All);
        let u = apply_weighting(&compute_similarity(r, Axis::User, Measure::Pcc).unwrap(), &cfg).unwrap();
        let v = apply_weighting(&compute_similarity(r, Axis::Item, Measure::Pcc).unwrap(), &cfg).unwrap();
        (u, v)
    }

    #[test]
    fn zero_damping_is_identity() {
        let r = random_instance(8, 6, 0.6, 1);
        let (u, v) = initial(&r);
        let (u1, v1) = csr_update_reference(&r, &u, &v, 0.0).unwrap();
        assert_eq!((&u1, &v1), (&u, &v));
        let cfg = ScsrConfig { alpha: 0.0, ..Default::default() };
        let out = scsr_train(&r, &u, &v, &cfg).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations_run, 1);
        assert_eq!(out.user_sim, u);
        assert_eq!(out.item_sim, v);
    }

    #[test]
    fn single_common_item() {
        // users 0 and 1 each rated only item 0, with equal ratings
        let entries = vec![
            Rating { user: 0, item: 0, value: 4.0 },
            Rating { user: 1, item: 0, value: 4.0 },
            Rating { user: 2, item: 1, value: 2.0 },
        ];
        let r = RatingMatrix::new(3, 2, entries).unwrap();
        let (u, v) = initial(&r);
        let alpha = 0.3;
        let (u1, _) = csr_update_reference(&r, &u, &v, alpha).unwrap();
        assert!((u1.get(0, 1) - ((1.0 - alpha) * u.get(0, 1) + alpha * v.get(0, 0))).abs() < 1e-15);
        assert!((u1.get(0, 1) - ((1.0 - alpha) * u.get(0, 1) + alpha)).abs() < 1e-15);
        // users 0 and 2: single cross pair with weight 1 - 2|0.75 - 0.25| = 0 keeps the old value
        assert_eq!(u1.get(0, 2), u.get(0, 2));
    }

    #[test]
    fn sampling_respects_sigma_and_symmetry() {
        let r = random_instance(30, 20, 0.7, 4);
        let (u, v) = initial(&r);
        let cfg = ScsrConfig { sigma: 3, max_iter: 3, ..Default::default() };
        let out = scsr_train(&r, &u, &v, &cfg).unwrap();
        for s in [&out.user_sim, &out.item_sim] {
            for a in 0..s.len() {
                for b in 0..s.len() {
                    assert_eq!(s.get(a, b), s.get(b, a));
                    assert!(s.get(a, b).is_finite() && s.get(a, b).abs() <= 1.0 + 1e-12);
                }
            }
        }
        let again = scsr_train(&r, &u, &v, &cfg).unwrap();
        assert_eq!(again.user_sim, out.user_sim);
        assert_eq!(again.item_sim, out.item_sim);
        let other = scsr_train(&r, &u, &v, &ScsrConfig { seed: 9, ..cfg }).unwrap();
        assert_ne!(other.user_sim, out.user_sim);
    }

    #[test]
    fn rejects_bad_config_and_shapes() {
        let r = random_instance(5, 4, 0.8, 2);
        let (u, v) = initial(&r);
        assert!(scsr_train(&r, &u, &v, &ScsrConfig { sigma: 0, ..Default::default() }).is_err());
        assert!(scsr_train(&r, &u, &v, &ScsrConfig { alpha: 1.5, ..Default::default() }).is_err());
        assert!(scsr_train(&r, &v, &u, &ScsrConfig::default()).is_err());
    }
}
