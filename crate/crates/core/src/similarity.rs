//! Neighborhood models: pairwise similarity (cosine, PCC, SiGra), overlap
//! weighting, and k-nearest-neighbor rating prediction.

use std::str::FromStr;

use rayon::prelude::*;

use crate::data::RatingMatrix;
use crate::error::{CfError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    User,
    Item,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Measure {
    Cosine,
    Pcc,
    Sigra,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weighting {
    None,
    Normal,
    Significance,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Neighbors {
    K(usize),
    All,
}

impl Neighbors {
    fn limit(self) -> usize {
        match self {
            Neighbors::K(k) => k,
            Neighbors::All => usize::MAX,
        }
    }
}

macro_rules! parse_enum {
    ($ty:ty, $what:literal, { $($s:literal => $v:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = CfError;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($v),)+
                    other => Err(CfError::config(format!(concat!("unknown ", $what, " `{}`"), other))),
                }
            }
        }
    };
}

parse_enum!(Axis, "similarity axis", { "user" => Axis::User, "item" => Axis::Item, "both" => Axis::Both });
parse_enum!(Measure, "similarity measure", { "cosine" => Measure::Cosine, "pcc" => Measure::Pcc, "sigra" => Measure::Sigra });
parse_enum!(Weighting, "weighting", {
    "none" => Weighting::None,
    "normal" => Weighting::Normal,
    "significance" => Weighting::Significance,
    "sigmoid" => Weighting::Sigmoid,
});

impl FromStr for Neighbors {
    type Err = CfError;
    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(Neighbors::All);
        }
        match s.parse::<usize>() {
            Ok(k) if k > 0 => Ok(Neighbors::K(k)),
            _ => Err(CfError::config(format!("neighbor count `{s}` must be a positive integer or `all`"))),
        }
    }
}

/// Significance threshold used when none is given: 7 for users, 70 for
/// items, 20 when both axes are combined.
pub fn default_beta(axis: Axis) -> usize {
    match axis {
        Axis::User => 7,
        Axis::Item => 70,
        Axis::Both => 20,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityConfig {
    pub axis: Axis,
    pub measure: Measure,
    pub weighting: Weighting,
    pub beta: usize,
    pub k_neighbors: Neighbors,
    /// Weight of the user-axis prediction when `axis == Both`.
    pub user_weight: f64,
}

impl SimilarityConfig {
    pub fn new(axis: Axis, measure: Measure, weighting: Weighting, k_neighbors: Neighbors) -> Self {
        SimilarityConfig { axis, measure, weighting, beta: default_beta(axis), k_neighbors, user_weight: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta == 0 {
            return Err(CfError::config("significance beta must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.user_weight) {
            return Err(CfError::config(format!("user_weight {} not in [0, 1]", self.user_weight)));
        }
        if self.k_neighbors == Neighbors::K(0) {
            return Err(CfError::config("k_neighbors must be >= 1"));
        }
        Ok(())
    }
}

/// Dense symmetric similarity over the users or the items of a rating matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    axis: Axis,
    n: usize,
    values: Vec<f64>,
    overlap: Vec<u32>,
    profile_sizes: Vec<usize>,
    means: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.n + b]
    }

    pub fn overlap(&self, a: usize, b: usize) -> usize {
        self.overlap[a * self.n + b] as usize
    }

    pub fn profile_size(&self, a: usize) -> usize {
        self.profile_sizes[a]
    }

    /// Mean observed rating of every entity (global mean when unrated).
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Row-major `n x n` values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same entities and overlap counts with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.n * self.n {
            return Err(CfError::Shape { expected: self.n * self.n, got: values.len() });
        }
        Ok(SimilarityMatrix { values, ..self.clone() })
    }
}

/// Entity profiles along one axis: (counterpart ids, ratings) per entity.
pub(crate) fn profiles(m: &RatingMatrix, axis: Axis) -> Vec<(&[usize], &[f64])> {
    match axis {
        Axis::User => (0..m.n_users()).map(|u| m.user_profile(u)).collect(),
        Axis::Item => (0..m.n_items()).map(|i| m.item_profile(i)).collect(),
        Axis::Both => unreachable!("both is resolved into user and item matrices"),
    }
}

/// Similarity of two profiles over their common support, plus the overlap.
pub fn pair_similarity(
    measure: Measure,
    a: (&[usize], &[f64]),
    b: (&[usize], &[f64]),
    mean_a: f64,
    mean_b: f64,
) -> (f64, usize) {
    let (ia, ra) = a;
    let (ib, rb) = b;
    let (mut p, mut q) = (0, 0);
    let mut common = 0usize;
    let (mut num, mut da, mut db, mut ratio) = (0.0, 0.0, 0.0, 0.0);
    while p < ia.len() && q < ib.len() {
        match ia[p].cmp(&ib[q]) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                let (x, y) = (ra[p], rb[q]);
                common += 1;
                match measure {
                    Measure::Cosine => {
                        num += x * y;
                        da += x * x;
                        db += y * y;
                    }
                    Measure::Pcc => {
                        let (cx, cy) = (x - mean_a, y - mean_b);
                        num += cx * cy;
                        da += cx * cx;
                        db += cy * cy;
                    }
                    Measure::Sigra => {
                        let (lo, hi) = if x < y { (x, y) } else { (y, x) };
                        ratio += if hi != 0.0 { lo / hi } else { 1.0 };
                    }
                }
                p += 1;
                q += 1;
            }
        }
    }
    if common == 0 {
        return (0.0, 0);
    }
    let s = match measure {
        Measure::Cosine | Measure::Pcc => {
            let den = da.sqrt() * db.sqrt();
            if den > 0.0 {
                (num / den).clamp(-1.0, 1.0)
            } else {
                0.0
            }
        }
        Measure::Sigra => {
            let c = common as f64;
            let attenuation = 1.0 / (1.0 + (-((ia.len() + ib.len()) as f64) / (2.0 * c)).exp());
            attenuation * ratio / c
        }
    };
    (s, common)
}

/// Raw (unweighted) similarity along `axis` (user or item).
pub fn compute_similarity(m: &RatingMatrix, axis: Axis, measure: Measure) -> Result<SimilarityMatrix> {
    if axis == Axis::Both {
        return Err(CfError::config("compute user and item similarity separately for axis `both`"));
    }
    let profs = profiles(m, axis);
    let means = match axis {
        Axis::User => m.user_means(),
        _ => m.item_means(),
    };
    let n = profs.len();
    let upper: Vec<Vec<(f64, u32)>> = (0..n)
        .into_par_iter()
        .map(|a| {
            (a + 1..n)
                .map(|b| {
                    let (s, c) = pair_similarity(measure, profs[a], profs[b], means[a], means[b]);
                    (s, c as u32)
                })
                .collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    let mut overlap = vec![0u32; n * n];
    for (a, row) in upper.into_iter().enumerate() {
        let size = profs[a].0.len();
        values[a * n + a] = if size > 0 { 1.0 } else { 0.0 };
        overlap[a * n + a] = size as u32;
        for (off, (s, c)) in row.into_iter().enumerate() {
            let b = a + 1 + off;
            values[a * n + b] = s;
            values[b * n + a] = s;
            overlap[a * n + b] = c;
            overlap[b * n + a] = c;
        }
    }
    let profile_sizes = profs.iter().map(|p| p.0.len()).collect();
    Ok(SimilarityMatrix { axis, n, values, overlap, profile_sizes, means })
}

/// Overlap penalty in [0, 1] for a pair with `common` co-ratings.
pub fn weight_factor(weighting: Weighting, common: usize, size_a: usize, size_b: usize, beta: usize) -> f64 {
    match weighting {
        Weighting::None => 1.0,
        Weighting::Normal => {
            if size_a + size_b == 0 {
                0.0
            } else {
                2.0 * common as f64 / (size_a + size_b) as f64
            }
        }
        Weighting::Significance => common.min(beta) as f64 / beta as f64,
        Weighting::Sigmoid => 1.0 / (1.0 + (-(common as f64) / 2.0).exp()),
    }
}

/// Multiplies every off-diagonal similarity by its overlap weight. The
/// diagonal stays at its self-similarity.
pub fn apply_weighting(s: &SimilarityMatrix, cfg: &SimilarityConfig) -> Result<SimilarityMatrix> {
    cfg.validate()?;
    if cfg.weighting == Weighting::None {
        return Ok(s.clone());
    }
    let n = s.n;
    let mut values = s.values.clone();
    for a in 0..n {
        for b in 0..n {
            if a != b {
                let w = weight_factor(cfg.weighting, s.overlap(a, b), s.profile_sizes[a], s.profile_sizes[b], cfg.beta);
                values[a * n + b] *= w;
            }
        }
    }
    s.with_values(values)
}

/// Mean-centered kNN estimate for the (user, item) cell.
///
/// With a user-axis matrix the neighbors are the other users who rated
/// `item`; with an item-axis matrix they are the other items rated by `user`.
/// Neighbors with zero similarity are skipped; the rest are ranked by raw
/// similarity (descending, ties to the lower index) and the top `k` kept.
/// Falls back to the entity mean when no neighbor contributes.
pub fn predict_knn(m: &RatingMatrix, s: &SimilarityMatrix, user: usize, item: usize, k: Neighbors) -> f64 {
    let (target, candidates) = match s.axis {
        Axis::User => (user, m.item_profile(item)),
        _ => (item, m.user_profile(user)),
    };
    let means = &s.means;
    let mut pool: Vec<(f64, usize, f64)> = candidates
        .0
        .iter()
        .zip(candidates.1)
        .filter(|&(&b, _)| b != target)
        .filter_map(|(&b, &r)| {
            let sim = s.get(target, b);
            (sim != 0.0).then_some((sim, b, r - means[b]))
        })
        .collect();
    let limit = k.limit();
    if pool.len() > limit {
        let order = |x: &(f64, usize, f64), y: &(f64, usize, f64)| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1));
        pool.select_nth_unstable_by(limit - 1, order);
        pool.truncate(limit);
    }
    let (num, den) = pool.iter().fold((0.0, 0.0), |(n, d), &(sim, _, dev)| (n + sim * dev, d + sim.abs()));
    if den > 0.0 {
        means[target] + num / den
    } else {
        means[target]
    }
}

/// Convex blend of user-axis and item-axis kNN estimates.
pub fn predict_combined(
    m: &RatingMatrix,
    s_user: &SimilarityMatrix,
    s_item: &SimilarityMatrix,
    user: usize,
    item: usize,
    k: Neighbors,
    user_weight: f64,
) -> f64 {
    let ru = predict_knn(m, s_user, user, item, k);
    let ri = predict_knn(m, s_item, user, item, k);
    user_weight * ru + (1.0 - user_weight) * ri
}

/// Similarity matrices fitted on a training matrix, ready to predict.
#[derive(Clone, Debug)]
pub struct NeighborhoodModel {
    pub cfg: SimilarityConfig,
    pub user_sim: Option<SimilarityMatrix>,
    pub item_sim: Option<SimilarityMatrix>,
}

impl NeighborhoodModel {
    pub fn fit(m: &RatingMatrix, cfg: &SimilarityConfig) -> Result<Self> {
        cfg.validate()?;
        let build = |axis| -> Result<SimilarityMatrix> {
            let raw = compute_similarity(m, axis, cfg.measure)?;
            apply_weighting(&raw, cfg)
        };
        let (user_sim, item_sim) = match cfg.axis {
            Axis::User => (Some(build(Axis::User)?), None),
            Axis::Item => (None, Some(build(Axis::Item)?)),
            Axis::Both => (Some(build(Axis::User)?), Some(build(Axis::Item)?)),
        };
        Ok(NeighborhoodModel { cfg: cfg.clone(), user_sim, item_sim })
    }

    pub fn predict(&self, m: &RatingMatrix, user: usize, item: usize) -> Result<f64> {
        if user >= m.n_users() || item >= m.n_items() {
            return Err(CfError::key(format!("({user}, {item}) outside the rating matrix")));
        }
        let k = self.cfg.k_neighbors;
        Ok(match (&self.user_sim, &self.item_sim) {
            (Some(su), Some(si)) => predict_combined(m, su, si, user, item, k, self.cfg.user_weight),
            (Some(su), None) => predict_knn(m, su, user, item, k),
            (None, Some(si)) => predict_knn(m, si, user, item, k),
            (None, None) => unreachable!("fit always builds at least one matrix"),
        })
    }

    pub fn predict_pairs(&self, m: &RatingMatrix, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        pairs.par_iter().map(|&(u, i)| self.predict(m, u, i)).collect()
    }
}
