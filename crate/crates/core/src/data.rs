//! Rating storage, ingestion, splitting, normalization and scoring.
//!
//! Files follow the `Id,Prediction` convention: a header line, then one
//! `r<row>_c<col>,<value>` line per rating with 1-based indices.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CfError, Result};

pub const MIN_RATING: f64 = 1.0;
pub const MAX_RATING: f64 = 5.0;

/// Floor applied to per-column standard deviations.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

/// Compressed adjacency for one axis: `ptr[a]..ptr[a + 1]` indexes the
/// counterpart ids and values of entity `a`, sorted by counterpart id.
#[derive(Clone, Debug, Default)]
struct Adjacency {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl Adjacency {
    fn build(n: usize, pairs: impl Iterator<Item = (usize, usize, f64)> + Clone) -> Self {
        let mut counts = vec![0usize; n + 1];
        for (a, _, _) in pairs.clone() {
            counts[a + 1] += 1;
        }
        for a in 0..n {
            counts[a + 1] += counts[a];
        }
        let ptr = counts.clone();
        let total = ptr[n];
        let mut cursor = counts;
        let mut idx = vec![0usize; total];
        let mut val = vec![0.0; total];
        for (a, b, v) in pairs {
            let slot = cursor[a];
            idx[slot] = b;
            val[slot] = v;
            cursor[a] += 1;
        }
        for a in 0..n {
            let (lo, hi) = (ptr[a], ptr[a + 1]);
            if hi - lo > 1 && !idx[lo..hi].windows(2).all(|w| w[0] < w[1]) {
                let mut row: Vec<(usize, f64)> =
                    idx[lo..hi].iter().copied().zip(val[lo..hi].iter().copied()).collect();
                row.sort_by_key(|&(b, _)| b);
                for (k, (b, v)) in row.into_iter().enumerate() {
                    idx[lo + k] = b;
                    val[lo + k] = v;
                }
            }
        }
        Adjacency { ptr, idx, val }
    }

    fn row(&self, a: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.ptr[a], self.ptr[a + 1]);
        (&self.idx[lo..hi], &self.val[lo..hi])
    }
}

/// Sparse user x item matrix of observed ratings.
#[derive(Clone, Debug)]
pub struct RatingMatrix {
    n_users: usize,
    n_items: usize,
    entries: Vec<Rating>,
    by_user: Adjacency,
    by_item: Adjacency,
}

impl RatingMatrix {
    /// Builds a validated matrix: indices in range, values in [1, 5], no
    /// duplicate (user, item) pair.
    pub fn new(n_users: usize, n_items: usize, entries: Vec<Rating>) -> Result<Self> {
        for (pos, e) in entries.iter().enumerate() {
            if !(MIN_RATING..=MAX_RATING).contains(&e.value) {
                return Err(CfError::Range { line: pos + 1, value: e.value });
            }
        }
        Self::build(n_users, n_items, entries)
    }

    /// Same as [`RatingMatrix::new`] without the [1, 5] range check; used for
    /// normalized and synthetic real-valued matrices.
    pub fn new_unbounded(n_users: usize, n_items: usize, entries: Vec<Rating>) -> Result<Self> {
        for (pos, e) in entries.iter().enumerate() {
            if !e.value.is_finite() {
                return Err(CfError::Range { line: pos + 1, value: e.value });
            }
        }
        Self::build(n_users, n_items, entries)
    }

    fn build(n_users: usize, n_items: usize, entries: Vec<Rating>) -> Result<Self> {
        for e in &entries {
            if e.user >= n_users || e.item >= n_items {
                return Err(CfError::key(format!(
                    "entry ({}, {}) outside {}x{} matrix",
                    e.user, e.item, n_users, n_items
                )));
            }
        }
        let by_user = Adjacency::build(n_users, entries.iter().map(|e| (e.user, e.item, e.value)));
        for u in 0..n_users {
            let (items, _) = by_user.row(u);
            if let Some(w) = items.windows(2).find(|w| w[0] == w[1]) {
                let pos = entries
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.user == u && e.item == w[0])
                    .map(|(p, _)| p)
                    .nth(1)
                    .unwrap_or(0);
                return Err(CfError::Duplicate { line: pos + 1, user: u, item: w[0] });
            }
        }
        let by_item = Adjacency::build(n_items, entries.iter().map(|e| (e.item, e.user, e.value)));
        Ok(RatingMatrix { n_users, n_items, entries, by_user, by_item })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in construction order.
    pub fn entries(&self) -> &[Rating] {
        &self.entries
    }

    /// Items rated by `user` (sorted) and the matching ratings.
    pub fn user_profile(&self, user: usize) -> (&[usize], &[f64]) {
        self.by_user.row(user)
    }

    /// Users who rated `item` (sorted) and the matching ratings.
    pub fn item_profile(&self, item: usize) -> (&[usize], &[f64]) {
        self.by_item.row(item)
    }

    pub fn get(&self, user: usize, item: usize) -> Option<f64> {
        if user >= self.n_users {
            return None;
        }
        let (items, vals) = self.user_profile(user);
        items.binary_search(&item).ok().map(|k| vals[k])
    }

    pub fn global_mean(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.entries.iter().map(|e| e.value).sum::<f64>() / self.entries.len() as f64
    }

    /// Per-user mean rating; users without ratings get the global mean.
    pub fn user_means(&self) -> Vec<f64> {
        let g = self.global_mean();
        (0..self.n_users).map(|u| mean_or(self.user_profile(u).1, g)).collect()
    }

    /// Per-item mean rating; items without ratings get the global mean.
    pub fn item_means(&self) -> Vec<f64> {
        let g = self.global_mean();
        (0..self.n_items).map(|i| mean_or(self.item_profile(i).1, g)).collect()
    }

    /// Same sparsity pattern with every value passed through `f`.
    pub fn map_values(&self, mut f: impl FnMut(&Rating) -> f64) -> RatingMatrix {
        let entries = self
            .entries
            .iter()
            .map(|e| Rating { value: f(e), ..*e })
            .collect::<Vec<_>>();
        let by_user =
            Adjacency::build(self.n_users, entries.iter().map(|e| (e.user, e.item, e.value)));
        let by_item =
            Adjacency::build(self.n_items, entries.iter().map(|e| (e.item, e.user, e.value)));
        RatingMatrix { n_users: self.n_users, n_items: self.n_items, entries, by_user, by_item }
    }

    /// Transposed view as a new matrix (items become rows).
    pub fn transpose(&self) -> RatingMatrix {
        let entries = self
            .entries
            .iter()
            .map(|e| Rating { user: e.item, item: e.user, value: e.value })
            .collect();
        RatingMatrix {
            n_users: self.n_items,
            n_items: self.n_users,
            entries,
            by_user: self.by_item.clone(),
            by_item: self.by_user.clone(),
        }
    }

    /// (user, item) pairs in entry order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.entries.iter().map(|e| (e.user, e.item)).collect()
    }
}

fn mean_or(values: &[f64], fallback: f64) -> f64 {
    if values.is_empty() {
        fallback
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Optional overrides applied while loading.
#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    pub n_users: Option<usize>,
    pub n_items: Option<usize>,
    /// Accept any finite value instead of requiring [1, 5].
    pub relaxed: bool,
}

fn parse_id(id: &str, line: usize) -> Result<(usize, usize)> {
    let bad = || CfError::Parse { line, msg: format!("malformed id `{id}`, expected r<row>_c<col>") };
    let rest = id.trim().strip_prefix('r').ok_or_else(bad)?;
    let (row, col) = rest.split_once("_c").ok_or_else(bad)?;
    let row: usize = row.parse().map_err(|_| bad())?;
    let col: usize = col.parse().map_err(|_| bad())?;
    if row == 0 || col == 0 {
        return Err(CfError::Parse { line, msg: "indices are 1-based".into() });
    }
    Ok((row - 1, col - 1))
}

fn parse_records(source: impl BufRead) -> Result<Vec<(usize, usize, usize, f64)>> {
    let mut out = Vec::new();
    for (k, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        if k == 0 {
            continue;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (id, value) = trimmed.split_once(',').ok_or_else(|| CfError::Parse {
            line: lineno,
            msg: "expected `<id>,<value>`".into(),
        })?;
        let (u, i) = parse_id(id, lineno)?;
        let value: f64 = value.trim().parse().map_err(|_| CfError::Parse {
            line: lineno,
            msg: format!("bad value `{}`", value.trim()),
        })?;
        out.push((lineno, u, i, value));
    }
    Ok(out)
}

/// Reads a ratings file. Dimensions default to the largest observed index.
pub fn load_ratings(source: impl BufRead, opts: LoadOptions) -> Result<RatingMatrix> {
    let records = parse_records(source)?;
    let mut seen = HashSet::with_capacity(records.len());
    let mut max_u = 0;
    let mut max_i = 0;
    let mut entries = Vec::with_capacity(records.len());
    for &(line, user, item, value) in &records {
        let in_range = if opts.relaxed {
            value.is_finite()
        } else {
            (MIN_RATING..=MAX_RATING).contains(&value)
        };
        if !in_range {
            return Err(CfError::Range { line, value });
        }
        if !seen.insert((user, item)) {
            return Err(CfError::Duplicate { line, user, item });
        }
        max_u = max_u.max(user + 1);
        max_i = max_i.max(item + 1);
        entries.push(Rating { user, item, value });
    }
    let n_users = resolve_dim(opts.n_users, max_u, "users")?;
    let n_items = resolve_dim(opts.n_items, max_i, "items")?;
    RatingMatrix::new_unbounded(n_users, n_items, entries)
}

fn resolve_dim(requested: Option<usize>, observed: usize, what: &str) -> Result<usize> {
    match requested {
        Some(n) if n < observed => Err(CfError::config(format!(
            "n_{what} = {n} but data references index {observed}"
        ))),
        Some(n) => Ok(n),
        None => Ok(observed),
    }
}

/// Reads only the (user, item) ids of a file in ratings format; the value
/// column is ignored. Used for query/sample-submission files.
pub fn load_pairs(source: impl BufRead) -> Result<Vec<(usize, usize)>> {
    Ok(parse_records(source)?.into_iter().map(|(_, u, i, _)| (u, i)).collect())
}

/// Train/validation partition of a rating matrix.
#[derive(Clone, Debug)]
pub struct DataSplit {
    pub train: RatingMatrix,
    pub validation: RatingMatrix,
    pub seed: u64,
    pub train_fraction: f64,
}

/// Uniform random partition: `round(fraction * N)` entries go to train.
/// Both parts keep the source dimensions and source entry order.
pub fn split_ratings(m: &RatingMatrix, fraction: f64, seed: u64) -> Result<DataSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CfError::config(format!("split fraction {fraction} not in (0, 1)")));
    }
    let n = m.len();
    let n_train = (fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut in_train = vec![false; n];
    for &k in &order[..n_train] {
        in_train[k] = true;
    }
    let (mut train, mut val) = (Vec::with_capacity(n_train), Vec::with_capacity(n - n_train));
    for (k, e) in m.entries().iter().enumerate() {
        if in_train[k] {
            train.push(*e);
        } else {
            val.push(*e);
        }
    }
    Ok(DataSplit {
        train: RatingMatrix::new_unbounded(m.n_users(), m.n_items(), train)?,
        validation: RatingMatrix::new_unbounded(m.n_users(), m.n_items(), val)?,
        seed,
        train_fraction: fraction,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormalizationMode {
    Column,
    None,
}

/// Per-item affine normalization and its inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizationState {
    pub mode: NormalizationMode,
    pub column_means: Vec<f64>,
    pub column_stds: Vec<f64>,
    pub global_mean: f64,
}

impl NormalizationState {
    /// No-op normalization over `n_items` columns.
    pub fn identity(n_items: usize) -> Self {
        NormalizationState {
            mode: NormalizationMode::None,
            column_means: vec![0.0; n_items],
            column_stds: vec![1.0; n_items],
            global_mean: 0.0,
        }
    }

    pub fn n_items(&self) -> usize {
        self.column_means.len()
    }

    #[inline]
    pub fn normalize(&self, item: usize, value: f64) -> f64 {
        match self.mode {
            NormalizationMode::None => value,
            NormalizationMode::Column => (value - self.column_means[item]) / self.column_stds[item],
        }
    }

    #[inline]
    pub fn denormalize(&self, item: usize, value: f64) -> f64 {
        match self.mode {
            NormalizationMode::None => value,
            NormalizationMode::Column => value * self.column_stds[item] + self.column_means[item],
        }
    }
}

/// Column-wise standardization with population std floored at [`STD_FLOOR`].
/// Columns with no observations carry the global mean and std 1.
pub fn normalize(m: &RatingMatrix) -> Result<(RatingMatrix, NormalizationState)> {
    if m.is_empty() {
        return Err(CfError::config("cannot normalize an empty rating matrix"));
    }
    let global_mean = m.global_mean();
    let mut means = vec![global_mean; m.n_items()];
    let mut stds = vec![1.0; m.n_items()];
    for i in 0..m.n_items() {
        let (_, vals) = m.item_profile(i);
        if vals.is_empty() {
            continue;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        means[i] = mean;
        stds[i] = var.sqrt().max(STD_FLOOR);
    }
    let state = NormalizationState {
        mode: NormalizationMode::Column,
        column_means: means,
        column_stds: stds,
        global_mean,
    };
    let normalized = m.map_values(|e| state.normalize(e.item, e.value));
    Ok((normalized, state))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

/// Model output ready for scoring or writing; values are clipped to [1, 5].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PredictionSet {
    predictions: Vec<Prediction>,
}

impl PredictionSet {
    pub fn from_values(pairs: &[(usize, usize)], values: &[f64]) -> Result<Self> {
        if pairs.len() != values.len() {
            return Err(CfError::Shape { expected: pairs.len(), got: values.len() });
        }
        Ok(pairs.iter().zip(values).map(|(&(u, i), &v)| (u, i, v)).collect())
    }

    pub fn as_slice(&self) -> &[Prediction] {
        &self.predictions
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }
}

impl FromIterator<(usize, usize, f64)> for PredictionSet {
    fn from_iter<T: IntoIterator<Item = (usize, usize, f64)>>(iter: T) -> Self {
        let predictions = iter
            .into_iter()
            .map(|(user, item, value)| Prediction { user, item, value: clip_rating(value) })
            .collect();
        PredictionSet { predictions }
    }
}

/// Clamps into [1, 5]; NaN maps to the midpoint.
pub fn clip_rating(v: f64) -> f64 {
    if v.is_nan() {
        return 3.0;
    }
    v.clamp(MIN_RATING, MAX_RATING)
}

/// Root mean squared error of `pred` against the matching entries of `truth`.
pub fn rmse(pred: &PredictionSet, truth: &RatingMatrix) -> Result<f64> {
    if pred.is_empty() {
        return Ok(0.0);
    }
    let mut sse = 0.0;
    for p in pred.as_slice() {
        let t = truth
            .get(p.user, p.item)
            .ok_or_else(|| CfError::key(format!("pair ({}, {}) not in truth", p.user, p.item)))?;
        sse += (p.value - t) * (p.value - t);
    }
    Ok((sse / pred.len() as f64).sqrt())
}

/// RMSE over raw value slices.
pub fn rmse_values(pred: &[f64], truth: &[f64]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    (sse / pred.len() as f64).sqrt()
}

pub fn write_submission(pred: &PredictionSet, mut sink: impl Write) -> Result<()> {
    writeln!(sink, "Id,Prediction")?;
    for p in pred.as_slice() {
        writeln!(sink, "r{}_c{},{}", p.user + 1, p.item + 1, p.value)?;
    }
    sink.flush()?;
    Ok(())
}
