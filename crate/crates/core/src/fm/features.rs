use crate::data::RatingMatrix;
use crate::error::{CfError, Result};

/// One block of the FM design row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Block {
    /// One-hot user id (width `n_users`).
    UserOneHot,
    /// One-hot item id (width `n_items`).
    ItemOneHot,
    /// Items rated by the row's user, each valued `1/sqrt(|N_u|)` (width `n_items`).
    ImplicitUser,
    /// Users who rated the row's item, each valued `1/sqrt(|N_i|)` (width `n_users`).
    ImplicitItem,
}

impl Block {
    fn width(self, n_users: usize, n_items: usize) -> usize {
        match self {
            Block::UserOneHot | Block::ImplicitItem => n_users,
            Block::ItemOneHot | Block::ImplicitUser => n_items,
        }
    }
}

/// Which blocks make up a design row. Blocks are laid out in the canonical
/// order u, i, iu, ii regardless of construction order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FeatureSchema {
    blocks: Vec<Block>,
}

impl FeatureSchema {
    pub fn new(blocks: &[Block]) -> Result<Self> {
        let mut blocks = blocks.to_vec();
        blocks.sort();
        blocks.dedup();
        if !blocks.contains(&Block::UserOneHot) || !blocks.contains(&Block::ItemOneHot) {
            return Err(CfError::config("feature schema must contain the user and item one-hot blocks"));
        }
        Ok(FeatureSchema { blocks })
    }

    pub fn ui() -> Self {
        FeatureSchema { blocks: vec![Block::UserOneHot, Block::ItemOneHot] }
    }

    pub fn uiiu() -> Self {
        FeatureSchema { blocks: vec![Block::UserOneHot, Block::ItemOneHot, Block::ImplicitUser] }
    }

    pub fn uiii() -> Self {
        FeatureSchema { blocks: vec![Block::UserOneHot, Block::ItemOneHot, Block::ImplicitItem] }
    }

    pub fn uiiuii() -> Self {
        FeatureSchema {
            blocks: vec![Block::UserOneHot, Block::ItemOneHot, Block::ImplicitUser, Block::ImplicitItem],
        }
    }

    /// Parses the compact labels `ui`, `uiiu`, `uiii`, `uiiuii`.
    pub fn from_label(label: &str) -> Result<Self> {
        match label {
            "ui" => Ok(Self::ui()),
            "uiiu" => Ok(Self::uiiu()),
            "uiii" => Ok(Self::uiii()),
            "uiiuii" => Ok(Self::uiiuii()),
            other => Err(CfError::config(format!("unknown feature schema `{other}`"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match (self.has(Block::ImplicitUser), self.has(Block::ImplicitItem)) {
            (false, false) => "ui",
            (true, false) => "uiiu",
            (false, true) => "uiii",
            (true, true) => "uiiuii",
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn has(&self, block: Block) -> bool {
        self.blocks.contains(&block)
    }

    /// (block, offset, width) for each block, partitioning `0..n_features`.
    pub fn layout(&self, n_users: usize, n_items: usize) -> Vec<(Block, usize, usize)> {
        let mut offset = 0;
        self.blocks
            .iter()
            .map(|&b| {
                let w = b.width(n_users, n_items);
                let entry = (b, offset, w);
                offset += w;
                entry
            })
            .collect()
    }

    pub fn n_features(&self, n_users: usize, n_items: usize) -> usize {
        self.blocks.iter().map(|b| b.width(n_users, n_items)).sum()
    }
}

/// Value given to every index of an implicit block built from `count`
/// neighbors. An empty neighbor set yields the fallback scale 1 and no indices.
pub fn implicit_scale(count: usize) -> f64 {
    if count == 0 {
        1.0
    } else {
        1.0 / (count as f64).sqrt()
    }
}

/// Sparse FM design matrix in row-compressed form.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    targets: Vec<f64>,
    n_features: usize,
    /// Block index (into `schema.blocks()`) of every feature.
    groups: Vec<usize>,
    schema: FeatureSchema,
}

impl FeatureMatrix {
    /// Builds a matrix from explicit rows. `groups[j]` assigns feature `j` to
    /// a hyperprior group.
    pub fn from_rows(
        rows: Vec<Vec<(usize, f64)>>,
        targets: Vec<f64>,
        n_features: usize,
        groups: Vec<usize>,
        schema: FeatureSchema,
    ) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(CfError::Shape { expected: rows.len(), got: targets.len() });
        }
        if groups.len() != n_features {
            return Err(CfError::Shape { expected: n_features, got: groups.len() });
        }
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            for (j, x) in row {
                if j >= n_features {
                    return Err(CfError::key(format!("feature {j} >= {n_features}")));
                }
                cols.push(j);
                vals.push(x);
            }
            row_ptr.push(cols.len());
        }
        Ok(FeatureMatrix { row_ptr, cols, vals, targets, n_features, groups, schema })
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Total number of stored nonzeros.
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.cols[lo..hi], &self.vals[lo..hi])
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn n_groups(&self) -> usize {
        self.groups.iter().max().map_or(0, |g| g + 1)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    /// Column-compressed copy: (col_ptr, row ids, values).
    pub(crate) fn to_columns(&self) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let mut col_ptr = vec![0usize; self.n_features + 1];
        for &j in &self.cols {
            col_ptr[j + 1] += 1;
        }
        for j in 0..self.n_features {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut cursor = col_ptr.clone();
        let mut rows = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for r in 0..self.n_rows() {
            let (cs, xs) = self.row(r);
            for (&j, &x) in cs.iter().zip(xs) {
                rows[cursor[j]] = r;
                vals[cursor[j]] = x;
                cursor[j] += 1;
            }
        }
        (col_ptr, rows, vals)
    }
}

/// Builds FM rows against a fixed rating context; the implicit blocks use the
/// context's user and item profiles.
pub struct FeatureBuilder<'a> {
    context: &'a RatingMatrix,
    schema: FeatureSchema,
    layout: Vec<(Block, usize, usize)>,
}

impl<'a> FeatureBuilder<'a> {
    pub fn new(context: &'a RatingMatrix, schema: &FeatureSchema) -> Self {
        let layout = schema.layout(context.n_users(), context.n_items());
        FeatureBuilder { context, schema: schema.clone(), layout }
    }

    pub fn n_features(&self) -> usize {
        self.schema.n_features(self.context.n_users(), self.context.n_items())
    }

    fn groups(&self) -> Vec<usize> {
        let mut g = Vec::with_capacity(self.n_features());
        for (k, &(_, _, width)) in self.layout.iter().enumerate() {
            g.extend(std::iter::repeat_n(k, width));
        }
        g
    }

    pub fn row(&self, user: usize, item: usize) -> Vec<(usize, f64)> {
        let mut row = Vec::with_capacity(2);
        for &(block, offset, _) in &self.layout {
            match block {
                Block::UserOneHot => row.push((offset + user, 1.0)),
                Block::ItemOneHot => row.push((offset + item, 1.0)),
                Block::ImplicitUser => {
                    let (items, _) = self.context.user_profile(user);
                    let s = implicit_scale(items.len());
                    row.extend(items.iter().map(|&i| (offset + i, s)));
                }
                Block::ImplicitItem => {
                    let (users, _) = self.context.item_profile(item);
                    let s = implicit_scale(users.len());
                    row.extend(users.iter().map(|&u| (offset + u, s)));
                }
            }
        }
        row
    }

    /// Rows for arbitrary (user, item) pairs; targets are 0.
    pub fn query(&self, pairs: &[(usize, usize)]) -> Result<FeatureMatrix> {
        for &(u, i) in pairs {
            if u >= self.context.n_users() || i >= self.context.n_items() {
                return Err(CfError::key(format!("query pair ({u}, {i}) outside the rating context")));
            }
        }
        let rows = pairs.iter().map(|&(u, i)| self.row(u, i)).collect();
        FeatureMatrix::from_rows(rows, vec![0.0; pairs.len()], self.n_features(), self.groups(), self.schema.clone())
    }

    /// One row per observed rating of the context, target = raw rating.
    pub fn training(&self) -> FeatureMatrix {
        let m = self.context;
        let rows = m.entries().iter().map(|e| self.row(e.user, e.item)).collect();
        let targets = m.entries().iter().map(|e| e.value).collect();
        FeatureMatrix::from_rows(rows, targets, self.n_features(), self.groups(), self.schema.clone())
            .expect("rows built from the context are in range")
    }
}

/// One design row per observed rating of `m`, in entry order.
pub fn build_features(m: &RatingMatrix, schema: &FeatureSchema) -> FeatureMatrix {
    FeatureBuilder::new(m, schema).training()
}
