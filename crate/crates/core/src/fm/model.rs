use crate::error::{CfError, Result};

/// Degree-2 factorization machine parameters. `v` is row-major
/// `n_features x k`.
#[derive(Clone, Debug, PartialEq)]
pub struct FmModel {
    pub w0: f64,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub k: usize,
}

impl FmModel {
    pub fn zeros(n_features: usize, k: usize) -> Self {
        FmModel { w0: 0.0, w: vec![0.0; n_features], v: vec![0.0; n_features * k], k }
    }

    pub fn n_features(&self) -> usize {
        self.w.len()
    }

    pub fn factor(&self, j: usize) -> &[f64] {
        &self.v[j * self.k..(j + 1) * self.k]
    }

    /// Evaluates the model on a sparse row with the O(k nnz) identity
    /// `0.5 * sum_f [(sum_j v_jf x_j)^2 - sum_j v_jf^2 x_j^2]`.
    pub fn predict(&self, cols: &[usize], vals: &[f64]) -> Result<f64> {
        if let Some(&j) = cols.iter().find(|&&j| j >= self.n_features()) {
            return Err(CfError::key(format!("feature {j} >= {}", self.n_features())));
        }
        Ok(self.predict_unchecked(cols, vals))
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, cols: &[usize], vals: &[f64]) -> f64 {
        let mut y = self.w0;
        for (&j, &x) in cols.iter().zip(vals) {
            y += self.w[j] * x;
        }
        for f in 0..self.k {
            let (mut s, mut s2) = (0.0, 0.0);
            for (&j, &x) in cols.iter().zip(vals) {
                let t = self.v[j * self.k + f] * x;
                s += t;
                s2 += t * t;
            }
            y += 0.5 * (s * s - s2);
        }
        y
    }
}
