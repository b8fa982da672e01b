//! Degree-2 factorization machines with Bayesian (Gibbs) inference.

pub mod features;
pub mod gibbs;
pub mod model;
pub mod truncnorm;

pub use features::{build_features, implicit_scale, Block, FeatureBuilder, FeatureMatrix, FeatureSchema};
pub use gibbs::{
    bfm_fit_ordered_probit, bfm_fit_regression, expected_category, expected_from_probs, GibbsConfig,
    GibbsOutput, GibbsSampler, HyperPrior, Task,
};
pub use model::FmModel;

/// Fast-form FM prediction on one sparse row.
pub fn fm_predict(model: &FmModel, cols: &[usize], vals: &[f64]) -> crate::Result<f64> {
    model.predict(cols, vals)
}
