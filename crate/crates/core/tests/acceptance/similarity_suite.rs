use cfkit::similarity::{
    apply_weighting, compute_similarity, Axis, Measure, Neighbors, SimilarityConfig, Weighting,
};

use crate::common::{random_dense, to_matrix};
use crate::{ensure, lib, Verdict};

const MEASURES: [Measure; 3] = [Measure::Cosine, Measure::Pcc, Measure::Sigra];
const WEIGHTINGS: [Weighting; 4] = [Weighting::None, Weighting::Normal, Weighting::Significance, Weighting::Sigmoid];

pub fn run() -> Verdict {
    let (mut cells, mut zero_overlap) = (0usize, 0usize);
    for seed in 0..5 {
        let m = to_matrix(&random_dense(30, 20, 0.15 + 0.05 * seed as f64, 300 + seed));
        for axis in [Axis::User, Axis::Item] {
            for measure in MEASURES {
                let raw = lib(compute_similarity(&m, axis, measure))?;
                for weighting in WEIGHTINGS {
                    let cfg = SimilarityConfig::new(axis, measure, weighting, Neighbors::All);
                    let s = lib(apply_weighting(&raw, &cfg))?;
                    let tag = format!("seed {seed} {axis:?} {measure:?} {weighting:?}");
                    for a in 0..s.len() {
                        let self_sim = s.get(a, a);
                        let want = if s.profile_size(a) > 0 { 1.0 } else { 0.0 };
                        ensure!(self_sim == want, "{tag}: S[{a},{a}] = {self_sim}");
                        for b in 0..s.len() {
                            let v = s.get(a, b);
                            cells += 1;
                            ensure!(v == s.get(b, a), "{tag}: asymmetric at ({a},{b})");
                            ensure!(v.is_finite() && v.abs() <= 1.0, "{tag}: S[{a},{b}] = {v}");
                            ensure!(v.abs() <= raw.get(a, b).abs(), "{tag}: weighting grew |S[{a},{b}]|");
                            if a != b && s.overlap(a, b) == 0 {
                                zero_overlap += 1;
                                ensure!(v == 0.0, "{tag}: zero-overlap pair ({a},{b}) has {v}");
                            }
                        }
                    }
                }
            }
        }
    }
    ensure!(zero_overlap > 0, "fixtures produced no zero-overlap pairs");
    Ok(format!("{cells} cells over 3 measures x 4 weightings x 2 axes x 5 matrices, {zero_overlap} zero-overlap cells"))
}
