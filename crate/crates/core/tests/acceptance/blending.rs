use cfkit::blend::{fit_blender, make_blend_run, BlendMethod};
use cfkit::data::{clip_rating, rmse_values, split_ratings};
use cfkit::presets::Preset;
use cfkit::synthetic::{low_rank_ratings, LowRankSpec};

use crate::{ensure, lib, Verdict};

const SPAN_TOL: f64 = 1e-6;
/// BFM size reduced from the k=50 / 500-sweep preset to fit the time budget.
const BFM: &str = "bfm-r-uiiuii:rank=8,iters=100";
const KNN: &str = "item-pcc-normal-60";

fn clipped_rmse(pred: &[f64], truth: &[f64]) -> f64 {
    let c: Vec<f64> = pred.iter().map(|&v| clip_rating(v)).collect();
    rmse_values(&c, truth)
}

pub fn run() -> Verdict {
    let spec = LowRankSpec { n_users: 500, n_items: 300, rank: 4, density: 0.15, noise: 0.3, integer: false, seed: 6 };
    let m = lib(low_rank_ratings(&spec))?;
    let outer = lib(split_ratings(&m, 0.9, 6))?;
    let test_pairs = outer.validation.pairs();
    let test_truth: Vec<f64> = outer.validation.entries().iter().map(|e| e.value).collect();

    let mut presets = Vec::new();
    for name in [BFM, KNN] {
        let mut p = lib(Preset::parse(name))?;
        p.set_seed(6);
        presets.push(p);
    }
    let run = lib(make_blend_run(&outer.train, &presets, 0.8, 6, &test_pairs, false))?;
    let d = &run.dataset;
    ensure!(d.n_models() == 2 && d.columns.iter().all(|c| c.len() == d.n_rows()), "bad blend dataset shape");

    let model = lib(fit_blender(d, BlendMethod::Ols, 0.0))?;
    let fitted = lib(model.predict_dataset(d))?;
    let blend_in = rmse_values(&fitted, &d.targets);
    let singles_in: Vec<f64> = d.columns.iter().map(|c| rmse_values(c, &d.targets)).collect();
    let best_in = singles_in.iter().copied().fold(f64::INFINITY, f64::min);
    ensure!(blend_in <= best_in + SPAN_TOL, "blend in-sample rmse {blend_in} > best single {best_in}");

    let blend_test: Vec<f64> = (0..test_pairs.len())
        .map(|q| cfkit::blend::blend_predict(&model, &[run.query_columns[0][q], run.query_columns[1][q]]))
        .collect::<cfkit::Result<_>>()
        .map_err(|e| e.to_string())?;
    let test_blend = clipped_rmse(&blend_test, &test_truth);
    let test_singles: Vec<f64> = run.query_columns.iter().map(|c| clipped_rmse(c, &test_truth)).collect();
    let best_test = test_singles.iter().copied().fold(f64::INFINITY, f64::min);
    let direction = if test_blend <= best_test { "blend <= best single" } else { "blend > best single" };

    Ok(format!(
        "blend-train rmse: blend {blend_in:.4}, {BFM} {:.4}, {KNN} {:.4}; test rmse: blend {test_blend:.4}, singles {:.4} / {:.4} ({direction}); weights {:?}",
        singles_in[0], singles_in[1], test_singles[0], test_singles[1], model.weights
    ))
}
