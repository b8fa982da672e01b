use std::fs;
use std::path::Path;
use std::process::Command;

use cfkit::presets::TABLE_ROWS;
use cfkit::synthetic::{low_rank_ratings, LowRankSpec};

use crate::{ensure, lib, Verdict};

/// Every preset family; BFM sweeps are shortened to keep the run brief.
fn all_presets() -> Vec<String> {
    let mut names: Vec<String> = ["global-mean", "svd", "als", "funksvd", "item-pcc-normal-60", "user-pcc-normal-all"]
        .map(str::to_owned)
        .to_vec();
    for (_, name) in TABLE_ROWS {
        names.push(if name.starts_with("bfm") { format!("{name}:iters=40") } else { name.to_owned() });
    }
    names.push("both-pcc-normal-60-w0.06".into());
    names.push("scsr:max_iter=3".into());
    names
}

fn run_cli(args: &[&str], threads: Option<&str>) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cfkit"));
    cmd.args(args).env_remove("CFKIT_SEED");
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "cfkit {:?} failed: {}", args, String::from_utf8_lossy(&out.stderr));
    Ok(())
}

fn write_ratings(path: &Path) -> Result<(), String> {
    let spec = LowRankSpec { n_users: 60, n_items: 40, rank: 3, density: 0.3, noise: 0.3, integer: true, seed: 12 };
    let m = lib(low_rank_ratings(&spec))?;
    let mut text = String::from("Id,Prediction\n");
    for e in m.entries() {
        text.push_str(&format!("r{}_c{},{}\n", e.user + 1, e.item + 1, e.value));
    }
    fs::write(path, text).map_err(|e| e.to_string())
}

pub fn run() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("ratings.csv");
    write_ratings(&data)?;
    let presets = all_presets();
    let joined = presets.join(";");
    let path = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let data = data.to_string_lossy().into_owned();

    let mut files = Vec::new();
    for (tag, threads) in [("a", None), ("b", None), ("c", Some("1"))] {
        let metrics = path(&format!("eval_{tag}.csv"));
        let args = ["evaluate", "--data", &data, "--seed", "5", "--presets", &joined, "--no-timing", "--out-metrics", &metrics];
        run_cli(&args, threads)?;
        let blend = path(&format!("blend_{tag}.csv"));
        let sub = path(&format!("sub_{tag}.csv"));
        let args = [
            "blend", "--data", &data, "--seed", "5", "--preset", "blend-final-ridge", "--iters", "40", "--no-timing",
            "--out-metrics", &blend, "--out-submission", &sub,
        ];
        run_cli(&args, threads)?;
        files.push([metrics, blend, sub]);
    }
    for kind in 0..3 {
        let reference = fs::read(&files[0][kind]).map_err(|e| e.to_string())?;
        for other in &files[1..] {
            let bytes = fs::read(&other[kind]).map_err(|e| e.to_string())?;
            ensure!(bytes == reference, "{} differs from {}", other[kind], files[0][kind]);
        }
    }
    let rows = fs::read_to_string(&files[0][0]).map_err(|e| e.to_string())?.lines().count() - 1;
    ensure!(rows == presets.len(), "expected {} metrics rows, got {rows}", presets.len());
    Ok(format!("{rows} presets + blend-final-ridge reproduced bit-exactly over 3 runs (one single-threaded)"))
}
