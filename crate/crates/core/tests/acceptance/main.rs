//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test -p cfkit --test acceptance`.
//! Criteria run one after another so timing checks are not disturbed.

#[path = "../common/mod.rs"]
mod common;

mod blending;
mod bfm;
mod complexity;
mod determinism;
mod invariants;
mod oracles;
mod rank_sweep;
mod similarity_suite;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

/// Outcome of one criterion: a summary on success, the reason on failure.
pub type Verdict = Result<String, String>;

/// Fails the enclosing criterion with a formatted reason.
#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !($cond) {
            return Err(format!($($fmt)+));
        }
    };
}

/// Converts a library error into a criterion failure.
pub fn lib<T>(r: cfkit::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

type Criterion = (u32, &'static str, fn() -> Verdict);

const CRITERIA: [Criterion; 8] = [
    (1, "oracle equivalences", oracles::run),
    (2, "optimization invariants", invariants::run),
    (3, "similarity suite", similarity_suite::run),
    (4, "BFM synthetic recovery", bfm::run),
    (5, "complexity checks", complexity::run),
    (6, "blending end-to-end", blending::run),
    (7, "determinism", determinism::run),
    (8, "rank-sweep shape", rank_sweep::run),
];

fn main() -> ExitCode {
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, f) in CRITERIA {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS [{id}] {name} ({secs:.1}s): {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL [{id}] {name} ({secs:.1}s): {reason}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
