//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Pass a substring as the first free argument to run a subset, e.g.
//! `cargo test -p flowsr-core --test acceptance -- smoke`.

#[path = "../common/mod.rs"]
mod common;
mod criteria;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 10] = [
    (1, "gradient_suite", criteria::gradient_suite),
    (2, "warp_oracle", criteria::warp_oracle),
    (
        3,
        "normalization_invariant",
        criteria::normalization_invariant,
    ),
    (4, "loss_closed_forms", criteria::loss_closed_forms),
    (5, "r1_double_backprop", criteria::r1_double_backprop),
    (6, "sr_smoke_train", criteria::sr_smoke_train),
    (7, "degrade_smoke_train", criteria::degrade_smoke_train),
    (8, "progressive_growth", criteria::progressive_growth),
    (9, "metric_oracles", criteria::metric_oracles),
    (10, "end_to_end_pipeline", criteria::end_to_end_pipeline),
];

fn main() -> ExitCode {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    if std::env::args().any(|a| a == "--list") {
        for (n, name, _) in CRITERIA {
            println!("c{n:02}_{name}: test");
        }
        return ExitCode::SUCCESS;
    }
    let mut failed = 0;
    let mut ran = 0;
    for (n, name, f) in CRITERIA {
        let id = format!("c{n:02}_{name}");
        if filter.as_deref().is_some_and(|s| !id.contains(s)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let out = match panic::catch_unwind(AssertUnwindSafe(f)) {
            Ok(o) => o,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Outcome::new(false, format!("panicked: {msg}"))
            }
        };
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {n:>2} {tag} {name} ({:.1}s): {}",
            start.elapsed().as_secs_f64(),
            out.detail
        );
        if !out.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
