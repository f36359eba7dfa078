//! Runs every experiment at its default scale and prints one line per
//! criterion. Criteria listed in `UNATTAINABLE` are reported like any other
//! but do not fail the run; everything else must pass.
//!
//! `CHAOSLAB_ONLY=E3,S` restricts the run to a subset. `CHAOSLAB_KEEP=dir`
//! keeps the bundles.

use std::process::ExitCode;
use std::time::Instant;

use chaoslab::experiments::{run, verify_dir, ExperimentConfig, ExperimentId, Verdict};

/// Criteria that fail at the prescribed sample sizes for structural
/// reasons; see the notes in the README.
const UNATTAINABLE: &[&str] = &["E5.trend", "E8.discrepancy", "E9.subcritical"];

fn selected() -> Vec<ExperimentId> {
    match std::env::var("CHAOSLAB_ONLY") {
        Ok(list) => list.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse().expect("experiment id")).collect(),
        Err(_) => ExperimentId::ALL.to_vec(),
    }
}

fn main() -> ExitCode {
    let keep = std::env::var("CHAOSLAB_KEEP").ok();
    let scratch = tempfile::tempdir().expect("temp dir");
    let (mut pass, mut fail, mut tolerated) = (0, 0, 0);
    for id in selected() {
        let cfg = ExperimentConfig::for_experiment(id);
        let start = Instant::now();
        let bundle = match run(id, &cfg) {
            Ok(b) => b,
            Err(e) => {
                println!("FAIL     {:<22} run aborted: {e}", id.code());
                fail += 1;
                continue;
            }
        };
        let dir = match &keep {
            Some(k) => std::path::PathBuf::from(k).join(id.code()),
            None => scratch.path().join(id.code()),
        };
        let lines = bundle.criteria();
        for l in &lines {
            match l.verdict {
                Verdict::Pass => pass += 1,
                Verdict::Fail if UNATTAINABLE.contains(&l.id.as_str()) => tolerated += 1,
                Verdict::Fail => fail += 1,
                Verdict::NotRun => fail += 1,
            }
            println!("{l}");
        }
        // The verdicts on disk must be the verdicts of the run.
        let reread = bundle.write(&dir).and_then(|_| verify_dir(&dir));
        let same = match &reread {
            Ok(r) => r.len() == lines.len() && r.iter().zip(&lines).all(|(a, b)| a.id == b.id && a.verdict == b.verdict && a.measured == b.measured),
            Err(_) => false,
        };
        if same {
            pass += 1;
        } else {
            fail += 1;
        }
        println!("{:<8} {:<22} verify on the written bundle reproduces the verdicts", if same { "PASS" } else { "FAIL" }, format!("{}.bundle", id.code()));
        println!("         {:<22} {:.1} s", format!("{}.runtime", id.code()), start.elapsed().as_secs_f64());
    }
    println!("\n{pass} passed, {fail} failed, {tolerated} known-unattainable failures");
    if fail == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
