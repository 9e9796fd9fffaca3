//! Scenario-driven end-to-end runs of the two services, in process or
//! against live endpoints, with faults injected at the bridge.

pub mod bundled;
pub mod deploy;
pub mod report;
pub mod runner;
pub mod script;

pub use deploy::Deployment;
pub use report::{diff_state, normalize, timestamp_fields, Difference, RunReport, StepReport};
pub use runner::run_scenario;
pub use script::{Fault, FaultSpec, ScenarioScript};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("script error: {0}")]
    ScriptParse(String),
    #[error("endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error(transparent)]
    Service(#[from] revbridge_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Internal(String),
}

/// Verdict of a report against a golden file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoldenVerdict {
    Match,
    Mismatch { first_difference: String },
    Missing,
}

/// Runs `script` in process with its own fault schedule.
pub fn run_in_process(script: &ScenarioScript, seed: u64) -> Result<RunReport, HarnessError> {
    run_with_faults(script, seed, &script.faults)
}

/// Runs `script` in process, replacing its fault schedule by `faults`.
pub fn run_with_faults(
    script: &ScenarioScript,
    seed: u64,
    faults: &[FaultSpec],
) -> Result<RunReport, HarnessError> {
    let deployment = Deployment::in_process(seed, faults)?;
    run_scenario(script, &deployment, seed)
}

/// A seeded random fault schedule over `steps` steps: each step gets a fault
/// with probability one half.
pub fn random_faults(steps: usize, seed: u64) -> Vec<FaultSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for step in 0..steps {
        if rng.random_bool(0.5) {
            let fault = match rng.random_range(0..3) {
                0 => Fault::Duplicate,
                1 => Fault::Delay(rng.random_range(1..=5_000)),
                _ => Fault::DropOnce,
            };
            out.push(FaultSpec { step, fault });
        }
    }
    out
}

/// Compares `report` with the golden text, line by line.
pub fn check_golden(report: &RunReport, golden: Option<&str>) -> GoldenVerdict {
    let Some(golden) = golden else {
        return GoldenVerdict::Missing;
    };
    let actual = report.golden_text();
    if actual == golden {
        return GoldenVerdict::Match;
    }
    let first_difference = actual
        .lines()
        .zip(golden.lines())
        .enumerate()
        .find(|(_, (a, g))| a != g)
        .map(|(i, (a, g))| format!("line {}: got {a:?}, golden has {g:?}", i + 1))
        .unwrap_or_else(|| "reports differ in length".into());
    GoldenVerdict::Mismatch { first_difference }
}

/// Like [`check_golden`] but structural, skipping the fields in `ignore`.
/// Used for faulted runs, whose timestamps move with injected delays.
pub fn check_golden_ignoring(
    report: &RunReport,
    golden: Option<&str>,
    ignore: &std::collections::BTreeSet<String>,
) -> GoldenVerdict {
    let Some(golden) = golden else {
        return GoldenVerdict::Missing;
    };
    let expected: RunReport = match serde_json::from_str(golden) {
        Ok(r) => r,
        Err(e) => {
            return GoldenVerdict::Mismatch {
                first_difference: format!("golden does not parse: {e}"),
            }
        }
    };
    match diff_state(report, &expected, ignore).into_iter().next() {
        None => GoldenVerdict::Match,
        Some(d) => GoldenVerdict::Mismatch {
            first_difference: format!("{}: got {:?}, golden has {:?}", d.path, d.left, d.right),
        },
    }
}
