//! Test support for `relmatch`: independent oracles, random input
//! samplers, embedded golden fixtures and the property suite behind
//! `relmatch verify`.

use std::fmt;
use std::time::Duration;

pub mod goldens;
pub mod reference;
pub mod sample;
pub mod suite;

/// Outcome of one named property check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Largest error observed (units depend on the check).
    pub worst: f64,
    pub tol: f64,
    pub detail: String,
    pub elapsed: Duration,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, worst: f64, tol: f64, detail: String, elapsed: Duration) -> Self {
        Self { name: name.into(), passed, worst, tol, detail, elapsed }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:4}  {:<66} worst {:>10.3e}  tol {:>8.1e}  {:>7.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tol,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

/// Prints one line per check and returns whether all passed.
pub fn report(checks: &[Check]) -> bool {
    for c in checks {
        println!("{c}");
    }
    checks.iter().all(|c| c.passed)
}
