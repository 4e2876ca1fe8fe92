use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use atomip::config::RunConfig;

/// Conventions a reader needs to reproduce or compare a run.
pub const CONVENTIONS: &[&str] = &[
    "time in µs, amplitudes in rad/µs, hbar = 1",
    "samples on t_k = k*dt including t = 0; N_T counts every reported sample",
    "decoding takes the most populated level per variable; ties go to the lowest value",
    "O = 0 exactly when every sample is feasible",
    "branch and bound: best-first, every LP-solved node counted, root included",
    "external couplings attach at level min(variable index, highest allowed level)",
];

#[derive(Serialize)]
pub struct ProblemInfo {
    pub path: String,
    pub digest: String,
    pub canonical: String,
}

#[derive(Serialize)]
pub struct RunReport<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub mode: &'static str,
    pub problem: ProblemInfo,
    pub seed: Option<u64>,
    pub config: Option<&'a RunConfig>,
    pub results: &'a T,
    pub conventions: &'static [&'static str],
}

impl<'a, T: Serialize> RunReport<'a, T> {
    pub fn new(
        mode: &'static str,
        path: &Path,
        canonical: &str,
        seed: Option<u64>,
        config: Option<&'a RunConfig>,
        results: &'a T,
    ) -> Self {
        RunReport {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            mode,
            problem: ProblemInfo {
                path: path.display().to_string(),
                digest: digest(canonical),
                canonical: canonical.to_string(),
            },
            seed,
            config,
            results,
            conventions: CONVENTIONS,
        }
    }
}

/// SHA-256 of the canonical problem text, hex encoded.
pub fn digest(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}
