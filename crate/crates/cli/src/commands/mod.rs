//! Subcommand implementations. Each writes its artifacts into a [`RunDir`]
//! and reports a [`Status`]; the caller writes the manifest.

mod sample;
mod theory;
mod verify;

pub use sample::{
    estimated_flops, resume, sample, sweep, ModSampleSummary, SampleSummary, TsSampleSummary, CHECKPOINT, CONFIG,
};
pub use theory::{largest_h3_jump, mod_point, mod_theory, ts_theory, Boundary, H3Jump};
pub use verify::{
    gradient_checks, integral_checks, mc_integrals, prior_checks, run_checks, symmetry_checks, verify, Check,
    VerifyReport,
};

use serde::Serialize;

/// Ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Clean,
    Partial,
    VerifyFailed,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Clean => 0,
            Status::Partial => 2,
            Status::VerifyFailed => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Clean => "clean",
            Status::Partial => "partial",
            Status::VerifyFailed => "verification_failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub status: Status,
}

impl Outcome {
    pub fn new(status: Status) -> Self {
        Outcome { status }
    }
}
