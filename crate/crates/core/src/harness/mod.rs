//! Run configuration, persistence, lifespan scans, reports and the `verify` suite.

mod config;
mod report;
mod run;
mod scan;
mod verify;

pub use config::{resolve_output, RunConfig, OUTPUT_ENV};
pub use report::{report, write_svg, EpsilonFit, ReportSummary};
pub use run::{initial_unknown, load_run, nf_check, simulate, RunMeta, RunSummary, SnapshotEntry};
pub use scan::{
    format_time, lifespan_run, parse_time, read_scan, run_scan, seed_for, write_scan, ScanRow, ScanSpec,
    SCAN_HEADER,
};
pub use verify::{paradiff_suite, verify_all, Check, Injection, VerifyOptions};

/// Build identifier: short commit hash, `-dirty` when the tree had local changes.
pub const BUILD_ID: &str = env!("EPSIM_BUILD_ID");

/// Crate version.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
