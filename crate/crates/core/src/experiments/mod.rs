//! Experiment runner behind the `gffdisc` command line: layered
//! configuration, dispatch to the library, report rows with provenance and
//! atomic output.

mod checks;
mod config;
mod report;
mod run;

pub use checks::{
    disconnection_curve, good_pair_paths, markov_check, tilt_lower_bound, DisconnectionCurve, MarkovReport,
    PathReport, TiltBoundReport,
};
pub use config::{Experiment, ExperimentConfig, Format, Mode, RateName};
pub use report::{config_hash, to_csv, to_json, write_report, Provenance, Report, Row, SCHEMA_VERSION};
pub use run::run;
