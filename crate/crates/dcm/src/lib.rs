//! Ingestion, protocol runtime, reports and the command-line front end for
//! distributed covariance merging. The arithmetic lives in `dcm-core`.

pub mod cli;
pub mod ingest;
pub mod report;
pub mod runtime;
