//! Exact covariance of vertically partitioned data.
//!
//! Each site holds all rows of a subset of the columns. Sites compute the
//! covariance of their own columns, ship raw columns to the ring successors
//! chosen by [`schedule`], compute cross blocks from the columns they
//! receive, and a coordinator merges everything into the global matrix.
//! The merged matrix is bit-identical to the single-machine result from
//! [`covariance::centralized_covariance`].
//!
//! This crate is `no_std` (it needs `alloc`) and holds only the arithmetic,
//! the schedule and the wire codec; IO, transports and the CLI live in the
//! `dcm` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod costmodel;
pub mod covariance;
pub mod eigen;
pub mod matrix;
pub mod schedule;
pub mod wire;

pub use costmodel::{centralized_cost, distributed_cost, speedup_lower_bound, CostError, CostReport};
pub use covariance::{
    centralized_covariance, covariance_pair, cross_covariance, local_covariance, merge_blocks, ColumnBlock, CovBlock,
    CovarianceError, GlobalCovariance, MergeError, SiteId,
};
pub use eigen::{jacobi_eigen, symmetric_eigen, EigenDecomposition, EigenError};
pub use matrix::{DenseMatrix, MatrixError};
pub use schedule::{build_schedule, predecessor, validate_schedule, CoverageReport, Schedule, ScheduleError};
pub use wire::{decode_header, decode_message, encode_message, MessageKind, Payload, ProtocolMessage, WireError};
