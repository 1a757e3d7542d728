//! Boundary-detection toolkit.
//!
//! The crate covers three layers of a class-agnostic boundary pipeline:
//!
//! * [`boundary`] turns per-pixel region label maps into instance-level
//!   boundary annotations, thins them to one pixel width and gathers dataset
//!   statistics.
//! * [`bench`] scores soft boundary predictions against binary ground truth
//!   using tolerance-radius correspondence and ODS/OIS/AP summaries.
//! * [`net`] is a small, dependency-free multi-scale convolutional boundary
//!   detector with side-output fusion, weighted cross-entropy losses, a
//!   staged training schedule and finite-difference gradient checking.
//!
//! [`synth`], [`dataset`], [`io`], [`manifest`] and [`config`] provide the deterministic
//! synthetic scenes, file formats and configuration used by the `sbd` CLI.

pub mod bench;
pub mod boundary;
pub mod config;
pub mod dataset;
mod error;
pub mod io;
pub mod manifest;
mod maps;
pub mod net;
pub mod synth;

pub use error::{Error, FormatError, Result};
pub use maps::{BoundaryMap, LabelMap, SoftBoundaryMap};
