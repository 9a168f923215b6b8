// SPDX-License-Identifier: MIT OR Apache-2.0

//! Change-point localization for signals with piecewise-polynomial means.
//!
//! An l0-penalized least-squares partition gives initial change points;
//! each is then rescanned inside a window bounded by the neighbouring
//! midpoints. The crate also carries a ground-truth signal model,
//! two-point lower-bound constructions and a Monte Carlo harness.

#![allow(clippy::needless_range_loop)]

mod dd;
pub mod error;
mod linalg;
pub mod partition_solver;
pub mod refinement;
pub mod segment_cost;
pub mod signal_model;
pub mod simulation;
