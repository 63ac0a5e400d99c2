//! Correlation networks and walk-based centralities for portfolio selection.
//!
//! The crate turns daily stock returns into a market graph, ranks the
//! stocks with degree, betweenness, resolvent (Katz), exponential and
//! nonbacktracking-walk centralities, builds constrained portfolios out of
//! the most central or most peripheral names and evaluates them with a
//! walk-forward protocol.
//!
//! Everything here is pure computation over owned buffers. The crate is
//! `no_std` (with `alloc`) when the default `std` feature is disabled; file
//! formats, the parallel grid runner and the command line live in the
//! companion `walkfolio` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod backtest;
pub mod centrality;
pub mod corrmat;
pub mod date;
mod error;
pub mod graphbuild;
pub mod linalg;
mod math;
pub mod metrics;
pub mod panel;
pub mod portfolio;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
