//! Fair-regression optimization toolkit.
//!
//! Trains linear least-squares and logistic models under discretized
//! demographic-parity penalties or constraints, via three tiers:
//!
//! - a strong extended convex relaxation solved by a self-contained
//!   first-order method ([`relax`]),
//! - coordinate descent over breakpoint-crossing candidate sets ([`cd`]),
//! - exact branch-and-bound over the strong formulation ([`bnb`]),
//!
//! plus fairness metrics and proxies ([`fairness`]), model IRs for the
//! natural big-M and strong formulations ([`formulations`]), loss/perspective
//! calculus ([`losses`]), and data handling and synthetic generators
//! ([`data`]).

pub mod baseline;
pub mod bnb;
pub mod cd;
pub mod data;
pub mod error;
pub mod fairness;
pub mod formulations;
pub mod losses;
pub mod relax;

pub use error::{Error, Result};
