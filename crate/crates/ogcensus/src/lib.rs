//! Orbit lookup trees for finite group actions on subsets, GF(2^k) finite
//! geometry (including the spinor model of the 10-dimensional orthogonal
//! Grassmannian), and enumeration of curve candidates over F2 organized by
//! Brill–Noether strata.
//!
//! Start with the runnable examples (`cargo run --release --example …`) for
//! a tour of each capability; the `ogcensus` binary exposes the same
//! pipelines as subcommands.

pub mod permgroup;
pub mod retract;
