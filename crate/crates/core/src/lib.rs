//! Data-driven robust model-predictive control synthesis.
//!
//! Controllers are synthesized straight from measured input/state trajectories
//! (no identified model) by solving LMI problems whose constraints hold for
//! every system consistent with the data, then checked independently by
//! simulation and matrix analysis.

pub mod cli;
pub mod config;
pub mod datalab;
pub mod io;
pub mod lmi;
pub mod matcore;
pub mod plants;
pub mod sdp;
pub mod simloop;
pub mod synthesis;
