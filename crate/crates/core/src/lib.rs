//! Physics-informed neural networks on non-overlapping subdomains coupled
//! through learned Robin transmission conditions, trained with an adaptive
//! augmented Lagrangian.

pub mod alm;
pub mod config;
pub mod ddm;
pub mod geometry;
pub mod metrics;
pub mod net;
pub mod problems;
pub mod report;
