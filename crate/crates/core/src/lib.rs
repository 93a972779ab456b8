//! Hyperspherical uniformity gap (HUG) losses and generalized neural collapse
//! (GNC) diagnostics for point configurations on unit hyperspheres.
//!
//! The crate works in the unconstrained-features setting: features and class
//! proxies are free optimization variables, so every loss can be minimized
//! directly with projected gradient descent ([`optim`]) and inspected with the
//! diagnostics in [`gnc`]. Closed-form optima and brute-force references live
//! in [`oracle`]; [`runner`] ties everything together into reproducible
//! experiments.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too; index loops
// read better than iterator chains over symmetric matrices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod energy;
pub mod error;
pub mod geometry;
pub mod gnc;
pub mod losses;
pub mod optim;
pub mod oracle;
pub mod proxies;
pub mod rng;
pub mod runner;

pub use energy::{KernelSpec, PairExtremum, Reduction};
pub use error::{Error, Result};
pub use geometry::{Labels, PointConfig, RawMatrix};
pub use gnc::GncReport;
pub use losses::{LabeledState, LossGrads, LossOutput, LossSpec, LossVariant};
pub use optim::{OptimConfig, Schedule, Trajectory, TrajectoryRecord};
pub use proxies::{ProxySet, ProxyStrategy};
pub use runner::{ExperimentConfig, RunManifest};
