//! Expectation-propagation Gaussian process classification and active
//! learning for physical-layer authentication over IRS-assisted MIMO
//! channel fingerprints.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod active;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod gpc;
pub mod identity;
pub mod kernel;
pub mod metrics;
pub mod normal;
pub mod quadrature;
pub mod report;
pub mod seeds;

pub use active::{
    egpc_loop, AcquisitionConfig, IterationRecord, KernelPolicy, LabelOracle, LoopConfig, Pools, SimulatedOracle, Strategy,
    UtilityReport,
};
pub use error::{Error, Result};
pub use gaussian::{Gaussian1D, GaussianND, ProbitMoments};
pub use gpc::{ep_fit, fit_hyperparameters, EpOptions, GpcModel, HyperGrid, JointPredictive, SiteParams};
pub use identity::Identity;
pub use kernel::Kernel;
pub use metrics::{compute_error_difference, compute_error_rate};
pub use experiment::{run_experiment, ExperimentConfig, Sweep};
pub use report::{emit_plot_data, Figure};
