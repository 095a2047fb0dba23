//! Bayes linear emulation of simulator networks.
//!
//! The crate builds second-order (mean/variance) emulators of expensive
//! simulators and links them together so that the output belief of one
//! emulator becomes the uncertain input of the next. Two linking methods are
//! provided:
//!
//! * [`uis`]: Monte Carlo sampling of the uncertain input through a trained
//!   emulator, reporting the variance split into its input-driven and
//!   emulator-driven parts.
//! * [`uible`]: closed-form adjusted moments at an uncertain input, using a
//!   Gaussian correlation extended to random-variable arguments.
//!
//! [`network`] wires emulators (or exact functions) into a directed acyclic
//! graph and propagates beliefs through it; it also offers direct emulation of
//! the composite function as a baseline. [`diagnostics`] scores predictions
//! against truth, and [`testbed`] packages the analytic test functions and
//! the reference experiments.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod belief;
pub mod cli;
pub mod diagnostics;
pub mod emulator;
pub mod error;
pub mod network;
pub mod testbed;
pub mod uible;
pub mod uis;

pub use belief::{JointBelief, SecondOrderBelief};
pub use emulator::{Design, Emulator, FitConfig, Hyperparameters, RegressionBasis};
pub use error::{Error, Result};
pub use network::{Method, NetworkSpec, NodeModel};
pub use uible::UncertainInput;
pub use uis::{SamplingPolicy, UisResult};
