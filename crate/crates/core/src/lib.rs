//! Transient simulation of gas transport on pipe networks.
//!
//! The crate implements the semilinear isothermal/affine gas model on each
//! pipe, three spatial semi-discretizations (a Riemann-invariant upwind
//! scheme and two staggered reference schemes), assembly of a network-wide
//! differential-algebraic system with junction coupling conditions, and time
//! integrators together with scenario files, CSV output and the studies used
//! by the `gasnet` command-line tool.

// `!(x > 0.0)` is used deliberately so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod driver;
pub mod gas_model;
pub mod integrate;
pub mod network;
mod newton;
pub mod numerics;
pub mod scenario_io;
pub mod schemes;
pub mod studies;

pub use gas_model::{PipeGeometry, PressureLaw, RiemannPair};
pub use integrate::{IntegratorConfig, Method, Trajectory};
pub use network::{Dae, Network};
pub use scenario_io::{Scenario, Signal};
pub use schemes::{PipeGrid, PipeState, Scheme, SchemeOptions};
