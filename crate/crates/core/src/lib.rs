//! Coupling geometry, coupled particle simulation and transport estimates for
//! weakly interacting mean-field particle systems
//!
//! ```text
//! dX^i = -∇V(X^i) dt - (1/N) Σ_j ∇W(X^i - X^j) dt + √2 dB^i
//! ```
//!
//! and their McKean-Vlasov limit. The crate is `no_std` (it needs `alloc`);
//! file formats, the command line and thread pools live in the `meanfield`
//! companion crate.
//!
//! The modules follow the pipeline:
//!
//! * [`model`]: confinement/interaction pairs, the curvature profile κ and
//!   sampled checks of the standing assumptions;
//! * [`rates`]: R₀, R₁, the concave distance `f`, the contraction rate `c`
//!   and the resulting propagation-of-chaos bound;
//! * [`simulate`]: Euler-Maruyama stepping of the particle system coupled to
//!   i.i.d. nonlinear copies by reflection/synchronous coupling;
//! * [`metrics`]: coupling-based and exact Kantorovich estimates.
#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;
pub mod exec;
pub(crate) mod math;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod points;
pub mod rates;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
pub use points::Points;
