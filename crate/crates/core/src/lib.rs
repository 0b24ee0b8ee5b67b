//! Parameterized discrete-time cascades for sampled-data control design.
//!
//! The crate builds discrete-time models `F_T(k, x)` from continuous-time
//! plants (Euler, modified Euler, and a tolerance-controlled proxy of the exact
//! sampled model), simulates time-varying cascades
//!
//! ```text
//! x(k+1) = f_T(k, x(k), z(k))
//! z(k+1) = g_T(k, z(k))
//! ```
//!
//! and audits stability, boundedness, continuity and consistency properties on
//! finite grids. Every audit produces a verdict with a re-simulable witness
//! when it fails. The [`unicycle`] module carries the full tracking-control
//! case study built on top of these tools.
//!
//! All checks are numerical: a passing verdict is evidence on the sampled set,
//! a failing one is a concrete counterexample.

pub mod cascade;
pub mod discretize;
pub mod error;
pub mod numerics;
pub mod ode;
pub mod quad;
pub mod sampling;
pub mod stability;
pub mod system;
pub mod unicycle;
pub mod vecops;

pub use cascade::{CascadeSystem, InputSequence, Trajectory};
pub use discretize::{InputLaw, MapLabel, ParameterizedMap, VectorField};
pub use error::{Error, Result};
pub use numerics::{ClassK, HorizonIndex, KlBound};
pub use sampling::BoxDomain;
pub use stability::{StabilityVerdict, VerdictKind, Witness};
pub use system::DiscreteSystem;
