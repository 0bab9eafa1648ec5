//! Variational machinery for the a-priori unstable pendulum–rotator system
//!
//! The system couples a pendulum `u` to a rotator `v` through a weak,
//! time-periodic potential
//!
//! ```text
//! L(u, v, u_t, v_t, t) = u_t²/2 + v_t²/2 + V(u, v, t),
//! V(u, v, t) = ε (1 − cos u)(1 − μ f(u, v, t)),
//! ```
//!
//! and this crate provides the desk-scale numerical toolbox around it:
//!
//! * [`model`] — the potential, its gradient, the adjusted Lagrangian density
//!   and the standing-assumption checks;
//! * [`separatrix`] — the unperturbed separatrix and the explicit comparison
//!   curves (sub/super-solutions) with grid verifiers of their differential
//!   inequalities;
//! * [`melnikov`] — the Melnikov primitive `M_ω` by quadrature, torus field
//!   scans and the non-degeneracy condition (S2);
//! * [`barrier`] — one-sided action minimizers, Peierls barriers `S_ω`,
//!   heteroclinic gluing and condition (S1);
//! * [`shadowing`] — jump plans, Bernoulli itineraries and the blended
//!   approximate shadowing orbit `q⁰`;
//! * [`gradientflow`] — the semi-implicit integrator for the formally
//!   gradient dynamics `q_s = q_tt − ∇V` on truncated domains, together with
//!   the uniformly-local and localized norms;
//! * [`diagnostics`] — audits of running relaxations: the action balance law,
//!   tube bounds, weighted derivative bounds, intersection parity and the
//!   dissipation level-set estimator.

pub mod barrier;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod gradientflow;
pub mod melnikov;
pub mod model;
pub mod opt;
pub mod quad;
pub mod separatrix;
pub mod shadowing;

pub use error::{Error, Result};
pub use gradientflow::{BoundaryCondition, FlowState, Trajectory};
pub use model::{CouplingFunction, CouplingTerm, SystemParams};

/// One full turn of any of the angle variables.
pub const TAU: f64 = 2.0 * std::f64::consts::PI;
