//! Analysis toolkit for a two-element repairable system with one warm-standby
//! element.
//!
//! Three layers build on each other:
//!
//! * [`exact_markov`] — closed-form and numerical analysis of the
//!   constant-rate (exponential) model: Kolmogorov forward equations,
//!   stationary distribution, generator spectrum.
//! * [`intensity`] + [`simulator`] — the general model where failure and
//!   repair intensities depend on the full state (flags plus elapsed times)
//!   and are bounded above and below; simulated by thinning against the
//!   declared upper bounds.
//! * [`coupling`] + [`bounds`] — a constructive coupling of two copies of the
//!   process and certified exponential bounds `K * exp(-alpha t)` on the
//!   total-variation distance to stationarity, cross-validated against
//!   simulation.
//!
//! [`hazard`] carries the piecewise-linear hazard machinery the coupling
//! construction draws residual times from; [`quad`] is the adaptive
//! quadrature behind the intensity calculus; [`rng`] fixes the reproducible
//! per-path random-number streams.

pub mod bounds;
pub mod coupling;
pub mod exact_markov;
pub mod hazard;
pub mod intensity;
pub mod quad;
pub mod rng;
pub mod simulator;
