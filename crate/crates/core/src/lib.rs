//! Simulation and analysis of active cyber defense dynamics on networks.
//!
//! Nodes are either secure (blue) or compromised (red). Defender and attacker spread
//! along edges at rates given by a combat-power function of the neighborhood. The crate
//! provides
//!
//! * graph generators ([`generate`]) and the graph type ([`graph`]),
//! * combat-power function families ([`combat`]),
//! * the deterministic mean-field system ([`meanfield`]) and the native stochastic
//!   process ([`markov`]),
//! * analytic and empirical thresholds ([`thresholds`]), the binomial approximation that
//!   explains threshold drift ([`binom`]), and comparison metrics ([`metrics`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix `f64`.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod binom;
pub mod combat;
pub mod generate;
pub mod graph;
pub mod markov;
pub mod meanfield;
pub mod metrics;
pub mod scalar;
pub mod thresholds;

pub use combat::{Combat, CombatError, Family};
pub use graph::{Graph, GraphError};
pub use scalar::Scalar;

pub type CombatFunction = combat::Combat<f64>;
pub type CombatFunction32 = combat::Combat<f32>;
pub type MeanFieldTrajectory = meanfield::Trajectory<f64>;
pub type MarkovEnsemble = markov::Ensemble<f64>;
pub type ExpectedDegrees = generate::ExpectedDegreeSequence<f64>;
pub type ThresholdReport = thresholds::ThresholdReport<f64>;
pub type SigmaMarkovEstimate = thresholds::SigmaMarkovEstimate<f64>;
pub type ApproxModel = binom::ApproxModel<f64>;
pub type ComparisonSeries = metrics::ComparisonSeries<f64>;
