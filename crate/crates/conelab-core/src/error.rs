//! Error type shared by every solver stage.

use thiserror::Error;

/// Failures raised by geometry construction, the solvers and the monitors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    /// The base class collapses no later than the fiber class, so the model has no valid limit.
    #[error("class degeneracy: a/2 = {half_a} must be smaller than b/(1+beta) = {base_limit}")]
    ClassDegeneracy { half_a: f64, base_limit: f64 },

    /// A density that must stay positive became nonpositive at a grid node.
    #[error("positivity loss in {what} at node {node} (s = {s}), value {value}")]
    PositivityLoss { what: String, node: usize, s: f64, value: f64 },

    /// The logarithm inside the Monge–Ampère operator received a nonpositive argument.
    #[error("nonpositive logarithm argument at node {node} (s = {s}), value {value}")]
    NonpositiveArgument { node: usize, s: f64, value: f64 },

    /// Newton iteration hit its iteration or damping budget.
    #[error("Newton divergence after {iterations} iterations, residual {residual:e}")]
    NewtonDivergence { iterations: usize, residual: f64 },

    /// Time step underflow in the adaptive march.
    #[error("aborted at t = {t}: time step {dt:e} fell below the floor {floor:e}")]
    Abort { t: f64, dt: f64, floor: f64 },

    /// A decay fit received a nonpositive sample inside its window.
    #[error("nonpositive value {value} at t = {t} inside the fit window")]
    NonpositiveValue { t: f64, value: f64 },

    /// A decay fit window holds too few samples.
    #[error("fit window [{lo}, {hi}] holds {count} samples, at least {needed} required")]
    TooFewSamples { lo: f64, hi: f64, count: usize, needed: usize },

    /// A metric region is too small to be represented on the grid.
    #[error("unresolved region: {count} grid nodes in the ball, at least {needed} required")]
    UnresolvedRegion { count: usize, needed: usize },

    /// Invalid argument or configuration value.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, LabError>;
