use thiserror::Error;

/// Errors raised by the network, field and minimizing-movement solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("connected component {component} of the conductive support has unbalanced sources (sum {sum:e})")]
    UnbalancedComponent { component: usize, sum: f64 },

    #[error("linear solver stalled at relative residual {residual:e}")]
    SingularSystem { residual: f64 },

    #[error("flux support contains {0} loop(s)")]
    LoopyFlux(usize),

    #[error("edge {edge} carries flux with zero conductivity")]
    InfiniteEnergy { edge: usize },

    #[error("spanning tree count {count} exceeds cap {cap}")]
    TooManyTrees { count: f64, cap: usize },

    #[error("infeasible sources: {0}")]
    InfeasibleSources(String),

    #[error("counterexample to the tree property: {0}")]
    CounterexampleFound(String),

    #[error("degenerate permeability tensor in cell {cell} (min eigenvalue {min_eig:e})")]
    DegeneratePermeability { cell: usize, min_eig: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("input field is not irrotational (max discrete curl {0:e})")]
    RotationalInput(f64),

    #[error("sources are not reachable through the conductive support (constraint residual {residual:e})")]
    InfeasibleSupport { residual: f64 },

    #[error("a priori bound violated at step {step}: {what}")]
    BoundViolation { step: usize, what: String },
}

pub type Result<T> = std::result::Result<T, Error>;
