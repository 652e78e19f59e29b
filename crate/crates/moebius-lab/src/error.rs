//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point at infinity: <v_inf, sigma> vanishes")]
    PointAtInfinity,

    #[error("not an immersion at node {node}: {detail}")]
    NotImmersed { node: usize, detail: String },

    #[error("chart coordinates are not isothermal: max deviation {max_dev:.3e}")]
    NotIsothermal { max_dev: f64 },

    #[error("wrong gauge: {0}")]
    Gauge(String),

    #[error("degenerate sphere congruence at nodes {nodes:?}")]
    DegenerateCongruence { nodes: Vec<usize> },

    #[error("invalid congruence: {0}")]
    InvalidCongruence(String),

    #[error("normal bundle is not flat: max commutator {commutator:.3e} exceeds {threshold:.3e}")]
    NonFlatNormalBundle { commutator: f64, threshold: f64 },

    #[error("connection is not integrable: curvature residual {residual:.3e} exceeds {threshold:.3e}")]
    NotIntegrable { residual: f64, threshold: f64 },

    #[error("critical point of the coordinate map at node {node}")]
    CriticalPoint { node: usize },

    #[error("parameter domain error: {0}")]
    Domain(String),

    #[error("Guichard condition violated: max residual {0:.3e}")]
    GuichardViolated(f64),

    #[error("coordinate system is not orthogonal: max deviation {0:.3e}")]
    NonOrthogonal(f64),

    #[error("degenerate adapted frame: {0}")]
    DegenerateFrame(String),

    #[error("file schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
