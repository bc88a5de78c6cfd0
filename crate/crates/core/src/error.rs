use crate::geometry::Point;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point ({}, {}) lies outside {region}", .point.x, .point.y)]
    OutsideRegion { region: String, point: Point },

    #[error("start ({}, {}) lies on the positive x-axis, where the flow blows up", .0.x, .0.y)]
    PositiveAxis(Point),

    #[error("no Lyapunov piece covers ({}, {}); rho is too small", .0.x, .0.y)]
    Dispatch(Point),

    #[error("constants infeasible: {0}")]
    Infeasible(String),

    #[error("BVP solver did not converge; residual history {history:?}")]
    BvpNonConvergence { history: Vec<f64> },

    #[error("requested horizon {requested} is shorter than the minimal constructed time {minimal}")]
    HorizonTooShort { requested: f64, minimal: f64 },

    #[error("event `{0}` never fired within the safety horizon")]
    EventNotFound(&'static str),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
}
