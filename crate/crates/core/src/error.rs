use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes that do not line up (table length vs grid, stage counts, ...).
    #[error("structural error: {0}")]
    Structural(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("stage {} has no rate function (model has {num_stages} stages, the last one does not divide)", .stage + 1)]
    NoRateForStage { stage: usize, num_stages: usize },

    #[error("model assumptions violated:\n{0}")]
    Assumptions(ValidationReport),

    #[error(
        "step-size guard violated: dt * max_rate = {product:.4e} > 0.5 (dt = {dt:e}, max_rate = {max_rate:e}/day)"
    )]
    StabilityGuard { dt: f64, max_rate: f64, product: f64 },

    #[error("positivity violated in stage {} at grid index {index}: value {value:e} below tolerance floor {floor:e}", .stage + 1)]
    Positivity {
        stage: usize,
        index: usize,
        value: f64,
        floor: f64,
    },

    #[error("solver failed at t = {time} days: {source}")]
    Step {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown preset `{0}` (expected one of cal1-single, cal1-multi, cal1-flat, cal2-hopf)")]
    UnknownPreset(String),

    #[error("grid with {num_points} points cannot represent preset maximum x = {x} within half a cell (nearest point off by {offset:e})")]
    MisalignedGrid { num_points: usize, x: f64, offset: f64 },

    #[error("no positive equilibrium: stem-cell self-renewal {0} must exceed 1/2")]
    NoEquilibrium(f64),

    #[error("initial density of stage {} has zero sup-norm", .stage + 1)]
    ZeroInitialNorm { stage: usize },

    #[error("invalid analysis window: {0}")]
    Window(String),

    #[error("operation requires a cell-centred (midpoint) grid")]
    NotMidpointGrid,
}
