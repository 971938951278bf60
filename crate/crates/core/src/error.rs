use thiserror::Error;

use crate::geometry::Point3;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum CphmError {
    #[error("ambiguous closest point for ({:.6}, {:.6}, {:.6}): minimizers {:?} and {:?} are equidistant", .point.x, .point.y, .point.z, .first, .second)]
    Ambiguous {
        point: Point3,
        first: [f64; 3],
        second: [f64; 3],
    },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("exact geodesic oracle is not available for {0}")]
    UnsupportedOracle(&'static str),

    #[error("band closure violated: {0}")]
    BandClosure(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("quadratic patch fit failed: {0}")]
    Fit(String),

    #[error("source configuration error: {0}")]
    Source(String),

    #[error("source ({:.6}, {:.6}, {:.6}) is {distance:.4e} from the surface, beyond the band radius {bandwidth:.4e}", .point.x, .point.y, .point.z)]
    SnapFailure {
        point: Point3,
        distance: f64,
        bandwidth: f64,
    },

    #[error("linear solve failed ({reason}): N = {n}, nnz = {nnz}, relative residual = {residual:.3e}")]
    Solver {
        reason: String,
        n: usize,
        nnz: usize,
        residual: f64,
    },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<CphmError>,
    },
}

/// Pipeline stage, used to tag errors and timings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Band,
    Operators,
    LocalReconstruction,
    Heat,
    Poisson,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Band => "band",
            Stage::Operators => "operators",
            Stage::LocalReconstruction => "local reconstruction",
            Stage::Heat => "heat",
            Stage::Poisson => "poisson",
        };
        f.write_str(name)
    }
}

impl CphmError {
    pub(crate) fn at(self, stage: Stage) -> Self {
        match self {
            e @ CphmError::Stage { .. } => e,
            e => CphmError::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, with stage tags removed.
    pub fn root(&self) -> &CphmError {
        match self {
            CphmError::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T, E = CphmError> = std::result::Result<T, E>;
