//! Geodesic distance on surfaces by the closest point heat method.
//!
//! A surface is represented by its closest point map on a narrow band of
//! a Cartesian grid. Distances from point sources come from one implicit
//! heat step followed by a Poisson solve, both posed as sparse linear
//! systems on the band.

pub mod band;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod operators;
pub mod solver;
pub mod source;

pub use error::{CphmError, Result, Stage};
pub use geometry::{Point3, Surface};
pub use solver::{cphm_run, CphmConfig, DistanceField, Run, RunReport};
