//! Manufactured Neumann problem on the unit upper hemisphere:
//! `lap_S u - u = f` with `u = sin(theta) cos(theta) cos(phi) = x z`,
//! `f = -7 u` and boundary flux `g = -cos(phi)` along the outward conormal.

use log::info;

use super::CphmConfig;
use crate::error::{Result, Stage};
use crate::geometry::{Point3, Surface};
use crate::linalg::{self, NullspacePolicy};
use crate::operators::{neumann_vector, SparseOperator};

/// Error of one verification run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeumannResult {
    pub dx: f64,
    pub n: usize,
    pub rel_error: f64,
    pub residual: f64,
}

/// Reference `(dx, relative error)` pairs for this problem.
pub const NEUMANN_REFERENCE: [(f64, f64); 4] = [
    (0.1, 6.6396e-3),
    (0.05, 1.8217e-3),
    (0.025, 4.7954e-4),
    (0.0125, 1.2362e-4),
];

/// Reference orders between consecutive entries of [`NEUMANN_REFERENCE`].
pub const NEUMANN_REFERENCE_ORDERS: [f64; 3] = [1.8658, 1.9256, 1.9557];

/// Observed order between consecutive runs.
pub fn pairwise_orders(results: &[NeumannResult]) -> Vec<f64> {
    results
        .windows(2)
        .map(|w| (w[0].rel_error / w[1].rel_error).ln() / (w[0].dx / w[1].dx).ln())
        .collect()
}

/// Reference error at `dx`, if tabulated.
pub fn neumann_reference(dx: f64) -> Option<f64> {
    NEUMANN_REFERENCE
        .iter()
        .find(|(d, _)| (d - dx).abs() <= 1e-12 * dx)
        .map(|&(_, e)| e)
}

fn exact(y: &Point3) -> f64 {
    y.x * y.z
}

fn flux(y: &Point3) -> f64 {
    // -cos(phi) on the equator
    -y.x / y.x.hypot(y.y)
}

/// Solve the manufactured problem at `cfg.dx` and measure the relative
/// l-infinity error at the closest points of the band.
pub fn verify_neumann_poisson(cfg: &CphmConfig) -> Result<NeumannResult> {
    cfg.validate()?;
    let surface = Surface::hemisphere(Point3::zeros(), 1.0)?;
    let (band, ops) = cfg.discretize(&surface)?;
    let gamma = cfg.gamma(band.dim());
    let n = band.len();

    let id = SparseOperator::identity(n);
    let a = ops
        .ext_p
        .matmul(&ops.laplacian)
        .lincomb(1.0, &ops.ext_q, gamma)
        .lincomb(1.0, &id, -(1.0 + gamma));
    let g = neumann_vector(&band, &surface, cfg.kappa, |_, y, _| flux(y))?;
    let b: Vec<f64> = band
        .points
        .iter()
        .zip(&g)
        .map(|(p, g)| -7.0 * exact(&p.cp.cp) - gamma * g)
        .collect();
    let sol = linalg::solve(&a, &b, &cfg.solver.with_nullspace(NullspacePolicy::None))
        .map_err(|e| e.at(Stage::Poisson))?;

    let on_surface = ops.interp_q.apply(&sol.x);
    let mut max_err: f64 = 0.0;
    let mut max_ref: f64 = 0.0;
    for (p, v) in band.points.iter().zip(&on_surface) {
        let u = exact(&p.cp.cp);
        max_err = max_err.max((v - u).abs());
        max_ref = max_ref.max(u.abs());
    }
    let rel_error = max_err / max_ref;
    info!("neumann check: dx = {}, N = {n}, error {rel_error:.4e}", cfg.dx);
    Ok(NeumannResult {
        dx: cfg.dx,
        n,
        rel_error,
        residual: sol.rel_residual,
    })
}
