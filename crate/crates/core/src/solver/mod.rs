//! The distance pipeline: band, operators, smoothed source, one implicit
//! heat step, then a Poisson solve on the normalized heat gradient.

mod neumann;

pub use neumann::{
    neumann_reference, pairwise_orders, verify_neumann_poisson, NeumannResult, NEUMANN_REFERENCE,
    NEUMANN_REFERENCE_ORDERS,
};

use std::time::Instant;

use log::info;

use crate::band::{bandwidth, build_band, Band, GridSpec, DEFAULT_ANCHOR};
use crate::error::{CphmError, Result, Stage};
use crate::geometry::{Point3, Surface};
use crate::linalg::{self, NullspacePolicy, SolverConfig};
use crate::operators::{interpolation_matrix, Operators, SparseOperator};
use crate::source::{build_delta, snap_sources, SourceSpec};

/// Numerical parameters of a run. Unset optional fields take their
/// resolution-dependent defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct CphmConfig {
    pub dx: f64,
    /// Heat step; defaults to `dx^2`.
    pub dt: Option<f64>,
    /// Penalty weight; defaults to `2 dim / dx^2`.
    pub gamma: Option<f64>,
    pub p: usize,
    pub q: usize,
    /// Source support radius; defaults to `2 dx`.
    pub h: Option<f64>,
    pub grad_eps: f64,
    /// Factor on the boundary offset in the Neumann extrapolation.
    pub kappa: f64,
    /// Extend the normalized gradient off the surface before taking its divergence.
    pub extend_x: bool,
    pub renormalize_delta: bool,
    /// Lattice offset as a fraction of `dx`.
    pub grid_anchor: f64,
    pub solver: SolverConfig,
}

impl CphmConfig {
    pub fn new(dx: f64) -> Self {
        CphmConfig {
            dx,
            dt: None,
            gamma: None,
            p: 1,
            q: 3,
            h: None,
            grad_eps: 0.0,
            kappa: 2.0,
            extend_x: true,
            renormalize_delta: false,
            grid_anchor: DEFAULT_ANCHOR,
            solver: SolverConfig::default(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(self.dx * self.dx)
    }

    pub fn gamma(&self, dim: usize) -> f64 {
        self.gamma.unwrap_or(2.0 * dim as f64 / (self.dx * self.dx))
    }

    pub fn support(&self) -> f64 {
        self.h.unwrap_or(2.0 * self.dx)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(CphmError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("dx", self.dx)?;
        positive("dt", self.dt())?;
        positive("gamma", self.gamma(3))?;
        positive("H", self.support())?;
        positive("kappa", self.kappa)?;
        if !(self.grad_eps.is_finite() && self.grad_eps >= 0.0) {
            return Err(CphmError::Config(format!("grad_eps must be non-negative, got {}", self.grad_eps)));
        }
        if self.p == 0 || self.q == 0 {
            return Err(CphmError::Config("interpolation degrees must be at least 1".into()));
        }
        if self.p > self.q {
            return Err(CphmError::Config(format!(
                "p = {} must not exceed q = {}",
                self.p, self.q
            )));
        }
        self.solver.validate()
    }

    /// Band and operators for `surface` at this resolution.
    pub fn discretize(&self, surface: &Surface) -> Result<(Band, Operators)> {
        let grid = GridSpec::covering(surface, self.dx, bandwidth(surface.dim(), self.q, self.dx), self.grid_anchor)
            .map_err(|e| e.at(Stage::Band))?;
        let band = build_band(surface, &grid, self.p, self.q).map_err(|e| e.at(Stage::Band))?;
        let ops = Operators::assemble(&band, surface, self.p, self.q, self.kappa)
            .map_err(|e| e.at(Stage::Operators))?;
        Ok((band, ops))
    }
}

/// Solution of the heat step.
#[derive(Debug, Clone)]
pub struct HeatField {
    pub u1: Vec<f64>,
    pub residual: f64,
}

/// Distance values on the band.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub phi: Vec<f64>,
    pub band: Band,
    pub sources: SourceSpec,
    /// Closest point of every band point paired with the interpolated
    /// distance there.
    pub surface_samples: Option<Vec<(Point3, f64)>>,
    pub residual: f64,
}

/// Wall-clock seconds per stage together with run statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub dx: f64,
    pub n: usize,
    pub band_time: f64,
    pub operators_time: f64,
    pub reconstruction_time: f64,
    pub heat_time: f64,
    pub poisson_time: f64,
    pub heat_residual: f64,
    pub poisson_residual: f64,
    /// Relative l-infinity error against the exact distance, when known.
    pub rel_error: Option<f64>,
}

/// `E_p L - I / dt - gamma (I - E_q - E_g)`.
pub fn heat_matrix(ops: &Operators, dt: f64, gamma: f64) -> SparseOperator {
    let n = ops.laplacian.nrows();
    let id = SparseOperator::identity(n);
    let epl = ops.ext_p.matmul(&ops.laplacian);
    // gamma (E_q + E_g) - (1/dt + gamma) I
    let constraint = ops.ext_q.lincomb(gamma, &ops.neumann_heat, gamma);
    epl.lincomb(1.0, &constraint, 1.0)
        .lincomb(1.0, &id, -(1.0 / dt + gamma))
}

/// `E_p L - gamma (I - E_q)`.
pub fn poisson_matrix(ops: &Operators, gamma: f64) -> SparseOperator {
    let n = ops.laplacian.nrows();
    let epl = ops.ext_p.matmul(&ops.laplacian);
    epl.lincomb(1.0, &ops.ext_q, gamma)
        .lincomb(1.0, &SparseOperator::identity(n), -gamma)
}

/// One backward Euler step of the embedded heat equation.
pub fn cp_heat_solve(band: &Band, ops: &Operators, u0: &[f64], cfg: &CphmConfig) -> Result<HeatField> {
    let a = heat_matrix(ops, cfg.dt(), cfg.gamma(band.dim()));
    let b: Vec<f64> = u0.iter().map(|v| -v / cfg.dt()).collect();
    let sol = linalg::solve(&a, &b, &cfg.solver.with_nullspace(NullspacePolicy::None).with_componentwise())?;
    Ok(HeatField {
        u1: sol.x,
        residual: sol.rel_residual,
    })
}

/// `X = -g / max(|g|, eps)` per point, for gradient components `grad`.
pub fn normalize_gradient(grad: &[Vec<f64>], grad_eps: f64) -> Vec<Vec<f64>> {
    let n = grad.first().map_or(0, Vec::len);
    let mut x = vec![vec![0.0; n]; grad.len()];
    for i in 0..n {
        let norm = grad.iter().map(|g| g[i] * g[i]).sum::<f64>().sqrt();
        let scale = norm.max(grad_eps);
        if scale == 0.0 {
            continue;
        }
        for (xk, gk) in x.iter_mut().zip(grad) {
            xk[i] = -gk[i] / scale;
        }
    }
    x
}

/// Normalized negative heat gradient, extended off the surface when
/// `extend_x` is set.
pub fn heat_direction(ops: &Operators, heat: &HeatField, cfg: &CphmConfig) -> Vec<Vec<f64>> {
    let grad: Vec<Vec<f64>> = ops.derivatives.iter().map(|d| d.apply(&heat.u1)).collect();
    let x = normalize_gradient(&grad, cfg.grad_eps);
    if cfg.extend_x {
        x.iter().map(|xk| ops.interp_q.apply(xk)).collect()
    } else {
        x
    }
}

/// Recover the distance from the heat solution.
pub fn cp_poisson_solve(
    band: &Band,
    surface: &Surface,
    ops: &Operators,
    heat: &HeatField,
    sources: &SourceSpec,
    cfg: &CphmConfig,
) -> Result<DistanceField> {
    let gamma = cfg.gamma(band.dim());
    let x = heat_direction(ops, heat, cfg);
    let mut div = vec![0.0; band.len()];
    for (d, xk) in ops.derivatives.iter().zip(&x) {
        for (acc, v) in div.iter_mut().zip(d.apply(xk)) {
            *acc += v;
        }
    }
    let mut rhs = ops.ext_q.apply(&div);
    if surface.is_open() {
        let g2 = crate::operators::assemble_neumann_poisson_rhs(band, surface, &x, cfg.q, cfg.kappa)?;
        for (r, g) in rhs.iter_mut().zip(&g2) {
            *r -= gamma * g;
        }
    }
    let a = poisson_matrix(ops, gamma);
    let snapped = snap_sources(surface, sources, band.bandwidth)?;
    let sol = linalg::solve(&a, &rhs, &cfg.solver.with_nullspace(NullspacePolicy::ConstantSource))?;
    let phi = anchor(&sol.x, band, &snapped, cfg.q)?;
    let on_surface = ops.interp_q.apply(&phi);
    let samples = band.points.iter().zip(on_surface).map(|(p, v)| (p.cp.cp, v)).collect();
    Ok(DistanceField {
        phi,
        band: band.clone(),
        sources: sources.clone(),
        surface_samples: Some(samples),
        residual: sol.rel_residual,
    })
}

/// Shift `phi` so that its smallest interpolated value over `sources` is zero.
pub fn anchor(phi: &[f64], band: &Band, sources: &[Point3], q: usize) -> Result<Vec<f64>> {
    let at_sources = interpolation_matrix(band, sources, q)?.apply(phi);
    let shift = at_sources.iter().copied().fold(f64::INFINITY, f64::min);
    if !shift.is_finite() {
        return Ok(phi.to_vec());
    }
    Ok(phi.iter().map(|v| v - shift).collect())
}

/// Relative l-infinity error of the on-surface samples against the exact
/// distance to the nearest source.
pub fn sample_error(surface: &Surface, field: &DistanceField) -> Result<f64> {
    let samples = field
        .surface_samples
        .as_ref()
        .ok_or_else(|| CphmError::Config("distance field carries no surface samples".into()))?;
    let sources = snap_sources(surface, &field.sources, field.band.bandwidth)?;
    let mut max_err: f64 = 0.0;
    let mut max_ref: f64 = 0.0;
    for (y, v) in samples {
        let mut exact = f64::INFINITY;
        for s in &sources {
            exact = exact.min(surface.exact_geodesic(s, y)?);
        }
        max_err = max_err.max((v - exact).abs());
        max_ref = max_ref.max(exact.abs());
    }
    Ok(max_err / max_ref)
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct Run {
    pub field: DistanceField,
    pub report: RunReport,
}

/// Full pipeline from a surface and source points to a distance field.
pub fn cphm_run(surface: &Surface, sources: &[Point3], cfg: &CphmConfig) -> Result<Run> {
    cfg.validate()?;
    let mut report = RunReport {
        dx: cfg.dx,
        ..Default::default()
    };
    let t = Instant::now();
    let grid = GridSpec::covering(surface, cfg.dx, bandwidth(surface.dim(), cfg.q, cfg.dx), cfg.grid_anchor)
        .map_err(|e| e.at(Stage::Band))?;
    let band = build_band(surface, &grid, cfg.p, cfg.q).map_err(|e| e.at(Stage::Band))?;
    report.band_time = t.elapsed().as_secs_f64();
    report.n = band.len();
    info!("band: N = {} at dx = {}", band.len(), cfg.dx);

    let t = Instant::now();
    let ops = Operators::assemble(&band, surface, cfg.p, cfg.q, cfg.kappa).map_err(|e| e.at(Stage::Operators))?;
    report.operators_time = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let spec = SourceSpec::new(sources.to_vec(), cfg.support()).map_err(|e| e.at(Stage::LocalReconstruction))?;
    let u0 = build_delta(&band, surface, &spec, cfg.renormalize_delta).map_err(|e| e.at(Stage::LocalReconstruction))?;
    report.reconstruction_time = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let heat = cp_heat_solve(&band, &ops, &u0, cfg).map_err(|e| e.at(Stage::Heat))?;
    report.heat_time = t.elapsed().as_secs_f64();
    report.heat_residual = heat.residual;

    let t = Instant::now();
    let field = cp_poisson_solve(&band, surface, &ops, &heat, &spec, cfg).map_err(|e| e.at(Stage::Poisson))?;
    report.poisson_time = t.elapsed().as_secs_f64();
    report.poisson_residual = field.residual;

    if surface.has_exact_geodesic() {
        report.rel_error = Some(sample_error(surface, &field)?);
    }
    info!(
        "run finished: N = {}, heat {:.2}s, poisson {:.2}s, error {:?}",
        report.n, report.heat_time, report.poisson_time, report.rel_error
    );
    Ok(Run { field, report })
}

/// Least-squares slope of `log(error)` against `log(dx)`.
pub fn convergence_order(dx: &[f64], errors: &[f64]) -> Option<f64> {
    if dx.len() != errors.len() || dx.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = dx.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Errors at each resolution of a sweep.
#[derive(Debug, Clone)]
pub struct Convergence {
    pub reports: Vec<RunReport>,
    pub order: Option<f64>,
}

/// Run the pipeline at every `dx` and fit the convergence order.
pub fn converge(surface: &Surface, sources: &[Point3], base: &CphmConfig, dxs: &[f64]) -> Result<Convergence> {
    if !surface.has_exact_geodesic() {
        return Err(CphmError::UnsupportedOracle(surface.name()));
    }
    let mut reports = Vec::with_capacity(dxs.len());
    for &dx in dxs {
        let cfg = CphmConfig { dx, ..base.clone() };
        reports.push(cphm_run(surface, sources, &cfg)?.report);
    }
    let errors: Vec<f64> = reports.iter().map(|r| r.rel_error.unwrap_or(f64::NAN)).collect();
    let order = convergence_order(dxs, &errors);
    Ok(Convergence { reports, order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normalization() {
        let x = normalize_gradient(&[vec![2.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]], 1e-14);
        assert_eq!((x[0][0], x[1][0], x[2][0]), (-1.0, 0.0, 0.0));
        assert_eq!((x[0][1], x[1][1], x[2][1]), (0.0, 0.0, 0.0));
        let x = normalize_gradient(&[vec![0.3], vec![-0.4], vec![1.2]], 1e-14);
        let n: f64 = x.iter().map(|c| c[0] * c[0]).sum::<f64>().sqrt();
        assert_abs_diff_eq!(n, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn order_of_exact_power_law() {
        let dx = [0.1, 0.05, 0.025];
        let e: Vec<f64> = dx.iter().map(|d| 3.0 * d * d).collect();
        assert_abs_diff_eq!(convergence_order(&dx, &e).unwrap(), 2.0, epsilon = 1e-12);
        assert!(convergence_order(&[0.1], &[1.0]).is_none());
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = CphmConfig::new(0.1);
        assert_abs_diff_eq!(c.dt(), 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(c.gamma(3), 600.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.support(), 0.2, epsilon = 1e-15);
        assert!(c.validate().is_ok());
        assert!(CphmConfig { p: 4, ..c.clone() }.validate().is_err());
        assert!(CphmConfig { dx: -1.0, ..c.clone() }.validate().is_err());
        assert!(CphmConfig { dt: Some(0.0), ..c }.validate().is_err());
    }
}
