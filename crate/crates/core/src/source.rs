//! Smoothed point sources: a compactly supported bump in geodesic distance,
//! measured on a quadratic fit of the surface around each source.

use log::{debug, warn};
use nalgebra::{Matrix2, Matrix6, Vector2, Vector6};
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::band::Band;
use crate::error::{CphmError, Result};
use crate::geometry::{any_orthogonal, Point3, Surface};

/// Orthonormal frame at a surface point, with local coordinates
/// `(xi, eta, z)` along `(t1, t2, normal)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub origin: Point3,
    pub t1: Point3,
    pub t2: Point3,
    pub normal: Point3,
}

impl LocalFrame {
    pub fn to_local(&self, x: &Point3) -> Point3 {
        let d = x - self.origin;
        Point3::new(d.dot(&self.t1), d.dot(&self.t2), d.dot(&self.normal))
    }
}

/// Height function `z = a0 + a1 xi + a2 eta + a3 xi^2 + a4 xi eta + a5 eta^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticPatch {
    pub a: [f64; 6],
    /// Root-mean-square fit residual.
    pub residual: f64,
}

impl QuadraticPatch {
    pub fn flat() -> Self {
        QuadraticPatch {
            a: [0.0; 6],
            residual: 0.0,
        }
    }

    pub fn height(&self, u: &Vector2<f64>) -> f64 {
        let a = &self.a;
        a[0] + a[1] * u.x + a[2] * u.y + a[3] * u.x * u.x + a[4] * u.x * u.y + a[5] * u.y * u.y
    }

    pub fn gradient(&self, u: &Vector2<f64>) -> Vector2<f64> {
        let a = &self.a;
        Vector2::new(
            a[1] + 2.0 * a[3] * u.x + a[4] * u.y,
            a[2] + a[4] * u.x + 2.0 * a[5] * u.y,
        )
    }

    pub fn hessian(&self) -> Matrix2<f64> {
        let a = &self.a;
        Matrix2::new(2.0 * a[3], a[4], a[4], 2.0 * a[5])
    }

    /// Metric speed `sqrt(v^T g v)` of a parameter velocity `v` at `u`.
    fn speed(&self, u: &Vector2<f64>, v: &Vector2<f64>) -> f64 {
        let s = self.gradient(u).dot(v);
        (v.norm_squared() + s * s).sqrt()
    }
}

/// Point sources with a common support radius.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub points: Vec<Point3>,
    pub h: f64,
}

impl SourceSpec {
    pub fn new(points: Vec<Point3>, h: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(CphmError::Source("at least one source point is required".into()));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(CphmError::Source(format!("support radius must be positive, got {h}")));
        }
        Ok(SourceSpec { points, h })
    }
}

/// Frame at the closest point of `x0`.
pub fn local_frame(surface: &Surface, x0: &Point3) -> Result<LocalFrame> {
    let cp = surface.closest_point(x0)?;
    let n = cp.normal;
    if !((n.norm() - 1.0).abs() <= 1e-8) {
        return Err(CphmError::Geometry(format!(
            "degenerate surface normal of length {:.3e} at the source",
            n.norm()
        )));
    }
    let t1 = any_orthogonal(&n);
    let t2 = n.cross(&t1);
    Ok(LocalFrame {
        origin: cp.cp,
        t1,
        t2,
        normal: n,
    })
}

/// Least-squares quadratic height function through `samples`.
pub fn fit_patch(frame: &LocalFrame, samples: &[Point3]) -> Result<QuadraticPatch> {
    if samples.len() < 6 {
        return Err(CphmError::Fit(format!(
            "{} samples are not enough for a quadratic fit; increase the support radius",
            samples.len()
        )));
    }
    let local: Vec<Point3> = samples.iter().map(|s| frame.to_local(s)).collect();
    let rho = local
        .iter()
        .map(|p| p.x.hypot(p.y))
        .fold(0.0, f64::max);
    if rho == 0.0 {
        return Err(CphmError::Fit("samples coincide with the origin".into()));
    }
    // work in coordinates scaled to unit radius so the columns are comparable
    let basis = |p: &Point3| {
        let (s, t) = (p.x / rho, p.y / rho);
        Vector6::new(1.0, s, t, s * s, s * t, t * t)
    };
    let mut ata = Matrix6::zeros();
    let mut atb = Vector6::zeros();
    for p in &local {
        let b = basis(p);
        ata += b * b.transpose();
        atb += b * p.z;
    }
    let eig = ata.symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 1e-12 * hi) {
        return Err(CphmError::Fit(format!(
            "design matrix is rank deficient (eigenvalue ratio {:.3e}); increase the support radius",
            lo / hi
        )));
    }
    let c = ata
        .cholesky()
        .ok_or_else(|| CphmError::Fit("normal equations are not positive definite".into()))?
        .solve(&atb);
    let a = [
        c[0],
        c[1] / rho,
        c[2] / rho,
        c[3] / (rho * rho),
        c[4] / (rho * rho),
        c[5] / (rho * rho),
    ];
    if a.iter().any(|v| !v.is_finite()) {
        return Err(CphmError::Fit("non-finite coefficients".into()));
    }
    let patch = QuadraticPatch { a, residual: 0.0 };
    let ss: f64 = local
        .iter()
        .map(|p| (patch.height(&Vector2::new(p.x, p.y)) - p.z).powi(2))
        .sum();
    Ok(QuadraticPatch {
        residual: (ss / local.len() as f64).sqrt(),
        ..patch
    })
}

/// Geodesic length on a patch and whether shooting converged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchGeodesic {
    pub length: f64,
    pub converged: bool,
}

const RK_STEPS: usize = 32;
const SHOOT_TOL: f64 = 1e-10;
const SHOOT_MAX_ITER: usize = 100;

/// Integrate the geodesic equation of the graph from the origin with
/// initial parameter velocity `v0` over unit time. Returns the end point
/// and the arc length.
fn shoot(patch: &QuadraticPatch, v0: Vector2<f64>) -> (Vector2<f64>, f64) {
    let hess = patch.hessian();
    // state: position, velocity, arc length
    let rhs = |u: &Vector2<f64>, v: &Vector2<f64>| -> (Vector2<f64>, Vector2<f64>, f64) {
        let g = patch.gradient(u);
        let acc = -g * (v.dot(&(hess * v)) / (1.0 + g.norm_squared()));
        (*v, acc, patch.speed(u, v))
    };
    let dt = 1.0 / RK_STEPS as f64;
    let (mut u, mut v, mut len) = (Vector2::zeros(), v0, 0.0);
    for _ in 0..RK_STEPS {
        let k1 = rhs(&u, &v);
        let k2 = rhs(&(u + k1.0 * (dt / 2.0)), &(v + k1.1 * (dt / 2.0)));
        let k3 = rhs(&(u + k2.0 * (dt / 2.0)), &(v + k2.1 * (dt / 2.0)));
        let k4 = rhs(&(u + k3.0 * dt), &(v + k3.1 * dt));
        u += (k1.0 + (k2.0 + k3.0) * 2.0 + k4.0) * (dt / 6.0);
        v += (k1.1 + (k2.1 + k3.1) * 2.0 + k4.1) * (dt / 6.0);
        len += (k1.2 + 2.0 * (k2.2 + k3.2) + k4.2) * (dt / 6.0);
    }
    (u, len)
}

/// Arc length of the straight parameter segment lifted onto the patch.
pub fn lifted_segment_length(patch: &QuadraticPatch, target: &Vector2<f64>) -> f64 {
    // composite Simpson; the integrand is smooth
    let m = 64;
    let f = |t: f64| patch.speed(&(target * t), target);
    let h = 1.0 / m as f64;
    let mut s = f(0.0) + f(1.0);
    for k in 1..m {
        s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Geodesic distance on the patch graph from the origin to `target`, found
/// by Newton shooting on the initial velocity.
pub fn patch_geodesic(patch: &QuadraticPatch, target: &Vector2<f64>) -> PatchGeodesic {
    let scale = target.norm();
    if scale == 0.0 {
        return PatchGeodesic {
            length: 0.0,
            converged: true,
        };
    }
    let mut v = *target;
    let fd = 1e-7 * scale;
    for _ in 0..SHOOT_MAX_ITER {
        let (end, len) = shoot(patch, v);
        let miss = end - target;
        if miss.norm() <= SHOOT_TOL {
            return PatchGeodesic {
                length: len,
                converged: true,
            };
        }
        let jx = (shoot(patch, v + Vector2::new(fd, 0.0)).0 - end) / fd;
        let jy = (shoot(patch, v + Vector2::new(0.0, fd)).0 - end) / fd;
        let jac = Matrix2::from_columns(&[jx, jy]);
        match jac.try_inverse() {
            Some(inv) => v -= inv * miss,
            None => break,
        }
        if !(v.x.is_finite() && v.y.is_finite()) {
            break;
        }
    }
    warn!(
        "geodesic shooting did not converge for target ({:.4e}, {:.4e}); using the lifted segment",
        target.x, target.y
    );
    PatchGeodesic {
        length: lifted_segment_length(patch, target),
        converged: false,
    }
}

/// Smoothed delta `2 pi / ((pi^2 - 4) H^2) (1 + cos(pi phi / H))` for
/// `phi <= H`, zero beyond.
pub fn delta_kernel(phi: f64, h: f64) -> f64 {
    if phi > h {
        0.0
    } else {
        2.0 * PI / ((PI * PI - 4.0) * h * h) * (1.0 + (PI * phi / h).cos())
    }
}

/// Snap each source to the surface, rejecting points beyond the band.
pub fn snap_sources(surface: &Surface, spec: &SourceSpec, bandwidth: f64) -> Result<Vec<Point3>> {
    spec.points
        .iter()
        .map(|x| {
            let cp = surface.closest_point(x)?;
            if cp.dist > bandwidth {
                return Err(CphmError::SnapFailure {
                    point: *x,
                    distance: cp.dist,
                    bandwidth,
                });
            }
            debug!(
                "source ({:.6}, {:.6}, {:.6}) snapped by {:.3e}",
                x.x, x.y, x.z, cp.dist
            );
            Ok(cp.cp)
        })
        .collect()
}

/// Initial heat distribution on the band: the sum of one smoothed delta per
/// source, evaluated at the closest point of every band point.
pub fn build_delta(band: &Band, surface: &Surface, spec: &SourceSpec, renormalize: bool) -> Result<Vec<f64>> {
    let h = spec.h;
    let sources = snap_sources(surface, spec, band.bandwidth)?;
    for (i, a) in sources.iter().enumerate() {
        for b in &sources[i + 1..] {
            if (a - b).norm() < 2.0 * h {
                return Err(CphmError::Source(format!(
                    "sources ({:.4}, {:.4}, {:.4}) and ({:.4}, {:.4}, {:.4}) are closer than 2H = {:.4e}; their supports overlap",
                    a.x, a.y, a.z, b.x, b.y, b.z, 2.0 * h
                )));
            }
        }
    }
    let sample_radius = h.max(3.0 * band.dx());
    let mut u0 = vec![0.0; band.len()];
    for x0 in &sources {
        let frame = local_frame(surface, x0)?;
        let samples: Vec<Point3> = band
            .points
            .iter()
            .map(|p| p.cp.cp)
            .filter(|c| (c - frame.origin).norm() <= sample_radius)
            .collect();
        let patch = fit_patch(&frame, &samples)?;
        debug!(
            "patch at ({:.4}, {:.4}, {:.4}): {} samples, residual {:.3e}",
            x0.x,
            x0.y,
            x0.z,
            samples.len(),
            patch.residual
        );
        let contrib: Vec<(usize, f64, bool)> = band
            .points
            .par_iter()
            .enumerate()
            .filter(|(_, p)| (p.cp.cp - frame.origin).norm() <= h)
            .map(|(i, p)| {
                let l = frame.to_local(&p.cp.cp);
                let g = patch_geodesic(&patch, &Vector2::new(l.x, l.y));
                (i, delta_kernel(g.length, h), g.converged)
            })
            .collect();
        let failed = contrib.iter().filter(|c| !c.2).count();
        if failed > 0 {
            warn!("{failed} patch geodesics fell back to the lifted segment");
        }
        for (i, v, _) in contrib {
            u0[i] += v;
        }
    }
    if renormalize {
        let total: f64 = u0.iter().sum();
        if total > 0.0 {
            u0.iter_mut().for_each(|v| *v /= total);
        }
    }
    Ok(u0)
}
