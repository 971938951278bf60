//! Oracles and measurements shared by the integration tests and the
//! acceptance harness.

#![allow(dead_code)]

use std::f64::consts::PI;

use cphm::band::{bandwidth, Band, Layer, DEFAULT_ANCHOR};
use cphm::operators::{interpolation_matrix, Operators, SparseOperator};
use cphm::solver::{cp_heat_solve, cp_poisson_solve};
use cphm::source::{build_delta, delta_kernel, snap_sources, SourceSpec};
use cphm::{CphmConfig, Point3, Surface};

/// Point on the unit sphere at azimuth `phi` and polar angle `theta`.
pub fn spherical(phi: f64, theta: f64) -> Point3 {
    Point3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

pub fn single_source() -> Point3 {
    spherical(PI / 4.0, PI / 3.0)
}

pub fn five_sources() -> Vec<Point3> {
    let t = PI / 3.0;
    vec![spherical(0.0, 0.0), spherical(t, t), spherical(-t, t), spherical(t, -t), spherical(-t, -t)]
}

pub fn hemisphere_source() -> Point3 {
    spherical(5.0 * PI / 3.0, 0.3 * PI)
}

pub fn disk_source() -> Point3 {
    Point3::new(-1.0 / PI, -1.0 / std::f64::consts::E, 0.0)
}

pub fn discretize(surface: &Surface, dx: f64) -> (Band, Operators) {
    CphmConfig::new(dx).discretize(surface).expect("discretize")
}

/// Lattice points `(k + anchor) dx` within `bandwidth(3, 3, dx)` of the
/// unit sphere, counted by direct enumeration.
pub fn brute_sphere_band(dx: f64) -> usize {
    let bw = bandwidth(3, 3, dx);
    let kmax = ((1.0 + bw) / dx).ceil() as i64 + 2;
    let mut n = 0;
    for i in -kmax..=kmax {
        let x = (i as f64 + DEFAULT_ANCHOR) * dx;
        for j in -kmax..=kmax {
            let y = (j as f64 + DEFAULT_ANCHOR) * dx;
            for k in -kmax..=kmax {
                let z = (k as f64 + DEFAULT_ANCHOR) * dx;
                if ((x * x + y * y + z * z).sqrt() - 1.0).abs() <= bw {
                    n += 1;
                }
            }
        }
    }
    n
}

pub fn max_row_sum_defect(op: &SparseOperator) -> f64 {
    (0..op.nrows()).map(|i| (op.row_sum(i) - 1.0).abs()).fold(0.0, f64::max)
}

/// `sum c[i + 4j + 16k] x^i y^j z^k`, each exponent at most 3.
pub fn tricubic(c: &[f64; 64], x: &Point3) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                s += c[i + 4 * j + 16 * k] * x.x.powi(i as i32) * x.y.powi(j as i32) * x.z.powi(k as i32);
            }
        }
    }
    s
}

/// Largest deviation of a degree-3 extension of a tricubic from its
/// values at the targets, relative to the largest node value.
pub fn tricubic_defect(band: &Band, ext: &SparseOperator, targets: &[Point3], c: &[f64; 64]) -> f64 {
    let nodes: Vec<f64> = band.points.iter().map(|p| tricubic(c, &p.position)).collect();
    let scale = nodes.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let ext = ext.apply(&nodes);
    ext.iter()
        .zip(targets)
        .map(|(e, t)| (e - tricubic(c, t)).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Quadratic `a0 + a·x + sum a_kl x_k x_l` with coefficient layout
/// `[a0, ax, ay, az, axx, ayy, azz, axy, axz, ayz]`.
pub fn quadratic(a: &[f64; 10], x: &Point3) -> f64 {
    a[0] + a[1] * x.x + a[2] * x.y + a[3] * x.z
        + a[4] * x.x * x.x
        + a[5] * x.y * x.y
        + a[6] * x.z * x.z
        + a[7] * x.x * x.y
        + a[8] * x.x * x.z
        + a[9] * x.y * x.z
}

/// Relative error of the discrete Laplacian of a quadratic over the inner
/// band points, against `2 (axx + ayy + azz)`.
pub fn laplacian_defect(band: &Band, ops: &Operators, a: &[f64; 10]) -> f64 {
    let u: Vec<f64> = band.points.iter().map(|p| quadratic(a, &p.position)).collect();
    let lu = ops.laplacian.apply(&u);
    let exact = 2.0 * (a[4] + a[5] + a[6]);
    let scale = exact.abs().max(a[4..].iter().fold(0.0f64, |m, v| m.max(v.abs())));
    band.points
        .iter()
        .zip(&lu)
        .filter(|(p, _)| p.layer == Layer::Inner)
        .map(|(_, v)| (v - exact).abs())
        .fold(0.0, f64::max)
        / scale
}

fn smooth(x: &Point3) -> f64 {
    (2.0 * x.x + 1.0).sin() * (x.y - 0.5).cos() * (1.5 * x.z + 0.3).sin()
}

fn smooth_gradient(x: &Point3) -> [f64; 3] {
    let (a, b, c) = (2.0 * x.x + 1.0, x.y - 0.5, 1.5 * x.z + 0.3);
    [
        2.0 * a.cos() * b.cos() * c.sin(),
        -a.sin() * b.sin() * c.sin(),
        1.5 * a.sin() * b.cos() * c.cos(),
    ]
}

/// Largest error of the three difference operators on a smooth
/// trigonometric field, over inner points of the unit-sphere band.
pub fn derivative_error(dx: f64) -> f64 {
    let (band, ops) = discretize(&Surface::unit_sphere(), dx);
    let u: Vec<f64> = band.points.iter().map(|p| smooth(&p.position)).collect();
    let mut err: f64 = 0.0;
    for (k, d) in ops.derivatives.iter().enumerate() {
        let du = d.apply(&u);
        for (p, v) in band.points.iter().zip(&du) {
            if p.layer == Layer::Inner {
                err = err.max((v - smooth_gradient(&p.position)[k]).abs());
            }
        }
    }
    err
}

/// Largest entrywise difference between two operators of equal shape.
pub fn max_entry_difference(a: &SparseOperator, b: &SparseOperator) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut d: f64 = 0.0;
    for i in 0..a.nrows() {
        for (idx, &j) in a.row(i).0.iter().enumerate() {
            d = d.max((a.row(i).1[idx] - b.get(i, j)).abs());
        }
        for (idx, &j) in b.row(i).0.iter().enumerate() {
            d = d.max((b.row(i).1[idx] - a.get(i, j)).abs());
        }
    }
    d
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Pipeline pieces for one surface and resolution, kept together so the
/// properties can rerun single stages.
pub struct Pipeline {
    pub surface: Surface,
    pub cfg: CphmConfig,
    pub band: Band,
    pub ops: Operators,
    pub spec: SourceSpec,
    pub u0: Vec<f64>,
}

impl Pipeline {
    pub fn new(surface: Surface, sources: Vec<Point3>, dx: f64) -> Self {
        let cfg = CphmConfig::new(dx);
        let (band, ops) = cfg.discretize(&surface).expect("discretize");
        let spec = SourceSpec::new(sources, cfg.support()).expect("sources");
        let u0 = build_delta(&band, &surface, &spec, false).expect("delta");
        Pipeline {
            surface,
            cfg,
            band,
            ops,
            spec,
            u0,
        }
    }

    pub fn heat(&self, u0: &[f64]) -> Vec<f64> {
        cp_heat_solve(&self.band, &self.ops, u0, &self.cfg).expect("heat").u1
    }

    pub fn distance(&self, u0: &[f64]) -> Vec<f64> {
        let heat = cp_heat_solve(&self.band, &self.ops, u0, &self.cfg).expect("heat");
        cp_poisson_solve(&self.band, &self.surface, &self.ops, &heat, &self.spec, &self.cfg)
            .expect("poisson")
            .phi
    }

    /// Degree-`q` interpolation of band values at arbitrary surface points.
    pub fn interpolate(&self, phi: &[f64], points: &[Point3]) -> Vec<f64> {
        interpolation_matrix(&self.band, points, self.cfg.q).expect("interpolation").apply(phi)
    }

    pub fn snapped_sources(&self) -> Vec<Point3> {
        snap_sources(&self.surface, &self.spec, self.band.bandwidth).expect("snap")
    }
}

/// One-sided slopes of the band field `phi` along the great circle from
/// `a` to `b`, at distance `h` on either side of the point a fraction
/// `frac` of the way along the arc.
pub fn arc_slopes(band: &Band, phi: &[f64], q: usize, a: &Point3, b: &Point3, frac: f64, h: f64) -> (f64, f64) {
    let angle = a.dot(b).clamp(-1.0, 1.0).acos();
    let axis = a.cross(b).normalize();
    let at = |s: f64| rotate(a, &axis, frac * angle + s);
    let pts = [at(-2.0 * h), at(-h), at(h), at(2.0 * h)];
    let v = interpolation_matrix(band, &pts, q).expect("interpolation").apply(phi);
    ((v[1] - v[0]) / h, (v[3] - v[2]) / h)
}

/// Rodrigues rotation of `v` about the unit `axis` by `t`.
fn rotate(v: &Point3, axis: &Point3, t: f64) -> Point3 {
    v * t.cos() + axis.cross(v) * t.sin() + axis * axis.dot(v) * (1.0 - t.cos())
}

/// Grid sum `sum delta(|x|) dx^2` over a plane lattice shifted off the
/// kernel centre.
pub fn plane_kernel_sum(h: f64, dx: f64) -> f64 {
    let kmax = (h / dx).ceil() as i64 + 1;
    let mut s = 0.0;
    for i in -kmax..=kmax {
        for j in -kmax..=kmax {
            let (x, y) = ((i as f64 + 0.3) * dx, (j as f64 + 0.7) * dx);
            s += delta_kernel((x * x + y * y).sqrt(), h);
        }
    }
    s * dx * dx
}

/// `2 pi int_0^H r delta(r) dr` by composite Simpson on `m` panels.
pub fn radial_kernel_integral(h: f64, m: usize) -> f64 {
    let step = h / m as f64;
    let f = |r: f64| 2.0 * PI * r * delta_kernel(r, h);
    let mut s = f(0.0) + f(h);
    for i in 1..m {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * step);
    }
    s * step / 3.0
}
