use super::{BoundaryFrame, CpResult, Point3, AMBIGUITY_TOL};
use crate::error::{CphmError, Result};

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CphmError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn check_finite(p: &Point3) -> Result<()> {
    if p.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(CphmError::Config("non-finite center".into()))
    }
}

fn ambiguous(x: &Point3, a: Point3, b: Point3) -> CphmError {
    CphmError::Ambiguous {
        point: *x,
        first: a.into(),
        second: b.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sphere {
    pub center: Point3,
    pub radius: f64,
}

impl Sphere {
    pub fn new(center: Point3, radius: f64) -> Result<Self> {
        check_finite(&center)?;
        check_positive("radius", radius)?;
        Ok(Sphere { center, radius })
    }

    pub(crate) fn bounding_box(&self) -> (Point3, Point3) {
        let r = Point3::repeat(self.radius);
        (self.center - r, self.center + r)
    }

    pub(crate) fn distance(&self, x: &Point3) -> f64 {
        ((x - self.center).norm() - self.radius).abs()
    }

    pub(crate) fn closest_point(&self, x: &Point3) -> Result<CpResult> {
        let q = x - self.center;
        let rho = q.norm();
        if rho <= 0.5 * AMBIGUITY_TOL * self.radius {
            let e = super::any_orthogonal(&Point3::z()) * self.radius;
            return Err(ambiguous(x, self.center + e, self.center - e));
        }
        let normal = q / rho;
        Ok(CpResult {
            cp: self.center + self.radius * normal,
            dist: (rho - self.radius).abs(),
            on_boundary: false,
            normal,
        })
    }
}

/// The open upper half `{ |y - c| = r, y_z > c_z }`; its closure adds the
/// equator, which is the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Hemisphere {
    pub center: Point3,
    pub radius: f64,
}

impl Hemisphere {
    pub fn new(center: Point3, radius: f64) -> Result<Self> {
        check_finite(&center)?;
        check_positive("radius", radius)?;
        Ok(Hemisphere { center, radius })
    }

    pub(crate) fn bounding_box(&self) -> (Point3, Point3) {
        let r = self.radius;
        (
            self.center - Point3::new(r, r, 0.0),
            self.center + Point3::new(r, r, r),
        )
    }

    pub(crate) fn distance(&self, x: &Point3) -> f64 {
        let q = x - self.center;
        if q.z >= 0.0 {
            (q.norm() - self.radius).abs()
        } else {
            let rho = q.xy().norm();
            ((rho - self.radius).powi(2) + q.z * q.z).sqrt()
        }
    }

    pub(crate) fn closest_point(&self, x: &Point3) -> Result<CpResult> {
        let q = x - self.center;
        let r = self.radius;
        if q.z > 0.0 {
            let rho = q.norm();
            let normal = q / rho;
            return Ok(CpResult {
                cp: self.center + r * normal,
                dist: (rho - r).abs(),
                on_boundary: false,
                normal,
            });
        }
        // Below (or on) the equatorial plane the minimizer lies on the equator.
        let rho = q.xy().norm();
        if rho <= 0.5 * AMBIGUITY_TOL * r {
            return Err(ambiguous(
                x,
                self.center + Point3::new(r, 0.0, 0.0),
                self.center - Point3::new(r, 0.0, 0.0),
            ));
        }
        let normal = Point3::new(q.x / rho, q.y / rho, 0.0);
        let cp = self.center + r * normal;
        Ok(CpResult {
            cp,
            dist: (x - cp).norm(),
            on_boundary: true,
            normal,
        })
    }

    pub(crate) fn boundary_frame(&self, y: &Point3) -> Result<BoundaryFrame> {
        let q = y - self.center;
        let r = self.radius;
        let tol = 1e-9 * r;
        if q.z.abs() > tol || (q.norm() - r).abs() > tol {
            return Err(CphmError::Geometry(format!(
                "point ({:.6}, {:.6}, {:.6}) is not on the hemisphere boundary",
                y.x, y.y, y.z
            )));
        }
        let normal = Point3::new(q.x, q.y, 0.0).normalize();
        Ok(BoundaryFrame::from_normal_and_conormal(
            normal,
            -Point3::z(),
        ))
    }
}

/// Closed disk in the plane. Interior points are their own closest points;
/// the circle is the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Disk2d {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Disk2d {
    pub fn new(center: [f64; 2], radius: f64) -> Result<Self> {
        check_finite(&Point3::new(center[0], center[1], 0.0))?;
        check_positive("radius", radius)?;
        Ok(Disk2d { center, radius })
    }

    fn center3(&self) -> Point3 {
        Point3::new(self.center[0], self.center[1], 0.0)
    }

    pub(crate) fn bounding_box(&self) -> (Point3, Point3) {
        let c = self.center3();
        let r = Point3::new(self.radius, self.radius, 0.0);
        (c - r, c + r)
    }

    pub(crate) fn distance(&self, x: &Point3) -> f64 {
        let rho = (x.xy() - self.center3().xy()).norm();
        (rho - self.radius).max(0.0)
    }

    pub(crate) fn closest_point(&self, x: &Point3) -> Result<CpResult> {
        let c = self.center3();
        let q = Point3::new(x.x - c.x, x.y - c.y, 0.0);
        let rho = q.norm();
        if rho < self.radius {
            return Ok(CpResult {
                cp: Point3::new(x.x, x.y, 0.0),
                dist: 0.0,
                on_boundary: false,
                normal: Point3::z(),
            });
        }
        let cp = c + q * (self.radius / rho);
        Ok(CpResult {
            cp,
            dist: rho - self.radius,
            on_boundary: true,
            normal: Point3::z(),
        })
    }

    pub(crate) fn boundary_frame(&self, y: &Point3) -> Result<BoundaryFrame> {
        let c = self.center3();
        let q = Point3::new(y.x - c.x, y.y - c.y, 0.0);
        if (q.norm() - self.radius).abs() > 1e-9 * self.radius {
            return Err(CphmError::Geometry(format!(
                "point ({:.6}, {:.6}) is not on the disk boundary",
                y.x, y.y
            )));
        }
        Ok(BoundaryFrame::from_normal_and_conormal(
            Point3::z(),
            q.normalize(),
        ))
    }
}

/// Torus around the z axis with tube radius `minor` and core radius `major`.
#[derive(Debug, Clone, PartialEq)]
pub struct Torus {
    pub center: Point3,
    pub major: f64,
    pub minor: f64,
}

impl Torus {
    pub fn new(center: Point3, major: f64, minor: f64) -> Result<Self> {
        check_finite(&center)?;
        check_positive("major radius", major)?;
        check_positive("minor radius", minor)?;
        if minor >= major {
            return Err(CphmError::Config(format!(
                "torus minor radius {minor} must be below the major radius {major}"
            )));
        }
        Ok(Torus {
            center,
            major,
            minor,
        })
    }

    pub(crate) fn bounding_box(&self) -> (Point3, Point3) {
        let e = self.major + self.minor;
        let ext = Point3::new(e, e, self.minor);
        (self.center - ext, self.center + ext)
    }

    pub(crate) fn distance(&self, x: &Point3) -> f64 {
        let q = x - self.center;
        let rho = q.xy().norm();
        ((rho - self.major).powi(2) + q.z * q.z).sqrt() - self.minor
    }

    pub(crate) fn closest_point(&self, x: &Point3) -> Result<CpResult> {
        let q = x - self.center;
        let rho = q.xy().norm();
        if rho <= 0.5 * AMBIGUITY_TOL * self.major {
            let a = self.center + Point3::new(self.major + self.minor, 0.0, 0.0);
            let b = self.center - Point3::new(self.major + self.minor, 0.0, 0.0);
            return Err(ambiguous(x, a, b));
        }
        let ring = Point3::new(q.x / rho, q.y / rho, 0.0) * self.major;
        let s = q - ring;
        let s_norm = s.norm();
        if s_norm <= 0.5 * AMBIGUITY_TOL * self.minor {
            let a = ring + Point3::z() * self.minor;
            return Err(ambiguous(x, self.center + a, self.center + ring - Point3::z() * self.minor));
        }
        let normal = s / s_norm;
        Ok(CpResult {
            cp: self.center + ring + self.minor * normal,
            dist: (s_norm - self.minor).abs(),
            on_boundary: false,
            normal,
        })
    }
}
