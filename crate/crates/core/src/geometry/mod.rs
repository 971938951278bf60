//! Surfaces and their closest point maps.
//!
//! Every surface answers closest point queries over its closure, so for open
//! surfaces a query can land on the boundary curve. Planar regions in the
//! plane (`Disk2d`) are treated as two-dimensional "surfaces" whose interior
//! points are their own closest points.

mod analytic;
mod mesh;

pub use analytic::{Disk2d, Hemisphere, Sphere, Torus};
pub use mesh::{MeshRegion, TriangleMesh};

use nalgebra::Vector3;

use crate::error::{CphmError, Result};

/// A point (or vector) of the embedding space. Two-dimensional problems keep
/// the third coordinate at zero.
pub type Point3 = Vector3<f64>;

/// Relative tolerance under which two closest point candidates count as a tie.
pub const AMBIGUITY_TOL: f64 = 1e-9;

/// Result of a closest point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpResult {
    pub cp: Point3,
    pub dist: f64,
    pub on_boundary: bool,
    /// Unit surface normal at `cp`. For planar regions this is the
    /// out-of-plane axis.
    pub normal: Point3,
}

/// Orthonormal frame at a boundary point: `tangent` along the boundary curve,
/// `normal` the surface normal and `conormal` the outward conormal, with
/// `conormal = tangent × normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFrame {
    pub tangent: Point3,
    pub normal: Point3,
    pub conormal: Point3,
}

impl BoundaryFrame {
    pub(crate) fn from_normal_and_conormal(normal: Point3, conormal: Point3) -> Self {
        BoundaryFrame {
            tangent: normal.cross(&conormal),
            normal,
            conormal,
        }
    }
}

/// Geometry the solver can run on.
#[derive(Debug, Clone)]
pub enum Surface {
    Sphere(Sphere),
    Hemisphere(Hemisphere),
    Disk2d(Disk2d),
    Torus(Torus),
    TriangleMesh(Box<TriangleMesh>),
}

impl Surface {
    pub fn sphere(center: Point3, radius: f64) -> Result<Self> {
        Sphere::new(center, radius).map(Surface::Sphere)
    }

    pub fn unit_sphere() -> Self {
        Surface::Sphere(Sphere::new(Point3::zeros(), 1.0).expect("valid radius"))
    }

    /// Upper half (`z > center.z`) of a sphere, open along its equator.
    pub fn hemisphere(center: Point3, radius: f64) -> Result<Self> {
        Hemisphere::new(center, radius).map(Surface::Hemisphere)
    }

    pub fn disk2d(center: [f64; 2], radius: f64) -> Result<Self> {
        Disk2d::new(center, radius).map(Surface::Disk2d)
    }

    pub fn torus(center: Point3, major: f64, minor: f64) -> Result<Self> {
        Torus::new(center, major, minor).map(Surface::Torus)
    }

    pub fn mesh(mesh: TriangleMesh) -> Self {
        Surface::TriangleMesh(Box::new(mesh))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Surface::Sphere(_) => "sphere",
            Surface::Hemisphere(_) => "hemisphere",
            Surface::Disk2d(_) => "disk2d",
            Surface::Torus(_) => "torus",
            Surface::TriangleMesh(_) => "triangle mesh",
        }
    }

    /// Dimension of the embedding space.
    pub fn dim(&self) -> usize {
        match self {
            Surface::Disk2d(_) => 2,
            _ => 3,
        }
    }

    pub fn is_open(&self) -> bool {
        match self {
            Surface::Sphere(_) | Surface::Torus(_) => false,
            Surface::Hemisphere(_) | Surface::Disk2d(_) => true,
            Surface::TriangleMesh(m) => m.is_open(),
        }
    }

    /// Axis-aligned bounds of the surface (third axis collapsed in 2D).
    pub fn bounding_box(&self) -> (Point3, Point3) {
        match self {
            Surface::Sphere(s) => s.bounding_box(),
            Surface::Hemisphere(s) => s.bounding_box(),
            Surface::Disk2d(s) => s.bounding_box(),
            Surface::Torus(s) => s.bounding_box(),
            Surface::TriangleMesh(m) => m.bounding_box(),
        }
    }

    /// Distance from `x` to the surface closure. Never fails, even on the
    /// medial axis.
    pub fn distance(&self, x: &Point3) -> f64 {
        match self {
            Surface::Sphere(s) => s.distance(x),
            Surface::Hemisphere(s) => s.distance(x),
            Surface::Disk2d(s) => s.distance(x),
            Surface::Torus(s) => s.distance(x),
            Surface::TriangleMesh(m) => m.distance(x),
        }
    }

    /// Closest point of the surface closure to `x`.
    pub fn closest_point(&self, x: &Point3) -> Result<CpResult> {
        match self {
            Surface::Sphere(s) => s.closest_point(x),
            Surface::Hemisphere(s) => s.closest_point(x),
            Surface::Disk2d(s) => s.closest_point(x),
            Surface::Torus(s) => s.closest_point(x),
            Surface::TriangleMesh(m) => m.closest_point(x),
        }
    }

    /// Closest point of the mirror point `2 cp(x) - x`. Coincides with
    /// `cp(x)` unless `cp(x)` lies on the boundary.
    pub fn mirror_closest_point(&self, x: &Point3) -> Result<CpResult> {
        let cp = self.closest_point(x)?;
        let mirror = 2.0 * cp.cp - x;
        self.closest_point(&mirror)
    }

    pub fn boundary_frame(&self, y: &Point3) -> Result<BoundaryFrame> {
        match self {
            Surface::Hemisphere(s) => s.boundary_frame(y),
            Surface::Disk2d(s) => s.boundary_frame(y),
            Surface::TriangleMesh(m) => m.boundary_frame(y),
            Surface::Sphere(_) | Surface::Torus(_) => Err(CphmError::Geometry(format!(
                "{} has no boundary",
                self.name()
            ))),
        }
    }

    /// Exact geodesic distance between two points of the surface closure.
    pub fn exact_geodesic(&self, x0: &Point3, y: &Point3) -> Result<f64> {
        match self {
            Surface::Sphere(s) => Ok(great_circle(&s.center, s.radius, x0, y)),
            // The closed upper hemisphere is geodesically convex: the minor
            // great-circle arc between two of its points never dips below the
            // equator.
            Surface::Hemisphere(s) => Ok(great_circle(&s.center, s.radius, x0, y)),
            // Convex planar region.
            Surface::Disk2d(_) => Ok((x0 - y).norm()),
            _ => Err(CphmError::UnsupportedOracle(self.name())),
        }
    }

    pub fn has_exact_geodesic(&self) -> bool {
        matches!(
            self,
            Surface::Sphere(_) | Surface::Hemisphere(_) | Surface::Disk2d(_)
        )
    }
}

fn great_circle(center: &Point3, radius: f64, a: &Point3, b: &Point3) -> f64 {
    let u = a - center;
    let v = b - center;
    radius * u.cross(&v).norm().atan2(u.dot(&v))
}

/// Any unit vector orthogonal to the unit vector `n`.
pub(crate) fn any_orthogonal(n: &Point3) -> Point3 {
    let axis = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Point3::x()
    } else if n.y.abs() <= n.z.abs() {
        Point3::y()
    } else {
        Point3::z()
    };
    (axis - n * n.dot(&axis)).normalize()
}
