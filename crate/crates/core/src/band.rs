//! Narrow band of Cartesian grid points around a surface.

use rayon::prelude::*;

use crate::error::{CphmError, Result};
use crate::geometry::{CpResult, Point3, Surface};
use crate::operators::interp::stencil_base;

/// Offset of the lattice from the world origin, as a fraction of `dx`, so
/// that grid nodes avoid the symmetry planes of the analytic test surfaces.
pub const DEFAULT_ANCHOR: f64 = 1.0 / std::f64::consts::PI;

/// Extra ring of grid nodes kept around the band inside the grid extent.
const GRID_MARGIN: i64 = 3;

/// Uniform Cartesian grid. Node `m` sits at `origin + m * dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub origin: Point3,
    pub dx: f64,
    pub extent: [usize; 3],
}

impl GridSpec {
    /// Grid covering `surface` dilated by `radius`, on the lattice
    /// `{(k + anchor) * dx}`.
    pub fn covering(surface: &Surface, dx: f64, radius: f64, anchor: f64) -> Result<Self> {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(CphmError::Config(format!("dx must be positive, got {dx}")));
        }
        let dim = surface.dim();
        let (lo, hi) = surface.bounding_box();
        let mut origin = Point3::zeros();
        let mut extent = [1usize; 3];
        for k in 0..dim {
            let kmin = ((lo[k] - radius) / dx - anchor).floor() as i64 - GRID_MARGIN;
            let kmax = ((hi[k] + radius) / dx - anchor).ceil() as i64 + GRID_MARGIN;
            origin[k] = (kmin as f64 + anchor) * dx;
            extent[k] = (kmax - kmin + 1) as usize;
        }
        let nodes = extent.iter().product::<usize>();
        if nodes > u32::MAX as usize {
            return Err(CphmError::Config(format!(
                "grid with {nodes} nodes is too large; increase dx"
            )));
        }
        Ok(GridSpec {
            dim,
            origin,
            dx,
            extent,
        })
    }

    pub fn node_count(&self) -> usize {
        self.extent.iter().product()
    }

    pub fn position(&self, m: [i64; 3]) -> Point3 {
        self.origin + Point3::new(m[0] as f64, m[1] as f64, m[2] as f64) * self.dx
    }

    /// Lexicographic flat index; `None` outside the extent.
    pub fn flat(&self, m: [i64; 3]) -> Option<usize> {
        let mut f = 0usize;
        for k in 0..3 {
            if m[k] < 0 || m[k] as usize >= self.extent[k] {
                return None;
            }
            f = f * self.extent[k] + m[k] as usize;
        }
        Some(f)
    }

    pub fn unflat(&self, mut f: usize) -> [i64; 3] {
        let mut m = [0i64; 3];
        for k in (0..3).rev() {
            m[k] = (f % self.extent[k]) as i64;
            f /= self.extent[k];
        }
        m
    }

    /// Grid coordinate of `x` along axis `k`, in units of `dx`.
    pub fn coordinate(&self, x: &Point3, k: usize) -> f64 {
        (x[k] - self.origin[k]) / self.dx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// Every axis neighbour is in the band, so difference stencils close.
    Inner,
    Outer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandPoint {
    pub multi_index: [i64; 3],
    pub position: Point3,
    pub cp: CpResult,
    pub cp_mirror: CpResult,
    pub is_ghost: bool,
    pub layer: Layer,
}

#[derive(Debug, Clone)]
pub struct Band {
    pub grid: GridSpec,
    pub points: Vec<BandPoint>,
    pub bandwidth: f64,
    lookup: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

/// Band radius that keeps every degree-`q` interpolation stencil around a
/// surface point, plus one axis step beyond it, inside the band.
pub fn bandwidth(dim: usize, q: usize, dx: f64) -> f64 {
    let half = (q as f64 + 1.0) / 2.0;
    dx * ((dim as f64 - 1.0) * half * half + (1.0 + half).powi(2)).sqrt()
}

impl Band {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn dx(&self) -> f64 {
        self.grid.dx
    }

    pub fn index_of(&self, m: [i64; 3]) -> Option<usize> {
        let f = self.grid.flat(m)?;
        match self.lookup[f] {
            ABSENT => None,
            i => Some(i as usize),
        }
    }

    /// Band index of the neighbour of point `i` one step along `axis` in
    /// direction `step` (±1).
    pub fn neighbor(&self, i: usize, axis: usize, step: i64) -> Option<usize> {
        let mut m = self.points[i].multi_index;
        m[axis] += step;
        self.index_of(m)
    }

    pub fn ghost_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_ghost).count()
    }

    pub fn inner_count(&self) -> usize {
        self.points.iter().filter(|p| p.layer == Layer::Inner).count()
    }
}

/// Collect the grid points within `bandwidth(dim, q, dx)` of the surface
/// and cache their closest and mirror closest points.
pub fn build_band(surface: &Surface, grid: &GridSpec, p: usize, q: usize) -> Result<Band> {
    if p > q {
        return Err(CphmError::Config(format!(
            "Laplacian interpolation degree p = {p} exceeds penalty degree q = {q}"
        )));
    }
    if grid.dim != surface.dim() {
        return Err(CphmError::Config(format!(
            "grid dimension {} does not match the {}-dimensional {}",
            grid.dim,
            surface.dim(),
            surface.name()
        )));
    }
    let bw = bandwidth(grid.dim, q, grid.dx);
    let candidates = candidate_nodes(surface, grid, bw);

    let mut points: Vec<BandPoint> = candidates
        .into_par_iter()
        .filter_map(|f| {
            let m = grid.unflat(f);
            let x = grid.position(m);
            if surface.distance(&x) > bw {
                return None;
            }
            Some(surface.closest_point(&x).map(|cp| (m, x, cp)))
        })
        .filter_map(|r| match r {
            Ok((m, x, cp)) if cp.dist <= bw => Some(Ok((m, x, cp))),
            Ok(_) => None,
            Err(e) => Some(Err(e)),
        })
        .map(|r| {
            let (m, x, cp) = r?;
            let cp_mirror = if cp.on_boundary {
                surface.closest_point(&(2.0 * cp.cp - x))?
            } else {
                cp
            };
            Ok(BandPoint {
                multi_index: m,
                position: x,
                cp,
                cp_mirror,
                is_ghost: cp.on_boundary,
                layer: Layer::Outer,
            })
        })
        .collect::<Result<_>>()?;

    if points.is_empty() {
        return Err(CphmError::Config(
            "no grid points fall inside the band; check the grid and dx".into(),
        ));
    }
    points.sort_unstable_by_key(|p| grid.flat(p.multi_index));

    let mut lookup = vec![ABSENT; grid.node_count()];
    for (i, p) in points.iter().enumerate() {
        let m = p.multi_index;
        if (0..grid.dim).any(|k| m[k] == 0 || m[k] as usize + 1 == grid.extent[k]) {
            return Err(CphmError::Config(
                "band touches the edge of the grid extent".into(),
            ));
        }
        lookup[grid.flat(m).expect("band point inside grid")] = i as u32;
    }

    let mut band = Band {
        grid: grid.clone(),
        points,
        bandwidth: bw,
        lookup,
    };

    let inner: Vec<bool> = (0..band.len())
        .map(|i| {
            (0..band.dim()).all(|k| band.neighbor(i, k, 1).is_some() && band.neighbor(i, k, -1).is_some())
        })
        .collect();
    for (pt, inner) in band.points.iter_mut().zip(inner) {
        if inner {
            pt.layer = Layer::Inner;
        }
    }

    check_stencil_closure(&band, q)?;
    Ok(band)
}

/// Every interpolation cube targeted at a cached closest point must consist
/// of inner band points.
fn check_stencil_closure(band: &Band, q: usize) -> Result<()> {
    let dim = band.dim();
    let width = q as i64 + 1;
    for (i, pt) in band.points.iter().enumerate() {
        for target in [&pt.cp.cp, &pt.cp_mirror.cp] {
            let mut base = [0i64; 3];
            for (k, b) in base.iter_mut().enumerate().take(dim) {
                *b = stencil_base(band.grid.coordinate(target, k), q);
            }
            let reach = |k: usize| if k < dim { width } else { 1 };
            for a in 0..reach(0) {
                for b in 0..reach(1) {
                    for c in 0..reach(2) {
                        let m = [base[0] + a, base[1] + b, base[2] + c];
                        let ok = band
                            .index_of(m)
                            .is_some_and(|j| band.points[j].layer == Layer::Inner);
                        if !ok {
                            return Err(CphmError::BandClosure(format!(
                                "interpolation stencil of band point {i} reaches node {m:?}, \
                                 which is not an inner band point"
                            )));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn candidate_nodes(surface: &Surface, grid: &GridSpec, bw: f64) -> Vec<usize> {
    let Surface::TriangleMesh(mesh) = surface else {
        return (0..grid.node_count()).collect();
    };
    let mut mark = vec![false; grid.node_count()];
    for f in 0..mesh.faces().len() {
        let [a, b, c] = mesh.triangle(f);
        let lo = a.inf(&b).inf(&c);
        let hi = a.sup(&b).sup(&c);
        let mut range = [(0i64, 0i64); 3];
        for (k, r) in range.iter_mut().enumerate() {
            let l = (grid.coordinate(&lo, k) - bw / grid.dx).floor() as i64;
            let h = (grid.coordinate(&hi, k) + bw / grid.dx).ceil() as i64;
            *r = (l.max(0), h.min(grid.extent[k] as i64 - 1));
        }
        for i in range[0].0..=range[0].1 {
            for j in range[1].0..=range[1].1 {
                for k in range[2].0..=range[2].1 {
                    if let Some(fl) = grid.flat([i, j, k]) {
                        mark[fl] = true;
                    }
                }
            }
        }
    }
    mark.iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect()
}
