//! Sparse operators on the band: finite differences, closest point
//! extensions and the boundary terms used on open surfaces.

pub mod interp;
mod sparse;

pub use interp::StencilWeights;
pub use sparse::SparseOperator;

use rayon::prelude::*;

use crate::band::{Band, Layer};
use crate::error::{CphmError, Result};
use crate::geometry::{Point3, Surface};

/// Which closest point an extension row interpolates at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Targets {
    /// `cp(x)`.
    Standard,
    /// `cp(2 cp(x) - x)`, which differs from `cp(x)` only at ghost points.
    Mirror,
}

fn closure_violation(i: usize, axis: usize) -> CphmError {
    CphmError::BandClosure(format!(
        "inner band point {i} is missing its neighbour along axis {axis}"
    ))
}

/// Standard `2 dim + 1` point Laplacian on inner points; outer rows are empty.
pub fn assemble_laplacian(band: &Band) -> Result<SparseOperator> {
    let dim = band.dim();
    let h2 = band.dx() * band.dx();
    let rows = (0..band.len())
        .map(|i| {
            if band.points[i].layer == Layer::Outer {
                return Ok(Vec::new());
            }
            let mut row = vec![(i, -2.0 * dim as f64 / h2)];
            for k in 0..dim {
                for s in [-1, 1] {
                    let j = band.neighbor(i, k, s).ok_or_else(|| closure_violation(i, k))?;
                    row.push((j, 1.0 / h2));
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SparseOperator::from_rows(band.len(), rows))
}

/// Second-order central differences `D_k`, one per grid axis.
pub fn assemble_derivatives(band: &Band) -> Result<Vec<SparseOperator>> {
    let inv = 1.0 / (2.0 * band.dx());
    (0..band.dim())
        .map(|k| {
            let rows = (0..band.len())
                .map(|i| {
                    if band.points[i].layer == Layer::Outer {
                        return Ok(Vec::new());
                    }
                    let lo = band.neighbor(i, k, -1).ok_or_else(|| closure_violation(i, k))?;
                    let hi = band.neighbor(i, k, 1).ok_or_else(|| closure_violation(i, k))?;
                    Ok(vec![(lo, -inv), (hi, inv)])
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SparseOperator::from_rows(band.len(), rows))
        })
        .collect()
}

/// Interpolation weights of `target` as `(band index, weight)` pairs.
pub fn interpolation_row(band: &Band, target: &Point3, degree: usize) -> Result<Vec<(usize, f64)>> {
    let stencil = StencilWeights::new(&band.grid, target, degree);
    let mut row = Vec::with_capacity((degree + 1).pow(band.dim() as u32));
    let mut missing = None;
    stencil.for_each(|m, w| match band.index_of(m) {
        Some(j) => row.push((j, w)),
        None => missing = Some(m),
    });
    match missing {
        Some(m) => Err(CphmError::BandClosure(format!(
            "interpolation stencil at ({:.6}, {:.6}, {:.6}) leaves the band at node {m:?}",
            target.x, target.y, target.z
        ))),
        None => Ok(row),
    }
}

/// Closest point extension matrix: row `i` interpolates with tensor-product
/// Lagrange polynomials of degree `order` at the closest point of `x_i`.
pub fn assemble_extension(band: &Band, order: usize, targets: Targets) -> Result<SparseOperator> {
    let rows = band
        .points
        .par_iter()
        .map(|p| {
            let target = match targets {
                Targets::Standard => &p.cp.cp,
                Targets::Mirror => &p.cp_mirror.cp,
            };
            interpolation_row(band, target, order)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SparseOperator::from_rows(band.len(), rows))
}

/// Interpolation matrix from band values to arbitrary points.
pub fn interpolation_matrix(band: &Band, points: &[Point3], order: usize) -> Result<SparseOperator> {
    let rows = points
        .par_iter()
        .map(|x| interpolation_row(band, x, order))
        .collect::<Result<Vec<_>>>()?;
    Ok(SparseOperator::from_rows(band.len(), rows))
}

/// Scale `kappa * <x_g - cp(x_g), n>` applied to the boundary flux at each
/// ghost point, together with the outward conormal `n` at `cp(x_g)`.
fn ghost_scales(band: &Band, surface: &Surface, kappa: f64) -> Result<Vec<Option<(f64, Point3)>>> {
    band.points
        .iter()
        .map(|p| {
            if !p.is_ghost {
                return Ok(None);
            }
            let frame = surface.boundary_frame(&p.cp.cp)?;
            let offset = (p.position - p.cp.cp).dot(&frame.conormal);
            Ok(Some((kappa * offset, frame.conormal)))
        })
        .collect()
}

/// Matrix `Ē_g` mapping the heat solution to its boundary flux term: the
/// ghost row for `x_g` is `kappa <x_g - cp, n> (sum_k n_k I_cp D_k)`, where
/// `I_cp` interpolates with degree `degree` at `cp(x_g)`.
pub fn assemble_neumann_heat(
    band: &Band,
    surface: &Surface,
    derivatives: &[SparseOperator],
    degree: usize,
    kappa: f64,
) -> Result<SparseOperator> {
    if !surface.is_open() {
        return Ok(SparseOperator::zeros(band.len(), band.len()));
    }
    let scales = ghost_scales(band, surface, kappa)?;
    let rows = band
        .points
        .iter()
        .zip(&scales)
        .map(|(p, scale)| {
            let Some((c, n)) = scale else {
                return Ok(Vec::new());
            };
            let interp = interpolation_row(band, &p.cp.cp, degree)?;
            let mut row = Vec::with_capacity(interp.len() * 2 * band.dim());
            for (k, d) in derivatives.iter().enumerate() {
                let nk = n[k];
                if nk == 0.0 {
                    continue;
                }
                for &(j, w) in &interp {
                    let (cols, vals) = d.row(j);
                    if cols.is_empty() {
                        return Err(CphmError::BandClosure(format!(
                            "derivative row {j} used at a ghost point is not defined"
                        )));
                    }
                    row.extend(cols.iter().zip(vals).map(|(&col, &v)| (col, c * nk * w * v)));
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SparseOperator::from_rows(band.len(), rows))
}

/// Boundary vector with entry `kappa <x_g - cp, n> g(cp(x_g))` at each ghost
/// point and zero elsewhere.
pub fn neumann_vector(
    band: &Band,
    surface: &Surface,
    kappa: f64,
    flux: impl Fn(usize, &Point3, &Point3) -> f64,
) -> Result<Vec<f64>> {
    if !surface.is_open() {
        return Ok(vec![0.0; band.len()]);
    }
    let scales = ghost_scales(band, surface, kappa)?;
    Ok(band
        .points
        .iter()
        .zip(&scales)
        .enumerate()
        .map(|(i, (p, s))| s.map_or(0.0, |(c, n)| c * flux(i, &p.cp.cp, &n)))
        .collect())
}

/// Boundary vector `g_2` for the Poisson step: the flux is `<n, X(cp)>`
/// with `X` interpolated at `cp(x_g)` with degree `degree`.
pub fn assemble_neumann_poisson_rhs(
    band: &Band,
    surface: &Surface,
    field: &[Vec<f64>],
    degree: usize,
    kappa: f64,
) -> Result<Vec<f64>> {
    if !surface.is_open() {
        return Ok(vec![0.0; band.len()]);
    }
    let rows: Vec<Option<Vec<(usize, f64)>>> = band
        .points
        .iter()
        .map(|p| {
            p.is_ghost
                .then(|| interpolation_row(band, &p.cp.cp, degree))
                .transpose()
        })
        .collect::<Result<_>>()?;
    neumann_vector(band, surface, kappa, |i, _, n| {
        let row = rows[i].as_ref().expect("ghost row");
        field
            .iter()
            .enumerate()
            .map(|(k, comp)| n[k] * row.iter().map(|&(j, w)| w * comp[j]).sum::<f64>())
            .sum()
    })
}

/// Every operator the pipeline needs on one band.
#[derive(Debug, Clone)]
pub struct Operators {
    pub laplacian: SparseOperator,
    pub derivatives: Vec<SparseOperator>,
    /// Degree-`p` extension, at mirror targets on open surfaces.
    pub ext_p: SparseOperator,
    /// Degree-`q` extension, at mirror targets on open surfaces.
    pub ext_q: SparseOperator,
    /// Degree-`q` interpolation at the standard closest points.
    pub interp_q: SparseOperator,
    /// `Ē_g`; zero on closed surfaces.
    pub neumann_heat: SparseOperator,
}

impl Operators {
    pub fn assemble(band: &Band, surface: &Surface, p: usize, q: usize, kappa: f64) -> Result<Self> {
        let laplacian = assemble_laplacian(band)?;
        let derivatives = assemble_derivatives(band)?;
        let targets = if surface.is_open() {
            Targets::Mirror
        } else {
            Targets::Standard
        };
        let ext_p = assemble_extension(band, p, targets)?;
        let ext_q = assemble_extension(band, q, targets)?;
        let interp_q = if targets == Targets::Standard {
            ext_q.clone()
        } else {
            assemble_extension(band, q, Targets::Standard)?
        };
        let neumann_heat = assemble_neumann_heat(band, surface, &derivatives, q, kappa)?;
        Ok(Operators {
            laplacian,
            derivatives,
            ext_p,
            ext_q,
            interp_q,
            neumann_heat,
        })
    }
}
