//! Tensor-product Lagrange interpolation on the band grid.

use crate::band::GridSpec;
use crate::geometry::Point3;

/// Lower stencil index along one axis for grid coordinate `t`; the target
/// falls in the central cell of the `degree + 1` node stencil.
pub fn stencil_base(t: f64, degree: usize) -> i64 {
    if degree % 2 == 1 {
        t.floor() as i64 - (degree as i64 - 1) / 2
    } else {
        t.round() as i64 - degree as i64 / 2
    }
}

/// Lagrange basis values at `s` for the nodes `0, 1, ..., degree`.
pub fn lagrange_weights(s: f64, degree: usize) -> Vec<f64> {
    (0..=degree)
        .map(|j| {
            let mut w = 1.0;
            for m in 0..=degree {
                if m != j {
                    w *= (s - m as f64) / (j as f64 - m as f64);
                }
            }
            w
        })
        .collect()
}

/// Interpolation stencil of a single target point.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilWeights {
    pub base: [i64; 3],
    /// One weight vector per axis; unused axes carry the single weight 1.
    pub weights: [Vec<f64>; 3],
}

impl StencilWeights {
    pub fn new(grid: &GridSpec, target: &Point3, degree: usize) -> Self {
        let mut base = [0i64; 3];
        let mut weights: [Vec<f64>; 3] = [vec![1.0], vec![1.0], vec![1.0]];
        for k in 0..grid.dim {
            let t = grid.coordinate(target, k);
            base[k] = stencil_base(t, degree);
            weights[k] = lagrange_weights(t - base[k] as f64, degree);
        }
        StencilWeights { base, weights }
    }

    /// Visit every stencil node with its tensor-product weight.
    pub fn for_each(&self, mut f: impl FnMut([i64; 3], f64)) {
        for (a, wa) in self.weights[0].iter().enumerate() {
            for (b, wb) in self.weights[1].iter().enumerate() {
                for (c, wc) in self.weights[2].iter().enumerate() {
                    let m = [
                        self.base[0] + a as i64,
                        self.base[1] + b as i64,
                        self.base[2] + c as i64,
                    ];
                    f(m, wa * wb * wc);
                }
            }
        }
    }
}
