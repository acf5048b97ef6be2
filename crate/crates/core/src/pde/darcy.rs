//! `−∇·(a ∇u) = f` on a rectangle with `u = 0` on the boundary nodes.
//!
//! Five-point finite-volume stencil with harmonic-mean face coefficients;
//! the symmetric positive-definite system over interior nodes is solved by
//! matrix-free conjugate gradients.

use super::PdeSpec;
use crate::error::{Error, Result};
use crate::grid::Grid;

pub const CG_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct DarcySolution {
    /// Values at every grid node (boundary nodes are zero), row-major.
    pub u: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

struct Operator {
    nx: usize,
    ny: usize,
    /// Face coefficient / h² between (i, j) and (i + 1, j).
    cx: Vec<f64>,
    /// Face coefficient / h² between (i, j) and (i, j + 1).
    cy: Vec<f64>,
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

impl Operator {
    fn new(grid: &Grid, a: &[f64]) -> Self {
        let (nx, ny) = (grid.axes()[0].extent, grid.axes()[1].extent);
        let (hx2, hy2) = (grid.spacing(0).powi(2), grid.spacing(1).powi(2));
        let mut cx = vec![0.0; nx * ny];
        let mut cy = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                let p = a[i * ny + j];
                if i + 1 < nx {
                    cx[i * ny + j] = harmonic(p, a[(i + 1) * ny + j]) / hx2;
                }
                if j + 1 < ny {
                    cy[i * ny + j] = harmonic(p, a[i * ny + j + 1]) / hy2;
                }
            }
        }
        Self { nx, ny, cx, cy }
    }

    /// `y = A x` over all nodes; boundary rows and columns are treated as
    /// zero, so `x` must vanish there and `y` does too.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let ny = self.ny;
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 1..self.nx - 1 {
            for j in 1..ny - 1 {
                let k = i * ny + j;
                let (e, w) = (self.cx[k], self.cx[k - ny]);
                let (n, s) = (self.cy[k], self.cy[k - 1]);
                y[k] = (e + w + n + s) * x[k] - e * x[k + ny] - w * x[k - ny] - n * x[k + 1] - s * x[k - 1];
            }
        }
    }

    fn interior(&self, k: usize) -> bool {
        let (i, j) = (k / self.ny, k % self.ny);
        i > 0 && j > 0 && i + 1 < self.nx && j + 1 < self.ny
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves with a pointwise forcing `f` given at every node (boundary values
/// are ignored).
pub fn solve_darcy_with_forcing(a: &[f64], f: &[f64], grid: &Grid) -> Result<DarcySolution> {
    if grid.dims() != 2 {
        return Err(Error::Config("Darcy flow needs a 2D grid".into()));
    }
    let n = grid.len();
    if a.len() != n || f.len() != n {
        return Err(Error::Shape(format!(
            "coefficient has {} and forcing {} values for {n} grid points",
            a.len(),
            f.len()
        )));
    }
    if a.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Config("permeability must be positive and finite".into()));
    }
    let op = Operator::new(grid, a);
    let b: Vec<f64> = (0..n).map(|k| if op.interior(k) { f[k] } else { 0.0 }).collect();
    let b_norm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(DarcySolution {
            u: x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let interior = (op.nx - 2) * (op.ny - 2);
    let max_iter = 10 * interior.max(1);
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        let rel = rr_new.sqrt() / b_norm;
        if !rel.is_finite() {
            return Err(Error::Solver("conjugate gradients produced a non-finite residual".into()));
        }
        if rel < CG_TOLERANCE {
            return Ok(DarcySolution {
                u: x,
                iterations: it,
                relative_residual: rel,
            });
        }
        let beta = rr_new / rr;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
        rr = rr_new;
    }
    Err(Error::Solver(format!(
        "conjugate gradients did not reach relative residual {CG_TOLERANCE:e} in {max_iter} iterations"
    )))
}

/// Constant forcing `spec.forcing`.
pub fn solve_darcy_2d(a: &[f64], grid: &Grid, spec: &PdeSpec) -> Result<DarcySolution> {
    solve_darcy_with_forcing(a, &vec![spec.forcing; grid.len()], grid)
}
