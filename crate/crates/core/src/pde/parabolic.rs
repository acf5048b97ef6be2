//! Reaction–diffusion equations `u_t = ν u_xx + R(u)` by Strang splitting:
//! half a reaction step (explicit midpoint), a Crank–Nicolson diffusion
//! step, then another half reaction step.

use super::PdeSpec;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Prefactored constant-coefficient tridiagonal solve (Thomas algorithm).
#[derive(Clone, Debug)]
struct Tridiagonal {
    lower: Vec<f64>,
    upper_mod: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl Tridiagonal {
    fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Self {
        let n = diag.len();
        let mut upper_mod = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut pivot = diag[0];
        inv_pivot[0] = 1.0 / pivot;
        upper_mod[0] = upper[0] / pivot;
        for i in 1..n {
            pivot = diag[i] - lower[i] * upper_mod[i - 1];
            inv_pivot[i] = 1.0 / pivot;
            upper_mod[i] = upper[i] / pivot;
        }
        Self {
            lower,
            upper_mod,
            inv_pivot,
        }
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper_mod[i] * rhs[i + 1];
        }
    }
}

/// Crank–Nicolson step `(I − r/2 D) u⁺ = (I + r/2 D) u` with `r = ν dt/h²`.
#[derive(Clone, Debug)]
enum Diffusion {
    /// Cyclic system handled by Sherman–Morrison on top of a tridiagonal
    /// factorization.
    Periodic {
        half_r: f64,
        base: Tridiagonal,
        z: Vec<f64>,
        corner: f64,
        denom: f64,
    },
    /// Homogeneous Neumann via mirrored ghost nodes.
    Neumann { half_r: f64, system: Tridiagonal },
}

impl Diffusion {
    fn periodic(n: usize, r: f64) -> Self {
        let half_r = 0.5 * r;
        let (a, b, c) = (-half_r, 1.0 + r, -half_r);
        let gamma = -b;
        let mut diag = vec![b; n];
        diag[0] = b - gamma;
        diag[n - 1] = b - a * c / gamma;
        let base = Tridiagonal::new(vec![a; n], diag, vec![c; n]);
        let mut z = vec![0.0; n];
        z[0] = gamma;
        z[n - 1] = c;
        base.solve(&mut z);
        let corner = a / gamma;
        let denom = 1.0 + z[0] + corner * z[n - 1];
        Self::Periodic {
            half_r,
            base,
            z,
            corner,
            denom,
        }
    }

    fn neumann(n: usize, r: f64) -> Self {
        let half_r = 0.5 * r;
        let mut lower = vec![-half_r; n];
        let mut upper = vec![-half_r; n];
        upper[0] = -r;
        lower[n - 1] = -r;
        let system = Tridiagonal::new(lower, vec![1.0 + r; n], upper);
        Self::Neumann { half_r, system }
    }

    fn step(&self, u: &mut [f64], scratch: &mut Vec<f64>) {
        let n = u.len();
        scratch.clear();
        match self {
            Diffusion::Periodic {
                half_r,
                base,
                z,
                corner,
                denom,
            } => {
                for i in 0..n {
                    let left = u[(i + n - 1) % n];
                    let right = u[(i + 1) % n];
                    scratch.push(u[i] + half_r * (left - 2.0 * u[i] + right));
                }
                base.solve(scratch);
                let dot = scratch[0] + corner * scratch[n - 1];
                let f = dot / denom;
                for i in 0..n {
                    u[i] = scratch[i] - f * z[i];
                }
            }
            Diffusion::Neumann { half_r, system } => {
                for i in 0..n {
                    let left = if i == 0 { u[1] } else { u[i - 1] };
                    let right = if i + 1 == n { u[n - 2] } else { u[i + 1] };
                    scratch.push(u[i] + half_r * (left - 2.0 * u[i] + right));
                }
                system.solve(scratch);
                u.copy_from_slice(scratch);
            }
        }
    }
}

fn midpoint(u: &mut [f64], dt: f64, f: impl Fn(f64) -> f64) {
    for x in u.iter_mut() {
        let half = *x + 0.5 * dt * f(*x);
        *x += dt * f(half);
    }
}

fn integrate(
    u0: &[f64],
    grid: &Grid,
    spec: &PdeSpec,
    periodic: bool,
    reaction: impl Fn(f64) -> f64,
) -> Result<Vec<f64>> {
    if grid.dims() != 1 || u0.len() != grid.len() {
        return Err(Error::Shape(format!(
            "initial condition has {} values for a {}D grid of {} points",
            u0.len(),
            grid.dims(),
            grid.len()
        )));
    }
    spec.validate()?;
    let n = u0.len();
    let interval = spec.t_final / (spec.time_slices - 1) as f64;
    let substeps = (interval / spec.dt).ceil().max(1.0) as usize;
    let dt = interval / substeps as f64;
    let h = grid.spacing(0);
    let r = spec.diffusivity * dt / (h * h);
    let diffusion = if periodic {
        Diffusion::periodic(n, r)
    } else {
        Diffusion::neumann(n, r)
    };

    let mut out = Vec::with_capacity(n * spec.time_slices);
    out.extend_from_slice(u0);
    let mut u = u0.to_vec();
    let mut scratch = Vec::with_capacity(n);
    let react = spec.reaction != 0.0;
    for slice in 1..spec.time_slices {
        for _ in 0..substeps {
            if react {
                midpoint(&mut u, 0.5 * dt, &reaction);
            }
            diffusion.step(&mut u, &mut scratch);
            if react {
                midpoint(&mut u, 0.5 * dt, &reaction);
            }
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver(format!("non-finite state at time slice {slice}")));
        }
        out.extend_from_slice(&u);
    }
    Ok(out)
}

/// `u_t = ν u_xx + ρ u (1 − u)` on a periodic grid. Returns `time_slices`
/// snapshots, time-major.
pub fn solve_diffusion_reaction_1d(u0: &[f64], grid: &Grid, spec: &PdeSpec) -> Result<Vec<f64>> {
    let rho = spec.reaction;
    integrate(u0, grid, spec, true, move |u| rho * u * (1.0 - u))
}

/// `u_t = ε u_xx + ρ (u − u³)` with homogeneous Neumann boundaries.
pub fn solve_allen_cahn_1d(u0: &[f64], grid: &Grid, spec: &PdeSpec) -> Result<Vec<f64>> {
    let rho = spec.reaction;
    integrate(u0, grid, spec, false, move |u| rho * (u - u * u * u))
}
