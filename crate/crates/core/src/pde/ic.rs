use super::{PdeKind, PdeSpec};
use crate::error::{Error, Result};
use crate::grid::Grid;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use std::f64::consts::PI;

/// Random truncated Fourier series `Σ_k A_k sin(2πk x̃) + B_k cos(2πk x̃)`
/// with `A_k, B_k ~ N(0, 1/k²)` and `x̃` the coordinate normalized to the
/// domain. Allen–Cahn fields are scaled to max-abs 1; diffusion–reaction
/// fields are mapped affinely onto `[0.1, 0.9]`.
pub fn sample_initial_condition_1d(grid: &Grid, spec: &PdeSpec, seed: u64) -> Result<Vec<f64>> {
    if grid.dims() != 1 {
        return Err(Error::Config("initial conditions are sampled on 1D grids".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<(f64, f64)> = (1..=spec.ic_modes)
        .map(|k| {
            let dist = Normal::new(0.0, 1.0 / k as f64).expect("positive std");
            (dist.sample(&mut rng), dist.sample(&mut rng))
        })
        .collect();
    let axis = &grid.axes()[0];
    let width = match spec.kind {
        PdeKind::DiffusionReaction1d => 1.0,
        _ => axis.hi - axis.lo,
    };
    let raw: Vec<f64> = (0..axis.extent)
        .map(|i| {
            let x = (axis.coordinate(i) - axis.lo) / width;
            coeffs
                .iter()
                .enumerate()
                .map(|(k, (a, b))| {
                    let arg = 2.0 * PI * (k + 1) as f64 * x;
                    a * arg.sin() + b * arg.cos()
                })
                .sum()
        })
        .collect();

    match spec.kind {
        PdeKind::AllenCahn1d => {
            let m = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if m == 0.0 {
                return Err(Error::DegenerateField);
            }
            Ok(raw.iter().map(|v| v / m).collect())
        }
        _ => {
            let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi <= lo {
                return Err(Error::DegenerateField);
            }
            Ok(raw.iter().map(|v| 0.1 + 0.8 * (v - lo) / (hi - lo)).collect())
        }
    }
}

/// Two-phase permeability: a zero-mean Gaussian random field with a
/// squared-exponential spectrum (length scale `spec.length_scale`),
/// synthesized from Fourier modes on the unit square and thresholded at 0.
pub fn sample_darcy_coefficient(grid: &Grid, spec: &PdeSpec, seed: u64) -> Result<Vec<f64>> {
    if grid.dims() != 2 {
        return Err(Error::Config("permeability fields are sampled on 2D grids".into()));
    }
    let field = gaussian_random_field(grid, spec.length_scale, seed);
    Ok(field
        .iter()
        .map(|&g| if g >= 0.0 { spec.permeability_high } else { spec.permeability_low })
        .collect())
}

fn gaussian_random_field(grid: &Grid, length_scale: f64, seed: u64) -> Vec<f64> {
    // Modes with spectral weight below ~1e-8 of the peak are dropped.
    let kmax = ((18.4f64).sqrt() / (PI * length_scale * 2f64.sqrt())).ceil() as i64;
    let (ax, ay) = (&grid.axes()[0], &grid.axes()[1]);
    let table = |axis: &crate::grid::Axis| -> Vec<Vec<(f64, f64)>> {
        (-kmax..=kmax)
            .map(|k| {
                (0..axis.extent)
                    .map(|i| {
                        let arg = 2.0 * PI * k as f64 * (axis.coordinate(i) - axis.lo) / (axis.hi - axis.lo);
                        (arg.cos(), arg.sin())
                    })
                    .collect()
            })
            .collect()
    };
    let (tx, ty) = (table(ax), table(ay));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; grid.len()];
    let ny = ay.extent;
    for (ix, kx) in (-kmax..=kmax).enumerate() {
        for (iy, ky) in (-kmax..=kmax).enumerate() {
            if kx == 0 && ky == 0 {
                continue;
            }
            let k2 = (kx * kx + ky * ky) as f64;
            let amp = (-2.0 * PI * PI * length_scale * length_scale * k2).exp().sqrt();
            let xi: f64 = StandardNormal.sample(&mut rng);
            let eta: f64 = StandardNormal.sample(&mut rng);
            for i in 0..ax.extent {
                let (cx, sx) = tx[ix][i];
                for j in 0..ny {
                    let (cy, sy) = ty[iy][j];
                    let c = cx * cy - sx * sy;
                    let s = sx * cy + cx * sy;
                    out[i * ny + j] += amp * (xi * c + eta * s);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_conditions_are_reproducible_and_scaled() {
        let spec = PdeSpec::new(PdeKind::AllenCahn1d, 64);
        let g = spec.grid().unwrap();
        let a = sample_initial_condition_1d(&g, &spec, 7).unwrap();
        assert_eq!(a, sample_initial_condition_1d(&g, &spec, 7).unwrap());
        let m = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((m - 1.0).abs() < 1e-12);
        let b = sample_initial_condition_1d(&g, &spec, 8).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn diffusion_reaction_ic_in_unit_band() {
        let spec = PdeSpec::new(PdeKind::DiffusionReaction1d, 64);
        let g = spec.grid().unwrap();
        let a = sample_initial_condition_1d(&g, &spec, 3).unwrap();
        let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((lo - 0.1).abs() < 1e-12 && (hi - 0.9).abs() < 1e-12);
    }

    #[test]
    fn darcy_coefficient_is_two_phase_and_balanced() {
        let spec = PdeSpec::new(PdeKind::Darcy2d, 16);
        let g = spec.grid().unwrap();
        let a = sample_darcy_coefficient(&g, &spec, 1).unwrap();
        assert_eq!(a, sample_darcy_coefficient(&g, &spec, 1).unwrap());
        assert!(a.iter().all(|&v| v == 3.0 || v == 12.0));
        let mut high = 0usize;
        for seed in 0..100 {
            let a = sample_darcy_coefficient(&g, &spec, seed).unwrap();
            high += a.iter().filter(|&&v| v == 12.0).count();
        }
        let frac = high as f64 / (100 * g.len()) as f64;
        assert!((0.4..=0.6).contains(&frac), "fraction {frac}");
    }
}
