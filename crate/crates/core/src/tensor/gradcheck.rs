//! Central-difference gradient checking.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step `h`.
    pub step: f64,
    /// Lower bound on the relative-error denominator, so coordinates whose
    /// true derivative is ~0 are judged on absolute error.
    pub floor: f64,
    /// Coordinates sampled per parameter tensor; `None` checks all of them.
    pub coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-6,
            coords_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordCheck {
    pub param: usize,
    pub index: usize,
    pub numeric: f64,
    pub analytic: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub coords: Vec<CoordCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.coords.iter().map(|c| c.rel_error).fold(0.0, f64::max)
    }

    /// Nearest-rank percentile of the relative errors, `p` in `[0, 100]`.
    pub fn percentile(&self, p: f64) -> f64 {
        if self.coords.is_empty() {
            return 0.0;
        }
        let mut errs: Vec<f64> = self.coords.iter().map(|c| c.rel_error).collect();
        errs.sort_by(f64::total_cmp);
        let rank = ((p / 100.0) * errs.len() as f64).ceil() as usize;
        errs[rank.clamp(1, errs.len()) - 1]
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.coords.extend(other.coords);
    }
}

/// Compares `analytic` gradients of `f` at `params` against central
/// differences `(f(θ+h) − f(θ−h)) / 2h`.
pub fn finite_difference_check<F>(
    mut f: F,
    params: &[Tensor],
    analytic: &[Tensor],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    if cfg.step <= 0.0 {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    if params.len() != analytic.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} gradients",
            params.len(),
            analytic.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut work = params.to_vec();
    let mut report = GradCheckReport::default();
    for (pi, (p, g)) in params.iter().zip(analytic).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::dim("finite_difference_check", p.shape(), g.shape()));
        }
        let coords: Vec<usize> = match cfg.coords_per_param {
            Some(k) if k < p.numel() => {
                let mut c = sample(&mut rng, p.numel(), k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..p.numel()).collect(),
        };
        for idx in coords {
            let orig = p.data()[idx];
            work[pi].data_mut()[idx] = orig + cfg.step;
            let plus = f(&work)?;
            work[pi].data_mut()[idx] = orig - cfg.step;
            let minus = f(&work)?;
            work[pi].data_mut()[idx] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!(
                    "objective not finite near parameter {pi} coordinate {idx}"
                )));
            }
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let analytic = g.data()[idx];
            let denom = numeric.abs().max(analytic.abs()).max(cfg.floor);
            report.coords.push(CoordCheck {
                param: pi,
                index: idx,
                numeric,
                analytic,
                rel_error: (numeric - analytic).abs() / denom,
            });
        }
    }
    Ok(report)
}

/// Gradient check for a scalar function expressed as a graph builder.
///
/// `build` receives the parameter leaves and returns the scalar output. The
/// analytic route runs one backward pass; the numeric route rebuilds the
/// graph at perturbed values.
pub fn check_gradients<F>(params: &[Tensor], build: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = build(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(v, p)| tape.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = ps.iter().map(|p| t.constant(p.clone())).collect();
        let o = build(&mut t, &vs)?;
        t.value(o).item()
    };
    finite_difference_check(eval, params, &analytic, cfg)
}
