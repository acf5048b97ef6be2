//! Quadrature, Gram matrices, losses and analysis metrics.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::tensor::{Tape, Tensor, Var};
use std::io::Write;

/// Largest grid offset used by [`beta_variability`]; offsets range over
/// `{1, ..., BETA_MAX_OFFSET}` along every spatial axis.
pub const BETA_MAX_OFFSET: usize = 5;

/// Non-negative quadrature weights, one per grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureWeights {
    weights: Vec<f64>,
}

impl QuadratureWeights {
    /// Arbitrary non-negative, finite weights.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("quadrature weights must be finite, non-negative and non-empty".into()));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Measure of the domain, the sum of the weights.
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weights as an `[n, 1]` column.
    pub fn column(&self) -> Tensor {
        Tensor::new(vec![self.len(), 1], self.weights.clone()).expect("length matches")
    }

    /// Each weight repeated `d` times, as an `[n·d, 1]` column.
    pub fn repeated_column(&self, d: usize) -> Tensor {
        let data: Vec<f64> = self
            .weights
            .iter()
            .flat_map(|&w| std::iter::repeat(w).take(d))
            .collect();
        Tensor::new(vec![self.len() * d, 1], data).expect("length matches")
    }
}

/// `h·[½, 1, …, 1, ½]` on one axis.
pub fn trapezoidal_weights_1d(extent: usize, spacing: f64) -> Result<Vec<f64>> {
    if extent < 2 {
        return Err(Error::Config(format!(
            "trapezoidal rule needs at least 2 points per axis, got {extent}"
        )));
    }
    let mut w = vec![spacing; extent];
    w[0] *= 0.5;
    w[extent - 1] *= 0.5;
    Ok(w)
}

/// Tensor-product trapezoidal weights on `grid`, in grid point order.
pub fn trapezoidal_weights(grid: &Grid) -> Result<QuadratureWeights> {
    let per_axis = grid
        .axes()
        .iter()
        .map(|a| trapezoidal_weights_1d(a.extent, a.spacing()))
        .collect::<Result<Vec<_>>>()?;
    let weights = match per_axis.as_slice() {
        [wx] => wx.clone(),
        [wx, wy] => wx.iter().flat_map(|a| wy.iter().map(move |b| a * b)).collect(),
        _ => unreachable!("grids are 1D or 2D"),
    };
    Ok(QuadratureWeights { weights })
}

/// `G = Σ_j w_j B_jᵀ B_j` for a basis `B` of shape `[n, d, L]`.
pub fn gram_matrix(tape: &mut Tape, basis: Var, w: &QuadratureWeights) -> Result<Var> {
    let shape = tape.shape(basis).to_vec();
    if shape.len() != 3 || shape[0] != w.len() {
        return Err(Error::dim("gram_matrix", &shape, &[w.len()]));
    }
    let (n, d, l) = (shape[0], shape[1], shape[2]);
    let flat = tape.reshape(basis, &[n * d, l])?;
    let wcol = tape.constant(w.repeated_column(d));
    let weighted = tape.mul(flat, wcol)?;
    let flat_t = tape.transpose(flat)?;
    tape.matmul(flat_t, weighted)
}

pub fn gram_matrix_values(basis: &Tensor, w: &QuadratureWeights) -> Result<Tensor> {
    let mut tape = Tape::new();
    let b = tape.constant(basis.clone());
    let g = gram_matrix(&mut tape, b, w)?;
    Ok(tape.value(g).clone())
}

/// `‖G_Φ − I‖²_F + ‖G_Ψ − I‖²_F`
pub fn orthogonality_loss(tape: &mut Tape, g_phi: Var, g_psi: Var) -> Result<Var> {
    let a = frobenius_to_identity(tape, g_phi)?;
    let b = frobenius_to_identity(tape, g_psi)?;
    tape.add(a, b)
}

fn frobenius_to_identity(tape: &mut Tape, g: Var) -> Result<Var> {
    let shape = tape.shape(g).to_vec();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::Shape(format!("Gram matrix must be square, got {shape:?}")));
    }
    let eye = tape.constant(Tensor::eye(shape[0]));
    let diff = tape.sub(g, eye)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.sum_all(sq))
}

pub fn orthogonality_loss_values(g_phi: &Tensor, g_psi: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.constant(g_phi.clone());
    let b = tape.constant(g_psi.clone());
    let l = orthogonality_loss(&mut tape, a, b)?;
    tape.value(l).item()
}

/// `‖û − u‖₂ / ‖u‖₂` over all entries (unit scale, no percent factor).
pub fn relative_l2(tape: &mut Tape, prediction: Var, target: &Tensor) -> Result<Var> {
    if tape.shape(prediction) != target.shape() {
        return Err(Error::dim("relative_l2", tape.shape(prediction), target.shape()));
    }
    let norm = l2_norm(target.data());
    if norm == 0.0 {
        return Err(Error::DegenerateTarget("target field".into()));
    }
    let t = tape.constant(target.clone());
    let diff = tape.sub(prediction, t)?;
    let sq = tape.mul(diff, diff)?;
    let s = tape.sum_all(sq);
    let r = tape.sqrt(s);
    Ok(tape.scale(r, 1.0 / norm))
}

fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `100 · mean_i ‖u_i − û_i‖₂ / ‖u_i‖₂`, each sample flattened.
pub fn mean_l2_relative_error(u: &[Tensor], u_hat: &[Tensor]) -> Result<f64> {
    check_batch(u, u_hat)?;
    if u.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let mut acc = 0.0;
    for (i, (a, b)) in u.iter().zip(u_hat).enumerate() {
        acc += relative_error_value(a.data(), b.data())
            .ok_or_else(|| Error::DegenerateTarget(format!("sample {i}")))?;
    }
    Ok(100.0 * acc / u.len() as f64)
}

/// `‖u − û‖₂ / ‖u‖₂`, or `None` when `‖u‖₂ = 0`.
pub fn relative_error_value(u: &[f64], u_hat: &[f64]) -> Option<f64> {
    let norm = l2_norm(u);
    if norm == 0.0 {
        return None;
    }
    let diff = u
        .iter()
        .zip(u_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Some(diff / norm)
}

/// Largest absolute pointwise error over a batch.
pub fn l_inf_error(u: &[Tensor], u_hat: &[Tensor]) -> Result<f64> {
    check_batch(u, u_hat)?;
    Ok(u.iter().zip(u_hat).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max))
}

fn check_batch(u: &[Tensor], u_hat: &[Tensor]) -> Result<()> {
    if u.len() != u_hat.len() {
        return Err(Error::Shape(format!(
            "batch sizes differ: {} vs {}",
            u.len(),
            u_hat.len()
        )));
    }
    for (a, b) in u.iter().zip(u_hat) {
        if a.shape() != b.shape() {
            return Err(Error::dim("metric", a.shape(), b.shape()));
        }
    }
    Ok(())
}

/// `L2 + L_ortho` for one sample.
pub fn total_loss(tape: &mut Tape, prediction: Var, target: &Tensor, g_phi: Var, g_psi: Var) -> Result<Var> {
    weighted_total_loss(tape, prediction, target, Some((g_phi, g_psi)), 1.0)
}

/// `L2 + weight · L_ortho`; without Gram matrices the penalty is absent.
pub fn weighted_total_loss(
    tape: &mut Tape,
    prediction: Var,
    target: &Tensor,
    grams: Option<(Var, Var)>,
    ortho_weight: f64,
) -> Result<Var> {
    let l2 = relative_l2(tape, prediction, target)?;
    match grams {
        Some((gp, gs)) if ortho_weight != 0.0 => {
            let ortho = orthogonality_loss(tape, gp, gs)?;
            let scaled = tape.scale(ortho, ortho_weight);
            tape.add(l2, scaled)
        }
        _ => Ok(l2),
    }
}

/// Spatial variability statistic of a field on `grid`.
///
/// `values` holds `slices` consecutive snapshots of `grid.len()` points each.
/// For every slice and every offset `h ∈ {1..5}^d`, the mean squared
/// difference `(u(x+h) − u(x))²` over in-grid pairs (no wrap-around) is
/// divided by the population variance of the slice; the result is averaged
/// over offsets and then over slices.
pub fn beta_variability(values: &[f64], grid: &Grid, slices: usize) -> Result<f64> {
    let n = grid.len();
    if slices == 0 || values.len() != n * slices {
        return Err(Error::Shape(format!(
            "{} values for {slices} slice(s) of {n} points",
            values.len()
        )));
    }
    let extents = grid.extents();
    let mut acc = 0.0;
    for s in 0..slices {
        acc += beta_slice(&values[s * n..(s + 1) * n], &extents)?;
    }
    Ok(acc / slices as f64)
}

fn beta_slice(u: &[f64], extents: &[usize]) -> Result<f64> {
    let n = u.len() as f64;
    let mean = u.iter().sum::<f64>() / n;
    let var = u.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let energy = u.iter().map(|v| v * v).sum::<f64>() / n;
    if !(var > f64::EPSILON * f64::EPSILON * energy) {
        return Err(Error::DegenerateField);
    }
    let mut total = 0.0;
    let mut offsets = 0usize;
    match extents {
        [nx] => {
            for h in 1..=BETA_MAX_OFFSET.min(nx - 1) {
                let sq: f64 = (0..nx - h).map(|i| (u[i + h] - u[i]).powi(2)).sum();
                total += sq / (nx - h) as f64 / var;
                offsets += 1;
            }
        }
        [nx, ny] => {
            for hx in 1..=BETA_MAX_OFFSET.min(nx - 1) {
                for hy in 1..=BETA_MAX_OFFSET.min(ny - 1) {
                    let mut sq = 0.0;
                    for i in 0..nx - hx {
                        for j in 0..ny - hy {
                            sq += (u[(i + hx) * ny + j + hy] - u[i * ny + j]).powi(2);
                        }
                    }
                    total += sq / ((nx - hx) * (ny - hy)) as f64 / var;
                    offsets += 1;
                }
            }
        }
        _ => unreachable!("grids are 1D or 2D"),
    }
    Ok(total / offsets as f64)
}

/// One evaluation of a model on a data split.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub split: String,
    pub mean_l2_rel_pct: f64,
    pub l_inf: f64,
    pub l_ortho: f64,
    /// Mean variability statistic of the split's targets (NaN if undefined).
    pub beta: f64,
    pub wall_ms: f64,
}

pub const METRICS_HEADER: &str = "epoch,split,mean_l2_rel_pct,l_inf,l_ortho,wall_ms";

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch, self.split, self.mean_l2_rel_pct, self.l_inf, self.l_ortho, self.wall_ms
        )
    }
}

/// Writes records with the standard header, LF line endings.
pub fn write_metrics_csv<W: Write>(mut out: W, records: &[MetricsRecord]) -> Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}
