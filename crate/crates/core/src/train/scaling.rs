//! Empirical cost of one factorized integral layer as the rank grows.

use crate::alloc_meter::measure_peak;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::apply_factorized_kernel;
use crate::objectives::{trapezoidal_weights, QuadratureWeights};
use crate::tensor::{Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::time::Instant;

pub const SCALING_HEADER: &str = "rank,n,layer_ms,peak_bytes,zero_pad_identical";

#[derive(Clone, Debug)]
pub struct ScalingConfig {
    pub ranks: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Latent width `d`.
    pub width: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            ranks: vec![2, 4, 8, 16],
            sizes: vec![1024, 4096],
            width: 8,
            repeats: 7,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub rank: usize,
    pub n: usize,
    /// Median forward + backward time.
    pub layer_ms: f64,
    /// Peak bytes held during one forward + backward pass; `None` when the
    /// counting allocator is not installed.
    pub peak_bytes: Option<usize>,
    /// Whether the previous rank's factors, padded with zero singular values
    /// up to this rank, reproduce the previous output bit for bit.
    pub zero_pad_identical: bool,
}

impl ScalingRow {
    pub fn csv_row(&self) -> String {
        let peak = self.peak_bytes.map_or_else(|| "NA".to_string(), |b| b.to_string());
        format!("{},{},{},{},{}", self.rank, self.n, self.layer_ms, peak, self.zero_pad_identical)
    }
}

#[derive(Clone, Debug)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// `(n, R²)` of layer time against rank.
    pub time_r2: Vec<(usize, f64)>,
    /// `(n, R²)` of peak bytes against rank, when measured.
    pub memory_r2: Vec<(usize, f64)>,
}

impl ScalingReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{SCALING_HEADER}")?;
        for r in &self.rows {
            writeln!(out, "{}", r.csv_row())?;
        }
        Ok(())
    }
}

/// Coefficient of determination of the least-squares line through the
/// points.
pub fn linear_fit_r2(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    if sxx == 0.0 {
        return 0.0;
    }
    let slope = sxy / sxx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (my + slope * (x - mx))).powi(2))
        .sum();
    1.0 - ss_res / syy
}

struct Factors {
    v: Tensor,
    phi: Tensor,
    psi: Tensor,
    sigma: Vec<f64>,
}

fn forward_backward(f: &Factors, w: &QuadratureWeights) -> Result<Tensor> {
    let mut tape = Tape::new();
    let v = tape.param(f.v.clone());
    let phi = tape.param(f.phi.clone());
    let psi = tape.param(f.psi.clone());
    let sigma = tape.param(Tensor::from_vec(f.sigma.clone()));
    let out = apply_factorized_kernel(&mut tape, v, phi, psi, sigma, w)?;
    let loss = tape.sum_all(out);
    tape.backward(loss)?;
    Ok(tape.value(out).clone())
}

fn output_only(f: &Factors, w: &QuadratureWeights) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (v, phi, psi) = (tape.constant(f.v.clone()), tape.constant(f.phi.clone()), tape.constant(f.psi.clone()));
    let sigma = tape.constant(Tensor::from_vec(f.sigma.clone()));
    let out = apply_factorized_kernel(&mut tape, v, phi, psi, sigma, w)?;
    Ok(tape.value(out).clone())
}

/// Times forward + backward of a single factorized layer on random factors
/// for every `(rank, n)` pair and fits time and memory linearly in the rank.
/// Runs on the calling thread so allocation metering sees all the work.
pub fn scaling_probe(cfg: &ScalingConfig) -> Result<ScalingReport> {
    if cfg.ranks.len() < 3 {
        return Err(Error::Config("the scaling probe needs at least 3 ranks".into()));
    }
    if cfg.sizes.is_empty() || cfg.sizes.iter().any(|&n| n < 2) || cfg.ranks.contains(&0) {
        return Err(Error::Config("sizes must be at least 2 and ranks positive".into()));
    }
    let repeats = cfg.repeats.max(1);
    let d = cfg.width;
    let mut rows = Vec::new();
    let (mut time_r2, mut memory_r2) = (Vec::new(), Vec::new());
    for &n in &cfg.sizes {
        let w = trapezoidal_weights(&Grid::line(n, 0.0, 1.0)?)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ n as u64);
        let mut previous: Option<(Factors, Tensor)> = None;
        let mut size_rows = Vec::new();
        for &rank in &cfg.ranks {
            let factors = Factors {
                v: Tensor::uniform(&[n, d], 1.0, &mut rng),
                phi: Tensor::uniform(&[n, d, rank], 1.0, &mut rng),
                psi: Tensor::uniform(&[n, d, rank], 1.0, &mut rng),
                sigma: (1..=rank).map(|l| 1.0 / l as f64).collect(),
            };
            forward_backward(&factors, &w)?;
            let mut times = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                let t = Instant::now();
                forward_backward(&factors, &w)?;
                times.push(t.elapsed().as_secs_f64() * 1e3);
            }
            times.sort_by(f64::total_cmp);
            let (res, peak_bytes) = measure_peak(|| forward_backward(&factors, &w));
            res?;

            // Compare against the previous rank's factors embedded in this
            // rank with zero singular values; the first rank pads by one.
            let (base, base_out) = match previous.take() {
                Some(p) => p,
                None => {
                    let out = output_only(&factors, &w)?;
                    (
                        Factors {
                            v: factors.v.clone(),
                            phi: factors.phi.clone(),
                            psi: factors.psi.clone(),
                            sigma: factors.sigma.clone(),
                        },
                        out,
                    )
                }
            };
            let prev_rank = base.sigma.len();
            let target_rank = if prev_rank == rank { rank + 1 } else { rank };
            let pad = |t: &Tensor, extra: &Tensor| -> Tensor {
                let mut out = Vec::with_capacity(n * d * target_rank);
                let extra_cols = target_rank - prev_rank;
                for (row, ex) in t.data().chunks(prev_rank).zip(extra.data().chunks(extra_cols)) {
                    out.extend_from_slice(row);
                    out.extend_from_slice(ex);
                }
                Tensor::new(vec![n, d, target_rank], out).expect("consistent shape")
            };
            let extra_phi = Tensor::uniform(&[n, d, target_rank - prev_rank], 1.0, &mut rng);
            let extra_psi = Tensor::uniform(&[n, d, target_rank - prev_rank], 1.0, &mut rng);
            let mut sigma = base.sigma.clone();
            sigma.resize(target_rank, 0.0);
            let padded = Factors {
                v: base.v.clone(),
                phi: pad(&base.phi, &extra_phi),
                psi: pad(&base.psi, &extra_psi),
                sigma,
            };
            let zero_pad_identical = output_only(&padded, &w)?.data() == base_out.data();

            let out = output_only(&factors, &w)?;
            size_rows.push(ScalingRow {
                rank,
                n,
                layer_ms: times[times.len() / 2],
                peak_bytes,
                zero_pad_identical,
            });
            previous = Some((factors, out));
        }
        let xs: Vec<f64> = size_rows.iter().map(|r| r.rank as f64).collect();
        let ts: Vec<f64> = size_rows.iter().map(|r| r.layer_ms).collect();
        time_r2.push((n, linear_fit_r2(&xs, &ts)));
        if size_rows.iter().all(|r| r.peak_bytes.is_some()) {
            let ms: Vec<f64> = size_rows.iter().map(|r| r.peak_bytes.unwrap_or(0) as f64).collect();
            memory_r2.push((n, linear_fit_r2(&xs, &ms)));
        }
        rows.extend(size_rows);
    }
    Ok(ScalingReport {
        rows,
        time_r2,
        memory_r2,
    })
}
