use super::{Adam, RunConfig};
use crate::error::{Error, Result};
use crate::model::{save_checkpoint, SvdNo};
use crate::objectives::{
    beta_variability, l_inf_error, mean_l2_relative_error, relative_error_value, relative_l2, write_metrics_csv,
    MetricsRecord,
};
use crate::par::{map_indexed, Execution};
use crate::pde::Dataset;
use crate::tensor::{Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

/// Loss terms and parameter gradients of a single sample.
#[derive(Clone, Debug)]
pub struct SampleGradient {
    pub loss: f64,
    pub rel_l2: f64,
    pub ortho: f64,
    pub l_inf: f64,
    pub grads: Vec<Tensor>,
}

/// Relative L2 error plus `ortho_weight` times the orthogonality penalty,
/// differentiated with respect to every model parameter.
pub fn sample_gradient(model: &SvdNo, z: &Tensor, target: &Tensor, ortho_weight: f64) -> Result<SampleGradient> {
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape, true);
    let fwd = model.forward(&mut tape, &bound, z)?;
    let rel = relative_l2(&mut tape, fwd.output, target)?;
    let loss = match fwd.ortho {
        Some(o) if ortho_weight != 0.0 => {
            let scaled = tape.scale(o, ortho_weight);
            tape.add(rel, scaled)?
        }
        _ => rel,
    };
    let loss_value = tape.value(loss).item()?;
    let rel_l2 = tape.value(rel).item()?;
    let ortho = match fwd.ortho {
        Some(o) => tape.value(o).item()?,
        None => 0.0,
    };
    let l_inf = tape.value(fwd.output).max_abs_diff(target);
    if !loss_value.is_finite() {
        return Ok(SampleGradient {
            loss: loss_value,
            rel_l2,
            ortho,
            l_inf,
            grads: Vec::new(),
        });
    }
    tape.backward(loss)?;
    Ok(SampleGradient {
        loss: loss_value,
        rel_l2,
        ortho,
        l_inf,
        grads: bound.grads(&tape),
    })
}

/// The objective of [`sample_gradient`] without the backward pass.
pub fn sample_loss(model: &SvdNo, z: &Tensor, target: &Tensor, ortho_weight: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape, false);
    let fwd = model.forward(&mut tape, &bound, z)?;
    let rel = relative_l2(&mut tape, fwd.output, target)?;
    let loss = match fwd.ortho {
        Some(o) if ortho_weight != 0.0 => {
            let scaled = tape.scale(o, ortho_weight);
            tape.add(rel, scaled)?
        }
        _ => rel,
    };
    tape.value(loss).item()
}

pub(crate) fn check_compatible(model: &SvdNo, ds: &Dataset) -> Result<()> {
    if model.grid() != &ds.grid {
        return Err(Error::Shape(format!(
            "model grid {:?} does not match dataset grid {:?}",
            model.grid().extents(),
            ds.grid.extents()
        )));
    }
    if model.in_channels() != ds.in_channels() || model.out_channels() != ds.out_channels() {
        return Err(Error::Shape(format!(
            "model maps {} → {} channels, dataset has {} → {}",
            model.in_channels(),
            model.out_channels(),
            ds.in_channels(),
            ds.out_channels()
        )));
    }
    Ok(())
}

fn target_tensor(ds: &Dataset, i: usize) -> Tensor {
    Tensor::new(vec![ds.grid.len(), ds.out_channels()], ds.samples[i].u.clone()).expect("dataset shapes were validated")
}

/// Variability of sample `i`'s point-major target, averaged over its
/// channels. Constant targets give [`Error::DegenerateField`].
pub fn sample_beta(ds: &Dataset, i: usize) -> Result<f64> {
    let (n, c) = (ds.grid.len(), ds.out_channels());
    let u = &ds.samples[i].u;
    let mut time_major = vec![0.0; n * c];
    for j in 0..n {
        for t in 0..c {
            time_major[t * n + j] = u[j * c + t];
        }
    }
    beta_variability(&time_major, &ds.grid, c)
}

fn target_beta(ds: &Dataset, i: usize) -> f64 {
    sample_beta(ds, i).unwrap_or(f64::NAN)
}

/// `(index, relative L2 error)` for every sample of a split, unit scale.
pub fn per_sample_errors(model: &SvdNo, ds: &Dataset, split: &str, exec: Execution) -> Result<Vec<(usize, f64)>> {
    check_compatible(model, ds)?;
    let idx = ds
        .splits
        .get(split)
        .ok_or_else(|| Error::Config(format!("unknown split `{split}` (train, val or test)")))?;
    map_indexed(idx.len(), exec, |k| {
        let i = idx[k];
        let pred = model.predict(&ds.samples[i].a)?;
        let err = relative_error_value(&ds.samples[i].u, pred.data())
            .ok_or_else(|| Error::DegenerateTarget(format!("sample {i}")))?;
        Ok((i, err))
    })
    .into_iter()
    .collect()
}

/// Metrics of `model` on one split. Never mutates the model; the result
/// does not depend on `exec`.
pub fn evaluate(model: &SvdNo, ds: &Dataset, split: &str, exec: Execution) -> Result<MetricsRecord> {
    check_compatible(model, ds)?;
    let idx = ds
        .splits
        .get(split)
        .ok_or_else(|| Error::Config(format!("unknown split `{split}` (train, val or test)")))?;
    if idx.is_empty() {
        return Err(Error::Config(format!("split `{split}` is empty")));
    }
    let evals = map_indexed(idx.len(), exec, |k| -> Result<(Tensor, f64, f64)> {
        let i = idx[k];
        let z = model.coordinates(&ds.samples[i].a)?;
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape, false);
        let fwd = model.forward(&mut tape, &bound, &z)?;
        let ortho = match fwd.ortho {
            Some(o) => tape.value(o).item()?,
            None => 0.0,
        };
        Ok((tape.value(fwd.output).clone(), ortho, target_beta(ds, i)))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let targets: Vec<Tensor> = idx.iter().map(|&i| target_tensor(ds, i)).collect();
    let preds: Vec<Tensor> = evals.iter().map(|e| e.0.clone()).collect();
    let mean_l2_rel_pct = mean_l2_relative_error(&targets, &preds)?;
    let l_inf = l_inf_error(&targets, &preds)?;
    let l_ortho = evals.iter().map(|e| e.1).sum::<f64>() / evals.len() as f64;
    let betas: Vec<f64> = evals.iter().map(|e| e.2).filter(|b| b.is_finite()).collect();
    let beta = if betas.is_empty() {
        f64::NAN
    } else {
        betas.iter().sum::<f64>() / betas.len() as f64
    };
    if !mean_l2_rel_pct.is_finite() {
        return Err(Error::Numeric(format!("non-finite error on split `{split}`")));
    }
    Ok(MetricsRecord {
        epoch: 0,
        split: split.to_string(),
        mean_l2_rel_pct,
        l_inf,
        l_ortho,
        beta,
        wall_ms: 0.0,
    })
}

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub final_model: SvdNo,
    pub best_model: SvdNo,
    pub best_epoch: usize,
    /// Initial validation row, then per epoch a train row and (at the
    /// configured cadence) a validation row.
    pub metrics: Vec<MetricsRecord>,
    /// Test rows for the final (`test`) and best-validation (`test_best`)
    /// models.
    pub test: Vec<MetricsRecord>,
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
    /// Mean orthogonality penalty per epoch.
    pub epoch_ortho: Vec<f64>,
    /// Wall time per epoch in milliseconds (always measured).
    pub epoch_ms: Vec<f64>,
}

fn write_csv(path: &Path, rows: &[MetricsRecord]) -> Result<()> {
    write_metrics_csv(BufWriter::new(File::create(path)?), rows)
}

/// Trains a fresh model on the dataset's train split.
///
/// With `out_dir`, writes `metrics.csv`, `test.csv`, `final.ckpt` and
/// `best.ckpt`. A non-finite loss or gradient aborts the run; the
/// parameters from before the failing step are then saved as
/// `last_good.ckpt`.
pub fn train(cfg: &RunConfig, ds: &Dataset, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let echo = serde_json::to_value(cfg)?;
    // The run config plus the epoch the parameters belong to.
    let stamp = |epoch: usize| {
        let mut e = echo.clone();
        e["checkpoint_epoch"] = epoch.into();
        e
    };
    let mut model = SvdNo::new(cfg.model.clone(), ds.grid.clone(), ds.in_channels(), ds.out_channels(), cfg.seed)?;
    check_compatible(&model, ds)?;
    if ds.splits.train.is_empty() {
        return Err(Error::Config("dataset has no training samples".into()));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let exec = cfg.execution;
    let ms = |t: Instant| if cfg.timing { t.elapsed().as_secs_f64() * 1e3 } else { 0.0 };

    let coords: Vec<Tensor> = ds.samples.iter().map(|s| model.coordinates(&s.a)).collect::<Result<_>>()?;
    let targets: Vec<Tensor> = (0..ds.len()).map(|i| target_tensor(ds, i)).collect();

    let mut metrics = Vec::new();
    let start = Instant::now();
    let mut initial = evaluate(&model, ds, "val", exec)?;
    initial.wall_ms = ms(start);
    let mut best_score = initial.mean_l2_rel_pct;
    let mut best_model = model.clone();
    let mut best_epoch = 0;
    metrics.push(initial);

    let mut adam = Adam::new(model.params(), cfg.adam);
    let mut order = ds.splits.train.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed_5eed_5eed);
    let (mut epoch_loss, mut epoch_ortho, mut epoch_ms) = (Vec::new(), Vec::new(), Vec::new());

    let abort = |model: &SvdNo, metrics: &[MetricsRecord], err: Error| -> Error {
        if let Some(dir) = out_dir {
            let last = metrics.last().map_or(0, |r| r.epoch);
            let _ = save_checkpoint(dir.join("last_good.ckpt"), model, &stamp(last));
            let _ = write_csv(&dir.join("metrics.csv"), metrics);
        }
        err
    };

    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut rel_sum, mut ortho_sum, mut linf) = (0.0, 0.0, 0.0, 0.0f64);
        for batch in order.chunks(cfg.batch_size) {
            let results = map_indexed(batch.len(), exec, |k| {
                let i = batch[k];
                sample_gradient(&model, &coords[i], &targets[i], cfg.ortho_weight)
            });
            let results = match results.into_iter().collect::<Result<Vec<_>>>() {
                Ok(r) => r,
                Err(e) => return Err(abort(&model, &metrics, e)),
            };
            if let Some(bad) = results.iter().position(|r| !r.loss.is_finite()) {
                let err = Error::Training(format!(
                    "non-finite loss on sample {} in epoch {epoch}; parameters before this step kept",
                    batch[bad]
                ));
                return Err(abort(&model, &metrics, err));
            }
            let scale = 1.0 / batch.len() as f64;
            for (pi, p) in model.params_mut().iter_mut().enumerate() {
                let g = p.grad.data_mut();
                for r in &results {
                    for (dst, src) in g.iter_mut().zip(r.grads[pi].data()) {
                        *dst += src;
                    }
                }
                g.iter_mut().for_each(|x| *x *= scale);
            }
            // A rejected step leaves the parameters untouched.
            if let Err(e) = adam.step(model.params_mut()) {
                return Err(abort(&model, &metrics, e));
            }
            for r in &results {
                loss_sum += r.loss;
                rel_sum += r.rel_l2;
                ortho_sum += r.ortho;
                linf = linf.max(r.l_inf);
            }
        }
        let count = order.len() as f64;
        epoch_loss.push(loss_sum / count);
        epoch_ortho.push(ortho_sum / count);
        epoch_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        metrics.push(MetricsRecord {
            epoch,
            split: "train".into(),
            mean_l2_rel_pct: 100.0 * rel_sum / count,
            l_inf: linf,
            l_ortho: ortho_sum / count,
            beta: f64::NAN,
            wall_ms: ms(t0),
        });
        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let t1 = Instant::now();
            let mut rec = evaluate(&model, ds, "val", exec)?;
            rec.epoch = epoch;
            rec.wall_ms = ms(t1);
            if rec.mean_l2_rel_pct < best_score {
                best_score = rec.mean_l2_rel_pct;
                best_model = model.clone();
                best_epoch = epoch;
            }
            metrics.push(rec);
        }
    }

    let mut test = Vec::with_capacity(2);
    for (m, label, epoch) in [(&model, "test", cfg.epochs), (&best_model, "test_best", best_epoch)] {
        let t = Instant::now();
        let mut rec = evaluate(m, ds, "test", exec)?;
        rec.split = label.into();
        rec.epoch = epoch;
        rec.wall_ms = ms(t);
        test.push(rec);
    }

    if let Some(dir) = out_dir {
        write_csv(&dir.join("metrics.csv"), &metrics)?;
        write_csv(&dir.join("test.csv"), &test)?;
        save_checkpoint(dir.join("final.ckpt"), &model, &stamp(cfg.epochs))?;
        save_checkpoint(dir.join("best.ckpt"), &best_model, &stamp(best_epoch))?;
    }
    Ok(TrainOutcome {
        final_model: model,
        best_model,
        best_epoch,
        metrics,
        test,
        epoch_loss,
        epoch_ortho,
        epoch_ms,
    })
}
