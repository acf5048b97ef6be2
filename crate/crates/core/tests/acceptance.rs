//! One PASS/FAIL line per acceptance criterion.
//!
//! `cargo test --test acceptance` runs everything except the long ablation
//! study, which needs `SVDNO_LONG=1`. Criterion numbers given as arguments
//! restrict the run (`cargo test --test acceptance -- 3 6`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::{Duration, Instant};
use svdno::alloc_meter::{activate, CountingAllocator};
use svdno::grid::Axis;
use svdno::model::{
    assemble_kernel, decode_checkpoint, dense_kernel_values, encode_checkpoint, factorized_kernel_values,
    SingularNetConfig, SingularNetKind, SvdNo, SvdNoConfig,
};
use svdno::objectives::{
    beta_variability, gram_matrix_values, orthogonality_loss_values, relative_error_value, trapezoidal_weights,
};
use svdno::par::Execution;
use svdno::pde::{
    build_dataset, read_dataset, solve_allen_cahn_1d, solve_darcy_with_forcing, solve_diffusion_reaction_1d,
    write_dataset, Dataset, PdeKind, PdeSpec,
};
use svdno::tensor::{check_gradients, finite_difference_check, GradCheckConfig};
use svdno::train::{
    sample_gradient, sample_loss, scaling_probe, train, AblationKind, AdamConfig, RunConfig, ScalingConfig,
};
use svdno::{Grid, Result, Tape, Tensor, Var};

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

type Check = fn() -> Result<Verdict>;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Result<Verdict> {
    Ok(if ok { Verdict::Pass(detail) } else { Verdict::Fail(detail) })
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, 1.0, r)
}

fn factorization_oracle() -> Result<Verdict> {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = r.gen_range(2..=64);
        let d = r.gen_range(1..=8);
        let l = r.gen_range(1..=5);
        let w = trapezoidal_weights(&Grid::line(n, 0.0, 1.0)?)?;
        let v = uniform(&[n, d], &mut r);
        let phi = uniform(&[n, d, l], &mut r);
        let psi = uniform(&[n, d, l], &mut r);
        let sigma = uniform(&[l], &mut r).into_data();
        let fast = factorized_kernel_values(&v, &phi, &psi, &sigma, &w)?;
        let slow = dense_kernel_values(&v, &assemble_kernel(&phi, &sigma, &psi)?, &w)?;
        worst = worst.max(fast.max_abs_diff(&slow));
    }
    verdict(worst <= 1e-10, format!("200 instances, max abs diff {worst:.2e} (tol 1e-10)"))
}

/// `Σ c ⊙ x` with fixed random `c`.
fn probe(tape: &mut Tape, x: Var, seed: u64) -> Result<Var> {
    let c = Tensor::uniform(tape.shape(x), 1.0, &mut rng(seed));
    let c = tape.constant(c);
    let p = tape.mul(x, c)?;
    Ok(tape.sum_all(p))
}

type OpCase = (&'static str, Vec<Vec<usize>>, fn(&mut Tape, &[Var]) -> Result<Var>);

fn op_cases() -> Vec<OpCase> {
    vec![
        ("add", vec![vec![3, 4], vec![4]], |t, v| {
            let y = t.add(v[0], v[1])?;
            probe(t, y, 1)
        }),
        ("sub", vec![vec![2, 1, 3], vec![4, 1]], |t, v| {
            let y = t.sub(v[0], v[1])?;
            probe(t, y, 1)
        }),
        ("mul", vec![vec![3, 4], vec![3, 4]], |t, v| {
            let y = t.mul(v[0], v[1])?;
            probe(t, y, 1)
        }),
        ("div", vec![vec![3, 4], vec![3, 1]], |t, v| {
            let e = t.exp(v[1]);
            let y = t.div(v[0], e)?;
            probe(t, y, 1)
        }),
        ("sin", vec![vec![5, 2]], |t, v| {
            let y = t.sin(v[0]);
            probe(t, y, 2)
        }),
        ("tanh", vec![vec![5, 2]], |t, v| {
            let y = t.tanh(v[0]);
            probe(t, y, 2)
        }),
        ("sigmoid", vec![vec![5, 2]], |t, v| {
            let y = t.sigmoid(v[0]);
            probe(t, y, 2)
        }),
        ("gelu", vec![vec![5, 2]], |t, v| {
            let y = t.gelu(v[0]);
            probe(t, y, 2)
        }),
        ("exp", vec![vec![5, 2]], |t, v| {
            let y = t.exp(v[0]);
            probe(t, y, 2)
        }),
        ("sqrt", vec![vec![5, 2]], |t, v| {
            let s = t.mul(v[0], v[0])?;
            let s = t.shift(s, 0.5);
            let y = t.sqrt(s);
            probe(t, y, 2)
        }),
        ("scale/shift/neg", vec![vec![5, 2]], |t, v| {
            let y = t.scale(v[0], -1.5);
            let y = t.shift(y, 0.25);
            let y = t.neg(y);
            let y = t.sin(y);
            probe(t, y, 2)
        }),
        ("matmul", vec![vec![4, 5], vec![5, 3]], |t, v| {
            let y = t.matmul(v[0], v[1])?;
            probe(t, y, 3)
        }),
        ("transpose", vec![vec![4, 2]], |t, v| {
            let y = t.transpose(v[0])?;
            let y = t.sin(y);
            probe(t, y, 4)
        }),
        ("reshape", vec![vec![2, 6]], |t, v| {
            let y = t.reshape(v[0], &[3, 4])?;
            let y = t.sin(y);
            probe(t, y, 5)
        }),
        ("permute", vec![vec![2, 3, 4]], |t, v| {
            let y = t.permute(v[0], &[2, 0, 1])?;
            let y = t.sin(y);
            probe(t, y, 6)
        }),
        ("sum/mean", vec![vec![3, 4, 2]], |t, v| {
            let a = t.sum(v[0], &[0, 2])?;
            let b = t.mean(v[0], &[1])?;
            let a = t.sin(a);
            let b = t.sin(b);
            let a = probe(t, a, 7)?;
            let b = probe(t, b, 8)?;
            t.add(a, b)
        }),
        ("sum_all/mean_all", vec![vec![3, 4]], |t, v| {
            let s = t.mul(v[0], v[0])?;
            let a = t.sum_all(s);
            let e = t.exp(v[0]);
            let b = t.mean_all(e);
            t.add(a, b)
        }),
        ("slice", vec![vec![3, 5]], |t, v| {
            let a = t.slice(v[0], 1, 1, 3)?;
            let b = t.slice(v[0], 1, 0, 2)?;
            let a = t.sin(a);
            let a = probe(t, a, 9)?;
            let b = probe(t, b, 10)?;
            t.add(a, b)
        }),
        ("concat", vec![vec![2, 3], vec![2, 1]], |t, v| {
            let y = t.concat(&[v[0], v[1], v[0]], 1)?;
            let y = t.tanh(y);
            probe(t, y, 11)
        }),
    ]
}

fn gradient_suite() -> Result<Verdict> {
    let cfg = GradCheckConfig::default();
    let mut op_max = 0.0f64;
    let mut worst_op = "";
    for (k, (name, shapes, build)) in op_cases().into_iter().enumerate() {
        let mut r = rng(100 + k as u64);
        let params: Vec<Tensor> = shapes.iter().map(|s| uniform(s, &mut r)).collect();
        let rep = check_gradients(&params, build, &cfg)?;
        if rep.max_rel_error() > op_max {
            op_max = rep.max_rel_error();
            worst_op = name;
        }
    }

    let model_cfg = SvdNoConfig {
        rank: 2,
        lifting_dim: 8,
        blocks: 2,
        ..SvdNoConfig::default()
    };
    let spec = PdeSpec::new(PdeKind::DiffusionReaction1d, 32);
    let sample = spec.generate(3)?;
    let model = SvdNo::new(model_cfg, spec.grid()?, 1, spec.out_channels(), 1)?;
    let z = model.coordinates(&sample.a)?;
    let target = Tensor::new(vec![32, spec.out_channels()], sample.u.clone())?;
    let g = sample_gradient(&model, &z, &target, 1.0)?;
    let mut work = model.clone();
    let rep = finite_difference_check(
        |vals| {
            work.params_mut().set_values(vals.to_vec());
            sample_loss(&work, &z, &target, 1.0)
        },
        &model.params().values(),
        &g.grads,
        &cfg,
    )?;
    let (p95, max) = (rep.percentile(95.0), rep.max_rel_error());
    verdict(
        op_max < 1e-3 && p95 < 1e-4 && max < 1e-3,
        format!(
            "ops max rel {op_max:.1e} ({worst_op}); model {} coords p95 {p95:.1e} max {max:.1e}",
            model.params().scalar_count()
        ),
    )
}

fn orthogonality_convergence() -> Result<Verdict> {
    let spec = PdeSpec::new(PdeKind::DiffusionReaction1d, 16);
    let ds = build_dataset(&spec, 8, 2, [0.5, 0.25, 0.25], Execution::Parallel)?;
    let steps = 2000;
    let cfg = RunConfig {
        model: SvdNoConfig {
            rank: 3,
            lifting_dim: 4,
            blocks: 1,
            singular_net: SingularNetConfig {
                kind: SingularNetKind::SineMlp,
                num_layers: 1,
                hidden_dim: 8,
            },
            projection_hidden: 8,
            ..SvdNoConfig::default()
        },
        epochs: steps,
        // One optimizer step per epoch.
        batch_size: ds.splits.train.len(),
        eval_every: steps,
        adam: AdamConfig {
            lr: 3e-3,
            ..AdamConfig::default()
        },
        ..RunConfig::default()
    };
    let out = train(&cfg, &ds, None)?;
    let trace = &out.epoch_ortho;
    let windows: Vec<f64> = trace.chunks(steps / 10).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let monotone = windows.windows(2).all(|w| w[1] < w[0]);
    let (first, last) = (trace[0], *trace.last().unwrap());
    verdict(
        first > 0.1 && last < 1e-3 && monotone,
        format!("L_ortho {first:.3e} -> {last:.3e} over {steps} steps; decile means decreasing: {monotone}"),
    )
}

fn desk_dataset(seed: u64) -> Result<Dataset> {
    let spec = PdeSpec::new(PdeKind::DiffusionReaction1d, 64);
    build_dataset(&spec, 512, seed, [0.8, 0.1, 0.1], Execution::Parallel)
}

/// Rank-3 LSTM diffusion–reaction setup, narrowed to fit one CPU core.
fn desk_config() -> RunConfig {
    RunConfig {
        model: SvdNoConfig {
            rank: 3,
            lifting_dim: 8,
            blocks: 4,
            singular_net: SingularNetConfig {
                kind: SingularNetKind::Recurrent1d,
                ..SingularNetConfig::default()
            },
            dense_width: 16,
            ..SvdNoConfig::default()
        },
        epochs: 200,
        eval_every: 20,
        ..RunConfig::default()
    }
}

fn desk_learning() -> Result<Verdict> {
    let ds = desk_dataset(0)?;
    let cfg = desk_config();
    let svd = train(&cfg, &ds, None)?.test[0].mean_l2_rel_pct;
    let dense_cfg = AblationKind::DenseMlp.apply(&cfg);
    let dense = train(&dense_cfg, &ds, None)?.test[0].mean_l2_rel_pct;
    verdict(
        svd < 5.0 && svd < dense,
        format!("test error svd {svd:.2}% vs dense-mlp {dense:.2}% (need svd < 5% and < dense)"),
    )
}

fn ablation_direction() -> Result<Verdict> {
    if std::env::var("SVDNO_LONG").map_or(true, |v| v != "1") {
        return Ok(Verdict::Skip("set SVDNO_LONG=1 to run the 10-seed study".into()));
    }
    let ds = desk_dataset(0)?;
    let mut cfg = desk_config();
    cfg.model.singular_net = SingularNetConfig::default();
    let test_error = |cfg: &RunConfig| -> Result<f64> { Ok(train(cfg, &ds, None)?.test[0].mean_l2_rel_pct) };
    let kinds = [AblationKind::NoOrtho, AblationKind::Mercer];
    let (mut svd, mut other) = (Vec::new(), vec![Vec::new(); kinds.len()]);
    for seed in 0..10 {
        let base = RunConfig { seed, ..cfg.clone() };
        svd.push(test_error(&base)?);
        for (k, kind) in kinds.iter().enumerate() {
            other[k].push(test_error(&kind.apply(&base))?);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut detail = Vec::new();
    let mut ok = true;
    for (kind, errs) in kinds.iter().zip(&other) {
        let wins = svd.iter().zip(errs).filter(|(s, o)| s <= o).count();
        ok &= wins >= 7;
        detail.push(format!(
            "svd <= {} in {wins}/10 seeds (means {:.2}% vs {:.2}%)",
            kind.name(),
            mean(&svd),
            mean(errs)
        ));
    }
    verdict(ok, detail.join("; "))
}

fn complexity_scaling() -> Result<Verdict> {
    let report = scaling_probe(&ScalingConfig {
        repeats: 21,
        ..ScalingConfig::default()
    })?;
    let min = |v: &[(usize, f64)]| v.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let (t, m) = (min(&report.time_r2), min(&report.memory_r2));
    let padded = report.rows.iter().all(|r| r.zero_pad_identical);
    let largest = report.rows.iter().map(|r| r.n).max().unwrap_or(0);
    let ms: Vec<String> = report.rows.iter().map(|r| format!("{}:{}:{:.2}", r.n, r.rank, r.layer_ms)).collect();
    verdict(
        t >= 0.9 && m >= 0.9 && report.memory_r2.len() == report.time_r2.len() && padded,
        format!(
            "min R^2 time {t:.3}, memory {m:.3} over L in {{2,4,8,16}}; n={largest} layer ms [{}]; zero-padding exact: {padded}",
            ms.join(", ")
        ),
    )
}

fn darcy_manufactured_error(extent: usize) -> Result<f64> {
    let g = Grid::square(extent, 0.0, 1.0)?;
    let exact: Vec<f64> = g.coordinates().chunks(2).map(|p| (PI * p[0]).sin() * (PI * p[1]).sin()).collect();
    let f: Vec<f64> = exact.iter().map(|u| 2.0 * PI * PI * u).collect();
    let u = solve_darcy_with_forcing(&vec![1.0; g.len()], &f, &g)?.u;
    Ok(u.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

fn solver_correctness() -> Result<Verdict> {
    let errs = [17, 33, 65].map(darcy_manufactured_error);
    let errs = errs.into_iter().collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let darcy_ok = ratios.iter().all(|r| (3.0..=5.0).contains(r));

    let spec = PdeSpec::new(PdeKind::DiffusionReaction1d, 64);
    let g = spec.grid()?;
    let c = 0.3;
    let traj = solve_diffusion_reaction_1d(&vec![c; 64], &g, &spec)?;
    let mut logistic_err = 0.0f64;
    for (s, slice) in traj.chunks(64).enumerate() {
        let t = s as f64 * spec.t_final / (spec.time_slices - 1) as f64;
        let exact = c * t.exp() / (1.0 + c * (t.exp() - 1.0));
        logistic_err = slice.iter().fold(logistic_err, |m, v| m.max((v - exact).abs()));
    }

    let spec = PdeSpec::new(PdeKind::AllenCahn1d, 64);
    let g = spec.grid()?;
    let mut fixed_err = 0.0f64;
    for c in [0.0, 1.0] {
        let traj = solve_allen_cahn_1d(&vec![c; 64], &g, &spec)?;
        fixed_err = traj.iter().fold(fixed_err, |m, v| m.max((v - c).abs()));
    }
    verdict(
        darcy_ok && logistic_err < 1e-4 && fixed_err <= 1e-12,
        format!(
            "Darcy error ratios {:.2}, {:.2}; logistic max err {logistic_err:.1e}; Allen-Cahn fixed points {fixed_err:.1e}",
            ratios[0], ratios[1]
        ),
    )
}

fn metric_properties() -> Result<Verdict> {
    let mut r = rng(8);
    let mut fails = Vec::new();
    for _ in 0..200 {
        let n = r.gen_range(1..50);
        let u: Vec<f64> = (0..n).map(|_| r.gen_range(-5.0..5.0)).collect();
        let u_hat: Vec<f64> = u.iter().map(|x| x + r.gen_range(-1.0..1.0)).collect();
        let c = r.gen_range(1e-3..1e3) * if r.gen_bool(0.5) { -1.0 } else { 1.0 };
        let (Some(a), Some(b)) = (
            relative_error_value(&u, &u_hat),
            relative_error_value(&u.iter().map(|x| c * x).collect::<Vec<_>>(), &u_hat.iter().map(|x| c * x).collect::<Vec<_>>()),
        ) else {
            continue;
        };
        if (a - b).abs() > 1e-12 * a.max(1.0) {
            fails.push("relative L2 scale");
            break;
        }
    }

    for _ in 0..100 {
        let n = r.gen_range(2..20);
        let l = r.gen_range(1..5);
        let w = trapezoidal_weights(&Grid::line(n, 0.0, 1.0)?)?;
        let ga = gram_matrix_values(&uniform(&[n, 2, l], &mut r), &w)?;
        let gb = gram_matrix_values(&uniform(&[n, 2, l], &mut r), &w)?;
        let eye = Tensor::eye(l);
        let loss = orthogonality_loss_values(&ga, &gb)?;
        let mut bumped = eye.clone();
        bumped.set(&[r.gen_range(0..l), r.gen_range(0..l)], 1e-6);
        let zero = orthogonality_loss_values(&eye, &eye)?;
        let off = orthogonality_loss_values(&eye, &bumped)?;
        if !(loss > 0.0 && zero == 0.0 && off > 0.0) {
            fails.push("L_ortho = 0 iff G = I");
            break;
        }
    }

    for _ in 0..100 {
        let (nx, ny) = (r.gen_range(2..40), r.gen_range(2..20));
        let lo = r.gen_range(-2.0..0.0);
        let hi = lo + r.gen_range(0.1..3.0);
        let c: [f64; 3] = [r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0)];
        let g = Grid::new(vec![Axis { extent: nx, lo, hi }, Axis { extent: ny, lo, hi }])?;
        let w = trapezoidal_weights(&g)?;
        let got: f64 = w
            .weights()
            .iter()
            .zip(g.coordinates().chunks(2))
            .map(|(w, p)| w * (c[0] + c[1] * p[0] + c[2] * p[1]))
            .sum();
        let width = hi - lo;
        let exact = c[0] * width * width + (c[1] + c[2]) * (hi * hi - lo * lo) / 2.0 * width;
        if (got - exact).abs() > 1e-11 * (1.0 + exact.abs()) {
            fails.push("trapezoid on affine functions");
            break;
        }
    }

    for _ in 0..100 {
        let n = r.gen_range(8..64);
        let g = Grid::line(n, 0.0, 1.0)?;
        let u = uniform(&[2 * n], &mut r).into_data();
        let a = r.gen_range(0.02..50.0) * if r.gen_bool(0.5) { -1.0 } else { 1.0 };
        let b = r.gen_range(-100.0..100.0);
        let v: Vec<f64> = u.iter().map(|x| a * x + b).collect();
        let (bu, bv) = (beta_variability(&u, &g, 2)?, beta_variability(&v, &g, 2)?);
        if (bu - bv).abs() > 1e-8 * bu {
            fails.push("beta affine invariance");
            break;
        }
    }
    let ok = fails.is_empty();
    verdict(ok, if ok { "all four properties hold on randomized inputs".into() } else { format!("violated: {}", fails.join(", ")) })
}

fn determinism_and_persistence() -> Result<Verdict> {
    let spec = PdeSpec::new(PdeKind::DiffusionReaction1d, 32);
    let ds = build_dataset(&spec, 16, 4, [0.5, 0.25, 0.25], Execution::Parallel)?;
    let cfg = RunConfig {
        model: SvdNoConfig {
            lifting_dim: 6,
            blocks: 2,
            ..SvdNoConfig::default()
        },
        epochs: 3,
        batch_size: 4,
        seed: 9,
        ..RunConfig::default()
    };
    let dirs = [tempfile::tempdir()?, tempfile::tempdir()?];
    for d in &dirs {
        train(&cfg, &ds, Some(d.path()))?;
    }
    let same = |f: &str| -> Result<bool> { Ok(std::fs::read(dirs[0].path().join(f))? == std::fs::read(dirs[1].path().join(f))?) };
    let csv_ok = same("metrics.csv")? && same("test.csv")?;

    let bytes = std::fs::read(dirs[0].path().join("final.ckpt"))?;
    let ckpt = decode_checkpoint(&bytes)?;
    let ckpt_ok = encode_checkpoint(&ckpt.model, &ckpt.config)? == bytes;

    let stem = dirs[0].path().join("data");
    write_dataset(&stem, &ds)?;
    let back = read_dataset(&stem)?;
    let bits = |d: &Dataset| d.samples.iter().flat_map(|s| s.a.iter().chain(&s.u)).map(|x| x.to_bits()).collect::<Vec<_>>();
    let ds_ok = back == ds && bits(&back) == bits(&ds);
    verdict(
        csv_ok && ckpt_ok && ds_ok,
        format!("metrics CSVs identical: {csv_ok}; checkpoint bit-exact: {ckpt_ok}; dataset bit-exact: {ds_ok}"),
    )
}

/// Pins glibc's mmap and trim thresholds so freed buffers stay mapped
/// between repeats; otherwise page faults dominate the scaling timings.
#[cfg(all(target_os = "linux", target_env = "gnu"))]
fn steady_allocator() {
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 32 << 20);
        libc::mallopt(libc::M_TRIM_THRESHOLD, 512 << 20);
    }
}

#[cfg(not(all(target_os = "linux", target_env = "gnu")))]
fn steady_allocator() {}

fn main() {
    activate();
    steady_allocator();
    let criteria: [(usize, &str, Check, u64); 9] = [
        (1, "factorization oracle", factorization_oracle, 10),
        (2, "gradient suite", gradient_suite, 60),
        (3, "orthogonality convergence", orthogonality_convergence, 300),
        (4, "desk-scale learning", desk_learning, 1800),
        (5, "ablation direction (long)", ablation_direction, 3 * 3600),
        (6, "complexity scaling", complexity_scaling, 300),
        (7, "solver correctness", solver_correctness, 120),
        (8, "metric properties", metric_properties, 10),
        (9, "determinism and persistence", determinism_and_persistence, 120),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check, limit) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let within = took <= Duration::from_secs(limit);
        let timing = format!("{:.1}s, limit {limit}s", took.as_secs_f64());
        let (tag, detail) = match result {
            Ok(Verdict::Pass(d)) if within => ("PASS", d),
            Ok(Verdict::Pass(d)) => ("FAIL", format!("{d}; over time budget")),
            Ok(Verdict::Fail(d)) => ("FAIL", d),
            Ok(Verdict::Skip(d)) => ("SKIP", d),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("{tag} [{id}] {name}: {detail} ({timing})");
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
