use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svdno::model::{
    apply_factorized_kernel, SingularNetConfig, SingularNetKind, SvdNo, SvdNoConfig,
};
use svdno::objectives::{trapezoidal_weights, QuadratureWeights};
use svdno::{Grid, Tape, Tensor};

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn config(rank: usize, blocks: usize, kind: SingularNetKind) -> SvdNoConfig {
    SvdNoConfig {
        rank,
        lifting_dim: 4,
        blocks,
        singular_net: SingularNetConfig {
            kind,
            num_layers: 2,
            hidden_dim: 6,
        },
        projection_hidden: 5,
        ..SvdNoConfig::default()
    }
}

fn param(model: &SvdNo, name: &str) -> Tensor {
    let id = model.params().find(name).unwrap_or_else(|| panic!("no parameter {name}"));
    model.params().get(id).value.clone()
}

/// `x W + b` row by row.
fn affine(x: &[Vec<f64>], w: &Tensor, b: &Tensor) -> Vec<Vec<f64>> {
    let (k, m) = (w.shape()[0], w.shape()[1]);
    x.iter()
        .map(|row| {
            (0..m)
                .map(|c| b.data()[c] + (0..k).map(|r| row[r] * w.at(&[r, c])).sum::<f64>())
                .collect()
        })
        .collect()
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    t.data().chunks(t.shape()[1]).map(<[f64]>::to_vec).collect()
}

/// Independent scalar-loop implementation of the whole forward pass,
/// given evaluated singular functions.
fn straight_line(model: &SvdNo, z: &Tensor, w: &QuadratureWeights) -> Vec<Vec<f64>> {
    let cfg = model.config();
    let (dv, rank) = (cfg.lifting_dim, cfg.rank);
    let factors = model.kernel_factors(z).unwrap();
    let mut v = affine(&rows(z), &param(model, "lift.weight"), &param(model, "lift.bias"));
    let n = v.len();
    for t in 0..cfg.blocks {
        let (phi, psi) = &factors[if cfg.shared_basis { 0 } else { t }];
        let sigma = param(model, &format!("block{t}.sigma"));
        let local = affine(
            &v,
            &param(model, &format!("block{t}.w.weight")),
            &param(model, &format!("block{t}.w.bias")),
        );
        let mut next = vec![vec![0.0; dv]; n];
        for i in 0..n {
            for a in 0..dv {
                let mut k = 0.0;
                for j in 0..n {
                    for b in 0..dv {
                        let mut kappa = 0.0;
                        for l in 0..rank {
                            kappa += phi.at(&[i, a, l]) * sigma.data()[l] * psi.at(&[j, b, l]);
                        }
                        k += w.weights()[j] * kappa * v[j][b];
                    }
                }
                next[i][a] = gelu(local[i][a] + k);
            }
        }
        v = next;
    }
    let h: Vec<Vec<f64>> = affine(&v, &param(model, "projection.0.weight"), &param(model, "projection.0.bias"))
        .into_iter()
        .map(|r| r.into_iter().map(gelu).collect())
        .collect();
    affine(&h, &param(model, "projection.1.weight"), &param(model, "projection.1.bias"))
}

fn random_input(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn single_block_model_equals_manual_composition() {
    let grid = Grid::line(9, 0.0, 1.0).unwrap();
    let model = SvdNo::new(config(3, 1, SingularNetKind::SineMlp), grid.clone(), 1, 2, 4).unwrap();
    let a = random_input(9, 1);
    let z = model.coordinates(&a).unwrap();
    let expected = straight_line(&model, &z, &trapezoidal_weights(&grid).unwrap());
    let got = model.predict(&a).unwrap();
    for (i, row) in expected.iter().enumerate() {
        for (c, e) in row.iter().enumerate() {
            assert!((got.at(&[i, c]) - e).abs() < 1e-12, "point {i} channel {c}");
        }
    }
}

#[test]
fn stacked_blocks_match_straight_line_oracle() {
    for (shared, kind) in [(true, SingularNetKind::SineMlp), (false, SingularNetKind::Recurrent1d)] {
        let grid = Grid::line(7, -1.0, 1.0).unwrap();
        let mut cfg = config(2, 3, kind);
        cfg.shared_basis = shared;
        let model = SvdNo::new(cfg, grid.clone(), 1, 3, 9).unwrap();
        let a = random_input(7, 2);
        let z = model.coordinates(&a).unwrap();
        let expected = straight_line(&model, &z, &trapezoidal_weights(&grid).unwrap());
        let got = model.predict(&a).unwrap();
        let worst = expected
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().map(move |(c, e)| (i, c, *e)))
            .map(|(i, c, e)| (got.at(&[i, c]) - e).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-12, "shared={shared}: {worst}");
    }
}

#[test]
fn zero_padded_rank_leaves_output_unchanged() {
    let grid = Grid::line(12, 0.0, 1.0).unwrap();
    let (l, d) = (2, 4);
    let small = SvdNo::new(config(l, 2, SingularNetKind::SineMlp), grid.clone(), 1, 2, 3).unwrap();
    let mut big = SvdNo::new(config(2 * l, 2, SingularNetKind::SineMlp), grid, 1, 2, 3).unwrap();
    for p in big.params_mut().iter_mut() {
        let src_id = small.params().find(&p.name).unwrap();
        let src = &small.params().get(src_id).value;
        if src.shape() == p.value.shape() {
            p.value = src.clone();
        } else if p.name.ends_with(".sigma") {
            p.value.data_mut().fill(0.0);
            p.value.data_mut()[..l].copy_from_slice(src.data());
        } else {
            // Singular-net head: output column a·L + l. The new modes keep
            // their random values.
            let rows = p.value.numel() / (d * 2 * l);
            let cols_small = d * l;
            for r in 0..rows {
                for a in 0..d {
                    for m in 0..l {
                        let s = src.data()[r * cols_small + a * l + m];
                        p.value.data_mut()[r * d * 2 * l + a * 2 * l + m] = s;
                    }
                }
            }
        }
    }
    let a = random_input(12, 5);
    let before = small.predict(&a).unwrap();
    let after = big.predict(&a).unwrap();
    assert!(before.max_abs_diff(&after) < 1e-12);
}

#[test]
fn lifting_is_pointwise() {
    let grid = Grid::line(6, 0.0, 1.0).unwrap();
    let model = SvdNo::new(config(2, 1, SingularNetKind::SineMlp), grid, 1, 1, 0).unwrap();
    let z = model.coordinates(&random_input(6, 3)).unwrap();
    let lift = |z: &Tensor| {
        let mut tape = Tape::new();
        let b = model.params().bind(&mut tape, false);
        let zv = tape.constant(z.clone());
        let v = model.lift(&mut tape, &b, zv).unwrap();
        tape.value(v).clone()
    };
    let base = lift(&z);
    for j in 0..6 {
        let mut zp = z.clone();
        zp.set(&[j, 1], z.at(&[j, 1]) + 0.3);
        let moved = lift(&zp);
        for i in 0..6 {
            let changed = (0..4).any(|c| moved.at(&[i, c]) != base.at(&[i, c]));
            assert_eq!(changed, i == j, "row {i} after perturbing {j}");
        }
    }
}

#[test]
fn recurrent_basis_is_causal_in_x() {
    // The recurrent net reads points in ascending x, so perturbing point j
    // cannot affect basis rows before j.
    let grid = Grid::line(8, 0.0, 1.0).unwrap();
    let model = SvdNo::new(config(2, 1, SingularNetKind::Recurrent1d), grid, 1, 1, 2).unwrap();
    let z = model.coordinates(&random_input(8, 4)).unwrap();
    let (phi, _) = model.kernel_factors(&z).unwrap().remove(0);
    let mut zp = z.clone();
    zp.set(&[5, 1], 0.9);
    let (moved, _) = model.kernel_factors(&zp).unwrap().remove(0);
    let row = |t: &Tensor, i: usize| t.data()[i * 8..(i + 1) * 8].to_vec();
    for i in 0..5 {
        assert_eq!(row(&phi, i), row(&moved, i));
    }
    assert_ne!(row(&phi, 5), row(&moved, 5));
}

fn factorized(v: &Tensor, phi: &Tensor, psi: &Tensor, sigma: &[f64], w: &QuadratureWeights) -> Tensor {
    let mut tape = Tape::new();
    let (v, phi, psi) = (tape.constant(v.clone()), tape.constant(phi.clone()), tape.constant(psi.clone()));
    let s = tape.constant(Tensor::from_vec(sigma.to_vec()));
    let out = apply_factorized_kernel(&mut tape, v, phi, psi, s, w).unwrap();
    tape.value(out).clone()
}

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let row = t.numel() / t.shape()[0];
    let mut data = Vec::with_capacity(t.numel());
    for &p in perm {
        data.extend_from_slice(&t.data()[p * row..(p + 1) * row]);
    }
    Tensor::new(t.shape().to_vec(), data).unwrap()
}

#[test]
fn node_permutation_permutes_output() {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (n, d, l) = (20, 3, 4);
    let grid = Grid::line(n, 0.0, 1.0).unwrap();
    let w = trapezoidal_weights(&grid).unwrap();
    let v = Tensor::uniform(&[n, d], 1.0, &mut rng);
    let phi = Tensor::uniform(&[n, d, l], 1.0, &mut rng);
    let psi = Tensor::uniform(&[n, d, l], 1.0, &mut rng);
    let sigma = [1.0, 0.5, 0.25, 0.125];
    let base = factorized(&v, &phi, &psi, &sigma, &w);

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let wp = QuadratureWeights::new(perm.iter().map(|&p| w.weights()[p]).collect()).unwrap();
    let out = factorized(
        &permute_rows(&v, &perm),
        &permute_rows(&phi, &perm),
        &permute_rows(&psi, &perm),
        &sigma,
        &wp,
    );
    // Only the order of the quadrature sum changes.
    assert!(permute_rows(&base, &perm).max_abs_diff(&out) < 1e-13);
}

#[test]
fn quadrature_converges_at_second_order() {
    // Φ = cos x, Ψ = eˣ, v = sin πx on [0, 1]:
    // (Kv)(x) = cos x · ∫ eˣ sin πx dx = cos x · π(1 + e)/(1 + π²).
    let exact_integral = std::f64::consts::PI * (1.0 + std::f64::consts::E) / (1.0 + std::f64::consts::PI.powi(2));
    let error = |n: usize| {
        let grid = Grid::line(n, 0.0, 1.0).unwrap();
        let w = trapezoidal_weights(&grid).unwrap();
        let x = grid.coordinates();
        let v = Tensor::new(vec![n, 1], x.iter().map(|x| (std::f64::consts::PI * x).sin()).collect()).unwrap();
        let phi = Tensor::new(vec![n, 1, 1], x.iter().map(|x| x.cos()).collect()).unwrap();
        let psi = Tensor::new(vec![n, 1, 1], x.iter().map(|x| x.exp()).collect()).unwrap();
        let out = factorized(&v, &phi, &psi, &[1.0], &w);
        x.iter()
            .enumerate()
            .map(|(i, x)| (out.data()[i] - x.cos() * exact_integral).abs())
            .fold(0.0, f64::max)
    };
    let errs: Vec<f64> = [17, 33, 65, 129].iter().map(|&n| error(n)).collect();
    for pair in errs.windows(2) {
        let ratio = pair[0] / pair[1];
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio} from {errs:?}");
    }
}

#[test]
fn zero_mode_is_bitwise_inert() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (n, d, l) = (30, 4, 3);
    let w = trapezoidal_weights(&Grid::line(n, 0.0, 2.0).unwrap()).unwrap();
    let v = Tensor::uniform(&[n, d], 1.0, &mut rng);
    let phi = Tensor::uniform(&[n, d, l], 1.0, &mut rng);
    let psi = Tensor::uniform(&[n, d, l], 1.0, &mut rng);
    let sigma = [0.9, -0.4, 0.2];
    let base = factorized(&v, &phi, &psi, &sigma, &w);

    let append = |t: &Tensor, rng: &mut ChaCha8Rng| {
        let mut data = Vec::with_capacity(n * d * (l + 1));
        for row in t.data().chunks(l) {
            data.extend_from_slice(row);
            data.push(rng.gen_range(-5.0..5.0));
        }
        Tensor::new(vec![n, d, l + 1], data).unwrap()
    };
    let out = factorized(&v, &append(&phi, &mut rng), &append(&psi, &mut rng), &[0.9, -0.4, 0.2, 0.0], &w);
    assert_eq!(base.data(), out.data());
}
