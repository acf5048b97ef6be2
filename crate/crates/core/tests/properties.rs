use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use svdno::model::{assemble_kernel, dense_kernel_values, factorized_kernel_values};
use svdno::objectives::{
    beta_variability, gram_matrix_values, orthogonality_loss_values, relative_error_value, trapezoidal_weights,
};
use svdno::pde::split_indices;
use svdno::pde::dataset::split_sizes;
use svdno::grid::Axis;
use svdno::{Grid, Tensor};

fn uniform(shape: &[usize], seed: u64) -> Tensor {
    Tensor::uniform(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn factorized_kernel_matches_dense_contraction(
        n in 2usize..=64,
        d in 1usize..=8,
        l in 1usize..=5,
        seed in any::<u64>(),
    ) {
        let w = trapezoidal_weights(&Grid::line(n, 0.0, 1.0).unwrap()).unwrap();
        let v = uniform(&[n, d], seed);
        let phi = uniform(&[n, d, l], seed ^ 1);
        let psi = uniform(&[n, d, l], seed ^ 2);
        let sigma = uniform(&[l], seed ^ 3).into_data();
        let fast = factorized_kernel_values(&v, &phi, &psi, &sigma, &w).unwrap();
        let kappa = assemble_kernel(&phi, &sigma, &psi).unwrap();
        let slow = dense_kernel_values(&v, &kappa, &w).unwrap();
        let scale = slow.data().iter().fold(1.0f64, |m, x| m.max(x.abs()));
        prop_assert!(fast.max_abs_diff(&slow) <= 1e-10 * scale);
    }

    #[test]
    fn relative_error_is_scale_invariant(
        u in prop::collection::vec(-10.0f64..10.0, 1..40),
        noise in prop::collection::vec(-1.0f64..1.0, 40),
        c in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3],
    ) {
        prop_assume!(u.iter().any(|x| *x != 0.0));
        let u_hat: Vec<f64> = u.iter().zip(&noise).map(|(a, e)| a + e).collect();
        let base = relative_error_value(&u, &u_hat).unwrap();
        let cu: Vec<f64> = u.iter().map(|x| c * x).collect();
        let cu_hat: Vec<f64> = u_hat.iter().map(|x| c * x).collect();
        let scaled = relative_error_value(&cu, &cu_hat).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-12 * base.max(1.0));
        prop_assert_eq!(relative_error_value(&u, &u), Some(0.0));
    }

    #[test]
    fn orthogonality_loss_is_a_squared_distance_to_identity(
        n in 2usize..=20,
        d in 1usize..=3,
        l in 1usize..=4,
        seed in any::<u64>(),
    ) {
        let w = trapezoidal_weights(&Grid::line(n, 0.0, 1.0).unwrap()).unwrap();
        let a = gram_matrix_values(&uniform(&[n, d, l], seed), &w).unwrap();
        let b = gram_matrix_values(&uniform(&[n, d, l], seed ^ 7), &w).unwrap();
        let loss = orthogonality_loss_values(&a, &b).unwrap();
        let eye = Tensor::eye(l);
        let direct: f64 = [&a, &b]
            .iter()
            .flat_map(|g| g.data().iter().zip(eye.data()).map(|(x, e)| (x - e) * (x - e)))
            .sum();
        prop_assert!(loss >= 0.0);
        prop_assert!((loss - direct).abs() <= 1e-12 * direct.max(1.0));
        prop_assert_eq!(orthogonality_loss_values(&eye, &eye).unwrap(), 0.0);
        let mut bumped = eye.clone();
        bumped.set(&[seed as usize % l, 0], 1.0 + 1e-3);
        prop_assert!(orthogonality_loss_values(&bumped, &eye).unwrap() > 0.0);
    }

    #[test]
    fn trapezoid_integrates_affine_functions_exactly(
        nx in 2usize..=50,
        ny in 2usize..=20,
        lo in -3.0f64..0.0,
        width in 0.1f64..4.0,
        c in prop::array::uniform3(-5.0f64..5.0),
    ) {
        let hi = lo + width;
        let line = Grid::line(nx, lo, hi).unwrap();
        let w = trapezoidal_weights(&line).unwrap();
        let x = line.coordinates();
        let got: f64 = w.weights().iter().zip(&x).map(|(w, x)| w * (c[0] + c[1] * x)).sum();
        let exact = c[0] * width + c[1] * (hi * hi - lo * lo) / 2.0;
        prop_assert!((got - exact).abs() <= 1e-12 * (1.0 + exact.abs()));

        let square = Grid::new(vec![
            Axis { extent: nx, lo, hi },
            Axis { extent: ny, lo, hi },
        ])
        .unwrap();
        let w = trapezoidal_weights(&square).unwrap();
        let xy = square.coordinates();
        let got: f64 = w
            .weights()
            .iter()
            .zip(xy.chunks(2))
            .map(|(w, p)| w * (c[0] + c[1] * p[0] + c[2] * p[1]))
            .sum();
        let moment = (hi * hi - lo * lo) / 2.0;
        let exact = c[0] * width * width + (c[1] + c[2]) * moment * width;
        prop_assert!((got - exact).abs() <= 1e-11 * (1.0 + exact.abs()));
    }

    #[test]
    fn beta_ignores_affine_rescaling(
        n in 8usize..=64,
        slices in 1usize..=3,
        a in prop_oneof![-50.0f64..-0.02, 0.02f64..50.0],
        b in -100.0f64..100.0,
        seed in any::<u64>(),
    ) {
        let grid = Grid::line(n, 0.0, 1.0).unwrap();
        let u = uniform(&[n * slices], seed).into_data();
        let v: Vec<f64> = u.iter().map(|x| a * x + b).collect();
        let bu = beta_variability(&u, &grid, slices).unwrap();
        let bv = beta_variability(&v, &grid, slices).unwrap();
        prop_assert!((bu - bv).abs() <= 1e-8 * bu, "{} vs {}", bu, bv);
    }

    #[test]
    fn splits_partition_every_index(
        n in 3usize..2000,
        f in prop::array::uniform3(0.05f64..1.0),
        seed in any::<u64>(),
    ) {
        let total: f64 = f.iter().sum();
        let fractions = [f[0] / total, f[1] / total, 1.0 - f[0] / total - f[1] / total];
        prop_assume!(fractions[2] > 0.0);
        if let Ok((train, val, test)) = split_sizes(n, fractions) {
            prop_assert_eq!(train + val + test, n);
            prop_assert!(train >= 1 && val >= 1 && test >= 1);
            let s = split_indices(n, fractions, seed).unwrap();
            prop_assert_eq!((s.train.len(), s.val.len(), s.test.len()), (train, val, test));
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
