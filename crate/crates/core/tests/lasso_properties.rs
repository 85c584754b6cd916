use fastdebias::lasso::{kkt_residual, soft_threshold};
use fastdebias::{fit_lasso, generate_design, generate_signal, sample_measurements, DesignMatrix, EnsembleSpec, LassoConfig};
use ndarray::Array1;
use proptest::prelude::*;

fn instance(n: usize, p: usize, seed: u64) -> (DesignMatrix, Array1<f64>) {
    let a: DesignMatrix = generate_design(n, p, &EnsembleSpec::gaussian(), seed).unwrap();
    let beta = generate_signal(p, (p / 5).max(1), 1.0, 3.0, seed).unwrap();
    let y = sample_measurements(&a, &beta, 0.5, seed).unwrap().y;
    (a, y)
}

fn lambda_max(a: &DesignMatrix, y: &Array1<f64>) -> f64 {
    a.rmatvec(y.view()).iter().fold(0.0_f64, |m, g| m.max(g.abs())) / a.nrows() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn column_permutation_permutes_solution(seed in 0u64..1000, rot in 1usize..11) {
        let (a, y) = instance(30, 12, seed);
        let lambda = 0.2 * lambda_max(&a, &y);
        let order: Vec<usize> = (0..12).map(|k| (k + rot) % 12).collect();
        let ap = a.permute_columns(&order).unwrap();
        let cfg = LassoConfig::new(lambda).tol(1e-12);
        let b = fit_lasso(&a, y.view(), &cfg).unwrap().beta_hat;
        let bp = fit_lasso(&ap, y.view(), &cfg).unwrap().beta_hat;
        for (k, &j) in order.iter().enumerate() {
            prop_assert!((bp[k] - b[j]).abs() <= 1e-7 * (1.0 + b[j].abs()));
        }
    }

    #[test]
    fn converged_solves_certify_kkt(seed in 0u64..1000, frac in 0.01f64..0.9) {
        let (a, y) = instance(25, 40, seed);
        let lmax = lambda_max(&a, &y);
        let tol = 1e-8;
        let est = fit_lasso(&a, y.view(), &LassoConfig::new(frac * lmax).tol(tol)).unwrap();
        prop_assert!(est.kkt_residual <= tol);
        let fresh = kkt_residual(&a, y.view(), est.beta_hat.view(), frac * lmax).unwrap() / lmax;
        prop_assert!(fresh <= tol * (1.0 + 1e-6));
    }
}

#[test]
fn scaled_orthogonal_columns_threshold_independently() {
    // columns e_1, 2 e_2, 3 e_3 in R^4: coordinate j solves its own 1-d problem
    let a: DesignMatrix = DesignMatrix::new(ndarray::array![
        [1.0, 0.0, 0.0],
        [0.0, 2.0, 0.0],
        [0.0, 0.0, 3.0],
        [0.0, 0.0, 0.0]
    ])
    .unwrap();
    let y = ndarray::array![2.0, -1.0, 0.3, 5.0];
    let lambda = 0.1;
    let est = fit_lasso(&a, y.view(), &LassoConfig::new(lambda)).unwrap();
    for j in 0..3 {
        let d = a.col_sq_norms()[j] / 4.0;
        let g = a.column(j).dot(&y) / 4.0;
        let expected = soft_threshold(g, lambda) / d;
        assert!((est.beta_hat[j] - expected).abs() < 1e-12);
    }
}
