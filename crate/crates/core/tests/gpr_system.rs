#![allow(clippy::needless_range_loop)]

use gpforest::gpr::{loo_downdate, train, GprConfig, KroneckerSystem, TrainingSet};
use gpforest::kernel::{gram, separable_kernel, KernelParams};
use gpforest::linalg::{Cholesky, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy(n: usize, nx: usize, ny: usize, seed: u64) -> TrainingSet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Matrix<f64> = Matrix::from_fn(n, nx, |_, _| rng.random_range(-2.0..2.0));
    let y = Matrix::from_fn(n, ny, |i, a| {
        (a as f64 + 1.0) * (2.0 + (x[(i, 0)] + x[(i, nx - 1)]).cos()) + rng.random_range(0.0..0.5)
    });
    TrainingSet::from_matrices(x, y).unwrap()
}

fn dense_system(gamma: &Matrix<f64>, k: &Matrix<f64>, c: f64) -> Matrix<f64> {
    let mut s = separable_kernel(gamma, k).unwrap();
    let n = k.rows();
    for a in 0..gamma.rows() {
        for i in 0..n {
            s[(a * n + i, a * n + i)] += c * gamma[(a, a)];
        }
    }
    s
}

#[test]
fn factored_solve_matches_dense_cholesky() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (n, ny) in [(6, 2), (15, 4), (30, 15)] {
        let x = Matrix::from_fn(n, 3, |_, _| rng.random_range(0.0..3.0));
        let k = gram(&x, &x, &KernelParams::new(2.0, 1.3).unwrap())
            .unwrap()
            .entries;
        let a = Matrix::from_fn(ny, ny, |_, _| rng.random_range(-1.0..1.0));
        let mut gamma = a.matmul(&a.transpose()).unwrap();
        gamma.add_to_diagonal(0.2);
        let sys = KroneckerSystem::new(&gamma, &k, 0.1).unwrap();
        let v: Vec<f64> = (0..n * ny).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = sys.solve(&v).unwrap();
        let dense = Cholesky::factor(&dense_system(&gamma, &k, 0.1))
            .unwrap()
            .solve(&v)
            .unwrap();
        let err = fast
            .iter()
            .zip(&dense)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "n={n} ny={ny}: {err:e}");
    }
}

#[test]
fn apply_inverts_solve() {
    let ts = toy(25, 4, 5, 8);
    let m = train(&ts, &GprConfig::default()).unwrap();
    let v: Vec<f64> = (0..m.system_dim())
        .map(|i| (i as f64 * 0.37).sin())
        .collect();
    let back = m.apply_system(&m.solve_system(&v).unwrap()).unwrap();
    for (a, b) in v.iter().zip(&back) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn predictive_covariance_is_symmetric_and_at_least_the_noise() {
    let ts = toy(40, 3, 6, 9);
    let m = train(&ts, &GprConfig::default()).unwrap();
    let noise = m.noise_diag().to_vec();
    for i in 0..5 {
        let x: Vec<f64> = (0..3).map(|j| 0.3 * (i + j) as f64 - 1.0).collect();
        let p = m.predict(&x).unwrap();
        assert!(p.covariance.is_symmetric(1e-12));
        for a in 0..6 {
            // var ≥ c·D_aa since the explained part cannot exceed the prior
            assert!(p.covariance[(a, a)] >= 0.1 * noise[a] * (1.0 - 1e-9));
        }
        assert!(Cholesky::factor(&p.covariance).is_ok());
    }
}

#[test]
fn far_away_prediction_reverts_to_the_prior() {
    let ts = toy(30, 2, 3, 10);
    let m = train(&ts, &GprConfig::default()).unwrap();
    let p = m.predict(&[1e6, -1e6]).unwrap();
    let gamma = m.gamma_y();
    for a in 0..3 {
        assert!((p.mean[a] - m.attribute_means()[a]).abs() < 1e-9);
        for b in 0..3 {
            let prior = gamma[(a, b)] + if a == b { 0.1 * gamma[(a, a)] } else { 0.0 };
            assert!((p.covariance[(a, b)] - prior).abs() < 1e-9);
        }
    }
}

#[test]
fn downdate_tracks_refit_with_standardized_inputs() {
    // standardization statistics differ by one plot; predictions stay close
    let ts = toy(60, 3, 4, 11);
    let cfg = GprConfig::default();
    let fast = loo_downdate(&ts, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    for i in [0, 17, 59] {
        let rest: Vec<usize> = (0..60).filter(|&j| j != i).collect();
        let refit = train(&ts.subset(&rest).unwrap(), &cfg)
            .unwrap()
            .predict(ts.x.row(i))
            .unwrap();
        let f = fast[i].as_ref().unwrap();
        for a in 0..4 {
            worst = worst.max((f.mean[a] - refit.mean[a]).abs() / refit.covariance[(a, a)].sqrt());
        }
    }
    assert!(worst < 0.05, "{worst}");
}

#[test]
fn f32_model_agrees_with_f64() {
    let ts = toy(30, 3, 4, 12);
    let m64 = train(&ts, &GprConfig::default()).unwrap();
    let x32 = Matrix::from_fn(30, 3, |i, j| ts.x[(i, j)] as f32);
    let y32 = Matrix::from_fn(30, 4, |i, a| ts.y[(i, a)] as f32);
    let ts32 = TrainingSet::from_matrices(x32, y32).unwrap();
    let m32 = train(&ts32, &GprConfig::<f32>::default()).unwrap();
    let x = [0.2, -0.4, 1.1];
    let (p64, p32) = (
        m64.predict(&x).unwrap(),
        m32.predict(&x.map(|v| v as f32)).unwrap(),
    );
    for a in 0..4 {
        let scale = p64.covariance[(a, a)].sqrt();
        assert!(((p32.mean[a] as f64) - p64.mean[a]).abs() < 1e-3 * scale.max(1.0));
        assert!(
            ((p32.covariance[(a, a)] as f64) - p64.covariance[(a, a)]).abs()
                < 1e-3 * p64.covariance[(a, a)]
        );
    }
}

#[test]
fn duplicate_training_inputs_are_handled_by_the_noise_term() {
    let mut ts = toy(10, 2, 2, 13);
    for j in 0..2 {
        ts.x[(1, j)] = ts.x[(0, j)];
    }
    let m = train(&ts, &GprConfig::default()).unwrap();
    let p = m.predict(ts.x.row(0)).unwrap();
    assert!(p.mean.iter().all(|v: &f64| v.is_finite()));
}
