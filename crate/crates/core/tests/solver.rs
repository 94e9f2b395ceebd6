mod common;

use common::gaussian;
use corrgroup::enet::{self, cv_lambda, fit, kkt_residual, lambda_max, predict_prob};
use corrgroup::{seed, CvOptions, SolverOptions};
use proptest::prelude::*;
use rand::Rng;

/// Unpenalized logistic regression by Newton-Raphson with an explicit
/// intercept column. Returns (intercept, coefficients...).
#[allow(clippy::needless_range_loop)]
fn newton_mle(x: &[Vec<f64>], y: &[u8]) -> Vec<f64> {
    let n = y.len();
    let k = x.len() + 1;
    let row = |i: usize| -> Vec<f64> { std::iter::once(1.0).chain(x.iter().map(|c| c[i])).collect() };
    let mut theta = vec![0.0; k];
    for _ in 0..100 {
        let mut aug = vec![vec![0.0; k + 1]; k];
        for i in 0..n {
            let r = row(i);
            let eta: f64 = r.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-eta).exp());
            for a in 0..k {
                aug[a][k] += (f64::from(y[i]) - p) * r[a];
                for b in 0..k {
                    aug[a][b] += p * (1.0 - p) * r[a] * r[b];
                }
            }
        }
        for col in 0..k {
            let piv = (col..k)
                .max_by(|&a, &b| aug[a][col].abs().total_cmp(&aug[b][col].abs()))
                .unwrap();
            aug.swap(col, piv);
            for r in 0..k {
                if r != col {
                    let f = aug[r][col] / aug[col][col];
                    for c in col..=k {
                        aug[r][c] -= f * aug[col][c];
                    }
                }
            }
        }
        let mut small = true;
        for a in 0..k {
            let step = aug[a][k] / aug[a][a];
            theta[a] += step;
            small &= step.abs() < 1e-13;
        }
        if small {
            break;
        }
    }
    theta
}

fn logistic_data(n: usize, beta: &[f64], b0: f64, rng: &mut impl Rng) -> (Vec<Vec<f64>>, Vec<u8>) {
    let x: Vec<Vec<f64>> = (0..beta.len()).map(|_| gaussian(n, rng)).collect();
    let y = (0..n)
        .map(|i| {
            let eta = b0 + beta.iter().enumerate().map(|(j, b)| b * x[j][i]).sum::<f64>();
            u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))
        })
        .collect();
    (x, y)
}

#[test]
fn vanishing_penalty_matches_newton_mle() {
    for s in 0..10 {
        let mut rng = seed::rng(40 + s);
        let (x, y) = logistic_data(50, &[0.8, -0.5, 0.3], 0.2, &mut rng);
        let f = fit(&x, &y, 0.5, 1e-8, &SolverOptions::default()).unwrap();
        let theta = newton_mle(&x, &y);
        assert!((f.intercept - theta[0]).abs() < 1e-3);
        for j in 0..3 {
            assert!((f.coefficients[j] - theta[j + 1]).abs() < 1e-3, "seed {s}");
        }
    }
}

#[test]
fn predictions_follow_the_linear_predictor() {
    let mut rng = seed::rng(3);
    let (x, y) = logistic_data(40, &[1.0, 0.0, -1.0, 0.5], -0.3, &mut rng);
    let lmax = lambda_max(&x, &y, 0.7).unwrap();
    let f = fit(&x, &y, 0.7, 0.1 * lmax, &SolverOptions::default()).unwrap();
    let q = predict_prob(&f, &x).unwrap();
    for (i, qi) in q.iter().enumerate() {
        let eta = f.intercept + (0..4).map(|j| f.coefficients[j] * x[j][i]).sum::<f64>();
        assert!((qi - 1.0 / (1.0 + (-eta).exp())).abs() < 1e-14);
    }
}

#[test]
fn strong_signal_is_selected_below_lambda_max() {
    let mut rng = seed::rng(9);
    let strong = gaussian(60, &mut rng);
    let y: Vec<u8> = strong.iter().map(|&v| u8::from(v > 0.0)).collect();
    let mut x = vec![strong];
    x.extend((0..4).map(|_| gaussian(60, &mut rng)));
    let cv = cv_lambda(&x, &y, 0.5, 1, &CvOptions::default()).unwrap();
    assert!(cv.lambda < lambda_max(&x, &y, 0.5).unwrap());
}

#[test]
fn pure_noise_keeps_the_penalty_high() {
    // with no signal the cross-validated deviance is flat or rising as the
    // penalty drops, so the chosen penalty sits in the upper part of the path
    let mut high = 0;
    for s in 0..20 {
        let mut rng = seed::rng(1000 + s);
        let x: Vec<Vec<f64>> = (0..20).map(|_| gaussian(80, &mut rng)).collect();
        let y: Vec<u8> = (0..80).map(|i| u8::from(i % 2 == 0)).collect();
        let cv = cv_lambda(&x, &y, 0.5, s, &CvOptions::default()).unwrap();
        if cv.lambda >= 0.3 * cv.lambdas[0] {
            high += 1;
        }
    }
    assert!(high >= 15, "only {high} of 20 noise fits kept a high penalty");
}

#[test]
fn cv_is_reproducible() {
    let mut rng = seed::rng(5);
    let (x, y) = logistic_data(70, &[0.7, 0.0, 0.0, -0.4, 0.0], 0.0, &mut rng);
    let a = cv_lambda(&x, &y, 0.5, 42, &CvOptions::default()).unwrap();
    let b = cv_lambda(&x, &y, 0.5, 42, &CvOptions::default()).unwrap();
    assert_eq!(a.lambda.to_bits(), b.lambda.to_bits());
    assert_eq!(a.deviance, b.deviance);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn converged_fits_satisfy_kkt(
        s in 0u64..1_000_000,
        n in 15usize..60,
        p in 1usize..20,
        alpha in prop::sample::select(vec![0.05, 0.5, 1.0]),
        ratio in 0.01f64..1.2,
    ) {
        let mut rng = seed::rng(s);
        let x: Vec<Vec<f64>> = (0..p).map(|_| gaussian(n, &mut rng)).collect();
        let mut y: Vec<u8> = (0..n).map(|i| u8::from(x[0][i] + rng.random::<f64>() - 0.5 > 0.0)).collect();
        y[0] = 0;
        y[1] = 1;
        let lmax = lambda_max(&x, &y, alpha).unwrap();
        prop_assume!(lmax > 0.0);
        let f = fit(&x, &y, alpha, ratio * lmax, &SolverOptions::default()).unwrap();
        prop_assert!(f.converged);
        prop_assert!(kkt_residual(&x, &y, &f).unwrap() <= 1e-6);
        for w in f.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        if ratio >= 1.0 {
            prop_assert!(f.coefficients.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn flipping_a_column_flips_its_coefficient(s in 0u64..1_000_000, j in 0usize..4) {
        let mut rng = seed::rng(s);
        let (mut x, y) = logistic_data(40, &[0.9, -0.6, 0.4, 0.0], 0.1, &mut rng);
        prop_assume!(y.contains(&0) && y.contains(&1));
        let lambda = 0.2 * lambda_max(&x, &y, 0.5).unwrap();
        let a = fit(&x, &y, 0.5, lambda, &SolverOptions::default()).unwrap();
        x[j].iter_mut().for_each(|v| *v = -*v);
        let b = fit(&x, &y, 0.5, lambda, &SolverOptions::default()).unwrap();
        prop_assert!((a.coefficients[j] + b.coefficients[j]).abs() < 1e-6);
        prop_assert!((a.intercept - b.intercept).abs() < 1e-6);
    }
}

#[test]
fn path_penalties_are_decreasing_and_start_at_lambda_max() {
    let path = enet::lambda_path(2.0, 0.01, 10);
    assert_eq!(path[0], 2.0);
    assert!((path[9] - 0.02).abs() < 1e-12);
    assert!(path.windows(2).all(|w| w[1] < w[0]));
}
