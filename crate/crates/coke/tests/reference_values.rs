//! Golden-value test against an independent implementation.
//!
//! The fixtures were produced by a numpy reimplementation of the
//! regression-adjustment estimator (exponential kernel with ρ = 5, per-arm
//! dual solves with the ridge scaled by the full sample size, pseudo-
//! outcomes, second-stage fit) solving every linear system with LAPACK's LU
//! instead of Cholesky. Agreement to 1e-8 checks the whole pipeline's
//! arithmetic, not just individual pieces.

use nalgebra::{DMatrix, DVector};

use coke::{
    logistic_fit, pearson, ra_learner, separate_regression, spearman, KernelSpec, LabeledDataset,
    RegularizerTriple,
};

fn parse_csv(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|line| line.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

#[test]
fn ra_and_separate_regression_match_the_reference_implementation() {
    let source = parse_csv(include_str!("fixtures/ref_source.csv"));
    let target = parse_csv(include_str!("fixtures/ref_target.csv"));
    let expected = parse_csv(include_str!("fixtures/ref_expected.csv"));

    let n = source.len();
    let z = DMatrix::from_fn(n, 2, |i, j| source[i][j]);
    let a: Vec<u8> = source.iter().map(|row| row[2] as u8).collect();
    let y = DVector::from_fn(n, |i, _| source[i][3]);
    let data = LabeledDataset::new(z, a, y).unwrap();
    let zt = DMatrix::from_fn(target.len(), 2, |i, j| target[i][j]);

    let spec = KernelSpec::matern_exp(5.0).unwrap();
    let triple = RegularizerTriple::new(0.01, 0.02, 0.05).unwrap();
    let ra = ra_learner(&spec, &data, &triple).unwrap();
    let ra_preds = ra.predict(&zt).unwrap();
    let sep = separate_regression(&spec, &data, 0.01, 0.02).unwrap();
    let sep_preds = sep.predict(&zt).unwrap();

    for i in 0..target.len() {
        assert!(
            (ra_preds[i] - expected[i][0]).abs() <= 1e-8,
            "ra row {i}: {} vs {}",
            ra_preds[i],
            expected[i][0]
        );
        assert!(
            (sep_preds[i] - expected[i][1]).abs() <= 1e-8,
            "sep row {i}: {} vs {}",
            sep_preds[i],
            expected[i][1]
        );
    }
}

#[test]
fn logistic_fit_matches_the_reference_maximum_likelihood_solution() {
    // Coefficients from scikit-learn's unpenalized fit on the same data
    // (lbfgs, tol 1e-12).
    let rows = parse_csv(include_str!("fixtures/ref_logistic.csv"));
    let n = rows.len();
    let z = DMatrix::from_fn(n, 2, |i, j| rows[i][j]);
    let labels: Vec<u8> = rows.iter().map(|row| row[2] as u8).collect();
    let fit = logistic_fit(&z, &labels).unwrap();
    assert!(fit.converged);
    let beta = fit.model.coefficients();
    let reference = [0.3690437269427502, -1.7904974768212076, 0.9167902121189603];
    for (got, want) in beta.iter().zip(reference) {
        assert!((got - want).abs() <= 1e-6, "{got} vs {want}");
    }
}

#[test]
fn correlations_match_the_reference_library() {
    // Values from scipy.stats on the same vectors (ties included).
    let x = [0.3, -1.2, 2.5, 0.3, 4.1, -0.7, 1.1, 0.3];
    let y = [1.0, 0.5, 3.2, 1.0, 2.9, -0.4, 1.0, 2.0];
    assert!((spearman(&x, &y).unwrap() - 0.8500000000000001).abs() <= 1e-12);
    assert!((pearson(&x, &y).unwrap() - 0.8488278535841149).abs() <= 1e-12);
}
