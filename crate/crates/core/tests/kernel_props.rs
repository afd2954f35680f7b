mod common;

use common::{dd_dot, dd_exp, dot, normal_vec, rel_err, rng, scalar_partial_sum};
use taylorattn::basis::build_basis_family;
use taylorattn::kernel::{kernel_exact, kernel_truncated, truncation_residual, KernelConfig, TruncatedKernel};

#[test]
fn exact_kernel_agrees_with_extended_precision() {
    let mut r = rng(21);
    for d in [1usize, 4, 16] {
        // power-of-two scales keep the division exact in the oracle
        let c = (d as f64).sqrt();
        for _ in 0..200 {
            let q = normal_vec(&mut r, d);
            let k = normal_vec(&mut r, d);
            let oracle = dd_exp(dd_dot(&q, &k).div_f64(c));
            let got = kernel_exact(&q, &k, c).unwrap();
            // f64 dot rounding shifts the exponent by ~eps·Σ|q_i k_i|/c
            let cond = q.iter().zip(&k).map(|(a, b)| (a * b).abs()).sum::<f64>() / c;
            let tol = 1e-14f64.max(4.0 * f64::EPSILON * (1.0 + cond));
            assert!(rel_err(got, oracle) <= tol, "d={d}: {got} vs {oracle}");
        }
    }
}

#[test]
fn oracle_sanity() {
    assert!((dd_exp(common::Dd(1.0, 0.0)) - std::f64::consts::E).abs() <= f64::EPSILON * 3.0);
    assert!((dd_exp(common::Dd(-1.0, 0.0)) - (-1f64).exp()).abs() <= f64::EPSILON);
}

#[test]
fn feature_path_equals_scalar_partial_sum() {
    let mut r = rng(5);
    for d in 1..=8 {
        for order in 1..=6 {
            let c = (d as f64).sqrt();
            let family = build_basis_family(d, order, c).unwrap();
            let kern = TruncatedKernel::new(&family);
            for _ in 0..100 {
                let q = normal_vec(&mut r, d);
                let k = normal_vec(&mut r, d);
                let got = kern.eval(&q, &k).unwrap();
                let want = scalar_partial_sum(dot(&q, &k), order, c);
                // both routes sum alternating terms; bound by their magnitude
                let mag = scalar_partial_sum(
                    q.iter().zip(&k).map(|(a, b)| (a * b).abs()).sum(),
                    order,
                    c,
                );
                assert!(
                    rel_err(got, want) <= 1e-12 || (got - want).abs() <= 1e-14 * mag,
                    "d={d} P={order}: {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn frozen_partial_sums() {
    // z = q·k / c = 1
    let cfg = KernelConfig::new(4, 1.0).unwrap();
    let v = kernel_truncated(&[1.0, 0.0], &[1.0, 0.0], &cfg).unwrap();
    assert!((v - 2.666_666_666_666_667).abs() < 1e-15);
    assert!((v - scalar_partial_sum(1.0, 4, 1.0)).abs() < 1e-15);
    let cfg = KernelConfig::new(8, 1.0).unwrap();
    let v = kernel_truncated(&[1.0, 0.0], &[1.0, 0.0], &cfg).unwrap();
    let remainder = std::f64::consts::E - v;
    assert!(remainder > 0.0 && remainder < 3e-5);
}

#[test]
fn error_shrinks_as_terms_are_added() {
    let mut r = rng(99);
    for d in [2usize, 4, 8] {
        let c = (d as f64).sqrt();
        for _ in 0..50 {
            let q = normal_vec(&mut r, d);
            let k = normal_vec(&mut r, d);
            let exact = kernel_exact(&q, &k, c).unwrap();
            let errs: Vec<f64> = (1..=8)
                .map(|order| {
                    let f = build_basis_family(d, order, c).unwrap();
                    (TruncatedKernel::new(&f).eval(&q, &k).unwrap() - exact).abs()
                })
                .collect();
            let z = (dot(&q, &k) / c).abs();
            if z <= 1.0 {
                // |z| ≤ 1: each added term can only shrink the remainder
                assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{errs:?}");
            }
            assert!(errs[7] <= truncation_residual(z, 8) + 1e-12);
            assert!(errs[7] < errs[0] || errs[0] < 1e-12);
        }
    }
}

#[test]
fn truncated_kernel_may_be_negative() {
    // z = -3, P = 2
    let f = build_basis_family(1, 2, 1.0).unwrap();
    let v = TruncatedKernel::new(&f).eval(&[3.0], &[-1.0]).unwrap();
    assert_eq!(v, -2.0);
    assert!(kernel_exact(&[3.0], &[-1.0], 1.0).unwrap() > 0.0);
}

#[test]
fn residual_matches_exact_minus_partial() {
    for z in [-2.0f64, -1.0, -0.25, 0.0, 0.5, 1.0, 3.0] {
        for order in 1..8 {
            let want = (z.exp() - scalar_partial_sum(z, order, 1.0)).abs();
            assert!((truncation_residual(z, order) - want).abs() < 1e-13);
        }
    }
}
