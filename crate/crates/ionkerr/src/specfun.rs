//! Scalar special functions of the coupling expansion: Laguerre polynomials,
//! normally-ordered Bessel eigenvalues, and the cosine expansion coefficients.

use crate::error::{Error, Result};
use crate::fock::{CompositeSpace, Operator};

/// Laguerre polynomial L_m(x) by the stable three-term recurrence
/// (k+1)·L_{k+1} = (2k+1−x)·L_k − k·L_{k−1}, with L₀ = 1, L₁ = 1 − x.
pub fn laguerre(m: usize, x: f64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = 1.0 - x;
    for k in 1..m {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Scalar part of the cosine expansion term F(a†, a; α, β):
///
///   e^{−η²/2}/(2·α!·β!) · [(iη)^{α+β} + (−iη)^{α+β}]
///
/// which vanishes for odd α+β and equals
/// e^{−η²/2}·(−1)^{(α+β)/2}·η^{α+β}/(α!·β!) for even α+β. The complex
/// intermediate is resolved analytically so the result is exactly real, and
/// the parity zero is exact rather than approximate.
pub fn expansion_coefficient(alpha: usize, beta: usize, eta: f64) -> Result<f64> {
    let order = alpha + beta;
    if alpha.max(beta) > 170 {
        return Err(Error::Domain(format!(
            "factorials overflow f64 for alpha = {alpha}, beta = {beta} (limit 170)"
        )));
    }
    if order % 2 == 1 {
        return Ok(0.0);
    }
    let sign = if (order / 2) % 2 == 0 { 1.0 } else { -1.0 };
    Ok((-eta * eta / 2.0).exp() * sign * eta.powi(order as i32)
        / (factorial(alpha) * factorial(beta)))
}

/// Eigenvalue of f(a†a) = e^{−η²/2}·:J₀(2η√(a†a)):  on Fock state |m⟩,
/// i.e. e^{−η²/2}·L_m(η²).
pub fn f_eigenvalue(m: usize, eta: f64) -> f64 {
    (-eta * eta / 2.0).exp() * laguerre(m, eta * eta)
}

/// Lamb-Dicke truncation of f²(a†a) on Fock state |m⟩: 1 − η² − 2η²m.
pub fn ld_f_squared(m: usize, eta: f64) -> f64 {
    1.0 - eta * eta - 2.0 * eta * eta * m as f64
}

/// Diagonal operator f(a†a) on the phonon factor, identity on ion and photon
/// factors; entry at phonon level m is [`f_eigenvalue`]`(m, eta)`.
pub fn f_operator(space: CompositeSpace, eta: f64) -> Operator {
    let d = space.total_dim();
    let mut matrix = ndarray::Array2::zeros((d, d));
    for i in 0..d {
        let (_, m, _) = space.decode(i);
        matrix[[i, i]] = num_complex::Complex64::new(f_eigenvalue(m, eta), 0.0);
    }
    Operator::from_matrix(space, matrix).expect("diagonal matrix matches its space")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{self, cos_position_single_mode, guard_levels};
    use crate::linalg;
    use ndarray::Array2;
    use num_complex::Complex64 as C64;
    use proptest::prelude::*;

    #[test]
    #[allow(clippy::approx_constant)] // 0.707107 is the quoted expected value
    fn laguerre_low_orders() {
        assert_eq!(laguerre(0, 7.3), 1.0);
        assert!((laguerre(1, 0.292893) - 0.707107).abs() < 1e-6);
        assert!((laguerre(2, 1.0) - (-0.5)).abs() < 1e-14);
    }

    /// Explicit binomial-sum oracle: L_m(x) = Σ_k C(m,k)·(−x)^k/k!.
    fn laguerre_explicit(m: usize, x: f64) -> f64 {
        let mut acc = 0.0;
        for k in 0..=m {
            let binom = factorial(m) / (factorial(k) * factorial(m - k));
            acc += binom * (-x).powi(k as i32) / factorial(k);
        }
        acc
    }

    #[test]
    fn laguerre_recurrence_matches_explicit_coefficients() {
        for m in 0..=10 {
            for &x in &[0.0, 0.1, 0.292893, 1.0, 2.5, 4.0] {
                let r = laguerre(m, x);
                let e = laguerre_explicit(m, x);
                assert!((r - e).abs() < 1e-12, "m = {m}, x = {x}: {r} vs {e}");
            }
        }
    }

    #[test]
    fn expansion_coefficient_parity_is_exact_zero() {
        for alpha in 0..8usize {
            for beta in 0..8usize {
                if (alpha + beta) % 2 == 1 {
                    for &eta in &[0.05, 0.5412, 1.3] {
                        assert_eq!(expansion_coefficient(alpha, beta, eta).unwrap(), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn expansion_coefficient_vacuum_value() {
        let eta = 0.5412_f64;
        let c = expansion_coefficient(0, 0, eta).unwrap();
        assert!((c - (-eta * eta / 2.0).exp()).abs() < 1e-15);
        assert!((c - 0.863_770_0).abs() < 1e-6);
    }

    #[test]
    fn expansion_coefficient_diagonal_identity() {
        // F(α, α; η) scalar = e^{−η²/2}·(−1)^α·η^{2α}/(α!)²
        for alpha in 0..=6usize {
            for &eta in &[0.1, 0.5412, 0.8] {
                let c = expansion_coefficient(alpha, alpha, eta).unwrap();
                let sign = if alpha % 2 == 0 { 1.0 } else { -1.0 };
                let expected = (-eta * eta / 2.0).exp() * sign * eta.powi(2 * alpha as i32)
                    / (factorial(alpha) * factorial(alpha));
                assert!((c - expected).abs() < 1e-15 * expected.abs().max(1.0));
            }
        }
    }

    #[test]
    fn expansion_coefficient_overflow_guard() {
        assert!(expansion_coefficient(171, 171, 0.1).is_err());
    }

    /// Normally-ordered series oracle:
    /// f(m) = e^{−η²/2}·Σ_{α=0}^{m} (−η²)^α/(α!)² · m!/(m−α)!.
    fn f_series(m: usize, eta: f64) -> f64 {
        let x = eta * eta;
        let mut acc = 0.0;
        for alpha in 0..=m {
            acc += (-x).powi(alpha as i32) / (factorial(alpha) * factorial(alpha))
                * (factorial(m) / factorial(m - alpha));
        }
        (-x / 2.0).exp() * acc
    }

    #[test]
    fn f_eigenvalue_examples() {
        for m in 0..12 {
            assert_eq!(f_eigenvalue(m, 0.0), 1.0);
        }
        assert!((f_eigenvalue(0, 0.2) - (-0.02f64).exp()).abs() < 1e-15);
        assert!((f_eigenvalue(0, 0.2) - 0.980199).abs() < 1e-6);

        let eta = 0.5412;
        let closed = f_eigenvalue(1, eta);
        assert!((closed - f_series(1, eta)).abs() < 1e-14);
        assert!((closed - 0.610_774).abs() < 1e-5);
    }

    #[test]
    fn f_eigenvalue_matches_series_oracle() {
        for m in 0..=10 {
            for &eta in &[0.05, 0.3, 0.5412, 0.9] {
                let a = f_eigenvalue(m, eta);
                let b = f_series(m, eta);
                assert!((a - b).abs() < 1e-11, "m = {m}, eta = {eta}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn f_eigenvalue_is_bounded() {
        for m in 0..=50 {
            for k in 0..=40 {
                let eta = k as f64 * 0.05;
                let v = f_eigenvalue(m, eta);
                assert!((-1.0..=1.0).contains(&v), "m = {m}, eta = {eta}: {v}");
            }
        }
    }

    #[test]
    fn ld_f_squared_examples() {
        assert!((ld_f_squared(0, 0.05) - 0.9975).abs() < 1e-15);
        for m in 0..6 {
            assert_eq!(ld_f_squared(m, 0.0), 1.0);
        }
        let exact_sq = f_eigenvalue(1, 0.05) * f_eigenvalue(1, 0.05);
        assert!((exact_sq - ld_f_squared(1, 0.05)).abs() < 5e-5);
    }

    #[test]
    fn f_operator_is_the_rwa_diagonal_of_the_cosine() {
        let space = CompositeSpace::new(6, 3).unwrap();
        let eta = 0.5412;
        let f_op = f_operator(space, eta);
        let cos_op = fock::cos_position_op(space, eta);
        for (i, _, m, _) in space.basis_iter() {
            assert!(
                (f_op.matrix()[[i, i]].re - f_eigenvalue(m, eta)).abs() < 1e-14,
                "diagonal entry at phonon level {m}"
            );
            assert!(
                (f_op.matrix()[[i, i]] - cos_op.matrix()[[i, i]]).norm() < 1e-10,
                "phonon-diagonal of the cosine at level {m}"
            );
        }
        let id = f_operator(space, 0.0);
        for (i, _, _, _) in space.basis_iter() {
            assert_eq!(id.matrix()[[i, i]], C64::new(1.0, 0.0));
        }
    }

    #[test]
    fn cosine_reconstruction_from_expansion_coefficients() {
        // Σ_{α,β ≤ K} c(α,β;η)·(a†)^α·a^β reproduces cos η(a†+a) entrywise
        // on the retained block.
        for &eta in &[0.2, 0.5412, 0.8] {
            let keep = 6;
            let guard = guard_levels(eta);
            let work = keep + guard;
            let mut ladder = Array2::<C64>::zeros((work, work));
            for m in 1..work {
                ladder[[m - 1, m]] = C64::new((m as f64).sqrt(), 0.0);
            }
            let ladder_dag = crate::linalg::dagger(&ladder);

            let identity = Array2::from_diag(&ndarray::Array1::from_elem(
                work,
                C64::new(1.0, 0.0),
            ));
            let mut pow_a = vec![identity.clone()];
            let mut pow_ad = vec![identity.clone()];
            for k in 1..work {
                pow_a.push(linalg::matmul(&pow_a[k - 1], &ladder));
                pow_ad.push(linalg::matmul(&pow_ad[k - 1], &ladder_dag));
            }

            let mut sum = Array2::<C64>::zeros((work, work));
            for alpha in 0..work {
                for beta in 0..work {
                    let c = expansion_coefficient(alpha, beta, eta).unwrap();
                    if c == 0.0 {
                        continue;
                    }
                    let term = linalg::matmul(&pow_ad[alpha], &pow_a[beta]);
                    sum.zip_mut_with(&term, |acc, t| *acc += t * c);
                }
            }

            let exact = cos_position_single_mode(keep, eta, guard);
            for i in 0..keep {
                for j in 0..keep {
                    assert!(
                        (sum[[i, j]] - exact[[i, j]]).norm() < 1e-8,
                        "eta = {eta}, entry ({i},{j}): {} vs {}",
                        sum[[i, j]],
                        exact[[i, j]]
                    );
                }
            }
        }
    }

    proptest! {
        #[test]
        fn f_eigenvalue_stays_in_unit_interval(m in 0usize..50, eta in 0.0f64..2.0) {
            let v = f_eigenvalue(m, eta);
            prop_assert!((-1.0..=1.0).contains(&v));
        }

        #[test]
        fn parity_zero_for_random_odd_orders(alpha in 0usize..20, beta in 0usize..20, eta in 0.0f64..1.5) {
            if (alpha + beta) % 2 == 1 {
                prop_assert_eq!(expansion_coefficient(alpha, beta, eta).unwrap(), 0.0);
            }
        }
    }
}
