//! Bessel functions of the first kind for real order `ν > −1` and the hard
//! edge Bessel kernel.

use statrs::function::gamma::gamma;

use super::jacobi::check_parameter;
use crate::error::Result;

/// Arguments up to this value use the power series; larger ones use the
/// Hankel asymptotic expansion.
pub const SERIES_LIMIT: f64 = 12.0;

/// Power-series terms `t_k = (−1)^k (z/2)^{2k+ν} / (k! Γ(k+ν+1))` until they
/// stop contributing.
fn series_terms(nu: f64, z: f64) -> Vec<f64> {
    let h = 0.5 * z;
    let mut t = h.powf(nu) / gamma(nu + 1.0);
    let mut out = vec![t];
    let q = h * h;
    let mut k = 1.0;
    loop {
        t *= -q / (k * (k + nu));
        out.push(t);
        if k > q && t.abs() < 1e-18 * out[0].abs().max(f64::MIN_POSITIVE) {
            break;
        }
        if k > 400.0 {
            break;
        }
        k += 1.0;
    }
    out
}

/// `(J_ν(z), z J_ν′(z))` by the power series.
pub fn series(nu: f64, z: f64) -> (f64, f64) {
    let terms = series_terms(nu, z);
    let j = terms.iter().sum();
    let zdj = terms
        .iter()
        .enumerate()
        .map(|(k, t)| (2.0 * k as f64 + nu) * t)
        .sum();
    (j, zdj)
}

/// `J_ν(z)` by the Hankel asymptotic expansion, truncated at the smallest
/// term.
pub fn asymptotic(nu: f64, z: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut p = 0.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..60 {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            term *= (mu - odd * odd) / (k as f64 * 8.0 * z);
        }
        if term.abs() > last && k > 1 {
            break;
        }
        last = term.abs();
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        if term == 0.0 {
            break;
        }
    }
    let chi = z - (0.5 * nu + 0.25) * std::f64::consts::PI;
    (2.0 / (std::f64::consts::PI * z)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// `(J_ν(z), z J_ν′(z))` by the asymptotic route, with
/// `J_ν′ = (J_{ν−1} − J_{ν+1}) / 2`.
pub fn asymptotic_pair(nu: f64, z: f64) -> (f64, f64) {
    let j = asymptotic(nu, z);
    let dj = 0.5 * (asymptotic(nu - 1.0, z) - asymptotic(nu + 1.0, z));
    (j, z * dj)
}

/// `(J_ν(z), z J_ν′(z))` for `z ≥ 0`.
pub fn bessel_j_pair(nu: f64, z: f64) -> (f64, f64) {
    if z <= SERIES_LIMIT {
        series(nu, z)
    } else {
        asymptotic_pair(nu, z)
    }
}

pub fn bessel_j(nu: f64, z: f64) -> f64 {
    bessel_j_pair(nu, z).0
}

/// Kernel `J̃_s(x, y)` on `(0, ∞)` with Lebesgue reference measure.
pub fn bessel_kernel_value(s: f64, x: f64, y: f64) -> Result<f64> {
    check_parameter(s)?;
    Ok(if x == y {
        bessel_diagonal(s, x)
    } else {
        let (jx, dx) = bessel_j_pair(s, x.sqrt());
        let (jy, dy) = bessel_j_pair(s, y.sqrt());
        (jx * dy - jy * dx) / (2.0 * (x - y))
    })
}

/// `J̃_s(x, x) = ¼ (J_s′(√x)² + (1 − s²/x) J_s(√x)²)`; in the series regime
/// the equivalent `¼ (J² + (Σ 2k t_k)(Σ (2k+2s) t_k)/x)` avoids the
/// cancellation near `x = 0`.
pub fn bessel_diagonal(s: f64, x: f64) -> f64 {
    let z = x.sqrt();
    if z <= SERIES_LIMIT {
        let t = series_terms(s, z);
        let j: f64 = t.iter().sum();
        let a: f64 = t.iter().enumerate().map(|(k, t)| 2.0 * k as f64 * t).sum();
        let b: f64 = t
            .iter()
            .enumerate()
            .map(|(k, t)| (2.0 * k as f64 + 2.0 * s) * t)
            .sum();
        if x == 0.0 {
            return 0.25 * j * j;
        }
        0.25 * (j * j + a * b / x)
    } else {
        let (j, zdj) = asymptotic_pair(s, z);
        let dj = zdj / z;
        0.25 * (dj * dj + (1.0 - s * s / x) * j * j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn reference_values() {
        // tabulated values
        assert_abs_diff_eq!(bessel_j(0.0, 1.0), 0.765_197_686_557_966_6, epsilon = 1e-14);
        assert_abs_diff_eq!(bessel_j(1.0, 2.5), 0.497_094_102_464_274_4, epsilon = 1e-14);
        assert_abs_diff_eq!(bessel_j(0.0, 20.0), 0.167_024_664_340_583_2, epsilon = 1e-12);
    }

    #[test]
    fn three_term_recurrence() {
        for nu in [0.5, 1.0, 2.0, 2.7] {
            for z in [0.7, 4.0, 11.0, 13.0, 30.0] {
                let lhs = bessel_j(nu - 1.0, z) + bessel_j(nu + 1.0, z);
                let rhs = 2.0 * nu / z * bessel_j(nu, z);
                assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn half_integer_closed_form() {
        for &z in &[0.3, 1.0, 5.0, 11.5, 12.5, 25.0, 60.0] {
            let exact = (2.0 / (PI * z)).sqrt() * z.sin();
            let (j, zdj) = bessel_j_pair(0.5, z);
            assert_abs_diff_eq!(j, exact, epsilon = 1e-12);
            let dexact = (2.0 / (PI * z)).sqrt() * (z.cos() - z.sin() / (2.0 * z));
            assert_abs_diff_eq!(zdj / z, dexact, epsilon = 1e-11);
        }
    }

    #[test]
    fn crossover_agreement() {
        for nu in [0.0, 0.5, 1.0, 2.0, 3.0, -0.5] {
            let mut z = 12.0;
            while z <= 16.0 {
                let (sj, sd) = series(nu, z);
                let (aj, ad) = asymptotic_pair(nu, z);
                assert!((sj - aj).abs() < 1e-9, "nu={nu} z={z}");
                assert!((sd - ad).abs() / z < 1e-9, "nu={nu} z={z}");
                z += 0.25;
            }
        }
    }

    #[test]
    fn small_argument_diagonal_constant() {
        for s in [0.0, 0.5, 2.0] {
            let c = 1.0 / (4f64.powf(s + 1.0) * gamma(s + 1.0) * gamma(s + 2.0));
            let x = 1e-8;
            assert!((bessel_diagonal(s, x) / x.powf(s) - c).abs() < 1e-6 * c);
        }
        assert_abs_diff_eq!(bessel_diagonal(0.0, 0.0), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn diagonal_is_limit_of_off_diagonal() {
        for s in [0.0, 0.5, 2.0] {
            for x in [0.5, 3.0, 9.0, 150.0, 400.0] {
                let d = bessel_diagonal(s, x);
                let near = bessel_kernel_value(s, x, x * (1.0 + 1e-6)).unwrap();
                assert!((d - near).abs() < 1e-6, "s={s} x={x} {d} {near}");
            }
        }
    }

    #[test]
    fn kernel_symmetry() {
        let a = bessel_kernel_value(1.3, 2.0, 7.0).unwrap();
        let b = bessel_kernel_value(1.3, 7.0, 2.0).unwrap();
        assert_eq!(a, b);
        assert!(bessel_kernel_value(-1.0, 1.0, 2.0).is_err());
    }
}
