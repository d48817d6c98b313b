//! Orthonormal Jacobi polynomials for the weight `(1 − u)^s` on `[-1, 1]`
//! and their Christoffel–Darboux kernels.

use crate::error::{Error, Result};

pub(crate) fn check_parameter(s: f64) -> Result<()> {
    if s > -1.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("parameter s = {s} must be finite and exceed -1")))
    }
}

/// `∫_{-1}^{1} (1 − u)^s du`.
pub fn total_mass(s: f64) -> f64 {
    2f64.powf(s + 1.0) / (s + 1.0)
}

/// Monic recurrence coefficients `(a_k, b_k)` for `k < n`, Jacobi parameters
/// `(α, β) = (s, 0)`: `p_{k+1} = (u − a_k) p_k − b_k p_{k−1}`. `b_0` is unused
/// and set to 0.
pub(crate) fn recurrence(s: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (al, be) = (s, 0.0);
    let ab = al + be;
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for k in 0..n {
        let kf = k as f64;
        let t = 2.0 * kf + ab;
        a.push(if k == 0 {
            (be - al) / (ab + 2.0)
        } else {
            (be * be - al * al) / (t * (t + 2.0))
        });
        b.push(if k == 0 {
            0.0
        } else if k == 1 {
            // the generic formula has a removable 0/0 when α + β = -1
            4.0 * (1.0 + al) * (1.0 + be) / ((2.0 + ab).powi(2) * (3.0 + ab))
        } else {
            4.0 * kf * (kf + al) * (kf + be) * (kf + ab) / (t * t * (t + 1.0) * (t - 1.0))
        });
    }
    (a, b)
}

/// Values `p̃_0(u), …, p̃_{n−1}(u)` of the orthonormal polynomials.
pub fn jacobi_polynomials(s: f64, n: usize, u: f64) -> Result<Vec<f64>> {
    check_parameter(s)?;
    if n == 0 {
        return Err(Error::Argument("need at least one polynomial".into()));
    }
    if !(-1.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("u = {u} outside [-1, 1]")));
    }
    Ok(orthonormal_values(s, n, u))
}

fn orthonormal_values(s: f64, n: usize, u: f64) -> Vec<f64> {
    let (a, b) = recurrence(s, n);
    let sb: Vec<f64> = b.iter().map(|v| v.sqrt()).collect();
    let mut p = Vec::with_capacity(n);
    p.push(1.0 / total_mass(s).sqrt());
    for k in 0..n.saturating_sub(1) {
        let prev = if k == 0 { 0.0 } else { sb[k] * p[k - 1] };
        p.push(((u - a[k]) * p[k] - prev) / sb[k + 1]);
    }
    p
}

/// `K_n(u, v) = Σ_{k<n} p̃_k(u) p̃_k(v)`.
pub fn cd_kernel_sum(s: f64, n: usize, u: f64, v: f64) -> Result<f64> {
    let pu = jacobi_polynomials(s, n, u)?;
    let pv = jacobi_polynomials(s, n, v)?;
    Ok(pu.iter().zip(&pv).map(|(a, b)| a * b).sum())
}

/// Two-point closed form
/// `√b_n (p̃_n(u) p̃_{n−1}(v) − p̃_{n−1}(u) p̃_n(v)) / (u − v)`, `u ≠ v`.
pub fn cd_kernel_closed(s: f64, n: usize, u: f64, v: f64) -> Result<f64> {
    check_parameter(s)?;
    if u == v {
        return Err(Error::Domain("closed form undefined on the diagonal".into()));
    }
    let pu = jacobi_polynomials(s, n + 1, u)?;
    let pv = jacobi_polynomials(s, n + 1, v)?;
    let (_, b) = recurrence(s, n + 1);
    Ok(b[n].sqrt() * (pu[n] * pv[n - 1] - pu[n - 1] * pv[n]) / (u - v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::quadrature::{gauss_jacobi, gauss_legendre_on};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    #[test]
    fn constant_and_legendre() {
        for s in [0.0, 0.5, 2.0] {
            let p = jacobi_polynomials(s, 3, 0.3).unwrap();
            assert_abs_diff_eq!(p[0], 1.0 / total_mass(s).sqrt(), epsilon = 1e-15);
        }
        let p = jacobi_polynomials(0.0, 4, 0.7).unwrap();
        assert_abs_diff_eq!(p[1], 1.5f64.sqrt() * 0.7, epsilon = 1e-15);
        // p̃_2 = √(5/2)·(3u² − 1)/2
        assert_abs_diff_eq!(p[2], 2.5f64.sqrt() * (3.0 * 0.49 - 1.0) / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(jacobi_polynomials(-1.0, 3, 0.0), Err(Error::Domain(_))));
        assert!(matches!(jacobi_polynomials(0.0, 3, 1.5), Err(Error::Domain(_))));
    }

    // Independent route: substitute 1 − u = 2t², so (1 − u)^s du = 2^{s+2} t^{2s+1} dt
    // on t ∈ [0, 1], which Gauss–Legendre integrates accurately for s ∈ {0, 0.5, 2}.
    #[test]
    fn orthonormal_under_substituted_legendre() {
        for s in [0.0, 0.5, 2.0] {
            let (t, w) = gauss_legendre_on(0.0, 1.0, 80);
            let n = 21;
            let mut g = DMatrix::<f64>::zeros(n, n);
            for (t, w) in t.iter().zip(&w) {
                let u = 1.0 - 2.0 * t * t;
                let p = jacobi_polynomials(s, n, u).unwrap();
                let jac = 2f64.powf(s + 2.0) * t.powf(2.0 * s + 1.0) * w;
                for i in 0..n {
                    for j in 0..n {
                        g[(i, j)] += jac * p[i] * p[j];
                    }
                }
            }
            let resid = (g - DMatrix::identity(n, n)).abs().max();
            assert!(resid < 1e-10, "s={s} resid={resid}");
        }
    }

    #[test]
    fn orthonormal_under_gauss_jacobi() {
        for s in [0.0, 0.5, 2.0] {
            let (x, w) = gauss_jacobi(s, 24).unwrap();
            let n = 21;
            let mut g = DMatrix::<f64>::zeros(n, n);
            for (u, w) in x.iter().zip(&w) {
                let p = jacobi_polynomials(s, n, *u).unwrap();
                for i in 0..n {
                    for j in 0..n {
                        g[(i, j)] += w * p[i] * p[j];
                    }
                }
            }
            assert!((g - DMatrix::identity(n, n)).abs().max() < 1e-8);
        }
    }

    // Gram–Schmidt of 1, u, …, u^5 in the weighted inner product evaluated by
    // substituted Gauss–Legendre, compared with the recurrence values.
    #[test]
    fn recurrence_matches_gram_schmidt() {
        let s = 0.5;
        let n = 6;
        let (t, w) = gauss_legendre_on(0.0, 1.0, 60);
        let nodes: Vec<f64> = t.iter().map(|t| 1.0 - 2.0 * t * t).collect();
        let mw: Vec<f64> = t
            .iter()
            .zip(&w)
            .map(|(t, w)| 2f64.powf(s + 2.0) * t.powf(2.0 * s + 1.0) * w)
            .collect();
        let probe = [-0.9, -0.2, 0.35, 0.8];
        let inner = |a: &[f64], b: &[f64]| -> f64 { (0..a.len()).map(|k| a[k] * b[k] * mw[k]).sum() };
        // coefficient vectors in the monomial basis, evaluated at the nodes
        let mut basis: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        for d in 0..n {
            let mut coef = vec![0.0; n];
            coef[d] = 1.0;
            let mut vals: Vec<f64> = nodes.iter().map(|u| u.powi(d as i32)).collect();
            for _ in 0..2 {
                for (bc, bv) in &basis {
                    let c = inner(&vals, bv);
                    for k in 0..n {
                        coef[k] -= c * bc[k];
                    }
                    for k in 0..vals.len() {
                        vals[k] -= c * bv[k];
                    }
                }
            }
            let norm = inner(&vals, &vals).sqrt();
            coef.iter_mut().for_each(|c| *c /= norm);
            vals.iter_mut().for_each(|v| *v /= norm);
            basis.push((coef, vals));
        }
        for u in probe {
            let rec = jacobi_polynomials(s, n, u).unwrap();
            for (d, (coef, _)) in basis.iter().enumerate() {
                let gs: f64 = coef.iter().enumerate().map(|(k, c)| c * u.powi(k as i32)).sum();
                // leading coefficients are positive in both constructions
                assert_abs_diff_eq!(rec[d], gs, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn christoffel_darboux_identity() {
        for s in [0.0, 0.5, 2.0] {
            for n in [1, 5, 20] {
                for &(u, v) in &[(0.1, 0.5), (-0.9, 0.95), (0.999, 0.2)] {
                    let a = cd_kernel_sum(s, n, u, v).unwrap();
                    let b = cd_kernel_closed(s, n, u, v).unwrap();
                    assert!((a - b).abs() < 1e-9, "s={s} n={n} {a} {b}");
                }
            }
        }
    }

    #[test]
    fn recurrence_reproduces_three_term_identity() {
        let s = 2.0;
        let (a, b) = recurrence(s, 10);
        let u = 0.42;
        let p = jacobi_polynomials(s, 10, u).unwrap();
        for k in 1..8 {
            let lhs = u * p[k];
            let rhs = b[k + 1].sqrt() * p[k + 1] + a[k] * p[k] + b[k].sqrt() * p[k - 1];
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }
}
