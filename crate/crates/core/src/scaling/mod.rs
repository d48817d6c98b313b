//! Hard-edge scaling: rescaled Jacobi Christoffel–Darboux kernels and their
//! Bessel limit.
//!
//! Convention: weight `(1 − u)^s` on `[-1, 1]`, hard edge at `u = 1`, and the
//! change of variables `u = 1 − x / (2n²)`. The rescaled kernel
//!
//! `K̃_n(x, y) = (1 / 2n²) · K_n(u_x, u_y) · √((1 − u_x)^s (1 − u_y)^s)`
//!
//! is a projection kernel on `(0, 4n²]` with Lebesgue reference measure and
//! converges to `J̃_s(x, y)`, whose Bessel functions are evaluated at `√x`.
//! At `s = 0` both diagonals equal `1/4` at the origin.

pub mod bessel;
pub mod jacobi;
pub mod quadrature;

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::convergence::{convergence_report_indexed, csv_field, ConvergenceReport};
use crate::error::{Error, Result};
use crate::operator::{GroundSpace, KernelOperator, Window};
use crate::par;

pub use bessel::{bessel_diagonal, bessel_j, bessel_kernel_value};
pub use jacobi::{cd_kernel_closed, cd_kernel_sum, jacobi_polynomials};
pub use quadrature::{gauss_jacobi, gauss_legendre, gauss_legendre_on};

/// Right end of the rescaled Jacobi domain for `n` polynomials.
pub fn rescaled_domain_end(n: usize) -> f64 {
    4.0 * (n * n) as f64
}

/// `K̃_n^{(s)}` sampled on `grid`.
pub fn jacobi_cd_kernel(s: f64, n: usize, grid: &Arc<GroundSpace>) -> Result<KernelOperator> {
    jacobi::check_parameter(s)?;
    if n == 0 {
        return Err(Error::Argument("need n ≥ 1 polynomials".into()));
    }
    let end = rescaled_domain_end(n);
    if let Some(&x) = grid.points().iter().find(|&&x| !(x > 0.0 && x <= end)) {
        return Err(Error::Domain(format!(
            "grid point {x} outside the rescaled domain (0, {end}] for n = {n}"
        )));
    }
    let scale = 1.0 / (2.0 * (n * n) as f64);
    let rows = par::try_map_range(grid.len(), |i| {
        let x = grid.points()[i];
        let t = x * scale;
        let factor = (scale * t.powf(s)).sqrt();
        let p = jacobi_polynomials(s, n, 1.0 - t)?;
        Ok::<_, Error>(p.into_iter().map(|v| v * factor).collect::<Vec<f64>>())
    })?;
    let phi = DMatrix::from_fn(grid.len(), n, |i, k| rows[i][k]);
    let entries = &phi * phi.transpose();
    KernelOperator::from_entries(grid.clone(), entries)
}

/// `J̃_s` sampled on `grid` (points must be positive).
pub fn bessel_kernel(s: f64, grid: &Arc<GroundSpace>) -> Result<KernelOperator> {
    jacobi::check_parameter(s)?;
    if let Some(&x) = grid.points().iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::Domain(format!("grid point {x} is not positive")));
    }
    let pts = grid.points();
    let pairs = par::map_slice(pts, |&x| bessel::bessel_j_pair(s, x.sqrt()));
    let diag = par::map_slice(pts, |&x| bessel_diagonal(s, x));
    let n = pts.len();
    let entries = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag[i]
        } else {
            let (jx, dx) = pairs[i];
            let (jy, dy) = pairs[j];
            (jx * dy - jy * dx) / (2.0 * (pts[i] - pts[j]))
        }
    });
    KernelOperator::from_entries(grid.clone(), entries)
}

/// Gauss–Legendre grid on `(0, x_max]` used by the scripted suites.
pub fn scaling_grid(x_max: f64, nodes: usize) -> Result<Arc<GroundSpace>> {
    Ok(Arc::new(GroundSpace::gauss_legendre(0.0, x_max, nodes)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub s: f64,
    pub report: ConvergenceReport,
}

impl ScalingReport {
    /// Columns `s,n,window_id,i1_distance,ratio_to_previous`; the ratio is
    /// `d_n / d_previous` within a window and empty on its first row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,n,window_id,i1_distance,ratio_to_previous\n");
        self.append_rows(&mut out);
        out
    }

    pub(crate) fn append_rows(&self, out: &mut String) {
        for id in self.report.window_ids() {
            let mut prev: Option<f64> = None;
            for (n, d) in self.report.column(&id) {
                let ratio = prev.map(|p| format!("{:.6e}", d / p)).unwrap_or_default();
                let _ = writeln!(out, "{},{},{},{:.17e},{}", self.s, n, csv_field(&id), d, ratio);
                prev = Some(d);
            }
        }
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.report.all_strictly_decreasing()
    }
}

/// CSV for several suites in one table.
pub fn scaling_reports_csv(reports: &[ScalingReport]) -> String {
    let mut out = String::from("s,n,window_id,i1_distance,ratio_to_previous\n");
    for r in reports {
        r.append_rows(&mut out);
    }
    out
}

/// Local trace-norm distances `‖χ_W (K̃_n − J̃_s) χ_W‖₁` for each `n` and window.
pub fn heine_mehler_suite(
    s: f64,
    n_list: &[usize],
    grid: &Arc<GroundSpace>,
    windows: &[Window],
) -> Result<ScalingReport> {
    jacobi::check_parameter(s)?;
    if n_list.is_empty() {
        return Err(Error::Argument("empty n list".into()));
    }
    if n_list.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Argument("n list must be strictly increasing".into()));
    }
    let target = bessel_kernel(s, grid)?;
    let sequence = n_list
        .iter()
        .map(|&n| Ok((n, jacobi_cd_kernel(s, n, grid)?)))
        .collect::<Result<Vec<_>>>()?;
    let report = convergence_report_indexed(&sequence, &target, windows)?;
    Ok(ScalingReport { s, report })
}

/// `max |G − I|` for the Gram matrix of the orthonormal Jacobi polynomials
/// of degree `≤ max_degree`, integrated by Gauss–Legendre after the
/// substitution `u = 1 − 2t²` (independent of the Gauss–Jacobi rule).
pub fn orthonormality_residual(s: f64, max_degree: usize) -> Result<f64> {
    jacobi::check_parameter(s)?;
    let n = max_degree + 1;
    let (t, w) = gauss_legendre_on(0.0, 1.0, 2 * n + 16);
    let mut g = DMatrix::<f64>::zeros(n, n);
    for (t, w) in t.iter().zip(&w) {
        let p = jacobi_polynomials(s, n, 1.0 - 2.0 * t * t)?;
        let jac = 2f64.powf(s + 2.0) * t.powf(2.0 * s + 1.0) * w;
        g += DMatrix::from_fn(n, n, |i, j| jac * p[i] * p[j]);
    }
    Ok((g - DMatrix::identity(n, n)).abs().max())
}

/// Largest disagreement between the power series and the Hankel expansion,
/// `max(|ΔJ_ν|, |Δ(z J_ν′)| / z)`, over `steps + 1` equispaced `z ∈ [lo, hi]`.
pub fn crossover_discrepancy(nu: f64, lo: f64, hi: f64, steps: usize) -> f64 {
    (0..=steps)
        .map(|k| {
            let z = lo + (hi - lo) * k as f64 / steps.max(1) as f64;
            let (sj, sd) = bessel::series(nu, z);
            let (aj, ad) = bessel::asymptotic_pair(nu, z);
            (sj - aj).abs().max((sd - ad).abs() / z)
        })
        .fold(0.0, f64::max)
}
