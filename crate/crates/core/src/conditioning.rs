//! Multiplicative functionals `Ψ_g(X) = Π_{x∈X} g(x)` and the induced kernel
//! `B̃(g, Π) = √g Π (1 + (g − 1)Π)^{-1} √g`.
//!
//! Reweighting the projection process `P_Π` by `Ψ_g` and renormalizing gives
//! the determinantal process of `B̃(g, Π)`, which is the orthogonal
//! projection onto `√g · range(Π)`. Invertibility of `1 + (g − 1)Π` fails
//! exactly when some nonzero range function vanishes on the support of `g`,
//! i.e. is supported on `{g = 0}`. (One classical statement of this
//! criterion writes `{g = 1}`; vanishing of `1 − g` is harmless, the
//! obstruction sits where `g` vanishes.)

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::convergence::{convergence_report_indexed, ConvergenceReport};
use crate::dpp::{total_variation, Configuration, DistributionTable, DppDistribution};
use crate::error::{check_len, Error, Result};
use crate::operator::{project_span, spectral_norm, GroundSpace, KernelOperator, Window};
use crate::weights::{Role, WeightFunction};
use crate::{par, rng};

/// Margins at or below this make `1 + (g − 1)Π` numerically singular.
pub const MARGIN_TOL: f64 = 1e-10;

/// Normalizations at or below this make conditioning impossible.
pub const NORMALIZATION_FLOOR: f64 = 1e-12;

/// `Ψ_g(X)`; the empty product is 1.
pub fn psi_g(g: &WeightFunction, x: &Configuration) -> Result<f64> {
    check_len(g.len(), x.n_points())?;
    Ok(g.product_over(x.occupied()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inducibility {
    /// `‖(1 − g)Π‖` in counting form.
    pub norm_1mg_p: f64,
    /// `‖√(1 − g)Π‖`.
    pub norm_sqrt_1mg_p: f64,
    /// `1 − ‖√(1 − g)Π‖`.
    pub margin: f64,
    pub invertible: bool,
}

fn require_g(g: &WeightFunction, p: &KernelOperator) -> Result<()> {
    check_len(p.len(), g.len())?;
    if g.role() != Role::G {
        return Err(Error::Argument("conditioning needs a weight with role g".into()));
    }
    Ok(())
}

fn row_scaled(d: &[f64], m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| d[i] * m[(i, j)])
}

/// Diagnoses invertibility of `1 + (g − 1)Π`. Since
/// `‖(1 − g)Π‖ < 1 ⇔ ‖√(1 − g)Π‖ < 1`, the margin uses the square-root form.
pub fn check_inducibility(g: &WeightFunction, p: &KernelOperator) -> Result<Inducibility> {
    require_g(g, p)?;
    p.require_projection()?;
    let one_minus: Vec<f64> = g.values().iter().map(|v| 1.0 - v).collect();
    let sqrt_one_minus: Vec<f64> = one_minus.iter().map(|v| v.sqrt()).collect();
    let norm_1mg_p = spectral_norm(&row_scaled(&one_minus, p.counting()));
    let norm_sqrt_1mg_p = spectral_norm(&row_scaled(&sqrt_one_minus, p.counting()));
    let margin = 1.0 - norm_sqrt_1mg_p;
    Ok(Inducibility {
        norm_1mg_p,
        norm_sqrt_1mg_p,
        margin,
        invertible: margin > MARGIN_TOL,
    })
}

/// `M = I + (g − 1)Π̂` in counting form.
fn conditioning_matrix(g: &WeightFunction, p: &KernelOperator) -> DMatrix<f64> {
    let gm1: Vec<f64> = g.values().iter().map(|v| v - 1.0).collect();
    DMatrix::identity(p.len(), p.len()) + row_scaled(&gm1, p.counting())
}

/// `B̃(g, Π)`. With `g > 0` everywhere the closed formula is evaluated with
/// an LU solve; if `g` vanishes somewhere the result is computed as the
/// projection onto `√g · range(Π)`.
pub fn induced_kernel(g: &WeightFunction, p: &KernelOperator) -> Result<KernelOperator> {
    let ind = check_inducibility(g, p)?;
    if !ind.invertible {
        return Err(Error::Inducibility { margin: ind.margin });
    }
    if g.has_zero() {
        return projection_onto_weighted_range(g, p);
    }
    let n = p.len();
    let sg = g.sqrt_values();
    // Π̂ M^{-1} = (M^{-T} Π̂)ᵀ, and Mᵀ = I + Π̂ (g − 1)
    let mt = conditioning_matrix(g, p).transpose();
    let z = mt
        .lu()
        .solve(p.counting())
        .ok_or(Error::Inducibility { margin: ind.margin })?;
    let x = z.transpose();
    let b = DMatrix::from_fn(n, n, |i, j| sg[i] * x[(i, j)] * sg[j]);
    KernelOperator::from_counting(p.space().clone(), b)
}

/// Projection onto `√g · range(Π)` built from a range basis of `Π`.
pub fn projection_onto_weighted_range(g: &WeightFunction, p: &KernelOperator) -> Result<KernelOperator> {
    require_g(g, p)?;
    let sg = g.sqrt_values();
    let basis: Vec<Vec<f64>> = p
        .range_functions()?
        .into_iter()
        .map(|u| u.iter().zip(&sg).map(|(a, b)| a * b).collect())
        .collect();
    project_span(&basis, p.space())
}

/// `det(I + (g − 1)Π̂) = ∫ Ψ_g dP_Π`.
pub fn normalization_constant(g: &WeightFunction, p: &KernelOperator) -> Result<f64> {
    require_g(g, p)?;
    p.require_projection()?;
    Ok(conditioning_matrix(g, p).determinant())
}

/// The normalized `Ψ_g`-reweighting of `P_Π`, as a determinantal measure.
pub fn induced_distribution(g: &WeightFunction, p: &KernelOperator) -> Result<DppDistribution> {
    let z = normalization_constant(g, p)?;
    if !(z > NORMALIZATION_FLOOR) {
        return Err(Error::ConditioningImpossible { normalization: z });
    }
    DppDistribution::new(induced_kernel(g, p)?)
}

/// `Ψ_g`-reweighted and renormalized enumeration of `P_Π`.
pub fn reweighted_distribution(g: &WeightFunction, p: &KernelOperator) -> Result<DistributionTable> {
    require_g(g, p)?;
    let law = DppDistribution::new(p.clone())?.brute_force_distribution()?;
    let n = p.len();
    law.reweighted(|mask| {
        let c = Configuration::from_mask(n, mask);
        g.product_over(c.occupied())
    })
}

/// `E_{P_Π}[Ψ_g]` by enumeration.
pub fn expected_psi(g: &WeightFunction, law: &DistributionTable) -> f64 {
    let n = law.n_points();
    law.probabilities()
        .iter()
        .enumerate()
        .map(|(mask, p)| p * g.product_over(Configuration::from_mask(n, mask as u64).occupied()))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdealBound {
    /// `‖√f B̃‖_HS`.
    pub lhs: f64,
    /// `‖(1 + (g − 1)Π̂)^{-1}‖`.
    pub constant: f64,
    /// `‖√f Π‖_HS`.
    pub hs_f_p: f64,
    pub holds: bool,
}

/// Checks `‖√f B̃‖_HS ≤ C ‖√f Π‖_HS` with `C = ‖(1 + (g − 1)Π̂)^{-1}‖`; it
/// follows from `g ≤ 1` and the ideal property of Hilbert–Schmidt operators.
pub fn ideal_bound(g: &WeightFunction, p: &KernelOperator, f: &WeightFunction) -> Result<IdealBound> {
    check_len(p.len(), f.len())?;
    let b = induced_kernel(g, p)?;
    let sf = f.sqrt_values();
    let lhs = row_scaled(&sf, b.counting()).norm();
    let hs_f_p = row_scaled(&sf, p.counting()).norm();
    let sv = conditioning_matrix(g, p).svd(false, false).singular_values;
    let constant = 1.0 / sv.min();
    Ok(IdealBound {
        lhs,
        constant,
        hs_f_p,
        holds: lhs <= constant * hs_f_p * (1.0 + 1e-12) + 1e-14,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityReport {
    pub report: ConvergenceReport,
    /// Inducibility margin of each `g_n`.
    pub margins: Vec<(usize, f64)>,
}

/// `B̃(g_n, Π) → B̃(g, Π)` along `g_n = g + (1 − g)/n`.
pub fn continuity_suite(
    g: &WeightFunction,
    p: &KernelOperator,
    n_list: &[usize],
    windows: &[Window],
) -> Result<ContinuityReport> {
    let target = induced_kernel(g, p)?;
    let mut seq = Vec::with_capacity(n_list.len());
    let mut margins = Vec::with_capacity(n_list.len());
    for &n in n_list {
        if n == 0 {
            return Err(Error::Argument("schedule entries must be positive".into()));
        }
        let gn = WeightFunction::g(
            g.values()
                .iter()
                .map(|v| (v + (1.0 - v) / n as f64).min(1.0))
                .collect(),
        )?;
        margins.push((n, check_inducibility(&gn, p)?.margin));
        seq.push((n, induced_kernel(&gn, p)?));
    }
    Ok(ContinuityReport {
        report: convergence_report_indexed(&seq, &target, windows)?,
        margins,
    })
}

/// Parameters of the randomized oracle battery.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub trials: usize,
    pub min_points: usize,
    pub max_points: usize,
    pub max_rank: usize,
    /// `g = 1 − (1 − g_floor) U` with `U` uniform on `[0, 1)`.
    pub g_floor: f64,
    pub tv_tol: f64,
    pub normalization_tol: f64,
    pub projection_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            trials: 500,
            min_points: 2,
            max_points: 10,
            max_rank: 3,
            g_floor: 0.05,
            tv_tol: 1e-9,
            normalization_tol: 1e-10,
            projection_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleTrial {
    pub trial: usize,
    pub n: usize,
    pub rank: usize,
    /// TV between the reweighted projection law and the law of `B̃`.
    pub tv: f64,
    /// `|det(I + (g − 1)Π̂) − E[Ψ_g]|`.
    pub normalization_error: f64,
    /// `max |B̃ − proj(√g · basis)|` over `μ`-relative entries.
    pub projection_error: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub config: OracleConfig,
    pub seed: u64,
    pub trials: Vec<OracleTrial>,
}

impl OracleSummary {
    pub fn tv_passes(&self) -> usize {
        self.trials.iter().filter(|t| t.tv < self.config.tv_tol).count()
    }

    pub fn normalization_passes(&self) -> usize {
        self.trials
            .iter()
            .filter(|t| t.normalization_error < self.config.normalization_tol)
            .count()
    }

    pub fn projection_passes(&self) -> usize {
        self.trials
            .iter()
            .filter(|t| t.projection_error < self.config.projection_tol)
            .count()
    }

    pub fn all_pass(&self) -> bool {
        let n = self.trials.len();
        self.tv_passes() == n && self.normalization_passes() == n && self.projection_passes() == n
    }

    pub fn max_tv(&self) -> f64 {
        self.trials.iter().fold(0.0, |m, t| m.max(t.tv))
    }

    pub fn max_normalization_error(&self) -> f64 {
        self.trials.iter().fold(0.0, |m, t| m.max(t.normalization_error))
    }

    pub fn max_projection_error(&self) -> f64 {
        self.trials.iter().fold(0.0, |m, t| m.max(t.projection_error))
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{}/{} trials TV < {:e}",
            self.tv_passes(),
            self.trials.len(),
            self.config.tv_tol
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,n,rank,tv,normalization_error,projection_error,margin\n");
        for t in &self.trials {
            out.push_str(&format!(
                "{},{},{},{:.6e},{:.6e},{:.6e},{:.6e}\n",
                t.trial, t.n, t.rank, t.tv, t.normalization_error, t.projection_error, t.margin
            ));
        }
        out
    }
}

/// One random instance of the battery: ground space, range basis and `g`.
pub fn oracle_instance(
    config: &OracleConfig,
    seed: u64,
    trial: usize,
) -> Result<(Arc<GroundSpace>, Vec<Vec<f64>>, WeightFunction)> {
    let mut r = rng::stream(seed, trial as u64);
    let n = r.random_range(config.min_points.max(2)..=config.max_points.max(2));
    let rank = r.random_range(1..=config.max_rank.min(n - 1).max(1));
    let weights: Vec<f64> = (0..n).map(|_| r.random_range(0.5..2.0)).collect();
    let points: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let space = Arc::new(GroundSpace::new(points, weights, format!("oracle-{trial}"))?);
    let basis: Vec<Vec<f64>> = (0..rank)
        .map(|_| (0..n).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let g = WeightFunction::g(
        (0..n)
            .map(|_| 1.0 - (1.0 - config.g_floor) * r.random::<f64>())
            .collect(),
    )?;
    Ok((space, basis, g))
}

fn run_trial(config: &OracleConfig, seed: u64, trial: usize) -> Result<OracleTrial> {
    let (space, basis, g) = oracle_instance(config, seed, trial)?;
    let p = project_span(&basis, &space)?;
    let law = DppDistribution::new(p.clone())?.brute_force_distribution()?;
    let reweighted = law.reweighted(|mask| {
        g.product_over(Configuration::from_mask(space.len(), mask).occupied())
    })?;
    let induced = induced_distribution(&g, &p)?;
    let tv = total_variation(&reweighted, &induced.brute_force_distribution()?);
    let normalization_error = (normalization_constant(&g, &p)? - expected_psi(&g, &law)).abs();
    let sg = g.sqrt_values();
    let weighted: Vec<Vec<f64>> = basis
        .iter()
        .map(|u| u.iter().zip(&sg).map(|(a, b)| a * b).collect())
        .collect();
    let direct = project_span(&weighted, &space)?;
    let projection_error = (induced.kernel().entries() - direct.entries()).amax();
    Ok(OracleTrial {
        trial,
        n: space.len(),
        rank: basis.len(),
        tv,
        normalization_error,
        projection_error,
        margin: check_inducibility(&g, &p)?.margin,
    })
}

/// Runs the battery; trials run in parallel, each on its own random stream.
pub fn oracle_battery(config: &OracleConfig, seed: u64) -> Result<OracleSummary> {
    if config.trials == 0 {
        return Err(Error::Argument("oracle battery needs at least one trial".into()));
    }
    if config.max_points > crate::dpp::MAX_ENUMERATION || config.max_points < 2 {
        return Err(Error::Argument("max_points must lie in [2, 20]".into()));
    }
    if !(config.g_floor > 0.0 && config.g_floor <= 1.0) {
        return Err(Error::Argument("g_floor must lie in (0, 1]".into()));
    }
    let trials = par::try_map_range(config.trials, |t| run_trial(config, seed, t))?;
    Ok(OracleSummary {
        config: config.clone(),
        seed,
        trials,
    })
}
