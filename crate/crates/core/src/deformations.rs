//! Finite-rank extensions of projections, projections onto weighted
//! subspaces `√g (L + V)`, and the exhaustion suite `Π^{E₀∪B_n} → Q`.
//!
//! The extension of a projection `Π` by vectors `v_1, …, v_m` is built one
//! vector at a time: `v = β ṽ + v̂` with `v̂ ∈ range` of the current
//! projection and `ṽ` the normalized residual, and `Π ↦ Π + ṽ ṽᵀ`.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conditioning::induced_kernel;
use crate::convergence::{convergence_report_indexed, csv_field, ConvergenceReport};
use crate::error::{check_len, Error, Result};
use crate::operator::{
    angle_to_columns, factored_trace_distance, orthonormalize, principal_angle, project_span,
    residual_against, GroundSpace, KernelOperator, Window,
};
use crate::par;
use crate::tags::{FunctionSpec, FunctionTag};
use crate::weights::WeightFunction;

/// Default lower bound on angles between added vectors and the current span.
pub const DEFAULT_MIN_ANGLE: f64 = 0.05;

fn push_column(m: DMatrix<f64>, c: &DVector<f64>) -> DMatrix<f64> {
    let k = m.ncols();
    let mut m = m.insert_column(k, 0.0);
    m.set_column(k, c);
    m
}

/// Appends normalized residuals of `vs` (counting form) to the orthonormal
/// columns `q`, checking each angle against `min_angle`. Returns only the
/// new columns.
fn extension_columns(q: &DMatrix<f64>, vs: &[DVector<f64>], min_angle: f64) -> Result<DMatrix<f64>> {
    let n = q.nrows();
    let mut span = q.clone();
    let mut extra = DMatrix::zeros(n, 0);
    for (index, v) in vs.iter().enumerate() {
        check_len(n, v.len())?;
        let norm = v.norm();
        if !(norm > 0.0) {
            return Err(Error::Domain(format!("vector {index} is zero")));
        }
        let angle = angle_to_columns(v, &span);
        if !(angle >= min_angle) {
            return Err(Error::AngleDegeneracy {
                index,
                angle,
                min_angle,
            });
        }
        let r = residual_against(v, &span);
        let unit = &r / r.norm();
        span = push_column(span, &unit);
        extra = push_column(extra, &unit);
    }
    Ok(extra)
}

/// Projection onto `range(P) ⊕ span(vs)`.
pub fn extend_projection(p: &KernelOperator, vs: &[Vec<f64>], min_angle: f64) -> Result<KernelOperator> {
    let q = p.range_basis()?;
    let hats = vs
        .iter()
        .map(|v| p.space().to_counting(v))
        .collect::<Result<Vec<_>>>()?;
    let e = extension_columns(&q, &hats, min_angle)?;
    KernelOperator::from_counting(p.space().clone(), p.counting() + &e * e.transpose())
}

/// `L`, the extra vectors `V`, the core window `E₀` and the angle bound.
#[derive(Debug, Clone)]
pub struct DeformationModel {
    space: Arc<GroundSpace>,
    base: Vec<Vec<f64>>,
    extra: Vec<Vec<f64>>,
    core_window: Window,
    min_angle: f64,
}

impl DeformationModel {
    /// Validates shapes and the angle condition of every `v_k` against
    /// `span(L, v_1, …, v_{k−1})`.
    pub fn new(
        space: Arc<GroundSpace>,
        base: Vec<Vec<f64>>,
        extra: Vec<Vec<f64>>,
        core_window: Window,
        min_angle: f64,
    ) -> Result<Self> {
        if !(min_angle > 0.0) {
            return Err(Error::Argument("min_angle must be positive".into()));
        }
        for v in base.iter().chain(&extra) {
            check_len(space.len(), v.len())?;
        }
        if core_window.indices().last().is_some_and(|&i| i >= space.len()) {
            return Err(Error::Argument("core window outside the ground space".into()));
        }
        let model = Self {
            space,
            base,
            extra,
            core_window,
            min_angle,
        };
        model.extended_columns()?;
        Ok(model)
    }

    pub fn space(&self) -> &Arc<GroundSpace> {
        &self.space
    }

    pub fn base(&self) -> &[Vec<f64>] {
        &self.base
    }

    pub fn extra(&self) -> &[Vec<f64>] {
        &self.extra
    }

    pub fn core_window(&self) -> &Window {
        &self.core_window
    }

    pub fn min_angle(&self) -> f64 {
        self.min_angle
    }

    fn hats(&self, fs: &[Vec<f64>]) -> Result<Vec<DVector<f64>>> {
        fs.iter().map(|u| self.space.to_counting(u)).collect()
    }

    fn base_columns(&self) -> Result<DMatrix<f64>> {
        if self.base.is_empty() {
            return Ok(DMatrix::zeros(self.space.len(), 0));
        }
        orthonormalize(&self.hats(&self.base)?)
    }

    fn extended_columns(&self) -> Result<DMatrix<f64>> {
        extension_columns(&self.base_columns()?, &self.hats(&self.extra)?, self.min_angle)
    }

    /// `Q`, the projection onto `L`.
    pub fn base_projection(&self) -> Result<KernelOperator> {
        project_span(&self.base, &self.space)
    }

    /// Projection onto `H = L + V`.
    pub fn full_projection(&self) -> Result<KernelOperator> {
        extend_projection(&self.base_projection()?, &self.extra, self.min_angle)
    }
}

#[derive(Debug, Clone)]
pub struct SqrtgProjection {
    /// `Π^g`, the projection onto `√g (L + V)`.
    pub projection: KernelOperator,
    /// `Q^g = B̃(g, Q)`.
    pub induced: KernelOperator,
    /// `P̃`, the projection onto the complement of `√g L` inside `√g H`.
    pub complement: KernelOperator,
    /// `max |Π^g − proj(√g L ∪ √g V)|` over counting-form entries.
    pub crosscheck_residual: f64,
}

/// Tolerance of the internal cross-check between the split `Q^g + P̃` and a
/// direct projection onto the concatenated weighted basis.
pub const CROSSCHECK_TOL: f64 = 1e-8;

/// `Π^g = Q^g + P̃`, cross-checked against the projection onto the
/// concatenated basis `√g L ∪ √g V`.
pub fn sqrtg_subspace_projection(model: &DeformationModel, g: &WeightFunction) -> Result<SqrtgProjection> {
    let space = model.space();
    check_len(space.len(), g.len())?;
    let q = model.base_projection()?;
    let induced = induced_kernel(g, &q)?;
    let a = induced.range_basis()?;
    let sg = g.sqrt_values();
    let weighted = |u: &Vec<f64>| -> Vec<f64> { u.iter().zip(&sg).map(|(a, b)| a * b).collect() };
    let wv: Vec<Vec<f64>> = model.extra().iter().map(weighted).collect();
    let hats = wv
        .iter()
        .map(|u| space.to_counting(u))
        .collect::<Result<Vec<_>>>()?;
    let e = extension_columns(&a, &hats, model.min_angle())?;
    let complement = KernelOperator::from_counting(space.clone(), &e * e.transpose())?;
    let projection = KernelOperator::from_counting(space.clone(), induced.counting() + complement.counting())?;

    let concatenated: Vec<Vec<f64>> = model.base().iter().map(weighted).chain(wv).collect();
    let direct = project_span(&concatenated, space)?;
    let crosscheck_residual = (projection.counting() - direct.counting()).amax();
    if !(crosscheck_residual <= CROSSCHECK_TOL) {
        return Err(Error::Contract(format!(
            "weighted projection split disagrees with direct projection by {crosscheck_residual:.3e}"
        )));
    }
    Ok(SqrtgProjection {
        projection,
        induced,
        complement,
        crosscheck_residual,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationReport {
    pub report: ConvergenceReport,
    /// Every window column strictly decreasing.
    pub decreasing: bool,
}

/// Local trace distances of `extend_projection(P_n, v^{(n)})` to
/// `extend_projection(P, v)`. The sequence is built in schedule order, so a
/// degenerating angle aborts at the first offending row.
pub fn perturbation_convergence_suite(
    schedule: &[usize],
    pn: &[KernelOperator],
    vn: &[Vec<Vec<f64>>],
    p: &KernelOperator,
    v: &[Vec<f64>],
    windows: &[Window],
    min_angle: f64,
) -> Result<PerturbationReport> {
    if schedule.len() != pn.len() || schedule.len() != vn.len() {
        return Err(Error::Argument("schedule, projections and vectors differ in length".into()));
    }
    let mut seq = Vec::with_capacity(schedule.len());
    for ((&n, pk), vk) in schedule.iter().zip(pn).zip(vn) {
        if vk.len() != v.len() {
            return Err(Error::Argument(format!("row {n}: expected {} vectors", v.len())));
        }
        seq.push((n, extend_projection(pk, vk, min_angle)?));
    }
    let target = extend_projection(p, v, min_angle)?;
    let report = convergence_report_indexed(&seq, &target, windows)?;
    let decreasing = report.all_strictly_decreasing();
    Ok(PerturbationReport { report, decreasing })
}

/// Scripted perturbation experiment: `L_n = span(ℓ_k + ε_n δ_k)`,
/// `v^{(n)} = v + ε_n δ_v`, `ε_n = amplitude · n^{−decay}` on a midpoint
/// grid of `(0, 1]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationScript {
    pub points: usize,
    pub base: Vec<FunctionSpec>,
    pub base_directions: Vec<FunctionSpec>,
    pub extra: Vec<FunctionSpec>,
    pub extra_directions: Vec<FunctionSpec>,
    pub schedule: Vec<usize>,
    pub amplitude: f64,
    pub decay: f64,
    /// Windows as closed intervals.
    pub windows: Vec<[f64; 2]>,
    pub min_angle: f64,
}

impl Default for PerturbationScript {
    fn default() -> Self {
        let tag = |t: FunctionTag| FunctionSpec::Tag(t);
        Self {
            points: 64,
            base: vec![
                tag(FunctionTag::Constant(1.0)),
                tag(FunctionTag::Power(1.0)),
                tag(FunctionTag::Power(2.0)),
            ],
            base_directions: vec![
                tag(FunctionTag::Sin(7.0)),
                tag(FunctionTag::Cos(5.0)),
                tag(FunctionTag::Exp(1.0)),
            ],
            extra: vec![tag(FunctionTag::Cos(3.0 * std::f64::consts::PI))],
            extra_directions: vec![tag(FunctionTag::Sin(2.0))],
            schedule: vec![2, 4, 8, 16, 32, 64],
            amplitude: 1.0,
            decay: 4.0,
            windows: vec![[0.0, 1.0], [0.0, 0.5]],
            min_angle: DEFAULT_MIN_ANGLE,
        }
    }
}

fn interval_window(space: &GroundSpace, w: [f64; 2]) -> Window {
    Window::between(space, w[0], w[1]).with_description(format!("[{},{}]", w[0], w[1]))
}

fn perturbed(base: &[Vec<f64>], dirs: &[Vec<f64>], eps: f64) -> Vec<Vec<f64>> {
    base.iter()
        .zip(dirs)
        .map(|(b, d)| b.iter().zip(d).map(|(x, y)| x + eps * y).collect())
        .collect()
}

/// Runs a [`PerturbationScript`].
pub fn scripted_perturbation_suite(script: &PerturbationScript) -> Result<PerturbationReport> {
    if script.base.len() != script.base_directions.len() || script.extra.len() != script.extra_directions.len() {
        return Err(Error::Argument("every basis function needs a perturbation direction".into()));
    }
    let space = Arc::new(GroundSpace::midpoint(0.0, 1.0, script.points)?);
    let sample = |fs: &[FunctionSpec]| -> Result<Vec<Vec<f64>>> { fs.iter().map(|f| f.sample(&space)).collect() };
    let (l, dl) = (sample(&script.base)?, sample(&script.base_directions)?);
    let (v, dv) = (sample(&script.extra)?, sample(&script.extra_directions)?);
    let p = project_span(&l, &space)?;
    let mut pn = Vec::new();
    let mut vn = Vec::new();
    for &n in &script.schedule {
        if n == 0 {
            return Err(Error::Argument("schedule entries must be positive".into()));
        }
        let eps = script.amplitude * (n as f64).powf(-script.decay);
        pn.push(project_span(&perturbed(&l, &dl, eps), &space)?);
        vn.push(perturbed(&v, &dv, eps));
    }
    let windows: Vec<Window> = script.windows.iter().map(|&w| interval_window(&space, w)).collect();
    perturbation_convergence_suite(&script.schedule, &pn, &vn, &p, &v, &windows, script.min_angle)
}

/// One row of the exhaustion schedule: a grid level with its model and the
/// window `B_n`; the conditioning weight is `χ_{E₀ ∪ B_n}`.
#[derive(Debug, Clone)]
pub struct ExhaustionLevel {
    pub n: usize,
    pub model: DeformationModel,
    pub b_window: Window,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExhaustionDiagnostics {
    pub n: usize,
    pub grid_points: usize,
    /// Smallest principal angle between `χ L` and `χ V`, `χ = χ_{E₀∪B_n}`.
    pub angle: f64,
    /// Whether every sequential angle stayed at or above `α₀`.
    pub angle_ok: bool,
    /// Largest weighted norm `‖χ v_k‖` (divergence of `V` under refinement).
    pub v_norm: f64,
    /// `‖P̃^{(n)} φ‖`.
    pub p_tilde_phi: f64,
    /// `‖(Π^{E₀∪B_n} − Q) φ‖`.
    pub delta_phi: f64,
    /// `inf_{E₀} g_n`.
    pub g_inf_core: f64,
    /// `sup_{E₀∪B_n} |1 − g_n|`.
    pub g_sup_dev: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExhaustionReport {
    pub report: ConvergenceReport,
    pub diagnostics: Vec<ExhaustionDiagnostics>,
    /// Every probe column strictly decreases over the rows after the last
    /// angle violation.
    pub decreasing: bool,
}

impl ExhaustionReport {
    pub fn final_p_tilde_phi(&self) -> Option<f64> {
        self.diagnostics.last().map(|d| d.p_tilde_phi)
    }

    pub fn diagnostics_csv(&self) -> String {
        let mut out =
            String::from("n,grid_points,angle,angle_ok,v_norm,p_tilde_phi,delta_phi,g_inf_core,g_sup_dev\n");
        for d in &self.diagnostics {
            let _ = writeln!(
                out,
                "{},{},{:.10e},{},{:.10e},{:.10e},{:.10e},{},{}",
                d.n, d.grid_points, d.angle, d.angle_ok, d.v_norm, d.p_tilde_phi, d.delta_phi, d.g_inf_core, d.g_sup_dev
            );
        }
        out
    }
}

/// Probe windows and the probe function, as intervals (grids differ per row).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExhaustionProbes {
    pub windows: Vec<[f64; 2]>,
    /// `φ = χ_{[a,b]}`.
    pub phi: [f64; 2],
}

fn exhaustion_row(
    level: &ExhaustionLevel,
    probes: &ExhaustionProbes,
) -> Result<(Vec<(String, f64)>, ExhaustionDiagnostics)> {
    let model = &level.model;
    let space = model.space();
    let n = space.len();
    let chi = level.b_window.union(model.core_window());
    let g = chi.indicator(n);
    let mask = |v: &DVector<f64>| -> DVector<f64> { DVector::from_fn(n, |i, _| g[i] * v[i]) };

    let base_hats = model.hats(model.base())?;
    let q = orthonormalize(&base_hats)?;
    let a = orthonormalize(&base_hats.iter().map(mask).collect::<Vec<_>>())?;

    let extra_hats: Vec<DVector<f64>> = model.hats(model.extra())?.iter().map(mask).collect();
    let v_norm = extra_hats.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let angle = if extra_hats.is_empty() {
        std::f64::consts::FRAC_PI_2
    } else {
        principal_angle(&a, &orthonormalize(&extra_hats)?)
    };
    let mut angle_ok = angle >= model.min_angle();
    let mut span = a.clone();
    let mut extra = DMatrix::zeros(n, 0);
    for v in &extra_hats {
        let ang = angle_to_columns(v, &span);
        if !(ang >= model.min_angle()) {
            angle_ok = false;
        }
        let r = residual_against(v, &span);
        let rn = r.norm();
        if !(rn > 1e-14 * v.norm()) {
            continue;
        }
        let unit = r / rn;
        span = push_column(span, &unit);
        extra = push_column(extra, &unit);
    }

    let distances = probes
        .windows
        .iter()
        .map(|&w| {
            let win = interval_window(space, w);
            (win.description().to_string(), factored_trace_distance(&span, &q, &win))
        })
        .collect();

    let phi_window = Window::between(space, probes.phi[0], probes.phi[1]);
    let phi = space.to_counting(&phi_window.indicator(n))?;
    let p_tilde_phi = (extra.transpose() * &phi).norm();
    let delta = &span * (span.transpose() * &phi) - &q * (q.transpose() * &phi);
    let core = model.core_window();
    let g_inf_core = core.indices().iter().map(|&i| g[i]).fold(f64::INFINITY, f64::min);
    let g_sup_dev = chi.indices().iter().map(|&i| (1.0 - g[i]).abs()).fold(0.0, f64::max);
    Ok((
        distances,
        ExhaustionDiagnostics {
            n: level.n,
            grid_points: n,
            angle,
            angle_ok,
            v_norm,
            p_tilde_phi,
            delta_phi: delta.norm(),
            g_inf_core,
            g_sup_dev,
        },
    ))
}

/// `‖χ_W (Π^{E₀∪B_n} − Q) χ_W‖₁` on each probe window, computed from
/// orthonormal factors so that fine grids never need dense `n × n` work.
/// Angle violations are recorded per row and do not stop the suite.
pub fn exhaustion_suite(levels: &[ExhaustionLevel], probes: &ExhaustionProbes) -> Result<ExhaustionReport> {
    if levels.is_empty() {
        return Err(Error::Argument("exhaustion suite needs at least one level".into()));
    }
    for pair in levels.windows(2) {
        if pair[1].n <= pair[0].n {
            return Err(Error::Argument("exhaustion levels must be labelled increasingly".into()));
        }
    }
    let rows = par::try_map_range(levels.len(), |i| exhaustion_row(&levels[i], probes))?;
    let mut report = ConvergenceReport::default();
    let mut diagnostics = Vec::with_capacity(rows.len());
    for (distances, diag) in rows {
        for (id, d) in distances {
            report.push(diag.n, id, d);
        }
        diagnostics.push(diag);
    }
    let start = diagnostics
        .iter()
        .rposition(|d| !d.angle_ok)
        .map_or(0, |i| i + 1);
    let tail: Vec<usize> = diagnostics[start..].iter().map(|d| d.n).collect();
    let decreasing = report.window_ids().iter().all(|id| {
        report
            .column(id)
            .into_iter()
            .filter(|(n, _)| tail.contains(n))
            .collect::<Vec<_>>()
            .windows(2)
            .all(|p| p[1].1 < p[0].1)
    });
    Ok(ExhaustionReport {
        report,
        diagnostics,
        decreasing,
    })
}

/// Scripted exhaustion experiment. Level `k` uses a geometric grid of `2^k`
/// cells on `[2^{−bottom·k}, 1]`, `B_k = [b_factor · 2^{−bottom·k}, ½)`, so
/// that `E₀ ∪ B_k` grows toward the singular endpoint as `k` increases.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExhaustionScript {
    pub levels: Vec<u32>,
    pub bottom: f64,
    pub b_factor: f64,
    pub base: Vec<FunctionSpec>,
    pub extra: Vec<FunctionSpec>,
    pub core: [f64; 2],
    pub probes: Vec<[f64; 2]>,
    pub phi: [f64; 2],
    pub min_angle: f64,
}

impl Default for ExhaustionScript {
    fn default() -> Self {
        let bessel = |scale: f64| FunctionSpec::Tag(FunctionTag::Bessel { order: 1.0, scale });
        Self {
            levels: vec![8, 9, 10, 11, 12],
            bottom: 4.0,
            b_factor: 16.0,
            base: vec![bessel(2.0), bessel(5.0), bessel(8.0), bessel(11.0)],
            extra: vec![FunctionSpec::Tag(FunctionTag::Power(-0.75))],
            core: [0.5, 1.0],
            probes: vec![[0.5, 1.0], [0.1, 1.0]],
            phi: [0.5, 1.0],
            min_angle: DEFAULT_MIN_ANGLE,
        }
    }
}

impl ExhaustionScript {
    pub fn build_levels(&self) -> Result<Vec<ExhaustionLevel>> {
        self.levels
            .iter()
            .map(|&k| {
                if !(1..=20).contains(&k) {
                    return Err(Error::Argument(format!("grid level {k} outside 1..=20")));
                }
                let x_min = 2f64.powf(-self.bottom * k as f64);
                let space = Arc::new(GroundSpace::geometric(x_min, 1.0, 1usize << k)?);
                let base = self.base.iter().map(|f| f.sample(&space)).collect::<Result<Vec<_>>>()?;
                let extra = self.extra.iter().map(|f| f.sample(&space)).collect::<Result<Vec<_>>>()?;
                let core = Window::between(&space, self.core[0], self.core[1]).with_description("E0");
                let b_lo = self.b_factor * x_min;
                let b_window = Window::between(&space, b_lo, self.core[0])
                    .with_description(format!("B[{b_lo:e},{})", self.core[0]));
                let b_window = Window::new(
                    &space,
                    b_window.indices().iter().copied().filter(|&i| space.points()[i] < self.core[0]),
                    b_window.description().to_string(),
                )?;
                let model = DeformationModel::new(space, base, extra, core, self.min_angle)?;
                Ok(ExhaustionLevel {
                    n: k as usize,
                    model,
                    b_window,
                })
            })
            .collect()
    }

    pub fn probes(&self) -> ExhaustionProbes {
        ExhaustionProbes {
            windows: self.probes.clone(),
            phi: self.phi,
        }
    }

    pub fn run(&self) -> Result<ExhaustionReport> {
        exhaustion_suite(&self.build_levels()?, &self.probes())
    }
}

/// CSV of a perturbation or exhaustion report with a verdict column.
pub fn report_with_verdict_csv(report: &ConvergenceReport, decreasing: bool) -> String {
    let mut out = String::from("n,window_id,distance,decreasing\n");
    for r in &report.rows {
        let _ = writeln!(out, "{},{},{:.17e},{}", r.n, csv_field(&r.window_id), r.distance, decreasing);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn unit(n: usize) -> Arc<GroundSpace> {
        Arc::new(GroundSpace::counting(n).unwrap())
    }

    fn e(n: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    #[test]
    fn extend_examples() {
        let s = unit(2);
        let zero = KernelOperator::zeros(s.clone());
        let p = extend_projection(&zero, &[e(2, 0)], DEFAULT_MIN_ANGLE).unwrap();
        assert_eq!(p.counting(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));

        let p1 = project_span(&[e(2, 0)], &s).unwrap();
        let full = extend_projection(&p1, &[vec![1.0, 1.0]], DEFAULT_MIN_ANGLE).unwrap();
        assert!((full.counting() - DMatrix::identity(2, 2)).amax() < 1e-15);

        let err = extend_projection(&p1, &[vec![2.0, 0.0]], DEFAULT_MIN_ANGLE).unwrap_err();
        assert!(matches!(err, Error::AngleDegeneracy { index: 0, .. }));
    }

    #[test]
    fn extension_is_a_projection_with_exact_rank() {
        let s = Arc::new(GroundSpace::midpoint(0.0, 1.0, 30).unwrap());
        let p = project_span(&[s.sample(|x| x), s.sample(|x| x.cos())], &s).unwrap();
        let k = extend_projection(&p, &[s.sample(|x| x * x * x), s.sample(|x| (5.0 * x).sin())], DEFAULT_MIN_ANGLE)
            .unwrap();
        assert!(k.projection_defect() < 1e-10);
        let ones = k.spectrum().iter().filter(|&&l| (l - 1.0).abs() < 1e-8).count();
        let zeros = k.spectrum().iter().filter(|&&l| l.abs() < 1e-8).count();
        assert_eq!((ones, zeros), (4, 26));
    }

    #[test]
    fn sqrtg_examples() {
        let s = unit(3);
        let core = Window::full(&s);
        let model = DeformationModel::new(s.clone(), vec![e(3, 0)], vec![e(3, 1)], core.clone(), DEFAULT_MIN_ANGLE).unwrap();
        let g = WeightFunction::g(vec![1.0, 1.0, 0.5]).unwrap();
        let r = sqrtg_subspace_projection(&model, &g).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((r.projection.counting() - expected).amax() < 1e-14);

        let empty_v = DeformationModel::new(s.clone(), vec![vec![1.0, 2.0, 1.0]], vec![], core.clone(), 0.05).unwrap();
        let g = WeightFunction::g(vec![0.3, 0.9, 0.6]).unwrap();
        let r = sqrtg_subspace_projection(&empty_v, &g).unwrap();
        let direct = induced_kernel(&g, &empty_v.base_projection().unwrap()).unwrap();
        assert!((r.projection.counting() - direct.counting()).amax() < 1e-14);

        let model = DeformationModel::new(s.clone(), vec![vec![1.0, 2.0, 1.0]], vec![vec![0.0, 1.0, -1.0]], core, 0.05).unwrap();
        let one = WeightFunction::g(vec![1.0; 3]).unwrap();
        let r = sqrtg_subspace_projection(&model, &one).unwrap();
        assert!((r.projection.counting() - model.full_projection().unwrap().counting()).amax() < 1e-12);
    }

    #[test]
    fn perturbation_examples() {
        let s = Arc::new(GroundSpace::midpoint(0.0, 1.0, 12).unwrap());
        let p = project_span(&[s.sample(|x| 1.0 + x)], &s).unwrap();
        let v = vec![s.sample(|x| (6.0 * x).cos())];
        let w = [Window::full(&s)];
        let constant = perturbation_convergence_suite(&[1, 2], &[p.clone(), p.clone()], &[v.clone(), v.clone()], &p, &v, &w, 0.05)
            .unwrap();
        assert!(constant.report.rows.iter().all(|r| r.distance < 1e-14));

        // v ⊥ range(P), v^{(n)} = v + e_j / n
        let s = unit(4);
        let p = project_span(&[e(4, 0)], &s).unwrap();
        let v = vec![e(4, 1)];
        let schedule = [1, 2, 4, 8, 16];
        let vn: Vec<Vec<Vec<f64>>> = schedule
            .iter()
            .map(|&n| {
                let mut u = e(4, 1);
                u[2] += 1.0 / n as f64;
                vec![u]
            })
            .collect();
        let pn = vec![p.clone(); schedule.len()];
        let r = perturbation_convergence_suite(&schedule, &pn, &vn, &p, &v, &[Window::full(&s)], 0.05).unwrap();
        assert!(r.decreasing);
        // explicit rank-one difference: ṽ_n = (e₂ + t e₃)/√(1+t²) with t = 1/n, and
        // ‖ṽṽᵀ − e₂e₂ᵀ‖₁ = 2 sin θ with tan θ = t
        for row in &r.report.rows {
            let t = 1.0 / row.n as f64;
            assert_abs_diff_eq!(row.distance, 2.0 * t.atan().sin(), epsilon = 1e-12);
        }

        // v^{(n)} → v ∈ range(P)
        let vn: Vec<Vec<Vec<f64>>> = schedule
            .iter()
            .map(|&n| {
                let mut u = e(4, 0);
                u[1] = 1.0 / n as f64;
                vec![u]
            })
            .collect();
        let err = perturbation_convergence_suite(&schedule, &pn, &vn, &p, &[e(4, 0)], &[Window::full(&s)], 0.05).unwrap_err();
        assert!(matches!(err, Error::AngleDegeneracy { .. }));
    }

    #[test]
    fn orthogonal_vectors_commute() {
        let s = Arc::new(GroundSpace::midpoint(0.0, 1.0, 10).unwrap());
        let p = project_span(&[s.sample(|_| 1.0)], &s).unwrap();
        let a = s.sample(|x| (2.0 * std::f64::consts::PI * x).cos());
        let b = s.sample(|x| (4.0 * std::f64::consts::PI * x).cos());
        let ab = extend_projection(&p, &[a.clone(), b.clone()], 0.05).unwrap();
        let ba = extend_projection(&p, &[b, a], 0.05).unwrap();
        assert!((ab.counting() - ba.counting()).amax() < 1e-10);
    }

    fn small_script() -> ExhaustionScript {
        ExhaustionScript {
            levels: vec![5, 6, 7],
            ..ExhaustionScript::default()
        }
    }

    #[test]
    fn exhaustion_without_v_is_projection_onto_masked_base() {
        let script = ExhaustionScript {
            extra: vec![],
            ..small_script()
        };
        let r = script.run().unwrap();
        assert!(r.diagnostics.iter().all(|d| d.p_tilde_phi == 0.0));
        // only the cells below B_n are masked, so the distance is tiny
        assert!(r.report.rows.iter().all(|row| row.distance < 1e-5), "{:?}", r.report.rows);
        for level in script.build_levels().unwrap() {
            let chi = level.b_window.union(level.model.core_window());
            let g = WeightFunction::indicator(&chi, level.model.space().len());
            let q = level.model.base_projection().unwrap();
            let masked = induced_kernel(&g, &q).unwrap();
            let w = interval_window(level.model.space(), [0.1, 1.0]);
            let d = masked.difference(&q).unwrap().local_trace_norm(&w, &w).value;
            let got = r.report.column("[0.1,1]").into_iter().find(|&(n, _)| n == level.n).unwrap().1;
            assert_abs_diff_eq!(got, d, epsilon = 1e-12);
        }
    }

    #[test]
    fn exhaustion_with_diverging_v_decreases() {
        let r = small_script().run().unwrap();
        assert!(r.decreasing, "{:?}", r.report.rows);
        assert!(r.diagnostics.windows(2).all(|p| p[1].v_norm > p[0].v_norm));
        assert!(r.diagnostics.iter().all(|d| d.angle_ok && d.g_inf_core == 1.0 && d.g_sup_dev == 0.0));
    }

    #[test]
    fn square_integrable_v_does_not_converge() {
        let script = ExhaustionScript {
            extra: vec![FunctionSpec::Tag(FunctionTag::Indicator(0.6, 0.9))],
            ..small_script()
        };
        let r = script.run().unwrap();
        // P̃ tends to the fixed projection onto the normalized residual of v
        // against L, which is computed directly on the finest grid
        let finest = script.build_levels().unwrap().pop().unwrap();
        let q = finest.model.base_projection().unwrap();
        let full = finest.model.full_projection().unwrap();
        let w = interval_window(finest.model.space(), [0.5, 1.0]);
        let direct = full.difference(&q).unwrap().local_trace_norm(&w, &w).value;
        let last = r.report.column("[0.5,1]").last().unwrap().1;
        assert_abs_diff_eq!(last, direct, epsilon = 1e-9);
        assert!(r.report.column("[0.1,1]").iter().all(|&(_, d)| d > 0.5), "{:?}", r.report.rows);
    }

    #[test]
    fn factored_route_matches_dense_on_small_grid() {
        let script = ExhaustionScript {
            levels: vec![6],
            ..ExhaustionScript::default()
        };
        let level = &script.build_levels().unwrap()[0];
        let r = script.run().unwrap();
        let chi = level.b_window.union(level.model.core_window());
        let g = WeightFunction::indicator(&chi, level.model.space().len());
        let dense = sqrtg_subspace_projection(&level.model, &g).unwrap();
        let q = level.model.base_projection().unwrap();
        let w = interval_window(level.model.space(), [0.1, 1.0]);
        let d = dense.projection.difference(&q).unwrap().local_trace_norm(&w, &w).value;
        assert_abs_diff_eq!(r.report.column("[0.1,1]")[0].1, d, epsilon = 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn decomposition_is_orthogonal(seed in 0u64..100_000) {
            let mut r = crate::rng::stream(seed, 0);
            let n = 8;
            let s = unit(n);
            let mut vec = || (0..n).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<f64>>();
            let base = vec![vec(), vec()];
            let extra = vec![vec()];
            let model = match DeformationModel::new(s.clone(), base, extra, Window::full(&s), 0.05) {
                Ok(m) => m,
                Err(_) => return Ok(()),
            };
            let g = WeightFunction::g((0..n).map(|_| r.random_range(0.05..1.0)).collect()).unwrap();
            let split = match sqrtg_subspace_projection(&model, &g) {
                Ok(x) => x,
                Err(Error::AngleDegeneracy { .. }) => return Ok(()),
                Err(e) => panic!("{e}"),
            };
            prop_assert!((split.complement.counting() * split.induced.counting()).amax() < 1e-9);
            prop_assert!(split.projection.projection_defect() < 1e-10);
            prop_assert!(split.crosscheck_residual < 1e-9);
        }
    }
}
