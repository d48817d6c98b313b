//! Tightness diagnostics for families of determinantal measures and the
//! Chebyshev bound on the total `σ_f` mass.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dpp::{Configuration, DppDistribution};
use crate::embedding::sigma_f;
use crate::error::{check_len, Error, Result};
use crate::operator::{angle_to_columns, residual_against, spectral_norm, KernelOperator, Window};
use crate::weights::WeightFunction;

/// Spectral tolerance of the positive-contraction check on family members.
pub const CONTRACTION_TOL: f64 = 1e-10;

/// Thresholds that turn the tabulated suprema into verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TightnessCriteria {
    /// Largest admissible `sup_α tr(√f K_α √f)`.
    pub trace_bound: f64,
    /// A tail counts as vanishing once some tail window has
    /// `sup_α` tail trace at most this.
    pub tail_tol: f64,
    /// Smallest admissible `inf_α (1 − ‖(1 − g) Π_α‖)`.
    pub margin_floor: f64,
    /// Smallest admissible angle `δ` of the added vectors.
    pub angle_floor: f64,
}

impl Default for TightnessCriteria {
    fn default() -> Self {
        Self {
            trace_bound: 1e6,
            tail_tol: 1e-2,
            margin_floor: 1e-3,
            angle_floor: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessRow {
    pub member: usize,
    /// `tr(√f K √f)`.
    pub trace: f64,
    /// `tr(χ_T √f K √f χ_T)` per tail window `T`.
    pub tails: Vec<f64>,
    /// `1 − ‖(1 − g) Π‖`, when `g` is given.
    pub margin: Option<f64>,
    /// Smallest sequential angle of the member's added vectors.
    pub angle: Option<f64>,
    /// `∫ f |v|² dμ` per added vector.
    pub vector_masses: Vec<f64>,
    /// `max_k ∫_T f |v_k|² dμ` per tail window.
    pub vector_tails: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessVerdicts {
    pub bounded_trace: bool,
    pub vanishing_tail: bool,
    pub uniform_margin: Option<bool>,
    pub angle_bound: Option<bool>,
    /// Conjunction of every verdict that applies.
    pub tight: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessReport {
    pub tail_windows: Vec<String>,
    pub rows: Vec<TightnessRow>,
    pub sup_trace: f64,
    pub sup_tails: Vec<f64>,
    pub inf_margin: Option<f64>,
    pub min_angle: Option<f64>,
    pub sup_vector_mass: Option<f64>,
    pub sup_vector_tails: Option<Vec<f64>>,
    pub criteria: TightnessCriteria,
    pub verdicts: TightnessVerdicts,
}

impl TightnessReport {
    /// `"tight"` or `"not tight"`.
    pub fn verdict_label(&self) -> &'static str {
        if self.verdicts.tight {
            "tight"
        } else {
            "not tight"
        }
    }

    /// One row per member and tail window.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("member,window_id,trace,tail_trace,margin,angle,vector_tail\n");
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.17e}")).unwrap_or_default();
        for row in &self.rows {
            for (k, id) in self.tail_windows.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{:.17e},{:.17e},{},{},{}",
                    row.member,
                    crate::convergence::csv_field(id),
                    row.trace,
                    row.tails[k],
                    opt(row.margin),
                    opt(row.angle),
                    opt(row.vector_tails.get(k).copied()),
                );
            }
        }
        out
    }
}

/// Diagonal of `√f K √f` in counting form.
fn weighted_diagonal(k: &KernelOperator, f: &[f64]) -> Vec<f64> {
    k.counting()
        .diagonal()
        .iter()
        .zip(f)
        .map(|(d, f)| (f * d).max(0.0))
        .collect()
}

fn sum_over(values: &[f64], window: &Window) -> f64 {
    window.indices().iter().map(|&i| values[i]).sum()
}

/// Tabulates traces, tail traces, margins and angle data over a finite family.
pub fn tightness_report(
    kernels: &[KernelOperator],
    f: &WeightFunction,
    tail_windows: &[Window],
    g: Option<&WeightFunction>,
    extra_vectors: Option<&[Vec<Vec<f64>>]>,
    criteria: &TightnessCriteria,
) -> Result<TightnessReport> {
    if kernels.is_empty() {
        return Err(Error::Argument("tightness report needs at least one kernel".into()));
    }
    if let Some(extra) = extra_vectors {
        check_len(kernels.len(), extra.len())?;
    }
    let n = f.len();
    let mut rows = Vec::with_capacity(kernels.len());
    for (member, k) in kernels.iter().enumerate() {
        check_len(n, k.len())?;
        if !k.is_positive_contraction(CONTRACTION_TOL) {
            let spectrum = k.spectrum();
            return Err(Error::Contract(format!(
                "family member {member} is not a positive contraction (spectrum in [{:.3e}, {:.3e}])",
                spectrum.last().copied().unwrap_or(0.0),
                spectrum.first().copied().unwrap_or(0.0)
            )));
        }
        let diag = weighted_diagonal(k, f.values());
        let trace = diag.iter().sum();
        let tails = tail_windows.iter().map(|w| sum_over(&diag, w)).collect();

        let margin = match g {
            Some(g) => {
                check_len(n, g.len())?;
                let scaled = DMatrix::from_fn(n, n, |i, j| (1.0 - g.values()[i]) * k.counting()[(i, j)]);
                Some(1.0 - spectral_norm(&scaled))
            }
            None => None,
        };

        let (angle, vector_masses, vector_tails) = match extra_vectors.map(|e| &e[member]) {
            Some(vs) if !vs.is_empty() => {
                let mut span = k.range_basis()?;
                let mut smallest = std::f64::consts::FRAC_PI_2;
                let mut masses = Vec::with_capacity(vs.len());
                let mut vtails = vec![0.0_f64; tail_windows.len()];
                for v in vs {
                    let hat = k.space().to_counting(v)?;
                    smallest = smallest.min(angle_to_columns(&hat, &span));
                    let r = residual_against(&hat, &span);
                    if r.norm() > 0.0 {
                        let c = span.ncols();
                        span = span.insert_column(c, 0.0);
                        span.set_column(c, &(&r / r.norm()));
                    }
                    let density: Vec<f64> = hat.iter().zip(f.values()).map(|(h, f)| f * h * h).collect();
                    masses.push(density.iter().sum());
                    for (t, w) in vtails.iter_mut().zip(tail_windows) {
                        *t = t.max(sum_over(&density, w));
                    }
                }
                (Some(smallest), masses, vtails)
            }
            _ => (None, Vec::new(), Vec::new()),
        };
        rows.push(TightnessRow {
            member,
            trace,
            tails,
            margin,
            angle,
            vector_masses,
            vector_tails,
        });
    }

    let sup_trace = rows.iter().map(|r| r.trace).fold(0.0, f64::max);
    let sup_tails: Vec<f64> = (0..tail_windows.len())
        .map(|k| rows.iter().map(|r| r.tails[k]).fold(0.0, f64::max))
        .collect();
    let inf_margin = g.map(|_| rows.iter().filter_map(|r| r.margin).fold(f64::INFINITY, f64::min));
    let angles: Vec<f64> = rows.iter().filter_map(|r| r.angle).collect();
    let min_angle = (!angles.is_empty()).then(|| angles.iter().copied().fold(f64::INFINITY, f64::min));
    let with_vectors: Vec<&TightnessRow> = rows.iter().filter(|r| !r.vector_masses.is_empty()).collect();
    let (sup_vector_mass, sup_vector_tails) = if with_vectors.is_empty() {
        (None, None)
    } else {
        let mass = with_vectors
            .iter()
            .flat_map(|r| r.vector_masses.iter().copied())
            .fold(0.0, f64::max);
        let tails = (0..tail_windows.len())
            .map(|k| with_vectors.iter().map(|r| r.vector_tails[k]).fold(0.0, f64::max))
            .collect();
        (Some(mass), Some(tails))
    };

    let bounded_trace = sup_trace <= criteria.trace_bound
        && sup_vector_mass.is_none_or(|m| m <= criteria.trace_bound);
    let tail_vanishes = |tails: &[f64]| tails.iter().any(|&t| t <= criteria.tail_tol);
    let vanishing_tail = tail_windows.is_empty()
        || (tail_vanishes(&sup_tails) && sup_vector_tails.as_deref().is_none_or(tail_vanishes));
    let uniform_margin = inf_margin.map(|m| m >= criteria.margin_floor);
    let angle_bound = min_angle.map(|a| a >= criteria.angle_floor);
    let tight = bounded_trace && vanishing_tail && uniform_margin != Some(false) && angle_bound != Some(false);

    Ok(TightnessReport {
        tail_windows: tail_windows.iter().map(|w| w.description().to_string()).collect(),
        rows,
        sup_trace,
        sup_tails,
        inf_margin,
        min_angle,
        sup_vector_mass,
        sup_vector_tails,
        criteria: *criteria,
        verdicts: TightnessVerdicts {
            bounded_trace,
            vanishing_tail,
            uniform_margin,
            angle_bound,
            tight,
        },
    })
}

/// Number of standard errors allowed above the Chebyshev bound.
pub const CHEBYSHEV_SLACK_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChebyshevCheck {
    /// `tr(√f K √f) / L`.
    pub bound: f64,
    /// Fraction of samples with `Int_E(σ_f(X)) > L`.
    pub empirical: f64,
    /// `3 √(p (1 − p) / N)` with `p = min(bound, 1)`.
    pub slack: f64,
    pub pass: bool,
}

/// Chebyshev (Markov) bound `P(Int_E σ_f(X) > L) ≤ tr(√f K √f) / L`,
/// checked against a sample batch.
pub fn chebyshev_mass_bound_check(
    d: &DppDistribution,
    f: &WeightFunction,
    l: f64,
    samples: &[Configuration],
) -> Result<ChebyshevCheck> {
    if !(l > 0.0) {
        return Err(Error::Domain(format!("mass level L = {l} must be positive")));
    }
    if samples.is_empty() {
        return Err(Error::Argument("Chebyshev check needs at least one sample".into()));
    }
    check_len(d.len(), f.len())?;
    let trace: f64 = weighted_diagonal(d.kernel(), f.values()).iter().sum();
    let bound = trace / l;
    let mut above = 0usize;
    for x in samples {
        if sigma_f(x, f)?.total_mass() > l {
            above += 1;
        }
    }
    let empirical = above as f64 / samples.len() as f64;
    let p = bound.min(1.0);
    let slack = CHEBYSHEV_SLACK_SIGMAS * (p * (1.0 - p) / samples.len() as f64).sqrt();
    Ok(ChebyshevCheck {
        bound,
        empirical,
        slack,
        pass: empirical <= bound + slack,
    })
}
