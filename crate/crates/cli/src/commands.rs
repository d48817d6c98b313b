//! One function per subcommand. Each writes its tables into the output
//! directory and returns the effective parameters plus a summary line.

use std::fmt::Write as _;

use detlab::conditioning::{check_inducibility, continuity_suite, ideal_bound, induced_kernel, normalization_constant, oracle_battery};
use detlab::deformations::{report_with_verdict_csv, scripted_perturbation_suite};
use detlab::dpp::samples_to_csv;
use detlab::embedding::{chebyshev_mass_bound_check, tightness_report};
use detlab::scaling::{crossover_discrepancy, heine_mehler_suite, orthonormality_residual, scaling_grid, scaling_reports_csv};
use detlab::{rng, DppDistribution, KernelOperator, Role, WeightFunction, Window};
use serde::Serialize;
use serde_json::json;

use crate::config::{
    params, sample_all, ExhaustParams, InduceParams, LoadedConfig, OracleParams, PerturbParams, SampleParams,
    ScalingParams, TightnessParams, WeakConvParams,
};
use crate::output::OutputDir;
use crate::CliError;

pub struct Context<'a> {
    pub seed: u64,
    pub config: Option<&'a LoadedConfig>,
    pub out: &'a mut OutputDir,
}

pub struct Outcome {
    pub params: serde_json::Value,
    pub summary: String,
    /// Set when a battery with a hard pass criterion fails.
    pub contract_failed: bool,
}

fn to_value(v: &impl Serialize) -> serde_json::Value {
    serde_json::to_value(v).expect("parameter structs serialize")
}

fn interval_windows(space: &detlab::GroundSpace, intervals: &[[f64; 2]]) -> Vec<Window> {
    intervals
        .iter()
        .map(|w| Window::between(space, w[0], w[1]).with_description(format!("[{},{}]", w[0], w[1])))
        .collect()
}

pub fn oracle(ctx: Context, trials: Option<usize>) -> Result<Outcome, CliError> {
    let mut p: OracleParams = params(ctx.config, "oracle")?;
    if let Some(t) = trials {
        p.trials = t;
    }
    let summary = oracle_battery(&p, ctx.seed)?;
    ctx.out.write("oracle_trials.csv", summary.to_csv())?;
    ctx.out.write_json(
        "oracle_summary.json",
        &json!({
            "trials": summary.trials.len(),
            "tv_passes": summary.tv_passes(),
            "normalization_passes": summary.normalization_passes(),
            "projection_passes": summary.projection_passes(),
            "max_tv": summary.max_tv(),
            "max_normalization_error": summary.max_normalization_error(),
            "max_projection_error": summary.max_projection_error(),
            "all_pass": summary.all_pass(),
        }),
    )?;
    Ok(Outcome {
        params: to_value(&p),
        summary: summary.summary_line(),
        contract_failed: !summary.all_pass(),
    })
}

pub fn induce(ctx: Context) -> Result<Outcome, CliError> {
    let p: InduceParams = params(ctx.config, "induce")?;
    let space = p.space.build()?;
    let basis = sample_all(&p.basis, &space)?;
    let projection = detlab::project_span(&basis, &space)?;
    let g = WeightFunction::new(p.g.sample(&space)?, Role::G)?;
    let inducibility = check_inducibility(&g, &projection)?;
    let induced = induced_kernel(&g, &projection)?;
    let z = normalization_constant(&g, &projection)?;
    let bound = match &p.f {
        Some(f) => Some(ideal_bound(&g, &projection, &WeightFunction::new(f.sample(&space)?, Role::F)?)?),
        None => None,
    };
    ctx.out.write("induced_kernel.json", induced.to_json()?)?;
    ctx.out.write_json(
        "induce_report.json",
        &json!({
            "inducibility": inducibility,
            "normalization_constant": z,
            "rank": basis.len(),
            "trace": induced.trace(),
            "projection_defect": induced.projection_defect(),
            "ideal_bound": bound,
        }),
    )?;
    if let Some(c) = &p.continuity {
        let windows = interval_windows(&space, &c.windows);
        let report = continuity_suite(&g, &projection, &c.n, &windows)?;
        ctx.out.write("continuity.csv", report.report.to_csv())?;
    }
    Ok(Outcome {
        params: to_value(&p),
        summary: format!(
            "margin {:.6e}, normalization {:.6e}, trace {:.6e}",
            inducibility.margin,
            z,
            induced.trace()
        ),
        contract_failed: false,
    })
}

pub fn perturb(ctx: Context) -> Result<Outcome, CliError> {
    let p: PerturbParams = params(ctx.config, "perturb")?;
    let r = scripted_perturbation_suite(&p)?;
    ctx.out.write("perturb.csv", report_with_verdict_csv(&r.report, r.decreasing))?;
    let last = r
        .report
        .last_values()
        .iter()
        .map(|(id, d)| format!("{id} {d:.3e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(Outcome {
        params: to_value(&p),
        summary: format!("strictly decreasing: {}; final: {last}", r.decreasing),
        contract_failed: false,
    })
}

pub fn exhaust(ctx: Context) -> Result<Outcome, CliError> {
    let p: ExhaustParams = params(ctx.config, "exhaust")?;
    let r = p.run()?;
    ctx.out.write("exhaust.csv", report_with_verdict_csv(&r.report, r.decreasing))?;
    ctx.out.write("exhaust_diagnostics.csv", r.diagnostics_csv())?;
    Ok(Outcome {
        params: to_value(&p),
        summary: format!(
            "decreasing: {}; final |P~ phi| = {:.3e}",
            r.decreasing,
            r.final_p_tilde_phi().unwrap_or(f64::NAN)
        ),
        contract_failed: false,
    })
}

pub fn scaling(ctx: Context, s: Option<Vec<f64>>, n: Option<Vec<usize>>) -> Result<Outcome, CliError> {
    let mut p: ScalingParams = params(ctx.config, "scaling")?;
    if let Some(s) = s {
        p.s = s;
    }
    if let Some(n) = n {
        p.n = n;
    }
    let grid = scaling_grid(p.x_max, p.nodes)?;
    let windows = interval_windows(&grid, &p.windows);
    let reports = p
        .s
        .iter()
        .map(|&s| heine_mehler_suite(s, &p.n, &grid, &windows))
        .collect::<detlab::Result<Vec<_>>>()?;
    ctx.out.write("scaling.csv", scaling_reports_csv(&reports))?;
    let diagnostics = p
        .s
        .iter()
        .map(|&s| {
            Ok(json!({
                "s": s,
                "strictly_decreasing": reports.iter().find(|r| r.s == s).map(|r| r.strictly_decreasing()),
                "orthonormality_residual": orthonormality_residual(s, p.max_degree)?,
                "crossover_discrepancy": crossover_discrepancy(s, 11.0, 13.0, 40),
            }))
        })
        .collect::<detlab::Result<Vec<_>>>()?;
    ctx.out.write_json("scaling_diagnostics.json", &diagnostics)?;
    let mut summary = String::new();
    for r in &reports {
        let _ = write!(summary, "s={}: strictly decreasing {}; ", r.s, r.strictly_decreasing());
    }
    Ok(Outcome {
        params: to_value(&p),
        summary: summary.trim_end_matches("; ").to_string(),
        contract_failed: false,
    })
}

pub fn tightness(ctx: Context) -> Result<Outcome, CliError> {
    let p: TightnessParams = params(ctx.config, "tightness")?;
    let space = p.space.build()?;
    let kernels = p
        .family
        .iter()
        .map(|m| {
            let k = detlab::project_span(&sample_all(&m.basis, &space)?, &space)?;
            Ok(if m.scale == 1.0 { k } else { k.scaled(m.scale) })
        })
        .collect::<Result<Vec<KernelOperator>, CliError>>()?;
    let extra = if p.family.iter().any(|m| !m.extra.is_empty()) {
        Some(
            p.family
                .iter()
                .map(|m| sample_all(&m.extra, &space))
                .collect::<Result<Vec<_>, CliError>>()?,
        )
    } else {
        None
    };
    let f = WeightFunction::new(p.f.sample(&space)?, Role::F)?;
    let g = match &p.g {
        Some(g) => Some(WeightFunction::new(g.sample(&space)?, Role::G)?),
        None => None,
    };
    let tails = interval_windows(&space, &p.tail_windows);
    let report = tightness_report(&kernels, &f, &tails, g.as_ref(), extra.as_deref(), &p.criteria)?;
    ctx.out.write("tightness.csv", report.to_csv())?;
    ctx.out.write_json("tightness_report.json", &report)?;
    if let Some(c) = &p.chebyshev {
        let checks = kernels
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let d = DppDistribution::new(k.clone())?;
                let samples = d.sample(rng::derive_seed(ctx.seed, i as u64), c.samples);
                chebyshev_mass_bound_check(&d, &f, c.level, &samples)
            })
            .collect::<detlab::Result<Vec<_>>>()?;
        ctx.out.write_json("chebyshev.json", &checks)?;
    }
    Ok(Outcome {
        params: to_value(&p),
        summary: format!(
            "{} (bounded trace {}, vanishing tail {})",
            report.verdict_label(),
            report.verdicts.bounded_trace,
            report.verdicts.vanishing_tail
        ),
        contract_failed: false,
    })
}

pub fn weakconv(ctx: Context, skip_calibration: bool) -> Result<Outcome, CliError> {
    let p: WeakConvParams = params(ctx.config, "weakconv")?;
    let run = p.run(ctx.seed)?;
    ctx.out.write("weakconv.csv", run.to_csv())?;
    let calibration = if skip_calibration {
        None
    } else {
        let c = p.calibrate(ctx.seed)?;
        ctx.out.write("calibration.csv", c.to_csv())?;
        Some(c)
    };
    ctx.out.write_json(
        "weakconv_summary.json",
        &json!({
            "decreasing": run.decreasing,
            "final_p_value": run.final_p_value,
            "pass": run.pass,
            "calibration_ks_distance": calibration.as_ref().map(|c| c.ks_distance),
            "calibration_pass": calibration.as_ref().map(|c| c.pass),
        }),
    )?;
    let mut summary = format!("energy statistic decreasing {}; final p {:.3}", run.decreasing, run.final_p_value);
    if let Some(c) = &calibration {
        let _ = write!(summary, "; calibration KS {:.4}", c.ks_distance);
    }
    Ok(Outcome {
        params: to_value(&p),
        summary,
        contract_failed: false,
    })
}

pub fn sample(ctx: Context, count: Option<usize>) -> Result<Outcome, CliError> {
    let mut p: SampleParams = params(ctx.config, "sample")?;
    if let Some(c) = count {
        p.count = c;
    }
    let d = DppDistribution::new(p.kernel.build()?)?;
    let samples = d.sample(ctx.seed, p.count);
    ctx.out.write("samples.csv", samples_to_csv(&samples))?;
    if p.law {
        ctx.out.write("law.json", d.brute_force_distribution()?.to_json()?)?;
    }
    let mean = samples.iter().map(|c| c.len()).sum::<usize>() as f64 / samples.len().max(1) as f64;
    Ok(Outcome {
        params: to_value(&p),
        summary: format!("{} samples, mean size {mean:.4}, expected {:.4}", samples.len(), d.kernel().trace()),
        contract_failed: false,
    })
}
