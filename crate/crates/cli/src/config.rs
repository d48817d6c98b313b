//! Experiment configuration files.
//!
//! A config is a JSON object
//! `{"suite": NAME, "seed": N?, "out": DIR?, "params": {...}?}`; `params`
//! is validated against the schema of the named suite. Unknown fields are
//! rejected at both levels.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use detlab::deformations::{ExhaustionScript, PerturbationScript};
use detlab::embedding::{TightnessCriteria, WeakConvergenceScript};
use detlab::conditioning::OracleConfig;
use detlab::tags::{FunctionSpec, FunctionTag};
use detlab::{GroundSpace, KernelOperator};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub suite: String,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub params: Option<serde_json::Value>,
}

pub struct LoadedConfig {
    pub path: PathBuf,
    pub bytes: Vec<u8>,
    pub envelope: Envelope,
}

fn schema_error(path: &Path, err: serde_path_to_error::Error<serde_json::Error>) -> CliError {
    let inner = err.inner();
    let field = err.path().to_string();
    let location = if inner.line() > 0 {
        format!("line {} column {}", inner.line(), inner.column())
    } else {
        "params".to_string()
    };
    CliError::Config(format!(
        "{}: {location}, field `{field}`: {inner}",
        path.display()
    ))
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut de = serde_json::Deserializer::from_slice(&bytes);
    let envelope: Envelope = serde_path_to_error::deserialize(&mut de).map_err(|e| schema_error(path, e))?;
    de.end()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(LoadedConfig {
        path: path.to_path_buf(),
        bytes,
        envelope,
    })
}

/// Parameters of `suite`, or the suite defaults when no config is given.
pub fn params<T: DeserializeOwned + Default>(config: Option<&LoadedConfig>, suite: &str) -> Result<T, CliError> {
    let Some(config) = config else {
        return Ok(T::default());
    };
    if config.envelope.suite != suite {
        return Err(CliError::Config(format!(
            "{}: config is for suite `{}`, not `{suite}`",
            config.path.display(),
            config.envelope.suite
        )));
    }
    match &config.envelope.params {
        None => Ok(T::default()),
        Some(value) => serde_path_to_error::deserialize(value.clone()).map_err(|e| {
            CliError::Config(format!(
                "{}: params field `{}`: {}",
                config.path.display(),
                e.path(),
                e.inner()
            ))
        }),
    }
}

/// Ground-space description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Counting { n: usize },
    Midpoint { a: f64, b: f64, n: usize },
    Geometric { a: f64, b: f64, n: usize },
    GaussLegendre { a: f64, b: f64, n: usize },
    /// GroundSpace JSON document.
    File { path: PathBuf },
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<GroundSpace>, CliError> {
        let space = match self {
            GridSpec::Counting { n } => GroundSpace::counting(*n)?,
            GridSpec::Midpoint { a, b, n } => GroundSpace::midpoint(*a, *b, *n)?,
            GridSpec::Geometric { a, b, n } => GroundSpace::geometric(*a, *b, *n)?,
            GridSpec::GaussLegendre { a, b, n } => GroundSpace::gauss_legendre(*a, *b, *n)?,
            GridSpec::File { path } => GroundSpace::from_json(&read_text(path)?)?,
        };
        Ok(Arc::new(space))
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// A kernel: scaled projection onto the span of grid functions, or a
/// KernelOperator JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Projection {
        space: GridSpec,
        basis: Vec<FunctionSpec>,
        #[serde(default = "one")]
        scale: f64,
    },
    File { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn build(&self) -> Result<KernelOperator, CliError> {
        match self {
            KernelSpec::Projection { space, basis, scale } => {
                let space = space.build()?;
                let basis = sample_all(basis, &space)?;
                let p = detlab::project_span(&basis, &space)?;
                Ok(if *scale == 1.0 { p } else { p.scaled(*scale) })
            }
            KernelSpec::File { path } => Ok(KernelOperator::from_json(&read_text(path)?)?),
        }
    }
}

pub fn sample_all(fs: &[FunctionSpec], space: &GroundSpace) -> Result<Vec<Vec<f64>>, CliError> {
    Ok(fs.iter().map(|f| f.sample(space)).collect::<detlab::Result<Vec<_>>>()?)
}

fn tag(t: FunctionTag) -> FunctionSpec {
    FunctionSpec::Tag(t)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuityParams {
    pub n: Vec<usize>,
    pub windows: Vec<[f64; 2]>,
}

impl Default for ContinuityParams {
    fn default() -> Self {
        Self {
            n: vec![1, 2, 4, 8, 16, 32],
            windows: vec![[0.0, 1.0]],
        }
    }
}

/// `induce`: `B̃(g, Π)` for `Π` the projection onto `span(basis)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InduceParams {
    pub space: GridSpec,
    pub basis: Vec<FunctionSpec>,
    pub g: FunctionSpec,
    /// Embedding weight for the Hilbert–Schmidt ideal bound.
    pub f: Option<FunctionSpec>,
    pub continuity: Option<ContinuityParams>,
}

impl Default for InduceParams {
    fn default() -> Self {
        Self {
            space: GridSpec::Midpoint { a: 0.0, b: 1.0, n: 8 },
            basis: vec![tag(FunctionTag::Constant(1.0)), tag(FunctionTag::Power(1.0))],
            g: tag(FunctionTag::Exp(-1.0)),
            f: Some(tag(FunctionTag::Constant(1.0))),
            continuity: Some(ContinuityParams::default()),
        }
    }
}

/// `scaling`: Jacobi → Bessel suites on a Gauss–Legendre grid of `(0, x_max]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingParams {
    pub s: Vec<f64>,
    pub n: Vec<usize>,
    pub x_max: f64,
    pub nodes: usize,
    pub windows: Vec<[f64; 2]>,
    /// Highest degree in the orthonormality diagnostic.
    pub max_degree: usize,
}

impl Default for ScalingParams {
    fn default() -> Self {
        Self {
            s: vec![0.0, 0.5, 2.0],
            n: vec![8, 16, 32, 64],
            x_max: 10.0,
            nodes: 200,
            windows: vec![[0.0, 10.0]],
            max_degree: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberSpec {
    pub basis: Vec<FunctionSpec>,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub extra: Vec<FunctionSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChebyshevParams {
    pub level: f64,
    pub samples: usize,
}

/// `tightness`: a finite family of scaled projections.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TightnessParams {
    pub space: GridSpec,
    pub family: Vec<MemberSpec>,
    pub f: FunctionSpec,
    pub tail_windows: Vec<[f64; 2]>,
    pub g: Option<FunctionSpec>,
    pub criteria: TightnessCriteria,
    pub chebyshev: Option<ChebyshevParams>,
}

impl Default for TightnessParams {
    /// A point mass drifting to the right edge of a 10-point space.
    fn default() -> Self {
        let n = 10;
        Self {
            space: GridSpec::Counting { n },
            family: (0..n)
                .map(|i| MemberSpec {
                    basis: vec![tag(FunctionTag::Indicator(i as f64, i as f64))],
                    scale: 1.0,
                    extra: Vec::new(),
                })
                .collect(),
            f: tag(FunctionTag::Constant(1.0)),
            tail_windows: vec![[5.0, 9.0], [7.0, 9.0], [9.0, 9.0]],
            g: None,
            criteria: TightnessCriteria::default(),
            chebyshev: Some(ChebyshevParams {
                level: 1.25,
                samples: 1000,
            }),
        }
    }
}

/// `sample`: raw exact samples of one kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleParams {
    pub kernel: KernelSpec,
    pub count: usize,
    /// Also write the brute-force configuration law (at most 20 points).
    pub law: bool,
}

impl Default for SampleParams {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::Projection {
                space: GridSpec::Midpoint { a: 0.0, b: 1.0, n: 8 },
                basis: vec![
                    tag(FunctionTag::Constant(1.0)),
                    tag(FunctionTag::Power(1.0)),
                    tag(FunctionTag::Power(2.0)),
                ],
                scale: 1.0,
            },
            count: 1000,
            law: false,
        }
    }
}

/// Suites whose parameter structs live in the core library.
pub type OracleParams = OracleConfig;
pub type PerturbParams = PerturbationScript;
pub type ExhaustParams = ExhaustionScript;
pub type WeakConvParams = WeakConvergenceScript;
