//! Per-point weight functions: conditioning weights `g` and embedding
//! weights `f`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{GroundSpace, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Conditioning weight, values in `[0, 1]`.
    G,
    /// Embedding weight, bounded and nonnegative.
    F,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightFunction {
    values: Vec<f64>,
    role: Role,
}

impl WeightFunction {
    pub fn new(values: Vec<f64>, role: Role) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!("weight {i} = {v} is not a finite nonnegative value")));
            }
            if role == Role::G && v > 1.0 {
                return Err(Error::Domain(format!("conditioning weight {i} = {v} exceeds 1")));
            }
        }
        Ok(Self { values, role })
    }

    pub fn g(values: Vec<f64>) -> Result<Self> {
        Self::new(values, Role::G)
    }

    pub fn f(values: Vec<f64>) -> Result<Self> {
        Self::new(values, Role::F)
    }

    pub fn constant(n: usize, c: f64, role: Role) -> Result<Self> {
        Self::new(vec![c; n], role)
    }

    pub fn from_fn(space: &GroundSpace, role: Role, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(space.sample(f), role)
    }

    /// `χ_W` as a conditioning weight.
    pub fn indicator(window: &Window, n: usize) -> Self {
        Self {
            values: window.indicator(n),
            role: Role::G,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sqrt_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.sqrt()).collect()
    }

    pub fn inf(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn has_zero(&self) -> bool {
        self.values.contains(&0.0)
    }

    /// `Ψ`-style product over the given indices.
    pub fn product_over(&self, indices: &[usize]) -> f64 {
        indices.iter().map(|&i| self.values[i]).product()
    }
}
