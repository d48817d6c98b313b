//! Finite atomic measures, the `σ_f` embedding of configurations, tightness
//! diagnostics and two-sample tests for embedded laws.

mod tightness;
mod weak;

pub use tightness::*;
pub use weak::*;

use serde::Serialize;

use crate::dpp::Configuration;
use crate::error::{check_len, Error, Result};
use crate::operator::Window;
use crate::weights::WeightFunction;

/// Nonnegative atomic measure on the grid, stored densely by point index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteMeasure {
    atoms: Vec<f64>,
}

impl FiniteMeasure {
    pub fn zero(n: usize) -> Self {
        Self { atoms: vec![0.0; n] }
    }

    pub fn from_atoms(atoms: Vec<f64>) -> Result<Self> {
        if let Some((i, m)) = atoms.iter().enumerate().find(|(_, m)| !(**m >= 0.0) || !m.is_finite()) {
            return Err(Error::Domain(format!("atom {i} has invalid mass {m}")));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `Int_E(η)`.
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().sum()
    }

    pub fn mass_on(&self, window: &Window) -> f64 {
        window.indices().iter().map(|&i| self.atoms[i]).sum()
    }
}

/// `σ_f(X) = Σ_{x∈X} f(x) δ_x`.
pub fn sigma_f(x: &Configuration, f: &WeightFunction) -> Result<FiniteMeasure> {
    check_len(f.len(), x.n_points())?;
    let mut atoms = vec![0.0; f.len()];
    for &i in x.occupied() {
        atoms[i] = f.values()[i];
    }
    Ok(FiniteMeasure { atoms })
}

/// `Int_φ(η) = Σ φ(x) η({x})`.
pub fn int_phi(eta: &FiniteMeasure, phi: &[f64]) -> Result<f64> {
    check_len(eta.len(), phi.len())?;
    Ok(eta.atoms.iter().zip(phi).map(|(m, p)| m * p).sum())
}
