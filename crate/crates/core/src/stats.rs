//! Goodness-of-fit helpers used by the sampler checks and calibration runs.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dpp::{Configuration, DistributionTable};
use crate::error::{Error, Result};

/// Bins with expected count below this are pooled.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of observed counts against expected probabilities.
/// Cells whose expected count is below [`MIN_EXPECTED`] are pooled into one
/// cell (merged into the smallest regular cell if the pool itself is still
/// too small). Observations in zero-probability cells give `p = 0`.
pub fn chi_square_gof(observed: &[u64], expected_probs: &[f64]) -> Result<ChiSquareResult> {
    if observed.len() != expected_probs.len() {
        return Err(Error::Dimension {
            expected: expected_probs.len(),
            got: observed.len(),
        });
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::Argument("chi-square test needs at least one observation".into()));
    }
    let n = total as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pool = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(expected_probs) {
        let e = n * p.max(0.0);
        if e <= 1e-12 * n {
            if o > 0 {
                return Ok(ChiSquareResult {
                    statistic: f64::INFINITY,
                    dof: 0,
                    p_value: 0.0,
                });
            }
            continue;
        }
        if e < MIN_EXPECTED {
            pool.0 += o as f64;
            pool.1 += e;
        } else {
            cells.push((o as f64, e));
        }
    }
    if pool.1 > 0.0 {
        if pool.1 >= MIN_EXPECTED || cells.is_empty() {
            cells.push(pool);
        } else {
            let smallest = (0..cells.len())
                .min_by(|&a, &b| cells[a].1.total_cmp(&cells[b].1))
                .expect("nonempty");
            cells[smallest].0 += pool.0;
            cells[smallest].1 += pool.1;
        }
    }
    if cells.len() < 2 {
        return Ok(ChiSquareResult {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
        });
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Argument(e.to_string()))?;
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value: dist.sf(statistic),
    })
}

/// Chi-square test of a sample batch against an exact configuration law.
pub fn sample_gof(samples: &[Configuration], law: &DistributionTable) -> Result<ChiSquareResult> {
    let mut counts = vec![0u64; law.probabilities().len()];
    for s in samples {
        counts[s.mask()? as usize] += 1;
    }
    chi_square_gof(&counts, law.probabilities())
}

/// Kolmogorov distance between the empirical law of `values` and the uniform
/// law on `[0, 1]`.
pub fn ks_uniform(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn chi_square_known_value() {
        // two equal cells, 60/40 split of 100: statistic 4, one degree of freedom
        let r = chi_square_gof(&[60, 40], &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(r.statistic, 4.0, epsilon = 1e-12);
        assert_eq!(r.dof, 1);
        // P(χ²₁ > 4) = erfc(√2)
        assert_abs_diff_eq!(r.p_value, 0.045_500_263_896_358_4, epsilon = 1e-9);
    }

    #[test]
    fn impossible_cell_rejects() {
        let r = chi_square_gof(&[5, 1], &[1.0, 0.0]).unwrap();
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn small_cells_are_pooled() {
        let r = chi_square_gof(&[50, 48, 1, 1], &[0.5, 0.48, 0.01, 0.01]).unwrap();
        assert_eq!(r.dof, 1);
    }

    #[test]
    fn ks_examples() {
        assert_abs_diff_eq!(ks_uniform(&[0.5]), 0.5);
        let grid: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert_abs_diff_eq!(ks_uniform(&grid), 0.005, epsilon = 1e-12);
    }
}
