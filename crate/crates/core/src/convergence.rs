//! Tabulated windowed distances between a sequence of operators and a target.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::{KernelOperator, Window};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub window_id: String,
    pub distance: f64,
}

/// Long-format table of `(n, window, distance)` rows, ordered by `n` and then
/// by window in the order the windows were supplied.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    pub fn push(&mut self, n: usize, window_id: impl Into<String>, distance: f64) {
        self.rows.push(ConvergenceRow {
            n,
            window_id: window_id.into(),
            distance,
        });
    }

    /// Window ids in first-appearance order.
    pub fn window_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::new();
        for r in &self.rows {
            if !ids.contains(&r.window_id) {
                ids.push(r.window_id.clone());
            }
        }
        ids
    }

    pub fn column(&self, window_id: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.window_id == window_id)
            .map(|r| (r.n, r.distance))
            .collect()
    }

    pub fn strictly_decreasing(&self, window_id: &str) -> bool {
        self.column(window_id).windows(2).all(|p| p[1].1 < p[0].1)
    }

    pub fn nonincreasing(&self, window_id: &str) -> bool {
        self.column(window_id).windows(2).all(|p| p[1].1 <= p[0].1)
    }

    pub fn all_strictly_decreasing(&self) -> bool {
        self.window_ids().iter().all(|id| self.strictly_decreasing(id))
    }

    /// Monotonicity flag per window: `(id, strictly decreasing, nonincreasing)`.
    pub fn monotonicity(&self) -> Vec<(String, bool, bool)> {
        self.window_ids()
            .into_iter()
            .map(|id| {
                let s = self.strictly_decreasing(&id);
                let m = self.nonincreasing(&id);
                (id, s, m)
            })
            .collect()
    }

    /// Last distance in each window column.
    pub fn last_values(&self) -> Vec<(String, f64)> {
        self.window_ids()
            .into_iter()
            .filter_map(|id| {
                let last = self.column(&id).last().map(|&(_, d)| d)?;
                Some((id, last))
            })
            .collect()
    }

    pub fn max_distance(&self) -> f64 {
        self.rows.iter().fold(0.0_f64, |m, r| m.max(r.distance))
    }

    /// CSV with header `n,window_id,distance`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,window_id,distance\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:.17e}", r.n, csv_field(&r.window_id), r.distance);
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Windowed trace distances `‖χ_W (K_n − K) χ_W‖₁` for `n = 1, 2, …`.
pub fn convergence_report(
    sequence: &[KernelOperator],
    target: &KernelOperator,
    windows: &[Window],
) -> Result<ConvergenceReport> {
    let indexed: Vec<(usize, KernelOperator)> = sequence
        .iter()
        .enumerate()
        .map(|(i, k)| (i + 1, k.clone()))
        .collect();
    convergence_report_indexed(&indexed, target, windows)
}

/// Same as [`convergence_report`] with explicit sequence labels.
pub fn convergence_report_indexed(
    sequence: &[(usize, KernelOperator)],
    target: &KernelOperator,
    windows: &[Window],
) -> Result<ConvergenceReport> {
    if sequence.is_empty() {
        return Err(Error::Argument("convergence report needs a nonempty sequence".into()));
    }
    let diffs = sequence
        .iter()
        .map(|(_, k)| k.difference(target))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, usize)> = (0..sequence.len())
        .flat_map(|s| (0..windows.len()).map(move |w| (s, w)))
        .collect();
    let distances = par::map_slice(&cells, |&(s, w)| {
        diffs[s].local_trace_norm(&windows[w], &windows[w]).value
    });
    let mut report = ConvergenceReport::default();
    for (&(s, w), d) in cells.iter().zip(distances) {
        report.push(sequence[s].0, windows[w].description(), d);
    }
    Ok(report)
}
