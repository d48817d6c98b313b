//! Two-sample tests for laws of `σ_f`-embedded configurations.
//!
//! Configurations are reduced to the vector `(Int_{φ₁}, …, Int_{φ_l})` of
//! the embedded measure against test functions with disjoint supports, and
//! two batches are compared by the energy distance with a permutation
//! p-value. Batch vectors usually repeat (they are weighted counts), so the
//! statistic is evaluated on distinct values with multiplicities.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dpp::{Configuration, DppDistribution};
use crate::embedding::{int_phi, sigma_f};
use crate::error::{check_len, Error, Result};
use crate::operator::{GroundSpace, KernelOperator, Window};
use crate::weights::WeightFunction;
use crate::{par, rng, stats};

/// Default number of permutation replicas.
pub const DEFAULT_PERMUTATIONS: usize = 199;
/// Final-row p-value above which the limit law is not rejected.
pub const P_VALUE_FLOOR: f64 = 0.01;
/// Calibration passes when the Kolmogorov distance of the p-values to the
/// uniform law is below this.
pub const CALIBRATION_KS: f64 = 0.05;

/// Checks that no two test functions are nonzero at the same point.
pub fn check_disjoint_supports(phis: &[Vec<f64>]) -> Result<()> {
    let n = phis.first().map_or(0, Vec::len);
    for p in phis {
        check_len(n, p.len())?;
    }
    for x in 0..n {
        let owners: Vec<usize> = (0..phis.len()).filter(|&k| phis[k][x] != 0.0).collect();
        if owners.len() > 1 {
            return Err(Error::Precondition(format!(
                "test functions {} and {} overlap at grid point {x}",
                owners[0], owners[1]
            )));
        }
    }
    Ok(())
}

/// `(Int_{φ₁}(σ_f X), …, Int_{φ_l}(σ_f X))` for each sample.
pub fn embedded_features(samples: &[Configuration], f: &WeightFunction, phis: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    samples
        .iter()
        .map(|x| {
            let eta = sigma_f(x, f)?;
            phis.iter().map(|p| int_phi(&eta, p)).collect()
        })
        .collect()
}

/// Pooled sample of two batches, stored as distinct points with their
/// pairwise distances and a class label per observation.
struct Pooled {
    distances: DMatrix<f64>,
    labels: Vec<usize>,
    classes: usize,
}

impl Pooled {
    fn new(x: &[Vec<f64>], y: &[Vec<f64>]) -> Self {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut points: Vec<&Vec<f64>> = Vec::new();
        let labels = x
            .iter()
            .chain(y)
            .map(|v| {
                let key: Vec<u64> = v.iter().map(|c| c.to_bits()).collect();
                *index.entry(key).or_insert_with(|| {
                    points.push(v);
                    points.len() - 1
                })
            })
            .collect();
        let k = points.len();
        let distances = DMatrix::from_fn(k, k, |i, j| {
            points[i]
                .iter()
                .zip(points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        });
        Self {
            distances,
            labels,
            classes: k,
        }
    }

    fn counts(&self, labels: &[usize]) -> DVector<f64> {
        let mut c = DVector::zeros(self.classes);
        for &l in labels {
            c[l] += 1.0;
        }
        c
    }

    /// `2 E|X − Y| − E|X − X'| − E|Y − Y'|` for the split `labels[..m]`,
    /// `labels[m..]`.
    fn statistic(&self, labels: &[usize], m: usize) -> f64 {
        let cx = self.counts(&labels[..m]);
        let cy = self.counts(&labels[m..]);
        let (nx, ny) = (m as f64, (labels.len() - m) as f64);
        let dcy = &self.distances * &cy;
        let xy = cx.dot(&dcy);
        let xx = cx.dot(&(&self.distances * &cx));
        let yy = cy.dot(&dcy);
        (2.0 * xy / (nx * ny) - xx / (nx * nx) - yy / (ny * ny)).max(0.0)
    }
}

/// Energy distance between two empirical laws on `ℝ^l` (V-statistic form,
/// so identical batches give exactly 0).
pub fn energy_distance(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Argument("energy distance needs two nonempty batches".into()));
    }
    let pooled = Pooled::new(x, y);
    Ok(pooled.statistic(&pooled.labels, x.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoSampleResult {
    pub statistic: f64,
    /// `(1 + #{replicas ≥ observed}) / (R + 1)`.
    pub p_value: f64,
    pub permutations: usize,
}

/// Energy distance with a permutation p-value. Replica `r` shuffles with
/// the stream `(seed, r)`.
pub fn permutation_test(x: &[Vec<f64>], y: &[Vec<f64>], permutations: usize, seed: u64) -> Result<TwoSampleResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Argument("permutation test needs two nonempty batches".into()));
    }
    if permutations == 0 {
        return Err(Error::Argument("permutation count must be positive".into()));
    }
    let pooled = Pooled::new(x, y);
    let m = x.len();
    let observed = pooled.statistic(&pooled.labels, m);
    // relative guard so that replicas equal to the observed split up to
    // rounding count as "at least as extreme"
    let threshold = observed - 1e-12 * observed.abs().max(1e-300);
    let exceed = par::map_range(permutations, |r| {
        let mut labels = pooled.labels.clone();
        labels.shuffle(&mut rng::stream(seed, r as u64));
        pooled.statistic(&labels, m) >= threshold
    })
    .into_iter()
    .filter(|&b| b)
    .count();
    Ok(TwoSampleResult {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (permutations + 1) as f64,
        permutations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakConvergenceRow {
    pub n: usize,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakConvergenceReport {
    pub rows: Vec<WeakConvergenceRow>,
    /// Statistic strictly decreasing in `n`.
    pub decreasing: bool,
    pub final_p_value: f64,
    /// `decreasing` and `final_p_value > P_VALUE_FLOOR`.
    pub pass: bool,
}

impl WeakConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,energy_statistic,p_value,decreasing\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:.17e},{:.6},{}", r.n, r.statistic, r.p_value, self.decreasing);
        }
        out
    }
}

/// Compares each batch of a sequence with a limit batch through the joint
/// law of `(Int_{φᵢ} ∘ σ_f)`. Row `k` uses permutation seed
/// `derive_seed(seed, k)`.
pub fn weak_convergence_test(
    batches: &[(usize, Vec<Configuration>)],
    limit: &[Configuration],
    f: &WeightFunction,
    phis: &[Vec<f64>],
    permutations: usize,
    seed: u64,
) -> Result<WeakConvergenceReport> {
    if batches.is_empty() || phis.is_empty() {
        return Err(Error::Argument("weak convergence test needs batches and test functions".into()));
    }
    check_disjoint_supports(phis)?;
    check_len(f.len(), phis[0].len())?;
    if let Some((n, b)) = batches.iter().find(|(_, b)| b.len() != limit.len()) {
        return Err(Error::Argument(format!(
            "batch {n} has {} samples, the limit batch has {}",
            b.len(),
            limit.len()
        )));
    }
    let target = embedded_features(limit, f, phis)?;
    let mut rows = Vec::with_capacity(batches.len());
    for (k, (n, batch)) in batches.iter().enumerate() {
        let features = embedded_features(batch, f, phis)?;
        let t = permutation_test(&features, &target, permutations, rng::derive_seed(seed, k as u64))?;
        rows.push(WeakConvergenceRow {
            n: *n,
            statistic: t.statistic,
            p_value: t.p_value,
        });
    }
    let decreasing = rows.windows(2).all(|p| p[1].statistic < p[0].statistic);
    let final_p_value = rows.last().map_or(0.0, |r| r.p_value);
    Ok(WeakConvergenceReport {
        decreasing,
        final_p_value,
        pass: decreasing && final_p_value > P_VALUE_FLOOR,
        rows,
    })
}

/// Scripted ensemble `K = U diag(λ) Uᵀ` on a counting space with the
/// perturbed sequence `K_n = U diag(λ + δ/n) Uᵀ`. `U` is the orthogonal
/// factor of a seeded matrix with uniform entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeakConvergenceScript {
    pub eigenvalues: Vec<f64>,
    pub deltas: Vec<f64>,
    pub schedule: Vec<usize>,
    pub batch_size: usize,
    pub permutations: usize,
    /// Test-function supports as index ranges `[start, end)`.
    pub test_windows: Vec<[usize; 2]>,
    /// Embedding weight per point.
    pub f: Vec<f64>,
    pub calibration_reps: usize,
    pub calibration_batch_size: usize,
}

impl Default for WeakConvergenceScript {
    fn default() -> Self {
        Self {
            eigenvalues: vec![0.1, 0.25, 0.4, 0.55, 0.7, 0.85],
            deltas: vec![0.1, 0.12, 0.08, 0.1, 0.05, 0.1],
            schedule: vec![1, 2, 4, 8, 16],
            batch_size: 2000,
            permutations: DEFAULT_PERMUTATIONS,
            test_windows: vec![[0, 3], [3, 6]],
            f: vec![1.0, 0.5, 1.0, 0.75, 1.0, 0.5],
            calibration_reps: 200,
            calibration_batch_size: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub p_values: Vec<f64>,
    /// Kolmogorov distance of the p-values to the uniform law.
    pub ks_distance: f64,
    pub pass: bool,
}

impl CalibrationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replicate,p_value\n");
        for (i, p) in self.p_values.iter().enumerate() {
            let _ = writeln!(out, "{i},{p:.6}");
        }
        out
    }
}

impl WeakConvergenceScript {
    fn validate(&self) -> Result<()> {
        let n = self.eigenvalues.len();
        if n == 0 || self.deltas.len() != n || self.f.len() != n {
            return Err(Error::Argument("eigenvalues, deltas and f must have one equal nonzero length".into()));
        }
        if self.schedule.is_empty() || self.schedule.contains(&0) {
            return Err(Error::Argument("schedule entries must be positive".into()));
        }
        if self.batch_size == 0 || self.calibration_batch_size == 0 || self.permutations == 0 {
            return Err(Error::Argument("batch sizes and permutation count must be positive".into()));
        }
        if let Some(w) = self.test_windows.iter().find(|w| !(w[0] < w[1] && w[1] <= n)) {
            return Err(Error::Argument(format!("test window {w:?} outside 0..{n}")));
        }
        Ok(())
    }

    pub fn space(&self) -> Result<Arc<GroundSpace>> {
        Ok(Arc::new(GroundSpace::counting(self.eigenvalues.len())?))
    }

    fn rotation(&self, seed: u64) -> DMatrix<f64> {
        let n = self.eigenvalues.len();
        let mut r = rng::stream(rng::derive_seed(seed, u64::MAX), 0);
        let a = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
        a.qr().q()
    }

    fn kernel(&self, u: &DMatrix<f64>, lambdas: &[f64]) -> Result<KernelOperator> {
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(lambdas));
        KernelOperator::from_counting(self.space()?, u * d * u.transpose())
    }

    /// `K` and the sequence `K_n` in schedule order.
    pub fn kernels(&self, seed: u64) -> Result<(KernelOperator, Vec<(usize, KernelOperator)>)> {
        self.validate()?;
        let u = self.rotation(seed);
        let base = self.kernel(&u, &self.eigenvalues)?;
        let sequence = self
            .schedule
            .iter()
            .map(|&n| {
                let l: Vec<f64> = self
                    .eigenvalues
                    .iter()
                    .zip(&self.deltas)
                    .map(|(l, d)| l + d / n as f64)
                    .collect();
                Ok((n, self.kernel(&u, &l)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((base, sequence))
    }

    pub fn weight(&self) -> Result<WeightFunction> {
        WeightFunction::f(self.f.clone())
    }

    pub fn test_functions(&self) -> Result<Vec<Vec<f64>>> {
        let space = self.space()?;
        self.test_windows
            .iter()
            .map(|w| Ok(Window::new(&space, w[0]..w[1], format!("[{},{})", w[0], w[1]))?.indicator(space.len())))
            .collect()
    }

    /// Perturbed-sequence run. Every batch, including the limit batch, is
    /// drawn with the same sampling seed, so sample `i` of each batch uses
    /// the same random stream (common random numbers); each batch is still
    /// an i.i.d. sample of its own law.
    pub fn run(&self, seed: u64) -> Result<WeakConvergenceReport> {
        let (base, sequence) = self.kernels(seed)?;
        let sample_seed = rng::derive_seed(seed, 1);
        let limit = DppDistribution::new(base)?.sample(sample_seed, self.batch_size);
        let batches = sequence
            .into_iter()
            .map(|(n, k)| Ok((n, DppDistribution::new(k)?.sample(sample_seed, self.batch_size))))
            .collect::<Result<Vec<_>>>()?;
        weak_convergence_test(
            &batches,
            &limit,
            &self.weight()?,
            &self.test_functions()?,
            self.permutations,
            rng::derive_seed(seed, 2),
        )
    }

    /// Same-law runs: replicate `r` draws two independent batches from `K`
    /// and records the permutation p-value.
    pub fn calibrate(&self, seed: u64) -> Result<CalibrationReport> {
        if self.calibration_reps == 0 {
            return Err(Error::Argument("calibration needs at least one replicate".into()));
        }
        let (base, _) = self.kernels(seed)?;
        let dpp = DppDistribution::new(base)?;
        let (f, phis) = (self.weight()?, self.test_functions()?);
        check_disjoint_supports(&phis)?;
        let m = self.calibration_batch_size;
        let p_values = (0..self.calibration_reps)
            .map(|r| {
                let salt = 3 * r as u64 + 16;
                let x = embedded_features(&dpp.sample(rng::derive_seed(seed, salt), m), &f, &phis)?;
                let y = embedded_features(&dpp.sample(rng::derive_seed(seed, salt + 1), m), &f, &phis)?;
                Ok(permutation_test(&x, &y, self.permutations, rng::derive_seed(seed, salt + 2))?.p_value)
            })
            .collect::<Result<Vec<_>>>()?;
        let ks_distance = stats::ks_uniform(&p_values);
        Ok(CalibrationReport {
            pass: ks_distance < CALIBRATION_KS,
            ks_distance,
            p_values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::project_span;
    use approx::assert_abs_diff_eq;

    fn brute_energy(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
        let d = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let mean = |u: &[Vec<f64>], v: &[Vec<f64>]| {
            u.iter().flat_map(|a| v.iter().map(move |b| d(a, b))).sum::<f64>() / (u.len() * v.len()) as f64
        };
        2.0 * mean(x, y) - mean(x, x) - mean(y, y)
    }

    #[test]
    fn grouped_energy_matches_pairwise_formula() {
        let mut r = rng::stream(3, 0);
        let mut batch = |m: usize| -> Vec<Vec<f64>> {
            (0..m)
                .map(|_| vec![r.random_range(0..3) as f64, r.random_range(0..2) as f64 * 0.5])
                .collect()
        };
        let (x, y) = (batch(40), batch(25));
        assert_abs_diff_eq!(energy_distance(&x, &y).unwrap(), brute_energy(&x, &y), epsilon = 1e-12);
        assert_abs_diff_eq!(energy_distance(&x, &x).unwrap(), 0.0);
        assert_abs_diff_eq!(
            energy_distance(&x, &y).unwrap(),
            energy_distance(&y, &x).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn one_dimensional_energy_of_point_masses() {
        // δ_0 vs δ_1: 2·1 − 0 − 0
        let x = vec![vec![0.0]; 5];
        let y = vec![vec![1.0]; 3];
        assert_abs_diff_eq!(energy_distance(&x, &y).unwrap(), 2.0);
    }

    #[test]
    fn overlapping_supports_rejected() {
        let err = check_disjoint_supports(&[vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
        check_disjoint_supports(&[vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 1.0]]).unwrap();
    }

    #[test]
    fn identical_batches_give_zero_statistic() {
        let s = Arc::new(GroundSpace::counting(4).unwrap());
        let p = project_span(&[vec![1.0, 1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0, -1.0]], &s).unwrap();
        let d = DppDistribution::new(p).unwrap();
        let batch = d.sample(5, 300);
        let f = WeightFunction::f(vec![1.0; 4]).unwrap();
        let phis = vec![vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]];
        let r = weak_convergence_test(&[(1, batch.clone())], &batch, &f, &phis, 99, 0).unwrap();
        assert_eq!(r.rows[0].statistic, 0.0);
        assert_eq!(r.rows[0].p_value, 1.0);
    }

    #[test]
    fn clearly_different_laws_are_rejected() {
        let s = Arc::new(GroundSpace::counting(4).unwrap());
        let left = DppDistribution::new(project_span(&[vec![1.0, 0.0, 0.0, 0.0]], &s).unwrap()).unwrap();
        let right = DppDistribution::new(project_span(&[vec![0.0, 0.0, 0.0, 1.0]], &s).unwrap()).unwrap();
        let f = WeightFunction::f(vec![1.0; 4]).unwrap();
        let phis = vec![vec![1.0, 1.0, 0.0, 0.0]];
        let x = embedded_features(&left.sample(1, 50), &f, &phis).unwrap();
        let y = embedded_features(&right.sample(2, 50), &f, &phis).unwrap();
        let t = permutation_test(&x, &y, 199, 9).unwrap();
        assert_abs_diff_eq!(t.p_value, 1.0 / 200.0);
    }

    #[test]
    fn weighted_count_law_matches_brute_force() {
        // single test function χ_W: the embedded law is the law of Σ_{x∈X∩W} f(x)
        let n = 7;
        let s = Arc::new(GroundSpace::counting(n).unwrap());
        let mut r = rng::stream(11, 0);
        let basis: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let d = DppDistribution::new(project_span(&basis, &s).unwrap().scaled(0.8)).unwrap();
        let f = WeightFunction::f(vec![1.0, 2.0, 1.0, 0.5, 1.0, 3.0, 1.0]).unwrap();
        let phi = vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let law = d.brute_force_distribution().unwrap();
        let mut exact: Vec<(f64, f64)> = Vec::new();
        for mask in 0..(1u64 << n) {
            let x = Configuration::from_mask(n, mask);
            let v = int_phi(&sigma_f(&x, &f).unwrap(), &phi).unwrap();
            match exact.iter_mut().find(|(w, _)| *w == v) {
                Some(e) => e.1 += law.probability(mask),
                None => exact.push((v, law.probability(mask))),
            }
        }
        let samples = d.sample(12, 20_000);
        let feats = embedded_features(&samples, &f, &[phi]).unwrap();
        let mut counts = vec![0u64; exact.len()];
        for v in &feats {
            let k = exact.iter().position(|(w, _)| *w == v[0]).expect("value in support");
            counts[k] += 1;
        }
        let probs: Vec<f64> = exact.iter().map(|e| e.1).collect();
        let gof = stats::chi_square_gof(&counts, &probs).unwrap();
        assert!(gof.p_value > 1e-3, "{gof:?}");
    }

    #[test]
    fn script_kernels_are_contractions_with_the_stated_spectrum() {
        let script = WeakConvergenceScript::default();
        let (base, seq) = script.kernels(4).unwrap();
        let mut spectrum = base.spectrum();
        spectrum.sort_by(f64::total_cmp);
        for (a, b) in spectrum.iter().zip(&script.eigenvalues) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert!(seq.iter().all(|(_, k)| k.is_positive_contraction(1e-12)));
    }

    #[test]
    fn small_perturbed_run_decreases() {
        let script = WeakConvergenceScript {
            schedule: vec![1, 4, 16],
            batch_size: 1000,
            permutations: 99,
            ..WeakConvergenceScript::default()
        };
        let r = script.run(21).unwrap();
        assert!(r.decreasing, "{:?}", r.rows);
    }
}
