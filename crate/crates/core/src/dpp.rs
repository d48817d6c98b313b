//! Determinantal probability measures on finite ground spaces.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::FiniteMeasure;
use crate::error::{Error, Result};
use crate::operator::{sorted_eigen, submatrix, KernelOperator, Window};
use crate::{par, rng};

/// Eigenvalues of `K̂` may stray this far outside `[0, 1]`; they are then
/// snapped back (values within the band of 0 or 1 become exactly 0 or 1).
pub const SPECTRUM_BAND: f64 = 1e-10;

/// Largest ground space the enumeration oracle accepts (`2^20` configurations).
pub const MAX_ENUMERATION: usize = 20;

/// A simple point configuration: a set of occupied grid indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    n_points: usize,
    occupied: Vec<usize>,
}

impl Configuration {
    pub fn new(n_points: usize, occupied: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut occupied: Vec<usize> = occupied.into_iter().collect();
        occupied.sort_unstable();
        if occupied.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::Argument("configurations cannot carry multiplicities".into()));
        }
        if let Some(&bad) = occupied.iter().find(|&&i| i >= n_points) {
            return Err(Error::Argument(format!(
                "configuration index {bad} out of bounds for {n_points} points"
            )));
        }
        Ok(Self { n_points, occupied })
    }

    pub fn empty(n_points: usize) -> Self {
        Self {
            n_points,
            occupied: Vec::new(),
        }
    }

    pub fn from_mask(n_points: usize, mask: u64) -> Self {
        Self {
            n_points,
            occupied: (0..n_points.min(64)).filter(|i| mask >> i & 1 == 1).collect(),
        }
    }

    /// Bitmask encoding (bit `i` set iff point `i` is occupied).
    pub fn mask(&self) -> Result<u64> {
        if self.n_points > 64 {
            return Err(Error::Size {
                n: self.n_points,
                max: 64,
            });
        }
        Ok(self.occupied.iter().fold(0u64, |m, &i| m | 1 << i))
    }

    pub fn occupied(&self) -> &[usize] {
        &self.occupied
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.occupied.binary_search(&i).is_ok()
    }

    /// `#_B(X)`.
    pub fn count_in(&self, window: &Window) -> usize {
        self.occupied.iter().filter(|&&i| window.contains(i)).count()
    }
}

/// Determinantal measure `P_K` of a positive contraction `K`.
#[derive(Debug, Clone)]
pub struct DppDistribution {
    kernel: KernelOperator,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl DppDistribution {
    pub fn new(kernel: KernelOperator) -> Result<Self> {
        let (raw, eigenvectors) = sorted_eigen(kernel.counting());
        let mut eigenvalues = Vec::with_capacity(raw.len());
        for l in raw {
            if !(-SPECTRUM_BAND..=1.0 + SPECTRUM_BAND).contains(&l) {
                return Err(Error::Contract(format!(
                    "kernel is not a positive contraction: eigenvalue {l:.6e} outside [0, 1]"
                )));
            }
            eigenvalues.push(snap(l));
        }
        Ok(Self {
            kernel,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn kernel(&self) -> &KernelOperator {
        &self.kernel
    }

    /// Snapped spectrum of `K̂`, decreasing.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.kernel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernel.is_empty()
    }

    /// Whether the (snapped) spectrum is `{0, 1}`-valued.
    pub fn is_projection(&self) -> bool {
        self.eigenvalues.iter().all(|&l| l == 0.0 || l == 1.0)
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.iter().filter(|&&l| l == 1.0).count()
    }

    /// Inclusion probability `P(A ⊆ X) = det K̂_A`.
    pub fn correlation(&self, a: &[usize]) -> Result<f64> {
        if a.is_empty() {
            return Ok(1.0);
        }
        if let Some(&bad) = a.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Argument(format!("index {bad} out of bounds")));
        }
        Ok(submatrix(self.kernel.counting(), a, a).determinant())
    }

    /// Exact probability of a single configuration: the determinant of the
    /// matrix whose rows on `S` come from `K̂` and whose rows off `S` come
    /// from `I − K̂`.
    pub fn configuration_probability(&self, config: &Configuration) -> Result<f64> {
        if config.n_points() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: config.n_points(),
            });
        }
        Ok(mixed_row_determinant(self.kernel.counting(), |i| config.contains(i)))
    }

    /// Probability of every configuration, indexed by bitmask.
    pub fn brute_force_distribution(&self) -> Result<DistributionTable> {
        let n = self.len();
        if n > MAX_ENUMERATION {
            return Err(Error::Size {
                n,
                max: MAX_ENUMERATION,
            });
        }
        let k = self.kernel.counting();
        let probs = par::map_range(1usize << n, |mask| {
            mixed_row_determinant(k, |i| mask >> i & 1 == 1)
        });
        Ok(DistributionTable { n_points: n, probs })
    }

    /// `count` i.i.d. exact samples. Sample `i` uses the stream `(seed, i)`,
    /// so the batch is the same for any thread count.
    pub fn sample(&self, seed: u64, count: usize) -> Vec<Configuration> {
        par::map_range(count, |i| {
            let mut r = rng::stream(seed, i as u64);
            self.sample_with(&mut r)
        })
    }

    /// One exact sample: Bernoulli selection of eigenvectors followed by
    /// sequential point selection in the selected (projection) subspace.
    pub fn sample_with(&self, rng: &mut impl Rng) -> Configuration {
        let n = self.len();
        let mut columns: Vec<DVector<f64>> = Vec::new();
        for (k, &l) in self.eigenvalues.iter().enumerate() {
            let u: f64 = rng.random();
            if u < l {
                columns.push(self.eigenvectors.column(k).into_owned());
            }
        }
        let mut points = Vec::with_capacity(columns.len());
        while !columns.is_empty() {
            let mass: Vec<f64> = (0..n)
                .map(|i| columns.iter().map(|c| c[i] * c[i]).sum())
                .collect();
            let total: f64 = mass.iter().sum();
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, m) in mass.iter().enumerate() {
                if *m <= 0.0 || points.contains(&i) {
                    continue;
                }
                acc += m;
                chosen = Some(i);
                if target < acc {
                    break;
                }
            }
            let Some(i) = chosen else { break };
            points.push(i);

            let pivot_index = (0..columns.len())
                .max_by(|&a, &b| columns[a][i].abs().total_cmp(&columns[b][i].abs()))
                .expect("nonempty");
            let pivot = columns.swap_remove(pivot_index);
            for c in columns.iter_mut() {
                let factor = c[i] / pivot[i];
                c.axpy(-factor, &pivot, 1.0);
                c[i] = 0.0;
            }
            reorthonormalize(&mut columns);
        }
        points.sort_unstable();
        Configuration {
            n_points: n,
            occupied: points,
        }
    }

    /// Intensity measure `ξP_K = K(x, x) μ`.
    pub fn intensity(&self) -> FiniteMeasure {
        FiniteMeasure::from_atoms(self.kernel.counting().diagonal().iter().copied().collect())
            .expect("diagonal of a positive contraction is nonnegative")
    }
}

fn snap(l: f64) -> f64 {
    if l.abs() <= SPECTRUM_BAND {
        0.0
    } else if (l - 1.0).abs() <= SPECTRUM_BAND {
        1.0
    } else {
        l.clamp(0.0, 1.0)
    }
}

fn mixed_row_determinant(k: &DMatrix<f64>, inside: impl Fn(usize) -> bool) -> f64 {
    let n = k.nrows();
    if n == 0 {
        return 1.0;
    }
    let m = DMatrix::from_fn(n, n, |i, j| {
        if inside(i) {
            k[(i, j)]
        } else if i == j {
            1.0 - k[(i, j)]
        } else {
            -k[(i, j)]
        }
    });
    m.determinant()
}

fn reorthonormalize(columns: &mut Vec<DVector<f64>>) {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(columns.len());
    for c in columns.drain(..) {
        let mut r = c;
        for _ in 0..2 {
            for q in &out {
                let d = q.dot(&r);
                r.axpy(-d, q, 1.0);
            }
        }
        let norm = r.norm();
        if norm > 1e-13 {
            out.push(r / norm);
        }
    }
    *columns = out;
}

/// Probability of every configuration on an `n`-point space, indexed by
/// bitmask.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionTable {
    n_points: usize,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistributionDoc {
    format_version: u32,
    n_points: usize,
    probabilities: BTreeMap<String, f64>,
}

impl DistributionTable {
    pub fn new(n_points: usize, probs: Vec<f64>) -> Result<Self> {
        if n_points > MAX_ENUMERATION {
            return Err(Error::Size {
                n: n_points,
                max: MAX_ENUMERATION,
            });
        }
        if probs.len() != 1 << n_points {
            return Err(Error::Dimension {
                expected: 1 << n_points,
                got: probs.len(),
            });
        }
        Ok(Self { n_points, probs })
    }

    /// Empirical frequencies of a sample batch.
    pub fn empirical(n_points: usize, samples: &[Configuration]) -> Result<Self> {
        if n_points > MAX_ENUMERATION {
            return Err(Error::Size {
                n: n_points,
                max: MAX_ENUMERATION,
            });
        }
        let mut probs = vec![0.0; 1 << n_points];
        if samples.is_empty() {
            return Ok(Self { n_points, probs });
        }
        let unit = 1.0 / samples.len() as f64;
        for s in samples {
            if s.n_points() != n_points {
                return Err(Error::Dimension {
                    expected: n_points,
                    got: s.n_points(),
                });
            }
            probs[s.mask()? as usize] += unit;
        }
        Ok(Self { n_points, probs })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn probability(&self, mask: u64) -> f64 {
        self.probs.get(mask as usize).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// `Σ_{S ⊇ A} P(S)`.
    pub fn inclusion(&self, a_mask: u64) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(m, _)| (*m as u64) & a_mask == a_mask)
            .map(|(_, p)| p)
            .sum()
    }

    /// Applies a nonnegative per-configuration weight and renormalizes.
    pub fn reweighted(&self, weight: impl Fn(u64) -> f64) -> Result<Self> {
        let raw: Vec<f64> = self
            .probs
            .iter()
            .enumerate()
            .map(|(m, p)| p * weight(m as u64))
            .collect();
        let z: f64 = raw.iter().sum();
        if !(z > 0.0) {
            return Err(Error::ConditioningImpossible { normalization: z });
        }
        Ok(Self {
            n_points: self.n_points,
            probs: raw.into_iter().map(|p| p / z).collect(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = DistributionDoc {
            format_version: crate::operator::FORMAT_VERSION,
            n_points: self.n_points,
            probabilities: self
                .probs
                .iter()
                .enumerate()
                .map(|(m, &p)| (m.to_string(), p))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DistributionDoc = serde_json::from_str(text)?;
        if doc.n_points > MAX_ENUMERATION {
            return Err(Error::Size {
                n: doc.n_points,
                max: MAX_ENUMERATION,
            });
        }
        let mut probs = vec![0.0; 1 << doc.n_points];
        for (key, p) in doc.probabilities {
            let m: usize = key
                .parse()
                .map_err(|_| Error::Format(format!("bad configuration mask {key:?}")))?;
            let slot = probs
                .get_mut(m)
                .ok_or_else(|| Error::Format(format!("mask {m} out of range")))?;
            *slot = p;
        }
        Ok(Self {
            n_points: doc.n_points,
            probs,
        })
    }
}

/// `½ Σ_S |p(S) − q(S)|`; configurations missing from one table count as 0.
pub fn total_variation(p: &DistributionTable, q: &DistributionTable) -> f64 {
    let len = p.probs.len().max(q.probs.len());
    0.5 * (0..len)
        .map(|m| {
            let a = p.probs.get(m).copied().unwrap_or(0.0);
            let b = q.probs.get(m).copied().unwrap_or(0.0);
            (a - b).abs()
        })
        .sum::<f64>()
}

/// Writes a sample batch: header `occupied`, then one line per configuration
/// with the occupied indices separated by spaces (an empty line is the empty
/// configuration).
pub fn samples_to_csv(samples: &[Configuration]) -> String {
    let mut out = String::from("occupied\n");
    for s in samples {
        let line: Vec<String> = s.occupied().iter().map(|i| i.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

/// Parses the batch format written by [`samples_to_csv`].
pub fn samples_from_csv(text: &str, n_points: usize) -> Result<Vec<Configuration>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "occupied" => {}
        _ => return Err(Error::Format("sample batch must start with the header `occupied`".into())),
    }
    lines
        .enumerate()
        .map(|(row, line)| {
            let indices = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| Error::Format(format!("row {}: bad index {t:?}", row + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            Configuration::new(n_points, indices)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{project_span, GroundSpace};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use std::sync::Arc;

    fn rank_one_half() -> DppDistribution {
        let s = Arc::new(GroundSpace::counting(2).unwrap());
        DppDistribution::new(project_span(&[vec![1.0, 1.0]], &s).unwrap()).unwrap()
    }

    fn random_contraction(seed: u64, n: usize) -> DppDistribution {
        let mut r = rng::stream(seed, 0);
        let s = Arc::new(GroundSpace::counting(n).unwrap());
        let a = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
        let q = a.qr().q();
        let lambda: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let k = &q * DMatrix::from_diagonal(&DVector::from_vec(lambda)) * q.transpose();
        DppDistribution::new(KernelOperator::from_counting(s, k).unwrap()).unwrap()
    }

    #[test]
    fn correlation_examples() {
        let d = rank_one_half();
        assert_eq!(d.correlation(&[]).unwrap(), 1.0);
        assert_abs_diff_eq!(d.correlation(&[1]).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.correlation(&[0, 1]).unwrap(), 0.0, epsilon = 1e-15);
        let s = Arc::new(GroundSpace::counting(3).unwrap());
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![0.2, 0.7, 0.4]));
        let d = DppDistribution::new(KernelOperator::from_counting(s, diag).unwrap()).unwrap();
        assert_abs_diff_eq!(d.correlation(&[1]).unwrap(), 0.7);
    }

    #[test]
    fn brute_force_examples() {
        let s = Arc::new(GroundSpace::counting(3).unwrap());
        let zero = DppDistribution::new(KernelOperator::zeros(s.clone())).unwrap();
        let t = zero.brute_force_distribution().unwrap();
        assert_eq!(t.probability(0), 1.0);
        assert_abs_diff_eq!(t.total(), 1.0);

        let one = DppDistribution::new(KernelOperator::identity(s)).unwrap();
        let t = one.brute_force_distribution().unwrap();
        assert_eq!(t.probability(0b111), 1.0);

        let t = rank_one_half().brute_force_distribution().unwrap();
        let expected = [0.0, 0.5, 0.5, 0.0];
        for (m, e) in expected.iter().enumerate() {
            assert_abs_diff_eq!(t.probability(m as u64), e, epsilon = 1e-15);
        }
    }

    #[test]
    fn enumeration_size_limit() {
        let s = Arc::new(GroundSpace::counting(21).unwrap());
        let d = DppDistribution::new(KernelOperator::zeros(s)).unwrap();
        assert!(matches!(d.brute_force_distribution(), Err(Error::Size { n: 21, max: 20 })));
    }

    #[test]
    fn sampling_examples() {
        let s = Arc::new(GroundSpace::counting(3).unwrap());
        let full = DppDistribution::new(KernelOperator::identity(s)).unwrap();
        assert!(full.sample(1, 50).iter().all(|c| c.occupied() == [0, 1, 2]));

        let s = Arc::new(GroundSpace::counting(2).unwrap());
        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let d = DppDistribution::new(KernelOperator::from_counting(s, k).unwrap()).unwrap();
        assert!(d.sample(2, 50).iter().all(|c| c.occupied() == [0]));
    }

    #[test]
    fn rank_one_frequencies() {
        let d = rank_one_half();
        let samples = d.sample(3, 100_000);
        let emp = DistributionTable::empirical(2, &samples).unwrap();
        assert!((emp.probability(0b01) - 0.5).abs() < 0.01);
        assert!((emp.probability(0b10) - 0.5).abs() < 0.01);
        assert_eq!(emp.probability(0b00) + emp.probability(0b11), 0.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = random_contraction(4, 6);
        assert_eq!(d.sample(99, 200), d.sample(99, 200));
        assert_ne!(d.sample(99, 200), d.sample(100, 200));
    }

    #[test]
    fn non_contraction_rejected() {
        let s = Arc::new(GroundSpace::counting(2).unwrap());
        let k = KernelOperator::identity(s).scaled(1.5);
        assert!(matches!(DppDistribution::new(k), Err(Error::Contract(_))));
    }

    #[test]
    fn intensity_examples() {
        let d = rank_one_half();
        let mu = d.intensity();
        assert_abs_diff_eq!(mu.atoms()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(mu.total_mass(), 1.0, epsilon = 1e-15);
        let s = Arc::new(GroundSpace::new(vec![0.0, 1.0], vec![0.3, 2.0], "w").unwrap());
        let id = DppDistribution::new(KernelOperator::identity(s)).unwrap();
        assert_eq!(id.intensity().atoms(), &[1.0, 1.0]);
    }

    #[test]
    fn total_variation_examples() {
        let p = DistributionTable::new(1, vec![0.5, 0.5]).unwrap();
        assert_eq!(total_variation(&p, &p), 0.0);
        let q = DistributionTable::new(1, vec![0.25, 0.75]).unwrap();
        assert_abs_diff_eq!(total_variation(&p, &q), 0.25);
        let a = DistributionTable::new(1, vec![1.0, 0.0]).unwrap();
        let b = DistributionTable::new(1, vec![0.0, 1.0]).unwrap();
        assert_eq!(total_variation(&a, &b), 1.0);
        // mismatched key sets are zero-filled
        let c = DistributionTable::new(2, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(total_variation(&a, &c), 1.0);
    }

    #[test]
    fn sample_batch_round_trip() {
        let batch = vec![
            Configuration::new(5, [3, 1]).unwrap(),
            Configuration::empty(5),
            Configuration::new(5, [0, 4, 2]).unwrap(),
        ];
        let text = samples_to_csv(&batch);
        assert_eq!(text, "occupied\n1 3\n\n0 2 4\n");
        assert_eq!(samples_from_csv(&text, 5).unwrap(), batch);
        assert!(samples_from_csv("occupied\n7\n", 5).is_err());
    }

    #[test]
    fn distribution_json_round_trip() {
        let t = random_contraction(5, 4).brute_force_distribution().unwrap();
        let back = DistributionTable::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn projection_rank_is_rigid() {
        let s = Arc::new(GroundSpace::midpoint(0.0, 1.0, 9).unwrap());
        let p = project_span(&[s.sample(|x| x), s.sample(|x| 1.0 - x * x), s.sample(|x| x.exp())], &s).unwrap();
        let d = DppDistribution::new(p).unwrap();
        assert!(d.is_projection());
        assert_eq!(d.rank(), 3);
        assert!(d.sample(6, 2000).iter().all(|c| c.len() == 3));
    }

    #[test]
    fn sampler_matches_brute_force_law() {
        let d = random_contraction(17, 5);
        let law = d.brute_force_distribution().unwrap();
        let gof = crate::stats::sample_gof(&d.sample(18, 20_000), &law).unwrap();
        assert!(gof.p_value > 1e-3, "{gof:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn brute_force_reproduces_correlations(seed in 0u64..10_000, n in 1usize..=8) {
            let d = random_contraction(seed, n);
            let t = d.brute_force_distribution().unwrap();
            prop_assert!((t.total() - 1.0).abs() < 1e-10);
            prop_assert!(t.probabilities().iter().all(|&p| p > -1e-12));
            for a_mask in 0u64..(1 << n) {
                let a: Vec<usize> = (0..n).filter(|i| a_mask >> i & 1 == 1).collect();
                prop_assert!((t.inclusion(a_mask) - d.correlation(&a).unwrap()).abs() < 1e-9);
            }
            prop_assert!((d.intensity().total_mass() - d.kernel().trace()).abs() < 1e-12);
        }
    }
}
