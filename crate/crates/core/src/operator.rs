//! Ground spaces, windows, kernel operators and the operator algebra built on
//! top of them.
//!
//! Kernels are stored relative to the reference measure `μ` (so that
//! `(Kf)(x) = Σ_y K(x, y) f(y) w_y`). Every spectral or determinantal
//! computation goes through the counting form `K̂ = W^{1/2} K W^{1/2}`, which
//! is an ordinary symmetric matrix acting on `ℓ²`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::par;

pub const FORMAT_VERSION: u32 = 1;

/// Idempotence tolerance for anything that claims to be a projection.
pub const PROJECTION_TOL: f64 = 1e-10;

/// Gram condition number beyond which a basis is considered degenerate.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;

/// Relative asymmetry accepted (and then removed) at kernel construction.
const SYMMETRY_TOL: f64 = 1e-9;

/// Finite discretization of a one-dimensional ground space `(E, μ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundSpace {
    points: Vec<f64>,
    weights: Vec<f64>,
    label: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundSpaceDoc {
    format_version: u32,
    label: String,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl GroundSpace {
    pub fn new(points: Vec<f64>, weights: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Argument("ground space needs at least one point".into()));
        }
        check_len(points.len(), weights.len())?;
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Argument(format!(
                "weight {i} is {} (weights must be finite and strictly positive)",
                weights[i]
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Argument("points must be finite".into()));
        }
        if let Some(i) = points.windows(2).position(|p| p[1] <= p[0]) {
            return Err(Error::Argument(format!(
                "points must be strictly increasing (violated at index {})",
                i + 1
            )));
        }
        Ok(Self {
            points,
            weights,
            label: label.into(),
        })
    }

    /// `n` points `0, 1, …, n-1` with unit weights (the plain counting space).
    pub fn counting(n: usize) -> Result<Self> {
        Self::new(
            (0..n).map(|i| i as f64).collect(),
            vec![1.0; n],
            format!("counting[{n}]"),
        )
    }

    /// Midpoint rule on `(a, b]` with `n` equal cells.
    pub fn midpoint(a: f64, b: f64, n: usize) -> Result<Self> {
        check_interval(a, b, n)?;
        let h = (b - a) / n as f64;
        Self::new(
            (0..n).map(|i| a + (i as f64 + 0.5) * h).collect(),
            vec![h; n],
            format!("midpoint({a},{b}]x{n}"),
        )
    }

    /// Log-spaced cells between `a > 0` and `b`; each point is the geometric
    /// centre of its cell and carries the cell length as weight.
    pub fn geometric(a: f64, b: f64, n: usize) -> Result<Self> {
        check_interval(a, b, n)?;
        if a <= 0.0 {
            return Err(Error::Domain("geometric grid needs a > 0".into()));
        }
        let ratio = (b / a).ln() / n as f64;
        let edge = |i: usize| a * (ratio * i as f64).exp();
        let points = (0..n).map(|i| (edge(i) * edge(i + 1)).sqrt()).collect();
        let weights = (0..n).map(|i| edge(i + 1) - edge(i)).collect();
        Self::new(points, weights, format!("geometric[{a:e},{b}]x{n}"))
    }

    /// Gauss–Legendre nodes and weights on `(a, b)`.
    pub fn gauss_legendre(a: f64, b: f64, n: usize) -> Result<Self> {
        check_interval(a, b, n)?;
        let (nodes, weights) = crate::scaling::quadrature::gauss_legendre_on(a, b, n);
        Self::new(nodes, weights, format!("gauss-legendre({a},{b})x{n}"))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Maps a function on the grid to its counting-form vector `√w · u`.
    pub fn to_counting(&self, u: &[f64]) -> Result<DVector<f64>> {
        check_len(self.len(), u.len())?;
        Ok(DVector::from_iterator(
            u.len(),
            u.iter().zip(&self.weights).map(|(x, w)| x * w.sqrt()),
        ))
    }

    /// Inverse of [`GroundSpace::to_counting`].
    pub fn from_counting(&self, v: &DVector<f64>) -> Vec<f64> {
        v.iter()
            .zip(&self.weights)
            .map(|(x, w)| x / w.sqrt())
            .collect()
    }

    /// Samples a function at the grid points.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.points.iter().map(|&x| f(x)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.doc())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GroundSpaceDoc = serde_json::from_str(text)?;
        Self::from_doc(doc)
    }

    fn doc(&self) -> GroundSpaceDoc {
        GroundSpaceDoc {
            format_version: FORMAT_VERSION,
            label: self.label.clone(),
            points: self.points.clone(),
            weights: self.weights.clone(),
        }
    }

    fn from_doc(doc: GroundSpaceDoc) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        Self::new(doc.points, doc.weights, doc.label)
    }
}

fn check_interval(a: f64, b: f64, n: usize) -> Result<()> {
    if n == 0 || !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Argument(format!(
            "bad grid: interval ({a}, {b}] with {n} points"
        )));
    }
    Ok(())
}

/// `Σ u(x) v(x) w_x`, the `L²(E, μ)` pairing on the grid.
pub fn weighted_inner(u: &[f64], v: &[f64], space: &GroundSpace) -> Result<f64> {
    check_len(space.len(), u.len())?;
    check_len(space.len(), v.len())?;
    Ok(u.iter()
        .zip(v)
        .zip(space.weights())
        .map(|((a, b), w)| a * b * w)
        .sum())
}

pub fn weighted_norm(u: &[f64], space: &GroundSpace) -> Result<f64> {
    Ok(weighted_inner(u, u, space)?.sqrt())
}

/// A set of ground-space indices (a bounded window `D ⊂ E`).
///
/// Windows cut from an interval may come out empty on a coarse grid; such
/// windows are legal and every windowed quantity over them is zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    indices: Vec<usize>,
    description: String,
}

impl Window {
    pub fn new(
        space: &GroundSpace,
        indices: impl IntoIterator<Item = usize>,
        description: impl Into<String>,
    ) -> Result<Self> {
        let mut indices: Vec<usize> = indices.into_iter().collect();
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&i| i >= space.len()) {
            return Err(Error::Argument(format!(
                "window index {bad} out of bounds for {} points",
                space.len()
            )));
        }
        Ok(Self {
            indices,
            description: description.into(),
        })
    }

    pub fn full(space: &GroundSpace) -> Self {
        Self {
            indices: (0..space.len()).collect(),
            description: "full".into(),
        }
    }

    /// Grid points with `lo ≤ x ≤ hi`.
    pub fn between(space: &GroundSpace, lo: f64, hi: f64) -> Self {
        Self {
            indices: space
                .points()
                .iter()
                .enumerate()
                .filter(|(_, &x)| x >= lo && x <= hi)
                .map(|(i, _)| i)
                .collect(),
            description: format!("[{lo},{hi}]"),
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn is_subset_of(&self, other: &Window) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }

    pub fn union(&self, other: &Window) -> Window {
        let mut indices = self.indices.clone();
        indices.extend_from_slice(&other.indices);
        indices.sort_unstable();
        indices.dedup();
        Window {
            indices,
            description: format!("{}∪{}", self.description, other.description),
        }
    }

    pub fn complement(&self, space: &GroundSpace) -> Window {
        Window {
            indices: (0..space.len()).filter(|&i| !self.contains(i)).collect(),
            description: format!("E∖{}", self.description),
        }
    }

    /// Indicator of the window as a grid function.
    pub fn indicator(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for &i in &self.indices {
            v[i] = 1.0;
        }
        v
    }
}

/// The four norms reported for a kernel (all on the counting form).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatorNorms {
    pub operator_norm: f64,
    pub hs_norm: f64,
    pub trace_norm: f64,
    pub trace: f64,
}

/// A windowed trace norm together with the empty-window warning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowedNorm {
    pub value: f64,
    pub empty_window: bool,
}

/// Real symmetric kernel on a ground space.
#[derive(Debug, Clone)]
pub struct KernelOperator {
    space: Arc<GroundSpace>,
    entries: DMatrix<f64>,
    counting: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelDoc {
    format_version: u32,
    space: GroundSpaceDoc,
    n: usize,
    /// Row-major `K(x_i, x_j)` relative to `μ`.
    entries: Vec<f64>,
}

impl KernelOperator {
    /// Builds a kernel from its `μ`-relative entries. Asymmetry up to a
    /// relative `1e-9` is removed by averaging; anything larger is rejected.
    pub fn from_entries(space: Arc<GroundSpace>, entries: DMatrix<f64>) -> Result<Self> {
        let n = space.len();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                got: entries.nrows().max(entries.ncols()),
            });
        }
        let entries = symmetrized(entries)?;
        let sw: Vec<f64> = space.weights().iter().map(|w| w.sqrt()).collect();
        let counting = DMatrix::from_fn(n, n, |i, j| sw[i] * entries[(i, j)] * sw[j]);
        Ok(Self {
            space,
            entries,
            counting,
        })
    }

    /// Builds a kernel from its counting form `K̂`.
    pub fn from_counting(space: Arc<GroundSpace>, counting: DMatrix<f64>) -> Result<Self> {
        let n = space.len();
        if counting.nrows() != n || counting.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                got: counting.nrows().max(counting.ncols()),
            });
        }
        let counting = symmetrized(counting)?;
        let sw: Vec<f64> = space.weights().iter().map(|w| w.sqrt()).collect();
        let entries = DMatrix::from_fn(n, n, |i, j| counting[(i, j)] / (sw[i] * sw[j]));
        Ok(Self {
            space,
            entries,
            counting,
        })
    }

    /// Evaluates a kernel function `K(x, y)` on the grid. Rows are assembled
    /// in parallel; the assembly order is fixed, so output is bit-stable.
    pub fn from_fn(space: Arc<GroundSpace>, kernel: impl Fn(f64, f64) -> f64 + Sync) -> Result<Self> {
        let n = space.len();
        let pts = space.points();
        let rows = par::map_range(n, |i| {
            (0..n).map(|j| kernel(pts[i], pts[j])).collect::<Vec<f64>>()
        });
        let entries = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::from_entries(space, entries)
    }

    pub fn zeros(space: Arc<GroundSpace>) -> Self {
        let n = space.len();
        Self {
            space,
            entries: DMatrix::zeros(n, n),
            counting: DMatrix::zeros(n, n),
        }
    }

    /// `K(x, y) = δ_{xy} / w_x`, whose counting form is the identity matrix.
    pub fn identity(space: Arc<GroundSpace>) -> Self {
        let n = space.len();
        let entries = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0 / space.weights()[i]
            } else {
                0.0
            }
        });
        Self {
            space,
            entries,
            counting: DMatrix::identity(n, n),
        }
    }

    pub fn space(&self) -> &Arc<GroundSpace> {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    /// `μ`-relative entries.
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn counting(&self) -> &DMatrix<f64> {
        &self.counting
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn same_space(&self, other: &KernelOperator) -> bool {
        Arc::ptr_eq(&self.space, &other.space) || *self.space == *other.space
    }

    fn require_same_space(&self, other: &KernelOperator) -> Result<()> {
        if self.same_space(other) {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "operators live on different ground spaces ({} vs {})",
                self.space.label(),
                other.space.label()
            )))
        }
    }

    pub fn difference(&self, other: &KernelOperator) -> Result<KernelOperator> {
        self.require_same_space(other)?;
        Ok(Self {
            space: self.space.clone(),
            entries: &self.entries - &other.entries,
            counting: &self.counting - &other.counting,
        })
    }

    pub fn sum(&self, other: &KernelOperator) -> Result<KernelOperator> {
        self.require_same_space(other)?;
        Ok(Self {
            space: self.space.clone(),
            entries: &self.entries + &other.entries,
            counting: &self.counting + &other.counting,
        })
    }

    pub fn scaled(&self, c: f64) -> KernelOperator {
        Self {
            space: self.space.clone(),
            entries: &self.entries * c,
            counting: &self.counting * c,
        }
    }

    /// `√f K √f` for a nonnegative grid function `f`.
    pub fn compressed(&self, f: &[f64]) -> Result<KernelOperator> {
        check_len(self.len(), f.len())?;
        if f.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::Domain("compression weight must be finite and nonnegative".into()));
        }
        let s: Vec<f64> = f.iter().map(|x| x.sqrt()).collect();
        let n = self.len();
        Ok(Self {
            space: self.space.clone(),
            entries: DMatrix::from_fn(n, n, |i, j| s[i] * self.entries[(i, j)] * s[j]),
            counting: DMatrix::from_fn(n, n, |i, j| s[i] * self.counting[(i, j)] * s[j]),
        })
    }

    /// `tr K = Σ K(x, x) w_x`.
    pub fn trace(&self) -> f64 {
        self.counting.diagonal().sum()
    }

    /// Eigenvalues of `K̂`, sorted in decreasing order.
    pub fn spectrum(&self) -> Vec<f64> {
        sorted_eigen(&self.counting).0
    }

    pub fn norms(&self) -> OperatorNorms {
        let eig = self.spectrum();
        OperatorNorms {
            operator_norm: eig.iter().fold(0.0_f64, |m, l| m.max(l.abs())),
            hs_norm: self.counting.norm(),
            trace_norm: eig.iter().map(|l| l.abs()).sum(),
            trace: self.trace(),
        }
    }

    /// Trace norm of `χ_A K χ_B` (counting form).
    pub fn local_trace_norm(&self, a: &Window, b: &Window) -> WindowedNorm {
        if a.is_empty() || b.is_empty() {
            return WindowedNorm {
                value: 0.0,
                empty_window: true,
            };
        }
        let block = submatrix(&self.counting, a.indices(), b.indices());
        let value = if a == b || a.indices() == b.indices() {
            SymmetricEigen::new(block).eigenvalues.iter().map(|l| l.abs()).sum()
        } else {
            block.svd(false, false).singular_values.sum()
        };
        WindowedNorm {
            value,
            empty_window: false,
        }
    }

    /// `max |K̂² − K̂|`.
    pub fn projection_defect(&self) -> f64 {
        let sq = &self.counting * &self.counting;
        (sq - &self.counting).amax()
    }

    pub fn is_projection(&self) -> bool {
        self.projection_defect() < PROJECTION_TOL
    }

    pub(crate) fn require_projection(&self) -> Result<()> {
        let defect = self.projection_defect();
        if defect < PROJECTION_TOL {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "operator is not a projection: max|P²-P| = {defect:.3e}"
            )))
        }
    }

    /// Spectrum of `K̂` inside `[-tol, 1 + tol]`.
    pub fn is_positive_contraction(&self, tol: f64) -> bool {
        let eig = self.spectrum();
        eig.first().is_none_or(|&top| top <= 1.0 + tol) && eig.last().is_none_or(|&low| low >= -tol)
    }

    /// Orthonormal counting-form basis of the range of a projection.
    pub fn range_basis(&self) -> Result<DMatrix<f64>> {
        self.require_projection()?;
        let (values, vectors) = sorted_eigen(&self.counting);
        let rank = values.iter().filter(|&&l| l > 0.5).count();
        Ok(vectors.columns(0, rank).into_owned())
    }

    /// Range basis returned as grid functions (`μ`-relative).
    pub fn range_functions(&self) -> Result<Vec<Vec<f64>>> {
        let basis = self.range_basis()?;
        Ok(basis
            .column_iter()
            .map(|c| self.space.from_counting(&c.into_owned()))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let n = self.len();
        let doc = KernelDoc {
            format_version: FORMAT_VERSION,
            space: self.space.doc(),
            n,
            entries: (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| self.entries[(i, j)])
                .collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: KernelDoc = serde_json::from_str(text)?;
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {}",
                doc.format_version
            )));
        }
        let space = Arc::new(GroundSpace::from_doc(doc.space)?);
        if doc.n != space.len() || doc.entries.len() != doc.n * doc.n {
            return Err(Error::Format(format!(
                "kernel declares n = {} with {} entries on a {}-point space",
                doc.n,
                doc.entries.len(),
                space.len()
            )));
        }
        let entries = DMatrix::from_row_slice(doc.n, doc.n, &doc.entries);
        Self::from_entries(space, entries)
    }
}

fn symmetrized(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = m.amax().max(1.0);
    let asym = (&m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale || asym.is_nan() {
        return Err(Error::Contract(format!(
            "kernel is not symmetric: max|K - Kᵀ| = {asym:.3e}"
        )));
    }
    Ok((&m + m.transpose()) * 0.5)
}

pub(crate) fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Symmetric eigen-decomposition with eigenpairs sorted by decreasing value.
pub(crate) fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Largest singular value of a (possibly rectangular) matrix.
pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn gram_condition(columns: &[DVector<f64>]) -> f64 {
    let k = columns.len();
    if k == 0 {
        return 1.0;
    }
    let g = DMatrix::from_fn(k, k, |i, j| columns[i].dot(&columns[j]));
    let eig = SymmetricEigen::new(g).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &l| (lo.min(l), hi.max(l)));
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Orthonormalizes counting-form vectors with modified Gram–Schmidt plus one
/// re-orthogonalization pass. The Gram matrix of the normalized inputs must
/// have condition number at most [`GRAM_CONDITION_LIMIT`]; otherwise the
/// first vector that breaks the bound is reported.
pub fn orthonormalize(vectors: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let n = vectors.first().map_or(0, |v| v.len());
    let mut unit = Vec::with_capacity(vectors.len());
    for (index, v) in vectors.iter().enumerate() {
        check_len(n, v.len())?;
        let norm = v.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateBasis {
                index,
                condition: f64::INFINITY,
            });
        }
        unit.push(v / norm);
    }
    let condition = gram_condition(&unit);
    if !(condition <= GRAM_CONDITION_LIMIT) {
        let index = (1..=unit.len())
            .find(|&k| !(gram_condition(&unit[..k]) <= GRAM_CONDITION_LIMIT))
            .map_or(unit.len() - 1, |k| k - 1);
        return Err(Error::DegenerateBasis { index, condition });
    }
    let mut q = DMatrix::zeros(n, unit.len());
    for (k, v) in unit.into_iter().enumerate() {
        let mut r = v;
        for _ in 0..2 {
            for j in 0..k {
                let c = q.column(j).dot(&r);
                r.axpy(-c, &q.column(j), 1.0);
            }
        }
        let norm = r.norm();
        q.set_column(k, &(r / norm));
    }
    Ok(q)
}

/// Orthogonal projection onto the span of grid functions, w.r.t. the
/// weighted inner product. An empty basis gives the zero operator.
pub fn project_span(basis: &[Vec<f64>], space: &Arc<GroundSpace>) -> Result<KernelOperator> {
    let hats = basis
        .iter()
        .map(|u| space.to_counting(u))
        .collect::<Result<Vec<_>>>()?;
    if hats.is_empty() {
        return Ok(KernelOperator::zeros(space.clone()));
    }
    let q = orthonormalize(&hats)?;
    KernelOperator::from_counting(space.clone(), &q * q.transpose())
}

/// `arcsin(‖(I − P)v‖ / ‖v‖)`, the angle between `v` and the range of the
/// projection `P`.
pub fn angle(v: &[f64], projection: &KernelOperator) -> Result<f64> {
    let hat = projection.space().to_counting(v)?;
    let norm = hat.norm();
    if !(norm > 0.0) {
        return Err(Error::Domain("angle of the zero vector is undefined".into()));
    }
    projection.require_projection()?;
    let residual = &hat - projection.counting() * &hat;
    Ok(ratio_angle(residual.norm() / norm))
}

/// Angle between a counting-form vector and the span of orthonormal columns.
pub(crate) fn angle_to_columns(v: &DVector<f64>, q: &DMatrix<f64>) -> f64 {
    let norm = v.norm();
    if !(norm > 0.0) {
        return 0.0;
    }
    let residual = residual_against(v, q);
    ratio_angle(residual.norm() / norm)
}

/// `v − Q Qᵀ v`, computed twice for stability.
pub(crate) fn residual_against(v: &DVector<f64>, q: &DMatrix<f64>) -> DVector<f64> {
    let mut r = v.clone();
    if q.ncols() == 0 {
        return r;
    }
    for _ in 0..2 {
        let c = q.transpose() * &r;
        r -= q * c;
    }
    r
}

fn ratio_angle(ratio: f64) -> f64 {
    ratio.clamp(0.0, 1.0).asin()
}

/// Smallest principal angle between the column spans of two orthonormal
/// factors.
pub fn principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 || b.ncols() == 0 {
        return std::f64::consts::FRAC_PI_2;
    }
    let cos = spectral_norm(&(a.transpose() * b)).clamp(0.0, 1.0);
    cos.acos()
}

/// Trace norm of `χ_W (A Aᵀ − B Bᵀ) χ_W` for tall factors `A`, `B`,
/// computed without forming the `n × n` matrices: with `C = [A_W B_W] = QR`
/// and `S = diag(I, −I)`, the nonzero spectrum of `C S Cᵀ` equals that of
/// `R S Rᵀ`.
pub fn factored_trace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>, window: &Window) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    let (p, q) = (a.ncols(), b.ncols());
    if p + q == 0 {
        return 0.0;
    }
    let rows = window.indices();
    let c = DMatrix::from_fn(rows.len(), p + q, |i, j| {
        if j < p {
            a[(rows[i], j)]
        } else {
            b[(rows[i], j - p)]
        }
    });
    let r = c.qr().r();
    let sign = DMatrix::from_fn(p + q, p + q, |i, j| {
        if i != j {
            0.0
        } else if i < p {
            1.0
        } else {
            -1.0
        }
    });
    let core = &r * sign * r.transpose();
    SymmetricEigen::new((&core + core.transpose()) * 0.5)
        .eigenvalues
        .iter()
        .map(|l| l.abs())
        .sum()
}

/// Finite-dimensional subspace of `L²(E, μ)` given by a basis of grid
/// functions.
#[derive(Debug, Clone)]
pub struct Subspace {
    space: Arc<GroundSpace>,
    basis: Vec<Vec<f64>>,
    orthonormal: bool,
}

impl Subspace {
    pub fn new(space: Arc<GroundSpace>, basis: Vec<Vec<f64>>) -> Result<Self> {
        for u in &basis {
            check_len(space.len(), u.len())?;
        }
        Ok(Self {
            space,
            basis,
            orthonormal: false,
        })
    }

    /// Orthonormal basis (weighted inner product) of the same span.
    pub fn orthonormalized(&self) -> Result<Self> {
        if self.orthonormal {
            return Ok(self.clone());
        }
        let q = self.counting_basis()?;
        Ok(Self {
            space: self.space.clone(),
            basis: q
                .column_iter()
                .map(|c| self.space.from_counting(&c.into_owned()))
                .collect(),
            orthonormal: true,
        })
    }

    /// Orthonormal counting-form columns spanning the subspace.
    pub fn counting_basis(&self) -> Result<DMatrix<f64>> {
        if self.basis.is_empty() {
            return Ok(DMatrix::zeros(self.space.len(), 0));
        }
        let hats = self
            .basis
            .iter()
            .map(|u| self.space.to_counting(u))
            .collect::<Result<Vec<_>>>()?;
        if self.orthonormal {
            return Ok(DMatrix::from_columns(&hats));
        }
        orthonormalize(&hats)
    }

    pub fn projection(&self) -> Result<KernelOperator> {
        project_span(&self.basis, &self.space)
    }

    pub fn space(&self) -> &Arc<GroundSpace> {
        &self.space
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `max |⟨u_i, u_j⟩ − δ_ij|`.
    pub fn gram_defect(&self) -> Result<f64> {
        let k = self.basis.len();
        let mut worst = 0.0_f64;
        for i in 0..k {
            for j in 0..k {
                let g = weighted_inner(&self.basis[i], &self.basis[j], &self.space)?;
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        Ok(worst)
    }
}
