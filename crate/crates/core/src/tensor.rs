//! Dense pointwise tensors on a `2n`-dimensional tangent space.
//!
//! Components of the product structure are stored as `P^i_j` in row `i`,
//! column `j`, so `(Px)^i = P^i_j x^j`. Covariant tensors are stored
//! row-major with the first slot varying slowest.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

/// Largest accepted condition-number estimate for a metric.
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("dimension {0} is not a positive even integer")]
    OddDimension(usize),
    #[error("metric is not symmetric (max asymmetry {0:e})")]
    AsymmetricMetric(f64),
    #[error("metric is singular")]
    SingularMetric,
    #[error("slot {slot} out of range for rank {rank}")]
    SlotOutOfRange { slot: usize, rank: usize },
    #[error("contraction slots must be distinct")]
    RepeatedSlot,
    #[error("non-finite tensor entry")]
    NonFinite,
}

/// Dense covariant tensor of rank 0..=4 at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTensor {
    rank: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PointTensor {
    pub fn zeros(rank: usize, dim: usize) -> Self {
        PointTensor {
            rank,
            dim,
            data: vec![0.0; dim.pow(rank as u32)],
        }
    }

    pub fn scalar(value: f64) -> Self {
        PointTensor {
            rank: 0,
            dim: 0,
            data: vec![value],
        }
    }

    pub fn from_vec(rank: usize, dim: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if data.len() != dim.pow(rank as u32) {
            return Err(TensorError::DimensionMismatch(format!(
                "{} entries for rank {rank} in dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite);
        }
        Ok(PointTensor { rank, dim, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        PointTensor {
            rank: 1,
            dim: data.len(),
            data,
        }
    }

    pub fn from_fn2(dim: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        PointTensor { rank: 2, dim, data }
    }

    pub fn from_fn3(dim: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dim.pow(3));
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    data.push(f(i, j, k));
                }
            }
        }
        PointTensor { rank: 3, dim, data }
    }

    pub fn from_fn4(dim: usize, f: impl Fn(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dim.pow(4));
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    for l in 0..dim {
                        data.push(f(i, j, k, l));
                    }
                }
            }
        }
        PointTensor { rank: 4, dim, data }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank);
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    #[inline]
    pub fn at1(&self, i: usize) -> f64 {
        self.data[i]
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn at3(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dim + j) * self.dim + k]
    }

    #[inline]
    pub fn at4(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[((i * self.dim + j) * self.dim + k) * self.dim + l]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn zip(&self, other: &PointTensor, f: impl Fn(f64, f64) -> f64) -> PointTensor {
        assert_eq!(
            (self.rank, self.dim),
            (other.rank, other.dim),
            "tensor shape mismatch"
        );
        PointTensor {
            rank: self.rank,
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    pub fn add(&self, other: &PointTensor) -> PointTensor {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &PointTensor) -> PointTensor {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> PointTensor {
        PointTensor {
            rank: self.rank,
            dim: self.dim,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// `max |self - other|`.
    pub fn distance(&self, other: &PointTensor) -> f64 {
        self.sub(other).max_abs()
    }

    /// Rank-2 transpose.
    pub fn transpose(&self) -> PointTensor {
        assert_eq!(self.rank, 2);
        PointTensor::from_fn2(self.dim, |i, j| self.at2(j, i))
    }

    /// Tensor with slots permuted: result slot `s` reads source slot `perm[s]`.
    pub fn permute(&self, perm: &[usize]) -> PointTensor {
        assert_eq!(perm.len(), self.rank);
        let mut out = PointTensor::zeros(self.rank, self.dim);
        let mut src = vec![0; self.rank];
        for (flat, idx) in multi_indices(self.rank, self.dim).enumerate() {
            for (s, &p) in perm.iter().enumerate() {
                src[p] = idx[s];
            }
            out.data[flat] = self.get(&src);
        }
        out
    }
}

/// All index tuples of the given rank in row-major order.
pub fn multi_indices(rank: usize, dim: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = dim.pow(rank as u32);
    (0..total).map(move |mut flat| {
        let mut idx = vec![0; rank];
        for slot in (0..rank).rev() {
            idx[slot] = flat % dim;
            flat /= dim;
        }
        idx
    })
}

/// Symmetric positive-definite metric with cached inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricAtPoint {
    g: PointTensor,
    inv: PointTensor,
    min_eigenvalue: f64,
    max_eigenvalue: f64,
}

impl MetricAtPoint {
    /// Builds a metric from row-major entries. Asymmetry above `1e-10` is
    /// rejected; smaller asymmetry is averaged out so the stored matrix is
    /// exactly symmetric.
    pub fn new(dim: usize, entries: &[f64]) -> Result<Self, TensorError> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(TensorError::OddDimension(dim));
        }
        let raw = PointTensor::from_vec(2, dim, entries.to_vec())?;
        let asym = raw.distance(&raw.transpose());
        if asym > 1e-10 {
            return Err(TensorError::AsymmetricMetric(asym));
        }
        let g = PointTensor::from_fn2(dim, |i, j| 0.5 * (raw.at2(i, j) + raw.at2(j, i)));
        let m = DMatrix::from_row_slice(dim, dim, g.data());
        let eig = SymmetricEigen::new(m.clone());
        let min_eigenvalue = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_eigenvalue = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let inv_m = m.try_inverse().ok_or(TensorError::SingularMetric)?;
        let inv = PointTensor::from_fn2(dim, |i, j| 0.5 * (inv_m[(i, j)] + inv_m[(j, i)]));
        if inv.data().iter().any(|v| !v.is_finite()) {
            return Err(TensorError::SingularMetric);
        }
        Ok(MetricAtPoint {
            g,
            inv,
            min_eigenvalue,
            max_eigenvalue,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let eye = PointTensor::from_fn2(dim, |i, j| if i == j { 1.0 } else { 0.0 });
        MetricAtPoint::new(dim, eye.data()).expect("identity metric")
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    /// Half the dimension.
    pub fn n(&self) -> usize {
        self.g.dim() / 2
    }

    pub fn g(&self) -> &PointTensor {
        &self.g
    }

    pub fn inverse(&self) -> &PointTensor {
        &self.inv
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// Ratio of extreme eigenvalues; infinite when not positive definite.
    pub fn condition_estimate(&self) -> f64 {
        if self.min_eigenvalue <= 0.0 {
            f64::INFINITY
        } else {
            self.max_eigenvalue / self.min_eigenvalue
        }
    }

    pub fn is_well_conditioned(&self) -> bool {
        self.min_eigenvalue > 0.0 && self.condition_estimate() <= MAX_CONDITION
    }

    /// `max |g g^-1 - I|`.
    pub fn inverse_residual(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let s: f64 = (0..d).map(|k| self.g.at2(i, k) * self.inv.at2(k, j)).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }
}

/// Product structure `P^i_j` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductStructureAtPoint {
    p: PointTensor,
}

impl ProductStructureAtPoint {
    pub fn new(dim: usize, entries: &[f64]) -> Result<Self, TensorError> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(TensorError::OddDimension(dim));
        }
        Ok(ProductStructureAtPoint {
            p: PointTensor::from_vec(2, dim, entries.to_vec())?,
        })
    }

    /// `diag(+1 x n, -1 x n)`.
    pub fn canonical(n: usize) -> Self {
        let p = PointTensor::from_fn2(2 * n, |i, j| match (i == j, i < n) {
            (true, true) => 1.0,
            (true, false) => -1.0,
            _ => 0.0,
        });
        ProductStructureAtPoint { p }
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }

    /// `P^i_j`.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.p.at2(i, j)
    }

    pub fn matrix(&self) -> &PointTensor {
        &self.p
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.at(i, i)).sum()
    }
}

/// Max-norm residuals of the structural conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureDiagnostics {
    /// `max |P^2 - I|`
    pub involution: f64,
    /// `max |g(Pe_i, Pe_j) - g(e_i, e_j)|`
    pub compatibility: f64,
    /// `|tr P|`
    pub trace: f64,
    /// `max(0, -lambda_min(g))`
    pub definiteness: f64,
    pub condition: f64,
}

impl StructureDiagnostics {
    pub fn max_residual(&self) -> f64 {
        self.involution
            .max(self.compatibility)
            .max(self.trace)
            .max(self.definiteness)
    }

    pub fn passes(&self, threshold: f64) -> bool {
        self.max_residual() < threshold && self.condition <= MAX_CONDITION
    }
}

pub fn check_structure(
    g: &MetricAtPoint,
    p: &ProductStructureAtPoint,
) -> Result<StructureDiagnostics, TensorError> {
    let d = g.dim();
    if p.dim() != d {
        return Err(TensorError::DimensionMismatch(format!(
            "metric is {d}-dimensional, structure is {}-dimensional",
            p.dim()
        )));
    }
    let mut involution: f64 = 0.0;
    let mut compatibility: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let sq: f64 = (0..d).map(|k| p.at(i, k) * p.at(k, j)).sum();
            involution = involution.max((sq - if i == j { 1.0 } else { 0.0 }).abs());
            let mut gpp = 0.0;
            for a in 0..d {
                for b in 0..d {
                    gpp += p.at(a, i) * g.g().at2(a, b) * p.at(b, j);
                }
            }
            compatibility = compatibility.max((gpp - g.g().at2(i, j)).abs());
        }
    }
    Ok(StructureDiagnostics {
        involution,
        compatibility,
        trace: p.trace().abs(),
        definiteness: (-g.min_eigenvalue()).max(0.0),
        condition: g.condition_estimate(),
    })
}

/// `g~(x, y) = g(x, Py)`, i.e. `g~_ij = g_ik P^k_j`.
pub fn tilde_metric(
    g: &MetricAtPoint,
    p: &ProductStructureAtPoint,
) -> Result<PointTensor, TensorError> {
    let d = g.dim();
    if p.dim() != d {
        return Err(TensorError::DimensionMismatch("tilde metric".into()));
    }
    Ok(PointTensor::from_fn2(d, |i, j| {
        (0..d).map(|k| g.g().at2(i, k) * p.at(k, j)).sum()
    }))
}

/// Metric trace over two slots (0-based) of a rank-k tensor.
pub fn contract(
    t: &PointTensor,
    g_inv: &PointTensor,
    slot_a: usize,
    slot_b: usize,
) -> Result<PointTensor, TensorError> {
    let rank = t.rank();
    for slot in [slot_a, slot_b] {
        if slot >= rank {
            return Err(TensorError::SlotOutOfRange { slot, rank });
        }
    }
    if slot_a == slot_b {
        return Err(TensorError::RepeatedSlot);
    }
    let d = t.dim();
    if g_inv.dim() != d {
        return Err(TensorError::DimensionMismatch("contraction metric".into()));
    }
    let (lo, hi) = (slot_a.min(slot_b), slot_a.max(slot_b));
    let out_rank = rank - 2;
    let mut out = if out_rank == 0 {
        PointTensor::scalar(0.0)
    } else {
        PointTensor::zeros(out_rank, d)
    };
    let mut full = vec![0; rank];
    for (flat, idx) in multi_indices(out_rank, d).enumerate() {
        let mut rest = idx.iter();
        for (s, slot) in full.iter_mut().enumerate() {
            if s != lo && s != hi {
                *slot = *rest.next().unwrap();
            }
        }
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                let w = g_inv.at2(i, j);
                if w == 0.0 {
                    continue;
                }
                full[lo] = i;
                full[hi] = j;
                acc += w * t.get(&full);
            }
        }
        out.data[flat] = acc;
    }
    Ok(out)
}

/// Composes one covariant slot with `P`: result is `T(.., P e_i, ..)`.
pub fn apply_p(
    t: &PointTensor,
    p: &ProductStructureAtPoint,
    slot: usize,
) -> Result<PointTensor, TensorError> {
    let rank = t.rank();
    if slot >= rank {
        return Err(TensorError::SlotOutOfRange { slot, rank });
    }
    let d = t.dim();
    if p.dim() != d {
        return Err(TensorError::DimensionMismatch("P application".into()));
    }
    let mut out = PointTensor::zeros(rank, d);
    let mut src = vec![0; rank];
    for (flat, idx) in multi_indices(rank, d).enumerate() {
        src.copy_from_slice(&idx);
        let mut acc = 0.0;
        for m in 0..d {
            let w = p.at(m, idx[slot]);
            if w == 0.0 {
                continue;
            }
            src[slot] = m;
            acc += w * t.get(&src);
        }
        out.data[flat] = acc;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(entries: &[f64]) -> Vec<f64> {
        let d = entries.len();
        PointTensor::from_fn2(d, |i, j| if i == j { entries[i] } else { 0.0 })
            .data()
            .to_vec()
    }

    #[test]
    fn canonical_flat_product_is_exact() {
        let g = MetricAtPoint::identity(4);
        let p = ProductStructureAtPoint::canonical(2);
        let diag = check_structure(&g, &p).unwrap();
        assert_eq!(diag.max_residual(), 0.0);
    }

    #[test]
    fn trace_violation_detected() {
        let g = MetricAtPoint::identity(4);
        let p = ProductStructureAtPoint::new(4, &diag(&[1.0, 1.0, 1.0, -1.0])).unwrap();
        let d = check_structure(&g, &p).unwrap();
        assert_eq!(d.trace, 2.0);
        assert_eq!(d.involution, 0.0);
        assert_eq!(d.compatibility, 0.0);
    }

    #[test]
    fn diagonal_metric_commutes_with_diagonal_structure() {
        let g = MetricAtPoint::new(4, &diag(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        let p = ProductStructureAtPoint::canonical(2);
        assert_eq!(check_structure(&g, &p).unwrap().max_residual(), 0.0);
        assert!(g.inverse_residual() < 1e-10);
    }

    #[test]
    fn dimension_errors() {
        assert!(matches!(MetricAtPoint::new(3, &[0.0; 9]), Err(TensorError::OddDimension(3))));
        let g = MetricAtPoint::identity(4);
        let p = ProductStructureAtPoint::canonical(3);
        assert!(matches!(check_structure(&g, &p), Err(TensorError::DimensionMismatch(_))));
        let mut asym = diag(&[1.0; 4]);
        asym[1] = 0.5;
        assert!(matches!(MetricAtPoint::new(4, &asym), Err(TensorError::AsymmetricMetric(_))));
    }

    #[test]
    fn indefinite_metric_flags_definiteness() {
        let g = MetricAtPoint::new(4, &diag(&[1.0, 1.0, 1.0, -2.0])).unwrap();
        assert!(!g.is_well_conditioned());
        let d = check_structure(&g, &ProductStructureAtPoint::canonical(2)).unwrap();
        assert!((d.definiteness - 2.0).abs() < 1e-12);
    }

    #[test]
    fn tilde_metric_examples() {
        let p = ProductStructureAtPoint::canonical(2);
        let g = MetricAtPoint::identity(4);
        let gt = tilde_metric(&g, &p).unwrap();
        assert_eq!(gt.data(), diag(&[1.0, 1.0, -1.0, -1.0]).as_slice());
        let trace = contract(&gt, g.inverse(), 0, 1).unwrap();
        assert_eq!(trace.data()[0], 0.0);
        let g2 = MetricAtPoint::new(4, &diag(&[2.0, 2.0, 1.0, 1.0])).unwrap();
        let gt2 = tilde_metric(&g2, &p).unwrap();
        assert_eq!(gt2.data(), diag(&[2.0, 2.0, -1.0, -1.0]).as_slice());
    }

    #[test]
    fn contraction_of_identity_metric_is_dimension() {
        let g = MetricAtPoint::identity(4);
        let c = contract(g.g(), g.inverse(), 0, 1).unwrap();
        assert_eq!(c.rank(), 0);
        assert_eq!(c.data()[0], 4.0);
    }

    #[test]
    fn contraction_errors_and_zero() {
        let g = MetricAtPoint::identity(4);
        let z = PointTensor::zeros(4, 4);
        assert_eq!(contract(&z, g.inverse(), 0, 3).unwrap().max_abs(), 0.0);
        assert!(matches!(contract(&z, g.inverse(), 0, 4), Err(TensorError::SlotOutOfRange { .. })));
        assert!(matches!(contract(&z, g.inverse(), 1, 1), Err(TensorError::RepeatedSlot)));
    }

    #[test]
    fn permute_swaps_slots() {
        let t = PointTensor::from_fn3(2, |i, j, k| (i * 4 + j * 2 + k) as f64);
        let s = t.permute(&[0, 2, 1]);
        assert_eq!(s.at3(1, 0, 1), t.at3(1, 1, 0));
    }
}
