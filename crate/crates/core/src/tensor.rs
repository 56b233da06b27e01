//! Tensor powers, lifted block vectors, and matrix-free application of the
//! Kronecker-sum and transfer blocks.
//!
//! Multi-indices are laid out row-major: `(i_1, ..., i_j)` sits at
//! `((i_1 n + i_2) n + ...) n + i_j`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CarlemanError, Result};
use crate::linalg::{DenseMatrix, InducedNorm, NormKind, C64};

pub const BUDGET_ENV: &str = "CARLEMAN_BUDGET_BYTES";

/// Upper bound on bytes of lifted block storage a single computation may hold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemoryBudget {
    bytes: u64,
}

impl Default for MemoryBudget {
    fn default() -> Self {
        MemoryBudget { bytes: 2 << 30 }
    }
}

impl MemoryBudget {
    pub fn new(bytes: u64) -> Self {
        MemoryBudget { bytes }
    }

    /// Default budget, overridden by `CARLEMAN_BUDGET_BYTES` when set.
    pub fn from_env() -> Result<Self> {
        match std::env::var(BUDGET_ENV) {
            Ok(s) => s
                .trim()
                .parse::<u64>()
                .map(MemoryBudget::new)
                .map_err(|_| CarlemanError::Config(format!("{BUDGET_ENV} must be a byte count, got `{s}`"))),
            Err(_) => Ok(Self::default()),
        }
    }

    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    /// Fail unless `copies` vectors of `elements` f64 entries fit.
    pub fn check(&self, elements: u128, copies: u128) -> Result<()> {
        let requested = elements.saturating_mul(copies).saturating_mul(8);
        if requested > self.bytes as u128 {
            Err(CarlemanError::BudgetExceeded { requested, limit: self.bytes })
        } else {
            Ok(())
        }
    }
}

/// `n^j` without overflow.
pub fn tensor_len(n: usize, j: usize) -> u128 {
    let mut len: u128 = 1;
    for _ in 0..j {
        len = len.saturating_mul(n as u128);
    }
    len
}

/// `Σ_{j=1..levels} n^j`
pub fn lifted_len(n: usize, levels: usize) -> u128 {
    (1..=levels).map(|j| tensor_len(n, j)).fold(0u128, |a, b| a.saturating_add(b))
}

/// `x^{⊗j}` in row-major multi-index order.
pub fn lift(x: &[f64], j: usize, budget: &MemoryBudget) -> Result<Vec<f64>> {
    if j == 0 {
        return Err(CarlemanError::invalid("lift level must be at least 1"));
    }
    budget.check(tensor_len(x.len(), j), 1)?;
    let mut out = x.to_vec();
    for _ in 1..j {
        out = kron_vec(&out, x);
    }
    Ok(out)
}

pub(crate) fn kron_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &u in a {
        out.extend(b.iter().map(|&v| u * v));
    }
    out
}

pub(crate) fn kron_vec_c(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &u in a {
        out.extend(b.iter().map(|&v| u * v));
    }
    out
}

/// Lifted state `(y_1, ..., y_N)` with block `j` of length `n^j`, stored
/// contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVector {
    n: usize,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(n: usize, levels: usize, budget: &MemoryBudget) -> Result<Self> {
        if n == 0 || levels == 0 {
            return Err(CarlemanError::invalid("block vector needs n >= 1 and N >= 1"));
        }
        let total = lifted_len(n, levels);
        budget.check(total, 1)?;
        let mut offsets = Vec::with_capacity(levels + 1);
        let mut acc = 0usize;
        offsets.push(0);
        for j in 1..=levels {
            acc += n.pow(j as u32);
            offsets.push(acc);
        }
        Ok(BlockVector { n, offsets, data: vec![0.0; acc] })
    }

    /// `(x, x⊗x, ..., x^{⊗N})`
    pub fn lifted(x: &[f64], levels: usize, budget: &MemoryBudget) -> Result<Self> {
        let mut v = Self::zeros(x.len(), levels, budget)?;
        v.block_mut(1).copy_from_slice(x);
        for j in 2..=levels {
            let (lo, hi) = v.data.split_at_mut(v.offsets[j - 1]);
            let prev = &lo[v.offsets[j - 2]..];
            let dst = &mut hi[..v.offsets[j] - v.offsets[j - 1]];
            let n = x.len();
            for (p, &u) in prev.iter().enumerate() {
                for (k, &xv) in x.iter().enumerate() {
                    dst[p * n + k] = u * xv;
                }
            }
        }
        Ok(v)
    }

    pub fn from_blocks(n: usize, blocks: &[Vec<f64>]) -> Result<Self> {
        let mut v = Self::zeros(n, blocks.len(), &MemoryBudget::new(u64::MAX))?;
        for (j, b) in blocks.iter().enumerate() {
            if b.len() != v.block(j + 1).len() {
                return Err(CarlemanError::invalid(format!("block {} has length {}, expected {}", j + 1, b.len(), n.pow(j as u32 + 1))));
            }
            if b.iter().any(|x| !x.is_finite()) {
                return Err(CarlemanError::invalid("block entries must be finite"));
            }
            v.block_mut(j + 1).copy_from_slice(b);
        }
        Ok(v)
    }

    pub fn base_dim(&self) -> usize {
        self.n
    }

    pub fn levels(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Block `j`, 1-based.
    pub fn block(&self, j: usize) -> &[f64] {
        &self.data[self.offsets[j - 1]..self.offsets[j]]
    }

    pub fn block_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[self.offsets[j - 1]..self.offsets[j]]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Real square matrix as sparse `(row, col, value)` triples, used for mode
/// contractions.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    n: usize,
    // A constant nonzero diagonal is kept out of the triples and applied once
    // per Kronecker sum instead of once per mode.
    uniform_diag: Option<f64>,
    triples: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    /// Drops exact zeros. Fails on complex entries.
    pub fn from_dense(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(CarlemanError::invalid("linear part must be square"));
        }
        if !a.is_real(0.0) {
            return Err(CarlemanError::invalid("linear part must be real"));
        }
        let n = a.rows();
        let d0 = a[(0, 0)].re;
        let uniform_diag = (d0 != 0.0 && (0..n).all(|i| a[(i, i)].re == d0)).then_some(d0);
        let mut triples = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let v = a[(r, c)].re;
                if v != 0.0 && !(r == c && uniform_diag.is_some()) {
                    triples.push((r, c, v));
                }
            }
        }
        Ok(SparseMatrix { n, uniform_diag, triples })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.triples.len() + if self.uniform_diag.is_some() { self.n } else { 0 }
    }

    /// `out += A_{j,j} y`, the Kronecker sum with `A` placed at each of the
    /// `j` modes.
    pub fn kronecker_sum_add(&self, j: usize, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.n.pow(j as u32));
        sum_over_modes(&self.triples, self.n, 1, j, y, out, TAIL_LIMIT);
        if let Some(d) = self.uniform_diag {
            let s = j as f64 * d;
            for (o, v) in out.iter_mut().zip(y) {
                *o += s * v;
            }
        }
    }
}

/// Largest input chunk (in entries) whose trailing modes are contracted
/// together while resident in cache.
const TAIL_LIMIT: usize = 4096;
const TILE: usize = 32;

/// `out[l, i, r] += v · y[l, k, r]` over the triples `(i, k, v)`, with `l`
/// ranging over `left` outer and `r` over `right` inner positions.
fn contract_mode(triples: &[(usize, usize, f64)], mid_out: usize, mid_in: usize, left: usize, right: usize, y: &[f64], out: &mut [f64]) {
    if right == 1 {
        for l in 0..left {
            let src = &y[l * mid_in..(l + 1) * mid_in];
            let dst = &mut out[l * mid_out..(l + 1) * mid_out];
            for &(i, k, v) in triples {
                dst[i] += v * src[k];
            }
        }
        return;
    }
    for l in 0..left {
        for &(i, k, v) in triples {
            let s = (l * mid_in + k) * right;
            let o = (l * mid_out + i) * right;
            axpy(v, &y[s..s + right], &mut out[o..o + right]);
        }
    }
}

#[inline]
fn axpy(v: f64, src: &[f64], dst: &mut [f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += v * s;
    }
}

/// `out += Σ_m (I^{⊗m} ⊗ F ⊗ I^{⊗(j−1−m)}) y` for an operator `F` mapping
/// `d` modes to one. Trailing modes are handled chunk by chunk and leading
/// modes tile by tile, so each pass over memory covers several modes.
fn sum_over_modes(triples: &[(usize, usize, f64)], n: usize, d: usize, j: usize, y: &[f64], out: &mut [f64], tail_limit: usize) {
    let nd = n.pow(d as u32);
    let mut t = 0;
    while t < j && n.pow((t + d) as u32) <= tail_limit {
        t += 1;
    }
    let h = j - t;
    let tail_out = n.pow(t as u32);
    let tail_in = n.pow((t + d - 1) as u32);

    if t > 0 {
        for c in 0..n.pow(h as u32) {
            let src = &y[c * tail_in..(c + 1) * tail_in];
            let dst = &mut out[c * tail_out..(c + 1) * tail_out];
            for m in 0..t {
                contract_mode(triples, n, nd, n.pow(m as u32), n.pow((t - 1 - m) as u32), src, dst);
            }
        }
    }

    let mut a = 0;
    while h > 0 && a < tail_out {
        let b = TILE.min(tail_out - a);
        for m in 0..h {
            let left = n.pow(m as u32);
            let inner = n.pow((h - 1 - m) as u32);
            for l in 0..left {
                for &(i, k, v) in triples {
                    for rh in 0..inner {
                        let s = ((l * nd + k) * inner + rh) * tail_out + a;
                        let o = ((l * n + i) * inner + rh) * tail_out + a;
                        axpy(v, &y[s..s + b], &mut out[o..o + b]);
                    }
                }
            }
        }
        a += b;
    }
}

/// Degree-`d` coupling `F_d : ℝ^{n^d} → ℝ^n`, stored as sparse
/// `(row, multi-index, value)` triples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CouplingSpec", into = "CouplingSpec")]
pub struct SparseCoupling {
    out_dim: usize,
    degree: usize,
    // Sorted by (row, column); column is the linearized multi-index.
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// Serialized form of a coupling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub dim: usize,
    pub degree: usize,
    pub entries: Vec<CouplingEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingEntry {
    pub row: usize,
    pub index: Vec<usize>,
    pub value: f64,
}

impl TryFrom<CouplingSpec> for SparseCoupling {
    type Error = CarlemanError;

    fn try_from(spec: CouplingSpec) -> Result<Self> {
        SparseCoupling::new(spec.dim, spec.degree, spec.entries.into_iter().map(|e| (e.row, e.index, e.value)))
    }
}

impl From<SparseCoupling> for CouplingSpec {
    fn from(c: SparseCoupling) -> Self {
        CouplingSpec { dim: c.out_dim, degree: c.degree, entries: c.entries().collect() }
    }
}

impl SparseCoupling {
    /// Rejects duplicate `(row, multi-index)` keys and out-of-range indices.
    /// Zero values are dropped.
    pub fn new(out_dim: usize, degree: usize, entries: impl IntoIterator<Item = (usize, Vec<usize>, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        Self::check_shape(out_dim, degree)?;
        for (row, idx, val) in entries {
            let col = Self::linearize(out_dim, degree, row, &idx)?;
            if !val.is_finite() {
                return Err(CarlemanError::invalid("coupling values must be finite"));
            }
            if map.insert((row, col), val).is_some() {
                return Err(CarlemanError::invalid(format!("duplicate coupling entry at row {row}, index {idx:?}")));
            }
        }
        Ok(Self::from_map(out_dim, degree, map))
    }

    /// Like [`SparseCoupling::new`] but sums duplicate keys.
    pub fn accumulate(out_dim: usize, degree: usize, entries: impl IntoIterator<Item = (usize, Vec<usize>, f64)>) -> Result<Self> {
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        Self::check_shape(out_dim, degree)?;
        for (row, idx, val) in entries {
            let col = Self::linearize(out_dim, degree, row, &idx)?;
            if !val.is_finite() {
                return Err(CarlemanError::invalid("coupling values must be finite"));
            }
            *map.entry((row, col)).or_insert(0.0) += val;
        }
        Ok(Self::from_map(out_dim, degree, map))
    }

    pub fn empty(out_dim: usize, degree: usize) -> Result<Self> {
        Self::new(out_dim, degree, std::iter::empty())
    }

    /// Sparse copy of a real `n × n^d` matrix.
    pub fn from_dense(a: &DenseMatrix, degree: usize, drop_tol: f64) -> Result<Self> {
        let n = a.rows();
        Self::check_shape(n, degree)?;
        if a.cols() as u128 != tensor_len(n, degree) {
            return Err(CarlemanError::invalid("coupling matrix must be n x n^d"));
        }
        if !a.is_real(0.0) {
            return Err(CarlemanError::invalid("coupling must be real"));
        }
        let mut map = BTreeMap::new();
        for r in 0..n {
            for c in 0..a.cols() {
                let v = a[(r, c)].re;
                if v.abs() > drop_tol {
                    map.insert((r, c), v);
                }
            }
        }
        Ok(Self::from_map(n, degree, map))
    }

    fn check_shape(out_dim: usize, degree: usize) -> Result<()> {
        if !(2..=3).contains(&degree) {
            return Err(CarlemanError::invalid(format!("coupling degree must be 2 or 3, got {degree}")));
        }
        if out_dim == 0 {
            return Err(CarlemanError::invalid("coupling dimension must be positive"));
        }
        Ok(())
    }

    fn linearize(n: usize, degree: usize, row: usize, idx: &[usize]) -> Result<usize> {
        if row >= n || idx.len() != degree || idx.iter().any(|&i| i >= n) {
            return Err(CarlemanError::invalid(format!("coupling entry ({row}, {idx:?}) out of range for n = {n}, d = {degree}")));
        }
        Ok(idx.iter().fold(0, |acc, &i| acc * n + i))
    }

    fn from_map(out_dim: usize, degree: usize, map: BTreeMap<(usize, usize), f64>) -> Self {
        let mut c = SparseCoupling { out_dim, degree, rows: Vec::new(), cols: Vec::new(), vals: Vec::new() };
        for ((r, col), v) in map {
            if v != 0.0 {
                c.rows.push(r);
                c.cols.push(col);
                c.vals.push(v);
            }
        }
        c
    }

    pub fn dim(&self) -> usize {
        self.out_dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    fn unlinearize(&self, mut col: usize) -> Vec<usize> {
        let mut idx = vec![0; self.degree];
        for slot in idx.iter_mut().rev() {
            *slot = col % self.out_dim;
            col /= self.out_dim;
        }
        idx
    }

    pub fn entries(&self) -> impl Iterator<Item = CouplingEntry> + '_ {
        (0..self.vals.len()).map(|e| CouplingEntry { row: self.rows[e], index: self.unlinearize(self.cols[e]), value: self.vals[e] })
    }

    /// `(row, linear column, value)` triples.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.vals.len()).map(|e| (self.rows[e], self.cols[e], self.vals[e]))
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut c = self.clone();
        c.vals.iter_mut().for_each(|v| *v *= s);
        if s == 0.0 {
            c.rows.clear();
            c.cols.clear();
            c.vals.clear();
        }
        c
    }

    /// `F_d x^{⊗d}` without forming the power.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim];
        self.apply_add(x, &mut out);
        out
    }

    pub(crate) fn apply_add(&self, x: &[f64], out: &mut [f64]) {
        let n = self.out_dim;
        for e in 0..self.vals.len() {
            let col = self.cols[e];
            let prod = if self.degree == 2 { x[col / n] * x[col % n] } else { x[col / (n * n)] * x[(col / n) % n] * x[col % n] };
            out[self.rows[e]] += self.vals[e] * prod;
        }
    }

    /// `F_d` applied to an arbitrary vector of length `n^d`.
    pub fn apply_linear(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim];
        for (r, c, v) in self.triples() {
            out[r] += v * z[c];
        }
        out
    }

    pub fn apply_linear_c(&self, z: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.out_dim];
        for (r, c, v) in self.triples() {
            out[r] += z[c] * v;
        }
        out
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let cols = self.out_dim.pow(self.degree as u32);
        let mut m = DenseMatrix::zeros(self.out_dim, cols);
        for (r, c, v) in self.triples() {
            m[(r, c)] = C64::new(v, 0.0);
        }
        m
    }

    /// `out += A_{j,j+d-1} y`: `F_d` contracted over each run of `d`
    /// consecutive modes of `y`, for the `j` possible starting modes.
    pub fn transfer_add(&self, j: usize, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.out_dim.pow((j + self.degree - 1) as u32));
        debug_assert_eq!(out.len(), self.out_dim.pow(j as u32));
        let triples: Vec<_> = self.triples().collect();
        sum_over_modes(&triples, self.out_dim, self.degree, j, y, out, TAIL_LIMIT);
    }
}

impl InducedNorm for SparseCoupling {
    /// Exact for `p = 1` and `p = inf`; `p = 2` needs a dense operand, see
    /// [`SparseCoupling::to_dense`].
    fn induced_norm(&self, p: NormKind) -> Result<f64> {
        match p {
            NormKind::One => {
                let mut cols: BTreeMap<usize, f64> = BTreeMap::new();
                for (_, c, v) in self.triples() {
                    *cols.entry(c).or_insert(0.0) += v.abs();
                }
                Ok(cols.values().copied().fold(0.0, f64::max))
            }
            NormKind::Inf => {
                let mut rows = vec![0.0; self.out_dim];
                for (r, _, v) in self.triples() {
                    rows[r] += v.abs();
                }
                Ok(rows.into_iter().fold(0.0, f64::max))
            }
            NormKind::Two => Err(CarlemanError::invalid("the 2-norm is only available for dense operands; densify the coupling first")),
        }
    }
}

/// `A_{j,j} y` for a dense real `F1`.
pub fn apply_kronecker_sum(f1: &DenseMatrix, j: usize, y: &[f64]) -> Result<Vec<f64>> {
    let a = SparseMatrix::from_dense(f1)?;
    if j == 0 || y.len() as u128 != tensor_len(a.dim(), j) {
        return Err(CarlemanError::invalid(format!("vector length {} is not n^{j}", y.len())));
    }
    let mut out = vec![0.0; y.len()];
    a.kronecker_sum_add(j, y, &mut out);
    Ok(out)
}

/// `A_{j,j+d-1} y`
pub fn apply_transfer(fd: &SparseCoupling, j: usize, y: &[f64]) -> Result<Vec<f64>> {
    if j == 0 || y.len() as u128 != tensor_len(fd.dim(), j + fd.degree() - 1) {
        return Err(CarlemanError::invalid(format!("vector length {} is not n^{}", y.len(), j + fd.degree() - 1)));
    }
    let mut out = vec![0.0; fd.dim().pow(j as u32)];
    fd.transfer_add(j, y, &mut out);
    Ok(out)
}

/// Dense `A_{j,j}` built from explicit Kronecker products.
pub fn dense_kronecker_sum(f1: &DenseMatrix, j: usize) -> DenseMatrix {
    let n = f1.rows();
    let size = n.pow(j as u32);
    let mut out = DenseMatrix::zeros(size, size);
    for m in 0..j {
        let term = DenseMatrix::identity(n.pow(m as u32)).kron(f1).kron(&DenseMatrix::identity(n.pow((j - 1 - m) as u32)));
        out = out.add(&term);
    }
    out
}

/// Dense `A_{j,j+d-1}` built from explicit Kronecker products.
pub fn dense_transfer(fd: &DenseMatrix, j: usize) -> DenseMatrix {
    let n = fd.rows();
    let degree = (fd.cols() as f64).log(n as f64).round() as usize;
    let mut out = DenseMatrix::zeros(n.pow(j as u32), n.pow((j + degree - 1) as u32));
    for m in 0..j {
        let term = DenseMatrix::identity(n.pow(m as u32)).kron(fd).kron(&DenseMatrix::identity(n.pow((j - 1 - m) as u32)));
        out = out.add(&term);
    }
    out
}
