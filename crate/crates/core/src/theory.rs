//! Constructive checks of the Carleman eigenstructure on small materialized
//! instances: resolvents, the ξ recursion, closed-form eigenvectors, the
//! block bounds on the eigenvector matrix, and the Catalan identity behind
//! them.
//!
//! Everything here builds dense matrices of size `Σ n^j` and is meant for
//! `n ≤ 3`, `N ≤ 5`.

use std::collections::HashMap;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::carleman::{CarlemanOperator, PolynomialSystem};
use crate::error::{CarlemanError, Result};
use crate::linalg::{condition_number_1, eigendecompose, eigenvalues, DenseMatrix, EigenDecomposition, InducedNorm, Lu, NormKind, C64, DEFAULT_EIG_TOL};
use crate::spectral::{resonance_delta, ResonanceOptions};
use crate::tensor::{kron_vec_c, lift, MemoryBudget, SparseCoupling};

pub const MAX_BASE_DIM: usize = 3;
pub const MAX_LEVELS: usize = 5;
/// Shifts closer than this (relative to `max(1, ρ(F1))`) to an eigenvalue are resonant.
pub const SHIFT_TOL: f64 = 1e-8;
pub const RESIDUAL_TOL: f64 = 1e-8;
pub const DIAGONALIZATION_TOL: f64 = 1e-6;
const MAX_CATALAN_ARG: usize = 30;

const ZERO: C64 = C64::new(0.0, 0.0);

fn norm1(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).sum()
}

fn shift_tol(decomp: &EigenDecomposition) -> f64 {
    SHIFT_TOL * decomp.spectral_radius().max(1.0)
}

/// `((λ_{i_1}+…+λ_{i_m}) I − F1)⁻¹`
#[derive(Clone, Debug)]
pub struct ResolventG {
    pub shift: C64,
    pub matrix: DenseMatrix,
}

pub fn build_resolvent(f1: &DenseMatrix, decomp: &EigenDecomposition, indices: &[usize]) -> Result<ResolventG> {
    if indices.is_empty() || indices.iter().any(|&i| i >= decomp.dim()) {
        return Err(CarlemanError::invalid("resolvent indices out of range"));
    }
    let shift: C64 = indices.iter().map(|&i| decomp.eigenvalues[i]).sum();
    let tol = shift_tol(decomp);
    for &l in &decomp.eigenvalues {
        if (shift - l).norm() <= tol {
            return Err(CarlemanError::ResonantShift { shift, eigenvalue: l, tol });
        }
    }
    let n = f1.rows();
    let m = f1.shifted(shift).scale(C64::new(-1.0, 0.0));
    let matrix = Lu::factor(&m)?.inverse()?;
    let residual = m.matmul(&matrix).sub(&DenseMatrix::identity(n)).norm1();
    if residual > RESIDUAL_TOL {
        return Err(CarlemanError::Singular { pivot: residual });
    }
    Ok(ResolventG { shift, matrix })
}

/// `ξ_m^{(k)}` for the tuple, starting at position `start` (0-based).
#[derive(Clone, Debug, PartialEq)]
pub struct XiVector {
    pub positions: Vec<usize>,
    pub start: usize,
    pub order: usize,
    pub vector: Vec<C64>,
}

/// Memoized segment data for one tuple. A segment `[s, s+k]` carries
/// `ξ` of order `k` and `v = G ξ` (or the bare eigenvector when `k = 0`).
struct Segments<'a> {
    f1: &'a DenseMatrix,
    f2: &'a SparseCoupling,
    decomp: &'a EigenDecomposition,
    tuple: &'a [usize],
    xi: HashMap<(usize, usize), Vec<C64>>,
    v: HashMap<(usize, usize), Vec<C64>>,
    g_norms: Vec<(usize, f64)>,
}

impl<'a> Segments<'a> {
    fn new(system: &'a PolynomialSystem, decomp: &'a EigenDecomposition, tuple: &'a [usize]) -> Self {
        Segments { f1: system.f1(), f2: system.coupling(), decomp, tuple, xi: HashMap::new(), v: HashMap::new(), g_norms: Vec::new() }
    }

    fn xi(&mut self, start: usize, order: usize) -> Result<Vec<C64>> {
        if order == 0 {
            return Ok(self.decomp.right_vector(self.tuple[start]));
        }
        if let Some(x) = self.xi.get(&(start, order)) {
            return Ok(x.clone());
        }
        let mut acc = vec![ZERO; self.f1.rows()];
        for a in 0..order {
            let left = self.v(start, a)?;
            let right = self.v(start + a + 1, order - 1 - a)?;
            for (s, t) in acc.iter_mut().zip(self.f2.apply_linear_c(&kron_vec_c(&left, &right))) {
                *s += t;
            }
        }
        self.xi.insert((start, order), acc.clone());
        Ok(acc)
    }

    fn v(&mut self, start: usize, order: usize) -> Result<Vec<C64>> {
        if order == 0 {
            return Ok(self.decomp.right_vector(self.tuple[start]));
        }
        if let Some(x) = self.v.get(&(start, order)) {
            return Ok(x.clone());
        }
        let xi = self.xi(start, order)?;
        let g = build_resolvent(self.f1, self.decomp, &self.tuple[start..=start + order])?;
        self.g_norms.push((order + 1, g.matrix.norm1()));
        let v = g.matrix.matvec(&xi);
        self.v.insert((start, order), v.clone());
        Ok(v)
    }
}

fn check_tuple(system: &PolynomialSystem, tuple: &[usize]) -> Result<()> {
    if system.degree() != 2 {
        return Err(CarlemanError::invalid("eigenvector formulas need a quadratic system"));
    }
    if tuple.is_empty() || tuple.iter().any(|&i| i >= system.dim()) {
        return Err(CarlemanError::invalid("tuple entries must index eigenvalues"));
    }
    Ok(())
}

/// Memoized ξ recursion: `ξ^{(0)} = w_{i_m}`, and order `k` sums
/// `F2(G ξ^{(a)} ⊗ G ξ^{(k−1−a)})` over the split points of the segment.
pub fn xi_recursion(system: &PolynomialSystem, decomp: &EigenDecomposition, tuple: &[usize], start: usize, order: usize) -> Result<XiVector> {
    check_tuple(system, tuple)?;
    if start + order >= tuple.len() {
        return Err(CarlemanError::invalid("ξ order exceeds the remaining tuple length"));
    }
    let vector = Segments::new(system, decomp, tuple).xi(start, order)?;
    Ok(XiVector { positions: tuple.to_vec(), start, order, vector })
}

/// Eigenvector of the truncated operator for `λ = Σ λ_{i_k}`; `blocks[m-1]`
/// is `w_m`, with `w_j` the pure tensor product and zero above level `j`.
#[derive(Clone, Debug)]
pub struct EigenvectorBlocks {
    pub lambda: C64,
    pub tuple: Vec<usize>,
    pub blocks: Vec<Vec<C64>>,
}

impl EigenvectorBlocks {
    /// Stacked into the `Σ_{m≤N} n^m` lifted layout.
    pub fn flatten(&self, n: usize, levels: usize) -> Vec<C64> {
        let mut out = Vec::new();
        for m in 1..=levels {
            match self.blocks.get(m - 1) {
                Some(b) => out.extend_from_slice(b),
                None => out.extend(std::iter::repeat(ZERO).take(n.pow(m as u32))),
            }
        }
        out
    }
}

/// Compositions of `total` into `parts` positive integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for first in 1..=left - (parts - 1) {
            cur.push(first);
            rec(left - first, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if parts >= 1 && parts <= total {
        rec(total, parts, &mut Vec::new(), &mut out);
    }
    out
}

struct Construction {
    eigenvector: EigenvectorBlocks,
    g_norms: Vec<(usize, f64)>,
    xi_norms: Vec<(usize, f64)>,
}

fn construct(system: &PolynomialSystem, decomp: &EigenDecomposition, tuple: &[usize]) -> Result<Construction> {
    check_tuple(system, tuple)?;
    let j = tuple.len();
    let mut seg = Segments::new(system, decomp, tuple);
    let mut blocks = Vec::with_capacity(j);
    for m in 1..=j {
        let len = system.dim().pow(m as u32);
        let mut block = vec![ZERO; len];
        for sizes in compositions(j, m) {
            let mut term = vec![C64::new(1.0, 0.0)];
            let mut start = 0;
            for &s in &sizes {
                term = kron_vec_c(&term, &seg.v(start, s - 1)?);
                start += s;
            }
            for (b, t) in block.iter_mut().zip(term) {
                *b += t;
            }
        }
        blocks.push(block);
    }
    let lambda = tuple.iter().map(|&i| decomp.eigenvalues[i]).sum();
    let xi_norms = seg.xi.iter().map(|(&(_, k), v)| (k, norm1(v))).collect();
    Ok(Construction { eigenvector: EigenvectorBlocks { lambda, tuple: tuple.to_vec(), blocks }, g_norms: seg.g_norms, xi_norms })
}

/// Closed-form eigenvector: block `w_{j−k}` is the sum over all ways of
/// cutting the tuple into `j − k` contiguous segments of the tensor product
/// of segment vectors.
pub fn build_eigenvector(system: &PolynomialSystem, decomp: &EigenDecomposition, tuple: &[usize], levels: usize, budget: &MemoryBudget) -> Result<EigenvectorBlocks> {
    if tuple.len() > levels {
        return Err(CarlemanError::invalid("tuple longer than the truncation level"));
    }
    budget.check(crate::tensor::lifted_len(system.dim(), tuple.len()), 4)?;
    Ok(construct(system, decomp, tuple)?.eigenvector)
}

/// Kronecker powers of `W` and `W⁻¹` and the diagonal of each `A_{m,m}`
/// in eigen-coordinates.
pub struct TensorBasis {
    n: usize,
    w: Vec<DenseMatrix>,
    w_inv: Vec<DenseMatrix>,
    diag: Vec<Vec<C64>>,
}

impl TensorBasis {
    pub fn new(decomp: &EigenDecomposition, levels: usize) -> Self {
        let n = decomp.dim();
        let mut w = vec![decomp.right.clone()];
        let mut w_inv = vec![decomp.left.clone()];
        let mut diag = vec![decomp.eigenvalues.clone()];
        for m in 1..levels {
            w.push(w[m - 1].kron(&decomp.right));
            w_inv.push(w_inv[m - 1].kron(&decomp.left));
            let prev = &diag[m - 1];
            diag.push(prev.iter().flat_map(|&a| decomp.eigenvalues.iter().map(move |&b| a + b)).collect());
        }
        TensorBasis { n, w, w_inv, diag }
    }

    /// `W^{⊗m}`
    pub fn w(&self, m: usize) -> &DenseMatrix {
        &self.w[m - 1]
    }

    /// `(W⁻¹)^{⊗m}`
    pub fn w_inv(&self, m: usize) -> &DenseMatrix {
        &self.w_inv[m - 1]
    }

    pub fn base_dim(&self) -> usize {
        self.n
    }
}

/// Result of solving `(λ − A_{m,m}) w_m = A_{m,m+1} w_{m+1}` level by level.
#[derive(Clone, Debug)]
pub struct BackSubstitution {
    pub eigenvector: EigenvectorBlocks,
    /// Components where `λ` coincides with a diagonal entry of `A_{m,m}`.
    pub null_components: usize,
    /// Largest right-hand side component along such a null direction.
    pub compatibility_defect: f64,
}

/// Independent route to the eigenvector: each level is solved in
/// eigen-coordinates, with a pseudo-inverse on null directions.
pub fn back_substitute(a: &DenseMatrix, basis: &TensorBasis, decomp: &EigenDecomposition, tuple: &[usize]) -> Result<BackSubstitution> {
    let n = basis.n;
    let j = tuple.len();
    if j == 0 || j > basis.w.len() {
        return Err(CarlemanError::invalid("tuple length outside the basis levels"));
    }
    let lambda: C64 = tuple.iter().map(|&i| decomp.eigenvalues[i]).sum();
    let offsets: Vec<usize> = (0..=j).map(|m| (1..=m).map(|l| n.pow(l as u32)).sum()).collect();
    let mut top = vec![C64::new(1.0, 0.0)];
    for &i in tuple {
        top = kron_vec_c(&top, &decomp.right_vector(i));
    }
    let mut blocks = vec![Vec::new(); j];
    blocks[j - 1] = top;
    let tol = shift_tol(decomp);
    let mut null_components = 0;
    let mut compatibility_defect: f64 = 0.0;
    for m in (1..j).rev() {
        let rows = n.pow(m as u32);
        let cols = n.pow(m as u32 + 1);
        let rhs = a.block(offsets[m - 1], offsets[m], rows, cols).matvec(&blocks[m]);
        let mut hat = basis.w_inv(m).matvec(&rhs);
        for (h, &d) in hat.iter_mut().zip(&basis.diag[m - 1]) {
            let gap = lambda - d;
            if gap.norm() <= tol {
                null_components += 1;
                compatibility_defect = compatibility_defect.max(h.norm());
                *h = ZERO;
            } else {
                *h /= gap;
            }
        }
        blocks[m - 1] = basis.w(m).matvec(&hat);
    }
    if compatibility_defect > RESIDUAL_TOL {
        return Err(CarlemanError::invalid(format!("right-hand side has a {compatibility_defect:.3e} component along the null space")));
    }
    Ok(BackSubstitution { eigenvector: EigenvectorBlocks { lambda, tuple: tuple.to_vec(), blocks }, null_components, compatibility_defect })
}

pub fn catalan(k: usize) -> BigUint {
    binomial(2 * k, k) / BigUint::from(k + 1)
}

pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// `Σ_{k_1+…+k_r=k} C(k_1)⋯C(k_r)` evaluated two ways.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CatalanProductSum {
    pub k: usize,
    pub r: usize,
    /// `r`-fold convolution of the Catalan sequence.
    pub convolution: BigUint,
    /// `r/(2k+r) · binom(2k+r, k)`
    pub closed_form: BigUint,
}

impl CatalanProductSum {
    pub fn agrees(&self) -> bool {
        self.convolution == self.closed_form
    }
}

pub fn catalan_product_sum(k: usize, r: usize) -> Result<CatalanProductSum> {
    if r == 0 || k > MAX_CATALAN_ARG || r > MAX_CATALAN_ARG {
        return Err(CarlemanError::invalid(format!("catalan product sum needs 1 <= r <= {MAX_CATALAN_ARG} and k <= {MAX_CATALAN_ARG}")));
    }
    let cat: Vec<BigUint> = (0..=k).map(catalan).collect();
    let mut series = cat.clone();
    for _ in 1..r {
        series = (0..=k).map(|t| (0..=t).map(|a| &series[a] * &cat[t - a]).sum()).collect();
    }
    let closed_form = BigUint::from(r) * binomial(2 * k + r, k) / BigUint::from(2 * k + r);
    Ok(CatalanProductSum { k, r, convolution: series[k].clone(), closed_form })
}

/// Worst case of one family of inequalities `measured ≤ bound`.
#[derive(Clone, Debug, Serialize)]
pub struct InequalityCheck {
    pub name: String,
    pub count: usize,
    /// `min (bound − measured)`
    pub min_slack: f64,
    /// `max measured / bound`
    pub max_ratio: f64,
    pub holds: bool,
}

impl InequalityCheck {
    fn new(name: &str) -> Self {
        InequalityCheck { name: name.to_string(), count: 0, min_slack: f64::INFINITY, max_ratio: 0.0, holds: true }
    }

    fn record(&mut self, measured: f64, bound: f64) {
        self.count += 1;
        self.min_slack = self.min_slack.min(bound - measured);
        let ratio = if measured == 0.0 { 0.0 } else { measured / bound };
        self.max_ratio = self.max_ratio.max(ratio);
        if !(measured <= bound) {
            self.holds = false;
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TheoryReport {
    pub n: usize,
    pub levels: usize,
    pub seed: Option<u64>,
    pub eigenvalues: Vec<C64>,
    pub kappa1: f64,
    pub delta: f64,
    pub norm_f2_1: f64,
    pub lifted_dim: usize,
    /// Null directions met during back-substitution.
    pub null_components: usize,
    pub checks: Vec<InequalityCheck>,
    pub passed: bool,
}

impl TheoryReport {
    pub fn check(&self, name: &str) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.holds).map(|c| c.name.as_str()).collect()
    }
}

fn catalan_f64(k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (2 * k - i) as f64 / (i + 2) as f64)
}

fn binomial_f64(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn tuple_of(mut index: usize, n: usize, j: usize) -> Vec<usize> {
    let mut t = vec![0; j];
    for slot in t.iter_mut().rev() {
        *slot = index % n;
        index /= n;
    }
    t
}

/// Greedy nearest matching of two multisets; returns the largest distance.
fn multiset_mismatch(computed: &[C64], expected: &[C64]) -> f64 {
    if computed.len() != expected.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; computed.len()];
    let mut worst: f64 = 0.0;
    for e in expected {
        let (best, dist) = computed
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, c)| (i, (c - e).norm()))
            .fold((usize::MAX, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        used[best] = true;
        worst = worst.max(dist);
    }
    worst
}

/// Run every check on one quadratic system. `probes` are states `x` used to
/// form `ζ = V⁻¹ (0, …, 0, A_{N,N+1} x^{⊗(N+1)})`.
pub fn verify_system(system: &PolynomialSystem, levels: usize, probes: &[Vec<f64>]) -> Result<TheoryReport> {
    let n = system.dim();
    if system.degree() != 2 {
        return Err(CarlemanError::invalid("theory checks need a quadratic system"));
    }
    if n > MAX_BASE_DIM || levels == 0 || levels > MAX_LEVELS {
        return Err(CarlemanError::invalid(format!("theory checks need n <= {MAX_BASE_DIM} and 1 <= N <= {MAX_LEVELS}")));
    }
    let decomp = eigendecompose(system.f1(), DEFAULT_EIG_TOL)?;
    let kappa = condition_number_1(&decomp);
    let delta = resonance_delta(&decomp.eigenvalues, &ResonanceOptions::literal(levels.max(2)))?.delta;
    if !(delta > shift_tol(&decomp)) {
        return Err(CarlemanError::invalid(format!("no-resonance condition fails at order {}: delta = {delta:.3e}", levels.max(2))));
    }
    let f2 = system.coupling().induced_norm(NormKind::One)?;
    let q = kappa * f2 / delta;
    let e = std::f64::consts::E;

    let op = CarlemanOperator::new(system.clone(), levels)?;
    let a = op.materialize()?;
    let dim = a.rows();
    let a_norm = a.norm1();
    let offsets: Vec<usize> = (0..=levels).map(|m| (1..=m).map(|l| n.pow(l as u32)).sum()).collect();
    let basis = TensorBasis::new(&decomp, levels);

    let mut spectrum = InequalityCheck::new("spectrum-multiset");
    let mut residual = InequalityCheck::new("eigenvector-residual");
    let mut backsub = InequalityCheck::new("back-substitution");
    let mut resolvent = InequalityCheck::new("resolvent-norm");
    let mut xi_check = InequalityCheck::new("xi-norm");
    let mut block_check = InequalityCheck::new("eigenvector-block-norm");
    let mut diag_check = InequalityCheck::new("diagonalization");
    let mut similarity = InequalityCheck::new("similarity-offdiagonal");
    let mut v_block = InequalityCheck::new("v-block-norm");
    let mut v_eigen = InequalityCheck::new("v-block-eigen-coordinates");
    let mut zeta_check = InequalityCheck::new("zeta-block");
    let mut zeta_top = InequalityCheck::new("zeta-top");
    let mut catalan_check = InequalityCheck::new("catalan-identity");

    let mut expected = Vec::with_capacity(dim);
    let mut v = DenseMatrix::zeros(dim, dim);
    let mut null_components = 0;
    for j in 1..=levels {
        for t in 0..n.pow(j as u32) {
            let tuple = tuple_of(t, n, j);
            let built = construct(system, &decomp, &tuple)?;
            let w = &built.eigenvector;
            expected.push(w.lambda);
            let flat = w.flatten(n, levels);
            let aw = a.matvec(&flat);
            let res: f64 = aw.iter().zip(&flat).map(|(x, y)| (x - w.lambda * y).norm()).sum();
            residual.record(res, RESIDUAL_TOL);

            let oracle = back_substitute(&a, &basis, &decomp, &tuple)?;
            null_components += oracle.null_components;
            let diff: f64 = oracle.eigenvector.flatten(n, levels).iter().zip(&flat).map(|(x, y)| (x - y).norm()).sum();
            backsub.record(diff, RESIDUAL_TOL);

            for &(_, g) in &built.g_norms {
                resolvent.record(g, kappa / delta);
            }
            for &(k, x) in &built.xi_norms {
                let bound = kappa.powi(k as i32 - 1) * f2.powi(k as i32) / delta.powi(k as i32 - 1) * catalan_f64(k);
                xi_check.record(x, bound);
            }
            for k in 1..j {
                let bound = q.powi(k as i32) * binomial_f64(j + k, k) * (j - k) as f64 / (j + k) as f64;
                block_check.record(norm1(&w.blocks[j - k - 1]), bound);
            }
            v.set_column(offsets[j - 1] + t, &flat);
        }
    }

    if dim <= 256 {
        let computed = eigenvalues(&a)?;
        spectrum.record(multiset_mismatch(&computed, &expected), RESIDUAL_TOL);
    }

    let d = DenseMatrix::diagonal(&expected);
    let av = a.matmul(&v);
    diag_check.record(av.sub(&v.matmul(&d)).norm1(), DIAGONALIZATION_TOL * a_norm);
    let v_inv = Lu::factor(&v)?.inverse()?;
    let similar = v_inv.matmul(&av);
    let mut off: f64 = 0.0;
    for r in 0..dim {
        for c in 0..dim {
            if r != c {
                off = off.max(similar[(r, c)].norm());
            }
        }
    }
    similarity.record(off, DIAGONALIZATION_TOL * a_norm);

    for j in 1..=levels {
        for k in 1..j {
            let rows = n.pow(k as u32);
            let cols = n.pow(j as u32);
            let block = v.block(offsets[k - 1], offsets[j - 1], rows, cols);
            let gap = (j - k) as i32;
            v_block.record(block.norm1(), q.powi(gap) * binomial_f64(2 * j - k, j - k));
            v_eigen.record(basis.w_inv(k).matmul(&block).norm1(), (2.0 * e * q).powi(gap));
        }
    }

    let top = offsets[levels - 1];
    for x in probes {
        if x.len() != n {
            return Err(CarlemanError::invalid("probe state has the wrong dimension"));
        }
        let lifted = lift(x, levels + 1, &MemoryBudget::default())?;
        let mut rhs = vec![ZERO; dim];
        for (r, val) in crate::tensor::apply_transfer(system.coupling(), levels, &lifted)?.into_iter().enumerate() {
            rhs[top + r] = C64::new(val, 0.0);
        }
        let zeta = v_inv.matvec(&rhs);
        let zeta_n = norm1(&zeta[top..]);
        let mu: f64 = x.iter().map(|z| z.abs()).sum();
        zeta_top.record(zeta_n, levels as f64 * kappa.powi(levels as i32) * f2 * mu.powi(levels as i32 + 1));
        for j in 1..levels {
            let zj = norm1(&zeta[offsets[j - 1]..offsets[j]]);
            zeta_check.record(zj, (4.0 * e * q).powi((levels - j) as i32) * zeta_n);
        }
    }

    for k in 0..=12 {
        for r in 1..=8 {
            let c = catalan_product_sum(k, r)?;
            catalan_check.record(if c.agrees() { 0.0 } else { 1.0 }, 0.0);
        }
    }

    let checks = vec![
        spectrum, residual, backsub, resolvent, xi_check, block_check, diag_check, similarity, v_block, v_eigen, zeta_check, zeta_top, catalan_check,
    ];
    let passed = checks.iter().all(|c| c.holds);
    Ok(TheoryReport {
        n,
        levels,
        seed: None,
        eigenvalues: decomp.eigenvalues.clone(),
        kappa1: kappa,
        delta,
        norm_f2_1: f2,
        lifted_dim: dim,
        null_components,
        checks,
        passed,
    })
}

/// Stable quadratic system with a diagonalizable, nonresonant linear part
/// and `‖F2‖₁ = coupling_norm`, drawn deterministically from `seed`. For
/// `n ≥ 2` about half the draws contain a complex-conjugate pair.
pub fn random_system(n: usize, seed: u64, coupling_norm: f64) -> Result<PolynomialSystem> {
    if n == 0 || !(coupling_norm >= 0.0) {
        return Err(CarlemanError::invalid("random system needs n >= 1 and a nonnegative coupling norm"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let mut block = DenseMatrix::zeros(n, n);
        let mut eigs = Vec::with_capacity(n);
        let mut i = 0;
        if n >= 2 && rng.gen_bool(0.5) {
            let re = rng.gen_range(-2.0..-0.2);
            let im = rng.gen_range(0.5..2.0);
            block[(0, 0)] = C64::new(re, 0.0);
            block[(1, 1)] = C64::new(re, 0.0);
            block[(0, 1)] = C64::new(im, 0.0);
            block[(1, 0)] = C64::new(-im, 0.0);
            eigs.push(C64::new(re, im));
            eigs.push(C64::new(re, -im));
            i = 2;
        }
        while i < n {
            let l = rng.gen_range(-2.0..-0.2);
            block[(i, i)] = C64::new(l, 0.0);
            eigs.push(C64::new(l, 0.0));
            i += 1;
        }
        let p = DenseMatrix::from_fn(n, n, |r, c| C64::new(if r == c { 1.0 } else { 0.0 } + rng.gen_range(-0.5..0.5), 0.0));
        let f2_raw: Vec<f64> = (0..n * n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let delta = resonance_delta(&eigs, &ResonanceOptions::literal(MAX_LEVELS))?.delta;
        let lu = match Lu::factor(&p) {
            Ok(lu) if lu.pivot_ratio() > 0.05 => lu,
            _ => continue,
        };
        if delta < 0.05 {
            continue;
        }
        let f1 = p.matmul(&block).matmul(&lu.inverse()?);
        let f1 = DenseMatrix::from_real(n, n, &f1.real_parts())?;
        let raw = DenseMatrix::from_real(n, n * n, &f2_raw)?;
        let scale = if coupling_norm == 0.0 { 0.0 } else { coupling_norm / raw.norm1() };
        let f2 = SparseCoupling::from_dense(&raw.scale(C64::new(scale, 0.0)), 2, 0.0)?;
        return PolynomialSystem::new(f1, f2, format!("random-n{n}-seed{seed}"));
    }
    Err(CarlemanError::invalid("could not draw a nonresonant system"))
}

/// Draws a random system and random probe states from `seed` and runs
/// [`verify_system`].
pub fn verify_random(n: usize, levels: usize, seed: u64, coupling_norm: f64) -> Result<TheoryReport> {
    let system = random_system(n, seed, coupling_norm)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let probes: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut report = verify_system(&system, levels, &probes)?;
    report.seed = Some(seed);
    Ok(report)
}
