//! Nonsymmetric eigensolver: Householder reduction to Hessenberg form
//! followed by single-shift complex QR, with eigenvectors recovered from the
//! triangular Schur factor.

use super::{DenseMatrix, Lu, C64, ONE, ZERO};
use crate::error::{CarlemanError, Result};

pub const DEFAULT_EIG_TOL: f64 = 1e-10;

const MAX_DIM: usize = 256;

/// `A = W diag(λ) W⁻¹` with unit-ℓ1 columns in `W`.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<C64>,
    /// Right eigenvectors as columns.
    pub right: DenseMatrix,
    /// `W⁻¹`; row `i` is the left eigenvector dual to column `i` of `right`.
    pub left: DenseMatrix,
    /// Largest observed eigen-residual and biorthogonality defect.
    pub residual_bound: f64,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn right_vector(&self, i: usize) -> Vec<C64> {
        self.right.column(i)
    }

    pub fn left_vector(&self, i: usize) -> Vec<C64> {
        self.left.row(i).to_vec()
    }

    /// `W diag(λ) W⁻¹`
    pub fn reconstruct(&self) -> DenseMatrix {
        let d = DenseMatrix::diagonal(&self.eigenvalues);
        self.right.matmul(&d).matmul(&self.left)
    }

    /// Largest `-Re λ` is the decay rate of the slowest mode, i.e. `σ = -max Re λ`.
    pub fn spectral_abscissa(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max)
    }
}

/// `‖W‖₁‖W⁻¹‖₁` for the eigenvector matrix of a decomposition.
pub fn condition_number_1(decomp: &EigenDecomposition) -> f64 {
    decomp.right.norm1() * decomp.left.norm1()
}

/// Eigenvalues only, in the same deterministic order as [`eigendecompose`].
/// Works for defective matrices too.
pub fn eigenvalues(a: &DenseMatrix) -> Result<Vec<C64>> {
    check_square(a)?;
    let (mut h, _) = hessenberg(a, false);
    let mut vals = schur_in_place(&mut h, None)?;
    sort_eigenvalues(&mut vals);
    Ok(vals)
}

/// Full eigendecomposition of a diagonalizable matrix. Residuals are
/// certified relative to `max(1, ‖A‖₁)`.
pub fn eigendecompose(a: &DenseMatrix, tol: f64) -> Result<EigenDecomposition> {
    check_square(a)?;
    let n = a.rows();
    if n == 0 {
        return Err(CarlemanError::invalid("empty matrix"));
    }
    let scale = a.norm1().max(1.0);
    let (mut t, mut q) = hessenberg(a, true);
    let vals = schur_in_place(&mut t, q.as_mut())?;
    let q = q.expect("accumulated");

    let mut vecs: Vec<Vec<C64>> = (0..n).map(|k| normalize_l1(q.matvec(&triangular_eigenvector(&t, k)))).collect();
    let mut lambdas = vals;

    if a.is_real(0.0) {
        pair_conjugates(&mut lambdas, &mut vecs, scale);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| cmp_eig(lambdas[i], lambdas[j]));
    let eigenvalues: Vec<C64> = order.iter().map(|&i| lambdas[i]).collect();
    let mut right = DenseMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        right.set_column(c, &vecs[i]);
    }

    let lu = Lu::factor(&right).map_err(|_| CarlemanError::Defective { pivot: 0.0, tol })?;
    let pivot = lu.pivot_ratio();
    if pivot < tol {
        return Err(CarlemanError::Defective { pivot, tol });
    }
    let left = lu.inverse()?;

    let mut residual: f64 = 0.0;
    for (i, &lambda) in eigenvalues.iter().enumerate() {
        let e = right.column(i);
        let ae = a.matvec(&e);
        let r: f64 = ae.iter().zip(&e).map(|(x, y)| (x - lambda * y).norm()).sum();
        residual = residual.max(r / scale);
    }
    if residual > tol {
        return Err(CarlemanError::NonConvergence { iterations: 0 });
    }
    let mut biorth: f64 = 0.0;
    let fw = left.matmul(&right);
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { ONE } else { ZERO };
            biorth = biorth.max((fw[(i, j)] - target).norm());
        }
    }
    if biorth > 10.0 * tol {
        return Err(CarlemanError::Defective { pivot: biorth, tol });
    }

    Ok(EigenDecomposition { eigenvalues, right, left, residual_bound: residual.max(biorth / 10.0) })
}

fn check_square(a: &DenseMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(CarlemanError::invalid(format!("eigenproblem needs a square matrix, got {}x{}", a.rows(), a.cols())));
    }
    if a.rows() > MAX_DIM {
        return Err(CarlemanError::invalid(format!("dense eigensolver limited to n <= {MAX_DIM}, got {}", a.rows())));
    }
    Ok(())
}

fn cmp_eig(a: C64, b: C64) -> std::cmp::Ordering {
    b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im))
}

fn sort_eigenvalues(v: &mut [C64]) {
    v.sort_by(|a, b| cmp_eig(*a, *b));
}

fn normalize_l1(mut v: Vec<C64>) -> Vec<C64> {
    let s: f64 = v.iter().map(|z| z.norm()).sum();
    if s > 0.0 {
        v.iter_mut().for_each(|z| *z /= s);
    }
    v
}

/// Reduce to upper Hessenberg form by Householder reflections, optionally
/// accumulating the unitary factor.
fn hessenberg(a: &DenseMatrix, accumulate: bool) -> (DenseMatrix, Option<DenseMatrix>) {
    let n = a.rows();
    let mut h = a.clone();
    let mut q = accumulate.then(|| DenseMatrix::identity(n));
    for k in 0..n.saturating_sub(2) {
        let x: Vec<C64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let tail: f64 = x[1..].iter().map(|z| z.norm_sqr()).sum();
        if tail == 0.0 {
            continue;
        }
        let xnorm = (x[0].norm_sqr() + tail).sqrt();
        let phase = if x[0] == ZERO { ONE } else { x[0] / x[0].norm() };
        let alpha = -phase * xnorm;
        let mut v = x;
        v[0] -= alpha;
        let vn = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|z| *z /= vn);

        for j in k..n {
            let s: C64 = v.iter().enumerate().map(|(i, vi)| vi.conj() * h[(k + 1 + i, j)]).sum();
            for (i, vi) in v.iter().enumerate() {
                h[(k + 1 + i, j)] -= 2.0 * vi * s;
            }
        }
        reflect_right(&mut h, &v, k + 1);
        if let Some(q) = q.as_mut() {
            reflect_right(q, &v, k + 1);
        }
        h[(k + 1, k)] = alpha;
        for i in k + 2..n {
            h[(i, k)] = ZERO;
        }
    }
    (h, q)
}

fn reflect_right(m: &mut DenseMatrix, v: &[C64], offset: usize) {
    for i in 0..m.rows() {
        let s: C64 = v.iter().enumerate().map(|(l, vl)| m[(i, offset + l)] * vl).sum();
        for (l, vl) in v.iter().enumerate() {
            m[(i, offset + l)] -= 2.0 * s * vl.conj();
        }
    }
}

/// Rotation `[[c, s], [-conj(s), c]]` that maps `(a, b)` to `(r, 0)`.
fn givens(a: C64, b: C64) -> (f64, C64) {
    let nb = b.norm();
    if nb == 0.0 {
        return (1.0, ZERO);
    }
    let na = a.norm();
    if na == 0.0 {
        return (0.0, b.conj() / nb);
    }
    let r = na.hypot(nb);
    (na / r, (a / na) * b.conj() / r)
}

fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let m1 = (a + d) * 0.5 + disc;
    let m2 = (a + d) * 0.5 - disc;
    if (m1 - d).norm() <= (m2 - d).norm() {
        m1
    } else {
        m2
    }
}

/// Drive a Hessenberg matrix to upper triangular form in place. Returns the
/// diagonal.
fn schur_in_place(h: &mut DenseMatrix, mut q: Option<&mut DenseMatrix>) -> Result<Vec<C64>> {
    let n = h.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let eps = f64::EPSILON;
    let hnorm = h.norm1().max(f64::MIN_POSITIVE);
    let max_iter = 30 * n.max(10);
    let mut total = 0usize;
    let mut since_deflation = 0usize;
    let mut hi = n - 1;
    let mut rot: Vec<(f64, C64)> = Vec::with_capacity(n);

    while hi > 0 {
        let mut lo = hi;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let mut diag = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            if diag == 0.0 {
                diag = hnorm;
            }
            if sub <= eps * diag {
                h[(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            since_deflation = 0;
            continue;
        }
        total += 1;
        since_deflation += 1;
        if total > max_iter {
            return Err(CarlemanError::NonConvergence { iterations: total });
        }

        let mu = if since_deflation % 10 == 0 {
            h[(hi, hi)] + C64::new(0.75 * h[(hi, hi - 1)].norm(), 0.4 * h[(hi, hi - 1)].norm())
        } else {
            wilkinson_shift(h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)])
        };

        for k in lo..=hi {
            h[(k, k)] -= mu;
        }
        rot.clear();
        for k in lo..hi {
            let (c, s) = givens(h[(k, k)], h[(k + 1, k)]);
            rot.push((c, s));
            for j in k..n {
                let x = h[(k, j)];
                let y = h[(k + 1, j)];
                h[(k, j)] = x * c + s * y;
                h[(k + 1, j)] = -s.conj() * x + y * c;
            }
            h[(k + 1, k)] = ZERO;
        }
        for (idx, &(c, s)) in rot.iter().enumerate() {
            let k = lo + idx;
            for i in 0..=(k + 1) {
                let x = h[(i, k)];
                let y = h[(i, k + 1)];
                h[(i, k)] = x * c + y * s.conj();
                h[(i, k + 1)] = -x * s + y * c;
            }
            if let Some(q) = q.as_deref_mut() {
                for i in 0..n {
                    let x = q[(i, k)];
                    let y = q[(i, k + 1)];
                    q[(i, k)] = x * c + y * s.conj();
                    q[(i, k + 1)] = -x * s + y * c;
                }
            }
        }
        for k in lo..=hi {
            h[(k, k)] += mu;
        }
    }
    for i in 1..n {
        for j in 0..i {
            h[(i, j)] = ZERO;
        }
    }
    Ok((0..n).map(|i| h[(i, i)]).collect())
}

/// Eigenvector of upper triangular `t` for the eigenvalue `t[k][k]`.
fn triangular_eigenvector(t: &DenseMatrix, k: usize) -> Vec<C64> {
    let n = t.rows();
    let floor = f64::EPSILON * t.norm1().max(f64::MIN_POSITIVE);
    let lambda = t[(k, k)];
    let mut x = vec![ZERO; n];
    x[k] = ONE;
    for i in (0..k).rev() {
        let s: C64 = (i + 1..=k).map(|j| t[(i, j)] * x[j]).sum();
        let mut d = t[(i, i)] - lambda;
        if d.norm() < floor {
            d = C64::new(floor, 0.0);
        }
        x[i] = -s / d;
    }
    x
}

/// Real input: force exact conjugate symmetry on complex pairs and make the
/// eigenvectors of real eigenvalues real.
fn pair_conjugates(lambdas: &mut [C64], vecs: &mut [Vec<C64>], scale: f64) {
    let n = lambdas.len();
    let real_tol = 1e3 * f64::EPSILON * scale;
    let mut done = vec![false; n];
    for i in 0..n {
        if lambdas[i].im.abs() <= real_tol {
            lambdas[i].im = 0.0;
            realify(&mut vecs[i]);
            done[i] = true;
        }
    }
    for i in 0..n {
        if done[i] || lambdas[i].im < 0.0 {
            continue;
        }
        let target = lambdas[i].conj();
        let partner = (0..n)
            .filter(|&j| !done[j] && j != i && lambdas[j].im < 0.0)
            .min_by(|&a, &b| (lambdas[a] - target).norm().total_cmp(&(lambdas[b] - target).norm()));
        if let Some(j) = partner {
            lambdas[j] = target;
            vecs[j] = vecs[i].iter().map(|z| z.conj()).collect();
            done[i] = true;
            done[j] = true;
        }
    }
}

fn realify(v: &mut [C64]) {
    let Some(big) = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())) else {
        return;
    };
    if big == ZERO {
        return;
    }
    let phase = big.conj() / big.norm();
    let s: f64 = v.iter().map(|z| (z * phase).re.abs()).sum();
    for z in v.iter_mut() {
        *z = C64::new((*z * phase).re / s, 0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    fn check_invariants(a: &DenseMatrix, d: &EigenDecomposition, tol: f64) {
        let scale = a.norm1().max(1.0);
        for i in 0..d.dim() {
            let e = d.right_vector(i);
            let l1: f64 = e.iter().map(|z| z.norm()).sum();
            assert!((l1 - 1.0).abs() < 1e-12);
            let ae = a.matvec(&e);
            let r: f64 = ae.iter().zip(&e).map(|(x, y)| (x - d.eigenvalues[i] * y).norm()).sum();
            assert!(r <= tol * scale, "residual {r}");
        }
        let rec = d.reconstruct();
        assert!(rec.sub(a).norm1() <= 100.0 * tol * scale, "reconstruction");
    }

    #[test]
    fn diagonal_matrix() {
        let a = DenseMatrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, -2.5]]).unwrap();
        let d = eigendecompose(&a, DEFAULT_EIG_TOL).unwrap();
        assert_eq!(d.eigenvalues, vec![C64::new(-1.0, 0.0), C64::new(-2.5, 0.0)]);
        assert!(d.right.sub(&DenseMatrix::identity(2)).max_abs() < 1e-14);
        assert!((condition_number_1(&d) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn harmonic_oscillator() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![-4.0, 0.0]]).unwrap();
        let d = eigendecompose(&a, DEFAULT_EIG_TOL).unwrap();
        assert!(close(d.eigenvalues[0], C64::new(0.0, -2.0), 1e-12));
        assert!(close(d.eigenvalues[1], C64::new(0.0, 2.0), 1e-12));
        assert_eq!(d.eigenvalues[0], d.eigenvalues[1].conj());
        check_invariants(&a, &d, DEFAULT_EIG_TOL);
    }

    #[test]
    fn tridiagonal_closed_form() {
        let n = 7;
        let dx = 1.0 / n as f64;
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = C64::new(-2.0 / (dx * dx), 0.0);
            if i + 1 < n {
                a[(i, i + 1)] = C64::new(1.0 / (dx * dx), 0.0);
                a[(i + 1, i)] = C64::new(1.0 / (dx * dx), 0.0);
            }
        }
        let d = eigendecompose(&a, DEFAULT_EIG_TOL).unwrap();
        for (idx, k) in (1..=n).enumerate() {
            let exact = -(2.0 / (dx * dx)) * (1.0 - (k as f64 * PI / (n + 1) as f64).cos());
            assert!((d.eigenvalues[idx].re - exact).abs() < 1e-9 * exact.abs(), "{k}");
            assert_eq!(d.eigenvalues[idx].im, 0.0);
        }
        check_invariants(&a, &d, DEFAULT_EIG_TOL);
        assert!(d.right.is_real(0.0));
    }

    #[test]
    fn defective_is_rejected() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(eigendecompose(&a, DEFAULT_EIG_TOL), Err(CarlemanError::Defective { .. })));
        let vals = eigenvalues(&a).unwrap();
        assert!(vals.iter().all(|v| close(*v, ONE, 1e-7)));
    }

    #[test]
    fn complex_input() {
        let a = DenseMatrix::from_complex(
            2,
            2,
            vec![C64::new(1.0, 1.0), C64::new(2.0, 0.0), C64::new(0.0, -1.0), C64::new(-3.0, 0.5)],
        )
        .unwrap();
        let d = eigendecompose(&a, DEFAULT_EIG_TOL).unwrap();
        check_invariants(&a, &d, DEFAULT_EIG_TOL);
    }

    #[test]
    fn repeated_eigenvalue_of_identity() {
        let d = eigendecompose(&DenseMatrix::identity(4), DEFAULT_EIG_TOL).unwrap();
        assert!(d.eigenvalues.iter().all(|&l| l == ONE));
        assert!((condition_number_1(&d) - 1.0).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn random_real_matrices(n in 2usize..9, vals in prop::collection::vec(-3.0f64..3.0, 64)) {
                let a = DenseMatrix::from_real(n, n, &vals[..n * n]).unwrap();
                match eigendecompose(&a, DEFAULT_EIG_TOL) {
                    Ok(d) => {
                        check_invariants(&a, &d, DEFAULT_EIG_TOL);
                        for i in 0..n {
                            let l = d.eigenvalues[i];
                            if l.im != 0.0 {
                                prop_assert!(d.eigenvalues.contains(&l.conj()));
                            }
                        }
                    }
                    Err(CarlemanError::Defective { .. }) => {}
                    Err(e) => prop_assert!(false, "{e}"),
                }
                let vals = eigenvalues(&a).unwrap();
                let trace: C64 = (0..n).map(|i| a[(i, i)]).sum();
                let s: C64 = vals.iter().sum();
                prop_assert!((s - trace).norm() < 1e-9 * (1.0 + a.norm1()));
            }
        }
    }
}
