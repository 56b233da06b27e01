//! Resonance and dissipation diagnostics of the linear part, the derived
//! convergence rates, and the a priori truncation-error bounds.

use serde::{Deserialize, Serialize};

use crate::carleman::PolynomialSystem;
use crate::error::{CarlemanError, Result};
use crate::linalg::{condition_number_1, eigendecompose, EigenDecomposition, InducedNorm, NormKind, C64, DEFAULT_EIG_TOL};

/// Largest number of multiplicity vectors the Δ search will visit.
pub const COMBINATION_LIMIT: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceOptions {
    /// Largest total multiplicity `Σ m_j` searched.
    pub max_order: usize,
    /// Ignore eigenvalues with `|λ| ≤ zero_tol · max|λ|`.
    pub drop_zero_modes: bool,
    pub zero_tol: f64,
    /// Skip combinations containing two modes with `λ_i + λ_j ≈ 0`. Such
    /// pairs make `λ_k = λ_k + λ_i + λ_j` an exact resonance for every
    /// purely imaginary spectrum.
    pub exclude_cancelling_pairs: bool,
}

impl ResonanceOptions {
    pub fn new(max_order: usize) -> Self {
        ResonanceOptions { max_order, drop_zero_modes: true, zero_tol: 1e-8, exclude_cancelling_pairs: true }
    }

    /// Every combination counts, as in the unmodified infimum.
    pub fn literal(max_order: usize) -> Self {
        ResonanceOptions { max_order, drop_zero_modes: false, zero_tol: 1e-8, exclude_cancelling_pairs: false }
    }
}

/// Minimizing combination: `|λ_k − Σ m_j λ_j|`, indices into the input list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceWitness {
    pub k: usize,
    pub multiplicities: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    /// `+∞` when no admissible combination exists.
    pub delta: f64,
    pub witness: Option<ResonanceWitness>,
    pub zero_modes_removed: usize,
}

/// `|λ_k − Σ m_j λ_j|`
pub fn combination_gap(eigenvalues: &[C64], k: usize, m: &[usize]) -> f64 {
    let s: C64 = eigenvalues.iter().zip(m).map(|(l, &c)| l * c as f64).sum();
    (eigenvalues[k] - s).norm()
}

fn binomial_f64(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exhaustive search over multiplicity vectors `m ≥ 0` with
/// `2 ≤ Σ m ≤ max_order`. Ties are broken towards the lexicographically
/// smallest `(k, m)`.
pub fn resonance_delta(eigenvalues: &[C64], opts: &ResonanceOptions) -> Result<Resonance> {
    if eigenvalues.is_empty() {
        return Err(CarlemanError::invalid("resonance search needs at least one eigenvalue"));
    }
    if opts.max_order < 2 {
        return Err(CarlemanError::invalid("resonance search order must be at least 2"));
    }
    let scale = eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let kept: Vec<usize> = (0..eigenvalues.len())
        .filter(|&i| !(opts.drop_zero_modes && eigenvalues[i].norm() <= opts.zero_tol * scale))
        .collect();
    let removed = eigenvalues.len() - kept.len();
    if kept.is_empty() {
        return Ok(Resonance { delta: f64::INFINITY, witness: None, zero_modes_removed: removed });
    }
    let combos = binomial_f64(kept.len() + opts.max_order, opts.max_order);
    if combos > COMBINATION_LIMIT {
        return Err(CarlemanError::CombinatorialBudget { combinations: combos, limit: COMBINATION_LIMIT });
    }

    let lambdas: Vec<C64> = kept.iter().map(|&i| eigenvalues[i]).collect();
    let p = lambdas.len();
    let mut cancels = vec![false; p * p];
    if opts.exclude_cancelling_pairs {
        for i in 0..p {
            for j in 0..p {
                cancels[i * p + j] = i != j && (lambdas[i] + lambdas[j]).norm() <= opts.zero_tol * scale;
            }
        }
    }

    let mut search = Search { lambdas: &lambdas, cancels: &cancels, max_order: opts.max_order, m: vec![0; p], best: f64::INFINITY, best_key: None };
    search.descend(0, 0, C64::new(0.0, 0.0));

    let witness = search.best_key.map(|(k, m)| {
        let mut full = vec![0; eigenvalues.len()];
        for (slot, &orig) in kept.iter().enumerate() {
            full[orig] = m[slot];
        }
        ResonanceWitness { k: kept[k], multiplicities: full }
    });
    Ok(Resonance { delta: search.best, witness, zero_modes_removed: removed })
}

struct Search<'a> {
    lambdas: &'a [C64],
    cancels: &'a [bool],
    max_order: usize,
    m: Vec<usize>,
    best: f64,
    best_key: Option<(usize, Vec<usize>)>,
}

impl Search<'_> {
    fn descend(&mut self, slot: usize, total: usize, sum: C64) {
        let p = self.lambdas.len();
        if slot == p {
            if total >= 2 {
                self.score(sum);
            }
            return;
        }
        let blocked = (0..slot).any(|j| self.m[j] > 0 && self.cancels[j * p + slot]);
        let top = if blocked { 0 } else { self.max_order - total };
        for c in 0..=top {
            self.m[slot] = c;
            self.descend(slot + 1, total + c, sum + self.lambdas[slot] * c as f64);
        }
        self.m[slot] = 0;
    }

    fn score(&mut self, sum: C64) {
        for k in 0..self.lambdas.len() {
            let gap = (self.lambdas[k] - sum).norm();
            let better = match &self.best_key {
                None => true,
                Some((bk, bm)) => gap < self.best || (gap == self.best && (k, &self.m) < (*bk, bm)),
            };
            if better {
                self.best = gap;
                self.best_key = Some((k, self.m.clone()));
            }
        }
    }
}

/// Eigen-data and resonance diagnostics of a linear part.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralReport {
    pub eigenvalues: Vec<C64>,
    pub kappa1: f64,
    pub delta: f64,
    /// `−max Re λ`; snapped to zero within `1e-12 · max|λ|`.
    pub sigma: f64,
    pub search_order: usize,
    pub zero_modes_removed: usize,
    pub witness: Option<ResonanceWitness>,
    pub residual_bound: f64,
}

pub fn spectral_report(decomp: &EigenDecomposition, opts: &ResonanceOptions) -> Result<SpectralReport> {
    let res = resonance_delta(&decomp.eigenvalues, opts)?;
    let scale = decomp.spectral_radius();
    let mut sigma = -decomp.spectral_abscissa();
    if sigma.abs() <= 1e-12 * scale {
        sigma = 0.0;
    }
    Ok(SpectralReport {
        eigenvalues: decomp.eigenvalues.clone(),
        kappa1: condition_number_1(decomp),
        delta: res.delta,
        sigma,
        search_order: opts.max_order,
        zero_modes_removed: res.zero_modes_removed,
        witness: res.witness,
        residual_bound: decomp.residual_bound,
    })
}

/// Decompose `F1` and report on it.
pub fn analyze(system: &PolynomialSystem, opts: &ResonanceOptions) -> Result<(EigenDecomposition, SpectralReport)> {
    let decomp = eigendecompose(system.f1(), DEFAULT_EIG_TOL)?;
    let report = spectral_report(&decomp, opts)?;
    Ok((decomp, report))
}

/// `‖F_d‖₁` and `‖F_d‖₂` of a system's coupling.
pub fn coupling_norms(system: &PolynomialSystem) -> Result<(f64, f64)> {
    let c = system.coupling();
    Ok((c.induced_norm(NormKind::One)?, c.to_dense().induced_norm(NormKind::Two)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rd: f64,
    pub rr: f64,
    pub c_const: f64,
    /// Solution bound entering `R_r` and `C`.
    pub mu: f64,
    /// Solution bound entering `R_d`.
    pub mu_d: f64,
    pub norm_f2_1: f64,
    pub norm_f2_2: f64,
}

/// `R_r = 4eμκ₁‖F2‖₁/Δ`, `R_d = μ‖F2‖₂/σ`, `C = κ₁‖F2‖₁μ²`.
pub fn compute_rates(report: &SpectralReport, norm_f2_1: f64, norm_f2_2: f64, mu: f64) -> Result<RateReport> {
    compute_rates_split(report, norm_f2_1, norm_f2_2, mu, mu)
}

/// As [`compute_rates`], with separate solution bounds for the resonant
/// quantities (`R_r`, `C`) and for `R_d`.
pub fn compute_rates_split(report: &SpectralReport, norm_f2_1: f64, norm_f2_2: f64, mu: f64, mu_d: f64) -> Result<RateReport> {
    if !(mu > 0.0) || !(mu_d > 0.0) {
        return Err(CarlemanError::invalid("solution bound must be positive"));
    }
    let rr = if report.delta > 0.0 { 4.0 * std::f64::consts::E * mu * report.kappa1 * norm_f2_1 / report.delta } else { f64::INFINITY };
    let rd = if report.sigma > 0.0 { mu_d * norm_f2_2 / report.sigma } else { f64::INFINITY };
    Ok(RateReport { rd, rr, c_const: report.kappa1 * norm_f2_1 * mu * mu, mu, mu_d, norm_f2_1, norm_f2_2 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Resonant,
    Dissipative,
}

/// Resonant: `N C T R_r^{N−1}`. Dissipative: `μ (T ‖F2‖₂ μ)^N`.
pub fn error_bound(levels: usize, t_end: f64, rate: &RateReport, regime: Regime) -> Result<f64> {
    if levels == 0 || !(t_end > 0.0) {
        return Err(CarlemanError::invalid("bound needs N >= 1 and T > 0"));
    }
    Ok(match regime {
        Regime::Resonant => levels as f64 * rate.c_const * t_end * rate.rr.powi(levels as i32 - 1),
        Regime::Dissipative => rate.mu * (t_end * rate.norm_f2_2 * rate.mu).powi(levels as i32),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carleman::{truncation_error, StepConfig};
    use crate::linalg::DenseMatrix;
    use crate::tensor::{MemoryBudget, SparseCoupling};

    fn real(v: &[f64]) -> Vec<C64> {
        v.iter().map(|&x| C64::new(x, 0.0)).collect()
    }

    /// Every `(k, m)` by nested loops over a flat counter.
    fn brute_delta(l: &[C64], order: usize) -> f64 {
        let p = l.len();
        let mut best = f64::INFINITY;
        let total = (order + 1).pow(p as u32);
        for code in 0..total {
            let mut m = vec![0; p];
            let mut c = code;
            for slot in m.iter_mut() {
                *slot = c % (order + 1);
                c /= order + 1;
            }
            let s: usize = m.iter().sum();
            if !(2..=order).contains(&s) {
                continue;
            }
            for k in 0..p {
                best = best.min(combination_gap(l, k, &m));
            }
        }
        best
    }

    #[test]
    fn exact_resonance() {
        let r = resonance_delta(&real(&[-1.0, -2.0]), &ResonanceOptions::new(3)).unwrap();
        assert_eq!(r.delta, 0.0);
        assert_eq!(r.witness.unwrap(), ResonanceWitness { k: 1, multiplicities: vec![2, 0] });
    }

    #[test]
    fn hand_checkable_search() {
        let l = real(&[-1.0, -2.5]);
        let r = resonance_delta(&l, &ResonanceOptions::new(4)).unwrap();
        assert_eq!(r.delta, 0.5);
        assert_eq!(r.witness.unwrap(), ResonanceWitness { k: 1, multiplicities: vec![2, 0] });
        assert_eq!(r.delta, brute_delta(&l, 4));
    }

    #[test]
    fn order_below_two_rejected() {
        assert!(resonance_delta(&real(&[-1.0]), &ResonanceOptions::new(1)).is_err());
        assert!(resonance_delta(&[], &ResonanceOptions::new(3)).is_err());
    }

    #[test]
    fn combinatorial_budget() {
        let l: Vec<C64> = (1..=40).map(|i| C64::new(-(i as f64), 0.0)).collect();
        let err = resonance_delta(&l, &ResonanceOptions::new(12)).unwrap_err();
        assert!(matches!(err, CarlemanError::CombinatorialBudget { .. }));
    }

    #[test]
    fn imaginary_spectrum_has_trivial_resonance_unless_pairs_excluded() {
        let l = vec![C64::new(0.0, 1.0), C64::new(0.0, -1.0), C64::new(0.0, 2.7), C64::new(0.0, -2.7)];
        let literal = resonance_delta(&l, &ResonanceOptions::literal(3)).unwrap();
        assert!(literal.delta < 1e-15);
        let excl = resonance_delta(&l, &ResonanceOptions::new(3)).unwrap();
        assert!(excl.delta > 0.1);
    }

    #[test]
    fn rates_formula() {
        let report = SpectralReport {
            eigenvalues: real(&[-1.0]),
            kappa1: 1.0,
            delta: 4.0 * std::f64::consts::E,
            sigma: 1.0,
            search_order: 2,
            zero_modes_removed: 0,
            witness: None,
            residual_bound: 0.0,
        };
        let r = compute_rates(&report, 1.0, 2.0, 1.0).unwrap();
        assert!((r.rr - 1.0).abs() < 1e-15);
        assert_eq!(r.rd, 2.0);
        assert_eq!(error_bound(1, 3.0, &r, Regime::Resonant).unwrap(), r.c_const * 3.0);
        for n in 1..5 {
            let b = error_bound(n, 2.0, &r, Regime::Resonant).unwrap();
            assert!((b - n as f64 * 2.0).abs() < 1e-12);
        }
        let zero = SpectralReport { delta: 0.0, sigma: 0.0, ..report };
        let r = compute_rates(&zero, 1.0, 1.0, 1.0).unwrap();
        assert!(r.rr.is_infinite() && r.rd.is_infinite());
        assert!(compute_rates(&zero, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn bernoulli_bounds_dominate() {
        let f1 = DenseMatrix::from_real(1, 1, &[-1.0]).unwrap();
        let sys = PolynomialSystem::new(f1, SparseCoupling::new(1, 2, vec![(0, vec![0, 0], 0.1)]).unwrap(), "bernoulli").unwrap();
        let step = StepConfig::new(1e-3);
        for n in 2..=6 {
            let (_, report) = analyze(&sys, &ResonanceOptions::new(n + 1)).unwrap();
            let (n1, n2) = coupling_norms(&sys).unwrap();
            let err = truncation_error(&sys, &[0.5], n, 2.0, &step, NormKind::One, &MemoryBudget::default()).unwrap();
            let rate = compute_rates(&report, n1, n2, err.mu).unwrap();
            let resonant = error_bound(n, 2.0, &rate, Regime::Resonant).unwrap();
            let dissipative = error_bound(n, 2.0, &rate, Regime::Dissipative).unwrap();
            assert!(resonant >= err.final_error, "N={n}");
            assert!(dissipative >= err.final_error, "N={n}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn spectrum() -> impl Strategy<Value = Vec<C64>> {
            prop::collection::vec((-3.0f64..-0.1, -2.0f64..2.0), 1..4).prop_map(|v| v.into_iter().map(|(a, b)| C64::new(a, b)).collect())
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn matches_brute_force(l in spectrum(), order in 2usize..5) {
                let r = resonance_delta(&l, &ResonanceOptions::literal(order)).unwrap();
                prop_assert_eq!(r.delta, brute_delta(&l, order));
                let w = r.witness.unwrap();
                prop_assert_eq!(combination_gap(&l, w.k, &w.multiplicities), r.delta);
            }

            #[test]
            fn nonincreasing_in_order(l in spectrum()) {
                let mut prev = f64::INFINITY;
                for m in 2..7 {
                    let d = resonance_delta(&l, &ResonanceOptions::new(m)).unwrap().delta;
                    prop_assert!(d <= prev);
                    prev = d;
                }
            }

            #[test]
            fn scale_covariance(l in spectrum(), e in -4i32..5) {
                let s = 2f64.powi(e);
                let scaled: Vec<C64> = l.iter().map(|z| z * s).collect();
                let a = resonance_delta(&l, &ResonanceOptions::new(4)).unwrap().delta;
                let b = resonance_delta(&scaled, &ResonanceOptions::new(4)).unwrap().delta;
                prop_assert_eq!(b, a * s);
            }

            #[test]
            fn dropping_zero_modes(l in spectrum()) {
                let mut with_zero = l.clone();
                with_zero.insert(0, C64::new(0.0, 0.0));
                let a = resonance_delta(&with_zero, &ResonanceOptions::new(4)).unwrap();
                let b = resonance_delta(&l, &ResonanceOptions::new(4)).unwrap();
                prop_assert_eq!(a.delta, b.delta);
                prop_assert_eq!(a.zero_modes_removed, 1);
            }

            #[test]
            fn conjugate_closure(a in -3.0f64..-0.1, b in 0.1f64..2.0, c in -3.0f64..-0.1) {
                let l = vec![C64::new(a, -b), C64::new(a, b), C64::new(c, 0.0)];
                let r = resonance_delta(&l, &ResonanceOptions::new(4)).unwrap();
                let w = r.witness.unwrap();
                let conj = |i: usize| match i { 0 => 1, 1 => 0, x => x };
                let mut mc = w.multiplicities.clone();
                mc.swap(0, 1);
                let mirrored = combination_gap(&l, conj(w.k), &mc);
                prop_assert!((mirrored - r.delta).abs() <= 1e-12 * (1.0 + r.delta));
            }
        }
    }
}
