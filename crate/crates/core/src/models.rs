//! Builders for semi-discretized Burgers, periodic KdV, and the FPU chain,
//! plus elimination of a linear first integral.

use serde::{Deserialize, Serialize};

use crate::carleman::PolynomialSystem;
use crate::error::{CarlemanError, Result};
use crate::linalg::{DenseMatrix, InducedNorm, NormKind, C64};
use crate::tensor::{CouplingSpec, SparseCoupling};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Burgers,
    Kdv,
    Fpu,
    /// User-supplied `F1`, coupling, and initial state.
    Custom,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Burgers => "burgers",
            ModelKind::Kdv => "kdv",
            ModelKind::Fpu => "fpu",
            ModelKind::Custom => "custom",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Dirichlet,
    Periodic,
}

/// Model description as read from JSON configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model: ModelKind,
    /// Grid size (Burgers, KdV).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Particle count (FPU).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    /// Advection strength (Burgers, KdV).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Cubic spring strength (FPU).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Linear spring constant (FPU).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    /// Diagonal shift added to `F1`.
    #[serde(default)]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
    /// Initial state; overrides the model's default profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Rows of `F1` (custom model).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<Vec<Vec<f64>>>,
    /// Coupling (custom model); scaled by `c` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingSpec>,
}

impl ModelConfig {
    pub fn burgers(n: usize, c: f64) -> Self {
        ModelConfig { n: Some(n), c: Some(c), ..Self::empty(ModelKind::Burgers) }
    }

    pub fn kdv(n: usize, c: f64) -> Self {
        ModelConfig { n: Some(n), c: Some(c), ..Self::empty(ModelKind::Kdv) }
    }

    pub fn fpu(p: usize, alpha: f64, k: f64) -> Self {
        ModelConfig { p: Some(p), alpha: Some(alpha), k: Some(k), ..Self::empty(ModelKind::Fpu) }
    }

    pub fn custom(f1: Vec<Vec<f64>>, coupling: SparseCoupling, x0: Vec<f64>) -> Self {
        ModelConfig { f1: Some(f1), coupling: Some(coupling.into()), x0: Some(x0), ..Self::empty(ModelKind::Custom) }
    }

    fn empty(model: ModelKind) -> Self {
        ModelConfig { model, n: None, p: None, c: None, alpha: None, k: None, beta: 0.0, boundary: None, x0: None, f1: None, coupling: None }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    /// Strength of the nonlinear term: `α` for FPU, `c` otherwise.
    pub fn nonlinearity(&self) -> f64 {
        match self.model {
            ModelKind::Fpu => self.alpha.unwrap_or(1.0),
            _ => self.c.unwrap_or(1.0),
        }
    }

    pub fn with_nonlinearity(mut self, value: f64) -> Self {
        match self.model {
            ModelKind::Fpu => self.alpha = Some(value),
            _ => self.c = Some(value),
        }
        self
    }

    /// State dimension of the built system.
    pub fn dim(&self) -> Option<usize> {
        match self.model {
            ModelKind::Burgers | ModelKind::Kdv => self.n,
            ModelKind::Fpu => self.p.map(|p| 2 * p),
            ModelKind::Custom => self.f1.as_ref().map(|f| f.len()),
        }
    }

    fn require_n(&self, min: usize) -> Result<usize> {
        match self.n {
            Some(n) if n >= min => Ok(n),
            Some(n) => Err(CarlemanError::Config(format!("{} needs n >= {min}, got {n}", self.model.tag()))),
            None => Err(CarlemanError::Config(format!("{} needs a grid size `n`", self.model.tag()))),
        }
    }

    fn check_unused(&self, allowed: &[&str]) -> Result<()> {
        let present = [
            ("n", self.n.is_some()),
            ("p", self.p.is_some()),
            ("c", self.c.is_some()),
            ("alpha", self.alpha.is_some()),
            ("k", self.k.is_some()),
            ("f1", self.f1.is_some()),
            ("coupling", self.coupling.is_some()),
        ];
        for (name, set) in present {
            if set && !allowed.contains(&name) {
                return Err(CarlemanError::Config(format!("field `{name}` does not apply to model {}", self.model.tag())));
            }
        }
        Ok(())
    }
}

/// A built model: the system, its initial state, and (KdV) the reduction
/// that removes the conserved mean.
#[derive(Clone, Debug)]
pub struct Model {
    pub kind: ModelKind,
    pub system: PolynomialSystem,
    pub x0: Vec<f64>,
    pub reduced: Option<ReducedSystem>,
}

/// Dynamics on the complement of a linear first integral `v`.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub original: PolynomialSystem,
    pub reduced: PolynomialSystem,
    /// `n × (n−1)`, orthonormal columns spanning `{x : vᵀx = 0}`.
    pub embed: DenseMatrix,
    /// `(n−1) × n`, the transpose of `embed`.
    pub project: DenseMatrix,
    pub first_integral: Vec<f64>,
}

impl ReducedSystem {
    pub fn project_state(&self, x: &[f64]) -> Vec<f64> {
        self.project.matvec_real(x).iter().map(|z| z.re).collect()
    }

    pub fn embed_state(&self, z: &[f64]) -> Vec<f64> {
        self.embed.matvec_real(z).iter().map(|z| z.re).collect()
    }
}

/// Bell-shaped profile `−atan(20(x−1/4)) + atan(20(x+1/4))`.
pub fn bell_profile(x: f64) -> f64 {
    -(20.0 * (x - 0.25)).atan() + (20.0 * (x + 0.25)).atan()
}

fn override_x0(cfg: &ModelConfig, default: Vec<f64>) -> Result<Vec<f64>> {
    match &cfg.x0 {
        Some(x) if x.len() != default.len() => {
            Err(CarlemanError::Config(format!("x0 has length {}, the model has dimension {}", x.len(), default.len())))
        }
        Some(x) if x.iter().any(|v| !v.is_finite()) => Err(CarlemanError::Config("x0 entries must be finite".into())),
        Some(x) => Ok(x.clone()),
        None => Ok(default),
    }
}

fn check_common(cfg: &ModelConfig) -> Result<()> {
    if !(cfg.beta >= 0.0 && cfg.beta.is_finite()) {
        return Err(CarlemanError::Config(format!("beta must be a nonnegative number, got {}", cfg.beta)));
    }
    for (name, v) in [("c", cfg.c), ("alpha", cfg.alpha), ("k", cfg.k)] {
        if let Some(v) = v {
            if !v.is_finite() {
                return Err(CarlemanError::Config(format!("{name} must be finite")));
            }
        }
    }
    Ok(())
}

fn shift(f1: &mut DenseMatrix, beta: f64) {
    for i in 0..f1.rows() {
        f1[(i, i)] += C64::new(beta, 0.0);
    }
}

pub fn build(cfg: &ModelConfig) -> Result<Model> {
    check_common(cfg)?;
    match cfg.model {
        ModelKind::Burgers => build_burgers(cfg),
        ModelKind::Kdv => build_kdv(cfg),
        ModelKind::Fpu => build_fpu(cfg),
        ModelKind::Custom => build_custom(cfg),
    }
}

/// Grid spacing of the Burgers discretization: `n` nodes spanning
/// `[−1/2, 1/2]` including both ends.
pub fn burgers_spacing(n: usize) -> f64 {
    1.0 / (n - 1) as f64
}

/// Upwind Burgers with homogeneous Dirichlet data:
/// `u_j' = −c (u_j² − u_{j−1}²)/(2Δx) + (u_{j+1} − 2u_j + u_{j−1})/Δx²`.
pub fn build_burgers(cfg: &ModelConfig) -> Result<Model> {
    cfg.check_unused(&["n", "c"])?;
    if cfg.boundary == Some(Boundary::Periodic) {
        return Err(CarlemanError::Config("burgers uses dirichlet boundaries".into()));
    }
    let n = cfg.require_n(2)?;
    let c = cfg.c.unwrap_or(1.0);
    let dx = burgers_spacing(n);
    let inv2 = 1.0 / (dx * dx);
    let mut f1 = DenseMatrix::zeros(n, n);
    for i in 0..n {
        f1[(i, i)] = C64::new(-2.0 * inv2, 0.0);
        if i + 1 < n {
            f1[(i, i + 1)] = C64::new(inv2, 0.0);
            f1[(i + 1, i)] = C64::new(inv2, 0.0);
        }
    }
    shift(&mut f1, cfg.beta);
    let a = c / (2.0 * dx);
    let mut entries = Vec::with_capacity(2 * n);
    for i in 0..n {
        entries.push((i, vec![i, i], -a));
        if i > 0 {
            entries.push((i, vec![i - 1, i - 1], a));
        }
    }
    let f2 = SparseCoupling::new(n, 2, entries)?;
    let x0: Vec<f64> = (0..n).map(|j| bell_profile(-0.5 + j as f64 * dx)).collect();
    let system = PolynomialSystem::new(f1, f2, "burgers")?;
    Ok(Model { kind: ModelKind::Burgers, system, x0: override_x0(cfg, x0)?, reduced: None })
}

/// Periodic KdV:
/// `u_j' = −c (u_j² − u_{j−1}²)/(2Δx) − (u_{j+2} − 2u_{j+1} + 2u_{j−1} − u_{j−2})/(2Δx³)`
/// with `Δx = 1/n`.
pub fn build_kdv(cfg: &ModelConfig) -> Result<Model> {
    cfg.check_unused(&["n", "c"])?;
    if cfg.boundary == Some(Boundary::Dirichlet) {
        return Err(CarlemanError::Config("kdv uses periodic boundaries".into()));
    }
    let n = cfg.require_n(5)?;
    let c = cfg.c.unwrap_or(1.0);
    let dx = 1.0 / n as f64;
    let h = 1.0 / (2.0 * dx * dx * dx);
    let mut f1 = DenseMatrix::zeros(n, n);
    for j in 0..n {
        f1[(j, (j + 2) % n)] += C64::new(-h, 0.0);
        f1[(j, (j + 1) % n)] += C64::new(2.0 * h, 0.0);
        f1[(j, (j + n - 1) % n)] += C64::new(-2.0 * h, 0.0);
        f1[(j, (j + n - 2) % n)] += C64::new(h, 0.0);
    }
    shift(&mut f1, cfg.beta);
    let a = c / (2.0 * dx);
    let mut entries = Vec::with_capacity(2 * n);
    for i in 0..n {
        let prev = (i + n - 1) % n;
        entries.push((i, vec![i, i], -a));
        entries.push((i, vec![prev, prev], a));
    }
    let f2 = SparseCoupling::new(n, 2, entries)?;
    let x0: Vec<f64> = (0..n).map(|j| bell_profile(-0.5 + j as f64 * dx)).collect();
    let system = PolynomialSystem::new(f1, f2, "kdv")?;
    let reduced = reduce_first_integral(&system, &vec![1.0; n])?;
    Ok(Model { kind: ModelKind::Kdv, system, x0: override_x0(cfg, x0)?, reduced: Some(reduced) })
}

/// FPU chain with fixed ends, state `(u_1..u_p, u_1'..u_p')`.
pub fn build_fpu(cfg: &ModelConfig) -> Result<Model> {
    cfg.check_unused(&["p", "alpha", "k"])?;
    if cfg.boundary == Some(Boundary::Periodic) {
        return Err(CarlemanError::Config("fpu uses dirichlet boundaries".into()));
    }
    let p = match cfg.p {
        Some(p) if p >= 2 => p,
        Some(p) => return Err(CarlemanError::Config(format!("fpu needs p >= 2, got {p}"))),
        None => return Err(CarlemanError::Config("fpu needs a particle count `p`".into())),
    };
    let alpha = cfg.alpha.unwrap_or(1.0);
    let k = cfg.k.unwrap_or(1.0);
    let n = 2 * p;
    let mut f1 = DenseMatrix::zeros(n, n);
    for i in 0..p {
        f1[(i, p + i)] = C64::new(1.0, 0.0);
        f1[(p + i, i)] = C64::new(-2.0 * k, 0.0);
        if i + 1 < p {
            f1[(p + i, i + 1)] = C64::new(k, 0.0);
        }
        if i > 0 {
            f1[(p + i, i - 1)] = C64::new(k, 0.0);
        }
    }
    shift(&mut f1, cfg.beta);

    let mut entries = Vec::new();
    for i in 0..p {
        let row = p + i;
        entries.push((row, vec![i, i, i], -2.0 * alpha));
        // α(u_{i+1} − u_i)³ without the −u_i³ term
        if i + 1 < p {
            let j = i + 1;
            entries.push((row, vec![j, j, j], alpha));
            for idx in [vec![i, i, j], vec![i, j, i], vec![j, i, i]] {
                entries.push((row, idx, alpha));
            }
            for idx in [vec![j, j, i], vec![i, j, j], vec![j, i, j]] {
                entries.push((row, idx, -alpha));
            }
        }
        // −α(u_i − u_{i−1})³ without the −u_i³ term
        if i > 0 {
            let j = i - 1;
            entries.push((row, vec![j, j, j], alpha));
            for idx in [vec![i, i, j], vec![i, j, i], vec![j, i, i]] {
                entries.push((row, idx, alpha));
            }
            for idx in [vec![j, j, i], vec![i, j, j], vec![j, i, j]] {
                entries.push((row, idx, -alpha));
            }
        }
    }
    let f3 = SparseCoupling::new(n, 3, entries)?;
    let mut x0 = vec![0.0; n];
    for i in 0..p {
        x0[i] = 0.1 * (2.0 * std::f64::consts::PI * (i + 1) as f64 / (p + 1) as f64).sin();
    }
    let system = PolynomialSystem::new(f1, f3, "fpu")?;
    Ok(Model { kind: ModelKind::Fpu, system, x0: override_x0(cfg, x0)?, reduced: None })
}

fn build_custom(cfg: &ModelConfig) -> Result<Model> {
    cfg.check_unused(&["f1", "coupling", "c"])?;
    let rows = cfg.f1.as_ref().ok_or_else(|| CarlemanError::Config("custom model needs `f1`".into()))?;
    let mut f1 = DenseMatrix::from_rows(rows).map_err(|e| CarlemanError::Config(e.to_string()))?;
    if !f1.is_square() || f1.rows() == 0 {
        return Err(CarlemanError::Config("custom `f1` must be a nonempty square matrix".into()));
    }
    shift(&mut f1, cfg.beta);
    let spec = cfg.coupling.clone().ok_or_else(|| CarlemanError::Config("custom model needs `coupling`".into()))?;
    let coupling = SparseCoupling::try_from(spec).map_err(|e| CarlemanError::Config(e.to_string()))?;
    let coupling = match cfg.c {
        Some(c) => coupling.scaled(c),
        None => coupling,
    };
    let x0 = cfg.x0.clone().ok_or_else(|| CarlemanError::Config("custom model needs `x0`".into()))?;
    let system = PolynomialSystem::new(f1, coupling, "custom").map_err(|e| CarlemanError::Config(e.to_string()))?;
    let x0 = override_x0(cfg, x0)?;
    if x0.len() != system.dim() {
        return Err(CarlemanError::Config(format!("x0 has length {}, F1 is {}x{}", x0.len(), system.dim(), system.dim())));
    }
    Ok(Model { kind: ModelKind::Custom, system, x0, reduced: None })
}

/// Orthonormal basis of `{x : vᵀx = 0}` from the Householder reflector that
/// swaps `v/‖v‖` and `e_1`.
fn complement_basis(v: &[f64]) -> DenseMatrix {
    let n = v.len();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut u: Vec<f64> = v.iter().map(|x| x / norm).collect();
    u[0] -= 1.0;
    let uu: f64 = u.iter().map(|x| x * x).sum();
    DenseMatrix::from_fn(n, n - 1, |r, c| {
        let col = c + 1;
        let id = if r == col { 1.0 } else { 0.0 };
        let h = if uu == 0.0 { id } else { id - 2.0 * u[r] * u[col] / uu };
        C64::new(h, 0.0)
    })
}

/// Restrict a system with a linear first integral `vᵀx` (so `vᵀF1 = 0` and
/// `vᵀF_d = 0`) to the complement of `v`.
pub fn reduce_first_integral(system: &PolynomialSystem, v: &[f64]) -> Result<ReducedSystem> {
    let n = system.dim();
    if v.len() != n || n < 2 {
        return Err(CarlemanError::invalid("first integral must match the system dimension (n >= 2)"));
    }
    if v.iter().all(|&x| x == 0.0) || v.iter().any(|x| !x.is_finite()) {
        return Err(CarlemanError::invalid("first integral must be a finite nonzero vector"));
    }
    let f1 = system.f1();
    let f1_scale = f1.norm1().max(1.0);
    for c in 0..n {
        let s: f64 = (0..n).map(|r| v[r] * f1[(r, c)].re).sum();
        if s.abs() > 1e-10 * f1_scale {
            return Err(CarlemanError::FirstIntegralViolation(format!("vᵀF1 has entry {s:.3e} in column {c}")));
        }
    }
    let coupling = system.coupling();
    let fd_scale = coupling.induced_norm(NormKind::One)?.max(1.0);
    let mut colsum = std::collections::BTreeMap::new();
    for (r, c, val) in coupling.triples() {
        *colsum.entry(c).or_insert(0.0) += v[r] * val;
    }
    if let Some((c, s)) = colsum.into_iter().find(|(_, s)| s.abs() > 1e-10 * fd_scale) {
        return Err(CarlemanError::FirstIntegralViolation(format!("vᵀF_d has entry {s:.3e} in column {c}")));
    }

    let embed = complement_basis(v);
    let project = embed.transpose();
    let f1_red = project.matmul(f1).matmul(&embed);
    let f1_red = DenseMatrix::from_real(n - 1, n - 1, &f1_red.real_parts())?;

    let m = n - 1;
    let d = coupling.degree();
    let cols = m.pow(d as u32);
    let mut dense = vec![0.0; m * cols];
    for entry in coupling.entries() {
        for col in 0..cols {
            let mut rem = col;
            let mut prod = entry.value;
            for slot in (0..d).rev() {
                let b = rem % m;
                rem /= m;
                prod *= embed[(entry.index[slot], b)].re;
            }
            if prod == 0.0 {
                continue;
            }
            for a in 0..m {
                dense[a * cols + col] += project[(a, entry.row)].re * prod;
            }
        }
    }
    let dense = DenseMatrix::from_real(m, cols, &dense)?;
    let drop = 1e-14 * dense.max_abs();
    let coupling_red = SparseCoupling::from_dense(&dense, d, drop)?;
    let reduced = PolynomialSystem::new(f1_red, coupling_red, format!("{}-reduced", system.label()))?;
    Ok(ReducedSystem { original: system.clone(), reduced, embed, project, first_integral: v.to_vec() })
}

/// `‖F_d‖₁` per unit of the model's nonlinearity parameter.
pub fn coupling_norm_per_unit(cfg: &ModelConfig) -> Result<f64> {
    let unit = build(&cfg.clone().with_nonlinearity(1.0))?;
    unit.system.coupling().induced_norm(NormKind::One)
}
