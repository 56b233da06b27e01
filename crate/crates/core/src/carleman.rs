//! Polynomial systems, the truncated Carleman operator, and the RK4
//! integrators for the lifted and nonlinear flows.

use serde::{Deserialize, Serialize};

use crate::error::{CarlemanError, Result};
use crate::linalg::{eigenvalues, DenseMatrix, NormKind};
use crate::tensor::{dense_kronecker_sum, dense_transfer, lifted_len, BlockVector, MemoryBudget, SparseCoupling, SparseMatrix};

/// States whose max-abs entry exceeds this are reported as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

pub const DEFAULT_STRIDE: usize = 100;

/// Largest lifted dimension [`CarlemanOperator::materialize`] will build.
pub const MATERIALIZE_LIMIT: usize = 4096;

/// `x' = F1 x + F_d x^{⊗d}`
#[derive(Clone, Debug)]
pub struct PolynomialSystem {
    f1: DenseMatrix,
    linear: SparseMatrix,
    coupling: SparseCoupling,
    label: String,
}

impl PolynomialSystem {
    pub fn new(f1: DenseMatrix, coupling: SparseCoupling, label: impl Into<String>) -> Result<Self> {
        if !f1.is_square() || f1.rows() != coupling.dim() {
            return Err(CarlemanError::invalid(format!(
                "F1 is {}x{} but the coupling acts on dimension {}",
                f1.rows(),
                f1.cols(),
                coupling.dim()
            )));
        }
        let linear = SparseMatrix::from_dense(&f1)?;
        Ok(PolynomialSystem { f1, linear, coupling, label: label.into() })
    }

    pub fn dim(&self) -> usize {
        self.f1.rows()
    }

    pub fn degree(&self) -> usize {
        self.coupling.degree()
    }

    pub fn f1(&self) -> &DenseMatrix {
        &self.f1
    }

    pub fn coupling(&self) -> &SparseCoupling {
        &self.coupling
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Same linear part with the coupling multiplied by `s`.
    pub fn with_coupling_scale(&self, s: f64) -> Self {
        PolynomialSystem { coupling: self.coupling.scaled(s), ..self.clone() }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// `F1 x + F_d x^{⊗d}`
    pub fn rhs(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.rhs_into(x, &mut out);
        out
    }

    fn rhs_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.linear.kronecker_sum_add(1, x, out);
        self.coupling.apply_add(x, out);
    }
}

/// Truncation of the infinite Carleman system at level `N`.
#[derive(Clone, Debug)]
pub struct CarlemanOperator {
    system: PolynomialSystem,
    levels: usize,
}

impl CarlemanOperator {
    pub fn new(system: PolynomialSystem, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(CarlemanError::invalid("truncation level must be at least 1"));
        }
        Ok(CarlemanOperator { system, levels })
    }

    pub fn system(&self) -> &PolynomialSystem {
        &self.system
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Total length `Σ_{j≤N} n^j` of the lifted state.
    pub fn lifted_dim(&self) -> u128 {
        lifted_len(self.system.dim(), self.levels)
    }

    pub fn apply(&self, y: &BlockVector) -> Result<BlockVector> {
        if y.base_dim() != self.system.dim() || y.levels() != self.levels {
            return Err(CarlemanError::invalid("block vector shape does not match the operator"));
        }
        let mut out = y.clone();
        self.apply_flat(y.offsets(), y.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// Block `j` of `out` becomes `A_{j,j} y_j + A_{j,j+d-1} y_{j+d-1}`.
    fn apply_flat(&self, offsets: &[usize], y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let d = self.system.degree();
        for j in 1..=self.levels {
            let dst = &mut out[offsets[j - 1]..offsets[j]];
            self.system.linear.kronecker_sum_add(j, &y[offsets[j - 1]..offsets[j]], dst);
            if j + d - 1 <= self.levels && !self.system.coupling.is_empty() {
                let hi = j + d - 1;
                self.system.coupling.transfer_add(j, &y[offsets[hi - 1]..offsets[hi]], dst);
            }
        }
    }

    /// Dense block upper-triangular matrix of the truncated system.
    pub fn materialize(&self) -> Result<DenseMatrix> {
        let total = self.lifted_dim();
        if total > MATERIALIZE_LIMIT as u128 {
            return Err(CarlemanError::invalid(format!("refusing to materialize a {total}-dimensional operator")));
        }
        let n = self.system.dim();
        let d = self.system.degree();
        let total = total as usize;
        let mut a = DenseMatrix::zeros(total, total);
        let mut offsets = vec![0];
        for j in 1..=self.levels {
            offsets.push(offsets[j - 1] + n.pow(j as u32));
        }
        let fd = self.system.coupling.to_dense();
        for j in 1..=self.levels {
            a.set_block(offsets[j - 1], offsets[j - 1], &dense_kronecker_sum(&self.system.f1, j));
            if j + d - 1 <= self.levels {
                a.set_block(offsets[j - 1], offsets[j + d - 2], &dense_transfer(&fd, j));
            }
        }
        Ok(a)
    }
}

/// Sampled trajectory from one of the integrators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// Reference state `x(t)` or first lifted block `y_1(t)` at each sample.
    pub states: Vec<Vec<f64>>,
    pub dt: f64,
    pub method: String,
}

impl TrajectoryRecord {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(|s| s.as_slice()).unwrap_or(&[])
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

/// Step size and sampling for the fixed-step integrators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    pub stride: usize,
}

impl StepConfig {
    pub fn new(dt: f64) -> Self {
        StepConfig { dt, stride: DEFAULT_STRIDE }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }
}

/// `0.9 · 2.5 / (N ρ(F1))`, or `T / 100` when `F1` has zero spectrum.
pub fn default_step(system: &PolynomialSystem, levels: usize, t_end: f64) -> Result<f64> {
    let rho = eigenvalues(system.f1())?.iter().map(|l| l.norm()).fold(0.0, f64::max);
    if rho <= f64::EPSILON {
        return Ok(t_end / 100.0);
    }
    Ok(0.9 * 2.5 / (levels as f64 * rho))
}

fn check_times(t_end: f64, step: &StepConfig) -> Result<()> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(CarlemanError::invalid(format!("final time must be positive, got {t_end}")));
    }
    if !(step.dt > 0.0 && step.dt.is_finite()) {
        return Err(CarlemanError::invalid(format!("step size must be positive, got {}", step.dt)));
    }
    if step.stride == 0 {
        return Err(CarlemanError::invalid("sample stride must be at least 1"));
    }
    Ok(())
}

/// Classical RK4 with a shortened final step landing exactly on `t_end`.
fn rk4<F, O>(mut f: F, mut y: Vec<f64>, t_end: f64, step: &StepConfig, mut observe: O, method: &str) -> Result<TrajectoryRecord>
where
    F: FnMut(&[f64], &mut [f64]),
    O: FnMut(&[f64]) -> Vec<f64>,
{
    check_times(t_end, step)?;
    let dt = step.dt;
    let full = (t_end / dt).floor() as usize;
    let remainder = t_end - full as f64 * dt;
    let steps = if remainder > 1e-12 * t_end { full + 1 } else { full.max(1) };

    let len = y.len();
    let mut acc = vec![0.0; len];
    let mut tmp = vec![0.0; len];
    let mut k = vec![0.0; len];

    let mut times = vec![0.0];
    let mut states = vec![observe(&y)];
    let mut t = 0.0;
    for s in 1..=steps {
        let h = if s == steps { t_end - t } else { dt };
        f(&y, &mut k);
        for i in 0..len {
            acc[i] = y[i] + h / 6.0 * k[i];
            tmp[i] = y[i] + 0.5 * h * k[i];
        }
        f(&tmp, &mut k);
        for i in 0..len {
            acc[i] += h / 3.0 * k[i];
            tmp[i] = y[i] + 0.5 * h * k[i];
        }
        f(&tmp, &mut k);
        for i in 0..len {
            acc[i] += h / 3.0 * k[i];
            tmp[i] = y[i] + h * k[i];
        }
        f(&tmp, &mut k);
        for i in 0..len {
            acc[i] += h / 6.0 * k[i];
        }
        std::mem::swap(&mut y, &mut acc);
        t = if s == steps { t_end } else { s as f64 * dt };

        let big = y.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
        if big > DIVERGENCE_THRESHOLD {
            return Err(CarlemanError::UnstableStep { time: t, norm: big, threshold: DIVERGENCE_THRESHOLD });
        }
        if s % step.stride == 0 || s == steps {
            times.push(t);
            states.push(observe(&y));
        }
    }
    Ok(TrajectoryRecord { times, states, dt, method: method.to_string() })
}

/// RK4 on the truncated lifted system started from `y_j(0) = x0^{⊗j}`;
/// records `y_1`.
pub fn integrate_lifted(op: &CarlemanOperator, x0: &[f64], t_end: f64, step: &StepConfig, budget: &MemoryBudget) -> Result<TrajectoryRecord> {
    let n = op.system.dim();
    if x0.len() != n {
        return Err(CarlemanError::invalid(format!("initial state has length {}, expected {n}", x0.len())));
    }
    check_times(t_end, step)?;
    // State, three RK4 work vectors, and the lifting itself.
    budget.check(op.lifted_dim(), 5)?;
    let y0 = BlockVector::lifted(x0, op.levels, budget)?;
    let offsets = y0.offsets().to_vec();
    rk4(
        |y, out| op.apply_flat(&offsets, y, out),
        y0.as_slice().to_vec(),
        t_end,
        step,
        |y| y[..n].to_vec(),
        "rk4-lifted",
    )
}

/// RK4 on the nonlinear system.
pub fn integrate_reference(system: &PolynomialSystem, x0: &[f64], t_end: f64, step: &StepConfig) -> Result<TrajectoryRecord> {
    if x0.len() != system.dim() {
        return Err(CarlemanError::invalid(format!("initial state has length {}, expected {}", x0.len(), system.dim())));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(CarlemanError::invalid("initial state must be finite"));
    }
    rk4(|x, out| system.rhs_into(x, out), x0.to_vec(), t_end, step, |x| x.to_vec(), "rk4")
}

/// Gap between the nonlinear flow and the first lifted block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationError {
    pub final_error: f64,
    /// Max over the sample grid.
    pub sup_error: f64,
    /// Sampled sup of `‖x(t)‖₁`.
    pub mu: f64,
    pub mu_l2: f64,
    pub mu_inf: f64,
    pub dt: f64,
    pub samples: usize,
}

fn diff_norm(a: &[f64], b: &[f64], norm: NormKind) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm.vector(&d)
}

fn sup_norm(states: &[Vec<f64>], norm: NormKind) -> f64 {
    states.iter().map(|s| norm.vector(s)).fold(0.0, f64::max)
}

/// Integrate both flows at the same step and compare `x(t)` with `y_1(t)`.
pub fn truncation_error(
    system: &PolynomialSystem,
    x0: &[f64],
    levels: usize,
    t_end: f64,
    step: &StepConfig,
    norm: NormKind,
    budget: &MemoryBudget,
) -> Result<TruncationError> {
    let reference = integrate_reference(system, x0, t_end, step)?;
    let op = CarlemanOperator::new(system.clone(), levels)?;
    let lifted = integrate_lifted(&op, x0, t_end, step, budget)?;
    Ok(compare_trajectories(&reference, &lifted, norm))
}

/// Error summary of two trajectories sampled on the same grid.
pub fn compare_trajectories(reference: &TrajectoryRecord, lifted: &TrajectoryRecord, norm: NormKind) -> TruncationError {
    let final_error = diff_norm(reference.final_state(), lifted.final_state(), norm);
    let sup_error = reference
        .states
        .iter()
        .zip(&lifted.states)
        .map(|(a, b)| diff_norm(a, b, norm))
        .fold(0.0, f64::max);
    TruncationError {
        final_error,
        sup_error,
        mu: sup_norm(&reference.states, NormKind::One),
        mu_l2: sup_norm(&reference.states, NormKind::Two),
        mu_inf: sup_norm(&reference.states, NormKind::Inf),
        dt: reference.dt,
        samples: reference.times.len(),
    }
}

/// Richardson estimate of the RK4 discretization error in the measured
/// truncation gap: both flows are rerun at `dt/2` and the step-halving
/// differences scaled by `16/15` are summed.
pub fn integrator_error_estimate(
    system: &PolynomialSystem,
    x0: &[f64],
    levels: usize,
    t_end: f64,
    step: &StepConfig,
    norm: NormKind,
    budget: &MemoryBudget,
) -> Result<f64> {
    let half = StepConfig { dt: step.dt / 2.0, stride: usize::MAX };
    let coarse = StepConfig { dt: step.dt, stride: usize::MAX };
    let r1 = integrate_reference(system, x0, t_end, &coarse)?;
    let r2 = integrate_reference(system, x0, t_end, &half)?;
    let op = CarlemanOperator::new(system.clone(), levels)?;
    let l1 = integrate_lifted(&op, x0, t_end, &coarse, budget)?;
    let l2 = integrate_lifted(&op, x0, t_end, &half, budget)?;
    let er = diff_norm(r1.final_state(), r2.final_state(), norm);
    let el = diff_norm(l1.final_state(), l2.final_state(), norm);
    Ok((er + el) * 16.0 / 15.0)
}
