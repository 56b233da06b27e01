//! Experiment configs, single runs, and parameter sweeps producing
//! [`ExperimentRecord`] rows.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::carleman::{compare_trajectories, default_step, integrate_lifted, integrate_reference, CarlemanOperator, StepConfig, DEFAULT_STRIDE};
use crate::error::{CarlemanError, Result};
use crate::linalg::NormKind;
use crate::models::{build, coupling_norm_per_unit, ModelConfig, ModelKind};
use crate::spectral::{analyze, compute_rates_split, coupling_norms, error_bound, Regime, ResonanceOptions, SpectralReport};
use crate::tensor::{lifted_len, MemoryBudget};

/// Largest number of cells a sweep may expand to.
pub const MAX_CELLS: usize = 10_000;

pub const CSV_HEADER: &str = "model,n,N,nonlinearity,beta,T,dt,norm,finalError,supError,mu,delta,kappa1,Rr,Rd,bound,status";

/// A scalar or a list in a sweep config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> Axis<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Axis::One(v) => vec![v.clone()],
            Axis::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Axis<usize>>,
    /// `c` or `α`; the model's own value when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinearity: Option<Axis<f64>>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<Axis<f64>>,
    /// Read `nonlinearity` as a target `‖F_d‖₁` instead of the raw parameter.
    #[serde(default)]
    pub nonlinearity_is_norm: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    /// Step size; `0.9·2.5/(N ρ(F1))` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default = "default_norm")]
    pub norm: NormKind,
}

fn default_norm() -> NormKind {
    NormKind::One
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { dt: None, stride: None, norm: NormKind::One }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralConfig {
    /// Δ search order; `N + 1` per cell when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_zero_modes: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclude_cancelling_pairs: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_tol: Option<f64>,
}

impl SpectralConfig {
    pub fn options(&self, max_order: usize) -> ResonanceOptions {
        let mut o = ResonanceOptions::new(self.max_order.unwrap_or(max_order));
        if let Some(v) = self.drop_zero_modes {
            o.drop_zero_modes = v;
        }
        if let Some(v) = self.exclude_cancelling_pairs {
            o.exclude_cancelling_pairs = v;
        }
        if let Some(v) = self.zero_tol {
            o.zero_tol = v;
        }
        o
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub spectral: SpectralConfig,
}

/// One point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub levels: usize,
    pub nonlinearity: f64,
    pub t_end: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CarlemanError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if let Some(dt) = self.integrator.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(CarlemanError::Config(format!("integrator.dt must be positive, got {dt}")));
            }
        }
        if self.integrator.stride == Some(0) {
            return Err(CarlemanError::Config("integrator.stride must be at least 1".into()));
        }
        if let Some(m) = self.spectral.max_order {
            if m < 2 {
                return Err(CarlemanError::Config("spectral.max_order must be at least 2".into()));
            }
        }
        Ok(())
    }

    /// Cells in output order: nonlinearity outermost, then `T`, then `N`.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let levels = self.sweep.levels.as_ref().ok_or_else(|| CarlemanError::Config("sweep.N is required".into()))?.values();
        let times = self.sweep.t_end.as_ref().ok_or_else(|| CarlemanError::Config("sweep.T is required".into()))?.values();
        let strengths = match &self.sweep.nonlinearity {
            Some(a) => a.values(),
            None if self.sweep.nonlinearity_is_norm => {
                return Err(CarlemanError::Config("nonlinearity_is_norm needs sweep.nonlinearity".into()));
            }
            None => vec![self.model.nonlinearity()],
        };
        let total = levels.len() as u128 * times.len() as u128 * strengths.len() as u128;
        if total > MAX_CELLS as u128 {
            return Err(CarlemanError::Config(format!("sweep expands to {total} cells, more than {MAX_CELLS}")));
        }
        if let Some(&n) = levels.iter().find(|&&n| n == 0) {
            return Err(CarlemanError::Config(format!("truncation level must be at least 1, got {n}")));
        }
        if let Some(t) = times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(CarlemanError::Config(format!("final time must be positive, got {t}")));
        }
        if let Some(c) = strengths.iter().find(|c| !c.is_finite()) {
            return Err(CarlemanError::Config(format!("nonlinearity must be finite, got {c}")));
        }
        let mut cells = Vec::with_capacity(total as usize);
        for &nonlinearity in &strengths {
            for &t_end in &times {
                for &l in &levels {
                    cells.push(Cell { levels: l, nonlinearity, t_end });
                }
            }
        }
        Ok(cells)
    }

    /// The single cell of a scalar config.
    pub fn single_cell(&self) -> Result<Cell> {
        let cells = self.cells()?;
        match cells.as_slice() {
            [c] => Ok(*c),
            _ => Err(CarlemanError::Config(format!("run needs exactly one (N, nonlinearity, T) combination, got {}", cells.len()))),
        }
    }

    /// Model parameter for a cell's nonlinearity value.
    pub fn model_parameter(&self, value: f64) -> Result<f64> {
        if !self.sweep.nonlinearity_is_norm {
            return Ok(value);
        }
        let unit = coupling_norm_per_unit(&self.model)?;
        if unit == 0.0 {
            return Err(CarlemanError::Config("model has no coupling to scale".into()));
        }
        Ok(value / unit)
    }

    fn model_size(&self) -> usize {
        match self.model.model {
            ModelKind::Fpu => self.model.p.unwrap_or(0),
            _ => self.model.dim().unwrap_or(0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Diverged,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Diverged => "diverged",
        }
    }
}

/// One row of sweep output. Error and `μ` columns hold the divergence
/// threshold on diverged rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub model: String,
    pub n: usize,
    #[serde(rename = "N")]
    pub levels: usize,
    pub nonlinearity: f64,
    pub beta: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
    pub norm: NormKind,
    #[serde(rename = "finalError")]
    pub final_error: f64,
    #[serde(rename = "supError")]
    pub sup_error: f64,
    pub mu: f64,
    pub delta: f64,
    pub kappa1: f64,
    #[serde(rename = "Rr")]
    pub rr: f64,
    #[serde(rename = "Rd")]
    pub rd: f64,
    pub bound: Option<f64>,
    pub status: Status,
}

/// C-style `%.12e`: at least two exponent digits, explicit sign.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

impl ExperimentRecord {
    pub fn csv_row(&self) -> String {
        let f = format_float;
        [
            self.model.clone(),
            self.n.to_string(),
            self.levels.to_string(),
            f(self.nonlinearity),
            f(self.beta),
            f(self.t_end),
            f(self.dt),
            self.norm.label().to_string(),
            f(self.final_error),
            f(self.sup_error),
            f(self.mu),
            f(self.delta),
            f(self.kappa1),
            f(self.rr),
            f(self.rd),
            self.bound.map(f).unwrap_or_default(),
            self.status.label().to_string(),
        ]
        .join(",")
    }
}

/// Evaluate one cell: both flows, the spectral report at the configured
/// search order, rates and the resonant bound.
pub fn run_cell(cfg: &ExperimentConfig, cell: &Cell, budget: &MemoryBudget) -> Result<ExperimentRecord> {
    let param = cfg.model_parameter(cell.nonlinearity)?;
    let model = build(&cfg.model.clone().with_nonlinearity(param))?;
    let system = &model.system;
    let (_, report) = analyze(system, &cfg.spectral.options(cell.levels + 1))?;
    let (norm1, norm2) = coupling_norms(system)?;

    let dt = match cfg.integrator.dt {
        Some(dt) => dt,
        None => default_step(system, cell.levels, cell.t_end)?,
    };
    let step = StepConfig::new(dt).with_stride(cfg.integrator.stride.unwrap_or(DEFAULT_STRIDE));
    let op = CarlemanOperator::new(system.clone(), cell.levels)?;
    budget.check(op.lifted_dim(), 5)?;

    let (status, final_error, sup_error, mu, mu_l2) = match integrate_reference(system, &model.x0, cell.t_end, &step) {
        Ok(reference) => match integrate_lifted(&op, &model.x0, cell.t_end, &step, budget) {
            Ok(lifted) => {
                let e = compare_trajectories(&reference, &lifted, cfg.integrator.norm);
                (Status::Ok, e.final_error, e.sup_error, e.mu, e.mu_l2)
            }
            Err(CarlemanError::UnstableStep { threshold, .. }) => {
                let e = compare_trajectories(&reference, &reference, NormKind::One);
                (Status::Diverged, threshold, threshold, e.mu, e.mu_l2)
            }
            Err(e) => return Err(e),
        },
        Err(CarlemanError::UnstableStep { threshold, .. }) => (Status::Diverged, threshold, threshold, threshold, threshold),
        Err(e) => return Err(e),
    };

    let rates = compute_rates_split(&report, norm1, norm2, mu.max(f64::MIN_POSITIVE), mu_l2.max(f64::MIN_POSITIVE))?;
    let bound = if report.delta > 0.0 && report.delta.is_finite() { Some(error_bound(cell.levels, cell.t_end, &rates, Regime::Resonant)?) } else { None };
    Ok(ExperimentRecord {
        model: model.kind.tag().to_string(),
        n: cfg.model_size(),
        levels: cell.levels,
        nonlinearity: param,
        beta: cfg.model.beta,
        t_end: cell.t_end,
        dt,
        norm: cfg.integrator.norm,
        final_error,
        sup_error,
        mu,
        delta: report.delta,
        kappa1: report.kappa1,
        rr: rates.rr,
        rd: rates.rd,
        bound,
        status,
    })
}

/// The single cell of a scalar config.
pub fn run(cfg: &ExperimentConfig, budget: &MemoryBudget) -> Result<ExperimentRecord> {
    run_cell(cfg, &cfg.single_cell()?, budget)
}

/// Reject the sweep up front if any cell's lifted state would exceed the budget.
pub fn check_budget(cfg: &ExperimentConfig, cells: &[Cell], budget: &MemoryBudget) -> Result<()> {
    let Some(dim) = cfg.model.dim() else {
        return Ok(());
    };
    if let Some(max) = cells.iter().map(|c| c.levels).max() {
        budget.check(lifted_len(dim, max), 5)?;
    }
    Ok(())
}

/// Evaluate every cell on `workers` threads; results come back in cell order.
pub fn sweep(cfg: &ExperimentConfig, budget: &MemoryBudget, workers: usize) -> Result<Vec<Result<ExperimentRecord>>> {
    let cells = cfg.cells()?;
    check_budget(cfg, &cells, budget)?;
    let workers = workers.max(1).min(cells.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<ExperimentRecord>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let r = run_cell(cfg, &cells[i], budget);
                slots.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    Ok(slots.into_inner().expect("result slots poisoned").into_iter().map(|r| r.expect("every cell evaluated")).collect())
}

/// Header plus one line per successful record.
pub fn write_csv<W: Write>(mut out: W, records: &[ExperimentRecord]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Spectral diagnostics of a config's model, with coupling norms.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumOutput {
    pub model: String,
    pub n: usize,
    pub nonlinearity: f64,
    pub beta: f64,
    pub norm_f2_1: f64,
    pub norm_f2_2: f64,
    #[serde(flatten)]
    pub report: SpectralReport,
}

/// The search order is `spectral.max_order`, else one above the largest
/// swept `N`.
pub fn spectrum(cfg: &ExperimentConfig) -> Result<SpectrumOutput> {
    let order = match (cfg.spectral.max_order, &cfg.sweep.levels) {
        (Some(m), _) => m,
        (None, Some(levels)) => levels.values().into_iter().max().map(|n| n + 1).unwrap_or(2).max(2),
        (None, None) => return Err(CarlemanError::Config("spectrum needs spectral.max_order or sweep.N".into())),
    };
    let strength = match &cfg.sweep.nonlinearity {
        Some(a) => a.values().first().copied().unwrap_or(cfg.model.nonlinearity()),
        None => cfg.model.nonlinearity(),
    };
    let param = cfg.model_parameter(strength)?;
    let model = build(&cfg.model.clone().with_nonlinearity(param))?;
    let (_, report) = analyze(&model.system, &cfg.spectral.options(order))?;
    let (norm_f2_1, norm_f2_2) = coupling_norms(&model.system)?;
    Ok(SpectrumOutput { model: model.kind.tag().to_string(), n: cfg.model_size(), nonlinearity: param, beta: cfg.model.beta, norm_f2_1, norm_f2_2, report })
}
