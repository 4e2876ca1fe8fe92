//! Multi-start protocol optimization.
//!
//! Each restart draws a uniform start in the parameter box, runs Nelder–Mead
//! and then a finite-difference BFGS polish on `O`. Parameters are searched
//! in unit-cube coordinates. Besides the lowest `O`, every evaluation feeds a
//! readout of the best feasible decoded cost seen anywhere.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    initial_state, run_protocol_with, DynamicsError, InitialState, ParameterBounds, ProtocolParams, SegmentParams,
    StateVector,
};
use crate::encoding::{HamiltonianTemplate, LevelScheme};
use crate::model::{rational_serde, ModelError, Problem, Rational};
use crate::objective::{AccumulatorConfig, BestFeasible, CostTable, ObjectiveAccumulator, ObjectiveReport};
use crate::optim::{bfgs_fd, nelder_mead, BfgsConfig, NelderMeadConfig, OptimError, Outcome, Termination};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("restart {restart}: {source}")]
    Evaluation { restart: usize, source: EvalError },
    #[error("restart {restart}: {source}")]
    Optimizer { restart: usize, source: OptimError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub layers: usize,
    /// Reuse the first layer's parameters in every layer.
    pub tied_layers: bool,
    pub restarts: usize,
    /// Objective evaluations per restart.
    pub budget: usize,
    pub seed: u64,
    pub dt_us: f64,
    pub bounds: ParameterBounds,
    /// Share of each restart's budget given to Nelder–Mead.
    pub nm_budget_fraction: f64,
    pub nelder_mead: NelderMeadConfig,
    pub bfgs: BfgsConfig,
    /// Best-feasible readout ignores samples after this time.
    pub readout_horizon_us: Option<f64>,
    pub initial_state: InitialState,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            layers: 3,
            tied_layers: false,
            restarts: 20,
            budget: 2000,
            seed: 0,
            dt_us: 0.01,
            bounds: ParameterBounds::default(),
            nm_budget_fraction: 0.8,
            nelder_mead: NelderMeadConfig {
                tolerance: 1e-4,
                ..Default::default()
            },
            bfgs: BfgsConfig {
                gradient_tolerance: 1e-6,
                ..Default::default()
            },
            readout_horizon_us: None,
            initial_state: InitialState::Auto,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |m: &str| Err(ControlError::Config(m.to_string()));
        let (tlo, thi) = self.bounds.tau_us;
        let (alo, ahi) = self.bounds.amplitude;
        if !(tlo > 0.0 && tlo <= thi && thi.is_finite()) {
            return bad("tau bounds must satisfy 0 < lo <= hi");
        }
        if !(alo.is_finite() && ahi.is_finite() && alo <= ahi) {
            return bad("amplitude bounds must satisfy lo <= hi");
        }
        if !(self.dt_us > 0.0 && self.dt_us.is_finite()) {
            return bad("dt must be positive");
        }
        if !(0.0..=1.0).contains(&self.nm_budget_fraction) {
            return bad("nm_budget_fraction must lie in [0, 1]");
        }
        if self.layers == 0 {
            return bad("at least one layer is needed");
        }
        if self.restarts == 0 || self.budget == 0 {
            return bad("restarts and budget must be positive");
        }
        Ok(())
    }
}

/// Maps between flat unit-cube vectors and protocol parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterLayout {
    slot_counts: Vec<usize>,
    layers: usize,
    tied: bool,
}

impl ParameterLayout {
    pub fn new(templates: &[HamiltonianTemplate], layers: usize, tied: bool) -> Self {
        ParameterLayout {
            slot_counts: templates.iter().map(|t| t.slots.len()).collect(),
            layers,
            tied,
        }
    }

    fn per_layer(&self) -> usize {
        self.slot_counts.iter().map(|s| 1 + s).sum()
    }

    pub fn dimension(&self) -> usize {
        self.per_layer() * if self.tied { 1 } else { self.layers }
    }

    /// Layout per layer and constraint: `tau`, then one value per slot.
    pub fn unpack(&self, u: &[f64], bounds: &ParameterBounds) -> ProtocolParams {
        let map = |v: f64, (lo, hi): (f64, f64)| (lo + v.clamp(0.0, 1.0) * (hi - lo)).clamp(lo, hi);
        let layers = (0..self.layers)
            .map(|l| {
                let mut at = if self.tied { 0 } else { l * self.per_layer() };
                self.slot_counts
                    .iter()
                    .map(|&n| {
                        let tau_us = map(u[at], bounds.tau_us);
                        let amplitudes = u[at + 1..at + 1 + n].iter().map(|&v| map(v, bounds.amplitude)).collect();
                        at += 1 + n;
                        SegmentParams { tau_us, amplitudes }
                    })
                    .collect()
            })
            .collect();
        ProtocolParams { layers }
    }

    pub fn pack(&self, params: &ProtocolParams, bounds: &ParameterBounds) -> Vec<f64> {
        let unit = |v: f64, (lo, hi): (f64, f64)| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
        let used = if self.tied { 1 } else { self.layers };
        params.layers[..used]
            .iter()
            .flatten()
            .flat_map(|s| {
                std::iter::once(unit(s.tau_us, bounds.tau_us))
                    .chain(s.amplitudes.iter().map(|&a| unit(a, bounds.amplitude)))
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

/// Scores protocols for one encoded problem.
pub struct Evaluator<'a> {
    pub scheme: &'a LevelScheme,
    pub templates: &'a [HamiltonianTemplate],
    pub table: &'a CostTable,
    pub bounds: ParameterBounds,
    pub dt_us: f64,
    pub initial: StateVector,
    pub accumulator: AccumulatorConfig,
}

impl<'a> Evaluator<'a> {
    pub fn evaluate(&self, params: &ProtocolParams) -> Result<ObjectiveReport, EvalError> {
        let mut acc = ObjectiveAccumulator::new(self.table, self.scheme, self.accumulator);
        run_protocol_with(self.scheme, self.templates, params, &self.bounds, self.dt_us, &self.initial, |k, t, p| {
            acc.push(k, t, p);
        })?;
        Ok(acc.finish()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Readout {
    #[serde(serialize_with = "rational_serde::serialize")]
    pub cost: Rational,
    pub assignment: Vec<i64>,
    pub time_us: f64,
    pub restart: usize,
    /// Evaluation index within the restart.
    pub evaluation: usize,
    pub params: ProtocolParams,
}

impl Readout {
    /// Higher cost, then earlier time, then earlier restart and evaluation.
    fn beats(&self, other: &Readout) -> bool {
        match self.cost.cmp(&other.cost) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => (self.time_us, self.restart, self.evaluation) < (other.time_us, other.restart, other.evaluation),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageSummary {
    pub evals: usize,
    pub value: Option<f64>,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartTrace {
    pub restart: usize,
    pub initial_o: f64,
    pub nelder_mead: StageSummary,
    pub bfgs: Option<StageSummary>,
    pub evaluations: usize,
    pub best_o: f64,
    pub best_feasible: Option<Readout>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationReport {
    pub seed: u64,
    pub best_o: f64,
    pub best_restart: usize,
    pub best_params: ProtocolParams,
    pub best_feasible: Option<Readout>,
    pub evaluations: usize,
    pub restarts: Vec<RestartTrace>,
    /// Lowest `O` after each restart, in restart order.
    pub best_so_far: Vec<f64>,
}

struct RestartResult {
    trace: RestartTrace,
    best_u: Vec<f64>,
}

fn run_restart(
    restart: usize,
    evaluator: &Evaluator,
    layout: &ParameterLayout,
    config: &ControlConfig,
) -> Result<RestartResult, ControlError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(restart as u64);
    let dim = layout.dimension();
    let u0: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    let unit_box = vec![(0.0, 1.0); dim];

    let mut evals = 0usize;
    let mut first_o = f64::NAN;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut readout: Option<Readout> = None;
    let mut failure: Option<EvalError> = None;
    let mut score = |u: &[f64]| -> f64 {
        let params = layout.unpack(u, &config.bounds);
        let index = evals;
        evals += 1;
        match evaluator.evaluate(&params) {
            Ok(report) => {
                if index == 0 {
                    first_o = report.o;
                }
                if best.as_ref().map_or(true, |(o, _)| report.o < *o) {
                    best = Some((report.o, u.to_vec()));
                }
                if let Some(BestFeasible {
                    cost,
                    assignment,
                    time_us,
                    ..
                }) = report.best_feasible
                {
                    let candidate = Readout {
                        cost,
                        assignment,
                        time_us,
                        restart,
                        evaluation: index,
                        params,
                    };
                    if readout.as_ref().map_or(true, |r| candidate.beats(r)) {
                        readout = Some(candidate);
                    }
                }
                report.o
            }
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };

    let nm_budget = (config.budget as f64 * config.nm_budget_fraction).floor() as usize;
    let nm_config = NelderMeadConfig {
        max_evals: nm_budget,
        ..config.nelder_mead
    };
    let wrap = |e: OptimError, failure: &mut Option<EvalError>| match failure.take() {
        Some(source) => ControlError::Evaluation { restart, source },
        None => ControlError::Optimizer { restart, source: e },
    };
    let nm = nelder_mead(&mut score, &u0, &unit_box, &nm_config);
    let nm = match nm {
        Ok(o) => o,
        Err(e) => {
            drop(score);
            return Err(wrap(e, &mut failure));
        }
    };
    let remaining = config.budget.saturating_sub(nm.evals);
    let bfgs = if remaining > 0 {
        let cfg = BfgsConfig {
            max_evals: remaining,
            ..config.bfgs
        };
        let start = nm.x.clone();
        match bfgs_fd(&mut score, &start, &unit_box, &cfg) {
            Ok(o) => Some(o),
            Err(e) => {
                drop(score);
                return Err(wrap(e, &mut failure));
            }
        }
    } else {
        None
    };
    drop(score);

    let (best_o, best_u) = best.unwrap_or((f64::INFINITY, u0.clone()));
    let summary = |o: &Outcome| StageSummary {
        evals: o.evals,
        value: o.f,
        termination: o.termination,
    };
    Ok(RestartResult {
        trace: RestartTrace {
            restart,
            initial_o: first_o,
            nelder_mead: summary(&nm),
            bfgs: bfgs.as_ref().map(summary),
            evaluations: evals,
            best_o,
            best_feasible: readout,
        },
        best_u,
    })
}

pub fn optimize_protocol(
    problem: &Problem,
    scheme: &LevelScheme,
    templates: &[HamiltonianTemplate],
    config: &ControlConfig,
) -> Result<OptimizationReport, ControlError> {
    config.validate()?;
    let table = CostTable::new(problem)?;
    let evaluator = Evaluator {
        scheme,
        templates,
        table: &table,
        bounds: config.bounds,
        dt_us: config.dt_us,
        initial: initial_state(scheme, templates, config.initial_state),
        accumulator: AccumulatorConfig {
            stride: 1,
            readout_horizon_us: config.readout_horizon_us,
        },
    };
    let layout = ParameterLayout::new(templates, config.layers, config.tied_layers);
    let results: Vec<Result<RestartResult, ControlError>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| run_restart(r, &evaluator, &layout, config))
        .collect();

    let mut restarts = Vec::with_capacity(results.len());
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut readout: Option<Readout> = None;
    let mut best_so_far = Vec::new();
    let mut evaluations = 0;
    for result in results {
        let RestartResult { trace, best_u } = result?;
        evaluations += trace.evaluations;
        if best.as_ref().map_or(true, |(o, ..)| trace.best_o < *o) {
            best = Some((trace.best_o, trace.restart, best_u));
        }
        if let Some(r) = &trace.best_feasible {
            if readout.as_ref().map_or(true, |cur| r.beats(cur)) {
                readout = Some(r.clone());
            }
        }
        best_so_far.push(best.as_ref().map_or(f64::INFINITY, |b| b.0));
        restarts.push(trace);
    }
    let (best_o, best_restart, best_u) = best.unwrap_or((f64::INFINITY, 0, vec![0.5; layout.dimension()]));
    Ok(OptimizationReport {
        seed: config.seed,
        best_o,
        best_restart,
        best_params: layout.unpack(&best_u, &config.bounds),
        best_feasible: readout,
        evaluations,
        restarts,
        best_so_far,
    })
}
