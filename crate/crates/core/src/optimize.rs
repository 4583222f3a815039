//! Derivative-free minimization of the cost over piecewise-constant
//! controls, and an empirical check of Lipschitz dependence on the data.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functionals::{cost_j, CostSpec};
use crate::junction::{ControlSchedule, Junction};
use crate::models::FluidState;
use crate::netsolver::{Grid, NetworkState, Simulator};
use crate::scenario::{OptimizationSpec, Scenario};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub j: f64,
    pub j_o: f64,
    pub j_1: f64,
    pub feasible: bool,
}

impl Evaluation {
    pub fn infeasible() -> Self {
        Self { j: f64::INFINITY, j_o: f64::INFINITY, j_1: f64::INFINITY, feasible: false }
    }
}

pub trait Objective: Sync {
    fn evaluate(&self, control: &ControlSchedule) -> Evaluation;
}

/// Simulates the scenario under a control and returns its cost.
pub struct ScenarioObjective {
    pub simulator: Simulator,
    pub initial: NetworkState,
    pub cost: CostSpec,
}

impl ScenarioObjective {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let cost = scenario
            .cost
            .clone()
            .ok_or_else(|| Error::InvalidScenario("scenario has no cost".into()))?;
        Ok(Self { simulator: scenario.simulator()?, initial: scenario.initial_state()?, cost })
    }

    fn junction(&self) -> &Junction {
        &self.simulator.network.junction
    }
}

impl Objective for ScenarioObjective {
    fn evaluate(&self, control: &ControlSchedule) -> Evaluation {
        let mut initial = self.initial.clone();
        initial.control = control.clone();
        match self.simulator.evolve(initial) {
            Ok(traj) => {
                let c = cost_j(self.junction(), &traj, control, &self.cost);
                Evaluation { j: c.total, j_o: c.j_o, j_1: c.j_1, feasible: c.total.is_finite() }
            }
            Err(_) => Evaluation::infeasible(),
        }
    }
}

/// Piecewise-constant controls on `m` equal intervals of `[0, T]` with some
/// components free, box bounds and a total-variation budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlParam {
    pub horizon: f64,
    pub intervals: usize,
    /// Values of every component; free components are overwritten.
    pub base: Vec<f64>,
    pub free: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub tv_budget: f64,
}

impl ControlParam {
    pub fn from_spec(spec: &OptimizationSpec, horizon: f64, base: Vec<f64>) -> Self {
        Self {
            horizon,
            intervals: spec.intervals,
            base,
            free: spec.free.clone(),
            lower: spec.lower.clone(),
            upper: spec.upper.clone(),
            tv_budget: spec.tv_budget,
        }
    }

    pub fn len(&self) -> usize {
        self.intervals * self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_schedule(&self, x: &[f64]) -> ControlSchedule {
        let f = self.free.len();
        let values = (0..self.intervals)
            .map(|k| {
                let mut v = self.base.clone();
                for (j, &c) in self.free.iter().enumerate() {
                    v[c] = x[k * f + j];
                }
                v
            })
            .collect();
        ControlSchedule::uniform(self.horizon, values).expect("parameterized control is valid")
    }

    /// Free values of `schedule` sampled at the interval midpoints.
    pub fn from_schedule(&self, schedule: &ControlSchedule) -> Vec<f64> {
        let h = self.horizon / self.intervals as f64;
        (0..self.intervals)
            .flat_map(|k| {
                let v = schedule.value_at((k as f64 + 0.5) * h).to_vec();
                self.free.iter().map(move |&c| v[c])
            })
            .collect()
    }

    /// Euclidean TV of the free components.
    pub fn tv(&self, x: &[f64]) -> f64 {
        let f = self.free.len();
        (1..self.intervals)
            .map(|k| {
                (0..f)
                    .map(|j| (x[k * f + j] - x[(k - 1) * f + j]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum()
    }

    /// Clamp to the box, then shrink deviations from the per-component mean
    /// until the TV budget holds. Feasible points are left untouched.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let f = self.free.len();
        let mut y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| v.clamp(self.lower[i % f], self.upper[i % f]))
            .collect();
        let tv = self.tv(&y);
        if tv > self.tv_budget {
            let theta = if tv > 0.0 { self.tv_budget / tv } else { 0.0 };
            for j in 0..f {
                let mean = (0..self.intervals).map(|k| y[k * f + j]).sum::<f64>() / self.intervals as f64;
                for k in 0..self.intervals {
                    // rounding in the mean can step an ulp outside the box
                    let v = mean + theta * (y[k * f + j] - mean);
                    y[k * f + j] = v.clamp(self.lower[j], self.upper[j]);
                }
            }
        }
        y
    }

    pub fn is_feasible(&self, x: &[f64]) -> bool {
        let f = self.free.len();
        x.iter().enumerate().all(|(i, v)| *v >= self.lower[i % f] && *v <= self.upper[i % f])
            && self.tv(x) <= self.tv_budget * (1.0 + 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Maximum number of objective evaluations, the initial one included.
    pub budget: usize,
    pub initial_step: f64,
    pub min_step: f64,
    pub shrink: f64,
    pub seed: u64,
}

impl SearchConfig {
    pub fn from_spec(spec: &OptimizationSpec) -> Self {
        Self { budget: spec.budget, initial_step: spec.initial_step, min_step: spec.min_step, shrink: 0.5, seed: spec.seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub index: usize,
    pub eval: Evaluation,
    pub accepted: bool,
    pub best: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Budget,
    StepTolerance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub best: ControlSchedule,
    pub best_values: Vec<f64>,
    pub best_eval: Evaluation,
    pub log: Vec<LogEntry>,
    pub termination: Termination,
}

impl OptResult {
    /// CSV with columns `eval_index,J,J_o,J_1,accepted,best_so_far`.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("eval_index,J,J_o,J_1,accepted,best_so_far\n");
        for e in &self.log {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{},{:.16e}",
                e.index, e.eval.j, e.eval.j_o, e.eval.j_1, e.accepted as u8, e.best
            );
        }
        out
    }
}

/// Compass search: poll `x ± h eₖ` for every coordinate, move to the best
/// improving point, otherwise shrink `h`. Each poll is evaluated in
/// parallel; the seed fixes the poll order, which matters only when the
/// budget truncates a poll.
pub fn minimize<O: Objective>(
    objective: &O,
    param: &ControlParam,
    initial: &ControlSchedule,
    cfg: &SearchConfig,
) -> Result<OptResult> {
    let mut x = param.project(&param.from_schedule(initial));
    let start = param.to_schedule(&x);
    if cfg.budget == 0 {
        return Ok(OptResult {
            best_eval: objective.evaluate(initial),
            best: initial.clone(),
            best_values: x,
            log: Vec::new(),
            termination: Termination::Budget,
        });
    }
    let mut current = objective.evaluate(&start);
    if !current.feasible {
        return Err(Error::NoFeasibleStart(format!("initial control evaluates to J = {}", current.j)));
    }
    let mut log = vec![LogEntry { index: 0, eval: current, accepted: true, best: current.j }];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut step = cfg.initial_step;
    let dim = param.len();
    let termination = loop {
        if log.len() >= cfg.budget {
            break Termination::Budget;
        }
        if step < cfg.min_step {
            break Termination::StepTolerance;
        }
        let mut dirs: Vec<(usize, f64)> = (0..dim).flat_map(|k| [(k, 1.0), (k, -1.0)]).collect();
        dirs.shuffle(&mut rng);
        let mut polls: Vec<Vec<f64>> = Vec::new();
        for (k, s) in dirs {
            let mut y = x.clone();
            y[k] += s * step;
            let y = param.project(&y);
            if y != x && !polls.contains(&y) {
                polls.push(y);
            }
        }
        polls.truncate(cfg.budget - log.len());
        let evals: Vec<Evaluation> = polls.par_iter().map(|y| objective.evaluate(&param.to_schedule(y))).collect();
        let best_k = evals
            .iter()
            .enumerate()
            .filter(|(_, e)| e.feasible && e.j < current.j)
            .min_by(|a, b| a.1.j.total_cmp(&b.1.j))
            .map(|(k, _)| k);
        let best_before = current.j;
        for (k, e) in evals.iter().enumerate() {
            let accepted = Some(k) == best_k;
            let best = if accepted { e.j } else { best_before };
            log.push(LogEntry { index: log.len(), eval: *e, accepted, best });
        }
        // the accepted entry may precede others in the log; keep the column monotone
        if let Some(k) = best_k {
            let j_new = evals[k].j;
            let first = log.len() - evals.len();
            for e in log[first + k..].iter_mut() {
                e.best = j_new;
            }
            x = polls[k].clone();
            current = evals[k];
        } else {
            step *= cfg.shrink;
        }
    };
    Ok(OptResult { best: param.to_schedule(&x), best_values: x, best_eval: current, log, termination })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarnessConfig {
    pub pairs: usize,
    /// Relative amplitude of the perturbations.
    pub scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReport {
    /// `‖u(T) − ũ(T)‖_{L¹} / (‖u_o − ũ_o‖_{L¹} + ‖Π − Π̃‖_{L¹})` per pair.
    pub ratios: Vec<f64>,
    /// Pairs skipped because the data coincide.
    pub skipped: usize,
    pub max_ratio: f64,
}

/// Smooth perturbation of a profile: `Σ aₖ bump((x − cₖ)/wₖ)` in each
/// component, defined independently of the grid.
#[derive(Debug, Clone, PartialEq)]
struct Bumps {
    terms: Vec<(f64, f64, f64, f64)>,
}

impl Bumps {
    fn random(rng: &mut ChaCha8Rng, length: f64) -> Self {
        let terms = (0..3)
            .map(|_| {
                let c = rng.gen_range(0.1..0.6) * length;
                let w = rng.gen_range(0.05..0.2) * length;
                (c, w, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })
            .collect();
        Self { terms }
    }

    fn at(&self, x: f64) -> (f64, f64) {
        self.terms.iter().fold((0.0, 0.0), |acc, &(c, w, a, b)| {
            let s = (x - c) / w;
            let phi = if s.abs() < 1.0 { (-1.0 / (1.0 - s * s)).exp() * std::f64::consts::E } else { 0.0 };
            (acc.0 + a * phi, acc.1 + b * phi)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Perturbation {
    profiles: Vec<Bumps>,
    control: Vec<Vec<f64>>,
}

impl Perturbation {
    fn random(rng: &mut ChaCha8Rng, pipes: usize, length: f64, intervals: usize, dim: usize) -> Self {
        let profiles = (0..pipes).map(|_| Bumps::random(rng, length)).collect();
        // the first component (mass balance) is left alone
        let control = (0..intervals)
            .map(|_| (0..dim).map(|c| if c == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect())
            .collect();
        Self { profiles, control }
    }

    fn apply(&self, state: &NetworkState, grid: &Grid, eps: f64) -> NetworkState {
        let pipes = state
            .pipes
            .iter()
            .zip(&self.profiles)
            .map(|(cells, b)| {
                cells
                    .iter()
                    .enumerate()
                    .map(|(i, u)| {
                        let (dr, dq) = b.at(grid.center(i));
                        FluidState::new(u.density * (1.0 + eps * dr), u.momentum + eps * dq * u.density)
                    })
                    .collect()
            })
            .collect();
        let values = state
            .control
            .values
            .iter()
            .zip(&self.control)
            .map(|(v, d)| {
                v.iter()
                    .zip(d)
                    .map(|(a, b)| a + eps * b * a.abs().max(1e-2))
                    .collect()
            })
            .collect();
        let control = ControlSchedule { breakpoints: state.control.breakpoints.clone(), values };
        NetworkState { t: state.t, pipes, control }
    }
}

/// Empirical Lipschitz constant of `(u_o, Π) ↦ u(T)` around the scenario's
/// initial data. Both members of a pair are independent random smooth
/// perturbations of the base point, so the ensemble probes a neighbourhood.
pub fn lipschitz_harness(scenario: &Scenario, cfg: &HarnessConfig) -> Result<LipschitzReport> {
    let sim = scenario.simulator()?;
    let base = scenario.initial_state()?;
    let grid = sim.network.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = scenario.pipes.len();
    let m = base.control.intervals();
    let pairs: Vec<(Perturbation, Perturbation)> = (0..cfg.pairs)
        .map(|_| {
            (
                Perturbation::random(&mut rng, n, grid.length, m, n),
                Perturbation::random(&mut rng, n, grid.length, m, n),
            )
        })
        .collect();
    let results: Vec<Result<Option<f64>>> = pairs
        .par_iter()
        .map(|(a, b)| {
            let p = a.apply(&base, &grid, cfg.scale);
            let q = b.apply(&base, &grid, cfg.scale);
            pair_ratio(&sim, &p, &q)
        })
        .collect();
    let mut ratios = Vec::new();
    let mut skipped = 0;
    for r in results {
        match r? {
            Some(v) => ratios.push(v),
            None => skipped += 1,
        }
    }
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(LipschitzReport { ratios, skipped, max_ratio })
}

/// Ratio for one pair of data, or `None` when the data coincide. The
/// control distance is taken over the whole schedule, so controls that
/// differ only after the final time give a ratio of zero.
pub fn pair_ratio(sim: &Simulator, p: &NetworkState, q: &NetworkState) -> Result<Option<f64>> {
    let dx = sim.network.grid.dx();
    let horizon = p.control.horizon().max(q.control.horizon());
    let denom = p.l1_distance(q, dx) + p.control.l1_distance(&q.control, p.t, horizon);
    if denom == 0.0 {
        return Ok(None);
    }
    let a = sim.evolve(p.clone())?;
    let b = sim.evolve(q.clone())?;
    Ok(Some(a.final_state.l1_distance(&b.final_state, dx) / denom))
}
