//! Finite-volume evolution of a single-junction network.
//!
//! Each pipe is a uniform grid on `[0, X]` with cell 0 next to the junction.
//! Interior faces use the Godunov flux of the exact Riemann solver, the
//! junction face uses the traces of the junction Riemann problem, and the far
//! face is a zero-gradient outflow. Sources enter through an explicit Euler
//! increment, composed with the convective step by Lie or Strang splitting.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::junction::{ControlSchedule, Junction};
use crate::models::{FluidState, PipeModel};
use crate::riemann;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub cells: usize,
    /// Domain length `X`, which should exceed every active length.
    pub length: f64,
}

impl Grid {
    pub fn new(cells: usize, length: f64) -> Result<Self> {
        let g = Self { cells, length };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 || !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "grid needs cells > 0 and a positive length, got {} cells on {}",
                self.cells, self.length
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.length / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx()
    }

    /// Abscissa of the face between cells `i − 1` and `i`.
    pub fn face(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Splitting {
    /// Convective step followed by a full source step.
    Lie,
    /// Half source, convective step, half source.
    #[default]
    Strang,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FluxKind {
    #[default]
    ExactGodunov,
    Hll,
}

fn default_cfl() -> f64 {
    0.45
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default)]
    pub splitting: Splitting,
    #[serde(default)]
    pub flux: FluxKind,
    pub t_end: f64,
    /// Keep every `stride`-th step as a snapshot (the final state is always kept).
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Overrides the CFL step when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    /// `TV(p)` above this aborts the run with [`Error::DomainExceeded`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tv_budget: Option<f64>,
    /// Skip the source step entirely.
    #[serde(default)]
    pub advect_only: bool,
}

impl SolverConfig {
    pub fn until(t_end: f64) -> Self {
        Self {
            cfl: default_cfl(),
            splitting: Splitting::default(),
            flux: FluxKind::default(),
            t_end,
            stride: 1,
            fixed_dt: None,
            max_steps: None,
            tv_budget: None,
            advect_only: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::InvalidScenario(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidScenario(format!("t_end must be finite and >= 0, got {}", self.t_end)));
        }
        if self.stride == 0 {
            return Err(Error::InvalidScenario("stride must be positive".into()));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidScenario(format!("fixed_dt must be positive, got {dt}")));
            }
        }
        Ok(())
    }
}

/// Extended state `p = (u, Π)` at time `t`. The control keeps absolute
/// times; [`NetworkState::remaining_control`] gives the translate `𝒯_t Π`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub t: f64,
    pub pipes: Vec<Vec<FluidState>>,
    pub control: ControlSchedule,
}

impl NetworkState {
    pub fn uniform(grid: &Grid, states: &[FluidState], control: ControlSchedule) -> Self {
        Self { t: 0.0, pipes: states.iter().map(|s| vec![*s; grid.cells]).collect(), control }
    }

    pub fn remaining_control(&self) -> ControlSchedule {
        self.control.translated(self.t)
    }

    pub fn boundary_states(&self) -> Vec<FluidState> {
        self.pipes.iter().map(|p| p[0]).collect()
    }

    /// `Σ_l ‖u_l − ũ_l‖_{L¹}` over the common grid.
    pub fn l1_distance(&self, other: &NetworkState, dx: f64) -> f64 {
        self.pipes
            .iter()
            .zip(&other.pipes)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (*x - *y).norm1()).sum::<f64>() * dx)
            .sum()
    }

    /// Sum over pipes of interface jumps in the 1-norm.
    pub fn tv_u(&self) -> f64 {
        self.pipes.iter().map(|p| p.windows(2).map(|w| (w[1] - w[0]).norm1()).sum::<f64>()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub junction: Junction,
    pub grid: Grid,
}

/// What happened at the junction and inside the pipes during one convective step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub traces: Vec<FluidState>,
    pub sigmas: Vec<f64>,
    pub residual: f64,
    /// Mass fluxes through the junction face, per pipe (positive into the pipe).
    pub influx: Vec<f64>,
    /// Mass fluxes through the far face, per pipe.
    pub outflux: Vec<f64>,
    /// Sum over cells of the positive part of the discrete entropy production.
    pub entropy_positive: f64,
    /// Signed total of the discrete entropy production.
    pub entropy_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub pi: Vec<f64>,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub pipes: Vec<Vec<FluidState>>,
}

/// Per-pipe mass bookkeeping `M(t) − M(0) − ∫(influx − outflux)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassLedger {
    pub initial: Vec<f64>,
    pub current: Vec<f64>,
    pub boundary_flow: Vec<f64>,
}

impl MassLedger {
    fn new(masses: Vec<f64>) -> Self {
        let n = masses.len();
        Self { initial: masses.clone(), current: masses, boundary_flow: vec![0.0; n] }
    }

    /// Largest relative bookkeeping error over the pipes.
    pub fn relative_error(&self) -> f64 {
        (0..self.initial.len())
            .map(|l| {
                let err = self.current[l] - self.initial[l] - self.boundary_flow[l];
                err.abs() / self.initial[l].abs().max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    pub snapshots: Vec<Snapshot>,
    pub steps: Vec<StepRecord>,
    pub mass: MassLedger,
    pub control: ControlSchedule,
    pub final_state: NetworkState,
}

impl Trajectory {
    pub fn initial(&self) -> &Snapshot {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().unwrap()
    }

    /// CSV with columns `t,pipe,x,density,momentum`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,pipe,x,density,momentum\n");
        for s in &self.snapshots {
            for (l, pipe) in s.pipes.iter().enumerate() {
                for (i, u) in pipe.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{:.16e},{},{:.16e},{:.16e},{:.16e}",
                        s.t,
                        l,
                        self.grid.center(i),
                        u.density,
                        u.momentum
                    );
                }
            }
        }
        out
    }

    /// CSV with one row per step and pipe: `t,dt,pipe,pi,density,momentum,sigma,residual`.
    pub fn traces_csv(&self) -> String {
        let mut out = String::from("t,dt,pipe,pi,density,momentum,sigma,residual\n");
        for r in &self.steps {
            for (l, tr) in r.info.traces.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    r.t, r.dt, l, r.pi[l], tr.density, tr.momentum, r.info.sigmas[l], r.info.residual
                );
            }
        }
        out
    }
}

fn hll_flux(model: &PipeModel, ul: FluidState, ur: FluidState) -> [f64; 2] {
    let (l1l, l2l) = model.eigenvalues_raw(ul);
    let (l1r, l2r) = model.eigenvalues_raw(ur);
    let sl = l1l.min(l1r);
    let sr = l2l.max(l2r);
    let fl = model.flux_raw(ul);
    let fr = model.flux_raw(ur);
    if sl >= 0.0 {
        return fl;
    }
    if sr <= 0.0 {
        return fr;
    }
    let a = ul.to_array();
    let b = ur.to_array();
    let mut f = [0.0; 2];
    for k in 0..2 {
        f[k] = (sr * fl[k] - sl * fr[k] + sl * sr * (b[k] - a[k])) / (sr - sl);
    }
    f
}

/// Flux and entropy flux across one interior face.
fn face_flux(model: &PipeModel, kind: FluxKind, ul: FluidState, ur: FluidState) -> Result<([f64; 2], f64)> {
    let pair = model.entropy_pair();
    if ul == ur {
        return Ok((model.flux_raw(ul), pair.flux(ul)));
    }
    match kind {
        FluxKind::ExactGodunov => {
            let fan = riemann::solve_riemann(model, ul, ur)?;
            let u0 = fan.sample(0.0);
            Ok((model.flux_raw(u0), pair.flux(u0)))
        }
        FluxKind::Hll => {
            ul.check()?;
            ur.check()?;
            // no single interface state; average the one-sided entropy fluxes
            Ok((hll_flux(model, ul, ur), 0.5 * (pair.flux(ul) + pair.flux(ur))))
        }
    }
}

pub struct Simulator {
    pub network: Network,
    pub config: SolverConfig,
}

impl Simulator {
    pub fn new(network: Network, config: SolverConfig) -> Result<Self> {
        network.grid.validate()?;
        config.validate()?;
        Ok(Self { network, config })
    }

    fn pipes(&self) -> &[PipeModel] {
        &self.network.junction.pipes
    }

    fn check_shape(&self, state: &NetworkState) -> Result<()> {
        let n = self.pipes().len();
        if state.pipes.len() != n || state.pipes.iter().any(|p| p.len() != self.network.grid.cells) {
            return Err(Error::InvalidScenario(format!(
                "state must have {n} pipes of {} cells",
                self.network.grid.cells
            )));
        }
        if state.control.dim() != n {
            return Err(Error::InvalidScenario(format!("control must have {n} components")));
        }
        Ok(())
    }

    pub fn masses(&self, state: &NetworkState) -> Vec<f64> {
        let dx = self.network.grid.dx();
        state.pipes.iter().map(|p| p.iter().map(|u| u.density).sum::<f64>() * dx).collect()
    }

    /// CFL step from the cell speeds, before truncation at breakpoints.
    pub fn cfl_dt(&self, state: &NetworkState) -> f64 {
        let speed = self
            .pipes()
            .iter()
            .zip(&state.pipes)
            .flat_map(|(m, p)| p.iter().map(move |u| m.max_speed(*u)))
            .fold(0.0, f64::max);
        self.config.cfl * self.network.grid.dx() / speed.max(f64::MIN_POSITIVE)
    }

    /// Homogeneous update `S_dt` with the junction control `pi` held fixed.
    pub fn advect_step(&self, pipes: &[Vec<FluidState>], dt: f64, pi: &[f64]) -> Result<(Vec<Vec<FluidState>>, StepInfo)> {
        let junction = &self.network.junction;
        let boundary: Vec<FluidState> = pipes.iter().map(|p| p[0]).collect();
        let sol = junction.solve_junction_riemann(&boundary, pi)?;
        let dx = self.network.grid.dx();
        let lambda = dt / dx;
        let kind = self.config.flux;

        let updated: Vec<Result<(Vec<FluidState>, f64, f64, f64, f64)>> = pipes
            .par_iter()
            .zip(self.pipes().par_iter())
            .zip(sol.traces.par_iter())
            .map(|((cells, model), trace)| {
                let pair = model.entropy_pair();
                let m = cells.len();
                let mut flux = Vec::with_capacity(m + 1);
                let mut eflux = Vec::with_capacity(m + 1);
                flux.push(model.flux_raw(*trace));
                eflux.push(pair.flux(*trace));
                for i in 0..m - 1 {
                    let (f, g) = face_flux(model, kind, cells[i], cells[i + 1])?;
                    flux.push(f);
                    eflux.push(g);
                }
                flux.push(model.flux_raw(cells[m - 1]));
                eflux.push(pair.flux(cells[m - 1]));

                let mut next = Vec::with_capacity(m);
                let mut pos = 0.0;
                let mut total = 0.0;
                for i in 0..m {
                    let u = cells[i];
                    let rho = u.density - lambda * (flux[i + 1][0] - flux[i][0]);
                    let q = u.momentum - lambda * (flux[i + 1][1] - flux[i][1]);
                    let v = FluidState::new(rho, q);
                    // production = η(uⁿ⁺¹) − η(uⁿ) + λ(G_{i+½} − G_{i−½}), per unit dx
                    if v.density > 0.0 {
                        let p = pair.eta(v) - pair.eta(u) + lambda * (eflux[i + 1] - eflux[i]);
                        total += p * dx;
                        pos += p.max(0.0) * dx;
                    }
                    next.push(v);
                }
                Ok((next, flux[0][0], flux[m][0], pos, total))
            })
            .collect();

        let n = pipes.len();
        let mut next = Vec::with_capacity(n);
        let mut influx = Vec::with_capacity(n);
        let mut outflux = Vec::with_capacity(n);
        let mut entropy_positive = 0.0;
        let mut entropy_total = 0.0;
        for r in updated {
            let (cells, fin, fout, pos, total) = r?;
            next.push(cells);
            influx.push(fin);
            outflux.push(fout);
            entropy_positive += pos;
            entropy_total += total;
        }
        let info = StepInfo {
            traces: sol.traces,
            sigmas: sol.sigmas,
            residual: sol.residual,
            influx,
            outflux,
            entropy_positive,
            entropy_total,
        };
        Ok((next, info))
    }

    /// Explicit Euler increment `u ← u + τ g(x, u)` at the cell centres.
    pub fn source_step(&self, pipes: &mut [Vec<FluidState>], tau: f64) -> Result<()> {
        let grid = self.network.grid;
        for (cells, model) in pipes.iter_mut().zip(self.pipes()) {
            for (i, u) in cells.iter_mut().enumerate() {
                u.check()?;
                let s = model.source_raw(grid.center(i), *u);
                u.momentum += tau * s[1];
            }
        }
        Ok(())
    }

    /// One splitting step of length `dt` starting at `state.t`.
    pub fn step(&self, state: &NetworkState, dt: f64) -> Result<(NetworkState, StepRecord)> {
        let pi = state.control.value_at(state.t + 0.5 * dt).to_vec();
        let mut pipes = state.pipes.clone();
        let with_source = !self.config.advect_only;
        if with_source && self.config.splitting == Splitting::Strang {
            self.source_step(&mut pipes, 0.5 * dt)?;
        }
        let (mut pipes, info) = self.advect_step(&pipes, dt, &pi)?;
        if with_source {
            let tau = match self.config.splitting {
                Splitting::Lie => dt,
                Splitting::Strang => 0.5 * dt,
            };
            self.source_step(&mut pipes, tau)?;
        }
        let t_next = state.t + dt;
        for (l, (cells, model)) in pipes.iter().zip(self.pipes()).enumerate() {
            if let Some(i) = cells.iter().position(|u| !model.is_subsonic(*u)) {
                return Err(Error::Supersonic { pipe: l, cell: i, t: t_next });
            }
        }
        let record = StepRecord { t: state.t, dt, pi, info };
        Ok((NetworkState { t: t_next, pipes, control: state.control.clone() }, record))
    }

    /// Next step length from `state`, truncated at control switches and `t_end`.
    pub fn next_dt(&self, state: &NetworkState) -> f64 {
        let mut dt = self.config.fixed_dt.unwrap_or_else(|| self.cfl_dt(state));
        if let Some(b) = state.control.next_switch_after(state.t) {
            dt = dt.min(b - state.t);
        }
        dt.min(self.config.t_end - state.t)
    }

    /// Runs from `initial.t` to `config.t_end`.
    pub fn evolve(&self, initial: NetworkState) -> Result<Trajectory> {
        self.check_shape(&initial)?;
        for (l, (cells, model)) in initial.pipes.iter().zip(self.pipes()).enumerate() {
            if let Some(i) = cells.iter().position(|u| !model.is_subsonic(*u)) {
                return Err(Error::Supersonic { pipe: l, cell: i, t: initial.t });
            }
        }
        let mut mass = MassLedger::new(self.masses(&initial));
        let mut snapshots = vec![Snapshot { t: initial.t, pipes: initial.pipes.clone() }];
        let mut steps = Vec::new();
        let mut state = initial;
        let mut count = 0usize;
        self.check_budget(&state)?;

        while state.t < self.config.t_end {
            if self.config.max_steps.is_some_and(|m| count >= m) {
                break;
            }
            let dt = self.next_dt(&state);
            if !(dt > 0.0) {
                break;
            }
            let (next, record) = self.step(&state, dt).map_err(|e| Error::AtStep {
                step: count,
                t: state.t,
                source: Box::new(e),
            })?;
            for l in 0..mass.initial.len() {
                mass.boundary_flow[l] += dt * (record.info.influx[l] - record.info.outflux[l]);
            }
            state = next;
            count += 1;
            self.check_budget(&state)
                .map_err(|e| Error::AtStep { step: count, t: state.t, source: Box::new(e) })?;
            steps.push(record);
            if count % self.config.stride == 0 {
                snapshots.push(Snapshot { t: state.t, pipes: state.pipes.clone() });
            }
        }
        if snapshots.last().unwrap().t != state.t {
            snapshots.push(Snapshot { t: state.t, pipes: state.pipes.clone() });
        }
        mass.current = self.masses(&state);
        Ok(Trajectory {
            grid: self.network.grid,
            snapshots,
            steps,
            mass,
            control: state.control.clone(),
            final_state: state,
        })
    }

    fn check_budget(&self, state: &NetworkState) -> Result<()> {
        if let Some(budget) = self.config.tv_budget {
            let tv = crate::functionals::tv_p(&self.network.junction, state)?;
            if tv > budget {
                return Err(Error::DomainExceeded { tv, budget });
            }
        }
        Ok(())
    }
}

/// Smooth bump supported on `|s| < 1`.
fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp() * std::f64::consts::E
    }
}

/// Test function `φ(t, x) = bump((t − t_c)/t_w) · bump((x − x_c)/x_w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    pub t_center: f64,
    pub t_width: f64,
    pub x_center: f64,
    pub x_width: f64,
}

impl TestFunction {
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        bump((t - self.t_center) / self.t_width) * bump((x - self.x_center) / self.x_width)
    }

    /// A basket of bumps inside `(t0, t1) × (0, X)`.
    pub fn basket(t0: f64, t1: f64, length: f64) -> Vec<TestFunction> {
        let mut out = Vec::new();
        let span = t1 - t0;
        for &(tc, tw) in &[(0.5, 0.45), (0.3, 0.25), (0.7, 0.25)] {
            for &(xc, xw) in &[(0.25, 0.2), (0.5, 0.3), (0.6, 0.15)] {
                out.push(TestFunction {
                    t_center: t0 + tc * span,
                    t_width: tw * span,
                    x_center: xc * length,
                    x_width: xw * length,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakEntropyReport {
    /// Largest weak-form residual over the basket, per pipe and component.
    pub weak_residual: f64,
    /// `∫∫` of the positive part of the discrete entropy production.
    pub entropy_positive: f64,
    /// Signed total entropy production (non-positive for entropy solutions).
    pub entropy_total: f64,
    /// Largest `‖Ψ(traces) − Π‖` over the recorded steps.
    pub junction_residual: f64,
}

/// Weak-form, entropy and junction diagnostics of a stored trajectory.
///
/// The weak residual is the discrete form of
/// `∫∫ u φ_t + f(u) φ_x + g(x, u) φ dx dt` over consecutive snapshots with
/// point values of `φ`, so it vanishes to rounding for constant solutions
/// and is `O(Δx)` for converged numerical solutions.
pub fn weak_entropy_residual(network: &Network, traj: &Trajectory) -> WeakEntropyReport {
    let grid = traj.grid;
    let dx = grid.dx();
    let snaps = &traj.snapshots;
    let mut weak: f64 = 0.0;
    if snaps.len() >= 2 {
        let t0 = snaps[0].t;
        let t1 = snaps.last().unwrap().t;
        for phi in TestFunction::basket(t0, t1, grid.length) {
            for (l, model) in network.junction.pipes.iter().enumerate() {
                let mut acc = [0.0f64; 2];
                for w in snaps.windows(2) {
                    let (ta, tb) = (w[0].t, w[1].t);
                    let h = tb - ta;
                    for (i, u) in w[0].pipes[l].iter().enumerate() {
                        let x = grid.center(i);
                        let dphi_t = phi.eval(tb, x) - phi.eval(ta, x);
                        let dphi_x = phi.eval(ta, grid.face(i + 1)) - phi.eval(ta, grid.face(i));
                        let f = model.flux_raw(*u);
                        let g = model.source_raw(x, *u);
                        let p = phi.eval(ta, x);
                        acc[0] += dx * u.density * dphi_t + h * f[0] * dphi_x + h * dx * g[0] * p;
                        acc[1] += dx * u.momentum * dphi_t + h * f[1] * dphi_x + h * dx * g[1] * p;
                    }
                }
                weak = weak.max(acc[0].abs()).max(acc[1].abs());
            }
        }
    }
    let entropy_positive = traj.steps.iter().map(|r| r.info.entropy_positive).sum();
    let entropy_total = traj.steps.iter().map(|r| r.info.entropy_total).sum();
    let junction_residual = traj.steps.iter().map(|r| r.info.residual).fold(0.0, f64::max);
    WeakEntropyReport { weak_residual: weak, entropy_positive, entropy_total, junction_residual }
}
