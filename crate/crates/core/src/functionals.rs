//! Total variation, Glimm functionals, the stability functional and the
//! application cost functionals.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::junction::{ControlSchedule, Junction};
use crate::models::FluidState;
use crate::netsolver::{Grid, NetworkState, Trajectory};
use crate::riemann::{self, Family};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalConfig {
    /// Weight of 1-waves in `V`.
    pub k_j: f64,
    /// Weight of `TV(Π)` in `Υ`.
    pub k_hat: f64,
    /// Weight of the interaction potential `Q` in `Υ`.
    pub k_check: f64,
    /// Extra weight of the 1-family in the stability functional.
    pub k: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    /// Weight of the control distance in the stability functional.
    pub k_bar: f64,
}

impl Default for FunctionalConfig {
    fn default() -> Self {
        Self { k_j: 1.0, k_hat: 1.0, k_check: 1.0, k: 1.0, kappa1: 1.0, kappa2: 1.0, k_bar: 1.0 }
    }
}

impl FunctionalConfig {
    /// Defaults with `K_J = max(1, reflection norm of the junction)`.
    pub fn for_junction(junction: &Junction) -> Result<Self> {
        let k_j = junction.reflection_norm()?.max(1.0);
        Ok(Self { k_j, ..Self::default() })
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.k_j, self.k_hat, self.k_check, self.k, self.kappa1, self.kappa2, self.k_bar];
        if all.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidScenario("functional weights must be positive".into()));
        }
        Ok(())
    }
}

/// A wave located at grid face `face` (face 0 is the junction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacedWave {
    pub face: usize,
    pub family: Family,
    pub size: f64,
}

impl PlacedWave {
    fn is_shock(&self) -> bool {
        self.size < 0.0
    }
}

/// Waves of a piecewise-constant network state, per pipe and ordered by face.
///
/// Face 0 carries the 2-waves of the junction Riemann problem with boundary
/// data `u(0+)` and control `pi`; interior faces carry both waves of the
/// local Riemann problem.
pub fn network_waves(junction: &Junction, pipes: &[Vec<FluidState>], pi: &[f64]) -> Result<Vec<Vec<PlacedWave>>> {
    let boundary: Vec<FluidState> = pipes.iter().map(|p| p[0]).collect();
    let sol = junction.solve_junction_riemann(&boundary, pi)?;
    let mut out = Vec::with_capacity(pipes.len());
    for (l, (cells, model)) in pipes.iter().zip(&junction.pipes).enumerate() {
        let mut waves = Vec::with_capacity(2 * cells.len());
        if sol.sigmas[l] != 0.0 {
            waves.push(PlacedWave { face: 0, family: Family::Second, size: sol.sigmas[l] });
        }
        for i in 0..cells.len().saturating_sub(1) {
            if cells[i] == cells[i + 1] {
                continue;
            }
            let (s1, s2) = riemann::decompose(model, cells[i], cells[i + 1])?;
            if s1 != 0.0 {
                waves.push(PlacedWave { face: i + 1, family: Family::First, size: s1 });
            }
            if s2 != 0.0 {
                waves.push(PlacedWave { face: i + 1, family: Family::Second, size: s2 });
            }
        }
        out.push(waves);
    }
    Ok(out)
}

/// `V = Σ (2 K_J |σ₁| + |σ₂|)`.
pub fn glimm_v(waves: &[Vec<PlacedWave>], k_j: f64) -> f64 {
    waves
        .iter()
        .flatten()
        .map(|w| match w.family {
            Family::First => 2.0 * k_j * w.size.abs(),
            Family::Second => w.size.abs(),
        })
        .sum()
}

/// Interaction potential over approaching pairs in the same pipe: a 2-wave
/// left of a 1-wave, or two waves of the same family at least one of which
/// is a shock. Waves sharing a face never approach.
pub fn glimm_q(waves: &[Vec<PlacedWave>]) -> f64 {
    let mut q = 0.0;
    for pipe in waves {
        // sums over waves on faces strictly left of the current one
        let (mut s1, mut s1_shock, mut s2, mut s2_shock) = (0.0, 0.0, 0.0, 0.0);
        let mut k = 0;
        while k < pipe.len() {
            let face = pipe[k].face;
            let mut end = k;
            while end < pipe.len() && pipe[end].face == face {
                end += 1;
            }
            for w in &pipe[k..end] {
                let a = w.size.abs();
                q += a * match (w.family, w.is_shock()) {
                    (Family::First, true) => s2 + s1,
                    (Family::First, false) => s2 + s1_shock,
                    (Family::Second, true) => s2,
                    (Family::Second, false) => s2_shock,
                };
            }
            for w in &pipe[k..end] {
                let a = w.size.abs();
                match w.family {
                    Family::First => {
                        s1 += a;
                        if w.is_shock() {
                            s1_shock += a;
                        }
                    }
                    Family::Second => {
                        s2 += a;
                        if w.is_shock() {
                            s2_shock += a;
                        }
                    }
                }
            }
            k = end;
        }
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Upsilon {
    pub v: f64,
    pub q: f64,
    /// `TV(𝒯_t Π)`.
    pub tv_control: f64,
    pub value: f64,
}

/// `Υ = V + K̂ TV(𝒯_t Π) + Ǩ Q`.
pub fn upsilon(junction: &Junction, state: &NetworkState, cfg: &FunctionalConfig) -> Result<Upsilon> {
    let waves = network_waves(junction, &state.pipes, state.control.value_at(state.t))?;
    Ok(upsilon_from_waves(&waves, &state.control, state.t, cfg))
}

fn upsilon_from_waves(waves: &[Vec<PlacedWave>], control: &ControlSchedule, t: f64, cfg: &FunctionalConfig) -> Upsilon {
    let v = glimm_v(waves, cfg.k_j);
    let q = glimm_q(waves);
    let tv_control = control.tv_after(t);
    Upsilon { v, q, tv_control, value: v + cfg.k_hat * tv_control + cfg.k_check * q }
}

/// Total variation of a single piecewise-constant profile in the 1-norm.
pub fn tv_profile(cells: &[FluidState]) -> f64 {
    cells.windows(2).map(|w| (w[1] - w[0]).norm1()).sum()
}

pub fn tv_control(control: &ControlSchedule) -> f64 {
    control.tv()
}

/// `TV(p) = TV(u) + TV(𝒯_t Π) + ‖Ψ(u(0+)) − Π(t)‖`.
pub fn tv_p(junction: &Junction, state: &NetworkState) -> Result<f64> {
    let psi = junction.psi(&state.boundary_states())?;
    let pi = state.control.value_at(state.t);
    let mismatch = psi.iter().zip(pi).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(state.tv_u() + state.control.tv_after(state.t) + mismatch)
}

/// Prefix sums of `|σ|` by face for one family and one state.
fn face_sums(waves: &[PlacedWave], family: Family, faces: usize) -> Vec<f64> {
    let mut per_face = vec![0.0; faces];
    for w in waves.iter().filter(|w| w.family == family) {
        per_face[w.face] += w.size.abs();
    }
    let mut acc = 0.0;
    per_face
        .iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

/// Stability functional `Φ(p, p̃)` for two states on the same grid.
///
/// `q(x)` are the wave sizes connecting `u(x)` to `ũ(x)`. The weights count
/// waves of the other family approaching from the side they travel toward,
/// and waves of the same family on the side selected by the sign of `q_i`.
pub fn stability_phi(
    junction: &Junction,
    grid: &Grid,
    p: &NetworkState,
    p_tilde: &NetworkState,
    cfg: &FunctionalConfig,
) -> Result<f64> {
    let dx = grid.dx();
    let wu = network_waves(junction, &p.pipes, p.control.value_at(p.t))?;
    let ww = network_waves(junction, &p_tilde.pipes, p_tilde.control.value_at(p_tilde.t))?;
    let ups = upsilon_from_waves(&wu, &p.control, p.t, cfg).value
        + upsilon_from_waves(&ww, &p_tilde.control, p_tilde.t, cfg).value;
    let faces = grid.cells + 1;
    let mut total = 0.0;
    for (l, model) in junction.pipes.iter().enumerate() {
        let sums_u = [face_sums(&wu[l], Family::First, faces), face_sums(&wu[l], Family::Second, faces)];
        let sums_w = [face_sums(&ww[l], Family::First, faces), face_sums(&ww[l], Family::Second, faces)];
        let left = |s: &Vec<f64>, j: usize| s[j];
        let right = |s: &Vec<f64>, j: usize| s[faces - 1] - s[j];
        for j in 0..grid.cells {
            let (u, w) = (p.pipes[l][j], p_tilde.pipes[l][j]);
            if u == w {
                continue;
            }
            let (q1, q2) = riemann::decompose(model, u, w)?;
            // other-family waves approaching x = centre of cell j
            let cross1 = left(&sums_u[1], j) + left(&sums_w[1], j);
            let cross2 = right(&sums_u[0], j) + right(&sums_w[0], j);
            let same1 = if q1 < 0.0 {
                left(&sums_u[0], j) + right(&sums_w[0], j)
            } else {
                left(&sums_w[0], j) + right(&sums_u[0], j)
            };
            let same2 = if q2 < 0.0 {
                left(&sums_u[1], j) + right(&sums_w[1], j)
            } else {
                left(&sums_w[1], j) + right(&sums_u[1], j)
            };
            let common = cfg.kappa1 * cfg.kappa2 * ups;
            let w1 = cfg.k * (1.0 + cfg.kappa1 * (cross1 + same1) + common);
            let w2 = 1.0 + cfg.kappa1 * (cross2 + same2) + common;
            total += dx * (q1.abs() * w1 + q2.abs() * w2);
        }
    }
    let t0 = p.t.max(p_tilde.t);
    let t1 = p.control.horizon().max(p_tilde.control.horizon());
    Ok(total + cfg.k_bar * p.control.l1_distance(&p_tilde.control, t0, t1))
}

/// Piecewise-constant non-negative weight `φ(x)`; `values[k]` holds on
/// `[breakpoints[k], breakpoints[k+1])` and the last value beyond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl Weight {
    pub fn constant(v: f64) -> Self {
        Self { breakpoints: vec![0.0], values: vec![v] }
    }

    pub fn at(&self, x: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&b| b <= x);
        if k == 0 {
            0.0
        } else {
            self.values[k - 1]
        }
    }
}

fn default_pipe() -> usize {
    1
}

/// Application cost `𝒥 = J_o(Π) + ∫₀ᵀ J₁(u(τ)) dτ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CostSpec {
    /// `J_o = TV(Π) + ‖Π‖_∞`, `J₁ = ∫_{x_a}^{x_b} |p(ρ) − p̄| dx` on `pipe`.
    CompressorTarget {
        p_bar: f64,
        x_a: f64,
        x_b: f64,
        #[serde(default = "default_pipe")]
        pipe: usize,
    },
    /// `J_o = ∫ |Π₂| dt`, `J₁ = Σ φ(x_{i+½}) |H_{i+1} − H_i|` on the downstream canal.
    GateSmoothing { weight: Weight },
    /// `J_o = Σᵢ ∫ cᵢ |Πᵢ₊₁| dt`, `J₁ = ∫₀^L (H_n − h̄)⁺ dx`.
    ValveOverflow { costs: Vec<f64>, h_bar: f64, length: f64 },
    /// `J_o = ∫ c |Π₂| dt`, `J₁ = ∫₀^L (H₂ − h̄)⁺ dx`.
    PumpCost { cost: f64, h_bar: f64, length: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub j_o: f64,
    /// `∫₀ᵀ J₁ dτ`.
    pub j_1: f64,
    pub total: f64,
}

/// `∫_a^b |cell-wise f|` for piecewise-constant cell data, exact in `x`.
fn cell_integral(grid: &Grid, a: f64, b: f64, mut f: impl FnMut(usize) -> f64) -> f64 {
    let dx = grid.dx();
    let a = a.max(0.0);
    let b = b.min(grid.length);
    if b <= a {
        return 0.0;
    }
    let first = ((a / dx).floor() as usize).min(grid.cells - 1);
    let last = ((b / dx).ceil() as usize).min(grid.cells);
    (first..last)
        .map(|j| {
            let lo = grid.face(j).max(a);
            let hi = grid.face(j + 1).min(b);
            if hi > lo {
                (hi - lo) * f(j)
            } else {
                0.0
            }
        })
        .sum()
}

impl CostSpec {
    pub fn validate(&self, n_pipes: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidScenario(m.to_string()));
        match self {
            CostSpec::CompressorTarget { p_bar, x_a, x_b, pipe } => {
                if !(*x_a > 0.0 && x_a < x_b) || !p_bar.is_finite() || *pipe >= n_pipes {
                    return bad("compressor cost needs 0 < x_a < x_b and a valid pipe");
                }
            }
            CostSpec::GateSmoothing { weight } => {
                if weight.values.len() != weight.breakpoints.len()
                    || weight.values.iter().any(|v| !(*v >= 0.0))
                    || weight.breakpoints.windows(2).any(|w| !(w[0] < w[1]))
                {
                    return bad("gate weight must be non-negative with increasing breakpoints");
                }
            }
            CostSpec::ValveOverflow { costs, length, .. } => {
                if costs.len() + 1 != n_pipes || costs.iter().any(|c| !(*c >= 0.0)) || !(*length > 0.0) {
                    return bad("valve costs need n - 1 non-negative weights and a positive length");
                }
            }
            CostSpec::PumpCost { cost, length, .. } => {
                if !(*cost >= 0.0) || !(*length > 0.0) {
                    return bad("pump cost needs a non-negative weight and a positive length");
                }
            }
        }
        Ok(())
    }

    pub fn j_o(&self, control: &ControlSchedule) -> f64 {
        match self {
            CostSpec::CompressorTarget { .. } => control.tv() + control.sup_norm(),
            CostSpec::GateSmoothing { .. } => control.integrate(|v| v[1].abs()),
            CostSpec::ValveOverflow { costs, .. } => {
                control.integrate(|v| costs.iter().zip(&v[1..]).map(|(c, u)| c * u.abs()).sum())
            }
            CostSpec::PumpCost { cost, .. } => control.integrate(|v| cost * v[1].abs()),
        }
    }

    /// Running cost of one snapshot.
    pub fn j_1(&self, junction: &Junction, grid: &Grid, pipes: &[Vec<FluidState>]) -> f64 {
        match self {
            CostSpec::CompressorTarget { p_bar, x_a, x_b, pipe } => {
                let law = &junction.pipes[*pipe].law;
                let cells = &pipes[*pipe];
                cell_integral(grid, *x_a, *x_b, |j| (law.p(cells[j].density) - p_bar).abs())
            }
            CostSpec::GateSmoothing { weight } => {
                let h = &pipes[1];
                h.windows(2)
                    .enumerate()
                    .map(|(i, w)| weight.at(grid.face(i + 1)) * (w[1].density - w[0].density).abs())
                    .sum()
            }
            CostSpec::ValveOverflow { h_bar, length, .. } | CostSpec::PumpCost { h_bar, length, .. } => {
                let h = pipes.last().unwrap();
                cell_integral(grid, 0.0, *length, |j| (h[j].density - h_bar).max(0.0))
            }
        }
    }
}

/// `𝒥` along a trajectory; the time integral of `J₁` is a left-endpoint
/// sum over the stored snapshots.
pub fn cost_j(junction: &Junction, traj: &Trajectory, control: &ControlSchedule, spec: &CostSpec) -> CostBreakdown {
    let j_o = spec.j_o(control);
    let j_1 = traj
        .snapshots
        .windows(2)
        .map(|w| (w[1].t - w[0].t) * spec.j_1(junction, &traj.grid, &w[0].pipes))
        .sum();
    CostBreakdown { j_o, j_1, total: j_o + j_1 }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalRow {
    pub t: f64,
    pub v: f64,
    pub q: f64,
    pub upsilon: f64,
    pub tv_u: f64,
    pub junction_residual: f64,
}

/// `V, Q, Υ, TV(u)` at every snapshot, with the Newton residual of the
/// junction solve of the step starting there.
pub fn functional_series(junction: &Junction, traj: &Trajectory, cfg: &FunctionalConfig) -> Result<Vec<FunctionalRow>> {
    let mut rows = Vec::with_capacity(traj.snapshots.len());
    let mut k = 0;
    for s in &traj.snapshots {
        while k < traj.steps.len() && traj.steps[k].t < s.t {
            k += 1;
        }
        let residual = traj.steps.get(k).filter(|r| r.t == s.t).map_or(0.0, |r| r.info.residual);
        let state = NetworkState { t: s.t, pipes: s.pipes.clone(), control: traj.control.clone() };
        let u = upsilon(junction, &state, cfg)?;
        rows.push(FunctionalRow { t: s.t, v: u.v, q: u.q, upsilon: u.value, tv_u: state.tv_u(), junction_residual: residual });
    }
    Ok(rows)
}

pub fn functional_csv(rows: &[FunctionalRow]) -> String {
    let mut out = String::from("t,V,Q,Upsilon,TVu,junction_residual\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, r.v, r.q, r.upsilon, r.tv_u, r.junction_residual
        );
    }
    out
}
