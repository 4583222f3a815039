//! Coupling conditions `Ψ(u(t,0+)) = Π(t)` and the Riemann problem at the junction.

mod control;

pub use control::ControlSchedule;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{FluidState, PipeModel};
use crate::riemann::{self, Family};

/// The junction device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Coupling {
    /// `Ψ = (q₁ + q₂, q₂((p(ρ₂)/p(ρ₁))^((γ−1)/γ) − 1))`, `Π₂` proportional
    /// to the compressor power.
    Compressor { gamma: f64 },
    /// `Ψ = (b₁Q₁ + b₂Q₂, Q₁²/(H₁ − H₂))`, `Π₂` the gate opening.
    UnderflowGate,
    /// `Ψ = (Σ bᵢQᵢ, Q₁, …, Q_{n−1})`, one valve per incoming canal.
    MultiValve,
    /// `Ψ = (b₁Q₁ + b₂Q₂, H₁ − H₂)`.
    PumpingStation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JunctionConfig {
    /// Accepted `‖Ψ(traces) − Π‖`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Jacobian condition numbers above this are reported as non-transversal.
    pub condition_limit: f64,
}

impl Default for JunctionConfig {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 60, condition_limit: 1e8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JunctionSolution {
    /// States at `x = 0+`, one per pipe.
    pub traces: Vec<FluidState>,
    /// Sizes of the 2-waves entering each pipe.
    pub sigmas: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Boundary data of a junction Riemann problem: `p = (u, Π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JunctionData {
    pub states: Vec<FluidState>,
    pub control: Vec<f64>,
}

impl JunctionData {
    pub fn distance(&self, other: &JunctionData) -> f64 {
        let du: f64 = self.states.iter().zip(&other.states).map(|(a, b)| (*a - *b).norm1()).sum();
        let dp: f64 = self
            .control
            .iter()
            .zip(&other.control)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        du + dp
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzProbe {
    pub trace_ratio: f64,
    pub sigma_ratio: f64,
}

/// A single junction of `n ≥ 2` pipes with its reference state `ū`.
#[derive(Debug, Clone, PartialEq)]
pub struct Junction {
    pub coupling: Coupling,
    pub pipes: Vec<PipeModel>,
    pub reference: Vec<FluidState>,
    pub config: JunctionConfig,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Junction {
    /// Validates pipe count, subsonic reference and transversality at `ū`.
    pub fn new(coupling: Coupling, pipes: Vec<PipeModel>, reference: Vec<FluidState>) -> Result<Self> {
        let n = pipes.len();
        if n < 2 {
            return Err(Error::InvalidModel("a junction needs at least two pipes".into()));
        }
        if reference.len() != n {
            return Err(Error::InvalidModel("one reference state per pipe required".into()));
        }
        match &coupling {
            Coupling::Compressor { gamma } => {
                if n != 2 {
                    return Err(Error::InvalidModel("compressor couples exactly two pipes".into()));
                }
                if !(*gamma > 1.0) {
                    return Err(Error::InvalidModel(format!("compressor exponent needs gamma > 1, got {gamma}")));
                }
            }
            Coupling::UnderflowGate | Coupling::PumpingStation if n != 2 => {
                return Err(Error::InvalidModel("gate and pump couple exactly two canals".into()));
            }
            _ => {}
        }
        for p in &pipes {
            p.validate()?;
        }
        for (p, u) in pipes.iter().zip(&reference) {
            if !p.is_subsonic(*u) {
                return Err(Error::LeftSubsonicRegion { density: u.density, momentum: u.momentum });
            }
        }
        let junction = Self { coupling, pipes, reference, config: JunctionConfig::default() };
        let det = junction.transversality_det(&junction.reference)?;
        if det == 0.0 || !det.is_finite() {
            return Err(Error::NonTransversal { condition: f64::INFINITY });
        }
        Ok(junction)
    }

    pub fn with_config(mut self, config: JunctionConfig) -> Self {
        self.config = config;
        self
    }

    pub fn n(&self) -> usize {
        self.pipes.len()
    }

    /// `Π̄ = Ψ(ū)`.
    pub fn reference_control(&self) -> Vec<f64> {
        self.psi(&self.reference).expect("reference validated at construction")
    }

    fn check_states(&self, u: &[FluidState]) -> Result<()> {
        if u.len() != self.n() {
            return Err(Error::InvalidModel(format!("expected {} states, got {}", self.n(), u.len())));
        }
        u.iter().try_for_each(|s| s.check())
    }

    fn compressor_ratio(&self, gamma: f64, u: &[FluidState]) -> (f64, f64) {
        let p1 = self.pipes[0].law.p(u[0].density);
        let p2 = self.pipes[1].law.p(u[1].density);
        let e = (gamma - 1.0) / gamma;
        ((p2 / p1).powf(e), e)
    }

    pub fn psi(&self, u: &[FluidState]) -> Result<Vec<f64>> {
        self.check_states(u)?;
        let b: Vec<f64> = self.pipes.iter().map(|p| p.width).collect();
        let mass: f64 = b.iter().zip(u).map(|(b, s)| b * s.momentum).sum();
        Ok(match &self.coupling {
            Coupling::Compressor { gamma } => {
                let (r, _) = self.compressor_ratio(*gamma, u);
                vec![u[0].momentum + u[1].momentum, u[1].momentum * (r - 1.0)]
            }
            Coupling::UnderflowGate => {
                let dh = u[0].density - u[1].density;
                if dh == 0.0 {
                    return Err(Error::GateEqualHeights);
                }
                vec![mass, u[0].momentum * u[0].momentum / dh]
            }
            Coupling::MultiValve => {
                let mut out = Vec::with_capacity(self.n());
                out.push(mass);
                out.extend(u[..self.n() - 1].iter().map(|s| s.momentum));
                out
            }
            Coupling::PumpingStation => vec![mass, u[0].density - u[1].density],
        })
    }

    /// Analytic `D_{u_l} Ψ`: returns the `n × 2n` matrix `[D₁Ψ … D_nΨ]`.
    pub fn jacobian(&self, u: &[FluidState]) -> Result<DMatrix<f64>> {
        self.check_states(u)?;
        let n = self.n();
        let mut d = DMatrix::zeros(n, 2 * n);
        match &self.coupling {
            Coupling::Compressor { gamma } => {
                let (r, e) = self.compressor_ratio(*gamma, u);
                let q2 = u[1].momentum;
                let (l1, l2) = (&self.pipes[0].law, &self.pipes[1].law);
                d[(0, 1)] = 1.0;
                d[(0, 3)] = 1.0;
                d[(1, 0)] = -q2 * e * r * l1.dp(u[0].density) / l1.p(u[0].density);
                d[(1, 2)] = q2 * e * r * l2.dp(u[1].density) / l2.p(u[1].density);
                d[(1, 3)] = r - 1.0;
            }
            Coupling::UnderflowGate => {
                let dh = u[0].density - u[1].density;
                if dh == 0.0 {
                    return Err(Error::GateEqualHeights);
                }
                let q1 = u[0].momentum;
                d[(0, 1)] = self.pipes[0].width;
                d[(0, 3)] = self.pipes[1].width;
                d[(1, 0)] = -q1 * q1 / (dh * dh);
                d[(1, 1)] = 2.0 * q1 / dh;
                d[(1, 2)] = q1 * q1 / (dh * dh);
            }
            Coupling::MultiValve => {
                for l in 0..n {
                    d[(0, 2 * l + 1)] = self.pipes[l].width;
                }
                for k in 0..n - 1 {
                    d[(k + 1, 2 * k + 1)] = 1.0;
                }
            }
            Coupling::PumpingStation => {
                d[(0, 1)] = self.pipes[0].width;
                d[(0, 3)] = self.pipes[1].width;
                d[(1, 0)] = 1.0;
                d[(1, 2)] = -1.0;
            }
        }
        Ok(d)
    }

    /// Matrix with columns `D_lΨ(u) · r₂(u_l)`.
    pub fn transversality_matrix(&self, u: &[FluidState]) -> Result<DMatrix<f64>> {
        let d = self.jacobian(u)?;
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for (l, (pipe, s)) in self.pipes.iter().zip(u).enumerate() {
            let (_, r2) = pipe.eigenvectors(*s)?;
            for k in 0..n {
                m[(k, l)] = d[(k, 2 * l)] * r2[0] + d[(k, 2 * l + 1)] * r2[1];
            }
        }
        Ok(m)
    }

    pub fn transversality_det(&self, u: &[FluidState]) -> Result<f64> {
        Ok(self.transversality_matrix(u)?.determinant())
    }

    /// Same determinant with `D_lΨ · r₂` replaced by central differences of
    /// `Ψ` along `r₂`.
    pub fn transversality_det_fd(&self, u: &[FluidState]) -> Result<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for l in 0..n {
            let (_, r2) = self.pipes[l].eigenvectors(u[l])?;
            let h = 1e-6 * u[l].density;
            let shift = FluidState::new(r2[0] * h, r2[1] * h);
            let mut up = u.to_vec();
            let mut dn = u.to_vec();
            up[l] = u[l] + shift;
            dn[l] = u[l] - shift;
            let (fp, fm) = (self.psi(&up)?, self.psi(&dn)?);
            for k in 0..n {
                m[(k, l)] = (fp[k] - fm[k]) / (2.0 * h);
            }
        }
        Ok(m.determinant())
    }

    fn traces_for(&self, boundary: &[FluidState], sigma: &[f64]) -> Result<Vec<FluidState>> {
        self.pipes
            .iter()
            .zip(boundary)
            .zip(sigma)
            .map(|((p, b), s)| riemann::lax_curve_reverse(p, Family::Second, *b, *s))
            .collect()
    }

    fn newton_matrix(&self, boundary: &[FluidState], traces: &[FluidState], sigma: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.jacobian(traces)?;
        let n = self.n();
        let mut j = DMatrix::zeros(n, n);
        for l in 0..n {
            let dt = riemann::reverse_second_derivative(&self.pipes[l].law, boundary[l], traces[l], sigma[l]);
            for k in 0..n {
                j[(k, l)] = d[(k, 2 * l)] * dt[0] + d[(k, 2 * l + 1)] * dt[1];
            }
        }
        Ok(j)
    }

    /// Solves `Ψ(T₁(σ₁), …, T_n(σ_n)) = Π` where `T_l(σ)` is the state at
    /// `x = 0+` connected to `boundary[l]` by a 2-wave of size `σ`.
    pub fn solve_junction_riemann(&self, boundary: &[FluidState], pi: &[f64]) -> Result<JunctionSolution> {
        self.solve_from(boundary, pi, &vec![0.0; self.n()])
    }

    /// Damped Newton from the initial wave sizes `sigma0`.
    pub fn solve_from(&self, boundary: &[FluidState], pi: &[f64], sigma0: &[f64]) -> Result<JunctionSolution> {
        self.check_states(boundary)?;
        let n = self.n();
        if pi.len() != n {
            return Err(Error::InvalidModel(format!("control has {} components, expected {n}", pi.len())));
        }
        for (p, b) in self.pipes.iter().zip(boundary) {
            if !p.is_subsonic(*b) {
                return Err(Error::LeftSubsonicRegion { density: b.density, momentum: b.momentum });
            }
        }
        let residual_of = |traces: &[FluidState]| -> Result<Vec<f64>> {
            Ok(self.psi(traces)?.iter().zip(pi).map(|(a, b)| a - b).collect())
        };

        let mut sigma = sigma0.to_vec();
        let mut traces = self.traces_for(boundary, &sigma)?;
        let mut f = residual_of(&traces)?;
        let mut fnorm = norm2(&f);
        let floor = 1e-15 * (1.0 + norm2(pi));
        let mut iterations = 0;
        let mut last_err: Option<Error> = None;

        while fnorm > floor && iterations < self.config.max_iterations {
            iterations += 1;
            let j = self.newton_matrix(boundary, &traces, &sigma)?;
            let sv = j.clone().svd(false, false).singular_values;
            let smax = sv.max();
            let smin = sv.min();
            let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
            if !(condition <= self.config.condition_limit) {
                return Err(Error::NonTransversal { condition });
            }
            let step = j
                .lu()
                .solve(&(-DVector::from_column_slice(&f)))
                .ok_or(Error::NonTransversal { condition: f64::INFINITY })?;

            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-8 {
                let trial: Vec<f64> = sigma.iter().zip(step.iter()).map(|(s, d)| s + alpha * d).collect();
                match self.traces_for(boundary, &trial).and_then(|t| residual_of(&t).map(|r| (t, r))) {
                    Ok((t, r)) => {
                        let rn = norm2(&r);
                        if rn < (1.0 - 1e-4 * alpha) * fnorm {
                            sigma = trial;
                            traces = t;
                            f = r;
                            fnorm = rn;
                            accepted = true;
                            break;
                        }
                    }
                    Err(e) => last_err = Some(e),
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }

        if fnorm <= self.config.tolerance {
            Ok(JunctionSolution { traces, sigmas: sigma, residual: fnorm, iterations })
        } else if let Some(e @ Error::LeftSubsonicRegion { .. }) = last_err {
            Err(e)
        } else {
            Err(Error::NoConvergence { iterations, residual: fnorm })
        }
    }

    /// Ratios `‖traces − traces̃‖/‖p − p̃‖` and `‖Σ − Σ̃‖/‖p − p̃‖`.
    pub fn junction_lipschitz_probe(&self, p: &JunctionData, p_tilde: &JunctionData) -> Result<LipschitzProbe> {
        let dist = p.distance(p_tilde);
        let a = self.solve_junction_riemann(&p.states, &p.control)?;
        if dist == 0.0 {
            return Ok(LipschitzProbe { trace_ratio: 0.0, sigma_ratio: 0.0 });
        }
        let b = self.solve_junction_riemann(&p_tilde.states, &p_tilde.control)?;
        let dtrace: f64 = a.traces.iter().zip(&b.traces).map(|(x, y)| (*x - *y).norm1()).sum();
        let dsigma = a
            .sigmas
            .iter()
            .zip(&b.sigmas)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        Ok(LipschitzProbe { trace_ratio: dtrace / dist, sigma_ratio: dsigma / dist })
    }

    /// Largest total size of 2-waves reflected into the network per unit
    /// size of a 1-wave reaching the junction, at the reference state.
    pub fn reflection_norm(&self) -> Result<f64> {
        let pi = self.reference_control();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for l in 0..self.n() {
            let mut states = self.reference.clone();
            let s = h * self.reference[l].density;
            states[l] = riemann::lax_curve(&self.pipes[l], Family::First, self.reference[l], s)?;
            let sol = self.solve_junction_riemann(&states, &pi)?;
            let total: f64 = sol.sigmas.iter().map(|x| x.abs()).sum();
            worst = worst.max(total / s);
        }
        Ok(worst)
    }
}
