//! Lax curves and the exact Riemann solver for one pipe.
//!
//! Wave sizes use the density coordinate: along the `i`-curve from a base
//! state, `ρ = ρ_b − σ` for the first family and `ρ = ρ_b + σ` for the
//! second, so that `d/dσ` at `σ = 0` is exactly `r_i(base)`. Positive sizes
//! are rarefactions, negative sizes Lax shocks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{FluidState, PipeModel, PressureLaw, DENSITY_FLOOR};
use crate::roots::bracketed_newton;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    First,
    Second,
}

impl Family {
    pub fn index(self) -> usize {
        match self {
            Family::First => 0,
            Family::Second => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaveKind {
    Shock,
    Rarefaction,
    /// Linearly degenerate jump. Both fields of the pipe models are
    /// genuinely nonlinear in the subsonic region, so this never occurs.
    Contact,
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    pub family: Family,
    pub size: f64,
    pub kind: WaveKind,
    /// `[s_min, s_max]`; a single speed for shocks and null waves.
    pub speeds: (f64, f64),
    pub left: FluidState,
    pub right: FluidState,
}

/// Self-similar solution of a Riemann problem: a 1-wave then a 2-wave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveFan {
    pub law: PressureLaw,
    pub left: FluidState,
    pub middle: FluidState,
    pub right: FluidState,
    pub waves: [Wave; 2],
}

impl WaveFan {
    pub fn sizes(&self) -> (f64, f64) {
        (self.waves[0].size, self.waves[1].size)
    }

    /// State on the ray `x/t = xi`.
    pub fn sample(&self, xi: f64) -> FluidState {
        let [w1, w2] = &self.waves;
        if xi < w1.speeds.0 {
            return self.left;
        }
        if w1.kind == WaveKind::Rarefaction && xi < w1.speeds.1 {
            return rarefaction_state(&self.law, Family::First, self.left, self.middle, xi);
        }
        if xi < w2.speeds.0 {
            return self.middle;
        }
        if w2.kind == WaveKind::Rarefaction && xi < w2.speeds.1 {
            return rarefaction_state(&self.law, Family::Second, self.middle, self.right, xi);
        }
        self.right
    }
}

pub fn sample_riemann(fan: &WaveFan, xi: f64) -> FluidState {
    fan.sample(xi)
}

/// Inside a rarefaction fan from `from` to `to`, the state with `λ_i = xi`.
fn rarefaction_state(law: &PressureLaw, family: Family, from: FluidState, to: FluidState, xi: f64) -> FluidState {
    let v0 = from.velocity();
    let phi0 = law.phi(from.density);
    let (lo, hi) = if from.density < to.density {
        (from.density, to.density)
    } else {
        (to.density, from.density)
    };
    let vel = |rho: f64| match family {
        Family::First => v0 + phi0 - law.phi(rho),
        Family::Second => v0 + law.phi(rho) - phi0,
    };
    let g = |rho: f64| {
        let c = law.sound_speed(rho);
        let dc = 0.5 * law.d2p(rho) / c;
        match family {
            Family::First => (vel(rho) - c - xi, -c / rho - dc),
            Family::Second => (vel(rho) + c - xi, c / rho + dc),
        }
    };
    let rho = bracketed_newton(g, lo, hi, 0.5 * (lo + hi), 1e-15 * (1.0 + xi.abs()), 200).unwrap_or(0.5 * (lo + hi));
    FluidState::new(rho, rho * vel(rho))
}

/// `√((ρa − ρb)(p(ρa) − p(ρb)) / (ρa ρb))`, the Hugoniot velocity jump.
fn hugoniot_jump(law: &PressureLaw, ra: f64, rb: f64) -> f64 {
    ((ra - rb) * (law.p(ra) - law.p(rb)) / (ra * rb)).max(0.0).sqrt()
}

fn hugoniot_jump_derivative(law: &PressureLaw, ra: f64, rb: f64) -> f64 {
    let h = hugoniot_jump(law, ra, rb);
    if h < 1e-7 * law.sound_speed(ra) {
        return law.sound_speed(ra) / ra;
    }
    let dp = law.p(ra) - law.p(rb);
    let dh2 = (dp + (ra - rb) * law.dp(ra)) / (ra * rb) - (ra - rb) * dp / (ra * ra * rb);
    dh2 / (2.0 * h)
}

fn finish(model: &PipeModel, rho: f64, v: f64) -> Result<FluidState> {
    let u = FluidState::new(rho, rho * v);
    if !rho.is_finite() || rho < DENSITY_FLOOR || !model.is_subsonic(u) {
        return Err(Error::LeftSubsonicRegion { density: rho, momentum: u.momentum });
    }
    Ok(u)
}

/// State reached from `base` (left of the wave) by one `family`-wave of size `sigma`.
pub fn lax_curve(model: &PipeModel, family: Family, base: FluidState, sigma: f64) -> Result<FluidState> {
    base.check()?;
    if sigma == 0.0 {
        return Ok(base);
    }
    let law = &model.law;
    let rb = base.density;
    let vb = base.velocity();
    let (rho, v) = match family {
        Family::First => {
            let rho = rb - sigma;
            if rho < DENSITY_FLOOR {
                return Err(Error::LeftSubsonicRegion { density: rho, momentum: 0.0 });
            }
            let v = if sigma > 0.0 {
                vb + law.phi(rb) - law.phi(rho)
            } else {
                vb - hugoniot_jump(law, rho, rb)
            };
            (rho, v)
        }
        Family::Second => {
            let rho = rb + sigma;
            if rho < DENSITY_FLOOR {
                return Err(Error::LeftSubsonicRegion { density: rho, momentum: 0.0 });
            }
            let v = if sigma > 0.0 {
                vb + law.phi(rho) - law.phi(rb)
            } else {
                vb - hugoniot_jump(law, rho, rb)
            };
            (rho, v)
        }
    };
    finish(model, rho, v)
}

/// State `left` such that `lax_curve(family, left, sigma) == right`.
pub fn lax_curve_reverse(model: &PipeModel, family: Family, right: FluidState, sigma: f64) -> Result<FluidState> {
    right.check()?;
    if sigma == 0.0 {
        return Ok(right);
    }
    let law = &model.law;
    let rr = right.density;
    let vr = right.velocity();
    let rho = match family {
        Family::First => rr + sigma,
        Family::Second => rr - sigma,
    };
    if rho < DENSITY_FLOOR {
        return Err(Error::LeftSubsonicRegion { density: rho, momentum: 0.0 });
    }
    let v = if sigma > 0.0 {
        match family {
            Family::First => vr + law.phi(rr) - law.phi(rho),
            Family::Second => vr - law.phi(rr) + law.phi(rho),
        }
    } else {
        vr + hugoniot_jump(law, rho, rr)
    };
    finish(model, rho, v)
}

/// `d/dσ` of the reverse 2-curve through `right`, evaluated at `sigma`.
pub(crate) fn reverse_second_derivative(law: &PressureLaw, right: FluidState, left: FluidState, sigma: f64) -> [f64; 2] {
    let rho = left.density;
    let dv = if sigma >= 0.0 {
        law.sound_speed(rho) / rho
    } else {
        hugoniot_jump_derivative(law, rho, right.density)
    };
    // dρ/dσ = −1
    [-1.0, -(left.velocity() + rho * dv)]
}

/// Velocity on the forward 1-curve from `left` at density `rho`, and its derivative.
fn first_curve_velocity(law: &PressureLaw, left: FluidState, rho: f64) -> (f64, f64) {
    let rl = left.density;
    if rho <= rl {
        (left.velocity() + law.phi(rl) - law.phi(rho), -law.sound_speed(rho) / rho)
    } else {
        (left.velocity() - hugoniot_jump(law, rho, rl), -hugoniot_jump_derivative(law, rho, rl))
    }
}

/// Velocity on the reverse 2-curve through `right` at density `rho`, and its derivative.
fn second_curve_velocity(law: &PressureLaw, right: FluidState, rho: f64) -> (f64, f64) {
    let rr = right.density;
    if rho <= rr {
        (right.velocity() - law.phi(rr) + law.phi(rho), law.sound_speed(rho) / rho)
    } else {
        (right.velocity() + hugoniot_jump(law, rho, rr), hugoniot_jump_derivative(law, rho, rr))
    }
}

fn make_wave(law: &PressureLaw, family: Family, size: f64, left: FluidState, right: FluidState) -> Wave {
    let lambda = |u: FluidState| {
        let c = law.sound_speed(u.density);
        match family {
            Family::First => u.velocity() - c,
            Family::Second => u.velocity() + c,
        }
    };
    let (kind, speeds) = if size == 0.0 {
        let l = lambda(left);
        (WaveKind::Null, (l, l))
    } else if size > 0.0 {
        (WaveKind::Rarefaction, (lambda(left), lambda(right)))
    } else {
        let s = (right.momentum - left.momentum) / (right.density - left.density);
        (WaveKind::Shock, (s, s))
    };
    Wave { family, size, kind, speeds, left, right }
}

/// Exact solution of the Riemann problem `(ul, ur)`.
///
/// The middle density solves the scalar curve-intersection equation by
/// Newton started at `ρ_L`, safeguarded by bisection.
pub fn solve_riemann(model: &PipeModel, ul: FluidState, ur: FluidState) -> Result<WaveFan> {
    ul.check()?;
    ur.check()?;
    let law = model.law;
    if ul == ur {
        return Ok(WaveFan {
            law,
            left: ul,
            middle: ul,
            right: ur,
            waves: [
                make_wave(&law, Family::First, 0.0, ul, ul),
                make_wave(&law, Family::Second, 0.0, ul, ul),
            ],
        });
    }

    let residual = |rho: f64| {
        let (v1, d1) = first_curve_velocity(&law, ul, rho);
        let (v2, d2) = second_curve_velocity(&law, ur, rho);
        (v2 - v1, d2 - d1)
    };
    let lo = DENSITY_FLOOR;
    if residual(lo).0 > 0.0 {
        return Err(Error::NoSolution("data generate vacuum".into()));
    }
    let mut hi = 2.0 * ul.density.max(ur.density);
    let mut expansions = 0;
    while residual(hi).0 < 0.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::NoSolution("middle density bracket diverged".into()));
        }
    }
    let scale = 1.0
        + ul.velocity().abs()
        + ur.velocity().abs()
        + law.sound_speed(ul.density)
        + law.sound_speed(ur.density);
    let rho_m = bracketed_newton(residual, lo, hi, ul.density, 1e-15 * scale, 200)
        .ok_or_else(|| Error::NoSolution("middle-state iteration failed".into()))?;
    let (vm, _) = first_curve_velocity(&law, ul, rho_m);
    let middle = FluidState::new(rho_m, rho_m * vm);
    if !model.is_subsonic(middle) {
        return Err(Error::NoSolution(format!(
            "middle state ({}, {}) is not subsonic",
            middle.density, middle.momentum
        )));
    }
    let s1 = ul.density - rho_m;
    let s2 = ur.density - rho_m;
    Ok(WaveFan {
        law,
        left: ul,
        middle,
        right: ur,
        waves: [
            make_wave(&law, Family::First, s1, ul, middle),
            make_wave(&law, Family::Second, s2, middle, ur),
        ],
    })
}

/// Wave sizes `(σ₁, σ₂)` of the jump `u_minus | u_plus`.
pub fn decompose(model: &PipeModel, u_minus: FluidState, u_plus: FluidState) -> Result<(f64, f64)> {
    Ok(solve_riemann(model, u_minus, u_plus)?.sizes())
}
