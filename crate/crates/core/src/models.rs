//! Single-pipe fluid models.
//!
//! Both the isentropic gas pipe and the rectangular open canal are 2×2
//! p-systems in conserved variables `(density, momentum)`:
//!
//! ```text
//! ∂t ρ + ∂x q = 0
//! ∂t q + ∂x (q²/ρ + p(ρ)) = −χ[0,L](x) ν q|q|/ρ − g ρ sin α(x)
//! ```
//!
//! For canals `ρ` is the water height `H`, `q` the per-width discharge `Q`
//! and `p(H) = g H² / 2`, which is the γ-law with `γ = 2`.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// States with density below this floor are rejected as vacuum.
pub const DENSITY_FLOOR: f64 = 1e-8;

/// Conserved pair of one pipe: `(ρ, q)` for gas, `(H, Q)` for canals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FluidState {
    pub density: f64,
    pub momentum: f64,
}

impl FluidState {
    pub const fn new(density: f64, momentum: f64) -> Self {
        Self { density, momentum }
    }

    pub fn velocity(&self) -> f64 {
        self.momentum / self.density
    }

    /// Fails on vacuum or non-finite components.
    pub fn check(&self) -> Result<()> {
        if !self.density.is_finite() || !self.momentum.is_finite() {
            return Err(Error::NonFinite);
        }
        if self.density < DENSITY_FLOOR {
            return Err(Error::NonPositiveDensity {
                density: self.density,
                floor: DENSITY_FLOOR,
            });
        }
        Ok(())
    }

    /// `|ρ| + |q|`, the norm used for every L1 and TV measurement of states.
    pub fn norm1(&self) -> f64 {
        self.density.abs() + self.momentum.abs()
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.density, self.momentum]
    }

    pub fn from_array(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }
}

impl Add for FluidState {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.density + o.density, self.momentum + o.momentum)
    }
}

impl Sub for FluidState {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.density - o.density, self.momentum - o.momentum)
    }
}

impl Mul<f64> for FluidState {
    type Output = Self;
    fn mul(self, a: f64) -> Self {
        Self::new(self.density * a, self.momentum * a)
    }
}

impl Mul<FluidState> for f64 {
    type Output = FluidState;
    fn mul(self, u: FluidState) -> FluidState {
        u * self
    }
}

impl Neg for FluidState {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.density, -self.momentum)
    }
}

/// Convex pressure law `p(ρ)` with `p(0) = 0`, `p' > 0`, `p'' ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PressureLaw {
    /// `p = p_* (ρ/ρ_*)^γ`.
    GammaLaw { p_star: f64, rho_star: f64, gamma: f64 },
    /// `p = g H² / 2`.
    ShallowWater { g: f64 },
}

impl PressureLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PressureLaw::GammaLaw { p_star, rho_star, gamma } => {
                if !(p_star > 0.0 && rho_star > 0.0 && gamma >= 1.0) || !gamma.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "gamma law needs p_star > 0, rho_star > 0, gamma >= 1 (got {p_star}, {rho_star}, {gamma})"
                    )));
                }
            }
            PressureLaw::ShallowWater { g } => {
                if !(g > 0.0) || !g.is_finite() {
                    return Err(Error::InvalidModel(format!("gravity must be positive, got {g}")));
                }
            }
        }
        Ok(())
    }

    /// Adiabatic exponent; 2 for shallow water.
    pub fn gamma(&self) -> f64 {
        match *self {
            PressureLaw::GammaLaw { gamma, .. } => gamma,
            PressureLaw::ShallowWater { .. } => 2.0,
        }
    }

    /// Checked pressure evaluation.
    pub fn pressure(&self, rho: f64) -> Result<f64> {
        FluidState::new(rho, 0.0).check()?;
        Ok(self.p(rho))
    }

    pub(crate) fn p(&self, rho: f64) -> f64 {
        match *self {
            PressureLaw::GammaLaw { p_star, rho_star, gamma } => p_star * (rho / rho_star).powf(gamma),
            PressureLaw::ShallowWater { g } => 0.5 * g * rho * rho,
        }
    }

    pub(crate) fn dp(&self, rho: f64) -> f64 {
        match *self {
            PressureLaw::GammaLaw { gamma, .. } => gamma * self.p(rho) / rho,
            PressureLaw::ShallowWater { g } => g * rho,
        }
    }

    pub(crate) fn d2p(&self, rho: f64) -> f64 {
        match *self {
            PressureLaw::GammaLaw { gamma, .. } => gamma * (gamma - 1.0) * self.p(rho) / (rho * rho),
            PressureLaw::ShallowWater { g } => g,
        }
    }

    /// `√p'(ρ)`.
    pub fn sound_speed(&self, rho: f64) -> f64 {
        self.dp(rho).sqrt()
    }

    /// Primitive of `c(ρ)/ρ`. Velocity plus (minus) this potential is
    /// constant along 1- (2-) rarefaction curves.
    pub(crate) fn phi(&self, rho: f64) -> f64 {
        match *self {
            PressureLaw::GammaLaw { rho_star, gamma, .. } => {
                let c = self.sound_speed(rho);
                if gamma == 1.0 {
                    c * (rho / rho_star).ln()
                } else {
                    2.0 * c / (gamma - 1.0)
                }
            }
            PressureLaw::ShallowWater { .. } => 2.0 * self.sound_speed(rho),
        }
    }

    /// Stored energy `P₀` with `P₀'' = p'/ρ`; zero at `ρ = 0` when `γ > 1`.
    pub(crate) fn stored_energy(&self, rho: f64) -> f64 {
        match *self {
            PressureLaw::GammaLaw { rho_star, gamma, .. } => {
                if gamma == 1.0 {
                    self.p(rho) * (rho / rho_star).ln()
                } else {
                    self.p(rho) / (gamma - 1.0)
                }
            }
            PressureLaw::ShallowWater { g } => 0.5 * g * rho * rho,
        }
    }

    pub(crate) fn stored_energy_derivative(&self, rho: f64) -> f64 {
        match *self {
            PressureLaw::GammaLaw { rho_star, gamma, .. } => {
                let p_over_rho = self.p(rho) / rho;
                if gamma == 1.0 {
                    p_over_rho * ((rho / rho_star).ln() + 1.0)
                } else {
                    gamma * p_over_rho / (gamma - 1.0)
                }
            }
            PressureLaw::ShallowWater { g } => g * rho,
        }
    }
}

/// Piecewise-constant inclination profile `α(x)`.
///
/// `α = angles[i]` on `[breakpoints[i], breakpoints[i+1])`, `α = tail` for
/// `x ≥ breakpoints.last()` and `α = 0` before the first breakpoint.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Incline {
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    #[serde(default)]
    pub angles: Vec<f64>,
    #[serde(default)]
    pub tail: f64,
}

impl Incline {
    pub fn flat() -> Self {
        Self::default()
    }

    pub fn piecewise(breakpoints: Vec<f64>, angles: Vec<f64>) -> Result<Self> {
        let incline = Self { breakpoints, angles, tail: 0.0 };
        incline.validate()?;
        Ok(incline)
    }

    /// Inclination `a` everywhere; violates compact support unless `a = 0`.
    pub fn constant(a: f64) -> Self {
        Self { breakpoints: vec![0.0], angles: vec![], tail: a }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_len = if self.breakpoints.is_empty() {
            self.angles.is_empty()
        } else {
            self.angles.len() + 1 == self.breakpoints.len()
        };
        if !ok_len {
            return Err(Error::InvalidModel(
                "incline needs exactly one angle per breakpoint interval".into(),
            ));
        }
        if self.breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidModel("incline breakpoints must increase".into()));
        }
        if self.breakpoints.iter().chain(&self.angles).any(|v| !v.is_finite()) || !self.tail.is_finite() {
            return Err(Error::InvalidModel("incline values must be finite".into()));
        }
        Ok(())
    }

    pub fn angle_at(&self, x: f64) -> f64 {
        match self.breakpoints.iter().rposition(|&b| b <= x) {
            None => 0.0,
            Some(i) if i + 1 == self.breakpoints.len() => self.tail,
            Some(i) => self.angles[i],
        }
    }

    /// Beyond this abscissa the inclination equals `tail`.
    pub fn support_end(&self) -> f64 {
        self.breakpoints.last().copied().unwrap_or(0.0)
    }

    /// Points where `α` may jump, with the left and right values there.
    fn jumps(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.breakpoints.len());
        let mut left = 0.0;
        for (i, &b) in self.breakpoints.iter().enumerate() {
            let right = if i < self.angles.len() { self.angles[i] } else { self.tail };
            out.push((b, left, right));
            left = right;
        }
        out
    }
}

/// Nominal direction of the flow relative to the junction at `x = 0`.
///
/// Pipes are always parametrized by `x ≥ 0` away from the junction, so a
/// pipe feeding the junction carries negative momentum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    TowardJunction,
    AwayFromJunction,
}

fn default_width() -> f64 {
    1.0
}

fn default_orientation() -> Orientation {
    Orientation::AwayFromJunction
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipeModel {
    pub law: PressureLaw,
    /// Canal width `b`; gas pipes use 1.
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default)]
    pub friction: f64,
    /// Gravity in the inclination term. Ignored for canals, which use the
    /// gravity of their pressure law.
    #[serde(default)]
    pub gravity: f64,
    #[serde(default)]
    pub incline: Incline,
    /// Friction acts on `[0, active_length]`.
    pub active_length: f64,
    #[serde(default = "default_orientation")]
    pub orientation: Orientation,
}

impl PipeModel {
    /// Horizontal frictionless gas pipe.
    pub fn gas(law: PressureLaw, active_length: f64) -> Self {
        Self {
            law,
            width: 1.0,
            friction: 0.0,
            gravity: 0.0,
            incline: Incline::flat(),
            active_length,
            orientation: Orientation::AwayFromJunction,
        }
    }

    /// Horizontal frictionless rectangular canal.
    pub fn canal(g: f64, width: f64, active_length: f64) -> Self {
        Self {
            law: PressureLaw::ShallowWater { g },
            width,
            friction: 0.0,
            gravity: g,
            incline: Incline::flat(),
            active_length,
            orientation: Orientation::AwayFromJunction,
        }
    }

    pub fn with_friction(mut self, nu: f64) -> Self {
        self.friction = nu;
        self
    }

    pub fn with_incline(mut self, gravity: f64, incline: Incline) -> Self {
        self.gravity = gravity;
        self.incline = incline;
        self
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.law.validate()?;
        self.incline.validate()?;
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::InvalidModel(format!("width must be positive, got {}", self.width)));
        }
        if !(self.friction >= 0.0 && self.friction.is_finite()) {
            return Err(Error::InvalidModel(format!("friction must be >= 0, got {}", self.friction)));
        }
        if !(self.active_length > 0.0 && self.active_length.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "active length must be positive and finite, got {}",
                self.active_length
            )));
        }
        if !(self.gravity >= 0.0 && self.gravity.is_finite()) {
            return Err(Error::InvalidModel(format!("gravity must be >= 0, got {}", self.gravity)));
        }
        Ok(())
    }

    pub fn effective_gravity(&self) -> f64 {
        match self.law {
            PressureLaw::ShallowWater { g } => g,
            PressureLaw::GammaLaw { .. } => self.gravity,
        }
    }

    pub fn pressure(&self, rho: f64) -> Result<f64> {
        self.law.pressure(rho)
    }

    /// `(q, q²/ρ + p(ρ))`.
    pub fn flux(&self, u: FluidState) -> Result<[f64; 2]> {
        u.check()?;
        Ok(self.flux_raw(u))
    }

    pub(crate) fn flux_raw(&self, u: FluidState) -> [f64; 2] {
        let q = u.momentum;
        [q, q * q / u.density + self.law.p(u.density)]
    }

    pub fn eigenvalues(&self, u: FluidState) -> Result<(f64, f64)> {
        u.check()?;
        Ok(self.eigenvalues_raw(u))
    }

    pub(crate) fn eigenvalues_raw(&self, u: FluidState) -> (f64, f64) {
        let v = u.velocity();
        let c = self.law.sound_speed(u.density);
        (v - c, v + c)
    }

    /// `r₁ = (−1, −λ₁)`, `r₂ = (1, λ₂)`.
    pub fn eigenvectors(&self, u: FluidState) -> Result<([f64; 2], [f64; 2])> {
        let (l1, l2) = self.eigenvalues(u)?;
        Ok(([-1.0, -l1], [1.0, l2]))
    }

    /// Strictly `λ₁ < 0 < λ₂`; false on vacuum.
    pub fn is_subsonic(&self, u: FluidState) -> bool {
        if u.check().is_err() {
            return false;
        }
        let (l1, l2) = self.eigenvalues_raw(u);
        l1 < 0.0 && 0.0 < l2
    }

    /// `1 − |v|/c`; positive exactly on the subsonic region.
    pub fn subsonic_margin(&self, u: FluidState) -> Result<f64> {
        u.check()?;
        Ok(1.0 - u.velocity().abs() / self.law.sound_speed(u.density))
    }

    pub fn max_speed(&self, u: FluidState) -> f64 {
        let (l1, l2) = self.eigenvalues_raw(u);
        l1.abs().max(l2.abs())
    }

    /// Balance-law source `(0, s₂)` at abscissa `x`.
    pub fn source(&self, x: f64, u: FluidState) -> Result<[f64; 2]> {
        u.check()?;
        Ok(self.source_raw(x, u))
    }

    pub(crate) fn source_raw(&self, x: f64, u: FluidState) -> [f64; 2] {
        let rho = u.density;
        let q = u.momentum;
        let g = self.effective_gravity();
        let alpha = self.incline.angle_at(x);
        let mut s = if alpha != 0.0 { -g * rho * alpha.sin() } else { 0.0 };
        if self.friction != 0.0 && (0.0..=self.active_length).contains(&x) {
            s -= self.friction * q * q.abs() / rho;
        }
        [0.0, s]
    }

    pub fn entropy_pair(&self) -> EntropyPair {
        EntropyPair::for_law(self.law)
    }
}

/// Mechanical energy `η = q²/(2ρ) + P(ρ)` with its flux.
///
/// `P` is the stored energy, optionally shifted by its tangent at a reference
/// density so that `P(ρ_ref) = 0` and `P ≥ 0`. Affine shifts of `η` leave the
/// entropy inequality unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyPair {
    law: PressureLaw,
    reference: Option<f64>,
}

impl EntropyPair {
    /// Unshifted energy for `γ > 1` (already `P(0) = 0`), normalized at
    /// `ρ_*` for the isothermal law.
    pub fn for_law(law: PressureLaw) -> Self {
        let reference = match law {
            PressureLaw::GammaLaw { gamma, rho_star, .. } if gamma == 1.0 => Some(rho_star),
            _ => None,
        };
        Self { law, reference }
    }

    pub fn normalized_at(law: PressureLaw, rho_ref: f64) -> Self {
        Self { law, reference: Some(rho_ref) }
    }

    pub fn reference(&self) -> Option<f64> {
        self.reference
    }

    fn shift(&self) -> (f64, f64) {
        match self.reference {
            Some(r) => {
                let d = self.law.stored_energy_derivative(r);
                (self.law.stored_energy(r) - d * r, d)
            }
            None => (0.0, 0.0),
        }
    }

    /// Stored part `P(ρ)`.
    pub fn potential(&self, rho: f64) -> f64 {
        let (c0, c1) = self.shift();
        self.law.stored_energy(rho) - c0 - c1 * rho
    }

    pub fn eta(&self, u: FluidState) -> f64 {
        let q = u.momentum;
        q * q / (2.0 * u.density) + self.potential(u.density)
    }

    pub fn flux(&self, u: FluidState) -> f64 {
        let (_, c1) = self.shift();
        let rho = u.density;
        let q = u.momentum;
        let v = q / rho;
        v * (0.5 * q * v + self.law.stored_energy(rho) + self.law.p(rho)) - c1 * q
    }

    /// `∇η = (P'(ρ) − v²/2, v)`.
    pub fn gradient(&self, u: FluidState) -> [f64; 2] {
        let (_, c1) = self.shift();
        let v = u.velocity();
        [self.law.stored_energy_derivative(u.density) - c1 - 0.5 * v * v, v]
    }
}

/// Compact box of states on which source constants are estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBox {
    pub density: (f64, f64),
    pub momentum: (f64, f64),
}

impl StateBox {
    /// Box of relative half-width `w` around `center`, momentum range scaled
    /// by the local sound speed so that it stays subsonic for small `w`.
    pub fn around(model: &PipeModel, center: FluidState, w: f64) -> Result<Self> {
        center.check()?;
        let rho = center.density;
        let c = model.law.sound_speed(rho);
        Ok(Self {
            density: (rho * (1.0 - w), rho * (1.0 + w)),
            momentum: (center.momentum - w * rho * c, center.momentum + w * rho * c),
        })
    }

    fn samples(&self, n: usize) -> impl Iterator<Item = FluidState> + '_ {
        let lerp = move |(a, b): (f64, f64), i: usize| a + (b - a) * i as f64 / (n - 1) as f64;
        (0..n).flat_map(move |i| (0..n).map(move |j| FluidState::new(lerp(self.density, i), lerp(self.momentum, j))))
    }
}

/// Constants certifying that the pipe source is a valid balance-law source.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceReport {
    /// `g(x, ū) = 0` for `x` beyond this bound.
    pub support_bound: f64,
    /// Total mass `μ(ℝ⁺)` of the jump measure dominating the x-variation.
    pub mu_total: f64,
    /// Lipschitz constant `L̂` in `u` over the box (induced 1-norm).
    pub lipschitz_hat: f64,
    /// L1-Lipschitz constant of the Nemytskii operator; equals `L̂` here.
    pub l1: f64,
}

impl SourceReport {
    /// Bound `2μ + L̂·δ` on `TV(G(u))` for data with `TV(u) ≤ δ`.
    pub fn l2_bound(&self, tv_budget: f64) -> f64 {
        2.0 * self.mu_total + self.lipschitz_hat * tv_budget
    }
}

const SOURCE_SCAN: usize = 24;

/// Checks the three hypotheses making the pipe source an admissible
/// balance-law source and estimates their constants on `bx`.
pub fn validate_source(model: &PipeModel, reference: FluidState, bx: &StateBox) -> Result<SourceReport> {
    model.validate()?;
    reference.check()?;

    // (1) compact support at the reference state
    let tail = model.incline.tail;
    let g = model.effective_gravity();
    let tail_source = g * reference.density * tail.sin();
    if tail_source != 0.0 {
        return Err(Error::ValidationFailed {
            clause: 1,
            detail: format!("inclination tail {tail} gives a nonzero source for all large x"),
        });
    }
    let friction_end = if model.friction > 0.0 { model.active_length } else { 0.0 };
    let incline_end = if model.incline.angles.iter().any(|a| *a != 0.0) {
        model.incline.support_end()
    } else {
        0.0
    };
    let support_bound = friction_end.max(incline_end);

    let samples: Vec<FluidState> = bx.samples(SOURCE_SCAN).filter(|u| model.is_subsonic(*u)).collect();
    if samples.is_empty() {
        return Err(Error::ValidationFailed {
            clause: 3,
            detail: "state box contains no subsonic states".into(),
        });
    }

    // (2) jump measure: finitely many atoms at incline breakpoints and at L
    let mut mu_total = 0.0;
    for (_, left, right) in model.incline.jumps() {
        let d = (left.sin() - right.sin()).abs();
        if d > 0.0 {
            let sup = samples.iter().map(|u| g * u.density * d).fold(0.0, f64::max);
            mu_total += sup;
        }
    }
    if model.friction > 0.0 {
        let sup = samples
            .iter()
            .map(|u| model.friction * u.momentum * u.momentum / u.density)
            .fold(0.0, f64::max);
        mu_total += sup;
    }
    if !mu_total.is_finite() {
        return Err(Error::ValidationFailed {
            clause: 2,
            detail: "x-variation of the source is not dominated by a finite measure".into(),
        });
    }

    // (3) Lipschitz constant by central differences in each x-segment
    let mut probes: Vec<f64> = model.incline.breakpoints.iter().map(|b| b + 1e-9).collect();
    probes.push(0.0);
    probes.push(0.5 * model.active_length);
    probes.push(model.active_length + 1.0 + model.incline.support_end());
    let mut lipschitz_hat: f64 = 0.0;
    for &x in &probes {
        for u in &samples {
            let h_rho = 1e-6 * u.density;
            let h_q = 1e-6 * u.density.max(u.momentum.abs());
            let d_rho = (model.source_raw(x, FluidState::new(u.density + h_rho, u.momentum))[1]
                - model.source_raw(x, FluidState::new(u.density - h_rho, u.momentum))[1])
                / (2.0 * h_rho);
            let d_q = (model.source_raw(x, FluidState::new(u.density, u.momentum + h_q))[1]
                - model.source_raw(x, FluidState::new(u.density, u.momentum - h_q))[1])
                / (2.0 * h_q);
            lipschitz_hat = lipschitz_hat.max(d_rho.abs()).max(d_q.abs());
        }
    }
    if !lipschitz_hat.is_finite() {
        return Err(Error::ValidationFailed {
            clause: 3,
            detail: "source is not Lipschitz on the state box".into(),
        });
    }

    Ok(SourceReport {
        support_bound,
        mu_total,
        lipschitz_hat,
        l1: lipschitz_hat,
    })
}
