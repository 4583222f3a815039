#![allow(dead_code)]

use hypnet::junction::{Coupling, Junction};
use hypnet::riemann::{lax_curve_reverse, Family};
use hypnet::{FluidState, PipeModel, PressureLaw};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn gas_law() -> PressureLaw {
    PressureLaw::GammaLaw { p_star: 1.0, rho_star: 1.0, gamma: 1.4 }
}

pub fn compressor() -> Junction {
    Junction::new(
        Coupling::Compressor { gamma: 1.4 },
        vec![PipeModel::gas(gas_law(), 1.0), PipeModel::gas(gas_law(), 1.0)],
        vec![FluidState::new(1.0, -0.3), FluidState::new(1.2, 0.3)],
    )
    .unwrap()
}

pub fn gate() -> Junction {
    Junction::new(
        Coupling::UnderflowGate,
        vec![PipeModel::canal(1.0, 1.0, 1.0), PipeModel::canal(1.0, 1.5, 1.0)],
        vec![FluidState::new(2.0, -0.3), FluidState::new(1.0, 0.2)],
    )
    .unwrap()
}

pub fn valves() -> Junction {
    Junction::new(
        Coupling::MultiValve,
        vec![PipeModel::canal(1.0, 1.0, 1.0), PipeModel::canal(1.0, 1.0, 1.0), PipeModel::canal(1.0, 2.0, 1.0)],
        vec![FluidState::new(1.0, -0.2), FluidState::new(1.1, -0.3), FluidState::new(1.0, 0.25)],
    )
    .unwrap()
}

pub fn pump() -> Junction {
    Junction::new(
        Coupling::PumpingStation,
        vec![PipeModel::canal(1.0, 1.0, 1.0), PipeModel::canal(1.0, 1.0, 1.0)],
        vec![FluidState::new(1.0, -0.2), FluidState::new(1.5, 0.2)],
    )
    .unwrap()
}

pub fn all_junctions() -> Vec<(&'static str, Junction)> {
    vec![("compressor", compressor()), ("gate", gate()), ("valves", valves()), ("pump", pump())]
}

/// Reference states and control, each perturbed by relative amplitude `eps`.
/// The mass-balance component of the control stays at zero.
pub fn perturbed_data(j: &Junction, rng: &mut ChaCha8Rng, eps: f64) -> (Vec<FluidState>, Vec<f64>) {
    let states = j
        .reference
        .iter()
        .map(|u| {
            FluidState::new(
                u.density * (1.0 + eps * rng.gen_range(-1.0..1.0)),
                u.momentum + eps * u.density * rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    let pi = j
        .reference_control()
        .iter()
        .enumerate()
        .map(|(k, v)| if k == 0 { 0.0 } else { v + eps * v.abs().max(0.1) * rng.gen_range(-1.0..1.0) })
        .collect();
    (states, pi)
}

fn residual(j: &Junction, boundary: &[FluidState], pi: &[f64], sigma: &[f64]) -> f64 {
    let traces: Option<Vec<FluidState>> = j
        .pipes
        .iter()
        .zip(boundary)
        .zip(sigma)
        .map(|((m, b), s)| lax_curve_reverse(m, Family::Second, *b, *s).ok())
        .collect();
    match traces.and_then(|t| j.psi(&t).ok()) {
        Some(v) => v.iter().zip(pi).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        None => f64::INFINITY,
    }
}

/// Minimizes the junction residual over a box of 2-wave sizes by exhaustive
/// search, refining the grid around the best point.
pub fn grid_search(j: &Junction, boundary: &[FluidState], pi: &[f64], half_width: f64) -> Vec<f64> {
    let n = j.n();
    let points: usize = if n == 2 { 401 } else { 61 };
    let mut center = vec![0.0; n];
    let mut width = half_width;
    for _ in 0..4 {
        let h = 2.0 * width / (points - 1) as f64;
        let mut best = (f64::INFINITY, center.clone());
        let total = points.pow(n as u32);
        let mut sigma = vec![0.0; n];
        for idx in 0..total {
            let mut k = idx;
            for s in sigma.iter_mut().enumerate() {
                *s.1 = center[s.0] - width + h * (k % points) as f64;
                k /= points;
            }
            let r = residual(j, boundary, pi, &sigma);
            if r < best.0 {
                best = (r, sigma.clone());
            }
        }
        center = best.1;
        width = 4.0 * h;
    }
    center
}

pub fn shipped_scenario(name: &str) -> hypnet::Scenario {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"));
    hypnet::Scenario::load(&path).unwrap()
}

/// Horizontal frictionless compressor whose pressure target on pipe 2 is
/// met exactly by the reference compression; the run starts from 1.5× that
/// control.
pub fn attainable_compressor() -> hypnet::Scenario {
    use hypnet::functionals::CostSpec;
    let mut s = shipped_scenario("compressor");
    for p in s.pipes.iter_mut() {
        p.friction = 0.0;
        p.gravity = 0.0;
        p.incline = hypnet::Incline::flat();
    }
    s.grid = hypnet::Grid::new(100, 6.0).unwrap();
    s.solver.t_end = 3.0;
    let j = s.junction().unwrap();
    let pi_bar = j.reference_control()[1];
    let p_bar = j.pipes[1].pressure(s.reference[1].density).unwrap();
    s.cost = Some(CostSpec::CompressorTarget { p_bar, x_a: 0.5, x_b: 3.0, pipe: 1 });
    s.control = hypnet::ControlSchedule::constant(3.0, vec![0.0, 1.5 * pi_bar]);
    let opt = s.optimization.as_mut().unwrap();
    opt.intervals = 1;
    opt.budget = 500;
    opt.initial_step = 0.005;
    opt.min_step = 1e-9;
    opt.seed = 1;
    s
}

/// Gas pipes with `p = (g/2) ρ²` and gravity `g` against canals of unit width.
pub fn gas_and_canal(g: f64) -> (hypnet::Simulator, hypnet::Simulator) {
    let incline = hypnet::Incline::piecewise(vec![0.0, 0.5, 1.5], vec![0.05, -0.03]).unwrap();
    let law = PressureLaw::GammaLaw { p_star: g / 2.0, rho_star: 1.0, gamma: 2.0 };
    let reference = vec![FluidState::new(2.0, -0.3), FluidState::new(1.0, 0.3)];
    let gas: Vec<PipeModel> = (0..2)
        .map(|_| PipeModel::gas(law, 1.0).with_friction(0.05).with_incline(g, incline.clone()))
        .collect();
    let canal: Vec<PipeModel> = (0..2)
        .map(|_| PipeModel::canal(g, 1.0, 1.0).with_friction(0.05).with_incline(g, incline.clone()))
        .collect();
    let grid = hypnet::Grid::new(100, 2.0).unwrap();
    let mut config = hypnet::SolverConfig::until(100.0);
    config.max_steps = Some(200);
    let build = |pipes| {
        let junction = Junction::new(Coupling::UnderflowGate, pipes, reference.clone()).unwrap();
        hypnet::Simulator::new(hypnet::Network { junction, grid }, config).unwrap()
    };
    (build(gas), build(canal))
}
