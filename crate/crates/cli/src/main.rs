mod check;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hypnet::functionals::{cost_j, functional_csv, functional_series};
use hypnet::optimize::{lipschitz_harness, minimize, ControlParam, HarnessConfig, ScenarioObjective, SearchConfig};
use hypnet::{Scenario, Trajectory};

#[derive(Parser)]
#[command(name = "hypnet", version, about = "Simulate and control 2x2 balance laws on a junction network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify transversality, subsonic data, sources and the CFL step.
    Check {
        scenario: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the scenario under its control schedule and write CSV output.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Search for a control minimizing the scenario cost.
    Optimize {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Estimate the Lipschitz constant of the solution map from random pairs.
    ProbeLipschitz {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        /// Relative perturbation amplitude.
        #[arg(long, default_value_t = 1e-2)]
        scale: f64,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    /// Cells per pipe.
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    cfl: Option<f64>,
}

fn load(path: &Path, overrides: &Overrides) -> Result<Scenario> {
    let mut s = Scenario::load(path)?;
    if let Some(cells) = overrides.cells {
        s.grid.cells = cells;
    }
    if let Some(cfl) = overrides.cfl {
        s.solver.cfl = cfl;
    }
    Ok(s)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn require_check(s: &Scenario) -> Result<()> {
    let report = check::run(s);
    if !report.passed() {
        eprint!("{}", report.render());
        bail!("scenario check failed");
    }
    Ok(())
}

fn write_trajectory(dir: &Path, s: &Scenario, traj: &Trajectory) -> Result<()> {
    let junction = s.junction()?;
    let cfg = s.functional_config(&junction)?;
    write(dir, "trajectory.csv", &traj.to_csv())?;
    write(dir, "functionals.csv", &functional_csv(&functional_series(&junction, traj, &cfg)?))?;
    write(dir, "traces.csv", &traj.traces_csv())
}

fn simulate(s: &Scenario, out: &Path) -> Result<()> {
    require_check(s)?;
    fs::create_dir_all(out)?;
    let traj = s.simulator()?.evolve(s.initial_state()?)?;
    write(out, "scenario.json", &s.to_json())?;
    write_trajectory(out, s, &traj)?;
    println!(
        "simulated {} steps to t = {}, relative mass error {:.3e}",
        traj.steps.len(),
        traj.final_state.t,
        traj.mass.relative_error()
    );
    if let Some(cost) = &s.cost {
        let c = cost_j(&s.junction()?, &traj, &traj.control, cost);
        println!("cost J = {:.12e} (J_o {:.12e}, J_1 {:.12e})", c.total, c.j_o, c.j_1);
    }
    Ok(())
}

fn optimize(mut s: Scenario, seed: Option<u64>, out: &Path) -> Result<()> {
    let Some(spec) = s.optimization.as_mut() else {
        bail!("scenario has no optimization settings");
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let spec = spec.clone();
    require_check(&s)?;
    fs::create_dir_all(out)?;
    let objective = ScenarioObjective::new(&s)?;
    let param = ControlParam::from_spec(&spec, s.control.horizon(), s.control.values[0].clone());
    let result = minimize(&objective, &param, &s.control, &SearchConfig::from_spec(&spec))?;
    write(out, "optimization_log.csv", &result.log_csv())?;
    write(out, "best_control.json", &serde_json::to_string_pretty(&result.best)?)?;

    let mut best = s.clone();
    best.control = result.best.clone();
    let traj = best.simulator()?.evolve(best.initial_state()?)?;
    write_trajectory(out, &best, &traj)?;
    let start = result.log.first().map(|e| e.eval.j);
    println!(
        "{} evaluations ({:?}); J {} -> {:.12e} (J_o {:.12e}, J_1 {:.12e})",
        result.log.len(),
        result.termination,
        start.map_or("n/a".to_string(), |j| format!("{j:.12e}")),
        result.best_eval.j,
        result.best_eval.j_o,
        result.best_eval.j_1
    );
    Ok(())
}

fn probe(s: &Scenario, cfg: HarnessConfig, out: Option<&Path>) -> Result<()> {
    s.validate()?;
    let report = lipschitz_harness(s, &cfg)?;
    let mut sorted = report.ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0);
    println!(
        "{} pairs ({} skipped), scale {:e}: max ratio {:.6}, median {:.6}",
        report.ratios.len(),
        report.skipped,
        cfg.scale,
        report.max_ratio,
        median
    );
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let mut csv = String::from("pair,ratio\n");
        for (k, r) in report.ratios.iter().enumerate() {
            csv.push_str(&format!("{k},{r:.16e}\n"));
        }
        write(dir, "lipschitz.csv", &csv)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Check { scenario, overrides } => {
            let report = check::run(&load(&scenario, &overrides)?);
            print!("{}", report.render());
            return Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
        Command::Simulate { scenario, out, overrides } => simulate(&load(&scenario, &overrides)?, &out)?,
        Command::Optimize { scenario, out, seed, overrides } => optimize(load(&scenario, &overrides)?, seed, &out)?,
        Command::ProbeLipschitz { scenario, out, seed, pairs, scale, overrides } => {
            probe(&load(&scenario, &overrides)?, HarnessConfig { pairs, scale, seed }, out.as_deref())?
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
