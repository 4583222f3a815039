//! JSON scenario files: network, initial data, control, cost and optimizer settings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{CostSpec, FunctionalConfig};
use crate::junction::{ControlSchedule, Coupling, Junction};
use crate::models::{FluidState, PipeModel};
use crate::netsolver::{Grid, Network, NetworkState, Simulator, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitialData {
    /// Every pipe at its reference state.
    Reference,
    /// One constant state per pipe.
    Constant { states: Vec<FluidState> },
    /// Per pipe, `left` on `x < position` and `right` beyond.
    Riemann { left: Vec<FluidState>, right: Vec<FluidState>, position: f64 },
    /// Cell values per pipe; lengths must match the grid.
    Profile { pipes: Vec<Vec<FluidState>> },
}

/// Settings of the pattern search over piecewise-constant controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationSpec {
    /// Number of equal control intervals on `[0, T]`.
    pub intervals: usize,
    /// Indices of the control components that may change.
    pub free: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub tv_budget: f64,
    /// Maximum number of cost evaluations.
    pub budget: usize,
    pub initial_step: f64,
    #[serde(default = "default_min_step")]
    pub min_step: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_min_step() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub coupling: Coupling,
    pub pipes: Vec<PipeModel>,
    pub reference: Vec<FluidState>,
    pub initial: InitialData,
    pub grid: Grid,
    pub solver: SolverConfig,
    pub control: ControlSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimization: Option<OptimizationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functionals: Option<FunctionalConfig>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::InvalidScenario(e.to_string()))?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidScenario(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn junction(&self) -> Result<Junction> {
        Junction::new(self.coupling.clone(), self.pipes.clone(), self.reference.clone())
    }

    pub fn network(&self) -> Result<Network> {
        self.grid.validate()?;
        Ok(Network { junction: self.junction()?, grid: self.grid })
    }

    pub fn simulator(&self) -> Result<Simulator> {
        Simulator::new(self.network()?, self.solver)
    }

    pub fn initial_pipes(&self) -> Result<Vec<Vec<FluidState>>> {
        let n = self.pipes.len();
        let cells = self.grid.cells;
        let per_pipe = |v: &Vec<FluidState>, what: &str| {
            if v.len() != n {
                Err(Error::InvalidScenario(format!("{what} needs one state per pipe")))
            } else {
                Ok(())
            }
        };
        match &self.initial {
            InitialData::Reference => Ok(self.reference.iter().map(|s| vec![*s; cells]).collect()),
            InitialData::Constant { states } => {
                per_pipe(states, "constant initial data")?;
                Ok(states.iter().map(|s| vec![*s; cells]).collect())
            }
            InitialData::Riemann { left, right, position } => {
                per_pipe(left, "riemann initial data")?;
                per_pipe(right, "riemann initial data")?;
                Ok((0..n)
                    .map(|l| {
                        (0..cells)
                            .map(|i| if self.grid.center(i) < *position { left[l] } else { right[l] })
                            .collect()
                    })
                    .collect())
            }
            InitialData::Profile { pipes } => {
                if pipes.len() != n || pipes.iter().any(|p| p.len() != cells) {
                    return Err(Error::InvalidScenario(format!(
                        "profile needs {n} pipes of {cells} cells"
                    )));
                }
                Ok(pipes.clone())
            }
        }
    }

    pub fn initial_state(&self) -> Result<NetworkState> {
        Ok(NetworkState { t: 0.0, pipes: self.initial_pipes()?, control: self.control.clone() })
    }

    pub fn functional_config(&self, junction: &Junction) -> Result<FunctionalConfig> {
        match self.functionals {
            Some(cfg) => Ok(cfg),
            None => FunctionalConfig::for_junction(junction),
        }
    }

    /// Structural validation: model, junction, grid, solver, control, cost.
    pub fn validate(&self) -> Result<()> {
        let junction = self.junction()?;
        self.grid.validate()?;
        self.solver.validate()?;
        self.control.validate()?;
        if self.control.dim() != junction.n() {
            return Err(Error::InvalidScenario(format!("control must have {} components", junction.n())));
        }
        self.initial_pipes()?;
        if let Some(cost) = &self.cost {
            cost.validate(junction.n())?;
        }
        if let Some(opt) = &self.optimization {
            if opt.intervals == 0
                || opt.free.is_empty()
                || opt.free.iter().any(|&k| k >= junction.n())
                || opt.lower.len() != opt.free.len()
                || opt.upper.len() != opt.free.len()
                || opt.lower.iter().zip(&opt.upper).any(|(a, b)| !(a <= b))
                || !(opt.tv_budget >= 0.0)
                || !(opt.initial_step > 0.0)
            {
                return Err(Error::InvalidScenario("inconsistent optimization settings".into()));
            }
        }
        if let Some(cfg) = &self.functionals {
            cfg.validate()?;
        }
        Ok(())
    }
}
