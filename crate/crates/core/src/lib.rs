pub mod error;
pub mod functionals;
pub mod junction;
pub mod models;
pub mod netsolver;
pub mod optimize;
pub mod riemann;
mod roots;
pub mod scenario;

pub use error::{Error, Result};
pub use models::{EntropyPair, FluidState, Incline, Orientation, PipeModel, PressureLaw};
pub use riemann::{Family, Wave, WaveFan, WaveKind};
pub use junction::{ControlSchedule, Coupling, Junction, JunctionSolution};
pub use netsolver::{Grid, Network, NetworkState, Simulator, SolverConfig, Splitting, Trajectory};
pub use scenario::Scenario;
