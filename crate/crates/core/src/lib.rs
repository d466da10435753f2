//! Pivoting-cube ensembles on the square lattice: the move simulator, the
//! symmetry-aware shape overlap, target shapes and the episodic environment
//! used for training decentralised controllers.

pub mod env;
pub mod geometry;
pub mod overlap;
pub mod shapes;
pub mod sim;
pub mod trace;

pub use env::{CubeEnv, EnvConfig, EnvError, RewardParams, StepInfo, StepResult};
pub use geometry::{CellCoord, Corner, Direction, Rotation, TransformId};
pub use shapes::{ShapeError, TargetShape};
pub use sim::{Connectivity, Ensemble, GridImage, MoveCommand, MoveOutcome};
