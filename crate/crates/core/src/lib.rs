//! Non-stationary episodic reinforcement learning with finite function classes:
//! tabular MDP sequences, drift generators, sliding-window optimistic agents,
//! Eluder-dimension computations and numeric checks of the supporting lemmas.

pub mod agent;
pub mod drift;
pub mod eluder;
pub mod error;
pub mod func_class;
pub mod harness;
pub mod instances;
pub mod mdp;
pub mod table;
pub mod verify;

pub use error::{Error, Result};
pub use mdp::{MdpSnapshot, NonstationaryMdp, Policy, Trajectory, ValueTables};
pub use table::{QTable, TransitionKernel};
