//! Sensory commutativity toolkit: a planar embodied-agent simulator, a
//! pixel-array sensor, and experiments built on comparing the observations
//! reached by an action sequence and its permutations.

pub mod error;
pub mod explore;
pub mod fixtures;
pub mod baselines;
pub mod checks;
pub mod engine;
pub mod geom;
pub mod objmap;
pub mod sensor;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use sensor::{diff_mask, distance_mse, render, DiffMask, Distance, Metric, Observation, SensorSpec};
pub use sim::{
    load_world, Action, ActionSequence, DofDescriptor, DofKind, EnvironmentSpec, MorphologySpec, World,
    WorldState, NUM_DOFS,
};
