//! Planar room simulator with a differential-drive agent carrying a head,
//! two two-segment arms and an eyelid.

mod sequence;
mod spec;
mod world;

pub use sequence::{compose, invert_sequence, Action, ActionSequence};
pub use spec::*;
pub use world::{quantize, AgentShape, BasePose, World, WorldState, DEFAULT_DT, QUANTUM};

/// Builds a world from an environment and a morphology.
pub fn load_world(env: EnvironmentSpec, morph: MorphologySpec) -> crate::Result<World> {
    World::load(env, morph)
}
