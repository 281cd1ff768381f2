//! Built-in scenes and agents, addressable by name.

use crate::error::{Error, Result};
use crate::sim::{EnvironmentSpec, MorphologySpec, SceneDocument, World};

const SCENES: &[(&str, &str)] = &[
    ("empty", include_str!("../fixtures/empty.json")),
    ("room4", include_str!("../fixtures/room4.json")),
    ("room8", include_str!("../fixtures/room8.json")),
    ("room12", include_str!("../fixtures/room12.json")),
    ("fig2", include_str!("../fixtures/fig2.json")),
    ("furniture", include_str!("../fixtures/furniture.json")),
    ("explore_task", include_str!("../fixtures/explore_task.json")),
];

const AGENTS: &[(&str, &str)] = &[
    ("short", include_str!("../fixtures/short_arms.json")),
    ("long", include_str!("../fixtures/long_arms.json")),
    ("joint_limit_fault", include_str!("../fixtures/joint_limit_fault.json")),
];

pub fn scene_names() -> impl Iterator<Item = &'static str> {
    SCENES.iter().map(|(n, _)| *n)
}

pub fn agent_names() -> impl Iterator<Item = &'static str> {
    AGENTS.iter().map(|(n, _)| *n)
}

fn lookup(table: &[(&str, &'static str)], name: &str) -> Option<&'static str> {
    table.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn scene_document(name: &str) -> Result<SceneDocument> {
    let text = lookup(SCENES, name).ok_or_else(|| Error::Validation(format!("unknown scene `{name}`")))?;
    SceneDocument::from_json(text)
}

pub fn environment(name: &str) -> Result<EnvironmentSpec> {
    scene_document(name)?.environment()
}

pub fn agent(name: &str) -> Result<MorphologySpec> {
    let text = lookup(AGENTS, name).ok_or_else(|| Error::Validation(format!("unknown agent `{name}`")))?;
    SceneDocument::from_json(text)?.morphology_or_default()
}

/// Loads a built-in scene with the default agent.
pub fn world(name: &str) -> Result<World> {
    let doc = scene_document(name)?;
    World::load(doc.environment()?, doc.morphology_or_default()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_loads() {
        for n in scene_names() {
            world(n).unwrap_or_else(|e| panic!("{n}: {e}"));
        }
        for n in agent_names() {
            agent(n).unwrap();
        }
    }

    #[test]
    fn smaller_rooms_are_subsets_of_room12() {
        let big = environment("room12").unwrap();
        for (n, count) in [("room4", 4), ("room8", 8)] {
            let e = environment(n).unwrap();
            assert_eq!(e.entities.len(), count);
            assert!(e.entities.iter().all(|x| big.entities.contains(x)));
        }
        assert_eq!(big.entities.len(), 12);
    }
}
