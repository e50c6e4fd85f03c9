use std::collections::BTreeMap;

use super::{unquote, Environment, Snapshots};
use crate::error::EnvError;
use crate::types::{Action, Observation, StateHandle, FINAL_ANSWER};

/// Read-only knowledge graph of `(subject, relation, object)` triples.
///
/// `RELATIONS(entity)` lists outgoing relations; `TRAVERSE(entity | relation)`
/// returns the sorted objects.
#[derive(Debug, Clone)]
pub struct ToyKgWorld {
    id: String,
    edges: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    snapshots: Snapshots,
}

impl ToyKgWorld {
    pub fn new(id: impl Into<String>, triples: &[[String; 3]]) -> Self {
        let mut edges: BTreeMap<String, BTreeMap<String, Vec<String>>> = BTreeMap::new();
        for [s, r, o] in triples {
            let objects = edges.entry(s.clone()).or_default().entry(r.clone()).or_default();
            if !objects.contains(o) {
                objects.push(o.clone());
                objects.sort();
            }
        }
        ToyKgWorld {
            id: id.into(),
            edges,
            snapshots: Snapshots::default(),
        }
    }

    fn run(&self, action: &Action) -> Observation {
        let tool = action.tool_name.as_str();
        let result = match tool {
            "RELATIONS" => {
                let entity = unquote(&action.arguments);
                match self.edges.get(entity) {
                    Some(rels) => Ok(format!("relations: {}", rels.keys().cloned().collect::<Vec<_>>().join(", "))),
                    None if self.is_entity(entity) => Ok("relations: (none)".to_string()),
                    None => Err(format!("unknown entity: {entity}")),
                }
            }
            "TRAVERSE" => self.traverse(&action.arguments),
            FINAL_ANSWER => return Observation::ok(tool, ""),
            other => Err(format!("unknown tool {other}")),
        };
        match result {
            Ok(content) => Observation::ok(tool, content),
            Err(message) => Observation::error(tool, message),
        }
    }

    fn is_entity(&self, name: &str) -> bool {
        self.edges.contains_key(name) || self.edges.values().flat_map(|r| r.values()).flatten().any(|o| o == name)
    }

    fn traverse(&self, args: &str) -> Result<String, String> {
        let (entity, relation) = args
            .split_once('|')
            .map(|(e, r)| (unquote(e), unquote(r)))
            .ok_or("TRAVERSE expects \"entity | relation\"")?;
        if !self.is_entity(entity) {
            return Err(format!("unknown entity: {entity}"));
        }
        self.edges
            .get(entity)
            .and_then(|rels| rels.get(relation))
            .map(|objects| format!("entities: {}", objects.join(", ")))
            .ok_or_else(|| format!("relation {relation} is not defined for {entity}"))
    }
}

impl Environment for ToyKgWorld {
    fn id(&self) -> &str {
        &self.id
    }

    fn serializable(&self) -> bool {
        true
    }

    fn reset(&mut self) -> StateHandle {
        self.snapshots.root(&self.id)
    }

    fn step(&mut self, state: &StateHandle, action: &Action) -> Result<(StateHandle, Observation), EnvError> {
        let next = self.snapshots.advance(state, action)?;
        Ok((next, self.run(action)))
    }

    fn fork(&mut self, state: &StateHandle) -> Result<StateHandle, EnvError> {
        self.snapshots.check(state)?;
        Ok(state.clone())
    }
}
