//! Experiment cells, admissibility rules, the matrix runner and verdict files.

mod config;
mod run;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use config::{BenchmarkConfig, CellConfig, ExperimentConfig, ModelSet, ModelsConfig, RemoteOverrides, RoleSource};
pub use run::{read_verdicts, run_cell, run_matrix, CellStatus, Manifest, ManifestCell, VerdictRecord};

use crate::augment::{AugmentorConfig, MemoryKind};
use crate::search::{SearchConfig, SearchMethod};

/// Why a (memory, search, environment) combination is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Rejection {
    DuplicateAugmentor,
    /// Beam and MCTS need to fork environment state.
    NonSerializable,
    /// Raw Sibling needs several candidates per expansion.
    CrossSiblingNeedsExpansion,
    /// Single-round beam never completes a trajectory before the search ends.
    CrossTrajectoryOnSingleRoundBeam,
}

impl Rejection {
    pub fn code(self) -> &'static str {
        match self {
            Rejection::DuplicateAugmentor => "DUPLICATE_AUGMENTOR",
            Rejection::NonSerializable => "NON_SERIALIZABLE",
            Rejection::CrossSiblingNeedsExpansion => "CROSS_SIBLING_NEEDS_EXPANSION",
            Rejection::CrossTrajectoryOnSingleRoundBeam => "CROSS_TRAJECTORY_ON_SINGLE_ROUND_BEAM",
        }
    }

    /// Report placeholder: `---` for environment-driven gaps, `∅` for
    /// method-driven ones.
    pub fn placeholder(self) -> &'static str {
        match self {
            Rejection::NonSerializable => "---",
            _ => "∅",
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let why = match self {
            Rejection::DuplicateAugmentor => "the same augmentor kind is listed twice",
            Rejection::NonSerializable => "environment state cannot be forked for tree search",
            Rejection::CrossSiblingNeedsExpansion => "sibling memory needs multi-candidate expansion",
            Rejection::CrossTrajectoryOnSingleRoundBeam => {
                "single-round beam has no completed trajectory to learn from"
            }
        };
        write!(f, "{} ({why})", self.code())
    }
}

/// Structural admissibility of a cell. Checks run in a fixed order so a cell
/// with several problems always reports the same reason.
pub fn check_admissible(memory: &[MemoryKind], method: SearchMethod, serializable: bool) -> Result<(), Rejection> {
    for (i, k) in memory.iter().enumerate() {
        if memory[..i].contains(k) {
            return Err(Rejection::DuplicateAugmentor);
        }
    }
    if method.needs_fork() && !serializable {
        return Err(Rejection::NonSerializable);
    }
    if method == SearchMethod::BestOfN && memory.contains(&MemoryKind::RawSibling) {
        return Err(Rejection::CrossSiblingNeedsExpansion);
    }
    if method == SearchMethod::Beam && memory.iter().any(|k| k.cross_trajectory()) {
        return Err(Rejection::CrossTrajectoryOnSingleRoundBeam);
    }
    Ok(())
}

/// One resolved (memory × search × environment) configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentCell {
    pub id: String,
    pub memory: Vec<AugmentorConfig>,
    pub search: SearchConfig,
    /// Environment kind of the benchmark (`sql`, `kg`, `shell`).
    pub env: String,
    pub serializable: bool,
    pub benchmark: String,
    pub seed: u64,
    pub dedup_threshold: f64,
}

impl ExperimentCell {
    pub fn memory_kinds(&self) -> Vec<MemoryKind> {
        self.memory.iter().map(|c| c.kind).collect()
    }

    pub fn check(&self) -> Result<(), Rejection> {
        check_admissible(&self.memory_kinds(), self.search.method, self.serializable)
    }

    /// Display name of the memory method, e.g. `Fact + Reflection`.
    pub fn memory_label(&self) -> String {
        memory_label(&self.memory_kinds())
    }
}

pub fn memory_label(kinds: &[MemoryKind]) -> String {
    let named: Vec<&str> = kinds
        .iter()
        .filter(|k| **k != MemoryKind::None)
        .map(|k| k.label())
        .collect();
    if named.is_empty() {
        MemoryKind::None.label().to_string()
    } else {
        named.join(" + ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use MemoryKind::*;

    #[test]
    fn table_shape() {
        let ok = |m: &[MemoryKind], s, ser| check_admissible(m, s, ser);
        assert_eq!(ok(&[RawSibling], SearchMethod::BestOfN, true), Err(Rejection::CrossSiblingNeedsExpansion));
        assert_eq!(ok(&[Reflection], SearchMethod::Mcts, false), Err(Rejection::NonSerializable));
        assert_eq!(ok(&[Reflection], SearchMethod::BestOfN, false), Ok(()));
        assert_eq!(ok(&[Fact], SearchMethod::Beam, true), Err(Rejection::CrossTrajectoryOnSingleRoundBeam));
        assert_eq!(ok(&[Fact], SearchMethod::Mcts, true), Ok(()));
        assert_eq!(ok(&[Fact, Reflection], SearchMethod::Mcts, true), Ok(()));
        assert_eq!(ok(&[Fact, Fact], SearchMethod::BestOfN, true), Err(Rejection::DuplicateAugmentor));
        assert_eq!(Rejection::NonSerializable.placeholder(), "---");
        assert_eq!(Rejection::CrossSiblingNeedsExpansion.placeholder(), "∅");
    }

    #[test]
    fn labels() {
        assert_eq!(memory_label(&[None]), "No Memory");
        assert_eq!(memory_label(&[Fact, Reflection]), "Fact + Reflection");
    }
}
