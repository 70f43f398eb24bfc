use std::fmt;

use serde::{Deserialize, Serialize};

/// One-based index of an input-holding party.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartyId(pub usize);

impl PartyId {
    pub fn index(self) -> usize {
        self.0
    }

    /// Zero-based position, for indexing per-party vectors.
    pub fn slot(self) -> usize {
        self.0 - 1
    }

    pub fn all(n: usize) -> impl Iterator<Item = PartyId> {
        (1..=n).map(PartyId)
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

/// Participants of a run. The decider holds no input and is the only role
/// that learns the result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Coordinator,
    Party(PartyId),
    Decider,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Coordinator => f.write_str("coordinator"),
            Role::Party(p) => write!(f, "{p}"),
            Role::Decider => f.write_str("decider"),
        }
    }
}
