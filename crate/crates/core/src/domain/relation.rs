use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::entity::{EntityId, Timestamp, TopicEntity, TopicKind};

/// Typed edge between two topics. Each variant fixes the topic of both
/// endpoints; there is intentionally no Data/Paradigm edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationKind {
    /// Parent process to child process.
    ProcessParent,
    ProcessData,
    PersonData,
    DeviceData,
    ProcessPerson,
    ProcessDevice,
    ProcessParadigm,
}

impl RelationKind {
    pub const ALL: [RelationKind; 7] = [
        RelationKind::ProcessParent,
        RelationKind::ProcessData,
        RelationKind::PersonData,
        RelationKind::DeviceData,
        RelationKind::ProcessPerson,
        RelationKind::ProcessDevice,
        RelationKind::ProcessParadigm,
    ];

    /// `(from topic, to topic)`.
    pub fn endpoints(&self) -> (TopicKind, TopicKind) {
        use TopicKind::*;
        match self {
            RelationKind::ProcessParent => (Process, Process),
            RelationKind::ProcessData => (Process, Data),
            RelationKind::PersonData => (Person, Data),
            RelationKind::DeviceData => (Device, Data),
            RelationKind::ProcessPerson => (Process, Person),
            RelationKind::ProcessDevice => (Process, Device),
            RelationKind::ProcessParadigm => (Process, Paradigm),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RelationKind::ProcessParent => "ProcessParent",
            RelationKind::ProcessData => "ProcessData",
            RelationKind::PersonData => "PersonData",
            RelationKind::DeviceData => "DeviceData",
            RelationKind::ProcessPerson => "ProcessPerson",
            RelationKind::ProcessDevice => "ProcessDevice",
            RelationKind::ProcessParadigm => "ProcessParadigm",
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown relation kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u64);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub id: RelationId,
    pub kind: RelationKind,
    pub from_id: EntityId,
    pub to_id: EntityId,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RelationViolation {
    #[error("{kind} expects {expected_from}->{expected_to}, got {found_from}->{found_to}")]
    TopicMismatch {
        kind: RelationKind,
        expected_from: TopicKind,
        expected_to: TopicKind,
        found_from: TopicKind,
        found_to: TopicKind,
    },
    #[error("process {0} cannot be its own parent")]
    SelfParent(EntityId),
}

/// Checks endpoint topics against the relation signature. Never panics.
pub fn validate_relation_topics(
    kind: RelationKind,
    from_topic: TopicKind,
    to_topic: TopicKind,
    from_id: EntityId,
    to_id: EntityId,
) -> Result<(), RelationViolation> {
    let (expected_from, expected_to) = kind.endpoints();
    if (from_topic, to_topic) != (expected_from, expected_to) {
        return Err(RelationViolation::TopicMismatch {
            kind,
            expected_from,
            expected_to,
            found_from: from_topic,
            found_to: to_topic,
        });
    }
    if kind == RelationKind::ProcessParent && from_id == to_id {
        return Err(RelationViolation::SelfParent(from_id));
    }
    Ok(())
}

pub fn validate_relation(kind: RelationKind, from: &TopicEntity, to: &TopicEntity) -> Result<(), RelationViolation> {
    validate_relation_topics(kind, from.topic, to.topic, from.id, to.id)
}
