//! Canonical text encoding of an entity together with its relations.
//!
//! Field order is fixed: `id`, `topic`, `name`, `created_at`, `attributes`,
//! `relations`. Attribute fields are emitted in sorted order. Entity frames on
//! the wire, query responses, and WAL payloads all use this form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::entity::{AttributeBlock, EntityId, ModelError, Timestamp, TopicEntity, TopicKind};
use super::relation::RelationKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationRef {
    pub kind: RelationKind,
    pub from_id: EntityId,
    pub to_id: EntityId,
}

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("malformed entity document: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("relation {kind} {from_id}->{to_id} does not involve entity {entity}")]
    ForeignRelation {
        entity: EntityId,
        kind: RelationKind,
        from_id: EntityId,
        to_id: EntityId,
    },
    #[error("relation {kind} cannot have a {topic} entity at that end")]
    WrongEndpoint { kind: RelationKind, topic: TopicKind },
    #[error("duplicate relation {kind} {from_id}->{to_id}")]
    DuplicateRelation {
        kind: RelationKind,
        from_id: EntityId,
        to_id: EntityId,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityDocument {
    pub entity: TopicEntity,
    pub relations: Vec<RelationRef>,
}

#[derive(Serialize)]
struct DocOut<'a> {
    id: EntityId,
    topic: TopicKind,
    name: &'a str,
    created_at: Timestamp,
    attributes: &'a [AttributeBlock],
    relations: &'a [RelationRef],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DocIn {
    id: EntityId,
    topic: TopicKind,
    name: String,
    created_at: Timestamp,
    #[serde(default)]
    attributes: Vec<AttributeBlock>,
    #[serde(default)]
    relations: Vec<RelationRef>,
}

impl EntityDocument {
    pub fn new(entity: TopicEntity) -> Self {
        EntityDocument {
            entity,
            relations: Vec::new(),
        }
    }

    pub fn relate(mut self, kind: RelationKind, from_id: EntityId, to_id: EntityId) -> Self {
        self.relations.push(RelationRef { kind, from_id, to_id });
        self
    }

    pub fn to_canonical_json(&self) -> String {
        // Serializing plain data with string keys cannot fail.
        serde_json::to_string(self).expect("entity document serializes")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_canonical_json().into_bytes()
    }

    /// Parses and validates a document. Validation mirrors `mount_attribute`,
    /// so a document with two blocks of one kind is rejected.
    pub fn from_slice(bytes: &[u8]) -> Result<Self, DocumentError> {
        Self::from_raw(serde_json::from_slice(bytes)?)
    }

    fn from_raw(raw: DocIn) -> Result<Self, DocumentError> {
        let mut entity = TopicEntity::with_id(raw.id, raw.topic, &raw.name, raw.created_at)?;
        for block in raw.attributes {
            entity.mount(block)?;
        }
        let doc = EntityDocument {
            entity,
            relations: raw.relations,
        };
        doc.validate()?;
        Ok(doc)
    }

    /// Checks the entity itself plus the relation ends that this entity occupies.
    /// Counterpart topics can only be checked by the store.
    pub fn validate(&self) -> Result<(), DocumentError> {
        self.entity.validate()?;
        let me = self.entity.id;
        for (i, r) in self.relations.iter().enumerate() {
            if r.from_id != me && r.to_id != me {
                return Err(DocumentError::ForeignRelation {
                    entity: me,
                    kind: r.kind,
                    from_id: r.from_id,
                    to_id: r.to_id,
                });
            }
            let (from_topic, to_topic) = r.kind.endpoints();
            if (r.from_id == me && from_topic != self.entity.topic) || (r.to_id == me && to_topic != self.entity.topic)
            {
                return Err(DocumentError::WrongEndpoint {
                    kind: r.kind,
                    topic: self.entity.topic,
                });
            }
            if self.relations[..i].contains(r) {
                return Err(DocumentError::DuplicateRelation {
                    kind: r.kind,
                    from_id: r.from_id,
                    to_id: r.to_id,
                });
            }
        }
        Ok(())
    }
}

impl Serialize for EntityDocument {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        DocOut {
            id: self.entity.id,
            topic: self.entity.topic,
            name: &self.entity.name,
            created_at: self.entity.created_at,
            attributes: &self.entity.attributes,
            relations: &self.relations,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EntityDocument {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = DocIn::deserialize(deserializer)?;
        EntityDocument::from_raw(raw).map_err(serde::de::Error::custom)
    }
}

/// Reads only the `id` field, for routing without a full parse.
pub(crate) fn peek_id(bytes: &[u8]) -> Result<EntityId, serde_json::Error> {
    #[derive(Deserialize)]
    struct IdOnly {
        id: EntityId,
    }
    serde_json::from_slice::<IdOnly>(bytes).map(|v| v.id)
}
