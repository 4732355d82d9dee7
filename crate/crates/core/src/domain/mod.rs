//! The five-topic data model shared by every layer.
//!
//! Every record belongs to exactly one [`TopicKind`]. A [`TopicEntity`] carries
//! the topic-level columns (id, name, creation time) and any number of
//! [`AttributeBlock`]s mounted onto it, at most one per block kind. Entities are
//! linked by typed [`Relation`]s whose endpoint topics are fixed by the
//! [`RelationKind`].

mod document;
mod entity;
mod relation;

pub(crate) use document::peek_id;
pub use document::{DocumentError, EntityDocument, RelationRef};
pub(crate) use entity::is_identifier;
pub use entity::{
    mount_attribute, new_entity, AttributeBlock, EntityId, ModelError, Timestamp, TopicEntity, TopicKind, TypedValue,
    MAX_KIND_LEN, MAX_NAME_LEN,
};
pub use relation::{
    validate_relation, validate_relation_topics, Relation, RelationId, RelationKind, RelationViolation,
};
