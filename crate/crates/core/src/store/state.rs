//! Immutable committed state and the single apply path shared by the primary,
//! WAL replay and replicas.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::wal::{WalEntry, WalOp};
use super::StoreError;
use crate::domain::{
    validate_relation_topics, AttributeBlock, EntityDocument, EntityId, Relation, RelationId, RelationKind,
    RelationRef, Timestamp, TopicEntity, TopicKind,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct EntityRow {
    pub id: EntityId,
    pub topic: TopicKind,
    pub name: String,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct AttributeRow {
    pub entity_id: EntityId,
    #[serde(flatten)]
    pub block: AttributeBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct DeleteRow {
    pub id: EntityId,
}

/// One committed version of the store. Cloning is cheap (structural sharing).
#[derive(Clone, Default)]
pub struct State {
    lsn: u64,
    next_relation_id: u64,
    entities: im::HashMap<EntityId, Arc<TopicEntity>>,
    by_topic: [im::OrdSet<(Timestamp, EntityId)>; 5],
    relations: im::OrdMap<RelationId, Relation>,
    relation_keys: im::HashMap<RelationRef, RelationId>,
    /// Every relation touching an entity, at either end.
    edges: im::HashMap<EntityId, im::OrdSet<RelationRef>>,
    /// ProcessParent: child -> parent.
    parent: im::HashMap<EntityId, EntityId>,
}

fn corrupt(e: serde_json::Error) -> StoreError {
    StoreError::IntegrityViolation(format!("undecodable wal payload: {e}"))
}

impl State {
    pub fn lsn(&self) -> u64 {
        self.lsn
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn topic_count(&self, topic: TopicKind) -> usize {
        self.by_topic[topic.index()].len()
    }

    pub fn entity(&self, id: &EntityId) -> Option<&TopicEntity> {
        self.entities.get(id).map(|e| e.as_ref())
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        self.entities.contains_key(id)
    }

    /// Entities of `topic` in `(created_at, id)` order.
    pub fn topic_ids(&self, topic: TopicKind) -> impl Iterator<Item = EntityId> + '_ {
        self.by_topic[topic.index()].iter().map(|(_, id)| *id)
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.values()
    }

    pub fn relations_of(&self, id: &EntityId) -> Vec<RelationRef> {
        self.edges
            .get(id)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default()
    }

    /// Ids across the relation `kind` from `anchor`. With `anchor_is_from`,
    /// the anchor sits at the relation's `from` end.
    pub fn neighbors(
        &self,
        anchor: &EntityId,
        kind: RelationKind,
        anchor_is_from: bool,
    ) -> impl Iterator<Item = EntityId> + '_ {
        let anchor = *anchor;
        self.edges.get(&anchor).into_iter().flat_map(move |set| {
            set.iter().filter_map(move |r| {
                if r.kind != kind {
                    None
                } else if anchor_is_from && r.from_id == anchor {
                    Some(r.to_id)
                } else if !anchor_is_from && r.to_id == anchor {
                    Some(r.from_id)
                } else {
                    None
                }
            })
        })
    }

    pub fn parent_of(&self, id: &EntityId) -> Option<EntityId> {
        self.parent.get(id).copied()
    }

    /// Canonical document of an entity with every relation touching it.
    pub fn document(&self, id: &EntityId) -> Option<EntityDocument> {
        let entity = self.entities.get(id)?;
        Some(EntityDocument {
            entity: entity.as_ref().clone(),
            relations: self.relations_of(id),
        })
    }

    pub fn next_relation_id(&self) -> u64 {
        self.next_relation_id
    }

    /// Applies entries in order, validating each. On error `self` may hold a
    /// partial result; callers apply to a clone and discard it on failure.
    pub fn apply_entries(&mut self, entries: &[WalEntry]) -> Result<(), StoreError> {
        for e in entries {
            if e.lsn != self.lsn + 1 {
                return Err(StoreError::LsnGap {
                    expected: self.lsn + 1,
                    found: e.lsn,
                });
            }
            if !e.verify() {
                return Err(StoreError::CrcMismatch(e.lsn));
            }
            self.apply_op(e.op, &e.payload)?;
            self.lsn = e.lsn;
        }
        Ok(())
    }

    fn apply_op(&mut self, op: WalOp, payload: &str) -> Result<(), StoreError> {
        match op {
            WalOp::InsertEntity => {
                let row: EntityRow = serde_json::from_str(payload).map_err(corrupt)?;
                let entity = TopicEntity::with_id(row.id, row.topic, &row.name, row.created_at)
                    .map_err(|e| StoreError::IntegrityViolation(e.to_string()))?;
                self.insert_entity_row(entity)
            }
            WalOp::InsertAttribute => {
                let row: AttributeRow = serde_json::from_str(payload).map_err(corrupt)?;
                self.insert_attribute_row(row.entity_id, row.block)
            }
            WalOp::InsertRelation => {
                let row: Relation = serde_json::from_str(payload).map_err(corrupt)?;
                self.insert_relation_row(row)
            }
            WalOp::DeleteEntity => {
                let row: DeleteRow = serde_json::from_str(payload).map_err(corrupt)?;
                self.delete_entity_row(row.id)
            }
        }
    }

    fn insert_entity_row(&mut self, entity: TopicEntity) -> Result<(), StoreError> {
        if self.entities.contains_key(&entity.id) {
            return Err(StoreError::IntegrityViolation(format!(
                "entity {} already exists",
                entity.id
            )));
        }
        self.by_topic[entity.topic.index()].insert((entity.created_at, entity.id));
        self.entities.insert(entity.id, Arc::new(entity));
        Ok(())
    }

    fn insert_attribute_row(&mut self, id: EntityId, block: AttributeBlock) -> Result<(), StoreError> {
        let Some(entity) = self.entities.get_mut(&id) else {
            return Err(StoreError::IntegrityViolation(format!(
                "attribute block {} for unknown entity {id}",
                block.kind
            )));
        };
        Arc::make_mut(entity)
            .mount(block)
            .map_err(|e| StoreError::IntegrityViolation(e.to_string()))
    }

    fn insert_relation_row(&mut self, rel: Relation) -> Result<(), StoreError> {
        if rel.id.0 != self.next_relation_id {
            return Err(StoreError::IntegrityViolation(format!(
                "relation id {} out of sequence, expected {}",
                rel.id.0, self.next_relation_id
            )));
        }
        let topic_of = |id: &EntityId| {
            self.entities
                .get(id)
                .map(|e| e.topic)
                .ok_or_else(|| StoreError::DanglingReference(format!("{} references missing entity {id}", rel.kind)))
        };
        let from_topic = topic_of(&rel.from_id)?;
        let to_topic = topic_of(&rel.to_id)?;
        validate_relation_topics(rel.kind, from_topic, to_topic, rel.from_id, rel.to_id)
            .map_err(|v| StoreError::IntegrityViolation(v.to_string()))?;
        let key = RelationRef {
            kind: rel.kind,
            from_id: rel.from_id,
            to_id: rel.to_id,
        };
        if self.relation_keys.contains_key(&key) {
            return Err(StoreError::IntegrityViolation(format!(
                "duplicate relation {} {}->{}",
                rel.kind, rel.from_id, rel.to_id
            )));
        }
        if rel.kind == RelationKind::ProcessParent {
            if let Some(existing) = self.parent.get(&rel.to_id) {
                return Err(StoreError::CycleViolation(format!(
                    "process {} already has parent {existing}",
                    rel.to_id
                )));
            }
            // Walking up from the new parent must not reach the child.
            let mut cursor = Some(rel.from_id);
            while let Some(p) = cursor {
                if p == rel.to_id {
                    return Err(StoreError::CycleViolation(format!(
                        "{} -> {} closes an ancestor cycle",
                        rel.from_id, rel.to_id
                    )));
                }
                cursor = self.parent.get(&p).copied();
            }
            self.parent.insert(rel.to_id, rel.from_id);
        }
        self.relation_keys.insert(key, rel.id);
        self.edges.entry(rel.from_id).or_default().insert(key);
        self.edges.entry(rel.to_id).or_default().insert(key);
        self.next_relation_id += 1;
        self.relations.insert(rel.id, rel);
        Ok(())
    }

    fn delete_entity_row(&mut self, id: EntityId) -> Result<(), StoreError> {
        let Some(entity) = self.entities.get(&id) else {
            return Err(StoreError::NotFound(id));
        };
        if self.edges.get(&id).is_some_and(|s| !s.is_empty()) {
            return Err(StoreError::HasRelations(id));
        }
        self.by_topic[entity.topic.index()].remove(&(entity.created_at, id));
        self.entities.remove(&id);
        self.edges.remove(&id);
        Ok(())
    }

    /// Full-scan consistency audit; returns one line per problem found.
    pub fn audit(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let indexed: usize = self.by_topic.iter().map(|s| s.len()).sum();
        if indexed != self.entities.len() {
            problems.push(format!(
                "topic index holds {indexed} ids for {} entities",
                self.entities.len()
            ));
        }
        for (id, e) in &self.entities {
            if e.id != *id {
                problems.push(format!("entity keyed {id} has id {}", e.id));
            }
            if !self.by_topic[e.topic.index()].contains(&(e.created_at, e.id)) {
                problems.push(format!("entity {id} missing from {} index", e.topic));
            }
            if let Err(err) = e.validate() {
                problems.push(format!("entity {id}: {err}"));
            }
        }
        for r in self.relations.values() {
            let from = self.entities.get(&r.from_id);
            let to = self.entities.get(&r.to_id);
            match (from, to) {
                (Some(f), Some(t)) => {
                    if let Err(v) = validate_relation_topics(r.kind, f.topic, t.topic, r.from_id, r.to_id) {
                        problems.push(format!("relation {}: {v}", r.id.0));
                    }
                }
                _ => problems.push(format!(
                    "relation {} {} {}->{} dangles",
                    r.id.0, r.kind, r.from_id, r.to_id
                )),
            }
        }
        if self.relation_keys.len() != self.relations.len() {
            problems.push("relation key index out of step with relations".into());
        }
        for child in self.parent.keys() {
            let mut seen = std::collections::HashSet::new();
            let mut cursor = Some(*child);
            while let Some(p) = cursor {
                if !seen.insert(p) {
                    problems.push(format!("ancestor cycle through {child}"));
                    break;
                }
                cursor = self.parent.get(&p).copied();
            }
        }
        problems
    }

    pub(crate) fn to_snapshot(&self) -> Snapshot {
        let mut entities: Vec<TopicEntity> = Vec::with_capacity(self.entities.len());
        for set in &self.by_topic {
            for (_, id) in set {
                entities.push(self.entities[id].as_ref().clone());
            }
        }
        Snapshot {
            lsn: self.lsn,
            next_relation_id: self.next_relation_id,
            entities,
            relations: self.relations.values().cloned().collect(),
        }
    }

    pub(crate) fn from_snapshot(snap: Snapshot) -> Result<State, StoreError> {
        let mut state = State::default();
        for e in snap.entities {
            state.insert_entity_row(e)?;
        }
        for r in snap.relations {
            // Relation ids may skip values only if the writer skipped them, which it never does.
            state.next_relation_id = r.id.0;
            state.insert_relation_row(r)?;
        }
        state.next_relation_id = snap.next_relation_id;
        state.lsn = snap.lsn;
        Ok(state)
    }
}

#[derive(PartialEq, Serialize, Deserialize)]
pub(crate) struct Snapshot {
    pub lsn: u64,
    pub next_relation_id: u64,
    pub entities: Vec<TopicEntity>,
    pub relations: Vec<Relation>,
}

/// Turns documents into WAL entries starting at `first_lsn`, assigning relation
/// ids from `next_relation_id`. Relations listed by more than one document of
/// the batch are written once.
pub(crate) fn batch_entries(
    docs: &[EntityDocument],
    first_lsn: u64,
    mut next_relation_id: u64,
    now: Timestamp,
) -> Vec<WalEntry> {
    let mut out = Vec::new();
    let mut lsn = first_lsn;
    let mut push = |op, payload: String| {
        out.push(WalEntry::new(lsn, op, payload));
        lsn += 1;
    };
    for doc in docs {
        let e = &doc.entity;
        let row = EntityRow {
            id: e.id,
            topic: e.topic,
            name: e.name.clone(),
            created_at: e.created_at,
        };
        push(WalOp::InsertEntity, serde_json::to_string(&row).unwrap());
        for block in &e.attributes {
            let row = AttributeRow {
                entity_id: e.id,
                block: block.clone(),
            };
            push(WalOp::InsertAttribute, serde_json::to_string(&row).unwrap());
        }
    }
    let mut seen = std::collections::HashSet::new();
    for doc in docs {
        for r in &doc.relations {
            if !seen.insert(*r) {
                continue;
            }
            let rel = Relation {
                id: RelationId(next_relation_id),
                kind: r.kind,
                from_id: r.from_id,
                to_id: r.to_id,
                created_at: now,
            };
            next_relation_id += 1;
            push(WalOp::InsertRelation, serde_json::to_string(&rel).unwrap());
        }
    }
    out
}

pub(crate) fn delete_entry(lsn: u64, id: EntityId) -> WalEntry {
    WalEntry::new(
        lsn,
        WalOp::DeleteEntity,
        serde_json::to_string(&DeleteRow { id }).unwrap(),
    )
}

pub(crate) fn relation_entry(lsn: u64, id: u64, kind: RelationKind, from_id: EntityId, to_id: EntityId) -> WalEntry {
    let rel = Relation {
        id: RelationId(id),
        kind,
        from_id,
        to_id,
        created_at: Timestamp::now(),
    };
    WalEntry::new(lsn, WalOp::InsertRelation, serde_json::to_string(&rel).unwrap())
}
