//! Read-only operations over one committed [`State`].

use serde::{Deserialize, Serialize};

use super::predicate::Compiled;
use super::state::State;
use super::StoreError;
use crate::domain::{EntityId, RelationKind, TopicKind};

pub const MAX_PAGE_SIZE: usize = 1000;

/// Which end of the relation the anchors occupy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    From,
    To,
}

impl Direction {
    /// `(anchor topic, result topic)` for `kind` traversed in this direction.
    pub fn topics(self, kind: RelationKind) -> (TopicKind, TopicKind) {
        let (from, to) = kind.endpoints();
        match self {
            Direction::From => (from, to),
            Direction::To => (to, from),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Page {
    pub total_count: usize,
    pub items: Vec<EntityId>,
}

pub fn check_page_size(page_size: usize) -> Result<(), StoreError> {
    if (1..=MAX_PAGE_SIZE).contains(&page_size) {
        Ok(())
    } else {
        Err(StoreError::PageSizeOutOfRange(page_size))
    }
}

/// Slices an already ordered id list.
pub fn paginate(ids: Vec<EntityId>, page: usize, page_size: usize) -> Result<Page, StoreError> {
    check_page_size(page_size)?;
    let total_count = ids.len();
    let start = page.saturating_mul(page_size).min(total_count);
    let end = start.saturating_add(page_size).min(total_count);
    Ok(Page {
        total_count,
        items: ids[start..end].to_vec(),
    })
}

pub fn browse(state: &State, topic: TopicKind, page: usize, page_size: usize) -> Result<Page, StoreError> {
    check_page_size(page_size)?;
    let total_count = state.topic_count(topic);
    let items = state
        .topic_ids(topic)
        .skip(page.saturating_mul(page_size))
        .take(page_size)
        .collect();
    Ok(Page { total_count, items })
}

/// Every entity of `topic` matching `pred`, in `(created_at, id)` order.
pub fn filter(state: &State, topic: TopicKind, pred: &Compiled) -> Vec<EntityId> {
    if *pred == Compiled::Const(true) {
        return state.topic_ids(topic).collect();
    }
    state
        .topic_ids(topic)
        .filter(|id| state.entity(id).is_some_and(|e| pred.matches(e)))
        .collect()
}

pub fn conditional(
    state: &State,
    topic: TopicKind,
    pred: &Compiled,
    page: usize,
    page_size: usize,
) -> Result<Page, StoreError> {
    check_page_size(page_size)?;
    paginate(filter(state, topic, pred), page, page_size)
}

pub fn check_hop(anchor_topic: TopicKind, kind: RelationKind, direction: Direction) -> Result<TopicKind, StoreError> {
    let (want, result) = direction.topics(kind);
    if want != anchor_topic {
        return Err(StoreError::RelationTopicMismatch(format!(
            "{kind} traversed {direction:?} anchors on {want}, not {anchor_topic}"
        )));
    }
    Ok(result)
}

/// One hop: deduplicated neighbors of `anchors`, ordered by `(created_at, id)`.
pub fn hop(state: &State, anchors: &[EntityId], kind: RelationKind, direction: Direction) -> Vec<EntityId> {
    let anchor_is_from = direction == Direction::From;
    let mut keyed: Vec<_> = anchors
        .iter()
        .flat_map(|a| state.neighbors(a, kind, anchor_is_from))
        .filter_map(|id| state.entity(&id).map(|e| (e.created_at, id)))
        .collect();
    keyed.sort_unstable();
    keyed.dedup();
    keyed.into_iter().map(|(_, id)| id).collect()
}

pub fn joint(
    state: &State,
    anchor_topic: TopicKind,
    anchor_pred: &Compiled,
    kind: RelationKind,
    direction: Direction,
) -> Result<Vec<EntityId>, StoreError> {
    check_hop(anchor_topic, kind, direction)?;
    let anchors = filter(state, anchor_topic, anchor_pred);
    Ok(hop(state, &anchors, kind, direction))
}
