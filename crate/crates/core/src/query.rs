//! Query requests and their evaluation against one committed store state.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{EntityDocument, EntityId, RelationKind, TopicKind};
use crate::store::{self, Direction, Page, Predicate, State, StoreError};

pub const MAX_STEPS: usize = 4;
pub const DEFAULT_PAGE_SIZE: usize = 50;

fn default_page_size() -> usize {
    DEFAULT_PAGE_SIZE
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("malformed request: {0}")]
    Malformed(String),
}

impl QueryError {
    pub fn code(&self) -> &'static str {
        match self {
            QueryError::Store(e) => e.code(),
            QueryError::Malformed(_) => "MalformedRequest",
        }
    }
}

/// First stage of a composed pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seed {
    pub topic: TopicKind,
    /// Absent means browse (every entity of the topic).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<Predicate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub relation: RelationKind,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QueryRequest {
    Browse {
        topic: TopicKind,
        #[serde(default)]
        page: usize,
        #[serde(default = "default_page_size")]
        page_size: usize,
    },
    Detail {
        topic: TopicKind,
        id: EntityId,
    },
    Conditional {
        topic: TopicKind,
        predicate: Predicate,
        #[serde(default)]
        page: usize,
        #[serde(default = "default_page_size")]
        page_size: usize,
    },
    /// `topic` is the result topic; anchors are `anchor_topic` entities matching `anchor`.
    Joint {
        topic: TopicKind,
        anchor_topic: TopicKind,
        anchor: Predicate,
        relation: RelationKind,
        direction: Direction,
        #[serde(default)]
        page: usize,
        #[serde(default = "default_page_size")]
        page_size: usize,
    },
    Composed {
        topic: TopicKind,
        seed: Seed,
        steps: Vec<Step>,
        #[serde(default)]
        page: usize,
        #[serde(default = "default_page_size")]
        page_size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub total_count: usize,
    pub items: Vec<EntityDocument>,
    pub as_of_lsn: u64,
    pub elapsed_us: u64,
}

impl QueryResponse {
    /// The response without the timing field, for comparing evaluations.
    pub fn content_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&(self.total_count, &self.items, self.as_of_lsn)).unwrap()
    }
}

/// Ordered result ids of a composed pipeline before pagination.
pub fn composed_ids(state: &State, topic: TopicKind, seed: &Seed, steps: &[Step]) -> Result<Vec<EntityId>, QueryError> {
    if steps.len() > MAX_STEPS {
        return Err(QueryError::Malformed(format!(
            "{} steps exceed the limit of {MAX_STEPS}",
            steps.len()
        )));
    }
    let mut current_topic = seed.topic;
    for s in steps {
        current_topic = store::check_hop(current_topic, s.relation, s.direction)?;
    }
    if current_topic != topic {
        return Err(
            StoreError::RelationTopicMismatch(format!("pipeline yields {current_topic}, requested {topic}")).into(),
        );
    }
    let pred = seed.predicate.clone().unwrap_or(Predicate::TRUE).compile()?;
    let mut ids = store::filter(state, seed.topic, &pred);
    for s in steps {
        ids = store::hop(state, &ids, s.relation, s.direction);
    }
    Ok(ids)
}

/// Evaluates `req` against `state`. Every item comes from the same state, so
/// a response is consistent as of one LSN.
pub fn execute(state: &State, req: &QueryRequest) -> Result<QueryResponse, QueryError> {
    let started = Instant::now();
    let page = match req {
        QueryRequest::Browse { topic, page, page_size } => store::browse(state, *topic, *page, *page_size)?,
        QueryRequest::Detail { topic, id } => match state.entity(id) {
            Some(e) if e.topic == *topic => Page {
                total_count: 1,
                items: vec![*id],
            },
            _ => return Err(StoreError::NotFound(*id).into()),
        },
        QueryRequest::Conditional {
            topic,
            predicate,
            page,
            page_size,
        } => {
            store::check_page_size(*page_size)?;
            store::conditional(state, *topic, &predicate.compile()?, *page, *page_size)?
        }
        QueryRequest::Joint {
            topic,
            anchor_topic,
            anchor,
            relation,
            direction,
            page,
            page_size,
        } => {
            store::check_page_size(*page_size)?;
            let result_topic = store::check_hop(*anchor_topic, *relation, *direction)?;
            if result_topic != *topic {
                return Err(StoreError::RelationTopicMismatch(format!(
                    "{relation} from {anchor_topic} yields {result_topic}, requested {topic}"
                ))
                .into());
            }
            let ids = store::joint(state, *anchor_topic, &anchor.compile()?, *relation, *direction)?;
            store::paginate(ids, *page, *page_size)?
        }
        QueryRequest::Composed {
            topic,
            seed,
            steps,
            page,
            page_size,
        } => {
            store::check_page_size(*page_size)?;
            let ids = composed_ids(state, *topic, seed, steps)?;
            store::paginate(ids, *page, *page_size)?
        }
    };
    let items = page.items.iter().filter_map(|id| state.document(id)).collect();
    Ok(QueryResponse {
        total_count: page.total_count,
        items,
        as_of_lsn: state.lsn(),
        elapsed_us: started.elapsed().as_micros() as u64,
    })
}
