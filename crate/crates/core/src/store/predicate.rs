//! Predicate trees for conditional queries.
//!
//! JSON forms:
//!
//! ```json
//! {"field": "EEG.sampling_rate", "op": "eq", "value": 1000}
//! {"and": [ ... ]}   {"or": [ ... ]}   {"not": { ... }}   {"const": true}
//! ```
//!
//! A leaf names a core column (`id`, `name`, `created_at`) or an attribute
//! field as `Kind.field`. Attribute fields are schemaless: a missing field or a
//! stored value of another type makes the leaf false.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::StoreError;
use crate::domain::{is_identifier, Timestamp, TopicEntity, TypedValue};

pub const MAX_DEPTH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    Contains,
    In,
}

impl Op {
    fn is_ordering(self) -> bool {
        matches!(self, Op::Lt | Op::Le | Op::Gt | Op::Ge)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Predicate {
    Const {
        #[serde(rename = "const")]
        value: bool,
    },
    Leaf {
        field: String,
        op: Op,
        value: Value,
    },
    And {
        and: Vec<Predicate>,
    },
    Or {
        or: Vec<Predicate>,
    },
    Not {
        not: Box<Predicate>,
    },
}

impl Predicate {
    pub const TRUE: Predicate = Predicate::Const { value: true };

    pub fn leaf(field: &str, op: Op, value: impl Into<Value>) -> Self {
        Predicate::Leaf {
            field: field.to_string(),
            op,
            value: value.into(),
        }
    }

    pub fn and(children: Vec<Predicate>) -> Self {
        Predicate::And { and: children }
    }

    pub fn or(children: Vec<Predicate>) -> Self {
        Predicate::Or { or: children }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(child: Predicate) -> Self {
        Predicate::Not { not: Box::new(child) }
    }

    pub fn depth(&self) -> usize {
        match self {
            Predicate::Const { .. } | Predicate::Leaf { .. } => 1,
            Predicate::And { and: c } | Predicate::Or { or: c } => {
                1 + c.iter().map(Predicate::depth).max().unwrap_or(0)
            }
            Predicate::Not { not } => 1 + not.depth(),
        }
    }

    /// Validates fields, operators and operand types.
    pub fn compile(&self) -> Result<Compiled, StoreError> {
        if self.depth() > MAX_DEPTH {
            return Err(StoreError::PredicateTooDeep(self.depth()));
        }
        self.compile_inner()
    }

    fn compile_inner(&self) -> Result<Compiled, StoreError> {
        Ok(match self {
            Predicate::Const { value } => Compiled::Const(*value),
            Predicate::And { and } => {
                Compiled::And(and.iter().map(Predicate::compile_inner).collect::<Result<_, _>>()?)
            }
            Predicate::Or { or } => Compiled::Or(or.iter().map(Predicate::compile_inner).collect::<Result<_, _>>()?),
            Predicate::Not { not } => Compiled::Not(Box::new(not.compile_inner()?)),
            Predicate::Leaf { field, op, value } => compile_leaf(field, *op, value)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Id,
    Name,
    CreatedAt,
    Attribute { kind: String, field: String },
}

impl Field {
    pub fn parse(s: &str) -> Result<Field, StoreError> {
        match s {
            "id" => Ok(Field::Id),
            "name" => Ok(Field::Name),
            "created_at" => Ok(Field::CreatedAt),
            _ => match s.split_once('.') {
                Some((kind, field)) if is_identifier(kind) && is_identifier(field) => Ok(Field::Attribute {
                    kind: kind.to_string(),
                    field: field.to_string(),
                }),
                _ => Err(StoreError::UnknownField(s.to_string())),
            },
        }
    }

    fn value_of(&self, e: &TopicEntity) -> Option<TypedValue> {
        match self {
            Field::Id => Some(TypedValue::Str(e.id.to_string())),
            Field::Name => Some(TypedValue::Str(e.name.clone())),
            Field::CreatedAt => Some(TypedValue::Int(e.created_at.micros())),
            Field::Attribute { kind, field } => e.attribute(kind, field).cloned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    One(TypedValue),
    List(Vec<TypedValue>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Compiled {
    Const(bool),
    Leaf { field: Field, op: Op, operand: Operand },
    And(Vec<Compiled>),
    Or(Vec<Compiled>),
    Not(Box<Compiled>),
}

fn mismatch(field: &str, op: Op, why: &str) -> StoreError {
    StoreError::TypeMismatch(format!("{field} {op:?}: {why}"))
}

fn scalar(field: &str, op: Op, v: &Value) -> Result<TypedValue, StoreError> {
    if v.is_array() || v.is_null() {
        return Err(mismatch(field, op, "expected a scalar value"));
    }
    serde_json::from_value(v.clone()).map_err(|e| mismatch(field, op, &e.to_string()))
}

fn compile_leaf(name: &str, op: Op, value: &Value) -> Result<Compiled, StoreError> {
    let field = Field::parse(name)?;
    let values: Vec<TypedValue> = if op == Op::In {
        let Some(items) = value.as_array() else {
            return Err(mismatch(name, op, "`in` takes a list"));
        };
        items.iter().map(|v| scalar(name, op, v)).collect::<Result<_, _>>()?
    } else {
        vec![scalar(name, op, value)?]
    };
    let values = values
        .into_iter()
        .map(|v| check_operand(&field, name, op, v))
        .collect::<Result<Vec<_>, _>>()?;
    let operand = if op == Op::In {
        Operand::List(values)
    } else {
        Operand::One(values.into_iter().next().unwrap())
    };
    Ok(Compiled::Leaf { field, op, operand })
}

fn check_operand(field: &Field, name: &str, op: Op, v: TypedValue) -> Result<TypedValue, StoreError> {
    match field {
        Field::Id | Field::Name => match v {
            TypedValue::Str(_) => Ok(v),
            other => Err(mismatch(
                name,
                op,
                &format!("{} column compared with {}", name, other.type_name()),
            )),
        },
        Field::CreatedAt => {
            if op == Op::Contains {
                return Err(mismatch(name, op, "contains needs a string column"));
            }
            match v {
                TypedValue::Int(_) => Ok(v),
                TypedValue::Str(s) => Timestamp::parse_rfc3339(&s)
                    .map(|t| TypedValue::Int(t.micros()))
                    .map_err(|e| mismatch(name, op, &e.to_string())),
                other => Err(mismatch(
                    name,
                    op,
                    &format!("timestamp compared with {}", other.type_name()),
                )),
            }
        }
        Field::Attribute { .. } => {
            if op == Op::Contains && !matches!(v, TypedValue::Str(_)) {
                return Err(mismatch(name, op, "contains takes a string"));
            }
            if op.is_ordering() && matches!(v, TypedValue::Bool(_) | TypedValue::BytesRef(_)) {
                return Err(mismatch(name, op, &format!("{} values are unordered", v.type_name())));
            }
            Ok(v)
        }
    }
}

/// Orders two values of compatible types; `None` when the types do not compare.
pub fn compare(a: &TypedValue, b: &TypedValue) -> Option<Ordering> {
    use TypedValue::*;
    match (a, b) {
        (Int(x), Int(y)) => Some(x.cmp(y)),
        (Int(_) | Float(_), Int(_) | Float(_)) => a.as_f64()?.partial_cmp(&b.as_f64()?),
        (Str(x), Str(y)) => Some(x.cmp(y)),
        (Bool(x), Bool(y)) => Some(x.cmp(y)),
        (BytesRef(x), BytesRef(y)) => Some(x.cmp(y)),
        _ => None,
    }
}

fn eval_leaf(actual: Option<TypedValue>, op: Op, operand: &Operand) -> bool {
    let Some(actual) = actual else {
        return false;
    };
    match operand {
        Operand::List(items) => items.iter().any(|v| compare(&actual, v) == Some(Ordering::Equal)),
        Operand::One(v) => {
            if op == Op::Contains {
                return match (&actual, v) {
                    (TypedValue::Str(a), TypedValue::Str(b)) => a.contains(b.as_str()),
                    _ => false,
                };
            }
            let Some(ord) = compare(&actual, v) else {
                return false;
            };
            match op {
                Op::Eq => ord == Ordering::Equal,
                Op::Neq => ord != Ordering::Equal,
                // Bools and bytes refs have no order even when types agree.
                _ if matches!(actual, TypedValue::Bool(_) | TypedValue::BytesRef(_)) => false,
                Op::Lt => ord == Ordering::Less,
                Op::Le => ord != Ordering::Greater,
                Op::Gt => ord == Ordering::Greater,
                Op::Ge => ord != Ordering::Less,
                Op::Contains | Op::In => unreachable!(),
            }
        }
    }
}

impl Compiled {
    pub fn matches(&self, e: &TopicEntity) -> bool {
        match self {
            Compiled::Const(b) => *b,
            Compiled::Leaf { field, op, operand } => eval_leaf(field.value_of(e), *op, operand),
            Compiled::And(c) => c.iter().all(|p| p.matches(e)),
            Compiled::Or(c) => c.iter().any(|p| p.matches(e)),
            Compiled::Not(p) => !p.matches(e),
        }
    }
}
