use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Maximum length in bytes of an entity name.
pub const MAX_NAME_LEN: usize = 256;

/// Maximum length in bytes of an attribute block kind.
pub const MAX_KIND_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("entity name is empty")]
    EmptyName,
    #[error("entity name is {0} bytes, limit is {MAX_NAME_LEN}")]
    NameTooLong(usize),
    #[error("attribute block of kind {0:?} is already mounted")]
    DuplicateKind(String),
    #[error("invalid attribute kind name {0:?}")]
    InvalidKindName(String),
    #[error("invalid attribute field name {0:?}")]
    InvalidFieldName(String),
    #[error("non-finite float in field {0:?}")]
    NonFiniteFloat(String),
    #[error("invalid entity id {0:?}")]
    InvalidId(String),
    #[error("invalid timestamp {0:?}")]
    InvalidTimestamp(String),
    #[error("unknown topic {0:?}")]
    UnknownTopic(String),
}

/// 128-bit entity identifier, printed as 32 lowercase hex digits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct EntityId([u8; 16]);

impl EntityId {
    pub const NIL: EntityId = EntityId([0; 16]);

    pub fn random() -> Self {
        EntityId(rand::random::<[u8; 16]>())
    }

    pub const fn from_bytes(bytes: [u8; 16]) -> Self {
        EntityId(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }

    pub fn is_nil(&self) -> bool {
        self.0 == [0; 16]
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EntityId({self})")
    }
}

impl FromStr for EntityId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 32 {
            return Err(ModelError::InvalidId(s.to_string()));
        }
        let mut out = [0u8; 16];
        hex::decode_to_slice(s, &mut out).map_err(|_| ModelError::InvalidId(s.to_string()))?;
        Ok(EntityId(out))
    }
}

impl Serialize for EntityId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for EntityId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// UTC instant with microsecond resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn now() -> Self {
        Timestamp(Utc::now().timestamp_micros())
    }

    pub fn micros(&self) -> i64 {
        self.0
    }

    pub fn to_rfc3339(&self) -> String {
        match DateTime::<Utc>::from_timestamp_micros(self.0) {
            Some(dt) => dt.to_rfc3339_opts(SecondsFormat::Micros, true),
            None => DateTime::<Utc>::UNIX_EPOCH.to_rfc3339_opts(SecondsFormat::Micros, true),
        }
    }

    pub fn parse_rfc3339(s: &str) -> Result<Self, ModelError> {
        DateTime::parse_from_rfc3339(s)
            .map(|dt| Timestamp(dt.with_timezone(&Utc).timestamp_micros()))
            .map_err(|_| ModelError::InvalidTimestamp(s.to_string()))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_rfc3339())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        Timestamp::parse_rfc3339(&s).map_err(de::Error::custom)
    }
}

/// The five topics. No other topic is representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TopicKind {
    Process,
    Data,
    Person,
    Device,
    Paradigm,
}

impl TopicKind {
    pub const ALL: [TopicKind; 5] = [
        TopicKind::Process,
        TopicKind::Data,
        TopicKind::Person,
        TopicKind::Device,
        TopicKind::Paradigm,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TopicKind::Process => "Process",
            TopicKind::Data => "Data",
            TopicKind::Person => "Person",
            TopicKind::Device => "Device",
            TopicKind::Paradigm => "Paradigm",
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for TopicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TopicKind {
    type Err = ModelError;

    /// Case-insensitive, so URL paths may use `data` or `Data`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TopicKind::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ModelError::UnknownTopic(s.to_string()))
    }
}

/// A scalar attribute value. Nested maps are deliberately not representable;
/// bulky payloads live in unstructured storage and are referenced via `BytesRef`.
#[derive(Debug, Clone, PartialEq)]
pub enum TypedValue {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    BytesRef(String),
}

impl TypedValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            TypedValue::Int(_) => "int",
            TypedValue::Float(_) => "float",
            TypedValue::Str(_) => "string",
            TypedValue::Bool(_) => "bool",
            TypedValue::BytesRef(_) => "bytes_ref",
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            TypedValue::Int(v) => Some(*v as f64),
            TypedValue::Float(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<i64> for TypedValue {
    fn from(v: i64) -> Self {
        TypedValue::Int(v)
    }
}

impl From<f64> for TypedValue {
    fn from(v: f64) -> Self {
        TypedValue::Float(v)
    }
}

impl From<bool> for TypedValue {
    fn from(v: bool) -> Self {
        TypedValue::Bool(v)
    }
}

impl From<&str> for TypedValue {
    fn from(v: &str) -> Self {
        TypedValue::Str(v.to_string())
    }
}

impl From<String> for TypedValue {
    fn from(v: String) -> Self {
        TypedValue::Str(v)
    }
}

// Integers serialize as bare decimals and floats always carry a fraction or
// exponent, so the JSON form round-trips the int/float distinction.
impl Serialize for TypedValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            TypedValue::Int(v) => serializer.serialize_i64(*v),
            TypedValue::Float(v) => serializer.serialize_f64(*v),
            TypedValue::Str(v) => serializer.serialize_str(v),
            TypedValue::Bool(v) => serializer.serialize_bool(*v),
            TypedValue::BytesRef(v) => {
                let mut map = serializer.serialize_map(Some(1))?;
                map.serialize_entry("bytes_ref", v)?;
                map.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for TypedValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ValueVisitor;

        impl<'de> Visitor<'de> for ValueVisitor {
            type Value = TypedValue;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an int, float, string, bool or {\"bytes_ref\": ...}")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<TypedValue, E> {
                Ok(TypedValue::Int(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<TypedValue, E> {
                i64::try_from(v)
                    .map(TypedValue::Int)
                    .map_err(|_| E::custom("integer out of int64 range"))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<TypedValue, E> {
                Ok(TypedValue::Float(v))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<TypedValue, E> {
                Ok(TypedValue::Str(v.to_string()))
            }

            fn visit_string<E: de::Error>(self, v: String) -> Result<TypedValue, E> {
                Ok(TypedValue::Str(v))
            }

            fn visit_bool<E: de::Error>(self, v: bool) -> Result<TypedValue, E> {
                Ok(TypedValue::Bool(v))
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<TypedValue, A::Error> {
                let key: Option<String> = map.next_key()?;
                match key.as_deref() {
                    Some("bytes_ref") => {
                        let v: String = map.next_value()?;
                        if map.next_key::<String>()?.is_some() {
                            return Err(de::Error::custom("bytes_ref object has extra keys"));
                        }
                        Ok(TypedValue::BytesRef(v))
                    }
                    _ => Err(de::Error::custom("nested objects are not attribute values")),
                }
            }
        }

        deserializer.deserialize_any(ValueVisitor)
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    s.len() <= MAX_KIND_LEN && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// A typed attribute class mounted onto an entity, e.g. `EEG` or `DataFile`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeBlock {
    pub kind: String,
    pub fields: BTreeMap<String, TypedValue>,
}

impl AttributeBlock {
    pub fn new(kind: impl Into<String>) -> Result<Self, ModelError> {
        let kind = kind.into();
        if !is_identifier(&kind) {
            return Err(ModelError::InvalidKindName(kind));
        }
        Ok(AttributeBlock {
            kind,
            fields: BTreeMap::new(),
        })
    }

    /// Builder-style field setter. Invalid names or values are caught by
    /// [`AttributeBlock::validate`] at mount time.
    pub fn with(mut self, field: impl Into<String>, value: impl Into<TypedValue>) -> Self {
        self.fields.insert(field.into(), value.into());
        self
    }

    pub fn get(&self, field: &str) -> Option<&TypedValue> {
        self.fields.get(field)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !is_identifier(&self.kind) {
            return Err(ModelError::InvalidKindName(self.kind.clone()));
        }
        for (name, value) in &self.fields {
            if !is_identifier(name) {
                return Err(ModelError::InvalidFieldName(name.clone()));
            }
            if let TypedValue::Float(f) = value {
                if !f.is_finite() {
                    return Err(ModelError::NonFiniteFloat(name.clone()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicEntity {
    pub id: EntityId,
    pub topic: TopicKind,
    pub name: String,
    pub created_at: Timestamp,
    pub attributes: Vec<AttributeBlock>,
}

pub(crate) fn validate_name(name: &str) -> Result<(), ModelError> {
    if name.is_empty() {
        return Err(ModelError::EmptyName);
    }
    if name.len() > MAX_NAME_LEN {
        return Err(ModelError::NameTooLong(name.len()));
    }
    Ok(())
}

/// Creates an entity with a fresh random id and no attributes.
pub fn new_entity(topic: TopicKind, name: &str) -> Result<TopicEntity, ModelError> {
    validate_name(name)?;
    Ok(TopicEntity {
        id: EntityId::random(),
        topic,
        name: name.to_string(),
        created_at: Timestamp::now(),
        attributes: Vec::new(),
    })
}

/// Mounts `block` after the existing blocks. Rejects a second block of the same kind.
pub fn mount_attribute(mut entity: TopicEntity, block: AttributeBlock) -> Result<TopicEntity, ModelError> {
    entity.mount(block)?;
    Ok(entity)
}

impl TopicEntity {
    /// Entity with caller-chosen identity, used by replay paths and fixtures.
    pub fn with_id(id: EntityId, topic: TopicKind, name: &str, created_at: Timestamp) -> Result<Self, ModelError> {
        validate_name(name)?;
        if id.is_nil() {
            return Err(ModelError::InvalidId(id.to_string()));
        }
        Ok(TopicEntity {
            id,
            topic,
            name: name.to_string(),
            created_at,
            attributes: Vec::new(),
        })
    }

    pub fn mount(&mut self, block: AttributeBlock) -> Result<(), ModelError> {
        block.validate()?;
        if self.block(&block.kind).is_some() {
            return Err(ModelError::DuplicateKind(block.kind));
        }
        self.attributes.push(block);
        Ok(())
    }

    pub fn block(&self, kind: &str) -> Option<&AttributeBlock> {
        self.attributes.iter().find(|b| b.kind == kind)
    }

    pub fn attribute(&self, kind: &str, field: &str) -> Option<&TypedValue> {
        self.block(kind).and_then(|b| b.get(field))
    }

    /// Checks every invariant an entity must hold before it is stored.
    pub fn validate(&self) -> Result<(), ModelError> {
        validate_name(&self.name)?;
        if self.id.is_nil() {
            return Err(ModelError::InvalidId(self.id.to_string()));
        }
        for (i, block) in self.attributes.iter().enumerate() {
            block.validate()?;
            if self.attributes[..i].iter().any(|b| b.kind == block.kind) {
                return Err(ModelError::DuplicateKind(block.kind.clone()));
            }
        }
        Ok(())
    }
}
