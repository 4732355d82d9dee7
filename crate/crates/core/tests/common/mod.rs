#![allow(dead_code)]

pub mod bdf;
pub mod replay;

use std::cmp::Ordering;

use nstore_core::domain::{
    AttributeBlock, EntityDocument, EntityId, RelationKind, Timestamp, TopicEntity, TopicKind, TypedValue,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

/// Small seeded population in dependency order (relations only point backwards).
pub fn fixture(n: usize, seed: u64) -> Vec<EntityDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs: Vec<EntityDocument> = Vec::with_capacity(n);
    let mut by_topic: [Vec<EntityId>; 5] = Default::default();
    let mut has_parent = std::collections::HashSet::new();
    for i in 0..n {
        let roll = rng.gen_range(0..100);
        let topic = match roll {
            0..=39 => TopicKind::Data,
            40..=59 => TopicKind::Process,
            60..=79 => TopicKind::Person,
            80..=89 => TopicKind::Device,
            _ => TopicKind::Paradigm,
        };
        let mut id = [0u8; 16];
        rng.fill(&mut id);
        let id = EntityId::from_bytes(id);
        // Coarse timestamps so ties on created_at exercise the id tie-break.
        let ts = Timestamp(1_700_000_000_000_000 + rng.gen_range(0..200) * 1_000_000);
        let name = match topic {
            TopicKind::Person if i % 7 == 0 => "S01".to_string(),
            TopicKind::Person => format!("S{:02}", rng.gen_range(2..60)),
            TopicKind::Data => format!("run{}_eeg", rng.gen_range(0..20)),
            TopicKind::Process => format!("session_{}", rng.gen_range(0..50)),
            TopicKind::Device => format!("amp{}", rng.gen_range(0..5)),
            TopicKind::Paradigm => (["p300", "ssvep", "mi"][rng.gen_range(0..3)]).to_string(),
        };
        let mut e = TopicEntity::with_id(id, topic, &name, ts).unwrap();
        match topic {
            TopicKind::Data => {
                if rng.gen_bool(0.8) {
                    e.mount(
                        AttributeBlock::new("EEG")
                            .unwrap()
                            .with("sampling_rate", [250i64, 500, 1000, 2000][rng.gen_range(0..4)])
                            .with("channels", [32i64, 64, 65][rng.gen_range(0..3)]),
                    )
                    .unwrap();
                }
                if rng.gen_bool(0.5) {
                    e.mount(
                        AttributeBlock::new("DataFile")
                            .unwrap()
                            .with("path", format!("runs/{}.bdf", rng.gen_range(0..100)))
                            .with("gain", rng.gen_range(0..8) as f64 * 0.25)
                            .with("verified", rng.gen_bool(0.5))
                            .with("raw", TypedValue::BytesRef(format!("blob://{i}"))),
                    )
                    .unwrap();
                }
            }
            TopicKind::Person => {
                e.mount(
                    AttributeBlock::new("SubjectProfile")
                        .unwrap()
                        .with("age", rng.gen_range(18i64..70))
                        .with("handedness", ["left", "right"][rng.gen_range(0..2)]),
                )
                .unwrap();
            }
            TopicKind::Process if rng.gen_bool(0.5) => {
                e.mount(
                    AttributeBlock::new("ResultScore")
                        .unwrap()
                        .with("accuracy", rng.gen_range(0..100) as f64 / 100.0),
                )
                .unwrap();
            }
            _ => {}
        }
        let mut doc = EntityDocument::new(e);
        let pick = |rng: &mut ChaCha8Rng, t: TopicKind, by: &[Vec<EntityId>; 5]| by[t.index()].choose(rng).copied();
        match topic {
            TopicKind::Data => {
                for (kind, t) in [
                    (RelationKind::ProcessData, TopicKind::Process),
                    (RelationKind::PersonData, TopicKind::Person),
                    (RelationKind::DeviceData, TopicKind::Device),
                ] {
                    for _ in 0..rng.gen_range(0..3) {
                        if let Some(from) = pick(&mut rng, t, &by_topic) {
                            if !doc.relations.iter().any(|r| r.kind == kind && r.from_id == from) {
                                doc = doc.relate(kind, from, id);
                            }
                        }
                    }
                }
            }
            TopicKind::Process => {
                if rng.gen_bool(0.5) {
                    if let Some(parent) = pick(&mut rng, TopicKind::Process, &by_topic) {
                        if has_parent.insert(id) {
                            doc = doc.relate(RelationKind::ProcessParent, parent, id);
                        }
                    }
                }
            }
            TopicKind::Person => {
                if let Some(p) = pick(&mut rng, TopicKind::Process, &by_topic) {
                    doc = doc.relate(RelationKind::ProcessPerson, p, id);
                }
            }
            TopicKind::Device => {
                if let Some(p) = pick(&mut rng, TopicKind::Process, &by_topic) {
                    doc = doc.relate(RelationKind::ProcessDevice, p, id);
                }
            }
            TopicKind::Paradigm => {
                if let Some(p) = pick(&mut rng, TopicKind::Process, &by_topic) {
                    doc = doc.relate(RelationKind::ProcessParadigm, p, id);
                }
            }
        }
        by_topic[topic.index()].push(id);
        docs.push(doc);
    }
    docs
}

/// Random predicate in JSON form, at most `depth` levels deep.
pub fn random_predicate(rng: &mut ChaCha8Rng, topic: TopicKind, ids: &[EntityId], depth: usize) -> Value {
    if depth > 1 && rng.gen_bool(0.45) {
        return match rng.gen_range(0..3) {
            0 => {
                json!({"and": (0..rng.gen_range(0..4)).map(|_| random_predicate(rng, topic, ids, depth - 1)).collect::<Vec<_>>()})
            }
            1 => {
                json!({"or": (0..rng.gen_range(0..4)).map(|_| random_predicate(rng, topic, ids, depth - 1)).collect::<Vec<_>>()})
            }
            _ => json!({"not": random_predicate(rng, topic, ids, depth - 1)}),
        };
    }
    let ops = ["eq", "neq", "lt", "le", "gt", "ge"];
    let op = ops[rng.gen_range(0..ops.len())];
    match rng.gen_range(0..13) {
        0 => json!({"const": rng.gen_bool(0.5)}),
        1 => {
            json!({"field": "name", "op": "contains", "value": (["run", "S0", "1", "session_1", "p3"][rng.gen_range(0..5)])})
        }
        2 => json!({"field": "name", "op": "eq", "value": (["S01", "run3_eeg", "mi"][rng.gen_range(0..3)])}),
        3 => {
            let id = ids.choose(rng).map(|i| i.to_string()).unwrap_or_default();
            json!({"field": "id", "op": (["eq", "neq", "lt"][rng.gen_range(0..3)]), "value": id})
        }
        4 => {
            json!({"field": "created_at", "op": op, "value": 1_700_000_000_000_000i64 + rng.gen_range(0..200) * 1_000_000})
        }
        5 => json!({"field": "EEG.sampling_rate", "op": op, "value": ([250, 500, 1000, 2000][rng.gen_range(0..4)])}),
        6 => {
            json!({"field": "EEG.channels", "op": "in", "value": ([json!([64, 65]), json!([32]), json!([])][rng.gen_range(0..3)])})
        }
        7 => json!({"field": "EEG.channels", "op": op, "value": 64.5}),
        8 => {
            json!({"field": "DataFile.gain", "op": op, "value": ([json!(0), json!(1), json!(0.5)][rng.gen_range(0..3)])})
        }
        9 => {
            json!({"field": "DataFile.verified", "op": (["eq", "neq"][rng.gen_range(0..2)]), "value": rng.gen_bool(0.5)})
        }
        10 => json!({"field": "SubjectProfile.age", "op": op, "value": rng.gen_range(18..70)}),
        11 => json!({"field": "Missing.field", "op": op, "value": 1}),
        _ => json!({"field": "DataFile.path", "op": "contains", "value": format!("/{}", rng.gen_range(0..10))}),
    }
}

fn actual(e: &TopicEntity, field: &str) -> Option<Value> {
    match field {
        "id" => Some(Value::String(e.id.to_string())),
        "name" => Some(Value::String(e.name.clone())),
        "created_at" => Some(json!(e.created_at.0)),
        _ => {
            let (kind, f) = field.split_once('.')?;
            let v = e.attributes.iter().find(|b| b.kind == kind)?.fields.get(f)?;
            Some(serde_json::to_value(v).unwrap())
        }
    }
}

fn order(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64()?.partial_cmp(&y.as_f64()?),
        (Value::String(x), Value::String(y)) => Some(x.cmp(y)),
        (Value::Bool(x), Value::Bool(y)) => Some(x.cmp(y)),
        (Value::Object(_), Value::Object(_)) => (a == b).then_some(Ordering::Equal),
        _ => None,
    }
}

/// Linear evaluation straight from the JSON form.
pub fn oracle_eval(p: &Value, e: &TopicEntity) -> bool {
    if let Some(b) = p.get("const") {
        return b.as_bool().unwrap();
    }
    if let Some(c) = p.get("and") {
        return c.as_array().unwrap().iter().all(|q| oracle_eval(q, e));
    }
    if let Some(c) = p.get("or") {
        return c.as_array().unwrap().iter().any(|q| oracle_eval(q, e));
    }
    if let Some(q) = p.get("not") {
        return !oracle_eval(q, e);
    }
    let field = p["field"].as_str().unwrap();
    let op = p["op"].as_str().unwrap();
    let value = &p["value"];
    let Some(a) = actual(e, field) else { return false };
    match op {
        "contains" => matches!((&a, value), (Value::String(x), Value::String(y)) if x.contains(y.as_str())),
        "in" => value
            .as_array()
            .unwrap()
            .iter()
            .any(|v| order(&a, v) == Some(Ordering::Equal)),
        _ => {
            let Some(o) = order(&a, value) else { return false };
            let ordered = !matches!(a, Value::Bool(_) | Value::Object(_));
            match op {
                "eq" => o == Ordering::Equal,
                "neq" => o != Ordering::Equal,
                "lt" => ordered && o == Ordering::Less,
                "le" => ordered && o != Ordering::Greater,
                "gt" => ordered && o == Ordering::Greater,
                "ge" => ordered && o != Ordering::Less,
                _ => panic!("op {op}"),
            }
        }
    }
}

/// Sorts entities the way every listing is ordered.
pub fn sorted_ids(mut v: Vec<&TopicEntity>) -> Vec<EntityId> {
    v.sort_by_key(|e| (e.created_at, e.id));
    v.dedup_by_key(|e| e.id);
    v.into_iter().map(|e| e.id).collect()
}

/// Graph oracle: one hop over a plain relation list.
pub fn oracle_hop<'a>(
    docs: &'a [EntityDocument],
    anchors: &[EntityId],
    kind: RelationKind,
    from_side: bool,
) -> Vec<EntityId> {
    let all: Vec<_> = docs.iter().flat_map(|d| d.relations.iter()).collect();
    let mut out = Vec::new();
    for r in all {
        if r.kind != kind {
            continue;
        }
        let (a, b) = if from_side {
            (r.from_id, r.to_id)
        } else {
            (r.to_id, r.from_id)
        };
        if anchors.contains(&a) {
            out.push(docs.iter().find(|d| d.entity.id == b).map(|d| &d.entity).unwrap());
        }
    }
    sorted_ids(out)
}
