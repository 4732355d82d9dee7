//! Seeded entity populations for load tests.

use std::io::Write;
use std::path::Path;

use nstore_core::domain::{AttributeBlock, EntityDocument, EntityId, RelationKind, Timestamp, TopicEntity, TopicKind};
use nstore_core::wire::{Frame, FrameType};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{Producer, ProducerError};

const BASE_TS: i64 = 1_700_000_000_000_000;

fn pick_topic(rng: &mut ChaCha8Rng) -> TopicKind {
    match rng.gen_range(0..10) {
        0..=3 => TopicKind::Data,
        4 | 5 => TopicKind::Process,
        6 | 7 => TopicKind::Person,
        8 => TopicKind::Device,
        _ => TopicKind::Paradigm,
    }
}

fn block(kind: &str) -> AttributeBlock {
    AttributeBlock::new(kind).expect("static kind name")
}

/// `n` documents in insertion order; relations only point at earlier
/// documents, so the list can be replayed front to back.
pub fn generate(n: usize, seed: u64) -> Vec<EntityDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_topic: [Vec<EntityId>; 5] = Default::default();
    let mut docs = Vec::with_capacity(n);
    for i in 0..n {
        // The first five cover every topic so relations always have targets.
        let topic = if i < 5 { TopicKind::ALL[i] } else { pick_topic(&mut rng) };
        let id = EntityId::from_bytes(rng.gen());
        let ts = Timestamp(BASE_TS + i as i64 * 1000);
        let name = match topic {
            TopicKind::Person => format!("S{:02}", rng.gen_range(1..=40)),
            TopicKind::Data => format!("run{}_eeg", rng.gen_range(0..50)),
            TopicKind::Process => format!("session_{}", rng.gen_range(0..200)),
            TopicKind::Device => format!("amp{}", rng.gen_range(0..8)),
            TopicKind::Paradigm => ["p300", "ssvep", "mi", "erp"][rng.gen_range(0..4)].to_string(),
        };
        let mut e = TopicEntity::with_id(id, topic, &name, ts).expect("valid fixture entity");
        let mounted = match topic {
            TopicKind::Data => e
                .mount(
                    block("EEG")
                        .with("sampling_rate", [250i64, 500, 1000, 2000][rng.gen_range(0..4)])
                        .with("channels", [32i64, 64, 65][rng.gen_range(0..3)]),
                )
                .and_then(|_| {
                    e.mount(
                        block("DataFile")
                            .with("path", format!("runs/{i}.bdf"))
                            .with("duration_s", rng.gen_range(10..600) as f64),
                    )
                }),
            TopicKind::Person => e.mount(
                block("SubjectProfile")
                    .with("age", rng.gen_range(18i64..70))
                    .with("handedness", ["left", "right"][rng.gen_range(0..2)]),
            ),
            TopicKind::Process => e.mount(block("ResultScore").with("accuracy", rng.gen_range(0..=100) as f64 / 100.0)),
            TopicKind::Device => e.mount(block("Amplifier").with("channels", [32i64, 64, 65][rng.gen_range(0..3)])),
            TopicKind::Paradigm => e.mount(block("Protocol").with("trials", rng.gen_range(20i64..400))),
        };
        mounted.expect("fixture blocks are distinct");
        let mut doc = EntityDocument::new(e);
        let pick = |rng: &mut ChaCha8Rng, t: TopicKind, by: &[Vec<EntityId>; 5]| by[t.index()].choose(rng).copied();
        match topic {
            TopicKind::Data => {
                for (kind, t) in [
                    (RelationKind::ProcessData, TopicKind::Process),
                    (RelationKind::PersonData, TopicKind::Person),
                    (RelationKind::DeviceData, TopicKind::Device),
                ] {
                    if let Some(from) = pick(&mut rng, t, &by_topic) {
                        doc = doc.relate(kind, from, id);
                    }
                }
            }
            TopicKind::Process => {
                if rng.gen_bool(0.3) {
                    if let Some(parent) = pick(&mut rng, TopicKind::Process, &by_topic) {
                        doc = doc.relate(RelationKind::ProcessParent, parent, id);
                    }
                }
            }
            TopicKind::Person | TopicKind::Device | TopicKind::Paradigm => {
                let kind = match topic {
                    TopicKind::Person => RelationKind::ProcessPerson,
                    TopicKind::Device => RelationKind::ProcessDevice,
                    _ => RelationKind::ProcessParadigm,
                };
                if let Some(p) = pick(&mut rng, TopicKind::Process, &by_topic) {
                    doc = doc.relate(kind, p, id);
                }
            }
        }
        by_topic[topic.index()].push(id);
        docs.push(doc);
    }
    docs
}

pub fn entity_frame(doc: &EntityDocument) -> Frame {
    Frame::new(FrameType::Entity, 0, doc.to_bytes())
}

/// Publishes every document through the ingest port, pipelined.
pub fn load(ingest_addr: &str, docs: &[EntityDocument]) -> Result<usize, ProducerError> {
    let mut p = Producer::connect(ingest_addr)?;
    let frames: Vec<Frame> = docs.iter().map(entity_frame).collect();
    Ok(p.publish_all(&frames, 512)?.len())
}

/// One canonical JSON document per line.
pub fn write_jsonl(path: &Path, docs: &[EntityDocument]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for d in docs {
        f.write_all(&d.to_bytes())?;
        f.write_all(b"\n")?;
    }
    f.flush()
}
