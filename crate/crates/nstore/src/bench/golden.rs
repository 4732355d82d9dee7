//! Reference frames for client implementations in other languages.

use nstore_core::domain::{
    AttributeBlock, EntityDocument, EntityId, RelationKind, Timestamp, TopicEntity, TopicKind, TypedValue,
};
use nstore_core::wire::{Frame, FrameType, SampleMatrix, StreamChunker};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::storage_load::hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityVector {
    pub name: String,
    pub document: Value,
    /// The exact payload bytes, as text.
    pub canonical_json: String,
    pub frame_hex: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkVector {
    pub name: String,
    pub stream_id: String,
    pub max_frames_per_chunk: usize,
    pub channels: u16,
    /// Frame-major samples fed to the chunker.
    pub samples: Vec<f64>,
    pub end_of_stream: bool,
    /// Every frame the chunker emits, in order, ending with the
    /// end-of-stream frame when `end_of_stream` is set.
    pub frames_hex: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenVectors {
    pub format_version: u32,
    pub entities: Vec<EntityVector>,
    pub chunks: Vec<ChunkVector>,
}

fn id(n: u8) -> EntityId {
    let mut b = [0u8; 16];
    b[0] = 0xa0;
    b[15] = n;
    EntityId::from_bytes(b)
}

fn block(kind: &str, fields: &[(&str, TypedValue)]) -> AttributeBlock {
    let mut b = AttributeBlock::new(kind).expect("kind");
    for (k, v) in fields {
        b = b.with(*k, v.clone());
    }
    b
}

fn entity(n: u8, topic: TopicKind, name: &str, blocks: Vec<AttributeBlock>) -> TopicEntity {
    let mut e = TopicEntity::with_id(
        id(n),
        topic,
        name,
        Timestamp(1_700_000_000_000_000 + n as i64 * 1_000_001),
    )
    .expect("valid entity");
    for b in blocks {
        e.mount(b).expect("distinct kinds");
    }
    e
}

fn documents() -> Vec<(String, EntityDocument)> {
    use TopicKind::*;
    use TypedValue::*;
    let mut out: Vec<(String, EntityDocument)> = Vec::new();
    let mut add = |name: &str, doc: EntityDocument| out.push((name.to_string(), doc));

    for (i, t) in TopicKind::ALL.into_iter().enumerate() {
        add(
            &format!("bare_{}", t.as_str().to_lowercase()),
            EntityDocument::new(entity(1 + i as u8, t, "x", vec![])),
        );
    }
    add(
        "data_eeg",
        EntityDocument::new(entity(
            10,
            Data,
            "run1_eeg",
            vec![block("EEG", &[("sampling_rate", Int(1000)), ("channels", Int(65))])],
        )),
    );
    add(
        "data_two_blocks",
        EntityDocument::new(entity(
            11,
            Data,
            "run2_eeg",
            vec![
                block("EEG", &[("sampling_rate", Int(250)), ("channels", Int(32))]),
                block(
                    "DataFile",
                    &[
                        ("path", Str("runs/2.bdf".into())),
                        ("gain", Float(0.25)),
                        ("verified", Bool(true)),
                        ("raw", BytesRef("blob://2".into())),
                    ],
                ),
            ],
        )),
    );
    add(
        "float_forms",
        EntityDocument::new(entity(
            12,
            Process,
            "floats",
            vec![block(
                "ResultScore",
                &[
                    ("whole", Float(2.0)),
                    ("tiny", Float(1e-300)),
                    ("huge", Float(1.5e300)),
                    ("neg_zero", Float(-0.0)),
                    ("third", Float(1.0 / 3.0)),
                ],
            )],
        )),
    );
    add(
        "int_extremes",
        EntityDocument::new(entity(
            13,
            Device,
            "ints",
            vec![block(
                "Amplifier",
                &[("min", Int(i64::MIN)), ("max", Int(i64::MAX)), ("zero", Int(0))],
            )],
        )),
    );
    add(
        "unicode_name",
        EntityDocument::new(entity(14, Person, "Zoë 受試者 \"q\" \\ \n", vec![])),
    );
    add(
        "escaped_strings",
        EntityDocument::new(entity(
            15,
            Paradigm,
            "p300",
            vec![block("Protocol", &[("note", Str("tab\there\u{0001}\u{007f}".into()))])],
        )),
    );
    add(
        "long_name",
        EntityDocument::new(entity(16, Process, &"n".repeat(256), vec![])),
    );
    add(
        "rel_process_data",
        EntityDocument::new(entity(17, Data, "linked", vec![])).relate(RelationKind::ProcessData, id(1), id(17)),
    );
    add(
        "rel_data_three_parents",
        EntityDocument::new(entity(18, Data, "linked3", vec![]))
            .relate(RelationKind::ProcessData, id(1), id(18))
            .relate(RelationKind::PersonData, id(3), id(18))
            .relate(RelationKind::DeviceData, id(4), id(18)),
    );
    add(
        "rel_process_parent",
        EntityDocument::new(entity(19, Process, "child", vec![])).relate(RelationKind::ProcessParent, id(1), id(19)),
    );
    add(
        "rel_process_person",
        EntityDocument::new(entity(
            20,
            Person,
            "S01",
            vec![block("SubjectProfile", &[("age", Int(31))])],
        ))
        .relate(RelationKind::ProcessPerson, id(1), id(20)),
    );
    add(
        "rel_process_device",
        EntityDocument::new(entity(21, Device, "amp0", vec![])).relate(RelationKind::ProcessDevice, id(1), id(21)),
    );
    add(
        "rel_process_paradigm",
        EntityDocument::new(entity(22, Paradigm, "ssvep", vec![])).relate(RelationKind::ProcessParadigm, id(1), id(22)),
    );
    add(
        "rel_outgoing_from_process",
        EntityDocument::new(entity(23, Process, "parent", vec![])).relate(RelationKind::ProcessData, id(23), id(2)),
    );
    add(
        "many_fields",
        EntityDocument::new(entity(
            24,
            Person,
            "fields",
            vec![block(
                "SubjectProfile",
                &[
                    ("z_last", Int(1)),
                    ("a_first", Int(2)),
                    ("m_mid", Str("sorted by name".into())),
                    ("handedness", Str("left".into())),
                ],
            )],
        )),
    );
    add(
        "bytes_ref_only",
        EntityDocument::new(entity(
            25,
            Data,
            "blob",
            vec![block("DataFile", &[("raw", BytesRef("s3://bucket/key".into()))])],
        )),
    );
    add(
        "pre_epoch_timestamp",
        EntityDocument::new(TopicEntity::with_id(id(26), Process, "old", Timestamp(-1_000_000)).expect("valid")),
    );
    add(
        "three_blocks",
        EntityDocument::new(entity(
            27,
            Data,
            "full",
            vec![
                block("EEG", &[("sampling_rate", Float(512.5)), ("channels", Int(8))]),
                block("DataFile", &[("path", Str("a.bdf".into()))]),
                block("Annotation", &[("label", Str("rest".into()))]),
            ],
        )),
    );
    add(
        "bool_fields",
        EntityDocument::new(entity(
            28,
            Process,
            "flags",
            vec![block(
                "ResultScore",
                &[("passed", Bool(false)), ("reviewed", Bool(true))],
            )],
        )),
    );
    add(
        "float_sampling_rate",
        EntityDocument::new(entity(
            29,
            Data,
            "fractional",
            vec![block("EEG", &[("sampling_rate", Float(2048.0)), ("channels", Int(1))])],
        )),
    );
    out
}

fn chunk_cases() -> Vec<(&'static str, u16, usize, Vec<f64>, bool)> {
    let ramp = |n: usize| (0..n).map(|i| i as f64 * 0.5 - 3.0).collect::<Vec<_>>();
    vec![
        ("single_sample", 1, 4, vec![1.0], false),
        ("one_chunk_two_channels", 2, 8, ramp(8), false),
        ("split_three_chunks", 2, 2, ramp(10), false),
        ("with_end_of_stream", 3, 4, ramp(12), true),
        ("empty_end_of_stream", 4, 4, vec![], true),
        (
            "special_values",
            1,
            8,
            vec![0.0, -0.0, f64::MIN_POSITIVE, f64::MAX, f64::MIN, 1e-310, -1.5, 1e6],
            false,
        ),
        ("sixty_five_channels", 65, 2, ramp(65 * 3), true),
        ("partial_last_chunk", 3, 4, ramp(3 * 5), false),
        (
            "microvolt_range",
            4,
            100,
            (0..400).map(|i| ((i as f64) * 0.01).sin() * 150.0).collect(),
            false,
        ),
        ("max_frames_one", 2, 1, ramp(6), true),
    ]
}

fn frame_hex(f: &Frame) -> String {
    hex(&f.encode().expect("frame within limits"))
}

pub fn generate() -> GoldenVectors {
    let entities = documents()
        .into_iter()
        .map(|(name, doc)| EntityVector {
            name,
            document: serde_json::from_slice(&doc.to_bytes()).expect("canonical json parses"),
            canonical_json: doc.to_canonical_json(),
            frame_hex: frame_hex(&Frame::new(FrameType::Entity, 0, doc.to_bytes())),
        })
        .collect();
    let chunks = chunk_cases()
        .into_iter()
        .enumerate()
        .map(|(i, (name, ch, max_frames, samples, eos))| {
            let stream = id(0x80 + i as u8);
            let mut chunker = StreamChunker::new(stream, max_frames).expect("valid chunker");
            let mut frames: Vec<String> = if samples.is_empty() {
                Vec::new()
            } else {
                let m = SampleMatrix::from_interleaved(ch as usize, samples.clone()).expect("whole frames");
                chunker
                    .chunk(&m)
                    .iter()
                    .map(|c| frame_hex(&c.to_frame(false)))
                    .collect()
            };
            if eos {
                frames.push(frame_hex(&chunker.end_of_stream(ch)));
            }
            ChunkVector {
                name: name.to_string(),
                stream_id: stream.to_string(),
                max_frames_per_chunk: max_frames,
                channels: ch,
                samples,
                end_of_stream: eos,
                frames_hex: frames,
            }
        })
        .collect();
    GoldenVectors {
        format_version: 1,
        entities,
        chunks,
    }
}

pub fn to_json(v: &GoldenVectors) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("vectors serialize");
    s.push('\n');
    s
}
