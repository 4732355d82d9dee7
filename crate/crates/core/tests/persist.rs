mod common;

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use nstore_core::broker::{Broker, BrokerOptions};
use nstore_core::domain::{new_entity, AttributeBlock, EntityDocument, EntityId, RelationKind, Timestamp, TopicKind};
use nstore_core::persist::bdf::{export_stream, BdfOptions};
use nstore_core::persist::signal_log::{log_path, sample_bytes, stream_info};
use nstore_core::persist::{
    quarantine_dir, run_workers, LogState, PartitionProcessor, PersistError, PersistOptions, PersistOutcome,
};
use nstore_core::query::{execute, QueryRequest};
use nstore_core::store::Store;
use nstore_core::wire::{Frame, FrameType, SampleMatrix, StreamChunk, StreamChunker};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::bdf::*;
use common::replay::*;

fn data_doc(id: EntityId, rate: i64) -> EntityDocument {
    let mut e = nstore_core::domain::TopicEntity::with_id(id, TopicKind::Data, "run", Timestamp(1_700_000_000_000_000))
        .unwrap();
    e.mount(AttributeBlock::new("EEG").unwrap().with("sampling_rate", rate))
        .unwrap();
    EntityDocument::new(e)
}

#[test]
fn in_order_chunks_append() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::memory();
    let id = EntityId::random();
    let m = matrix(2, 10, |t, c| (t * 2 + c) as f64);
    let cs = chunks(id, &m, 5);
    let mut p = PartitionProcessor::new(0, opts(dir.path()));
    for (i, c) in cs.iter().enumerate() {
        let out = p
            .handle_record(&record(i as u64, id, c.to_frame(false)), &store)
            .unwrap();
        assert_eq!(out, PersistOutcome::SamplesAppended(id, 5));
    }
    let info = stream_info(dir.path(), &id).unwrap();
    assert_eq!((info.chunk_count, info.frames), (2, 10));
    assert_eq!(sample_bytes(&log_path(dir.path(), &id)).unwrap(), le_bytes(&m));
}

#[test]
fn chunk_size_accounting() {
    let dir = tempfile::tempdir().unwrap();
    let id = EntityId::random();
    let m = matrix(65, 250, |_, _| 0.5);
    let mut p = PartitionProcessor::new(0, opts(dir.path()));
    p.handle_record(&record(0, id, chunks(id, &m, 250)[0].to_frame(false)), &Store::memory())
        .unwrap();
    let header = 16 + 8 + 8 + 2 + 4 + 1 + 1;
    let expected = header + 65 * 250 * 8;
    assert_eq!(expected, 130_040);
    let info = stream_info(dir.path(), &id).unwrap();
    assert_eq!(info.bytes_on_disk, expected as u64);
    assert_eq!(
        std::fs::metadata(log_path(dir.path(), &id)).unwrap().len(),
        expected as u64
    );
}

#[test]
fn replay_is_duplicate_and_file_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::memory();
    let id = EntityId::random();
    let cs = chunks(id, &matrix(3, 9, |t, c| (t + c) as f64), 3);
    let mut p = PartitionProcessor::new(0, opts(dir.path()));
    for (i, c) in cs.iter().enumerate() {
        p.handle_record(&record(i as u64, id, c.to_frame(false)), &store)
            .unwrap();
    }
    let before = std::fs::read(log_path(dir.path(), &id)).unwrap();
    let out = p.handle_record(&record(9, id, cs[0].to_frame(false)), &store).unwrap();
    assert_eq!(out, PersistOutcome::Duplicate);
    // A fresh processor (as after a restart) also sees it as a duplicate.
    let mut q = PartitionProcessor::new(0, opts(dir.path()));
    assert_eq!(
        q.handle_record(&record(10, id, cs[1].to_frame(false)), &store).unwrap(),
        PersistOutcome::Duplicate
    );
    assert_eq!(std::fs::read(log_path(dir.path(), &id)).unwrap(), before);
}

#[test]
fn empty_end_of_stream_chunk_finalizes() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::memory();
    let id = EntityId::random();
    let mut chunker = StreamChunker::new(id, 4).unwrap();
    let cs = chunker.chunk(&matrix(2, 8, |t, _| t as f64));
    let eos = chunker.end_of_stream(2);
    let mut p = PartitionProcessor::new(0, opts(dir.path()));
    for (i, c) in cs.iter().enumerate() {
        p.handle_record(&record(i as u64, id, c.to_frame(false)), &store)
            .unwrap();
    }
    let before = stream_info(dir.path(), &id).unwrap();
    assert_eq!(
        p.handle_record(&record(2, id, eos.clone()), &store).unwrap(),
        PersistOutcome::StreamFinalized(id)
    );
    let after = stream_info(dir.path(), &id).unwrap();
    assert_eq!(
        (after.frames, after.bytes_on_disk),
        (before.frames, before.bytes_on_disk)
    );
    assert_eq!(after.state, LogState::Finalized);
    assert_eq!(
        p.handle_record(&record(3, id, eos), &store).unwrap(),
        PersistOutcome::Duplicate
    );
}

#[test]
fn channel_mismatch_is_quarantined() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::memory();
    let id = EntityId::random();
    let mut p = PartitionProcessor::new(0, opts(dir.path()));
    let a = chunks(id, &matrix(65, 4, |_, _| 1.0), 4);
    p.handle_record(&record(0, id, a[0].to_frame(false)), &store).unwrap();
    let mut b = chunks(id, &matrix(64, 4, |_, _| 1.0), 4)[0].clone();
    b.sequence = 1;
    b.start_sample = 4;
    let out = p.handle_record(&record(1, id, b.to_frame(false)), &store).unwrap();
    assert!(
        matches!(out, PersistOutcome::Quarantined(ref r) if r.contains("64 channels")),
        "{out:?}"
    );
    assert!(quarantine_dir(dir.path()).join("0-1.bin").exists());
    assert_eq!(stream_info(dir.path(), &id).unwrap().frames, 4);
}

#[test]
fn beyond_window_and_malformed_are_quarantined() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::memory();
    let id = EntityId::random();
    let cs = chunks(id, &matrix(1, 100, |t, _| t as f64), 1);
    let mut p = PartitionProcessor::new(0, opts(dir.path()));
    assert_eq!(
        p.handle_record(&record(0, id, cs[64].to_frame(false)), &store).unwrap(),
        PersistOutcome::Buffered
    );
    assert!(matches!(
        p.handle_record(&record(1, id, cs[65].to_frame(false)), &store).unwrap(),
        PersistOutcome::Quarantined(_)
    ));
    assert_eq!(p.commit_floor(2), 0);
    let junk = Frame::new(FrameType::Entity, 0, b"{not json".to_vec());
    assert!(matches!(
        p.handle_record(&record(2, id, junk), &store).unwrap(),
        PersistOutcome::Quarantined(_)
    ));
    let empty = StreamChunk {
        samples_per_channel: 0,
        samples: vec![],
        ..cs[0].clone()
    };
    assert!(matches!(
        p.handle_record(&record(3, id, empty.to_frame(false)), &store).unwrap(),
        PersistOutcome::Quarantined(_)
    ));
    let n = std::fs::read_dir(quarantine_dir(dir.path())).unwrap().count();
    assert_eq!(n, 3);
}

#[test]
fn torn_log_tail_is_truncated_on_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::memory();
    let id = EntityId::random();
    let m = matrix(4, 30, |t, c| (t * 10 + c) as f64);
    let cs = chunks(id, &m, 10);
    {
        let mut p = PartitionProcessor::new(0, opts(dir.path()));
        for (i, c) in cs[..2].iter().enumerate() {
            p.handle_record(&record(i as u64, id, c.to_frame(false)), &store)
                .unwrap();
        }
    }
    let torn = cs[2].encode();
    let mut f = std::fs::OpenOptions::new()
        .append(true)
        .open(log_path(dir.path(), &id))
        .unwrap();
    std::io::Write::write_all(&mut f, &torn[..torn.len() / 2]).unwrap();
    drop(f);
    let mut p = PartitionProcessor::new(0, opts(dir.path()));
    let out = p.handle_record(&record(2, id, cs[2].to_frame(true)), &store).unwrap();
    assert_eq!(out, PersistOutcome::StreamFinalized(id));
    assert_eq!(sample_bytes(&log_path(dir.path(), &id)).unwrap(), le_bytes(&m));
}

#[test]
fn entity_records_insert_and_carry_sampling_rate() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::memory();
    let id = EntityId::random();
    let doc = data_doc(id, 500);
    let frame = Frame::new(FrameType::Entity, 0, doc.to_bytes());
    let mut p = PartitionProcessor::new(0, opts(dir.path()));
    assert_eq!(
        p.handle_record(&record(0, id, frame.clone()), &store).unwrap(),
        PersistOutcome::MetadataInserted(id)
    );
    assert_eq!(
        p.handle_record(&record(1, id, frame), &store).unwrap(),
        PersistOutcome::Duplicate
    );
    let c = &chunks(id, &matrix(1, 5, |t, _| t as f64), 5)[0];
    p.handle_record(&record(2, id, c.to_frame(true)), &store).unwrap();
    assert_eq!(stream_info(dir.path(), &id).unwrap().sampling_rate_hz, 500.0);
}

#[test]
fn default_sampling_rate_without_entity() {
    let dir = tempfile::tempdir().unwrap();
    let id = EntityId::random();
    let mut p = PartitionProcessor::new(0, opts(dir.path()));
    let c = &chunks(id, &matrix(1, 5, |t, _| t as f64), 5)[0];
    p.handle_record(&record(0, id, c.to_frame(true)), &Store::memory())
        .unwrap();
    assert_eq!(stream_info(dir.path(), &id).unwrap().sampling_rate_hz, 1000.0);
}

fn stream_through(dir: &Path, id: EntityId, m: &SampleMatrix, per: usize, order: &[usize]) -> Vec<u8> {
    let store = Store::memory();
    let cs = chunks(id, m, per);
    let last = cs.len() - 1;
    let mut p = PartitionProcessor::new(0, opts(dir));
    for (off, &i) in order.iter().enumerate() {
        p.handle_record(&record(off as u64, id, cs[i].to_frame(i == last)), &store)
            .unwrap();
    }
    assert_eq!(stream_info(dir, &id).unwrap().state, LogState::Finalized);
    std::fs::read(log_path(dir, &id)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_windowed_permutation_yields_identical_bytes(seed in any::<u64>(), n in 1usize..150, dups in 0usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let id = EntityId::from_bytes([9; 16]);
        let m = matrix(3, n * 2, |t, c| (t as f64).sin() * (c + 1) as f64);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let reference = stream_through(a.path(), id, &m, 2, &(0..n).collect::<Vec<_>>());
        let mut order = windowed_permutation(&mut rng, n, 64);
        for _ in 0..dups {
            let k = rng.gen_range(0..order.len());
            let pos = rng.gen_range(k..=order.len());
            order.insert(pos, order[k]);
        }
        let got = stream_through(b.path(), id, &m, 2, &order);
        prop_assert_eq!(got, reference);
    }
}

// ---------------------------------------------------------------- BDF oracle

fn finalized_stream(dir: &Path, m: &SampleMatrix, rate: i64) -> EntityId {
    let store = Store::memory();
    let id = EntityId::random();
    let mut p = PartitionProcessor::new(0, opts(dir));
    p.handle_record(
        &record(0, id, Frame::new(FrameType::Entity, 0, data_doc(id, rate).to_bytes())),
        &store,
    )
    .unwrap();
    let cs = chunks(id, m, 250);
    let last = cs.len() - 1;
    for (i, c) in cs.iter().enumerate() {
        p.handle_record(&record(i as u64 + 1, id, c.to_frame(i == last)), &store)
            .unwrap();
    }
    id
}

#[test]
fn bdf_size_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let m = matrix(65, 10_000, |t, c| ((t + c) % 97) as f64 - 48.0);
    let id = finalized_stream(dir.path(), &m, 1000);
    let out = dir.path().join("x.bdf");
    let s = export_stream(dir.path(), id, &out, &BdfOptions::default()).unwrap();
    assert_eq!(s.file_bytes, 256 * 66 + 10 * 65 * 1000 * 3);
    assert_eq!(s.file_bytes, 1_966_896);
    let bytes = std::fs::read(&out).unwrap();
    assert_eq!(bytes.len(), 1_966_896);
    let b = parse_bdf(&bytes);
    assert_eq!(b.id, b"\xFFBIOSEMI");
    assert_eq!(b.reserved, "24BIT");
    assert_eq!((b.channels, b.records, b.duration.as_str()), (65, 10, "1"));
    assert!(b.spr.iter().all(|&s| s == 1000));
    assert!(b.dig.iter().all(|&d| d == (-8_388_608, 8_388_607)));
}

#[test]
fn bdf_constant_zero_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let m = matrix(4, 2000, |_, _| 0.0);
    let id = finalized_stream(dir.path(), &m, 1000);
    let out = dir.path().join("z.bdf");
    export_stream(dir.path(), id, &out, &BdfOptions::default()).unwrap();
    let b = parse_bdf(&std::fs::read(&out).unwrap());
    for ch in &b.data {
        assert!(ch.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn bdf_ramp_error_within_quantization_bound() {
    let dir = tempfile::tempdir().unwrap();
    let frames = 3000;
    let ramp = |t: usize, c: usize| -1.0 + 2.0 * ((t + 7 * c) % frames) as f64 / (frames - 1) as f64;
    let m = matrix(8, frames, ramp);
    let id = finalized_stream(dir.path(), &m, 1000);
    let out = dir.path().join("r.bdf");
    export_stream(dir.path(), id, &out, &BdfOptions::default()).unwrap();
    let b = parse_bdf(&std::fs::read(&out).unwrap());
    for c in 0..8 {
        let (pmin, pmax) = b.phys[c];
        let bound = (pmax - pmin) / 2f64.powi(24) * 1.01;
        let worst = (0..frames)
            .map(|t| (b.data[c][t] - ramp(t, c)).abs())
            .fold(0.0, f64::max);
        assert!(worst <= bound, "channel {c}: {worst} > {bound}");
    }
}

#[test]
fn bdf_partial_second_padding() {
    let dir = tempfile::tempdir().unwrap();
    let m = matrix(2, 2500, |t, _| t as f64);
    let id = finalized_stream(dir.path(), &m, 1000);
    let padded = export_stream(
        dir.path(),
        id,
        &dir.path().join("a.bdf"),
        &BdfOptions { pad_last_record: true },
    )
    .unwrap();
    let cut = export_stream(
        dir.path(),
        id,
        &dir.path().join("b.bdf"),
        &BdfOptions { pad_last_record: false },
    )
    .unwrap();
    assert_eq!((padded.records, cut.records), (3, 2));
    assert_eq!(padded.file_bytes, 256 * 3 + 3 * 2 * 1000 * 3);
    let b = parse_bdf(&std::fs::read(dir.path().join("a.bdf")).unwrap());
    assert_eq!(b.data[0].len(), 3000);
}

#[test]
fn bdf_requires_finalized_stream() {
    let dir = tempfile::tempdir().unwrap();
    let id = EntityId::random();
    let mut p = PartitionProcessor::new(0, opts(dir.path()));
    let c = &chunks(id, &matrix(1, 5, |t, _| t as f64), 5)[0];
    p.handle_record(&record(0, id, c.to_frame(false)), &Store::memory())
        .unwrap();
    let e = export_stream(dir.path(), id, &dir.path().join("o.bdf"), &BdfOptions::default()).unwrap_err();
    assert!(matches!(e, PersistError::StreamNotFinalized(_)));
}

// ---------------------------------------------------------------- workers

fn broker(dir: &Path) -> Arc<Broker> {
    Arc::new(
        Broker::open(
            dir,
            BrokerOptions {
                partitions: 4,
                fsync_interval: Duration::from_millis(2),
                ..BrokerOptions::default()
            },
        )
        .unwrap(),
    )
}

struct Published {
    docs: Vec<EntityDocument>,
    streams: Vec<(EntityId, Vec<u8>)>,
}

/// Publishes a fixture plus a few streams, randomly interleaved across keys.
fn publish_mix(b: &Broker, seed: u64) -> Published {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let docs = common::fixture(120, seed);
    let mut queues: Vec<Vec<(EntityId, Frame)>> = Vec::new();
    queues.push(
        docs.iter()
            .map(|d| (d.entity.id, Frame::new(FrameType::Entity, 0, d.to_bytes())))
            .collect(),
    );
    let mut streams = Vec::new();
    for s in 0..3 {
        let id = EntityId::from_bytes(rng.gen());
        let ch = rng.gen_range(1..6);
        let m = matrix(ch, rng.gen_range(50..400), |t, c| (t * 31 + c * 7 + s) as f64 * 0.125);
        let cs = chunks(id, &m, rng.gen_range(5..40));
        let mut q: Vec<(EntityId, Frame)> = vec![(id, Frame::new(FrameType::Entity, 0, data_doc(id, 250).to_bytes()))];
        let last = cs.len() - 1;
        q.extend(cs.iter().enumerate().map(|(i, c)| (id, c.to_frame(i == last))));
        queues.push(q);
        streams.push((id, le_bytes(&m)));
    }
    let mut cursors = vec![0; queues.len()];
    loop {
        let live: Vec<usize> = (0..queues.len()).filter(|&i| cursors[i] < queues[i].len()).collect();
        let Some(&q) = live.choose(&mut rng) else { break };
        let (key, frame) = &queues[q][cursors[q]];
        b.publish(*key, frame).unwrap();
        cursors[q] += 1;
    }
    Published { docs, streams }
}

fn wait_until(deadline: Duration, mut f: impl FnMut() -> bool) {
    let start = std::time::Instant::now();
    while !f() {
        assert!(start.elapsed() < deadline, "timed out");
        std::thread::sleep(Duration::from_millis(10));
    }
}

fn browse_all(store: &Store) -> Vec<Vec<u8>> {
    TopicKind::ALL
        .iter()
        .map(|&topic| {
            let r = execute(
                &store.snapshot(),
                &QueryRequest::Browse {
                    topic,
                    page: 0,
                    page_size: 1000,
                },
            )
            .unwrap();
            r.content_bytes()
        })
        .collect()
}

fn run_to_completion(workers: usize, seed: u64) -> (Vec<Vec<u8>>, Vec<(EntityId, Vec<u8>)>, Published) {
    let bdir = tempfile::tempdir().unwrap();
    let ddir = tempfile::tempdir().unwrap();
    let b = broker(bdir.path());
    let published = publish_mix(&b, seed);
    let store = Arc::new(Store::memory());
    let w = run_workers(
        b.clone(),
        store.clone(),
        PersistOptions {
            workers,
            ..opts(ddir.path())
        },
    )
    .unwrap();
    let expected_entities = published.docs.len() + published.streams.len();
    wait_until(Duration::from_secs(60), || {
        store.snapshot().entity_count() == expected_entities
            && published
                .streams
                .iter()
                .all(|(id, _)| stream_info(ddir.path(), id).is_ok_and(|i| i.state == LogState::Finalized))
    });
    w.shutdown().unwrap();
    let files = published
        .streams
        .iter()
        .map(|(id, _)| (*id, std::fs::read(log_path(ddir.path(), id)).unwrap()))
        .collect();
    (browse_all(&store), files, published)
}

#[test]
fn four_workers_match_serial_oracle() {
    let (serial_store, serial_files, published) = run_to_completion(1, 11);
    let (par_store, par_files, _) = run_to_completion(4, 11);
    assert_eq!(serial_store, par_store);
    assert_eq!(serial_files, par_files);
    for ((_, file), (_, sent)) in par_files.iter().zip(&published.streams) {
        let samples: Vec<u8> = strip_headers(file);
        assert_eq!(&samples, sent);
    }
}

fn strip_headers(mut log: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    while !log.is_empty() {
        let channels = u16::from_le_bytes([log[32], log[33]]) as usize;
        let frames = u32::from_le_bytes(log[34..38].try_into().unwrap()) as usize;
        let len = 40 + channels * frames * 8;
        out.extend_from_slice(&log[40..len]);
        log = &log[len..];
    }
    out
}

#[test]
fn no_partitions_available() {
    let bdir = tempfile::tempdir().unwrap();
    let b = broker(bdir.path());
    let err = run_workers(
        b,
        Arc::new(Store::memory()),
        PersistOptions {
            workers: 5,
            ..opts(bdir.path())
        },
    )
    .err()
    .unwrap();
    assert_eq!(err.code(), "NoPartitionsAvailable");
}

#[test]
fn restart_mid_stream_loses_and_duplicates_nothing() {
    let bdir = tempfile::tempdir().unwrap();
    let ddir = tempfile::tempdir().unwrap();
    let b = broker(bdir.path());
    let store = Arc::new(Store::memory());
    let id = EntityId::random();
    let m = matrix(5, 4000, |t, c| (t as f64) * 0.001 - c as f64);
    let cs = chunks(id, &m, 20);
    let last = cs.len() - 1;
    let w = run_workers(
        b.clone(),
        store.clone(),
        PersistOptions {
            workers: 2,
            ..opts(ddir.path())
        },
    )
    .unwrap();
    for (i, c) in cs.iter().enumerate() {
        b.publish(id, &c.to_frame(i == last)).unwrap();
        if i == cs.len() / 2 {
            w.shutdown().unwrap();
            break;
        }
    }
    let w = run_workers(
        b.clone(),
        store.clone(),
        PersistOptions {
            workers: 2,
            ..opts(ddir.path())
        },
    )
    .unwrap();
    for (i, c) in cs.iter().enumerate().skip(cs.len() / 2 + 1) {
        b.publish(id, &c.to_frame(i == last)).unwrap();
    }
    // Replay a stretch too, as a producer retry would.
    for c in &cs[10..30] {
        b.publish(id, &c.to_frame(false)).unwrap();
    }
    wait_until(Duration::from_secs(30), || {
        stream_info(ddir.path(), &id).is_ok_and(|i| i.state == LogState::Finalized)
    });
    w.shutdown().unwrap();
    assert_eq!(sample_bytes(&log_path(ddir.path(), &id)).unwrap(), le_bytes(&m));
    assert_eq!(
        std::fs::metadata(log_path(ddir.path(), &id)).unwrap().len(),
        (cs.len() * 40 + 4000 * 5 * 8) as u64
    );
}

#[test]
fn dangling_reference_is_retried_then_quarantined() {
    let bdir = tempfile::tempdir().unwrap();
    let ddir = tempfile::tempdir().unwrap();
    let b = broker(bdir.path());
    let store = Arc::new(Store::memory());
    let d = new_entity(TopicKind::Data, "orphan").unwrap();
    let doc = EntityDocument::new(d.clone()).relate(RelationKind::ProcessData, EntityId::random(), d.id);
    b.publish(d.id, &Frame::new(FrameType::Entity, 0, doc.to_bytes()))
        .unwrap();
    let w = run_workers(
        b.clone(),
        store.clone(),
        PersistOptions {
            workers: 1,
            dangling_timeout: Duration::from_millis(300),
            ..opts(ddir.path())
        },
    )
    .unwrap();
    wait_until(Duration::from_secs(10), || {
        w.stats.quarantined.load(std::sync::atomic::Ordering::SeqCst) == 1
    });
    w.shutdown().unwrap();
    assert_eq!(store.snapshot().entity_count(), 0);
    assert_eq!(std::fs::read_dir(quarantine_dir(ddir.path())).unwrap().count(), 1);
}

// ---------------------------------------------------------------- crash replay

#[test]
fn crash_replay_scenarios_are_lossless() {
    let failures: Vec<String> = (0..50).filter_map(|s| crash_replay_scenario(1000 + s).err()).collect();
    assert!(failures.is_empty(), "{failures:?}");
}
