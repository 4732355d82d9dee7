//! Persist-layer fixtures and the randomized crash-replay scenario.

use std::path::Path;
use std::time::Duration;

use nstore_core::broker::QueueRecord;
use nstore_core::domain::{EntityId, Timestamp};
use nstore_core::persist::signal_log::{log_path, sample_bytes, stream_info};
use nstore_core::persist::{quarantine_dir, LogState, PartitionProcessor, PersistOptions};
use nstore_core::store::Store;
use nstore_core::wire::{Frame, SampleMatrix, StreamChunk, StreamChunker};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn opts(dir: &Path) -> PersistOptions {
    PersistOptions {
        export_on_finalize: false,
        idle_wait: Duration::from_millis(5),
        ..PersistOptions::new(dir)
    }
}

pub fn record(offset: u64, key: EntityId, frame: Frame) -> QueueRecord {
    QueueRecord {
        offset,
        partition: 0,
        key,
        frame,
        enqueued_at: Timestamp(0),
    }
}

pub fn matrix(channels: usize, frames: usize, f: impl Fn(usize, usize) -> f64) -> SampleMatrix {
    let data = (0..frames)
        .flat_map(|t| (0..channels).map(move |c| (t, c)))
        .map(|(t, c)| f(t, c))
        .collect();
    SampleMatrix::from_interleaved(channels, data).unwrap()
}

pub fn le_bytes(m: &SampleMatrix) -> Vec<u8> {
    m.as_slice().iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn chunks(id: EntityId, m: &SampleMatrix, per: usize) -> Vec<StreamChunk> {
    StreamChunker::new(id, per).unwrap().chunk(m)
}

/// A permutation that moves no element more than `window` places ahead of its slot.
pub fn windowed_permutation(rng: &mut ChaCha8Rng, n: usize, window: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    let mut i = 0;
    while i < n {
        let end = (i + window).min(n);
        v[i..end].shuffle(rng);
        i = end;
    }
    v
}

#[derive(Clone, Copy)]
pub enum Ending {
    FlagOnLast,
    EmptyChunk,
    Control,
}

/// One randomized scenario: interleaved streams with local reordering and
/// duplicates, processed with commits, crashes (losing in-memory state) and
/// torn log tails. Returns whether every stream's bytes match the sender's.
pub fn crash_replay_scenario(seed: u64) -> Result<(), String> {
    use nstore_core::wire::ControlMessage;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = tempfile::tempdir().unwrap();
    let store = Store::memory();
    let mut lanes: Vec<Vec<(EntityId, Frame)>> = Vec::new();
    let mut expected = Vec::new();
    for s in 0..rng.gen_range(1..5) {
        let id = EntityId::from_bytes(rng.gen());
        let ch = rng.gen_range(1..9);
        let frames = rng.gen_range(20..300);
        let m = matrix(ch, frames, |t, c| {
            ((seed as usize + t * 13 + c * 101 + s) % 1000) as f64 / 7.0
        });
        let mut chunker = StreamChunker::new(id, rng.gen_range(1..30)).unwrap();
        let cs = chunker.chunk(&m);
        let ending = [Ending::FlagOnLast, Ending::EmptyChunk, Ending::Control][rng.gen_range(0..3)];
        let last = cs.len() - 1;
        let mut frames_out: Vec<Frame> = cs
            .iter()
            .enumerate()
            .map(|(i, c)| c.to_frame(i == last && matches!(ending, Ending::FlagOnLast)))
            .collect();
        match ending {
            Ending::EmptyChunk => frames_out.push(chunker.end_of_stream(ch as u16)),
            Ending::Control => frames_out.push(Frame::control(&ControlMessage::EndStream {
                stream_id: id,
                chunk_count: cs.len() as u64,
            })),
            Ending::FlagOnLast => {}
        }
        let window = rng.gen_range(1..=64);
        let order = windowed_permutation(&mut rng, frames_out.len(), window);
        let mut lane: Vec<(EntityId, Frame)> = order.iter().map(|&i| (id, frames_out[i].clone())).collect();
        for _ in 0..rng.gen_range(0..5) {
            let k = rng.gen_range(0..lane.len());
            let dup = lane[k].clone();
            let pos = rng.gen_range(k..=lane.len());
            lane.insert(pos, dup);
        }
        lanes.push(lane);
        expected.push((id, le_bytes(&m)));
    }
    let mut queue = Vec::new();
    let mut cursors = vec![0; lanes.len()];
    loop {
        let live: Vec<usize> = (0..lanes.len()).filter(|&i| cursors[i] < lanes[i].len()).collect();
        let Some(&l) = live.choose(&mut rng) else { break };
        let (key, frame) = lanes[l][cursors[l]].clone();
        queue.push(record(queue.len() as u64, key, frame));
        cursors[l] += 1;
    }

    let mut crashes: Vec<usize> = (0..rng.gen_range(0..4))
        .map(|_| rng.gen_range(0..queue.len()))
        .collect();
    crashes.sort_unstable();
    let mut committed = 0u64;
    let mut p = PartitionProcessor::new(0, opts(dir.path()));
    let mut i = 0usize;
    let mut processed = 0usize;
    while i < queue.len() {
        if crashes.first() == Some(&processed) {
            crashes.remove(0);
            drop(p);
            // A torn, unsynced append on some stream.
            if rng.gen_bool(0.5) {
                let (id, _) = &expected[rng.gen_range(0..expected.len())];
                let path = log_path(dir.path(), id);
                if path.exists() {
                    let junk: Vec<u8> = chunks(*id, &matrix(1, 3, |_, _| 1.0), 3)[0].encode();
                    let cut = rng.gen_range(1..junk.len());
                    let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
                    std::io::Write::write_all(&mut f, &junk[..cut]).unwrap();
                }
            }
            p = PartitionProcessor::new(0, opts(dir.path()));
            i = committed as usize;
        }
        p.handle_record(&queue[i], &store).map_err(|e| e.to_string())?;
        i += 1;
        processed += 1;
        if rng.gen_bool(0.3) {
            p.sync().unwrap();
            committed = committed.max(p.commit_floor(i as u64));
        }
    }
    for (id, bytes) in &expected {
        let info = stream_info(dir.path(), id).map_err(|e| e.to_string())?;
        if info.state != LogState::Finalized {
            return Err(format!("seed {seed}: stream {id} not finalized"));
        }
        if &sample_bytes(&log_path(dir.path(), id)).unwrap() != bytes {
            return Err(format!("seed {seed}: stream {id} bytes differ"));
        }
    }
    if quarantine_dir(dir.path()).exists() {
        return Err(format!("seed {seed}: unexpected quarantine"));
    }
    Ok(())
}
