//! Frame codec shared by producers, the broker, and replication.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "NSTR"
//!      4     1  version (1)
//!      5     1  frame type: 1 entity, 2 stream chunk, 3 control
//!      6     1  flags: bit0 end-of-stream (chunk/control only)
//!      7     1  reserved (0)
//!      8     4  payload length, u32 LE, at most 16 MiB
//!     12     n  payload
//!   12+n     4  CRC-32C over bytes [0, 12+n), u32 LE
//! ```
//!
//! Stream chunk payloads are binary (see [`StreamChunk`]); entity payloads are
//! canonical entity documents; control payloads are JSON [`ControlMessage`]s.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{peek_id, EntityId};
use crate::store::WalEntry;

pub const MAGIC: [u8; 4] = *b"NSTR";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 12;
pub const TRAILER_LEN: usize = 4;
pub const MAX_PAYLOAD: usize = 16 * 1024 * 1024;
pub const FLAG_END_OF_STREAM: u8 = 0x01;

/// Fixed part of a stream chunk payload.
pub const CHUNK_HEADER_LEN: usize = 40;
pub const SAMPLE_BYTES: usize = 8;
pub const ENCODING_F64_LE: u8 = 0;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("payload of {0} bytes exceeds the 16 MiB frame limit")]
    PayloadTooLarge(usize),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown frame type {0}")]
    UnknownFrameType(u8),
    #[error("flags {flags:#04x} not valid for frame type {frame_type:?}")]
    InvalidFlags { frame_type: FrameType, flags: u8 },
    #[error("reserved byte is {0:#04x}, expected 0")]
    ReservedNonZero(u8),
    #[error("crc mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    BadCrc { stored: u32, computed: u32 },
    /// More bytes are needed; recoverable by reading further.
    #[error("truncated frame: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("stream id is empty")]
    EmptyStreamId,
    #[error("bad chunk: {0}")]
    BadChunk(String),
    #[error("bad control payload: {0}")]
    BadControl(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl WireError {
    pub fn is_truncated(&self) -> bool {
        matches!(self, WireError::Truncated { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FrameType {
    Entity = 1,
    StreamChunk = 2,
    Control = 3,
}

impl FrameType {
    pub fn from_u8(v: u8) -> Result<Self, WireError> {
        match v {
            1 => Ok(FrameType::Entity),
            2 => Ok(FrameType::StreamChunk),
            3 => Ok(FrameType::Control),
            other => Err(WireError::UnknownFrameType(other)),
        }
    }
}

fn check_flags(frame_type: FrameType, flags: u8) -> Result<(), WireError> {
    let allowed = match frame_type {
        FrameType::Entity => 0,
        FrameType::StreamChunk | FrameType::Control => FLAG_END_OF_STREAM,
    };
    if flags & !allowed != 0 {
        return Err(WireError::InvalidFlags { frame_type, flags });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub frame_type: FrameType,
    pub flags: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(frame_type: FrameType, flags: u8, payload: Vec<u8>) -> Self {
        Frame {
            frame_type,
            flags,
            payload,
        }
    }

    pub fn control(msg: &ControlMessage) -> Self {
        Frame::new(FrameType::Control, 0, msg.to_bytes())
    }

    pub fn end_of_stream(&self) -> bool {
        self.flags & FLAG_END_OF_STREAM != 0
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len() + TRAILER_LEN
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        encode_frame(self.frame_type, self.flags, &self.payload)
    }

    /// Broker key: stream id for chunks, entity id for entity frames, the
    /// referenced stream for end-of-stream control frames, nil otherwise.
    pub fn routing_key(&self) -> Result<EntityId, WireError> {
        match self.frame_type {
            FrameType::StreamChunk => Ok(ChunkHeader::parse(&self.payload)?.stream_id),
            FrameType::Entity => peek_id(&self.payload).map_err(|e| WireError::BadControl(e.to_string())),
            FrameType::Control => match ControlMessage::from_slice(&self.payload)? {
                ControlMessage::EndStream { stream_id, .. } => Ok(stream_id),
                _ => Ok(EntityId::NIL),
            },
        }
    }
}

pub fn encode_frame(frame_type: FrameType, flags: u8, payload: &[u8]) -> Result<Vec<u8>, WireError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(WireError::PayloadTooLarge(payload.len()));
    }
    check_flags(frame_type, flags)?;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + TRAILER_LEN);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(frame_type as u8);
    out.push(flags);
    out.push(0);
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    let crc = crc32c::crc32c(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Header {
    frame_type: FrameType,
    flags: u8,
    payload_len: usize,
}

fn parse_header(buf: &[u8]) -> Result<Header, WireError> {
    if buf.len() < HEADER_LEN {
        // Reject a wrong magic as early as the bytes allow.
        let n = buf.len().min(4);
        if buf[..n] != MAGIC[..n] {
            return Err(WireError::BadMagic);
        }
        return Err(WireError::Truncated {
            needed: HEADER_LEN,
            have: buf.len(),
        });
    }
    if buf[..4] != MAGIC {
        return Err(WireError::BadMagic);
    }
    if buf[4] != VERSION {
        return Err(WireError::BadVersion(buf[4]));
    }
    let frame_type = FrameType::from_u8(buf[5])?;
    let flags = buf[6];
    check_flags(frame_type, flags)?;
    if buf[7] != 0 {
        return Err(WireError::ReservedNonZero(buf[7]));
    }
    let payload_len = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    if payload_len > MAX_PAYLOAD {
        return Err(WireError::PayloadTooLarge(payload_len));
    }
    Ok(Header {
        frame_type,
        flags,
        payload_len,
    })
}

/// Decodes one frame from the front of `buf`, returning it with the number of
/// bytes consumed. Trailing bytes are left for the next call.
pub fn decode_frame(buf: &[u8]) -> Result<(Frame, usize), WireError> {
    let header = parse_header(buf)?;
    let total = HEADER_LEN + header.payload_len + TRAILER_LEN;
    if buf.len() < total {
        return Err(WireError::Truncated {
            needed: total,
            have: buf.len(),
        });
    }
    let body_end = HEADER_LEN + header.payload_len;
    let stored = u32::from_le_bytes(buf[body_end..total].try_into().unwrap());
    let computed = crc32c::crc32c(&buf[..body_end]);
    if stored != computed {
        return Err(WireError::BadCrc { stored, computed });
    }
    let frame = Frame {
        frame_type: header.frame_type,
        flags: header.flags,
        payload: buf[HEADER_LEN..body_end].to_vec(),
    };
    Ok((frame, total))
}

/// Reads one frame from a byte stream. `Ok(None)` means a clean end of stream
/// at a frame boundary.
pub fn read_frame<R: Read>(reader: &mut R) -> Result<Option<Frame>, WireError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match reader.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => {
                return Err(WireError::Truncated {
                    needed: HEADER_LEN,
                    have: filled,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let parsed = parse_header(&header)?;
    let mut buf = vec![0u8; HEADER_LEN + parsed.payload_len + TRAILER_LEN];
    buf[..HEADER_LEN].copy_from_slice(&header);
    reader.read_exact(&mut buf[HEADER_LEN..]).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            WireError::Truncated {
                needed: buf.len(),
                have: HEADER_LEN,
            }
        } else {
            WireError::Io(e)
        }
    })?;
    decode_frame(&buf).map(|(frame, _)| Some(frame))
}

pub fn write_frame<W: Write>(writer: &mut W, frame: &Frame) -> Result<(), WireError> {
    writer.write_all(&frame.encode()?)?;
    Ok(())
}

/// Parsed fixed header of a stream chunk payload.
///
/// ```text
/// offset  size  field
///      0    16  stream id
///     16     8  sequence, u64 LE
///     24     8  start sample, u64 LE
///     32     2  channel count, u16 LE
///     34     4  samples per channel, u32 LE
///     38     1  encoding (0 = f64 LE)
///     39     1  pad (0)
///     40     -  samples, frame-major interleaved
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkHeader {
    pub stream_id: EntityId,
    pub sequence: u64,
    pub start_sample: u64,
    pub channel_count: u16,
    pub samples_per_channel: u32,
    pub encoding: u8,
}

impl ChunkHeader {
    pub fn sample_bytes(&self) -> usize {
        self.channel_count as usize * self.samples_per_channel as usize * SAMPLE_BYTES
    }

    pub fn payload_len(&self) -> usize {
        CHUNK_HEADER_LEN + self.sample_bytes()
    }

    /// Parses the fixed header and checks it against the payload length.
    pub fn parse(payload: &[u8]) -> Result<Self, WireError> {
        let header = Self::parse_prefix(payload)?;
        if payload.len() != header.payload_len() {
            return Err(WireError::BadChunk(format!(
                "payload is {} bytes, header implies {}",
                payload.len(),
                header.payload_len()
            )));
        }
        Ok(header)
    }

    /// Parses only the fixed header; `buf` may hold more (or fewer) sample bytes.
    pub fn parse_prefix(buf: &[u8]) -> Result<Self, WireError> {
        if buf.len() < CHUNK_HEADER_LEN {
            return Err(WireError::Truncated {
                needed: CHUNK_HEADER_LEN,
                have: buf.len(),
            });
        }
        let stream_id = EntityId::from_bytes(buf[..16].try_into().unwrap());
        if stream_id.is_nil() {
            return Err(WireError::EmptyStreamId);
        }
        let header = ChunkHeader {
            stream_id,
            sequence: u64::from_le_bytes(buf[16..24].try_into().unwrap()),
            start_sample: u64::from_le_bytes(buf[24..32].try_into().unwrap()),
            channel_count: u16::from_le_bytes(buf[32..34].try_into().unwrap()),
            samples_per_channel: u32::from_le_bytes(buf[34..38].try_into().unwrap()),
            encoding: buf[38],
        };
        if header.encoding != ENCODING_F64_LE {
            return Err(WireError::BadChunk(format!("unknown encoding {}", header.encoding)));
        }
        if buf[39] != 0 {
            return Err(WireError::BadChunk("pad byte is not zero".into()));
        }
        if header.channel_count == 0 {
            return Err(WireError::BadChunk("zero channels".into()));
        }
        Ok(header)
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self.stream_id.as_bytes());
        out.extend_from_slice(&self.sequence.to_le_bytes());
        out.extend_from_slice(&self.start_sample.to_le_bytes());
        out.extend_from_slice(&self.channel_count.to_le_bytes());
        out.extend_from_slice(&self.samples_per_channel.to_le_bytes());
        out.push(self.encoding);
        out.push(0);
    }
}

/// A sequenced batch of interleaved multichannel samples for one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamChunk {
    pub stream_id: EntityId,
    pub sequence: u64,
    pub start_sample: u64,
    pub channel_count: u16,
    pub samples_per_channel: u32,
    /// Frame-major: frame 0 ch0..chN-1, frame 1 ch0..chN-1, ...
    pub samples: Vec<f64>,
}

impl StreamChunk {
    pub fn header(&self) -> ChunkHeader {
        ChunkHeader {
            stream_id: self.stream_id,
            sequence: self.sequence,
            start_sample: self.start_sample,
            channel_count: self.channel_count,
            samples_per_channel: self.samples_per_channel,
            encoding: ENCODING_F64_LE,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = self.header();
        debug_assert_eq!(
            self.samples.len(),
            self.channel_count as usize * self.samples_per_channel as usize
        );
        let mut out = Vec::with_capacity(header.payload_len());
        header.write_to(&mut out);
        for s in &self.samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    pub fn decode(payload: &[u8]) -> Result<Self, WireError> {
        let h = ChunkHeader::parse(payload)?;
        let samples = payload[CHUNK_HEADER_LEN..]
            .chunks_exact(SAMPLE_BYTES)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(StreamChunk {
            stream_id: h.stream_id,
            sequence: h.sequence,
            start_sample: h.start_sample,
            channel_count: h.channel_count,
            samples_per_channel: h.samples_per_channel,
            samples,
        })
    }

    pub fn to_frame(&self, end_of_stream: bool) -> Frame {
        let flags = if end_of_stream { FLAG_END_OF_STREAM } else { 0 };
        Frame::new(FrameType::StreamChunk, flags, self.encode())
    }
}

/// Multichannel samples stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    channels: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn from_interleaved(channels: usize, data: Vec<f64>) -> Result<Self, WireError> {
        if channels == 0 || channels > u16::MAX as usize {
            return Err(WireError::BadChunk(format!("channel count {channels} out of range")));
        }
        if data.len() % channels != 0 {
            return Err(WireError::BadChunk("sample count not a multiple of channels".into()));
        }
        Ok(SampleMatrix { channels, data })
    }

    /// Builds from one vector per channel; all channels must have equal length.
    pub fn from_channels(channels: &[Vec<f64>]) -> Result<Self, WireError> {
        let n = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != n) {
            return Err(WireError::BadChunk("ragged channels".into()));
        }
        let mut data = Vec::with_capacity(n * channels.len());
        for frame in 0..n {
            data.extend(channels.iter().map(|c| c[frame]));
        }
        Self::from_interleaved(channels.len(), data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Splits consecutive sample blocks of one stream into sequenced chunks,
/// continuing numbering across calls.
#[derive(Debug, Clone)]
pub struct StreamChunker {
    stream_id: EntityId,
    next_sequence: u64,
    next_sample: u64,
    max_frames_per_chunk: usize,
}

impl StreamChunker {
    pub fn new(stream_id: EntityId, max_frames_per_chunk: usize) -> Result<Self, WireError> {
        if stream_id.is_nil() {
            return Err(WireError::EmptyStreamId);
        }
        if max_frames_per_chunk == 0 || max_frames_per_chunk > u32::MAX as usize {
            return Err(WireError::BadChunk("max_frames_per_chunk must be >= 1".into()));
        }
        Ok(StreamChunker {
            stream_id,
            next_sequence: 0,
            next_sample: 0,
            max_frames_per_chunk,
        })
    }

    pub fn next_sequence(&self) -> u64 {
        self.next_sequence
    }

    pub fn next_sample(&self) -> u64 {
        self.next_sample
    }

    pub fn chunk(&mut self, samples: &SampleMatrix) -> Vec<StreamChunk> {
        let ch = samples.channels();
        samples
            .as_slice()
            .chunks(self.max_frames_per_chunk * ch)
            .map(|block| {
                let frames = block.len() / ch;
                let chunk = StreamChunk {
                    stream_id: self.stream_id,
                    sequence: self.next_sequence,
                    start_sample: self.next_sample,
                    channel_count: ch as u16,
                    samples_per_channel: frames as u32,
                    samples: block.to_vec(),
                };
                self.next_sequence += 1;
                self.next_sample += frames as u64;
                chunk
            })
            .collect()
    }

    /// Empty chunk carrying the end-of-stream flag; occupies no sequence slot.
    pub fn end_of_stream(&self, channel_count: u16) -> Frame {
        StreamChunk {
            stream_id: self.stream_id,
            sequence: self.next_sequence,
            start_sample: self.next_sample,
            channel_count,
            samples_per_channel: 0,
            samples: Vec::new(),
        }
        .to_frame(true)
    }
}

/// Splits a whole stream into chunks with sequences `0..k` and gapless start samples.
pub fn chunk_samples(
    stream_id: EntityId,
    samples: &SampleMatrix,
    max_frames_per_chunk: usize,
) -> Result<Vec<StreamChunk>, WireError> {
    Ok(StreamChunker::new(stream_id, max_frames_per_chunk)?.chunk(samples))
}

/// Metadata for one record in a broker fetch response; the frames follow as
/// separate wire frames in the same order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub offset: u64,
    pub key: EntityId,
    pub enqueued_at_us: i64,
}

/// JSON payloads of control frames, tagged by `op`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ControlMessage {
    /// Producer ack: the frame is durable in the broker log.
    Ack {
        partition: u16,
        offset: u64,
    },
    Error {
        code: String,
        message: String,
    },
    /// Stream finishes once `chunk_count` chunks are persisted.
    EndStream {
        stream_id: EntityId,
        chunk_count: u64,
    },
    Partitions,
    PartitionInfo {
        partitions: u16,
        heads: Vec<u64>,
    },
    Fetch {
        group: String,
        partition: u16,
        from_offset: u64,
        max_records: u32,
    },
    Records {
        partition: u16,
        records: Vec<RecordMeta>,
    },
    Commit {
        group: String,
        partition: u16,
        offset: u64,
    },
    Position {
        group: String,
        partition: u16,
    },
    Committed {
        group: String,
        partition: u16,
        offset: u64,
    },
    Inserted {
        id: EntityId,
        lsn: u64,
    },
    Duplicate {
        id: EntityId,
    },
    Subscribe {
        from_lsn: u64,
    },
    Wal {
        entries: Vec<WalEntry>,
    },
    /// Sent on an idle replication feed; carries the upstream committed LSN.
    Heartbeat {
        lsn: u64,
    },
}

impl ControlMessage {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("control message serializes")
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, WireError> {
        serde_json::from_slice(bytes).map_err(|e| WireError::BadControl(e.to_string()))
    }

    pub fn from_frame(frame: &Frame) -> Result<Self, WireError> {
        if frame.frame_type != FrameType::Control {
            return Err(WireError::BadControl(format!(
                "expected control frame, got {:?}",
                frame.frame_type
            )));
        }
        Self::from_slice(&frame.payload)
    }

    pub fn error(code: &str, message: impl Into<String>) -> Self {
        ControlMessage::Error {
            code: code.to_string(),
            message: message.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn id(b: u8) -> EntityId {
        EntityId::from_bytes([b; 16])
    }

    #[test]
    fn empty_control_frame_is_sixteen_bytes() {
        let bytes = encode_frame(FrameType::Control, 0, &[]).unwrap();
        assert_eq!(bytes.len(), 16);
        assert_eq!(&bytes[8..12], &[0, 0, 0, 0]);
        assert_eq!(&bytes[..4], b"NSTR");
    }

    #[test]
    fn chunk_header_width_is_sum_of_fields() {
        // stream_id, sequence, start_sample, channel_count, samples_per_channel, encoding, pad
        let widths = [16, 8, 8, 2, 4, 1, 1];
        assert_eq!(CHUNK_HEADER_LEN, widths.iter().sum::<usize>());
        let chunk = chunk_samples(id(7), &SampleMatrix::from_interleaved(1, vec![0.0]).unwrap(), 1).unwrap();
        let frame = encode_frame(FrameType::StreamChunk, 0, &chunk[0].encode()).unwrap();
        let payload_len = u32::from_le_bytes(frame[8..12].try_into().unwrap()) as usize;
        assert_eq!(payload_len, widths.iter().sum::<usize>() + 8);
    }

    #[test]
    fn flipped_payload_bit_is_bad_crc() {
        let mut bytes = encode_frame(FrameType::Entity, 0, b"{\"id\":1}").unwrap();
        bytes[14] ^= 0x04;
        assert!(matches!(decode_frame(&bytes), Err(WireError::BadCrc { .. })));
    }

    #[test]
    fn first_eight_bytes_is_truncated() {
        let bytes = encode_frame(FrameType::Control, 0, b"abc").unwrap();
        assert!(decode_frame(&bytes[..8]).unwrap_err().is_truncated());
        assert!(decode_frame(&bytes[..bytes.len() - 1]).unwrap_err().is_truncated());
    }

    #[test]
    fn header_field_errors() {
        let good = encode_frame(FrameType::Control, 0, b"x").unwrap();
        let mut b = good.clone();
        b[0] = b'X';
        assert!(matches!(decode_frame(&b), Err(WireError::BadMagic)));
        let mut b = good.clone();
        b[4] = 2;
        assert!(matches!(decode_frame(&b), Err(WireError::BadVersion(2))));
        let mut b = good.clone();
        b[5] = 9;
        assert!(matches!(decode_frame(&b), Err(WireError::UnknownFrameType(9))));
        let mut b = good;
        b[7] = 1;
        assert!(matches!(decode_frame(&b), Err(WireError::ReservedNonZero(1))));
    }

    #[test]
    fn end_of_stream_flag_only_on_chunk_and_control() {
        assert!(matches!(
            encode_frame(FrameType::Entity, FLAG_END_OF_STREAM, b"{}"),
            Err(WireError::InvalidFlags { .. })
        ));
        assert!(encode_frame(FrameType::StreamChunk, FLAG_END_OF_STREAM, &[]).is_ok());
        assert!(encode_frame(FrameType::Control, FLAG_END_OF_STREAM, &[]).is_ok());
        assert!(encode_frame(FrameType::Control, 0x02, &[]).is_err());
    }

    #[test]
    fn oversized_payload_is_rejected() {
        let big = vec![0u8; MAX_PAYLOAD + 1];
        assert!(matches!(
            encode_frame(FrameType::Control, 0, &big),
            Err(WireError::PayloadTooLarge(_))
        ));
    }

    #[test]
    fn chunking_65_by_1000_into_250() {
        let m = SampleMatrix::from_interleaved(65, vec![1.0; 65 * 1000]).unwrap();
        let chunks = chunk_samples(id(1), &m, 250).unwrap();
        // Oracle: frames 0..1000 partitioned into blocks of 250.
        let starts: Vec<u64> = (0..1000).step_by(250).collect();
        assert_eq!(chunks.len(), starts.len());
        for (i, c) in chunks.iter().enumerate() {
            assert_eq!(c.sequence, i as u64);
            assert_eq!(c.start_sample, starts[i]);
            assert_eq!(c.samples_per_channel, 250);
        }
        let sample_bytes: usize = chunks.iter().map(|c| c.header().sample_bytes()).sum();
        assert_eq!(sample_bytes, 65_000 * 8);
        assert_eq!(sample_bytes, 520_000);
    }

    #[test]
    fn singleton_chunk() {
        let m = SampleMatrix::from_interleaved(1, vec![3.5]).unwrap();
        let chunks = chunk_samples(id(1), &m, 100).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].samples_per_channel, 1);
    }

    #[test]
    fn last_chunk_may_be_short() {
        let m = SampleMatrix::from_interleaved(2, vec![0.0; 2 * 7]).unwrap();
        let chunks = chunk_samples(id(1), &m, 3).unwrap();
        let spc: Vec<u32> = chunks.iter().map(|c| c.samples_per_channel).collect();
        assert_eq!(spc, [3, 3, 1]);
    }

    #[test]
    fn nil_stream_id_is_rejected() {
        let m = SampleMatrix::from_interleaved(1, vec![0.0]).unwrap();
        assert!(matches!(
            chunk_samples(EntityId::NIL, &m, 1),
            Err(WireError::EmptyStreamId)
        ));
    }

    #[test]
    fn chunk_round_trip() {
        let m = SampleMatrix::from_channels(&[vec![1.0, 2.0, 3.0], vec![-1.0, -2.0, -3.0]]).unwrap();
        assert_eq!(m.as_slice(), &[1.0, -1.0, 2.0, -2.0, 3.0, -3.0]);
        let chunk = &chunk_samples(id(3), &m, 10).unwrap()[0];
        assert_eq!(&StreamChunk::decode(&chunk.encode()).unwrap(), chunk);
        let mut bad = chunk.encode();
        bad.pop();
        assert!(StreamChunk::decode(&bad).is_err());
    }

    #[test]
    fn routing_keys() {
        let m = SampleMatrix::from_interleaved(1, vec![0.0]).unwrap();
        let chunk = &chunk_samples(id(9), &m, 1).unwrap()[0];
        assert_eq!(chunk.to_frame(false).routing_key().unwrap(), id(9));
        let eos = Frame::control(&ControlMessage::EndStream {
            stream_id: id(4),
            chunk_count: 3,
        });
        assert_eq!(eos.routing_key().unwrap(), id(4));
        let ack = Frame::control(&ControlMessage::Ack {
            partition: 0,
            offset: 1,
        });
        assert_eq!(ack.routing_key().unwrap(), EntityId::NIL);
    }

    #[test]
    fn read_frame_scans_a_stream() {
        let mut stream = Vec::new();
        for i in 0..5u8 {
            stream.extend(encode_frame(FrameType::Control, 0, &[i; 3]).unwrap());
        }
        let mut cursor = std::io::Cursor::new(stream);
        let mut seen = 0;
        while let Some(f) = read_frame(&mut cursor).unwrap() {
            assert_eq!(f.payload, vec![seen; 3]);
            seen += 1;
        }
        assert_eq!(seen, 5);
    }

    fn frame_strategy() -> impl Strategy<Value = Frame> {
        (1u8..=3, any::<bool>(), proptest::collection::vec(any::<u8>(), 0..512)).prop_map(|(t, eos, payload)| {
            let frame_type = FrameType::from_u8(t).unwrap();
            let flags = if eos && frame_type != FrameType::Entity {
                FLAG_END_OF_STREAM
            } else {
                0
            };
            Frame::new(frame_type, flags, payload)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn encode_decode_round_trip(frame in frame_strategy()) {
            let bytes = frame.encode().unwrap();
            prop_assert_eq!(bytes.len(), HEADER_LEN + frame.payload.len() + TRAILER_LEN);
            let (back, used) = decode_frame(&bytes).unwrap();
            prop_assert_eq!(used, bytes.len());
            prop_assert_eq!(back, frame);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2_000))]

        #[test]
        fn trailing_garbage_is_left_unconsumed(
            frame in frame_strategy(),
            garbage in proptest::collection::vec(any::<u8>(), 0..64),
        ) {
            let mut bytes = frame.encode().unwrap();
            let len = bytes.len();
            bytes.extend(garbage);
            let (back, used) = decode_frame(&bytes).unwrap();
            prop_assert_eq!(used, len);
            prop_assert_eq!(back, frame);
        }

        #[test]
        fn single_bit_flips_never_decode(frame in frame_strategy(), bit in any::<prop::sample::Index>()) {
            let mut bytes = frame.encode().unwrap();
            let i = bit.index(bytes.len() * 8);
            bytes[i / 8] ^= 1 << (i % 8);
            prop_assert!(decode_frame(&bytes).is_err());
        }

        #[test]
        fn chunk_sample_volume_is_independent_of_granularity(max in 1usize..1000) {
            let m = SampleMatrix::from_interleaved(65, vec![0.25; 65 * 1000]).unwrap();
            let chunks = chunk_samples(EntityId::from_bytes([5; 16]), &m, max).unwrap();
            let bytes: usize = chunks.iter().map(|c| c.encode().len() - CHUNK_HEADER_LEN).sum();
            prop_assert_eq!(bytes, 520_000);
            let mut next = 0u64;
            for (i, c) in chunks.iter().enumerate() {
                prop_assert_eq!(c.sequence, i as u64);
                prop_assert_eq!(c.start_sample, next);
                next += c.samples_per_channel as u64;
            }
            prop_assert_eq!(next, 1000);
        }
    }
}
