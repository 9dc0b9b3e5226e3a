//! `.skseq` binary sequence files, JSON-lines sequences and label vocabularies.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! "SKSQ"            4 bytes magic
//! version           u16 (currently 1)
//! joint count       u8  (must be 15)
//! fps               f32
//! frame count       u32
//! label             i32 (-1 = unlabeled)
//! subject id        i32 (-1 = unknown)
//! coordinates       frame_count × 15 × 3 f32, joint order
//! ```

use super::{SkeletonFrame, SkeletonSequence, NUM_COORDS, NUM_JOINTS};
use crate::error::{Error, Result};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const SKSEQ_MAGIC: &[u8; 4] = b"SKSQ";
pub const SKSEQ_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 4 + 4 + 4;

pub fn encode_skseq(seq: &SkeletonSequence) -> Result<Vec<u8>> {
    let frames = u32::try_from(seq.frames.len())
        .map_err(|_| Error::Format("too many frames for .skseq".into()))?;
    let label = match seq.label {
        None => -1,
        Some(l) => i32::try_from(l).map_err(|_| Error::Format(format!("label {l} too large")))?,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + seq.frames.len() * NUM_JOINTS * NUM_COORDS * 4);
    out.extend_from_slice(SKSEQ_MAGIC);
    out.extend_from_slice(&SKSEQ_VERSION.to_le_bytes());
    out.push(NUM_JOINTS as u8);
    out.extend_from_slice(&(seq.fps as f32).to_le_bytes());
    out.extend_from_slice(&frames.to_le_bytes());
    out.extend_from_slice(&label.to_le_bytes());
    out.extend_from_slice(&seq.subject_id.unwrap_or(-1).to_le_bytes());
    for frame in &seq.frames {
        for v in frame.joints.iter().flatten() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format("truncated .skseq data".into()));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn take_arr<const N: usize>(bytes: &mut &[u8]) -> Result<[u8; N]> {
    Ok(take(bytes, N)?.try_into().expect("length checked"))
}

pub fn decode_skseq(mut bytes: &[u8]) -> Result<SkeletonSequence> {
    let buf = &mut bytes;
    if take(buf, 4)? != SKSEQ_MAGIC {
        return Err(Error::Format("bad magic, expected SKSQ".into()));
    }
    let version = u16::from_le_bytes(take_arr(buf)?);
    if version != SKSEQ_VERSION {
        return Err(Error::Format(format!("unsupported .skseq version {version}")));
    }
    let joints = take(buf, 1)?[0];
    if joints as usize != NUM_JOINTS {
        return Err(Error::Format(format!("joint count {joints}, expected 15")));
    }
    let fps = f32::from_le_bytes(take_arr(buf)?);
    let frame_count = u32::from_le_bytes(take_arr(buf)?) as usize;
    let label = i32::from_le_bytes(take_arr(buf)?);
    let subject = i32::from_le_bytes(take_arr(buf)?);
    let expected = frame_count
        .checked_mul(NUM_JOINTS * NUM_COORDS * 4)
        .ok_or_else(|| Error::Format("frame count overflow".into()))?;
    if buf.len() != expected {
        return Err(Error::Format(format!(
            "payload is {} bytes, header promises {expected}",
            buf.len()
        )));
    }
    let mut frames = Vec::with_capacity(frame_count);
    for chunk in buf.chunks_exact(NUM_JOINTS * NUM_COORDS * 4) {
        let mut frame = SkeletonFrame::zeros();
        for (v, b) in frame.joints.iter_mut().flatten().zip(chunk.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().unwrap()) as f64;
        }
        frames.push(frame);
    }
    Ok(SkeletonSequence {
        frames,
        fps: fps as f64,
        subject_id: (subject >= 0).then_some(subject),
        label: (label >= 0).then_some(label as u32),
    })
}

pub fn write_skseq(path: impl AsRef<Path>, seq: &SkeletonSequence) -> Result<()> {
    let bytes = encode_skseq(seq)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_skseq(path: impl AsRef<Path>) -> Result<SkeletonSequence> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_skseq(&bytes)
}

/// Reads one sequence per non-blank line.
pub fn read_jsonl(reader: impl Read) -> Result<Vec<SkeletonSequence>> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let seq = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
        out.push(seq);
    }
    Ok(out)
}

pub fn write_jsonl(mut writer: impl Write, seqs: &[SkeletonSequence]) -> Result<()> {
    for seq in seqs {
        serde_json::to_writer(&mut writer, seq)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Class names, one per line; blank lines and `#` comments are skipped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    pub names: Vec<String>,
}

impl LabelSet {
    pub fn parse(text: &str) -> LabelSet {
        LabelSet {
            names: text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect(),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<LabelSet> {
        Ok(Self::parse(&fs::read_to_string(path)?))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}
