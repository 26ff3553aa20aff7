//! Frame embeddings and the `EMBS` binary stream format.
//!
//! Layout, all integers little-endian:
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `EMBS`                           |
//! | 4      | 4    | version (`u32`, currently 1)           |
//! | 8      | 4    | dim (`u32`)                            |
//! | 12     | 8    | frame count (`u64`, 0 = unbounded)     |
//! | 20     | 4    | fps numerator (`u32`)                  |
//! | 24     | 4    | fps denominator (`u32`, 0/0 = absent)  |
//! | 28     | ...  | rows of `dim` IEEE-754 `f32` values    |
//!
//! The reader is incremental: it never holds more than one row, so unbounded
//! streams (e.g. a pipe from an encoder) can be consumed frame by frame.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

pub const STREAM_MAGIC: [u8; 4] = *b"EMBS";
pub const STREAM_VERSION: u32 = 1;
pub const HEADER_SIZE: usize = 28;

/// One frame's feature vector, tagged with its position in the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEmbedding {
    pub index: u64,
    pub vector: Vec<f32>,
}

impl FrameEmbedding {
    pub fn new(index: u64, vector: Vec<f32>) -> Self {
        Self { index, vector }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    /// Position of the first non-finite component, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.vector.iter().position(|x| !x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fps {
    pub num: u32,
    pub den: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub dim: u32,
    /// Declared number of rows; 0 means unbounded (read until end of bytes).
    pub frame_count: u64,
    pub fps: Option<Fps>,
}

impl StreamHeader {
    pub fn bounded(dim: u32, frame_count: u64) -> Self {
        Self { dim, frame_count, fps: None }
    }

    pub fn unbounded(dim: u32) -> Self {
        Self { dim, frame_count: 0, fps: None }
    }

    pub fn with_fps(mut self, num: u32, den: u32) -> Self {
        self.fps = Some(Fps { num, den });
        self
    }

    pub fn is_unbounded(&self) -> bool {
        self.frame_count == 0
    }

    pub fn row_bytes(&self) -> usize {
        self.dim as usize * 4
    }

    pub fn to_bytes(&self) -> [u8; HEADER_SIZE] {
        let mut out = [0u8; HEADER_SIZE];
        out[0..4].copy_from_slice(&STREAM_MAGIC);
        out[4..8].copy_from_slice(&STREAM_VERSION.to_le_bytes());
        out[8..12].copy_from_slice(&self.dim.to_le_bytes());
        out[12..20].copy_from_slice(&self.frame_count.to_le_bytes());
        let (num, den) = self.fps.map_or((0, 0), |f| (f.num, f.den));
        out[20..24].copy_from_slice(&num.to_le_bytes());
        out[24..28].copy_from_slice(&den.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8; HEADER_SIZE]) -> Result<Self> {
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != STREAM_MAGIC {
            return Err(Error::BadMagic { expected: STREAM_MAGIC, found: magic });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != STREAM_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if dim == 0 {
            return Err(Error::InvalidConfig("stream dim must be at least 1".into()));
        }
        let frame_count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let num = u32::from_le_bytes(bytes[20..24].try_into().unwrap());
        let den = u32::from_le_bytes(bytes[24..28].try_into().unwrap());
        let fps = (num != 0 || den != 0).then_some(Fps { num, den });
        Ok(Self { dim, frame_count, fps })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Pass NaN/Inf components through instead of failing.
    pub allow_non_finite: bool,
}

/// Incremental `EMBS` reader. Yields frames in order and stops at the
/// declared count or at end of input for unbounded streams.
pub struct StreamReader<R> {
    inner: R,
    header: StreamHeader,
    options: ReadOptions,
    next_index: u64,
    consumed: u64,
    row: Vec<u8>,
    done: bool,
}

impl<R: Read> StreamReader<R> {
    pub fn new(inner: R) -> Result<Self> {
        Self::with_options(inner, ReadOptions::default())
    }

    pub fn with_options(mut inner: R, options: ReadOptions) -> Result<Self> {
        let mut raw = [0u8; HEADER_SIZE];
        let got = read_full(&mut inner, &mut raw)?;
        if got < 4 {
            return Err(Error::TruncatedHeader);
        }
        let magic: [u8; 4] = raw[0..4].try_into().unwrap();
        if magic != STREAM_MAGIC {
            return Err(Error::BadMagic { expected: STREAM_MAGIC, found: magic });
        }
        if got < HEADER_SIZE {
            return Err(Error::TruncatedHeader);
        }
        let header = StreamHeader::from_bytes(&raw)?;
        Ok(Self {
            inner,
            row: vec![0u8; header.row_bytes()],
            header,
            options,
            next_index: 0,
            consumed: HEADER_SIZE as u64,
            done: false,
        })
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    /// Bytes consumed from the source so far, header included.
    pub fn bytes_consumed(&self) -> u64 {
        self.consumed
    }

    fn read_row(&mut self) -> Result<Option<FrameEmbedding>> {
        if !self.header.is_unbounded() && self.next_index >= self.header.frame_count {
            return Ok(None);
        }
        let got = read_full(&mut self.inner, &mut self.row)?;
        self.consumed += got as u64;
        if got == 0 {
            if !self.header.is_unbounded() {
                return Err(Error::MissingFrames {
                    declared: self.header.frame_count,
                    got: self.next_index,
                });
            }
            return Ok(None);
        }
        if got < self.row.len() {
            return Err(Error::TruncatedRow(self.next_index));
        }
        let vector: Vec<f32> = self
            .row
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let frame = FrameEmbedding::new(self.next_index, vector);
        if !self.options.allow_non_finite {
            if let Some(position) = frame.first_non_finite() {
                return Err(Error::NonFinite { frame: frame.index, position });
            }
        }
        self.next_index += 1;
        Ok(Some(frame))
    }
}

impl<R: Read> Iterator for StreamReader<R> {
    type Item = Result<FrameEmbedding>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_row() {
            Ok(Some(frame)) => Some(Ok(frame)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Reads until `buf` is full or the source is exhausted; returns bytes read.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Sequential `EMBS` writer. Validates every row before it touches the sink.
pub struct StreamWriter<W: Write> {
    inner: W,
    header: StreamHeader,
    written: u64,
}

impl<W: Write> StreamWriter<W> {
    pub fn new(mut inner: W, header: StreamHeader) -> Result<Self> {
        if header.dim == 0 {
            return Err(Error::InvalidConfig("stream dim must be at least 1".into()));
        }
        inner.write_all(&header.to_bytes())?;
        Ok(Self { inner, header, written: 0 })
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    pub fn frames_written(&self) -> u64 {
        self.written
    }

    pub fn write_frame(&mut self, frame: &FrameEmbedding) -> Result<()> {
        if frame.index != self.written {
            return Err(Error::OutOfOrder { expected: self.written, got: frame.index });
        }
        self.write_row(&frame.vector)
    }

    /// Appends a row, assigning it the next index.
    pub fn write_row(&mut self, vector: &[f32]) -> Result<()> {
        if vector.len() != self.header.dim as usize {
            return Err(Error::DimensionMismatch {
                expected: self.header.dim as usize,
                got: vector.len(),
            });
        }
        if let Some(position) = vector.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { frame: self.written, position });
        }
        if !self.header.is_unbounded() && self.written >= self.header.frame_count {
            return Err(Error::InvalidConfig(format!(
                "header declares {} frames, refusing to write more",
                self.header.frame_count
            )));
        }
        let mut row = Vec::with_capacity(vector.len() * 4);
        for x in vector {
            row.extend_from_slice(&x.to_le_bytes());
        }
        self.inner.write_all(&row)?;
        self.written += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }

    /// Checks the declared count was honoured and hands back the sink.
    pub fn finish(mut self) -> Result<W> {
        if !self.header.is_unbounded() && self.written != self.header.frame_count {
            return Err(Error::MissingFrames {
                declared: self.header.frame_count,
                got: self.written,
            });
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn write_stream(header: &StreamHeader, frames: &[FrameEmbedding]) -> Result<Vec<u8>> {
    let mut writer =
        StreamWriter::new(Vec::with_capacity(HEADER_SIZE + frames.len() * header.row_bytes()), *header)?;
    for frame in frames {
        writer.write_frame(frame)?;
    }
    writer.finish()
}

pub fn read_stream(bytes: &[u8]) -> Result<(StreamHeader, Vec<FrameEmbedding>)> {
    read_stream_with(bytes, ReadOptions::default())
}

pub fn read_stream_with(
    bytes: &[u8],
    options: ReadOptions,
) -> Result<(StreamHeader, Vec<FrameEmbedding>)> {
    let reader = StreamReader::with_options(bytes, options)?;
    let header = *reader.header();
    let frames = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, frames))
}

/// Scales `v` to unit L2 norm.
pub fn normalize_frame(v: &[f64]) -> Result<Vec<f64>> {
    let n = crate::linalg::norm(v);
    if !n.is_finite() {
        return Err(Error::NonFinite { frame: 0, position: v.iter().position(|x| !x.is_finite()).unwrap_or(0) });
    }
    if n < 1e-12 {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| x / n).collect())
}
