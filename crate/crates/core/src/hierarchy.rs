//! Event hierarchy: latent tokens, segments, the per-level segment lists, the
//! JSON Lines segment record and summary statistics.
//!
//! Token ordinals are counted per level from zero. A level-1 token is one
//! frame, so its ordinal is the frame index. The `k`-th level-`l+1` token is
//! the promoted latent of the `k`-th finalized level-`l` segment, which makes
//! parent/child lookup a plain index.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::FrameEmbedding;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentToken {
    pub level: usize,
    /// Ordinal of this token within its level.
    pub ordinal: u64,
    /// First source frame covered.
    pub start_frame: u64,
    /// Last source frame covered.
    pub time: u64,
    pub vector: Vec<f64>,
    /// Prediction error recorded when the token arrived; 0 for bootstrap tokens.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSegment {
    pub level: usize,
    /// Inclusive token-ordinal span at `level`.
    pub start: u64,
    pub end: u64,
    pub start_frame: u64,
    pub end_frame: u64,
    /// Token payloads. Empty when the engine runs without token retention.
    pub tokens: Vec<LatentToken>,
    /// Absolute ordinal of the maximal-error token (earliest on ties).
    pub essential_index: u64,
    pub essential_frame: u64,
    pub error_peak: f64,
    /// Latent of the segment at finalization; promoted to the next level.
    pub embedding: Vec<f64>,
    pub finalized: bool,
    /// Closed by a flush rather than by a confirmed boundary.
    pub provisional: bool,
}

impl EventSegment {
    pub fn token_count(&self) -> u64 {
        self.end - self.start + 1
    }

    pub fn frame_count(&self) -> u64 {
        self.end_frame - self.start_frame + 1
    }

    pub fn to_record(&self, with_embedding: bool) -> SegmentRecord {
        SegmentRecord {
            level: self.level,
            start_frame: self.start_frame,
            end_frame: self.end_frame,
            essential_frame: self.essential_frame,
            error_peak: self.error_peak,
            provisional: self.provisional,
            embedding: with_embedding.then(|| self.embedding.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventHierarchy {
    /// `levels[l - 1]` holds the level-`l` segments in temporal order.
    pub levels: Vec<Vec<EventSegment>>,
}

impl EventHierarchy {
    pub fn empty(depth: usize) -> Self {
        Self { levels: vec![Vec::new(); depth] }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, level: usize) -> &[EventSegment] {
        &self.levels[level - 1]
    }

    pub fn top_level(&self) -> &[EventSegment] {
        self.levels.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn segment_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn push(&mut self, segment: EventSegment) {
        let level = segment.level;
        self.levels[level - 1].push(segment);
    }

    /// The level-`(l-1)` segments whose promoted tokens make up `segment`.
    pub fn children(&self, segment: &EventSegment) -> Result<&[EventSegment]> {
        if segment.level < 2 {
            return Ok(&[]);
        }
        let below = self.level(segment.level - 1);
        let (s, e) = (segment.start as usize, segment.end as usize);
        if e >= below.len() {
            return Err(Error::InvalidHierarchy(format!(
                "level-{} segment spans tokens {s}..={e} but only {} level-{} segments exist",
                segment.level,
                below.len(),
                segment.level - 1
            )));
        }
        Ok(&below[s..=e])
    }

    /// Checks ordering, contiguity and exact parent/child nesting.
    pub fn validate(&self) -> Result<()> {
        for (i, segments) in self.levels.iter().enumerate() {
            let level = i + 1;
            let mut next_token = 0u64;
            let mut next_frame = segments.first().map_or(0, |s| s.start_frame);
            for seg in segments {
                if seg.level != level {
                    return Err(Error::InvalidHierarchy(format!(
                        "segment tagged level {} stored at level {level}",
                        seg.level
                    )));
                }
                if seg.start != next_token || seg.end < seg.start {
                    return Err(Error::InvalidHierarchy(format!(
                        "level-{level} token span {}..={} is not contiguous (expected start {next_token})",
                        seg.start, seg.end
                    )));
                }
                if seg.start_frame != next_frame || seg.end_frame < seg.start_frame {
                    return Err(Error::InvalidHierarchy(format!(
                        "level-{level} frame span {}..={} is not contiguous",
                        seg.start_frame, seg.end_frame
                    )));
                }
                if !(seg.start..=seg.end).contains(&seg.essential_index) {
                    return Err(Error::InvalidHierarchy(format!(
                        "essential index {} outside {}..={}",
                        seg.essential_index, seg.start, seg.end
                    )));
                }
                if !seg.tokens.is_empty() {
                    if seg.tokens.len() as u64 != seg.token_count() {
                        return Err(Error::InvalidHierarchy("token count does not match span".into()));
                    }
                    if seg.tokens.windows(2).any(|w| w[0].time >= w[1].time) {
                        return Err(Error::InvalidHierarchy("tokens not in time order".into()));
                    }
                }
                if level > 1 {
                    let children = self.children(seg)?;
                    let first = &children[0];
                    let last = &children[children.len() - 1];
                    if first.start_frame != seg.start_frame || last.end_frame != seg.end_frame {
                        return Err(Error::InvalidHierarchy(format!(
                            "level-{level} segment frames {}..={} do not match its children",
                            seg.start_frame, seg.end_frame
                        )));
                    }
                }
                next_token = seg.end + 1;
                next_frame = seg.end_frame + 1;
            }
            if level > 1 && next_token > self.levels[i - 1].len() as u64 {
                return Err(Error::InvalidHierarchy(format!(
                    "level {level} has more tokens than level {} has segments",
                    level - 1
                )));
            }
        }
        Ok(())
    }
}

/// One line of the hierarchy JSON Lines output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub level: usize,
    pub start_frame: u64,
    pub end_frame: u64,
    pub essential_frame: u64,
    pub error_peak: f64,
    #[serde(default)]
    pub provisional: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

pub fn write_record<W: Write>(out: &mut W, segment: &EventSegment, with_embedding: bool) -> Result<()> {
    let line = serde_json::to_string(&segment.to_record(with_embedding))
        .map_err(|e| Error::Malformed(e.to_string()))?;
    out.write_all(line.as_bytes())?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<SegmentRecord>> {
    let mut records = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SegmentRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Malformed(format!("line {}: {e}", n + 1)))?;
        if record.level == 0 {
            return Err(Error::Malformed(format!("line {}: level must be >= 1", n + 1)));
        }
        records.push(record);
    }
    Ok(records)
}

/// Rebuilds a hierarchy from segment records plus the frames they were
/// computed from.
///
/// Level-1 tokens are the (unit-normalized) frames; level-`l` tokens are the
/// embeddings of the level-`(l-1)` records. Records only carry the peak error,
/// so each rebuilt segment gets `error_peak` on its essential token and 0
/// elsewhere, which reproduces the original max-error selection exactly.
pub fn rebuild_hierarchy(records: &[SegmentRecord], frames: &[FrameEmbedding]) -> Result<EventHierarchy> {
    let depth = records.iter().map(|r| r.level).max().unwrap_or(0);
    let mut by_level: Vec<Vec<&SegmentRecord>> = vec![Vec::new(); depth];
    for r in records {
        by_level[r.level - 1].push(r);
    }
    for level in &mut by_level {
        level.sort_by_key(|r| r.start_frame);
    }
    if depth > 1 && records.iter().any(|r| r.level < depth && r.embedding.is_none()) {
        return Err(Error::Empty("segment embeddings"));
    }

    let mut hierarchy = EventHierarchy::empty(depth);
    for (i, level_records) in by_level.iter().enumerate() {
        let level = i + 1;
        for r in level_records {
            if r.end_frame < r.start_frame
                || !(r.start_frame..=r.end_frame).contains(&r.essential_frame)
            {
                return Err(Error::Malformed(format!(
                    "level-{level} record {}..={} has inconsistent frames",
                    r.start_frame, r.end_frame
                )));
            }
            let tokens: Vec<LatentToken> = if level == 1 {
                if r.end_frame as usize >= frames.len() {
                    return Err(Error::Malformed(format!(
                        "record ends at frame {} but the stream has {} frames",
                        r.end_frame,
                        frames.len()
                    )));
                }
                (r.start_frame..=r.end_frame)
                    .map(|f| {
                        let frame = &frames[f as usize];
                        let v = crate::stream::normalize_frame(&crate::linalg::to_f64(&frame.vector))?;
                        Ok(LatentToken {
                            level,
                            ordinal: f,
                            start_frame: f,
                            time: f,
                            error: if f == r.essential_frame { r.error_peak } else { 0.0 },
                            vector: v,
                        })
                    })
                    .collect::<Result<_>>()?
            } else {
                let below = &hierarchy.levels[i - 1];
                let first = below.partition_point(|c| c.start_frame < r.start_frame);
                let mut tokens = Vec::new();
                for (k, child) in below.iter().enumerate().skip(first) {
                    if child.start_frame > r.end_frame {
                        break;
                    }
                    tokens.push(LatentToken {
                        level,
                        ordinal: k as u64,
                        start_frame: child.start_frame,
                        time: child.end_frame,
                        error: if child.end_frame == r.essential_frame { r.error_peak } else { 0.0 },
                        vector: child.embedding.clone(),
                    });
                }
                tokens
            };
            let (Some(first), Some(last)) = (tokens.first(), tokens.last()) else {
                return Err(Error::Malformed(format!(
                    "level-{level} record {}..={} covers no tokens",
                    r.start_frame, r.end_frame
                )));
            };
            if first.start_frame != r.start_frame || last.time != r.end_frame {
                return Err(Error::Malformed(format!(
                    "level-{level} record {}..={} does not align with level-{} segments",
                    r.start_frame,
                    r.end_frame,
                    level - 1
                )));
            }
            let essential = tokens
                .iter()
                .find(|t| t.time == r.essential_frame)
                .ok_or_else(|| {
                    Error::Malformed(format!(
                        "essential frame {} is not a token boundary of its segment",
                        r.essential_frame
                    ))
                })?
                .ordinal;
            hierarchy.push(EventSegment {
                level,
                start: first.ordinal,
                end: last.ordinal,
                start_frame: r.start_frame,
                end_frame: r.end_frame,
                essential_index: essential,
                essential_frame: r.essential_frame,
                error_peak: r.error_peak,
                embedding: r.embedding.clone().unwrap_or_else(|| {
                    crate::linalg::mean(tokens.iter().map(|t| t.vector.as_slice()), tokens[0].vector.len())
                }),
                tokens,
                finalized: true,
                provisional: r.provisional,
            });
        }
    }
    hierarchy.validate()?;
    Ok(hierarchy)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyStats {
    pub counts: Vec<usize>,
    /// Mean segment length in frames, per level.
    pub mean_lengths: Vec<Option<f64>>,
    pub frames: u64,
    /// Frames per top-level segment.
    pub compression_ratio: Option<f64>,
}

/// Streaming accumulator for [`HierarchyStats`]; needs only the segments as
/// they are emitted, so it works without retaining the hierarchy.
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    counts: Vec<usize>,
    frame_totals: Vec<u64>,
}

impl StatsAccumulator {
    pub fn new(depth: usize) -> Self {
        Self { counts: vec![0; depth], frame_totals: vec![0; depth] }
    }

    pub fn observe(&mut self, segment: &EventSegment) {
        let i = segment.level - 1;
        self.counts[i] += 1;
        self.frame_totals[i] += segment.frame_count();
    }

    pub fn finish(&self) -> HierarchyStats {
        let mean_lengths = self
            .counts
            .iter()
            .zip(&self.frame_totals)
            .map(|(&c, &f)| (c > 0).then(|| f as f64 / c as f64))
            .collect();
        let frames = self.frame_totals.first().copied().unwrap_or(0);
        let top = self.counts.last().copied().unwrap_or(0);
        HierarchyStats {
            counts: self.counts.clone(),
            mean_lengths,
            frames,
            compression_ratio: (top > 0).then(|| frames as f64 / top as f64),
        }
    }
}

pub fn hierarchy_stats(h: &EventHierarchy) -> HierarchyStats {
    let mut acc = StatsAccumulator::new(h.depth());
    for seg in h.levels.iter().flatten() {
        acc.observe(seg);
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(level: usize, start: u64, end: u64) -> EventSegment {
        EventSegment {
            level,
            start,
            end,
            start_frame: start,
            end_frame: end,
            tokens: Vec::new(),
            essential_index: start,
            essential_frame: start,
            error_peak: 0.0,
            embedding: vec![1.0, 0.0],
            finalized: true,
            provisional: false,
        }
    }

    #[test]
    fn stats_two_segments() {
        let mut h = EventHierarchy::empty(1);
        h.push(leaf(1, 0, 4));
        h.push(leaf(1, 5, 9));
        let s = hierarchy_stats(&h);
        assert_eq!(s.counts, vec![2]);
        assert_eq!(s.mean_lengths, vec![Some(5.0)]);
        assert_eq!(s.compression_ratio, Some(5.0));
    }

    #[test]
    fn stats_empty() {
        let s = hierarchy_stats(&EventHierarchy::empty(3));
        assert_eq!(s.counts, vec![0, 0, 0]);
        assert_eq!(s.mean_lengths, vec![None, None, None]);
        assert_eq!(s.compression_ratio, None);
    }

    #[test]
    fn validate_catches_gaps() {
        let mut h = EventHierarchy::empty(1);
        h.push(leaf(1, 0, 4));
        h.push(leaf(1, 6, 9));
        assert!(h.validate().is_err());
    }

    #[test]
    fn record_round_trip() {
        let seg = leaf(1, 0, 4);
        let mut buf = Vec::new();
        write_record(&mut buf, &seg, true).unwrap();
        write_record(&mut buf, &seg, false).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap().find("embedding").is_none());
        let recs = read_records(&buf[..]).unwrap();
        assert_eq!(recs[0].embedding.as_deref(), Some(&[1.0, 0.0][..]));
        assert_eq!(recs[1].embedding, None);
    }

    #[test]
    fn malformed_record() {
        let err = read_records(&b"{\"level\": 1}\n"[..]).unwrap_err();
        assert!(matches!(err, Error::Malformed(_)));
    }
}
