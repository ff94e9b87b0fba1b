//! Recursive character splitting with overlap.
//!
//! Offsets are in Unicode scalar values (chars), not bytes. The splitter first
//! breaks text into atomic pieces no longer than `chunk_size` (trying each
//! separator in order, falling back to a sliding window), then greedily merges
//! the pieces into spans. Overlap is carried back only where a span is cut
//! because the next piece does not fit.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, MediaType};
use crate::digest::fnv1a64_hex;

pub const DEFAULT_CHUNK_SIZE: usize = 1000;
pub const DEFAULT_OVERLAP: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitParams {
    pub chunk_size: usize,
    pub overlap: usize,
    pub separators: Vec<String>,
}

impl Default for SplitParams {
    fn default() -> Self {
        Self {
            chunk_size: DEFAULT_CHUNK_SIZE,
            overlap: DEFAULT_OVERLAP,
            separators: ["\n\n", "\n", " ", ""].iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl SplitParams {
    pub fn new(chunk_size: usize, overlap: usize) -> Result<Self, SplitError> {
        let params = Self {
            chunk_size,
            overlap,
            ..Self::default()
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), SplitError> {
        if self.chunk_size == 0 {
            return Err(SplitError::ZeroChunkSize);
        }
        if self.overlap >= self.chunk_size {
            return Err(SplitError::OverlapTooLarge {
                overlap: self.overlap,
                chunk_size: self.chunk_size,
            });
        }
        if self.separators.last().map(String::as_str) != Some("") {
            return Err(SplitError::MissingFallbackSeparator);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplitError {
    #[error("chunk_size must be positive")]
    ZeroChunkSize,
    #[error("overlap {overlap} must be smaller than chunk_size {chunk_size}")]
    OverlapTooLarge { overlap: usize, chunk_size: usize },
    #[error("the last separator must be the empty string")]
    MissingFallbackSeparator,
}

/// Half-open char range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// The atomic retrieval unit: a span of one document plus provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub source_id: String,
    pub uri: String,
    pub media_type: MediaType,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub digest: String,
    pub fetched_at: DateTime<Utc>,
}

pub fn chunk_id(doc_id: &str, start: usize, end: usize) -> String {
    format!("{doc_id}#{start}-{end}")
}

pub fn split_recursive(text: &str, params: &SplitParams) -> Result<Vec<Span>, SplitError> {
    params.validate()?;
    let chars: Vec<char> = text.chars().collect();
    Ok(split_chars(&chars, params))
}

fn split_chars(chars: &[char], params: &SplitParams) -> Vec<Span> {
    let len = chars.len();
    if len == 0 {
        return Vec::new();
    }
    if len <= params.chunk_size {
        return vec![Span { start: 0, end: len }];
    }
    let separators: Vec<Vec<char>> = params.separators.iter().map(|s| s.chars().collect()).collect();
    let mut pieces = Vec::new();
    collect_pieces(chars, Span { start: 0, end: len }, &separators, params, &mut pieces);
    merge_pieces(&pieces, params)
}

fn occurs(chars: &[char], sep: &[char]) -> bool {
    sep.is_empty() || chars.windows(sep.len()).any(|w| w == sep)
}

fn collect_pieces(
    chars: &[char],
    range: Span,
    separators: &[Vec<char>],
    params: &SplitParams,
    out: &mut Vec<Span>,
) {
    if range.len() <= params.chunk_size {
        out.push(range);
        return;
    }
    let slice = &chars[range.start..range.end];
    let Some(idx) = separators.iter().position(|sep| occurs(slice, sep)) else {
        sliding_windows(range, params, out);
        return;
    };
    let sep = &separators[idx];
    if sep.is_empty() {
        sliding_windows(range, params, out);
        return;
    }

    // Separator characters stay with the piece that precedes them.
    let mut pieces = Vec::new();
    let mut piece_start = range.start;
    let mut i = range.start;
    while i + sep.len() <= range.end {
        if chars[i..i + sep.len()] == sep[..] {
            i += sep.len();
            pieces.push(Span { start: piece_start, end: i });
            piece_start = i;
        } else {
            i += 1;
        }
    }
    if piece_start < range.end {
        pieces.push(Span { start: piece_start, end: range.end });
    }

    let rest = &separators[idx + 1..];
    for piece in pieces {
        if piece.len() <= params.chunk_size {
            out.push(piece);
        } else {
            collect_pieces(chars, piece, rest, params, out);
        }
    }
}

fn sliding_windows(range: Span, params: &SplitParams, out: &mut Vec<Span>) {
    let step = params.chunk_size - params.overlap;
    let mut start = range.start;
    loop {
        if start + params.chunk_size >= range.end {
            out.push(Span {
                start: range.end - params.chunk_size,
                end: range.end,
            });
            return;
        }
        out.push(Span {
            start,
            end: start + params.chunk_size,
        });
        start += step;
    }
}

fn merge_pieces(pieces: &[Span], params: &SplitParams) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut current: Option<Span> = None;
    for &piece in pieces {
        let Some(cur) = current else {
            current = Some(piece);
            continue;
        };
        let end = cur.end.max(piece.end);
        if end - cur.start <= params.chunk_size {
            current = Some(Span { start: cur.start, end });
            continue;
        }
        spans.push(cur);
        // Carry back `overlap` chars, never past the piece's own start when it
        // already overlaps, never so far that the span exceeds chunk_size, and
        // always strictly after the previous span's start.
        let carried = cur.end.saturating_sub(params.overlap).min(piece.start);
        let start = carried
            .max(piece.end.saturating_sub(params.chunk_size))
            .max(cur.start + 1);
        current = Some(Span { start, end: piece.end });
    }
    spans.extend(current);
    spans
}

pub fn chunk_document(doc: &Document, params: &SplitParams) -> Result<Vec<Chunk>, SplitError> {
    params.validate()?;
    let chars: Vec<char> = doc.text.chars().collect();
    let spans = split_chars(&chars, params);
    Ok(spans
        .into_iter()
        .map(|span| {
            let text: String = chars[span.start..span.end].iter().collect();
            Chunk {
                chunk_id: chunk_id(&doc.doc_id, span.start, span.end),
                doc_id: doc.doc_id.clone(),
                source_id: doc.source_id.clone(),
                uri: doc.uri.clone(),
                media_type: doc.media_type,
                start: span.start,
                end: span.end,
                digest: fnv1a64_hex(text.as_bytes()),
                text,
                fetched_at: doc.fetched_at,
            }
        })
        .collect())
}
