//! Exact set algebra over packet-header predicates.
//!
//! A [`HeaderSet`] denotes a set of packet headers drawn from a fixed-width
//! header vector (by default the 32-bit destination IPv4 address). The
//! representation is a normalized list of disjoint, sorted, inclusive value
//! runs, which keeps every operation exact and makes equal sets compare
//! equal structurally. All binary operations require both operands to share
//! the same [`HeaderSchema`].

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum supported header width in bits.
pub const MAX_WIDTH: u8 = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HeaderSpaceError {
    #[error("header width {0} out of range (1..={MAX_WIDTH})")]
    WidthOutOfRange(u8),
    #[error("prefix length {len} exceeds header width {width}")]
    PrefixTooLong { len: u8, width: u8 },
    #[error("value {value:#x} does not fit in {width}-bit header")]
    ValueTooWide { value: u64, width: u8 },
    #[error("range start {lo:#x} greater than end {hi:#x}")]
    EmptyRange { lo: u64, hi: u64 },
    #[error("schema mismatch: {0}-bit vs {1}-bit operands")]
    SchemaMismatch(u8, u8),
    #[error("cannot sample from the empty set")]
    EmptySample,
    #[error("invalid header literal {literal:?}: {reason}")]
    BadLiteral { literal: String, reason: String },
}

/// The header vector over which sets are formed: a single field of
/// `width` bits. Tests use narrow toy widths so that brute-force oracles
/// can materialize the whole universe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HeaderSchema {
    width: u8,
}

impl HeaderSchema {
    /// The evaluation default: 32-bit destination IPv4 address space.
    pub const IPV4_DST: HeaderSchema = HeaderSchema { width: 32 };

    pub fn new(width: u8) -> Result<Self, HeaderSpaceError> {
        if width == 0 || width > MAX_WIDTH {
            return Err(HeaderSpaceError::WidthOutOfRange(width));
        }
        Ok(HeaderSchema { width })
    }

    pub fn width(&self) -> u8 {
        self.width
    }

    /// Largest representable header value.
    pub fn max_value(&self) -> u32 {
        if self.width == 32 {
            u32::MAX
        } else {
            (1u32 << self.width) - 1
        }
    }

    /// |U| = 2^width.
    pub fn universe_size(&self) -> u64 {
        1u64 << self.width
    }

    fn check_value(&self, value: u32) -> Result<(), HeaderSpaceError> {
        if value > self.max_value() {
            return Err(HeaderSpaceError::ValueTooWide {
                value: value as u64,
                width: self.width,
            });
        }
        Ok(())
    }
}

impl Default for HeaderSchema {
    fn default() -> Self {
        Self::IPV4_DST
    }
}

/// An immutable predicate over the header space: a canonical union of
/// disjoint inclusive runs. Two values denoting the same set are equal
/// under `==` and hash identically.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HeaderSet {
    schema: HeaderSchema,
    /// Sorted, pairwise disjoint, non-adjacent inclusive runs `[lo, hi]`.
    runs: Vec<(u32, u32)>,
}

impl HeaderSet {
    pub fn empty(schema: HeaderSchema) -> Self {
        HeaderSet { schema, runs: Vec::new() }
    }

    pub fn universe(schema: HeaderSchema) -> Self {
        HeaderSet { schema, runs: vec![(0, schema.max_value())] }
    }

    pub fn singleton(schema: HeaderSchema, value: u32) -> Result<Self, HeaderSpaceError> {
        schema.check_value(value)?;
        Ok(HeaderSet { schema, runs: vec![(value, value)] })
    }

    /// Inclusive range `[lo, hi]`.
    pub fn from_range(schema: HeaderSchema, lo: u32, hi: u32) -> Result<Self, HeaderSpaceError> {
        schema.check_value(lo)?;
        schema.check_value(hi)?;
        if lo > hi {
            return Err(HeaderSpaceError::EmptyRange { lo: lo as u64, hi: hi as u64 });
        }
        Ok(HeaderSet { schema, runs: vec![(lo, hi)] })
    }

    /// All headers sharing the top `prefix_len` bits of `address`. Host
    /// bits below the prefix are ignored. Cardinality is
    /// `2^(width - prefix_len)`.
    pub fn from_prefix(
        schema: HeaderSchema,
        address: u32,
        prefix_len: u8,
    ) -> Result<Self, HeaderSpaceError> {
        if prefix_len > schema.width() {
            return Err(HeaderSpaceError::PrefixTooLong { len: prefix_len, width: schema.width() });
        }
        schema.check_value(address)?;
        if prefix_len == 0 {
            return Ok(Self::universe(schema));
        }
        let host_bits = schema.width() - prefix_len;
        let block = if host_bits == 32 { u32::MAX } else { (1u32 << host_bits) - 1 };
        let lo = address & !block;
        let hi = lo | block;
        Ok(HeaderSet { schema, runs: vec![(lo, hi)] })
    }

    /// Build from arbitrary inclusive runs (normalizes).
    pub fn from_runs<I>(schema: HeaderSchema, runs: I) -> Result<Self, HeaderSpaceError>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut collected: Vec<(u32, u32)> = Vec::new();
        for (lo, hi) in runs {
            schema.check_value(lo)?;
            schema.check_value(hi)?;
            if lo > hi {
                return Err(HeaderSpaceError::EmptyRange { lo: lo as u64, hi: hi as u64 });
            }
            collected.push((lo, hi));
        }
        collected.sort_unstable();
        let mut normalized: Vec<(u32, u32)> = Vec::with_capacity(collected.len());
        for (lo, hi) in collected {
            match normalized.last_mut() {
                // merge overlapping or adjacent runs
                Some((_, prev_hi)) if lo as u64 <= *prev_hi as u64 + 1 => {
                    *prev_hi = (*prev_hi).max(hi);
                }
                _ => normalized.push((lo, hi)),
            }
        }
        Ok(HeaderSet { schema, runs: normalized })
    }

    pub fn schema(&self) -> HeaderSchema {
        self.schema
    }

    pub fn runs(&self) -> &[(u32, u32)] {
        &self.runs
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    /// Exact element count. Fits in u64 up to the full 2^32 universe.
    pub fn cardinality(&self) -> u64 {
        self.runs.iter().map(|&(lo, hi)| hi as u64 - lo as u64 + 1).sum()
    }

    pub fn contains(&self, value: u32) -> bool {
        self.runs
            .binary_search_by(|&(lo, hi)| {
                if value < lo {
                    std::cmp::Ordering::Greater
                } else if value > hi {
                    std::cmp::Ordering::Less
                } else {
                    std::cmp::Ordering::Equal
                }
            })
            .is_ok()
    }

    fn check_schema(&self, other: &HeaderSet) -> Result<(), HeaderSpaceError> {
        if self.schema != other.schema {
            return Err(HeaderSpaceError::SchemaMismatch(self.schema.width, other.schema.width));
        }
        Ok(())
    }

    pub fn union(&self, other: &HeaderSet) -> Result<HeaderSet, HeaderSpaceError> {
        self.check_schema(other)?;
        let mut runs = Vec::with_capacity(self.runs.len() + other.runs.len());
        runs.extend_from_slice(&self.runs);
        runs.extend_from_slice(&other.runs);
        HeaderSet::from_runs(self.schema, runs)
    }

    pub fn intersect(&self, other: &HeaderSet) -> Result<HeaderSet, HeaderSpaceError> {
        self.check_schema(other)?;
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.runs.len() && j < other.runs.len() {
            let (alo, ahi) = self.runs[i];
            let (blo, bhi) = other.runs[j];
            let lo = alo.max(blo);
            let hi = ahi.min(bhi);
            if lo <= hi {
                out.push((lo, hi));
            }
            if ahi < bhi {
                i += 1;
            } else {
                j += 1;
            }
        }
        Ok(HeaderSet { schema: self.schema, runs: out })
    }

    /// Set difference `self - other`.
    pub fn difference(&self, other: &HeaderSet) -> Result<HeaderSet, HeaderSpaceError> {
        self.check_schema(other)?;
        let mut out = Vec::new();
        let mut j = 0;
        for &(lo, hi) in &self.runs {
            let mut cursor = lo as u64;
            while j < other.runs.len() && other.runs[j].1 < lo {
                j += 1;
            }
            let mut k = j;
            while k < other.runs.len() && other.runs[k].0 as u64 <= hi as u64 {
                let (blo, bhi) = other.runs[k];
                if (blo as u64) > cursor {
                    out.push((cursor as u32, blo - 1));
                }
                cursor = cursor.max(bhi as u64 + 1);
                if cursor > hi as u64 {
                    break;
                }
                k += 1;
            }
            if cursor <= hi as u64 {
                out.push((cursor as u32, hi));
            }
        }
        Ok(HeaderSet { schema: self.schema, runs: out })
    }

    pub fn complement(&self) -> HeaderSet {
        HeaderSet::universe(self.schema)
            .difference(self)
            .expect("same schema")
    }

    pub fn is_subset(&self, other: &HeaderSet) -> Result<bool, HeaderSpaceError> {
        self.check_schema(other)?;
        Ok(self.difference(other)?.is_empty())
    }

    pub fn is_disjoint(&self, other: &HeaderSet) -> Result<bool, HeaderSpaceError> {
        Ok(self.intersect(other)?.is_empty())
    }

    /// The k-th smallest member (0-based).
    pub fn nth(&self, mut index: u64) -> Option<u32> {
        for &(lo, hi) in &self.runs {
            let len = hi as u64 - lo as u64 + 1;
            if index < len {
                return Some(lo + index as u32);
            }
            index -= len;
        }
        None
    }

    /// Uniform random member.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u32, HeaderSpaceError> {
        let total = self.cardinality();
        if total == 0 {
            return Err(HeaderSpaceError::EmptySample);
        }
        let index = rng.gen_range(0..total);
        Ok(self.nth(index).expect("index < cardinality"))
    }

    /// Ascending iteration over all members.
    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.runs.iter().flat_map(|&(lo, hi)| RunIter { next: lo as u64, hi: hi as u64 })
    }

    /// Parse the textual literal syntax. For 32-bit schemas:
    /// `"10.1.1.0/28"`, `"10.1.1.0-10.1.1.79"`, or a single dotted quad.
    /// Narrow schemas use plain integers: `"17"`, `"0x20-0x3f"`, `"8/5"`.
    pub fn parse(schema: HeaderSchema, literal: &str) -> Result<Self, HeaderSpaceError> {
        let bad = |reason: &str| HeaderSpaceError::BadLiteral {
            literal: literal.to_string(),
            reason: reason.to_string(),
        };
        let text = literal.trim();
        if let Some((addr, len)) = text.split_once('/') {
            let address = parse_value(schema, addr).ok_or_else(|| bad("bad prefix address"))?;
            let prefix_len: u8 = len.trim().parse().map_err(|_| bad("bad prefix length"))?;
            return Self::from_prefix(schema, address, prefix_len);
        }
        if let Some((lo, hi)) = text.split_once('-') {
            let lo = parse_value(schema, lo).ok_or_else(|| bad("bad range start"))?;
            let hi = parse_value(schema, hi).ok_or_else(|| bad("bad range end"))?;
            return Self::from_range(schema, lo, hi);
        }
        let value = parse_value(schema, text).ok_or_else(|| bad("bad header value"))?;
        Self::singleton(schema, value)
    }

    /// Render one header value in the schema's literal syntax.
    pub fn format_value(schema: HeaderSchema, value: u32) -> String {
        if schema.width() == 32 {
            let b = value.to_be_bytes();
            format!("{}.{}.{}.{}", b[0], b[1], b[2], b[3])
        } else {
            format!("{value}")
        }
    }
}

struct RunIter {
    next: u64,
    hi: u64,
}

impl Iterator for RunIter {
    type Item = u32;
    fn next(&mut self) -> Option<u32> {
        if self.next > self.hi {
            None
        } else {
            let v = self.next as u32;
            self.next += 1;
            Some(v)
        }
    }
}

fn parse_value(schema: HeaderSchema, text: &str) -> Option<u32> {
    let text = text.trim();
    if schema.width() == 32 && text.contains('.') {
        let mut bytes = [0u8; 4];
        let mut parts = text.split('.');
        for slot in &mut bytes {
            *slot = parts.next()?.parse().ok()?;
        }
        if parts.next().is_some() {
            return None;
        }
        return Some(u32::from_be_bytes(bytes));
    }
    if let Some(hex) = text.strip_prefix("0x") {
        return u32::from_str_radix(hex, 16).ok().filter(|v| *v <= schema.max_value());
    }
    text.parse::<u32>().ok().filter(|v| *v <= schema.max_value())
}

impl fmt::Display for HeaderSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.runs.is_empty() {
            return write!(f, "empty");
        }
        let mut first = true;
        for &(lo, hi) in &self.runs {
            if !first {
                write!(f, ",")?;
            }
            first = false;
            if lo == hi {
                write!(f, "{}", Self::format_value(self.schema, lo))?;
            } else {
                write!(
                    f,
                    "{}-{}",
                    Self::format_value(self.schema, lo),
                    Self::format_value(self.schema, hi)
                )?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for HeaderSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HeaderSet(w{}, {})", self.schema.width(), self)
    }
}
