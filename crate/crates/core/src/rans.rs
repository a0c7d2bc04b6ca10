//! 64-bit range ANS with 32-bit renormalization.
//!
//! The state lives in `[2^32, 2^64)`. Symbols are encoded in reverse so the
//! decoder reads forward. A segment is laid out as
//!
//! ```text
//! final state: u64 LE | renormalization words: u32 LE ...
//! ```
//!
//! with the words in the order the decoder consumes them. Decoding checks
//! that the state returns to its initial value and that every byte was
//! consumed, which catches truncation, tampering and wrong symbol counts.

use crate::entropy::{QuantizedCdfTable, CDF_BITS};
use crate::error::{corrupt, invalid, Result};

/// Lower bound of the normalized state, also the initial encoder state.
pub const RANS_LOWER_BOUND: u64 = 1 << 32;
const SLOT_MASK: u64 = (1 << CDF_BITS) - 1;

/// Flushed coder output for one symbol stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment(pub Vec<u8>);

impl Segment {
    pub fn bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Encodes `symbols[i]` under `tables[i]`.
pub fn encode(symbols: &[usize], tables: &[&QuantizedCdfTable]) -> Result<Segment> {
    if symbols.len() != tables.len() {
        return invalid(format!("{} symbols but {} tables", symbols.len(), tables.len()));
    }
    let mut state = RANS_LOWER_BOUND;
    let mut words: Vec<u32> = Vec::with_capacity(symbols.len() / 2 + 1);
    for (&sym, table) in symbols.iter().zip(tables).rev() {
        if sym >= table.symbols() {
            return invalid(format!("symbol {sym} outside alphabet of {}", table.symbols()));
        }
        let freq = table.freq(sym) as u64;
        if freq == 0 {
            return invalid(format!("symbol {sym} has zero frequency"));
        }
        let start = table.start(sym) as u64;
        // x >= freq << (64 - CDF_BITS) would overflow the update below
        if state >> (64 - CDF_BITS) >= freq {
            words.push(state as u32);
            state >>= 32;
        }
        state = ((state / freq) << CDF_BITS) + (state % freq) + start;
    }
    let mut out = Vec::with_capacity(8 + 4 * words.len());
    out.extend_from_slice(&state.to_le_bytes());
    for w in words.iter().rev() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    Ok(Segment(out))
}

/// Streaming decoder over one segment.
pub struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
    state: u64,
}

impl<'a> Decoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return corrupt(format!("segment of {} bytes is shorter than the state flush", bytes.len()));
        }
        if !(bytes.len() - 8).is_multiple_of(4) {
            return corrupt("segment length is not a whole number of words");
        }
        let state = u64::from_le_bytes(bytes[..8].try_into().unwrap());
        if state < RANS_LOWER_BOUND {
            return corrupt("initial state below lower bound");
        }
        Ok(Self { bytes, pos: 8, state })
    }

    pub fn decode(&mut self, table: &QuantizedCdfTable) -> Result<usize> {
        let slot = (self.state & SLOT_MASK) as u32;
        let sym = table.symbol_for_slot(slot);
        let freq = table.freq(sym) as u64;
        let start = table.start(sym) as u64;
        self.state = freq * (self.state >> CDF_BITS) + slot as u64 - start;
        if self.state < RANS_LOWER_BOUND {
            let Some(word) = self.bytes.get(self.pos..self.pos + 4) else {
                return corrupt("segment truncated");
            };
            self.state = (self.state << 32) | u32::from_le_bytes(word.try_into().unwrap()) as u64;
            self.pos += 4;
            if self.state < RANS_LOWER_BOUND {
                return corrupt("state underflow");
            }
        }
        Ok(sym)
    }

    /// Checks that the stream ended exactly where the encoder started.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return corrupt(format!("{} unread bytes in segment", self.bytes.len() - self.pos));
        }
        if self.state != RANS_LOWER_BOUND {
            return corrupt("final state mismatch");
        }
        Ok(())
    }
}

/// Decodes `count` symbols, the i-th under `tables[i]`.
pub fn decode(segment: &[u8], tables: &[&QuantizedCdfTable], count: usize) -> Result<Vec<usize>> {
    if tables.len() != count {
        return invalid(format!("{count} symbols requested with {} tables", tables.len()));
    }
    let mut dec = Decoder::new(segment)?;
    let out = tables.iter().map(|t| dec.decode(t)).collect::<Result<Vec<_>>>()?;
    dec.finish()?;
    Ok(out)
}

/// Ideal code length in bits of `symbols` under their tables.
pub fn ideal_bits(symbols: &[usize], tables: &[&QuantizedCdfTable]) -> f64 {
    symbols.iter().zip(tables).map(|(&s, t)| t.bits(s)).sum()
}
