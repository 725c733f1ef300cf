//! Bit/symbol codec.
//!
//! A 30-bit block is read as fifteen bit pairs, most significant pair first,
//! and each pair is mapped onto one of the first four primes:
//!
//! ```text
//! 00 <-> 2    01 <-> 3    10 <-> 5    11 <-> 7
//! ```
//!
//! Arbitrary byte payloads are cut into 30-bit units; the final unit is
//! zero-padded on the right and the number of meaningful bits it carries is
//! recorded separately so reassembly can drop the padding.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Bits per block.
pub const BLOCK_BITS: usize = 30;
/// Symbols per block.
pub const BLOCK_SYMBOLS: usize = BLOCK_BITS / 2;

const BLOCK_MASK: u32 = (1 << BLOCK_BITS) - 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("wrong length: expected {expected}, found {found}")]
    WrongLength { expected: usize, found: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("value {0:#x} does not fit in 30 bits")]
    BlockOverflow(u32),
    #[error("{0} is not a prime symbol (expected 2, 3, 5 or 7)")]
    InvalidSymbol(u32),
    #[error("tail bit count {0} outside 1..=30")]
    InvalidTailBits(u8),
    #[error("message of {0} bits is not a whole number of bytes")]
    NotByteAligned(usize),
}

/// One of the four primes a bit pair maps onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(into = "u8")]
pub enum PrimeSymbol {
    Two,
    Three,
    Five,
    Seven,
}

impl PrimeSymbol {
    /// All symbols in target order.
    pub const ALL: [PrimeSymbol; 4] = [Self::Two, Self::Three, Self::Five, Self::Seven];

    /// Symbol for a 2-bit pair (only the low two bits are read).
    pub const fn from_pair(pair: u8) -> Self {
        match pair & 0b11 {
            0b00 => Self::Two,
            0b01 => Self::Three,
            0b10 => Self::Five,
            _ => Self::Seven,
        }
    }

    pub const fn pair(self) -> u8 {
        self as u8
    }

    /// Slot index in target order (2, 3, 5, 7). Equal to the bit pair.
    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn from_index(index: usize) -> Option<Self> {
        if index < 4 {
            Some(Self::from_pair(index as u8))
        } else {
            None
        }
    }

    pub const fn value(self) -> i32 {
        match self {
            Self::Two => 2,
            Self::Three => 3,
            Self::Five => 5,
            Self::Seven => 7,
        }
    }

    pub fn from_value(value: u32) -> Result<Self, CodecError> {
        match value {
            2 => Ok(Self::Two),
            3 => Ok(Self::Three),
            5 => Ok(Self::Five),
            7 => Ok(Self::Seven),
            other => Err(CodecError::InvalidSymbol(other)),
        }
    }
}

impl From<PrimeSymbol> for u8 {
    fn from(p: PrimeSymbol) -> u8 {
        p.value() as u8
    }
}

impl fmt::Display for PrimeSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// A 30-bit plaintext block, stored in the low bits of a `u32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Block30(u32);

impl Block30 {
    pub fn new(value: u32) -> Result<Self, CodecError> {
        if value > BLOCK_MASK {
            return Err(CodecError::BlockOverflow(value));
        }
        Ok(Self(value))
    }

    /// Keeps the low 30 bits of `value`.
    pub const fn truncate(value: u32) -> Self {
        Self(value & BLOCK_MASK)
    }

    pub const fn get(self) -> u32 {
        self.0
    }

    /// Bits, most significant first.
    pub fn to_bits(self) -> Vec<bool> {
        (0..BLOCK_BITS).map(|i| (self.0 >> (BLOCK_BITS - 1 - i)) & 1 == 1).collect()
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self, CodecError> {
        if bits.len() != BLOCK_BITS {
            return Err(CodecError::WrongLength { expected: BLOCK_BITS, found: bits.len() });
        }
        Ok(Self(bits.iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b))))
    }
}

impl fmt::LowerHex for Block30 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::LowerHex::fmt(&self.0, f)
    }
}

/// Fifteen prime symbols: the symbolic form of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymbolBlock([PrimeSymbol; BLOCK_SYMBOLS]);

impl SymbolBlock {
    pub const fn new(symbols: [PrimeSymbol; BLOCK_SYMBOLS]) -> Self {
        Self(symbols)
    }

    pub fn from_slice(symbols: &[PrimeSymbol]) -> Result<Self, CodecError> {
        let arr: [PrimeSymbol; BLOCK_SYMBOLS] = symbols
            .try_into()
            .map_err(|_| CodecError::WrongLength { expected: BLOCK_SYMBOLS, found: symbols.len() })?;
        Ok(Self(arr))
    }

    /// Builds a block from prime values such as `[5, 5, 5, 7, ...]`.
    pub fn from_values(values: &[u32]) -> Result<Self, CodecError> {
        let symbols = values.iter().map(|&v| PrimeSymbol::from_value(v)).collect::<Result<Vec<_>, _>>()?;
        Self::from_slice(&symbols)
    }

    pub fn symbols(&self) -> &[PrimeSymbol; BLOCK_SYMBOLS] {
        &self.0
    }

    pub fn values(&self) -> [i32; BLOCK_SYMBOLS] {
        self.0.map(PrimeSymbol::value)
    }

    pub fn from_block(block: Block30) -> Self {
        let mut out = [PrimeSymbol::Two; BLOCK_SYMBOLS];
        for (i, slot) in out.iter_mut().enumerate() {
            let shift = BLOCK_BITS - 2 - 2 * i;
            *slot = PrimeSymbol::from_pair((block.get() >> shift) as u8);
        }
        Self(out)
    }

    pub fn to_block(&self) -> Block30 {
        Block30(self.0.iter().fold(0u32, |acc, s| (acc << 2) | u32::from(s.pair())))
    }
}

/// Maps a 30-bit sequence (leftmost bit first) onto fifteen prime symbols.
pub fn map_bits_to_symbols(bits: &[bool]) -> Result<SymbolBlock, CodecError> {
    Block30::from_bits(bits).map(SymbolBlock::from_block)
}

/// Inverse of [`map_bits_to_symbols`].
pub fn unmap_symbols_to_bits(symbols: &[PrimeSymbol]) -> Result<Vec<bool>, CodecError> {
    SymbolBlock::from_slice(symbols).map(|b| b.to_block().to_bits())
}

/// A payload cut into 30-bit units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddedMessage {
    blocks: Vec<Block30>,
    tail_bits: u8,
}

impl PaddedMessage {
    pub fn new(blocks: Vec<Block30>, tail_bits: u8) -> Result<Self, CodecError> {
        if blocks.is_empty() {
            return Err(CodecError::EmptyInput);
        }
        if !(1..=BLOCK_BITS as u8).contains(&tail_bits) {
            return Err(CodecError::InvalidTailBits(tail_bits));
        }
        Ok(Self { blocks, tail_bits })
    }

    pub fn blocks(&self) -> &[Block30] {
        &self.blocks
    }

    /// Meaningful bits in the final unit.
    pub fn tail_bits(&self) -> u8 {
        self.tail_bits
    }

    pub fn bit_len(&self) -> usize {
        (self.blocks.len() - 1) * BLOCK_BITS + usize::from(self.tail_bits)
    }

    pub fn into_blocks(self) -> Vec<Block30> {
        self.blocks
    }
}

/// Splits `payload` into 30-bit blocks, right-padding the last one with zeros.
pub fn segment_message(payload: &[u8]) -> Result<PaddedMessage, CodecError> {
    segment_bits(payload, payload.len() * 8)
}

/// Like [`segment_message`] but only the first `bit_len` bits of `payload` count.
pub fn segment_bits(payload: &[u8], bit_len: usize) -> Result<PaddedMessage, CodecError> {
    if bit_len == 0 {
        return Err(CodecError::EmptyInput);
    }
    if bit_len > payload.len() * 8 {
        return Err(CodecError::WrongLength { expected: payload.len() * 8, found: bit_len });
    }
    let bit = |i: usize| (payload[i / 8] >> (7 - i % 8)) & 1;

    let count = bit_len.div_ceil(BLOCK_BITS);
    let mut blocks = Vec::with_capacity(count);
    for b in 0..count {
        let start = b * BLOCK_BITS;
        let mut value = 0u32;
        for i in start..start + BLOCK_BITS {
            let v = if i < bit_len { bit(i) } else { 0 };
            value = (value << 1) | u32::from(v);
        }
        blocks.push(Block30(value));
    }
    let tail_bits = (bit_len - (count - 1) * BLOCK_BITS) as u8;
    Ok(PaddedMessage { blocks, tail_bits })
}

/// Concatenates the meaningful bits of `message` back into bytes.
pub fn reassemble_message(message: &PaddedMessage) -> Result<Vec<u8>, CodecError> {
    let bit_len = message.bit_len();
    if !bit_len.is_multiple_of(8) {
        return Err(CodecError::NotByteAligned(bit_len));
    }
    let mut out = vec![0u8; bit_len / 8];
    for i in 0..bit_len {
        let block = message.blocks[i / BLOCK_BITS].get();
        let v = (block >> (BLOCK_BITS - 1 - i % BLOCK_BITS)) & 1;
        out[i / 8] |= (v as u8) << (7 - i % 8);
    }
    Ok(out)
}
