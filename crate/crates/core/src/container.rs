//! On-disk formats for key chains and ciphertexts.
//!
//! Key file (`21 + 4n` bytes):
//!
//! ```text
//! "CMK1" | n: u8 | base key: 16 bytes (ASM 6, RM 2, TM 2, SM 6) | n x sticky: u32 BE
//! ```
//!
//! Cipher file:
//!
//! ```text
//! "CMC1" | version: u8 = 1 | sticky rounds: u8 | blocks: u32 BE | tail bits: u8
//! per block: orders u16 BE (one nibble per target) | 20 cells, row-major
//! cell: tag u8, then
//!   0 empty      -
//!   1 ASM string x position u8, sign mask u8
//!   2 RM outcome i32 BE
//!   3 SM list    count u8, count x (S u8, R u8)
//!   4 TM pair    prime code u8, last seq u8
//! ```
//!
//! All multi-byte integers are big-endian.

use thiserror::Error;

use crate::cipher::{CipherError, CipherGrid, CipherMessage, GridCell, GridCells};
use crate::codec::BLOCK_BITS;
use crate::keyschedule::{BaseKey, KeyChain, BASE_KEY_BYTES};

pub const KEY_MAGIC: [u8; 4] = *b"CMK1";
pub const CIPHER_MAGIC: [u8; 4] = *b"CMC1";
pub const CIPHER_VERSION: u8 = 1;
pub const KEY_HEADER_LEN: usize = 4 + 1 + BASE_KEY_BYTES;
const CIPHER_HEADER_LEN: usize = 4 + 1 + 1 + 4 + 1;
/// Order bytes plus twenty one-byte tags.
const MIN_BLOCK_LEN: usize = 2 + 20;
/// More events than this cannot come out of a 15-symbol block.
const MAX_SM_PAIRS: u8 = 14;

const TAG_EMPTY: u8 = 0;
const TAG_ASM: u8 = 1;
const TAG_RM: u8 = 2;
const TAG_SM: u8 = 3;
const TAG_TM: u8 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContainerError {
    #[error("bad magic {found:02x?}, expected {expected:02x?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("truncated: needed {needed} more byte(s) at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("malformed cell {cell} of block {block}: {reason}")]
    MalformedCell { block: usize, cell: usize, reason: &'static str },
    #[error("block {0} does not hold a complete set of cells")]
    InventoryMismatch(usize),
    #[error("invalid header: {0}")]
    InvalidHeader(&'static str),
    #[error("{0} trailing byte(s) after the last record")]
    TrailingBytes(usize),
    #[error("{0} sticky rounds do not fit in the format (max 255)")]
    TooManyStickyRounds(usize),
    #[error("grid {0} disagrees with the message on the sticky round count")]
    RoundsDisagree(usize),
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, offset: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let remaining = self.remaining();
        if remaining < n {
            return Err(ContainerError::Truncated { offset: self.offset, needed: n - remaining });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ContainerError> {
        Ok(self.take(N)?.try_into().expect("take returns N bytes"))
    }

    fn u8(&mut self) -> Result<u8, ContainerError> {
        Ok(self.take(1)?[0])
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.offset
    }

    fn finish(self) -> Result<(), ContainerError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(ContainerError::TrailingBytes(n)),
        }
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<(), ContainerError> {
        let found = self.array::<4>()?;
        if found != expected {
            return Err(ContainerError::BadMagic { expected, found });
        }
        Ok(())
    }
}

pub fn write_key(chain: &KeyChain) -> Result<Vec<u8>, ContainerError> {
    let count = u8::try_from(chain.sticky.len())
        .map_err(|_| ContainerError::TooManyStickyRounds(chain.sticky.len()))?;
    let mut out = Vec::with_capacity(KEY_HEADER_LEN + 4 * chain.sticky.len());
    out.extend_from_slice(&KEY_MAGIC);
    out.push(count);
    out.extend_from_slice(&chain.base.to_bytes());
    for word in &chain.sticky {
        out.extend_from_slice(&word.to_be_bytes());
    }
    Ok(out)
}

pub fn read_key(bytes: &[u8]) -> Result<KeyChain, ContainerError> {
    let mut r = Reader::new(bytes);
    r.magic(KEY_MAGIC)?;
    let count = r.u8()?;
    let base = BaseKey::from_u128(u128::from_be_bytes(r.array()?));
    let sticky = (0..count).map(|_| r.array().map(u32::from_be_bytes)).collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    Ok(KeyChain::with_sticky(base, sticky))
}

fn write_cell(out: &mut Vec<u8>, cell: &GridCell) {
    match cell {
        GridCell::Empty => out.push(TAG_EMPTY),
        GridCell::AsmString { x_pos, signs } => out.extend_from_slice(&[TAG_ASM, *x_pos, *signs]),
        GridCell::RmOutcome { value } => {
            out.push(TAG_RM);
            out.extend_from_slice(&value.to_be_bytes());
        }
        GridCell::SmList { pairs } => {
            out.push(TAG_SM);
            out.push(pairs.len() as u8);
            for &(s, r) in pairs {
                out.extend_from_slice(&[s, r]);
            }
        }
        GridCell::TmPair { prime, last_seq } => out.extend_from_slice(&[TAG_TM, *prime, *last_seq]),
    }
}

/// Serialized form of one grid: packed orders and the twenty cells.
pub fn write_grid(out: &mut Vec<u8>, grid: &CipherGrid) {
    let orders = grid.orders.iter().fold(0u16, |acc, &o| (acc << 4) | u16::from(o & 0xF));
    out.extend_from_slice(&orders.to_be_bytes());
    for cell in grid.cells.iter().flatten() {
        write_cell(out, cell);
    }
}

fn read_cell(r: &mut Reader<'_>, block: usize, cell: usize) -> Result<GridCell, ContainerError> {
    let malformed = |reason| ContainerError::MalformedCell { block, cell, reason };
    match r.u8()? {
        TAG_EMPTY => Ok(GridCell::Empty),
        TAG_ASM => {
            let [x_pos, signs] = r.array()?;
            if x_pos > 3 {
                return Err(malformed("X position beyond column 3"));
            }
            if signs > 0xF || (signs >> (3 - x_pos)) & 1 == 1 {
                return Err(malformed("sign mask is not a nibble with a clear diagonal"));
            }
            Ok(GridCell::AsmString { x_pos, signs })
        }
        TAG_RM => Ok(GridCell::RmOutcome { value: i32::from_be_bytes(r.array()?) }),
        TAG_SM => {
            let count = r.u8()?;
            if count > MAX_SM_PAIRS {
                return Err(malformed("too many SM pairs"));
            }
            let pairs =
                (0..count).map(|_| r.array::<2>().map(|[s, r]| (s, r))).collect::<Result<Vec<_>, _>>()?;
            if pairs.iter().any(|&(s, r)| s > 0xF || r > 0xF) {
                return Err(malformed("SM value does not fit in a nibble"));
            }
            Ok(GridCell::SmList { pairs })
        }
        TAG_TM => {
            let [prime, last_seq] = r.array()?;
            if prime > 3 {
                return Err(malformed("unknown prime code"));
            }
            Ok(GridCell::TmPair { prime, last_seq })
        }
        _ => Err(malformed("unknown tag")),
    }
}

fn read_grid(r: &mut Reader<'_>, block: usize, sticky_rounds: usize) -> Result<CipherGrid, ContainerError> {
    let packed = u16::from_be_bytes(r.array()?);
    let orders =
        [(packed >> 12) as u8, (packed >> 8) as u8 & 0xF, (packed >> 4) as u8 & 0xF, packed as u8 & 0xF];
    let mut cells: GridCells = std::array::from_fn(|_| std::array::from_fn(|_| GridCell::Empty));
    for (index, slot) in cells.iter_mut().flatten().enumerate() {
        *slot = read_cell(r, block, index)?;
    }
    let grid = CipherGrid { orders, cells, sticky_rounds };
    grid.check_inventory().map_err(|e| match e {
        CipherError::IncompleteGrid => ContainerError::InventoryMismatch(block),
        _ => unreachable!("inventory check only reports incomplete grids"),
    })?;
    Ok(grid)
}

pub fn write_cipher(message: &CipherMessage) -> Result<Vec<u8>, ContainerError> {
    let rounds = u8::try_from(message.sticky_rounds)
        .map_err(|_| ContainerError::TooManyStickyRounds(message.sticky_rounds))?;
    if let Some(i) = message.grids.iter().position(|g| g.sticky_rounds != message.sticky_rounds) {
        return Err(ContainerError::RoundsDisagree(i));
    }
    let blocks =
        u32::try_from(message.grids.len()).map_err(|_| ContainerError::InvalidHeader("too many blocks"))?;
    let mut out = Vec::with_capacity(CIPHER_HEADER_LEN + 64 * message.grids.len());
    out.extend_from_slice(&CIPHER_MAGIC);
    out.push(CIPHER_VERSION);
    out.push(rounds);
    out.extend_from_slice(&blocks.to_be_bytes());
    out.push(message.tail_bits);
    for grid in &message.grids {
        write_grid(&mut out, grid);
    }
    Ok(out)
}

pub fn read_cipher(bytes: &[u8]) -> Result<CipherMessage, ContainerError> {
    let mut r = Reader::new(bytes);
    r.magic(CIPHER_MAGIC)?;
    let version = r.u8()?;
    if version != CIPHER_VERSION {
        return Err(ContainerError::BadVersion(version));
    }
    let sticky_rounds = usize::from(r.u8()?);
    let block_count = u32::from_be_bytes(r.array()?) as usize;
    let tail_bits = r.u8()?;
    if block_count == 0 {
        return Err(ContainerError::InvalidHeader("no blocks"));
    }
    if !(1..=BLOCK_BITS as u8).contains(&tail_bits) {
        return Err(ContainerError::InvalidHeader("tail bits outside 1..=30"));
    }
    if !((block_count - 1) * BLOCK_BITS + usize::from(tail_bits)).is_multiple_of(8) {
        return Err(ContainerError::InvalidHeader("payload is not a whole number of bytes"));
    }

    let mut grids = Vec::with_capacity(block_count.min(r.remaining() / MIN_BLOCK_LEN));
    for block in 0..block_count {
        grids.push(read_grid(&mut r, block, sticky_rounds)?);
    }
    r.finish()?;
    Ok(CipherMessage { sticky_rounds, tail_bits, grids })
}
