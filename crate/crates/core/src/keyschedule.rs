//! Key layout, Add-Sub Matrix construction and sticky-key growth.
//!
//! The 128-bit base key is read most significant bit first:
//!
//! ```text
//! | ASM key (48)                    | RM (16) | TM (16) | SM key (48)          |
//! | orders 16 | horiz 16 | vert 16  |         |         | arrange 16 | xor 32  |
//! ```
//!
//! Every 16-bit arrangement group gives one nibble per target (2, 3, 5, 7),
//! high nibble first. Sticky keys are 32-bit words appended after the base key.

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::codec::PrimeSymbol;
use crate::engine::AddSubMatrix;

pub const BASE_KEY_BYTES: usize = 16;
pub const BASE_KEY_BITS: usize = 128;
pub const STICKY_KEY_BITS: usize = 32;

#[derive(Debug, Error)]
pub enum KeyError {
    #[error("key must be {expected} bytes, got {found}")]
    WrongLength { expected: usize, found: usize },
    #[error("entropy source unavailable: {0}")]
    EntropyUnavailable(#[from] rand::Error),
}

/// The 128-bit base key.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BaseKey(u128);

impl std::fmt::Debug for BaseKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BaseKey({:#034x})", self.0)
    }
}

impl BaseKey {
    pub const fn from_u128(raw: u128) -> Self {
        Self(raw)
    }

    pub fn from_bytes(raw: &[u8]) -> Result<Self, KeyError> {
        let bytes: [u8; BASE_KEY_BYTES] = raw
            .try_into()
            .map_err(|_| KeyError::WrongLength { expected: BASE_KEY_BYTES, found: raw.len() })?;
        Ok(Self(u128::from_be_bytes(bytes)))
    }

    pub const fn to_u128(self) -> u128 {
        self.0
    }

    pub const fn to_bytes(self) -> [u8; BASE_KEY_BYTES] {
        self.0.to_be_bytes()
    }

    /// 16-bit group `index` counting from the most significant end (0..8).
    const fn group(self, index: u32) -> u16 {
        (self.0 >> (112 - 16 * index)) as u16
    }

    pub const fn asm_key(self) -> u64 {
        (self.0 >> 80) as u64
    }

    pub const fn rm_key(self) -> u16 {
        self.group(3)
    }

    pub const fn tm_key(self) -> u16 {
        self.group(4)
    }

    pub const fn sm_key(self) -> u64 {
        (self.0 as u64) & 0xFFFF_FFFF_FFFF
    }

    pub const fn orders(self) -> [u8; 4] {
        nibbles(self.group(0))
    }

    pub const fn add_sub_matrix(self) -> AddSubMatrix {
        build_asm(self.orders())
    }

    pub const fn nibble_table(self) -> NibbleTable {
        NibbleTable([
            nibbles(self.group(1)),
            nibbles(self.group(2)),
            nibbles(self.rm_key()),
            nibbles(self.group(5)),
            nibbles(self.tm_key()),
        ])
    }

    pub const fn xor_subkeys(self) -> XorSubkeys {
        XorSubkeys::from_word(self.0 as u32)
    }
}

const fn nibbles(group: u16) -> [u8; 4] {
    [(group >> 12) as u8 & 0xF, (group >> 8) as u8 & 0xF, (group >> 4) as u8 & 0xF, group as u8 & 0xF]
}

/// The five grid columns that take part in the scramble, in cycle order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MatrixKind {
    AsmHorizontal,
    AsmVertical,
    Reduced,
    Sequence,
    Term,
}

impl MatrixKind {
    pub const ALL: [MatrixKind; 5] =
        [Self::AsmHorizontal, Self::AsmVertical, Self::Reduced, Self::Sequence, Self::Term];

    pub const fn index(self) -> usize {
        self as usize
    }

    /// Next kind in the cycle, wrapping from TM back to horizontal ASM.
    pub const fn next(self) -> Self {
        Self::ALL[(self as usize + 1) % 5]
    }

    pub const fn label(self) -> &'static str {
        match self {
            Self::AsmHorizontal => "ASM (hort.)",
            Self::AsmVertical => "ASM (vert.)",
            Self::Reduced => "RM",
            Self::Sequence => "SM",
            Self::Term => "TM",
        }
    }
}

/// Arrangement nibble per (matrix kind, target slot).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NibbleTable(pub [[u8; 4]; 5]);

impl NibbleTable {
    pub const fn get(&self, kind: MatrixKind, slot: usize) -> u8 {
        self.0[kind.index()][slot]
    }
}

/// Eight 4-bit XOR keys; pair `(2i, 2i+1)` serves the i-th prime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct XorSubkeys(pub [u8; 8]);

impl XorSubkeys {
    /// Splits a 32-bit word into nibbles, most significant first.
    pub const fn from_word(word: u32) -> Self {
        let mut out = [0u8; 8];
        let mut i = 0;
        while i < 8 {
            out[i] = ((word >> (28 - 4 * i)) & 0xF) as u8;
            i += 1;
        }
        Self(out)
    }

    /// Keys for the (S, R) halves of `prime`'s events.
    pub const fn pair(&self, prime: PrimeSymbol) -> (u8, u8) {
        (self.0[2 * prime.index()], self.0[2 * prime.index() + 1])
    }
}

/// Everything the cipher needs from a parsed base key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeySchedule {
    pub asm: AddSubMatrix,
    pub table: NibbleTable,
    pub subkeys: XorSubkeys,
}

pub fn parse_key(raw: &[u8]) -> Result<KeySchedule, KeyError> {
    BaseKey::from_bytes(raw).map(|k| k.schedule())
}

impl BaseKey {
    pub const fn schedule(self) -> KeySchedule {
        KeySchedule { asm: self.add_sub_matrix(), table: self.nibble_table(), subkeys: self.xor_subkeys() }
    }
}

pub const fn build_asm(orders: [u8; 4]) -> AddSubMatrix {
    AddSubMatrix::from_orders(orders)
}

pub fn generate_key<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Result<BaseKey, KeyError> {
    let mut bytes = [0u8; BASE_KEY_BYTES];
    rng.try_fill_bytes(&mut bytes)?;
    Ok(BaseKey(u128::from_be_bytes(bytes)))
}

/// Base key plus the sticky words added by hardening, oldest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyChain {
    pub base: BaseKey,
    pub sticky: Vec<u32>,
}

impl KeyChain {
    pub fn new(base: BaseKey) -> Self {
        Self { base, sticky: Vec::new() }
    }

    pub fn with_sticky(base: BaseKey, sticky: Vec<u32>) -> Self {
        Self { base, sticky }
    }

    pub fn effective_bits(&self) -> usize {
        BASE_KEY_BITS + STICKY_KEY_BITS * self.sticky.len()
    }

    pub fn schedule(&self) -> KeySchedule {
        self.base.schedule()
    }
}

/// Returns `chain` with one fresh sticky word appended.
pub fn extend_key<R: RngCore + CryptoRng + ?Sized>(
    chain: &KeyChain,
    rng: &mut R,
) -> Result<KeyChain, KeyError> {
    let mut word = [0u8; 4];
    rng.try_fill_bytes(&mut word)?;
    let mut next = chain.clone();
    next.sticky.push(u32::from_be_bytes(word));
    Ok(next)
}
