//! Block encryption and decryption.
//!
//! Encryption: map the block to primes, compress under the key's ASM, XOR
//! every SM pair with the base subkeys, run one Feistel-style round per sticky
//! word (XOR then swap the two halves), and finally scatter the twenty cells
//! across the grid with the keyed swap schedule. The Order column is kept in
//! clear and never moves, so it leaks the four order nibbles; that is how the
//! scheme is defined and it is reproduced as is.
//!
//! Blocks are independent of each other (no IV, no chaining, no MAC).

use std::fmt;

use rand::{CryptoRng, RngCore};
use serde::Serialize;
use thiserror::Error;

use crate::codec::{self, Block30, CodecError, PaddedMessage, PrimeSymbol, SymbolBlock};
use crate::engine::{
    self, AddSubMatrix, CompressedBlock, IntegrityFailure, ReducedMatrix, SequenceEvent, SequenceMatrix,
    TermEntry, TermMatrix,
};
use crate::keyschedule::{self, KeyChain, KeyError, KeySchedule, MatrixKind, NibbleTable, XorSubkeys};

pub const GRID_ROWS: usize = 4;
pub const GRID_COLUMNS: usize = 5;
pub const GRID_CELLS: usize = GRID_ROWS * GRID_COLUMNS;

#[derive(Debug, Error)]
pub enum CipherError {
    #[error("integrity failure: {0}")]
    IntegrityFailure(#[from] IntegrityFailure),
    #[error("ciphertext has {grid} sticky rounds but the key chain has {chain}")]
    RoundCountMismatch { grid: usize, chain: usize },
    #[error("SM value {value} of prime {prime} does not fit in a nibble")]
    ValueOutOfRange { prime: PrimeSymbol, value: u8 },
    #[error("grid cells are not a permutation of the twenty logical items")]
    IncompleteGrid,
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Row or column of the ASM: where the X sits and the +1 bits (MSB first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct AsmString {
    pub x_pos: u8,
    pub signs: u8,
}

impl fmt::Display for AsmString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for col in 0..4u8 {
            if col == self.x_pos {
                f.write_str("X")?;
            } else if (self.signs >> (3 - col)) & 1 == 1 {
                f.write_str("+1")?;
            } else {
                f.write_str("-1")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridCell {
    Empty,
    AsmString { x_pos: u8, signs: u8 },
    RmOutcome { value: i32 },
    SmList { pairs: Vec<(u8, u8)> },
    TmPair { prime: u8, last_seq: u8 },
}

impl GridCell {
    pub fn is_sm_list(&self) -> bool {
        matches!(self, Self::SmList { .. })
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empty => Ok(()),
            Self::AsmString { x_pos, signs } => AsmString { x_pos: *x_pos, signs: *signs }.fmt(f),
            Self::RmOutcome { value } => write!(f, "{value}"),
            Self::SmList { pairs } => {
                for (i, (s, r)) in pairs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ; ")?;
                    }
                    write!(f, "{s}|{r}")?;
                }
                Ok(())
            }
            Self::TmPair { prime, last_seq } => {
                let p = PrimeSymbol::from_index(usize::from(*prime)).map_or(0, PrimeSymbol::value);
                write!(f, "{p}|{last_seq}")
            }
        }
    }
}

/// Grid rows in target order; columns ASMH, ASMV, RM, SM, TM.
pub type GridCells = [[GridCell; GRID_COLUMNS]; GRID_ROWS];

/// Ciphertext of one block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CipherGrid {
    pub orders: [u8; 4],
    pub cells: GridCells,
    pub sticky_rounds: usize,
}

impl CipherGrid {
    pub fn cell(&self, kind: MatrixKind, slot: usize) -> &GridCell {
        &self.cells[slot][kind.index()]
    }

    /// Checks the cell multiset could have come from some block: 8 ASM
    /// strings (each X position twice), 4 SM lists, and as many RM outcomes
    /// as TM pairs with the rest empty.
    pub fn check_inventory(&self) -> Result<(), CipherError> {
        check_inventory(self.cells.iter().flatten())
    }
}

fn check_inventory<'a>(cells: impl Iterator<Item = &'a GridCell>) -> Result<(), CipherError> {
    let (mut asm, mut sm, mut rm, mut tm, mut empty) = (0, 0, 0, 0, 0);
    let mut x_positions = [0u8; 4];
    let mut tm_primes = [false; 4];
    for cell in cells {
        match cell {
            GridCell::Empty => empty += 1,
            GridCell::AsmString { x_pos, .. } => {
                asm += 1;
                *x_positions.get_mut(usize::from(*x_pos)).ok_or(CipherError::IncompleteGrid)? += 1;
            }
            GridCell::RmOutcome { .. } => rm += 1,
            GridCell::SmList { .. } => sm += 1,
            GridCell::TmPair { prime, .. } => {
                tm += 1;
                let seen = tm_primes.get_mut(usize::from(*prime)).ok_or(CipherError::IncompleteGrid)?;
                if std::mem::replace(seen, true) {
                    return Err(CipherError::IncompleteGrid);
                }
            }
        }
    }
    let ok = asm == 8
        && x_positions == [2; 4]
        && sm == 4
        && rm == tm
        && (1..=4).contains(&rm)
        && empty == 8 - rm - tm;
    if ok {
        Ok(())
    } else {
        Err(CipherError::IncompleteGrid)
    }
}

/// The twenty items that make up one block's ciphertext before scrambling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogicalItems {
    pub asm_rows: [AsmString; 4],
    pub asm_columns: [AsmString; 4],
    pub rm: ReducedMatrix,
    /// SM after the XOR layer and any sticky rounds; values are nibbles.
    pub sm: SequenceMatrix,
    pub tm: TermMatrix,
}

impl LogicalItems {
    pub fn new(asm: &AddSubMatrix, cb: CompressedBlock) -> Self {
        let rows = PrimeSymbol::ALL.map(|p| AsmString { x_pos: p.index() as u8, signs: asm.row_mask(p) });
        let cols = PrimeSymbol::ALL.map(|p| AsmString { x_pos: p.index() as u8, signs: asm.column_mask(p) });
        Self { asm_rows: rows, asm_columns: cols, rm: cb.rm, sm: cb.sm, tm: cb.tm }
    }

    fn asm_matches(&self, asm: &AddSubMatrix) -> bool {
        let expected = Self::new(asm, CompressedBlock::default());
        self.asm_rows == expected.asm_rows && self.asm_columns == expected.asm_columns
    }

    /// Cells in schedule order: kind-major, slot-minor.
    fn into_flat(self) -> [GridCell; GRID_CELLS] {
        let asm_cell = |a: AsmString| GridCell::AsmString { x_pos: a.x_pos, signs: a.signs };
        let mut flat: [GridCell; GRID_CELLS] = std::array::from_fn(|_| GridCell::Empty);
        let [h, v, rm, sm, tm] = MatrixKind::ALL.map(|k| k.index() * 4);
        let Self { asm_rows, asm_columns, rm: reduced, sm: sequence, tm: term } = self;
        for slot in 0..4 {
            flat[h + slot] = asm_cell(asm_rows[slot]);
            flat[v + slot] = asm_cell(asm_columns[slot]);
            flat[rm + slot] = reduced.0[slot].map_or(GridCell::Empty, |value| GridCell::RmOutcome { value });
            flat[tm + slot] = term.0[slot].map_or(GridCell::Empty, |e| GridCell::TmPair {
                prime: e.prime.index() as u8,
                last_seq: e.last_seq,
            });
        }
        for (slot, events) in sequence.0.into_iter().enumerate() {
            let pairs = events.into_iter().map(|e| (e.seq, e.redundant)).collect();
            flat[sm + slot] = GridCell::SmList { pairs };
        }
        flat
    }

    fn from_flat(flat: [GridCell; GRID_CELLS]) -> Result<Self, IntegrityFailure> {
        let mut items = Self {
            asm_rows: [AsmString { x_pos: 0, signs: 0 }; 4],
            asm_columns: [AsmString { x_pos: 0, signs: 0 }; 4],
            rm: ReducedMatrix::default(),
            sm: SequenceMatrix::default(),
            tm: TermMatrix::default(),
        };
        for (index, cell) in flat.into_iter().enumerate() {
            let kind = MatrixKind::ALL[index / 4];
            let slot = index % 4;
            let misplaced = IntegrityFailure::MisplacedCell { column: kind.label(), slot };
            match (kind, cell) {
                (MatrixKind::AsmHorizontal, GridCell::AsmString { x_pos, signs })
                    if usize::from(x_pos) == slot =>
                {
                    items.asm_rows[slot] = AsmString { x_pos, signs };
                }
                (MatrixKind::AsmVertical, GridCell::AsmString { x_pos, signs })
                    if usize::from(x_pos) == slot =>
                {
                    items.asm_columns[slot] = AsmString { x_pos, signs };
                }
                (MatrixKind::Reduced, GridCell::RmOutcome { value }) => items.rm.0[slot] = Some(value),
                (MatrixKind::Reduced, GridCell::Empty) | (MatrixKind::Term, GridCell::Empty) => {}
                (MatrixKind::Sequence, GridCell::SmList { pairs }) => {
                    items.sm.0[slot] = pairs.into_iter().map(|(s, r)| SequenceEvent::new(s, r)).collect();
                }
                (MatrixKind::Term, GridCell::TmPair { prime, last_seq }) => {
                    let prime = PrimeSymbol::from_index(usize::from(prime)).ok_or(misplaced)?;
                    items.tm.0[slot] = Some(TermEntry { prime, last_seq });
                }
                _ => return Err(misplaced),
            }
        }
        Ok(items)
    }
}

/// Target slot `j` that cell `(kind, slot)` trades places with in the next column.
fn swap_partner(table: &NibbleTable, kind: MatrixKind, slot: usize) -> usize {
    kind.next().index() * 4 + usize::from(table.get(kind, slot) % 4)
}

/// Runs the 20-swap schedule in place over kind-major cells.
pub fn permute<T>(cells: &mut [T; GRID_CELLS], table: &NibbleTable) {
    for kind in MatrixKind::ALL {
        for slot in 0..4 {
            cells.swap(kind.index() * 4 + slot, swap_partner(table, kind, slot));
        }
    }
}

/// Exact inverse of [`permute`]: the same swaps in reverse order.
pub fn unpermute<T>(cells: &mut [T; GRID_CELLS], table: &NibbleTable) {
    for kind in MatrixKind::ALL.into_iter().rev() {
        for slot in (0..4).rev() {
            cells.swap(kind.index() * 4 + slot, swap_partner(table, kind, slot));
        }
    }
}

fn flat_to_rows(flat: [GridCell; GRID_CELLS]) -> GridCells {
    let mut rows: GridCells = std::array::from_fn(|_| std::array::from_fn(|_| GridCell::Empty));
    for (index, cell) in flat.into_iter().enumerate() {
        rows[index % 4][index / 4] = cell;
    }
    rows
}

fn rows_to_flat(rows: &GridCells) -> [GridCell; GRID_CELLS] {
    std::array::from_fn(|index| rows[index % 4][index / 4].clone())
}

/// Places the twenty items on the grid with the keyed swap schedule.
pub fn scramble(items: LogicalItems, table: &NibbleTable) -> GridCells {
    let mut flat = items.into_flat();
    permute(&mut flat, table);
    flat_to_rows(flat)
}

/// Inverse of [`scramble`].
///
/// Fails with [`CipherError::IncompleteGrid`] when the cells cannot be a
/// scrambled item set at all, and with an integrity failure when they land in
/// the wrong columns (a wrong arrangement key).
pub fn unscramble(cells: &GridCells, table: &NibbleTable) -> Result<LogicalItems, CipherError> {
    check_inventory(cells.iter().flatten())?;
    let mut flat = rows_to_flat(cells);
    unpermute(&mut flat, table);
    Ok(LogicalItems::from_flat(flat)?)
}

fn check_nibbles(sm: &SequenceMatrix) -> Result<(), CipherError> {
    for (prime, events) in sm.iter() {
        for e in events {
            for value in [e.seq, e.redundant] {
                if value > 0xF {
                    return Err(CipherError::ValueOutOfRange { prime, value });
                }
            }
        }
    }
    Ok(())
}

fn map_events(
    sm: &SequenceMatrix,
    mut f: impl FnMut(PrimeSymbol, SequenceEvent) -> SequenceEvent,
) -> Result<SequenceMatrix, CipherError> {
    check_nibbles(sm)?;
    let mut out = sm.clone();
    for prime in PrimeSymbol::ALL {
        for e in out.events_mut(prime) {
            *e = f(prime, *e);
        }
    }
    Ok(out)
}

/// XORs each (S, R) pair with its prime's two subkeys. An involution.
pub fn xor_sequence_matrix(sm: &SequenceMatrix, subkeys: &XorSubkeys) -> Result<SequenceMatrix, CipherError> {
    map_events(sm, |prime, e| {
        let (ks, kr) = subkeys.pair(prime);
        SequenceEvent::new(e.seq ^ ks, e.redundant ^ kr)
    })
}

/// One sticky round: `(S, R) -> (R ^ k2, S ^ k1)` with the prime's nibble pair.
pub fn sticky_round_apply(sm: &SequenceMatrix, sticky: u32) -> Result<SequenceMatrix, CipherError> {
    let keys = XorSubkeys::from_word(sticky);
    map_events(sm, |prime, e| {
        let (k1, k2) = keys.pair(prime);
        SequenceEvent::new(e.redundant ^ k2, e.seq ^ k1)
    })
}

pub fn sticky_round_invert(sm: &SequenceMatrix, sticky: u32) -> Result<SequenceMatrix, CipherError> {
    let keys = XorSubkeys::from_word(sticky);
    map_events(sm, |prime, e| {
        let (k1, k2) = keys.pair(prime);
        SequenceEvent::new(e.redundant ^ k1, e.seq ^ k2)
    })
}

pub fn encrypt_block(block: Block30, chain: &KeyChain) -> Result<CipherGrid, CipherError> {
    encrypt_with_schedule(block, &chain.schedule(), &chain.sticky)
}

fn encrypt_with_schedule(
    block: Block30,
    schedule: &KeySchedule,
    sticky: &[u32],
) -> Result<CipherGrid, CipherError> {
    let symbols = SymbolBlock::from_block(block);
    let mut cb = engine::compress_block(&symbols, &schedule.asm);
    cb.sm = xor_sequence_matrix(&cb.sm, &schedule.subkeys)?;
    for &word in sticky {
        cb.sm = sticky_round_apply(&cb.sm, word)?;
    }
    let cells = scramble(LogicalItems::new(&schedule.asm, cb), &schedule.table);
    Ok(CipherGrid { orders: schedule.asm.orders(), cells, sticky_rounds: sticky.len() })
}

pub fn decrypt_block(grid: &CipherGrid, chain: &KeyChain) -> Result<Block30, CipherError> {
    decrypt_with_schedule(grid, &chain.schedule(), &chain.sticky)
}

fn decrypt_with_schedule(
    grid: &CipherGrid,
    schedule: &KeySchedule,
    sticky: &[u32],
) -> Result<Block30, CipherError> {
    if grid.sticky_rounds != sticky.len() {
        return Err(CipherError::RoundCountMismatch { grid: grid.sticky_rounds, chain: sticky.len() });
    }
    if grid.orders != schedule.asm.orders() {
        return Err(IntegrityFailure::OrderMismatch.into());
    }
    let items = unscramble(&grid.cells, &schedule.table)?;
    if !items.asm_matches(&schedule.asm) {
        return Err(IntegrityFailure::AsmMismatch.into());
    }
    let mut sm = items.sm;
    for &word in sticky.iter().rev() {
        sm = sticky_round_invert(&sm, word)?;
    }
    sm = xor_sequence_matrix(&sm, &schedule.subkeys)?;
    let cb = CompressedBlock { rm: items.rm, sm, tm: items.tm };
    Ok(engine::decompress_block(&cb, &schedule.asm)?.to_block())
}

fn check_rounds(grid: &CipherGrid, chain: &KeyChain) -> Result<(), CipherError> {
    if grid.sticky_rounds == chain.sticky.len() {
        Ok(())
    } else {
        Err(CipherError::RoundCountMismatch { grid: grid.sticky_rounds, chain: chain.sticky.len() })
    }
}

/// Applies one more sticky round to the SM cells of `grid`; every other cell
/// keeps its payload and position.
pub fn apply_sticky_round(
    grid: &CipherGrid,
    table: &NibbleTable,
    word: u32,
) -> Result<CipherGrid, CipherError> {
    let mut items = unscramble(&grid.cells, table)?;
    items.sm = sticky_round_apply(&items.sm, word)?;
    Ok(CipherGrid {
        orders: grid.orders,
        cells: scramble(items, table),
        sticky_rounds: grid.sticky_rounds + 1,
    })
}

/// Grows the key by one sticky word and rewrites the SM part of `grid` with it.
pub fn harden<R: RngCore + CryptoRng + ?Sized>(
    grid: &CipherGrid,
    chain: &KeyChain,
    rng: &mut R,
) -> Result<(CipherGrid, KeyChain), CipherError> {
    let (mut grids, chain) = harden_all(std::slice::from_ref(grid), chain, rng)?;
    Ok((grids.remove(0), chain))
}

/// [`harden`] for every block of a message, all with the same new word.
pub fn harden_all<R: RngCore + CryptoRng + ?Sized>(
    grids: &[CipherGrid],
    chain: &KeyChain,
    rng: &mut R,
) -> Result<(Vec<CipherGrid>, KeyChain), CipherError> {
    for grid in grids {
        check_rounds(grid, chain)?;
    }
    let next = keyschedule::extend_key(chain, rng)?;
    let word = *next.sticky.last().expect("extend_key appends a word");
    let table = chain.base.nibble_table();
    let hardened =
        grids.iter().map(|g| apply_sticky_round(g, &table, word)).collect::<Result<Vec<_>, _>>()?;
    Ok((hardened, next))
}

/// An encrypted payload: one grid per 30-bit unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CipherMessage {
    pub sticky_rounds: usize,
    pub tail_bits: u8,
    pub grids: Vec<CipherGrid>,
}

pub fn encrypt_message(payload: &[u8], chain: &KeyChain) -> Result<CipherMessage, CipherError> {
    let message = codec::segment_message(payload)?;
    let schedule = chain.schedule();
    let grids = message
        .blocks()
        .iter()
        .map(|&b| encrypt_with_schedule(b, &schedule, &chain.sticky))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CipherMessage { sticky_rounds: chain.sticky.len(), tail_bits: message.tail_bits(), grids })
}

pub fn decrypt_message(message: &CipherMessage, chain: &KeyChain) -> Result<Vec<u8>, CipherError> {
    if message.sticky_rounds != chain.sticky.len() {
        return Err(CipherError::RoundCountMismatch {
            grid: message.sticky_rounds,
            chain: chain.sticky.len(),
        });
    }
    let schedule = chain.schedule();
    let blocks = message
        .grids
        .iter()
        .map(|g| decrypt_with_schedule(g, &schedule, &chain.sticky))
        .collect::<Result<Vec<_>, _>>()?;
    let padded = PaddedMessage::new(blocks, message.tail_bits)?;
    Ok(codec::reassemble_message(&padded)?)
}

pub fn harden_message<R: RngCore + CryptoRng + ?Sized>(
    message: &CipherMessage,
    chain: &KeyChain,
    rng: &mut R,
) -> Result<(CipherMessage, KeyChain), CipherError> {
    if message.sticky_rounds != chain.sticky.len() {
        return Err(CipherError::RoundCountMismatch {
            grid: message.sticky_rounds,
            chain: chain.sticky.len(),
        });
    }
    let (grids, next) = harden_all(&message.grids, chain, rng)?;
    Ok((CipherMessage { sticky_rounds: next.sticky.len(), tail_bits: message.tail_bits, grids }, next))
}
