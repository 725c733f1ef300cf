//! The compression sequence and its inverse.
//!
//! Compression walks the block target by target. The target is the prime at
//! the head of the residual; a cursor starting at the head carries a running
//! value that is moved to the right end of the residual. Each step either
//! absorbs a maximal run of target cells (value += run * target, one
//! [`SequenceEvent`]) or crosses one foreign cell (value += ASM delta). The
//! final value is the target's outcome; the crossed cells form the residual
//! for the next target.
//!
//! Decompression replays those steps right-to-left, subtracting instead of
//! adding, and checks that every cursor comes home to position 0 holding
//! exactly its prime. Anything else means a wrong key or damaged ciphertext.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::codec::{PrimeSymbol, SymbolBlock, BLOCK_SYMBOLS};

/// Four order nibbles, one ASM row per target in (2, 3, 5, 7).
///
/// Bit 3 of a row (MSB) is column 2, bit 0 is column 7. A set bit adds one to
/// the target when it crosses that column's prime, a clear bit subtracts one.
/// The diagonal bit is never read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct AddSubMatrix {
    orders: [u8; 4],
}

impl AddSubMatrix {
    /// Only the low nibble of each order is kept.
    pub const fn from_orders(orders: [u8; 4]) -> Self {
        Self { orders: [orders[0] & 0xF, orders[1] & 0xF, orders[2] & 0xF, orders[3] & 0xF] }
    }

    pub const fn orders(&self) -> [u8; 4] {
        self.orders
    }

    const fn bit(&self, target: PrimeSymbol, column: PrimeSymbol) -> bool {
        (self.orders[target.index()] >> (3 - column.index())) & 1 == 1
    }

    /// Change applied to `target` when it crosses a `column` cell going right.
    ///
    /// Meaningless on the diagonal (absorption); callers never ask for it.
    #[inline]
    pub fn delta(&self, target: PrimeSymbol, column: PrimeSymbol) -> i32 {
        debug_assert_ne!(target, column, "ASM diagonal is not a delta");
        if self.bit(target, column) {
            1
        } else {
            -1
        }
    }

    /// Table view: `None` on the diagonal.
    pub fn sign(&self, target: PrimeSymbol, column: PrimeSymbol) -> Option<i32> {
        (target != column).then(|| self.delta(target, column))
    }

    /// Sign mask of row `target` (bit per column, MSB = column 2), diagonal cleared.
    pub fn row_mask(&self, target: PrimeSymbol) -> u8 {
        self.orders[target.index()] & !(0b1000 >> target.index())
    }

    /// Sign mask of column `column` (bit per row, MSB = row 2), diagonal cleared.
    pub fn column_mask(&self, column: PrimeSymbol) -> u8 {
        PrimeSymbol::ALL
            .iter()
            .filter(|&&row| row != column && self.bit(row, column))
            .fold(0u8, |acc, row| acc | (0b1000 >> row.index()))
    }
}

impl fmt::Display for AddSubMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Order  T |   2   3   5   7")?;
        for t in PrimeSymbol::ALL {
            write!(f, "{:04b}   {} |", self.orders[t.index()], t)?;
            for c in PrimeSymbol::ALL {
                match self.sign(t, c) {
                    None => write!(f, "   X")?,
                    Some(d) => write!(f, "  {d:+}")?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// One absorption: step number within the target's walk and run length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct SequenceEvent {
    pub seq: u8,
    pub redundant: u8,
}

impl SequenceEvent {
    pub const fn new(seq: u8, redundant: u8) -> Self {
        Self { seq, redundant }
    }
}

/// Absorption events per target prime.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize)]
pub struct SequenceMatrix(pub [Vec<SequenceEvent>; 4]);

impl SequenceMatrix {
    pub fn events(&self, prime: PrimeSymbol) -> &[SequenceEvent] {
        &self.0[prime.index()]
    }

    pub fn events_mut(&mut self, prime: PrimeSymbol) -> &mut Vec<SequenceEvent> {
        &mut self.0[prime.index()]
    }

    pub fn total_events(&self) -> usize {
        self.0.iter().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (PrimeSymbol, &[SequenceEvent])> {
        PrimeSymbol::ALL.into_iter().zip(self.0.iter().map(Vec::as_slice))
    }
}

/// Outcome per target prime; `None` when the prime does not occur.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize)]
pub struct ReducedMatrix(pub [Option<i32>; 4]);

impl ReducedMatrix {
    pub fn outcome(&self, prime: PrimeSymbol) -> Option<i32> {
        self.0[prime.index()]
    }
}

/// A Term Matrix slot: which prime, and the number of its last step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct TermEntry {
    pub prime: PrimeSymbol,
    pub last_seq: u8,
}

/// Four slots; the occupied ones form a prefix and list targets in reverse
/// processing order (slot 0 holds the last target walked).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize)]
pub struct TermMatrix(pub [Option<TermEntry>; 4]);

impl TermMatrix {
    pub fn occupied(&self) -> impl Iterator<Item = TermEntry> + '_ {
        self.0.iter().map_while(|s| *s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize)]
pub struct CompressedBlock {
    pub rm: ReducedMatrix,
    pub sm: SequenceMatrix,
    pub tm: TermMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("empty residual")]
pub struct EmptyResidual;

/// Why a decompression was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum IntegrityFailure {
    #[error("term matrix slots are not a prefix of distinct primes")]
    TermLayout,
    #[error("prime {0} has a term entry but no outcome")]
    MissingOutcome(PrimeSymbol),
    #[error("prime {0} has data but no term entry")]
    OrphanEntry(PrimeSymbol),
    #[error("events of prime {0} are not a valid absorption sequence")]
    EventOrder(PrimeSymbol),
    #[error("prime {0} must cross a cell but none is left of the cursor")]
    NothingToCross(PrimeSymbol),
    #[error("prime {prime} cursor stopped at position {position} holding {value}")]
    CursorNotRestored { prime: PrimeSymbol, position: usize, value: i32 },
    #[error("rebuilt block has {0} symbols")]
    WrongLength(usize),
    #[error("order column does not match the key")]
    OrderMismatch,
    #[error("unscrambled ASM strings do not match the key")]
    AsmMismatch,
    #[error("cell at column {column}, slot {slot} has the wrong kind after unscrambling")]
    MisplacedCell { column: &'static str, slot: usize },
}

/// What a single step of a target walk did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum StepAction {
    Absorb { run: u8 },
    Cross { crossed: PrimeSymbol, delta: i32 },
}

/// Snapshot after one step, laid out like a row of the compression table:
/// crossed cells, the cursor value at `cursor`, then the untouched cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub target: PrimeSymbol,
    pub seq: u8,
    #[serde(flatten)]
    pub action: StepAction,
    pub value: i32,
    pub cursor: usize,
    pub row: Vec<i32>,
}

/// Result of walking one target to the right end of the residual.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Traversal {
    pub target: PrimeSymbol,
    pub outcome: i32,
    pub events: Vec<SequenceEvent>,
    pub last_seq: u8,
    pub residual: Vec<PrimeSymbol>,
}

pub fn traverse_target(residual: &[PrimeSymbol], asm: &AddSubMatrix) -> Result<Traversal, EmptyResidual> {
    traverse_target_with(residual, asm, |_| {})
}

/// [`traverse_target`], reporting every step to `observe`.
pub fn traverse_target_with(
    residual: &[PrimeSymbol],
    asm: &AddSubMatrix,
    mut observe: impl FnMut(&TraceStep),
) -> Result<Traversal, EmptyResidual> {
    let (&target, _) = residual.split_first().ok_or(EmptyResidual)?;
    let mut value = target.value();
    let mut seq = 0u8;
    let mut events = Vec::new();
    let mut crossed = Vec::with_capacity(residual.len());
    let mut i = 1;

    while i < residual.len() {
        seq += 1;
        let action = if residual[i] == target {
            let run = residual[i..].iter().take_while(|&&s| s == target).count();
            value += run as i32 * target.value();
            events.push(SequenceEvent::new(seq, run as u8));
            i += run;
            StepAction::Absorb { run: run as u8 }
        } else {
            let crossed_prime = residual[i];
            let delta = asm.delta(target, crossed_prime);
            value += delta;
            crossed.push(crossed_prime);
            i += 1;
            StepAction::Cross { crossed: crossed_prime, delta }
        };

        let row = crossed
            .iter()
            .map(|p| p.value())
            .chain(std::iter::once(value))
            .chain(residual[i..].iter().map(|p| p.value()))
            .collect();
        observe(&TraceStep { target, seq, action, value, cursor: crossed.len(), row });
    }

    Ok(Traversal { target, outcome: value, events, last_seq: seq, residual: crossed })
}

pub fn compress_block(block: &SymbolBlock, asm: &AddSubMatrix) -> CompressedBlock {
    compress_block_with(block, asm, |_| {})
}

/// [`compress_block`], reporting every step of every target walk.
pub fn compress_block_with(
    block: &SymbolBlock,
    asm: &AddSubMatrix,
    mut observe: impl FnMut(&TraceStep),
) -> CompressedBlock {
    let mut out = CompressedBlock::default();
    let mut walked = Vec::with_capacity(4);
    let mut residual = block.symbols().to_vec();

    while !residual.is_empty() {
        let t = traverse_target_with(&residual, asm, &mut observe).expect("residual is non-empty");
        out.rm.0[t.target.index()] = Some(t.outcome);
        out.sm.0[t.target.index()] = t.events;
        walked.push(TermEntry { prime: t.target, last_seq: t.last_seq });
        residual = t.residual;
    }

    for (slot, entry) in out.tm.0.iter_mut().zip(walked.iter().rev()) {
        *slot = Some(*entry);
    }
    out
}

fn check_layout(cb: &CompressedBlock) -> Result<(), IntegrityFailure> {
    let occupied = cb.tm.0.iter().take_while(|s| s.is_some()).count();
    if occupied == 0 || cb.tm.0[occupied..].iter().any(Option::is_some) {
        return Err(IntegrityFailure::TermLayout);
    }
    let mut seen = [false; 4];
    for entry in cb.tm.occupied() {
        if std::mem::replace(&mut seen[entry.prime.index()], true) {
            return Err(IntegrityFailure::TermLayout);
        }
        if cb.rm.outcome(entry.prime).is_none() {
            return Err(IntegrityFailure::MissingOutcome(entry.prime));
        }
        check_events(entry, cb.sm.events(entry.prime))?;
    }
    for p in PrimeSymbol::ALL {
        if !seen[p.index()] && (cb.rm.outcome(p).is_some() || !cb.sm.events(p).is_empty()) {
            return Err(IntegrityFailure::OrphanEntry(p));
        }
    }
    Ok(())
}

fn check_events(entry: TermEntry, events: &[SequenceEvent]) -> Result<(), IntegrityFailure> {
    let mut prev = 0u8;
    for e in events {
        // A maximal run is always followed by a crossing, so absorption
        // steps are never adjacent.
        let ordered = e.seq > prev.saturating_add(u8::from(prev > 0));
        if !ordered || e.seq > entry.last_seq || e.redundant == 0 {
            return Err(IntegrityFailure::EventOrder(entry.prime));
        }
        prev = e.seq;
    }
    Ok(())
}

/// Rebuilds the symbol block from its matrices.
pub fn decompress_block(cb: &CompressedBlock, asm: &AddSubMatrix) -> Result<SymbolBlock, IntegrityFailure> {
    check_layout(cb)?;

    let mut block: Vec<PrimeSymbol> = Vec::with_capacity(BLOCK_SYMBOLS);
    for TermEntry { prime, last_seq } in cb.tm.occupied() {
        let mut value = cb.rm.outcome(prime).ok_or(IntegrityFailure::MissingOutcome(prime))?;
        let mut cursor = block.len();
        let mut events = cb.sm.events(prime).iter().rev().peekable();

        for seq in (1..=last_seq).rev() {
            match events.next_if(|e| e.seq == seq) {
                Some(e) => {
                    value -= i32::from(e.redundant) * prime.value();
                    let run = std::iter::repeat_n(prime, usize::from(e.redundant));
                    block.splice(cursor..cursor, run);
                }
                None => {
                    let left = cursor.checked_sub(1).ok_or(IntegrityFailure::NothingToCross(prime))?;
                    value -= asm.delta(prime, block[left]);
                    cursor = left;
                }
            }
            if block.len() >= BLOCK_SYMBOLS {
                return Err(IntegrityFailure::WrongLength(block.len() + 1));
            }
        }

        if cursor != 0 || value != prime.value() {
            return Err(IntegrityFailure::CursorNotRestored { prime, position: cursor, value });
        }
        block.insert(0, prime);
    }

    SymbolBlock::from_slice(&block).map_err(|_| IntegrityFailure::WrongLength(block.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::PrimeSymbol::{Five, Seven, Three, Two};

    fn syms(values: &[u32]) -> Vec<PrimeSymbol> {
        values.iter().map(|&v| PrimeSymbol::from_value(v).unwrap()).collect()
    }

    fn ev(pairs: &[(u8, u8)]) -> Vec<SequenceEvent> {
        pairs.iter().map(|&(s, r)| SequenceEvent::new(s, r)).collect()
    }

    const WORKED: [u32; 15] = [5, 5, 5, 7, 7, 3, 7, 2, 7, 5, 2, 7, 7, 5, 3];
    const WORKED_ASM: AddSubMatrix = AddSubMatrix::from_orders([0x2, 0x3, 0x5, 0x7]);

    #[test]
    fn asm_rows_and_columns() {
        let asm = WORKED_ASM;
        assert_eq!(asm.delta(Five, Two), -1);
        assert_eq!(asm.delta(Five, Seven), 1);
        assert_eq!(asm.sign(Three, Three), None);
        assert_eq!(asm.row_mask(Five), 0b0101);
        // column 3 reads -1, X, +1, +1 down the rows
        assert_eq!(asm.column_mask(Three), 0b0011);
        assert_eq!(asm.column_mask(Two), 0b0000);
    }

    #[test]
    fn traverse_first_target() {
        let t = traverse_target(&syms(&WORKED), &WORKED_ASM).unwrap();
        assert_eq!(t.target, Five);
        assert_eq!(t.outcome, 31);
        assert_eq!(t.events, ev(&[(1, 2), (8, 1), (12, 1)]));
        assert_eq!(t.last_seq, 13);
        assert_eq!(t.residual, syms(&[7, 7, 3, 7, 2, 7, 2, 7, 7, 3]));
    }

    #[test]
    fn traverse_second_target() {
        let t = traverse_target(&syms(&[7, 7, 3, 7, 2, 7, 2, 7, 7, 3]), &WORKED_ASM).unwrap();
        assert_eq!(t.target, Seven);
        assert_eq!(t.outcome, 42);
        assert_eq!(t.events, ev(&[(1, 1), (3, 1), (5, 1), (7, 2)]));
        assert_eq!(t.last_seq, 8);
        assert_eq!(t.residual, syms(&[3, 2, 2, 3]));
    }

    #[test]
    fn traverse_constant_block() {
        for orders in [[0u8; 4], [0xF; 4]] {
            let t = traverse_target(&[Two; 15], &AddSubMatrix::from_orders(orders)).unwrap();
            assert_eq!((t.target, t.outcome, t.last_seq), (Two, 30, 1));
            assert_eq!(t.events, ev(&[(1, 14)]));
            assert!(t.residual.is_empty());
        }
    }

    #[test]
    fn traverse_empty_residual() {
        assert_eq!(traverse_target(&[], &WORKED_ASM), Err(EmptyResidual));
    }

    #[test]
    fn trace_rows_follow_cursor() {
        let mut steps = Vec::new();
        traverse_target_with(&syms(&WORKED), &WORKED_ASM, |s| steps.push(s.clone())).unwrap();
        assert_eq!(steps[0].row, vec![15, 7, 7, 3, 7, 2, 7, 5, 2, 7, 7, 5, 3]);
        assert_eq!(steps[3].row, vec![7, 7, 3, 18, 7, 2, 7, 5, 2, 7, 7, 5, 3]);
        assert_eq!(steps[12].row, vec![7, 7, 3, 7, 2, 7, 2, 7, 7, 3, 31]);
        assert_eq!(steps[12].cursor, 10);
    }

    #[test]
    fn compress_worked_block() {
        let block = SymbolBlock::from_values(&WORKED).unwrap();
        let cb = compress_block(&block, &WORKED_ASM);
        assert_eq!(cb.rm, ReducedMatrix([Some(4), Some(4), Some(31), Some(42)]));
        assert_eq!(cb.sm.events(Two), ev(&[(1, 1)]));
        assert_eq!(cb.sm.events(Three), ev(&[(3, 1)]));
        assert_eq!(cb.sm.events(Five), ev(&[(1, 2), (8, 1), (12, 1)]));
        assert_eq!(cb.sm.events(Seven), ev(&[(1, 1), (3, 1), (5, 1), (7, 2)]));
        let tm: Vec<_> = cb.tm.occupied().map(|e| (e.prime.value(), e.last_seq)).collect();
        assert_eq!(tm, vec![(2, 1), (3, 3), (7, 8), (5, 13)]);
        assert_eq!(decompress_block(&cb, &WORKED_ASM).unwrap(), block);
    }

    #[test]
    fn compress_constant_block() {
        let block = SymbolBlock::new([Two; 15]);
        let cb = compress_block(&block, &WORKED_ASM);
        assert_eq!(cb.rm, ReducedMatrix([Some(30), None, None, None]));
        assert_eq!(cb.sm.events(Two), ev(&[(1, 14)]));
        assert_eq!(cb.sm.total_events(), 1);
        assert_eq!(cb.tm, TermMatrix([Some(TermEntry { prime: Two, last_seq: 1 }), None, None, None]));
        assert_eq!(decompress_block(&cb, &WORKED_ASM).unwrap(), block);
    }

    #[test]
    fn lone_final_target_has_no_steps() {
        let mut values = [2u32; 15];
        values[14] = 3;
        let block = SymbolBlock::from_values(&values).unwrap();
        let cb = compress_block(&block, &WORKED_ASM);
        assert_eq!(cb.tm.0[0], Some(TermEntry { prime: Three, last_seq: 0 }));
        assert_eq!(cb.rm.outcome(Three), Some(3));
        assert_eq!(decompress_block(&cb, &WORKED_ASM).unwrap(), block);
    }

    #[test]
    fn wrong_asm_is_detected_or_harmless() {
        let block = SymbolBlock::from_values(&WORKED).unwrap();
        let cb = compress_block(&block, &WORKED_ASM);
        // Row 5 flipped for columns 2 and 3: target 5 crosses both.
        let wrong = AddSubMatrix::from_orders([0x2, 0x3, 0xA, 0x7]);
        assert!(matches!(
            decompress_block(&cb, &wrong),
            Err(IntegrityFailure::CursorNotRestored { prime: Five, .. })
        ));
        // Row 2 is walked last and crosses nothing, so its order is irrelevant.
        let harmless = AddSubMatrix::from_orders([0xD, 0x3, 0x5, 0x7]);
        assert_eq!(decompress_block(&cb, &harmless).unwrap(), block);
    }

    #[test]
    fn malformed_matrices_are_rejected() {
        let block = SymbolBlock::from_values(&WORKED).unwrap();
        let good = compress_block(&block, &WORKED_ASM);

        let mut gap = good.clone();
        gap.tm.0[1] = None;
        assert_eq!(decompress_block(&gap, &WORKED_ASM), Err(IntegrityFailure::TermLayout));

        let mut dup = good.clone();
        dup.tm.0[1] = dup.tm.0[0];
        assert_eq!(decompress_block(&dup, &WORKED_ASM), Err(IntegrityFailure::TermLayout));

        let mut missing = good.clone();
        missing.rm.0[Five.index()] = None;
        assert_eq!(decompress_block(&missing, &WORKED_ASM), Err(IntegrityFailure::MissingOutcome(Five)));

        let mut zero_run = good.clone();
        zero_run.sm.events_mut(Seven)[0].redundant = 0;
        assert_eq!(decompress_block(&zero_run, &WORKED_ASM), Err(IntegrityFailure::EventOrder(Seven)));

        let mut adjacent = good.clone();
        adjacent.sm.events_mut(Seven)[1].seq = 2;
        assert_eq!(decompress_block(&adjacent, &WORKED_ASM), Err(IntegrityFailure::EventOrder(Seven)));

        let mut long_walk = good.clone();
        long_walk.tm.0[0] = Some(TermEntry { prime: Two, last_seq: 2 });
        assert_eq!(decompress_block(&long_walk, &WORKED_ASM), Err(IntegrityFailure::NothingToCross(Two)));

        let mut bigger_run = good;
        bigger_run.sm.events_mut(Five)[0].redundant = 3;
        assert!(decompress_block(&bigger_run, &WORKED_ASM).is_err());
    }
}
