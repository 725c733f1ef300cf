#![allow(dead_code)]

use std::collections::BTreeMap;

use cryptompress::codec::{PrimeSymbol, SymbolBlock};
use cryptompress::engine::{AddSubMatrix, CompressedBlock};
use cryptompress::keyschedule::{BaseKey, KeyChain, MatrixKind};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
pub struct Erratum {
    pub what: String,
    pub printed: String,
    pub consistent: String,
    pub note: String,
}

#[derive(Debug, Deserialize)]
pub struct Worked {
    pub key: String,
    pub orders: [u8; 4],
    pub asm: [[Option<i32>; 4]; 4],
    pub bits: String,
    pub block: String,
    pub symbols: Vec<u32>,
    pub trace: Vec<i32>,
    pub rm: BTreeMap<u32, i32>,
    pub sm: BTreeMap<u32, Vec<(u8, u8)>>,
    pub tm: Vec<(u32, u8)>,
    pub xor_subkeys: [u8; 8],
    pub xor_sm: BTreeMap<u32, String>,
    pub placement: [[String; 5]; 4],
    pub errata: Vec<Erratum>,
}

impl Worked {
    pub fn base(&self) -> BaseKey {
        BaseKey::from_u128(u128::from_str_radix(&self.key, 16).unwrap())
    }

    pub fn chain(&self) -> KeyChain {
        KeyChain::new(self.base())
    }

    pub fn block_value(&self) -> u32 {
        u32::from_str_radix(&self.block, 16).unwrap()
    }

    pub fn bit_vec(&self) -> Vec<bool> {
        self.bits.chars().filter(|c| !c.is_whitespace()).map(|c| c == '1').collect()
    }
}

pub fn worked() -> Worked {
    let raw = include_str!("../fixtures/worked_example.json");
    serde_json::from_str(raw).expect("fixture parses")
}

/// "SM2" -> (Sequence, 2).
pub fn parse_label(label: &str) -> (MatrixKind, usize) {
    let split = label.len() - 1;
    let kind = match &label[..split] {
        "ASMH" => MatrixKind::AsmHorizontal,
        "ASMV" => MatrixKind::AsmVertical,
        "RM" => MatrixKind::Reduced,
        "SM" => MatrixKind::Sequence,
        "TM" => MatrixKind::Term,
        other => panic!("unknown column {other}"),
    };
    (kind, label[split..].parse().unwrap())
}

pub fn random_asm<R: rand::Rng>(rng: &mut R) -> AddSubMatrix {
    AddSubMatrix::from_orders(std::array::from_fn(|_| rng.gen_range(0..16)))
}

/// Outcome of every present prime, computed without walking the block.
///
/// Targets are taken in order of first occurrence. While `t` is walked the
/// residual holds every cell of `t` and of the primes walked after it, so
/// the walk adds `t` per absorbed cell and the ASM delta for each of the
/// others it crosses.
pub fn closed_form_outcomes(block: &SymbolBlock, asm: &AddSubMatrix) -> [Option<i32>; 4] {
    let symbols = block.symbols();
    let mut order: Vec<PrimeSymbol> = Vec::new();
    for &s in symbols {
        if !order.contains(&s) {
            order.push(s);
        }
    }
    let count = |p: PrimeSymbol| symbols.iter().filter(|&&s| s == p).count() as i32;
    let mut out = [None; 4];
    for (i, &t) in order.iter().enumerate() {
        let crossed: i32 = order[i + 1..].iter().map(|&u| count(u) * asm.delta(t, u)).sum();
        out[t.index()] = Some(t.value() * count(t) + crossed);
    }
    out
}

/// Cells of each prime recovered from its SM: the head plus every absorbed cell.
pub fn cells_from_sm(cb: &CompressedBlock) -> [usize; 4] {
    let mut out = [0; 4];
    for entry in cb.tm.occupied() {
        let absorbed: usize = cb.sm.events(entry.prime).iter().map(|e| usize::from(e.redundant)).sum();
        out[entry.prime.index()] = 1 + absorbed;
    }
    out
}
