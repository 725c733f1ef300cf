//! Measurement harness: brute-force cost under hardening, compression
//! behaviour of the engine, and a plain avalanche diagnostic.
//!
//! Every Monte-Carlo routine takes an explicit seed and draws from ChaCha8 so
//! runs are reproducible.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::cipher::{self, CipherError, CipherGrid};
use crate::codec::{Block30, PrimeSymbol, SymbolBlock, BLOCK_BITS, BLOCK_SYMBOLS};
use crate::container;
use crate::engine::{self, AddSubMatrix};
use crate::keyschedule::{BaseKey, KeyChain};

/// Largest toy keyspace the brute-force demo accepts.
pub const MAX_RESTRICTED_BITS: u32 = 24;
pub const MIN_AVALANCHE_SAMPLES: usize = 100;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("restricted keyspace of {0} bits exceeds the {MAX_RESTRICTED_BITS}-bit limit")]
    InvalidKeyspace(u32),
    #[error("need at least {MIN_AVALANCHE_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error(transparent)]
    Cipher(#[from] CipherError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BruteforceConfig {
    /// Low bits of the base key the attacker does not know.
    pub restricted_bits: u32,
    /// Harden after this many failures; 0 disables hardening.
    pub harden_every: u64,
    pub seed: u64,
    /// Attempt cap; defaults to twice the restricted keyspace.
    pub max_attempts: Option<u64>,
}

impl BruteforceConfig {
    pub fn new(restricted_bits: u32, harden_every: u64, seed: u64) -> Self {
        Self { restricted_bits, harden_every, seed, max_attempts: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttackReport {
    /// Unknown key bits at the end of the run: restricted base bits plus 32
    /// per sticky word the attacker must now guess.
    pub keyspace_bits: u32,
    pub attempts_made: u64,
    pub failures: u64,
    pub integrity_rejections: u64,
    pub hardenings_triggered: u64,
    #[serde(with = "duration_secs")]
    pub elapsed: Duration,
    pub success: bool,
}

mod duration_secs {
    use serde::Serializer;
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }
}

/// Known-plaintext key search over a toy keyspace.
///
/// The attacker knows every base-key bit except the low `restricted_bits` and
/// walks that space from a seeded random starting point. A candidate succeeds
/// when it decrypts `grid` to the true plaintext; anything else (including an
/// integrity rejection) is a failure. Every `harden_every` failures the
/// defender hardens the ciphertext: the chain grows by a fresh sticky word the
/// attacker has to guess, and the search restarts against the new grid.
pub fn bruteforce_demo(
    grid: &CipherGrid,
    chain: &KeyChain,
    config: &BruteforceConfig,
) -> Result<AttackReport, AnalysisError> {
    let bits = config.restricted_bits;
    if bits > MAX_RESTRICTED_BITS {
        return Err(AnalysisError::InvalidKeyspace(bits));
    }
    let plaintext = cipher::decrypt_block(grid, chain)?;
    let space = 1u64 << bits;
    let mask = u128::from(space - 1);
    let budget = config.max_attempts.unwrap_or(2 * space);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start = rng.gen_range(0..space);
    let mut defender = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_DEF0_0000_0001);

    let mut grid = grid.clone();
    let mut chain = chain.clone();
    let known = chain.base.to_u128() & !mask;

    let began = Instant::now();
    let (mut attempts, mut failures, mut rejections, mut hardenings) = (0u64, 0u64, 0u64, 0u64);
    let mut index = 0u64;
    let mut success = false;

    while attempts < budget && !(chain.sticky.is_empty() && index == space) {
        let guess = u128::from((start + index) % space);
        index += 1;
        let sticky = (0..chain.sticky.len()).map(|_| rng.gen()).collect();
        let candidate = KeyChain::with_sticky(BaseKey::from_u128(known | guess), sticky);
        attempts += 1;

        match cipher::decrypt_block(&grid, &candidate) {
            Ok(block) if block == plaintext => {
                success = true;
                break;
            }
            Ok(_) => failures += 1,
            Err(_) => {
                failures += 1;
                rejections += 1;
            }
        }

        if config.harden_every > 0 && failures % config.harden_every == 0 {
            (grid, chain) = cipher::harden(&grid, &chain, &mut defender)?;
            hardenings += 1;
            index = 0;
        }
    }

    Ok(AttackReport {
        keyspace_bits: bits + 32 * chain.sticky.len() as u32,
        attempts_made: attempts,
        failures,
        integrity_rejections: rejections,
        hardenings_triggered: hardenings,
        elapsed: began.elapsed(),
        success,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioEntry {
    pub block: u32,
    pub symbols: usize,
    pub sm_events: usize,
    pub compressed_bits: usize,
    /// `compressed_bits / 30`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    pub entries: Vec<RatioEntry>,
    pub mean_sm_events: f64,
    pub mean_compressed_bits: f64,
    pub mean_ratio: f64,
}

/// Bits needed to store a compressed block compactly: per present prime an
/// 8-bit outcome and a 6-bit TM pair (2-bit prime, 4-bit last step), plus one
/// byte per SM event.
pub fn compressed_size_bits(cb: &engine::CompressedBlock) -> usize {
    let present = cb.tm.occupied().count();
    present * (8 + 6) + 8 * cb.sm.total_events()
}

pub fn compression_stats(inputs: &[Block30], asm: &AddSubMatrix) -> RatioReport {
    let entries: Vec<RatioEntry> = inputs
        .iter()
        .map(|&block| {
            let cb = engine::compress_block(&SymbolBlock::from_block(block), asm);
            let bits = compressed_size_bits(&cb);
            RatioEntry {
                block: block.get(),
                symbols: BLOCK_SYMBOLS,
                sm_events: cb.sm.total_events(),
                compressed_bits: bits,
                ratio: bits as f64 / BLOCK_BITS as f64,
            }
        })
        .collect();
    let n = entries.len().max(1) as f64;
    RatioReport {
        mean_sm_events: entries.iter().map(|e| e.sm_events as f64).sum::<f64>() / n,
        mean_compressed_bits: entries.iter().map(|e| e.compressed_bits as f64).sum::<f64>() / n,
        mean_ratio: entries.iter().map(|e| e.ratio).sum::<f64>() / n,
        entries,
    }
}

/// A block whose symbols repeat the previous one with probability `repeat`.
pub fn run_biased_block<R: Rng + ?Sized>(rng: &mut R, repeat: f64) -> Block30 {
    let mut symbols = [PrimeSymbol::Two; BLOCK_SYMBOLS];
    symbols[0] = PrimeSymbol::from_pair(rng.gen_range(0..4));
    for i in 1..BLOCK_SYMBOLS {
        symbols[i] =
            if rng.gen_bool(repeat) { symbols[i - 1] } else { PrimeSymbol::from_pair(rng.gen_range(0..4)) };
    }
    SymbolBlock::new(symbols).to_block()
}

pub fn random_block<R: Rng + ?Sized>(rng: &mut R) -> Block30 {
    Block30::truncate(rng.gen())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AvalancheSummary {
    pub samples: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub min: u32,
    pub max: u32,
    /// Mean over serialized grid length, in bits.
    pub mean_fraction: f64,
}

/// Bitwise Hamming distance between two serialized grids; the shorter one is
/// treated as zero-padded.
pub fn grid_distance(a: &CipherGrid, b: &CipherGrid) -> (u32, usize) {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    container::write_grid(&mut x, a);
    container::write_grid(&mut y, b);
    let len = x.len().max(y.len());
    x.resize(len, 0);
    y.resize(len, 0);
    let distance = x.iter().zip(&y).map(|(p, q)| (p ^ q).count_ones()).sum();
    (distance, len * 8)
}

/// Flips one random plaintext bit per sample and measures how far the
/// serialized grid moves.
pub fn avalanche_test(
    chain: &KeyChain,
    samples: usize,
    seed: u64,
) -> Result<AvalancheSummary, AnalysisError> {
    if samples < MIN_AVALANCHE_SAMPLES {
        return Err(AnalysisError::TooFewSamples(samples));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut distances = Vec::with_capacity(samples);
    let mut fractions = 0.0;
    for _ in 0..samples {
        let block = random_block(&mut rng);
        let flipped = Block30::truncate(block.get() ^ (1 << rng.gen_range(0..BLOCK_BITS)));
        let a = cipher::encrypt_block(block, chain)?;
        let b = cipher::encrypt_block(flipped, chain)?;
        let (d, bits) = grid_distance(&a, &b);
        distances.push(d);
        fractions += f64::from(d) / bits as f64;
    }
    let n = samples as f64;
    let mean = distances.iter().map(|&d| f64::from(d)).sum::<f64>() / n;
    let var = distances.iter().map(|&d| (f64::from(d) - mean).powi(2)).sum::<f64>() / n;
    Ok(AvalancheSummary {
        samples,
        mean,
        std_dev: var.sqrt(),
        min: *distances.iter().min().expect("samples > 0"),
        max: *distances.iter().max().expect("samples > 0"),
        mean_fraction: fractions / n,
    })
}
