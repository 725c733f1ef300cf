//! Cryptompress: a symmetric cipher built on a compression transform.
//!
//! A 30-bit block becomes fifteen prime symbols ([`codec`]), which a keyed
//! walk reduces to three small matrices ([`engine`]). The 128-bit key
//! ([`keyschedule`]) selects the walk's add/subtract table, XOR-masks the
//! sequence matrix and scrambles the resulting twenty cells across a grid
//! ([`cipher`]). Every recognised failed attempt can append a 32-bit sticky
//! key and re-encrypt the sequence cells in place.
//!
//! [`container`] holds the file formats, [`analysis`] the measurement
//! harness, and [`cli`] the command-line front end.
//!
//! This is a study implementation. It makes no security claim.

pub mod analysis;
pub mod cipher;
pub mod cli;
pub mod codec;
pub mod container;
pub mod engine;
pub mod keyschedule;

pub use cipher::{decrypt_block, encrypt_block, harden, CipherError, CipherGrid, CipherMessage};
pub use codec::{Block30, PrimeSymbol, SymbolBlock};
pub use engine::{AddSubMatrix, CompressedBlock, IntegrityFailure};
pub use keyschedule::{BaseKey, KeyChain};
