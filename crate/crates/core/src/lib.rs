//! Core of a simulated blockchain for trusted student achievement records.
//!
//! Everything here is `no_std` (with `alloc`) and deterministic: MD5
//! fingerprinting, the proof-of-work ledger, the registry contract, and the
//! off-chain registry state machine. IO, HTTP, and the CLI live in the
//! `credchain` crate.

#![no_std]

extern crate alloc;

pub mod contract;
pub mod crypto;
pub mod ledger;
pub mod registry;

pub use crypto::{hex_decode, hex_encode, md5_digest, Digest128, HexError, Md5};
pub use ledger::{Address, Block, Chain, ChainParams, Ledger, LedgerConfig, Transaction, TxStatus};
