//! Deterministic proof-of-work ledger simulation.
//!
//! Blocks are hashed with MD5 over a canonical `|`-separated header string and
//! must carry a hash with `difficulty` leading zero hex nibbles. Mining is a
//! seeded lottery among simulated nodes, so a run is a pure function of the
//! configuration, the seed, and the submitted transactions.

mod chain;
mod mempool;
mod network;
mod types;

pub use chain::{
    block_hash, genesis_block, mine_block, tx_root, validate_chain, verify_block, BlockError,
    Chain, ChainError, ChainParams, ParamsError, DEFAULT_CAPACITY, DEFAULT_DIFFICULTY,
    MAX_DIFFICULTY,
};
pub use mempool::{Mempool, PoolEntry};
pub use network::{
    ConfigError, Ledger, LedgerConfig, NodeSim, RoundError, RoundReport, DEFAULT_NODES,
};
pub use types::{Address, Block, BlockHeader, RejectReason, Transaction, TxStatus};
