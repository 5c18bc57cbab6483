use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::chain::{mine_block, Chain, ChainParams, ParamsError};
use super::mempool::Mempool;
use super::types::{Address, Block, RejectReason, Transaction, TxStatus};
use crate::crypto::Digest128;

pub const DEFAULT_NODES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerConfig {
    pub params: ChainParams,
    pub nodes: usize,
    pub seed: u64,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig {
            params: ChainParams::default(),
            nodes: DEFAULT_NODES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("at least one node is required")]
    NoNodes,
}

/// A simulated miner holding its own replica of the chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSim {
    pub node_id: u32,
    /// Wallet credited with the fees of blocks this node wins.
    pub address: Address,
    pub rng_seed: u64,
    pub chain: Chain,
}

/// Outcome of one mining round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundReport {
    pub winner: u32,
    pub block: Block,
    pub fees: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("node {node_id} refused the block mined by node {winner}: {reason}")]
pub struct RoundError {
    pub winner: u32,
    pub node_id: u32,
    pub reason: super::chain::BlockError,
}

/// Single-writer ledger: wallets, mempool with fee escrow, and a set of
/// simulated nodes that take turns mining by seeded lottery.
#[derive(Debug, Clone)]
pub struct Ledger {
    config: LedgerConfig,
    nodes: Vec<NodeSim>,
    wallets: BTreeMap<Address, u64>,
    pool: Mempool,
    confirmed: BTreeMap<Digest128, u64>,
    rejected: BTreeMap<Digest128, RejectReason>,
    tick: u64,
    lottery: ChaCha8Rng,
}

fn node_address(seed: u64, node_id: u32) -> Address {
    let mut material = [0u8; 17];
    material[..8].copy_from_slice(&seed.to_le_bytes());
    material[8..12].copy_from_slice(&node_id.to_le_bytes());
    material[12..].copy_from_slice(b"miner");
    Address::derive(&material)
}

impl Ledger {
    pub fn new(config: LedgerConfig) -> Result<Self, ConfigError> {
        if config.nodes == 0 {
            return Err(ConfigError::NoNodes);
        }
        let genesis = Chain::genesis(config.params)?;
        let mut seeder = ChaCha8Rng::seed_from_u64(config.seed);
        let nodes = (0..config.nodes as u32)
            .map(|node_id| NodeSim {
                node_id,
                address: node_address(config.seed, node_id),
                rng_seed: seeder.next_u64(),
                chain: genesis.clone(),
            })
            .collect();
        let lottery = ChaCha8Rng::seed_from_u64(seeder.next_u64());
        Ok(Ledger {
            config,
            nodes,
            wallets: BTreeMap::new(),
            pool: Mempool::new(),
            confirmed: BTreeMap::new(),
            rejected: BTreeMap::new(),
            tick: 0,
            lottery,
        })
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    pub fn params(&self) -> &ChainParams {
        &self.config.params
    }

    /// The canonical chain. All node replicas are equal after every round.
    pub fn chain(&self) -> &Chain {
        &self.nodes[0].chain
    }

    pub fn nodes(&self) -> &[NodeSim] {
        &self.nodes
    }

    pub fn pool(&self) -> &Mempool {
        &self.pool
    }

    /// Logical clock: the number of completed rounds.
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn balance(&self, address: &Address) -> u64 {
        self.wallets.get(address).copied().unwrap_or(0)
    }

    pub fn wallets(&self) -> &BTreeMap<Address, u64> {
        &self.wallets
    }

    /// Wallet balances plus fees escrowed in the pool.
    pub fn total_supply(&self) -> u64 {
        self.wallets.values().sum::<u64>() + self.pool.escrowed()
    }

    /// Test-network faucet. The only operation that creates balance.
    pub fn fund(&mut self, address: Address, amount: u64) {
        *self.wallets.entry(address).or_insert(0) += amount;
    }

    /// Admits `tx` into the pool, escrowing its fee from the sender's wallet.
    pub fn submit(&mut self, tx: Transaction) -> TxStatus {
        let status = self.admit(&tx);
        match status {
            TxStatus::Rejected { reason } if reason != RejectReason::Duplicate => {
                self.rejected.insert(tx.tx_id, reason);
            }
            TxStatus::Pending => {
                self.rejected.remove(&tx.tx_id);
            }
            _ => {}
        }
        status
    }

    fn admit(&mut self, tx: &Transaction) -> TxStatus {
        if tx.computed_id() != tx.tx_id {
            return TxStatus::rejected(RejectReason::MalformedId);
        }
        if self.pool.contains(&tx.tx_id) || self.confirmed.contains_key(&tx.tx_id) {
            return TxStatus::rejected(RejectReason::Duplicate);
        }
        if tx.gas_fee == 0 {
            return TxStatus::rejected(RejectReason::InvalidFee);
        }
        let balance = self.wallets.entry(tx.sender).or_insert(0);
        if *balance < tx.gas_fee {
            return TxStatus::rejected(RejectReason::InsufficientBalance);
        }
        *balance -= tx.gas_fee;
        self.pool.insert(tx.clone());
        TxStatus::Pending
    }

    /// Runs one mining round: a seeded lottery picks the winner, which mines
    /// the highest-fee pending transactions onto its tip and broadcasts the
    /// block. Every other node verifies before appending; if any refuses,
    /// nothing changes.
    pub fn run_round(&mut self) -> Result<RoundReport, RoundError> {
        let winner = (self.lottery.next_u64() % self.nodes.len() as u64) as usize;
        let timestamp = self.tick + 1;
        let selected = self.pool.select(self.config.params.capacity);
        let miner = &self.nodes[winner];
        let block = mine_block(
            miner.rng_seed,
            selected,
            miner.chain.tip(),
            self.config.params.difficulty,
            timestamp,
        );

        let mut replicas = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let mut chain = node.chain.clone();
            chain.append(block.clone()).map_err(|reason| RoundError {
                winner: winner as u32,
                node_id: node.node_id,
                reason,
            })?;
            replicas.push(chain);
        }
        for (node, chain) in self.nodes.iter_mut().zip(replicas) {
            node.chain = chain;
        }

        let mut fees = 0;
        for tx in &block.transactions {
            if let Some(entry) = self.pool.remove(&tx.tx_id) {
                fees += entry.tx.gas_fee;
            }
            self.confirmed.insert(tx.tx_id, block.index);
        }
        let winner_address = self.nodes[winner].address;
        *self.wallets.entry(winner_address).or_insert(0) += fees;
        self.tick = timestamp;

        Ok(RoundReport {
            winner: winner as u32,
            block,
            fees,
        })
    }

    pub fn confirmation_status(&self, tx_id: &Digest128) -> TxStatus {
        if let Some(&block_index) = self.confirmed.get(tx_id) {
            let depth = self.chain().tip().index - block_index + 1;
            return TxStatus::Confirmed { block_index, depth };
        }
        if self.pool.contains(tx_id) {
            return TxStatus::Pending;
        }
        let reason = self
            .rejected
            .get(tx_id)
            .copied()
            .unwrap_or(RejectReason::Unknown);
        TxStatus::rejected(reason)
    }

    /// The confirmed transaction with `tx_id` and its block index.
    pub fn find_transaction(&self, tx_id: &Digest128) -> Option<(&Transaction, u64)> {
        let index = *self.confirmed.get(tx_id)?;
        let block = &self.chain().blocks()[index as usize];
        block
            .transactions
            .iter()
            .find(|tx| tx.tx_id == *tx_id)
            .map(|tx| (tx, index))
    }
}
