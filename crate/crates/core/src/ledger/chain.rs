use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::types::{Block, BlockHeader, Transaction};
use crate::crypto::{md5_digest, Digest128, Md5};

pub const MAX_DIFFICULTY: u8 = 6;
pub const DEFAULT_DIFFICULTY: u8 = 3;
pub const DEFAULT_CAPACITY: usize = 4;

/// Proof-of-work target and block size limit shared by every node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainParams {
    /// Required leading zero hex nibbles in a block hash.
    pub difficulty: u8,
    /// Maximum transactions per block.
    pub capacity: usize,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            difficulty: DEFAULT_DIFFICULTY,
            capacity: DEFAULT_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamsError {
    #[error("difficulty {0} exceeds the maximum of {MAX_DIFFICULTY}")]
    DifficultyTooHigh(u8),
    #[error("block capacity must be at least 1")]
    ZeroCapacity,
}

impl ChainParams {
    pub fn new(difficulty: u8, capacity: usize) -> Result<Self, ParamsError> {
        let params = ChainParams {
            difficulty,
            capacity,
        };
        params.check()?;
        Ok(params)
    }

    pub fn check(&self) -> Result<(), ParamsError> {
        if self.difficulty > MAX_DIFFICULTY {
            return Err(ParamsError::DifficultyTooHigh(self.difficulty));
        }
        if self.capacity == 0 {
            return Err(ParamsError::ZeroCapacity);
        }
        Ok(())
    }
}

/// Why a block does not extend its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum BlockError {
    #[error("prev_hash does not match parent hash")]
    BrokenLink,
    #[error("index is not parent index + 1")]
    BadIndex,
    #[error("timestamp precedes parent timestamp")]
    TimestampRegressed,
    #[error("block holds more transactions than the capacity")]
    OverCapacity,
    #[error("transaction id does not match its contents")]
    TxIdMismatch,
    #[error("tx_root does not match the transaction list")]
    TxRootMismatch,
    #[error("stored hash does not match the header")]
    HashMismatch,
    #[error("hash does not meet the difficulty target")]
    InsufficientWork,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("chain is empty")]
    Empty,
    #[error("genesis block is not canonical")]
    BadGenesis,
    #[error("block {index}: {reason}")]
    InvalidBlock { index: usize, reason: BlockError },
    #[error("block {index}: transaction {tx_id} already appears earlier in the chain")]
    DuplicateTransaction { index: usize, tx_id: Digest128 },
}

/// MD5 of the canonical header text.
pub fn block_hash(header: &BlockHeader) -> Digest128 {
    md5_digest(header.canonical().as_bytes())
}

/// MD5 of the concatenated tx_id hex strings, in block order.
pub fn tx_root(transactions: &[Transaction]) -> Digest128 {
    let mut hasher = Md5::new();
    for tx in transactions {
        hasher.update(tx.tx_id.to_hex().as_bytes());
    }
    hasher.finalize()
}

fn meets_target(hash: &Digest128, difficulty: u8) -> bool {
    hash.leading_zero_nibbles() >= u32::from(difficulty)
}

/// Searches nonces upward from `start` until the header hash meets the target.
fn solve(mut header: BlockHeader, difficulty: u8, start: u64) -> (BlockHeader, Digest128) {
    header.nonce = start;
    loop {
        let hash = block_hash(&header);
        if meets_target(&hash, difficulty) {
            return (header, hash);
        }
        header.nonce = header.nonce.wrapping_add(1);
    }
}

fn seal(header: BlockHeader, hash: Digest128, transactions: Vec<Transaction>) -> Block {
    Block {
        index: header.index,
        timestamp: header.timestamp,
        prev_hash: header.prev_hash,
        tx_root: header.tx_root,
        nonce: header.nonce,
        hash,
        transactions,
    }
}

/// The canonical genesis block for `params`: index 0, timestamp 0, zero
/// prev_hash, no transactions, first nonce from 0 that meets the target.
pub fn genesis_block(params: &ChainParams) -> Block {
    let header = BlockHeader {
        index: 0,
        timestamp: 0,
        prev_hash: Digest128::ZERO,
        tx_root: tx_root(&[]),
        nonce: 0,
    };
    let (header, hash) = solve(header, params.difficulty, 0);
    seal(header, hash, Vec::new())
}

/// Mines a block over `parent`. The nonce search starts at an offset derived
/// from `node_seed` and the block index; with difficulty 0 the nonce is 0.
pub fn mine_block(
    node_seed: u64,
    transactions: Vec<Transaction>,
    parent: &Block,
    difficulty: u8,
    timestamp: u64,
) -> Block {
    let index = parent.index + 1;
    let header = BlockHeader {
        index,
        timestamp,
        prev_hash: parent.hash,
        tx_root: tx_root(&transactions),
        nonce: 0,
    };
    let start = if difficulty == 0 {
        0
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(node_seed ^ index.rotate_left(32));
        u64::from(rng.next_u32())
    };
    let (header, hash) = solve(header, difficulty, start);
    seal(header, hash, transactions)
}

/// Checks that `block` validly extends `parent` under `params`.
pub fn verify_block(block: &Block, parent: &Block, params: &ChainParams) -> Result<(), BlockError> {
    if block.prev_hash != parent.hash {
        return Err(BlockError::BrokenLink);
    }
    if block.index != parent.index + 1 {
        return Err(BlockError::BadIndex);
    }
    if block.timestamp < parent.timestamp {
        return Err(BlockError::TimestampRegressed);
    }
    if block.transactions.len() > params.capacity {
        return Err(BlockError::OverCapacity);
    }
    check_contents(block)?;
    check_seal(block, params.difficulty)
}

fn check_contents(block: &Block) -> Result<(), BlockError> {
    if block
        .transactions
        .iter()
        .any(|tx| tx.computed_id() != tx.tx_id)
    {
        return Err(BlockError::TxIdMismatch);
    }
    if tx_root(&block.transactions) != block.tx_root {
        return Err(BlockError::TxRootMismatch);
    }
    Ok(())
}

fn check_seal(block: &Block, difficulty: u8) -> Result<(), BlockError> {
    if block_hash(&block.header()) != block.hash {
        return Err(BlockError::HashMismatch);
    }
    if !meets_target(&block.hash, difficulty) {
        return Err(BlockError::InsufficientWork);
    }
    Ok(())
}

/// An ordered, hash-linked list of blocks starting at the canonical genesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    params: ChainParams,
    blocks: Vec<Block>,
}

impl Chain {
    /// A chain holding only the genesis block.
    pub fn genesis(params: ChainParams) -> Result<Self, ParamsError> {
        params.check()?;
        Ok(Chain {
            blocks: vec![genesis_block(&params)],
            params,
        })
    }

    /// Wraps blocks without checking them; see [`validate_chain`].
    pub fn from_blocks(params: ChainParams, blocks: Vec<Block>) -> Self {
        Chain { params, blocks }
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always holds genesis")
    }

    /// Appends `block` if it validly extends the tip.
    pub fn append(&mut self, block: Block) -> Result<(), BlockError> {
        verify_block(&block, self.tip(), &self.params)?;
        self.blocks.push(block);
        Ok(())
    }

    pub fn into_blocks(self) -> Vec<Block> {
        self.blocks
    }
}

/// Full validation: canonical genesis, every link, and no transaction twice.
pub fn validate_chain(chain: &Chain) -> Result<(), ChainError> {
    let blocks = chain.blocks();
    let first = blocks.first().ok_or(ChainError::Empty)?;
    if *first != genesis_block(chain.params()) {
        return Err(ChainError::BadGenesis);
    }
    let mut seen = BTreeSet::new();
    for (i, pair) in blocks.windows(2).enumerate() {
        let index = i + 1;
        verify_block(&pair[1], &pair[0], chain.params())
            .map_err(|reason| ChainError::InvalidBlock { index, reason })?;
        for tx in &pair[1].transactions {
            if !seen.insert(tx.tx_id) {
                return Err(ChainError::DuplicateTransaction {
                    index,
                    tx_id: tx.tx_id,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::ContractCall;
    use crate::ledger::Address;

    fn params(difficulty: u8) -> ChainParams {
        ChainParams::new(difficulty, 4).unwrap()
    }

    fn sample_tx(fee: u64) -> Transaction {
        let digest = md5_digest(b"certificate");
        Transaction::new(
            Address::derive(b"uni"),
            Address::derive(b"contract"),
            ContractCall::StoreCertificate {
                cert_digest: digest,
                student_ref: "S1".into(),
            },
            fee,
        )
    }

    #[test]
    fn genesis_conventions() {
        let chain = Chain::genesis(ChainParams::default()).unwrap();
        assert_eq!(chain.len(), 1);
        assert_eq!(chain.tip().index, 0);
        assert_eq!(chain.tip().timestamp, 0);
        assert_eq!(chain.tip().prev_hash.to_hex(), "0".repeat(32));
        assert!(chain.tip().transactions.is_empty());
        assert_eq!(validate_chain(&chain), Ok(()));
    }

    #[test]
    fn invalid_params_rejected() {
        assert_eq!(
            ChainParams::new(7, 4),
            Err(ParamsError::DifficultyTooHigh(7))
        );
        assert_eq!(ChainParams::new(2, 0), Err(ParamsError::ZeroCapacity));
    }

    #[test]
    fn reference_header_golden_digest() {
        let header = BlockHeader {
            index: 1,
            timestamp: 1,
            prev_hash: Digest128::ZERO,
            tx_root: Digest128::ZERO,
            nonce: 0,
        };
        let text = "1|1|00000000000000000000000000000000|00000000000000000000000000000000|0";
        assert_eq!(header.canonical(), text);
        // Frozen from an independent MD5 (Python hashlib) of the text above.
        assert_eq!(
            block_hash(&header).to_hex(),
            "f3f4bb94a7aa8087cc395133614ddb8c"
        );
    }

    #[test]
    fn empty_tx_root_is_md5_of_empty_string() {
        assert_eq!(tx_root(&[]).to_hex(), "d41d8cd98f00b204e9800998ecf8427e");
    }

    #[test]
    fn nonce_changes_hash() {
        let mut header = genesis_block(&params(0)).header();
        let a = block_hash(&header);
        header.nonce += 1;
        assert_ne!(a, block_hash(&header));
    }

    #[test]
    fn difficulty_zero_takes_nonce_zero() {
        let parent = genesis_block(&params(0));
        let block = mine_block(99, vec![sample_tx(1)], &parent, 0, 1);
        assert_eq!(block.nonce, 0);
    }

    #[test]
    fn difficulty_one_leading_zero() {
        let parent = genesis_block(&params(1));
        let block = mine_block(7, Vec::new(), &parent, 1, 1);
        assert!(block.hash.to_hex().starts_with('0'));
        assert_eq!(verify_block(&block, &parent, &params(1)), Ok(()));
    }

    #[test]
    fn mining_is_repeatable() {
        let parent = genesis_block(&params(2));
        let a = mine_block(5, vec![sample_tx(2)], &parent, 2, 1);
        let b = mine_block(5, vec![sample_tx(2)], &parent, 2, 1);
        assert_eq!(a, b);
    }

    #[test]
    fn altered_payload_detected() {
        let p = params(2);
        let parent = genesis_block(&p);
        let mut block = mine_block(1, vec![sample_tx(3)], &parent, 2, 1);
        assert_eq!(verify_block(&block, &parent, &p), Ok(()));
        if let ContractCall::StoreCertificate { student_ref, .. } =
            &mut block.transactions[0].payload
        {
            student_ref.push('x');
        }
        assert_eq!(
            verify_block(&block, &parent, &p),
            Err(BlockError::TxIdMismatch)
        );
    }

    #[test]
    fn skipped_index_rejected() {
        let p = params(1);
        let parent = genesis_block(&p);
        let mut block = mine_block(1, Vec::new(), &parent, 1, 1);
        block.index += 1;
        assert_eq!(verify_block(&block, &parent, &p), Err(BlockError::BadIndex));
    }

    #[test]
    fn over_capacity_rejected() {
        let p = ChainParams::new(0, 1).unwrap();
        let parent = genesis_block(&p);
        let block = mine_block(1, vec![sample_tx(1), sample_tx(2)], &parent, 0, 1);
        assert_eq!(
            verify_block(&block, &parent, &p),
            Err(BlockError::OverCapacity)
        );
    }

    #[test]
    fn spliced_block_with_valid_hash_breaks_link() {
        let p = params(1);
        let mut chain = Chain::genesis(p).unwrap();
        for t in 1..=3 {
            let block = mine_block(3, Vec::new(), chain.tip(), 1, t);
            chain.append(block).unwrap();
        }
        // A well-formed block mined on a different parent.
        let stranger = Block {
            hash: Digest128([0xab; 16]),
            ..chain.blocks()[1].clone()
        };
        let foreign = mine_block(4, Vec::new(), &stranger, 1, 2);
        let mut blocks = chain.clone().into_blocks();
        blocks[2] = foreign;
        let spliced = Chain::from_blocks(p, blocks);
        assert_eq!(
            validate_chain(&spliced),
            Err(ChainError::InvalidBlock {
                index: 2,
                reason: BlockError::BrokenLink
            })
        );
        assert_eq!(validate_chain(&chain), Ok(()));
    }
}
