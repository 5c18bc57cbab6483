use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cmp::Reverse;

use super::types::Transaction;
use crate::crypto::Digest128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolEntry {
    pub tx: Transaction,
    pub submit_seq: u64,
}

/// Pending transactions awaiting a block, keyed by tx_id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Mempool {
    entries: BTreeMap<Digest128, PoolEntry>,
    next_seq: u64,
}

impl Mempool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, tx_id: &Digest128) -> bool {
        self.entries.contains_key(tx_id)
    }

    pub fn get(&self, tx_id: &Digest128) -> Option<&PoolEntry> {
        self.entries.get(tx_id)
    }

    /// Adds `tx` with the next sequence number and returns that number.
    pub fn insert(&mut self, tx: Transaction) -> u64 {
        let submit_seq = self.next_seq;
        self.next_seq += 1;
        self.entries.insert(tx.tx_id, PoolEntry { tx, submit_seq });
        submit_seq
    }

    pub fn remove(&mut self, tx_id: &Digest128) -> Option<PoolEntry> {
        self.entries.remove(tx_id)
    }

    /// Escrowed fees currently held by pending transactions.
    pub fn escrowed(&self) -> u64 {
        self.entries.values().map(|e| e.tx.gas_fee).sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = &PoolEntry> {
        self.entries.values()
    }

    /// Up to `capacity` pending transactions, highest fee first, earlier
    /// submission first among equal fees. Does not modify the pool.
    pub fn select(&self, capacity: usize) -> Vec<Transaction> {
        let mut ranked: Vec<&PoolEntry> = self.entries.values().collect();
        ranked.sort_by_key(|e| (Reverse(e.tx.gas_fee), e.submit_seq));
        ranked
            .into_iter()
            .take(capacity)
            .map(|e| e.tx.clone())
            .collect()
    }
}
