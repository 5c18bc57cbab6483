use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::contract::ContractCall;
use crate::crypto::{decode_fixed, hex_encode, md5_digest, Digest128, HexError};

/// A 20-octet account or contract address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    /// Deterministic address from arbitrary material: the 16 digest octets of
    /// `md5(material)` followed by the first 4 octets of `md5(md5(material))`.
    pub fn derive(material: &[u8]) -> Address {
        let head = md5_digest(material);
        let tail = md5_digest(head.as_bytes());
        let mut out = [0u8; 20];
        out[..16].copy_from_slice(head.as_bytes());
        out[16..].copy_from_slice(&tail.as_bytes()[..4]);
        Address(out)
    }

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex_encode(&self.0)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({self})")
    }
}

impl FromStr for Address {
    type Err = HexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Address(decode_fixed(s)?))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// A fee-bearing call to the contract. `submit_seq` is mempool bookkeeping and
/// is not part of the transaction as stored in blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub tx_id: Digest128,
    pub sender: Address,
    pub target: Address,
    #[serde(serialize_with = "canonical_payload")]
    pub payload: ContractCall,
    pub gas_fee: u64,
}

/// Writes the payload with sorted keys, matching its canonical JSON.
fn canonical_payload<S: Serializer>(call: &ContractCall, serializer: S) -> Result<S::Ok, S::Error> {
    serde_json::to_value(call)
        .map_err(serde::ser::Error::custom)?
        .serialize(serializer)
}

impl Transaction {
    pub fn new(sender: Address, target: Address, payload: ContractCall, gas_fee: u64) -> Self {
        let tx_id = md5_digest(canonical_tx(&sender, &target, &payload, gas_fee).as_bytes());
        Transaction {
            tx_id,
            sender,
            target,
            payload,
            gas_fee,
        }
    }

    /// `sender_hex|target_hex|payload_canonical_json|gas_fee`
    pub fn canonical(&self) -> String {
        canonical_tx(&self.sender, &self.target, &self.payload, self.gas_fee)
    }

    pub fn computed_id(&self) -> Digest128 {
        md5_digest(self.canonical().as_bytes())
    }
}

fn canonical_tx(sender: &Address, target: &Address, payload: &ContractCall, fee: u64) -> String {
    format!("{sender}|{target}|{}|{fee}", payload.canonical_json())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub index: u64,
    pub timestamp: u64,
    pub prev_hash: Digest128,
    pub tx_root: Digest128,
    pub nonce: u64,
}

impl BlockHeader {
    /// `index|timestamp|prev_hash_hex|tx_root_hex|nonce`
    pub fn canonical(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}",
            self.index, self.timestamp, self.prev_hash, self.tx_root, self.nonce
        )
    }
}

/// On-disk and in-memory block. Field order matches the persisted JSON line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub index: u64,
    pub timestamp: u64,
    pub prev_hash: Digest128,
    pub tx_root: Digest128,
    pub nonce: u64,
    pub hash: Digest128,
    pub transactions: Vec<Transaction>,
}

impl Block {
    pub fn header(&self) -> BlockHeader {
        BlockHeader {
            index: self.index,
            timestamp: self.timestamp,
            prev_hash: self.prev_hash,
            tx_root: self.tx_root,
            nonce: self.nonce,
        }
    }
}

/// Why the ledger refused a submission, or why a lookup found nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    InsufficientBalance,
    Duplicate,
    InvalidFee,
    MalformedId,
    Unknown,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::InsufficientBalance => "insufficient balance",
            RejectReason::Duplicate => "duplicate",
            RejectReason::InvalidFee => "invalid fee",
            RejectReason::MalformedId => "malformed tx_id",
            RejectReason::Unknown => "unknown",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TxStatus {
    Pending,
    Confirmed { block_index: u64, depth: u64 },
    Rejected { reason: RejectReason },
}

impl TxStatus {
    pub fn rejected(reason: RejectReason) -> Self {
        TxStatus::Rejected { reason }
    }

    pub fn is_confirmed(&self) -> bool {
        matches!(self, TxStatus::Confirmed { .. })
    }
}
