//! Fixtures and reference oracles shared by integration test targets.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use credchain_core::contract::{contract_address_for, ContractCall};
use credchain_core::crypto::{md5_digest, Digest128};
use credchain_core::ledger::{mine_block, Address, Chain, ChainParams, Transaction};

pub fn store(sender: Address, tag: u32, fee: u64) -> Transaction {
    Transaction::new(
        sender,
        Address::derive(b"contract"),
        ContractCall::StoreCertificate {
            cert_digest: md5_digest(&tag.to_le_bytes()),
            student_ref: format!("S{tag}"),
        },
        fee,
    )
}

pub fn mined_chain(difficulty: u8, blocks: usize) -> Chain {
    let params = ChainParams::new(difficulty, 3).unwrap();
    let mut chain = Chain::genesis(params).unwrap();
    let sender = Address::derive(b"uni");
    let mut tag = 0;
    for t in 1..=blocks as u64 {
        let txs = (0..(t % 3) as u32)
            .map(|_| {
                tag += 1;
                store(sender, tag, u64::from(tag))
            })
            .collect();
        let block = mine_block(17, txs, chain.tip(), difficulty, t);
        chain.append(block).unwrap();
    }
    chain
}

#[derive(Debug, Clone)]
pub enum Mutation {
    Index,
    Timestamp,
    PrevHash,
    TxRoot,
    Nonce,
    Hash,
    DropTx,
    TxFee,
    TxSender,
    TxRef,
}

impl Mutation {
    pub const ALL: [Mutation; 10] = [
        Mutation::Index,
        Mutation::Timestamp,
        Mutation::PrevHash,
        Mutation::TxRoot,
        Mutation::Nonce,
        Mutation::Hash,
        Mutation::DropTx,
        Mutation::TxFee,
        Mutation::TxSender,
        Mutation::TxRef,
    ];
}

/// Applies `m` to block `block`; `None` when the block has nothing to mutate.
pub fn mutate(chain: &Chain, block: usize, m: &Mutation) -> Option<Chain> {
    let mut blocks = chain.clone().into_blocks();
    let b = &mut blocks[block];
    match m {
        Mutation::Index => b.index += 1,
        Mutation::Timestamp => b.timestamp += 1,
        Mutation::PrevHash => b.prev_hash.0[15] ^= 1,
        Mutation::TxRoot => b.tx_root.0[0] ^= 0x80,
        Mutation::Nonce => b.nonce = b.nonce.wrapping_add(1),
        Mutation::Hash => b.hash.0[7] ^= 4,
        Mutation::DropTx => {
            b.transactions.pop()?;
        }
        Mutation::TxFee => b.transactions.first_mut()?.gas_fee += 1,
        Mutation::TxSender => b.transactions.first_mut()?.sender.0[0] ^= 1,
        Mutation::TxRef => match &mut b.transactions.first_mut()?.payload {
            ContractCall::StoreCertificate { student_ref, .. } => student_ref.push('!'),
            _ => return None,
        },
    }
    Some(Chain::from_blocks(*chain.params(), blocks))
}

// ---- contract replay against independent oracles ----------------------------

#[derive(Debug, Clone)]
pub struct Call {
    pub sender: usize,
    pub wrong_target: bool,
    pub kind: Kind,
}

#[derive(Debug, Clone)]
pub enum Kind {
    Deploy,
    Register { uni: usize, name: u8 },
    Store { cert: u8 },
    Revoke { cert: u8 },
}

pub const ACTORS: usize = 4;

pub fn actor(i: usize) -> Address {
    Address::derive(format!("actor-{i}").as_bytes())
}

pub fn cert(i: u8) -> Digest128 {
    md5_digest(&[b'c', i])
}

/// Encodes the calls as transactions (fee = position, so every tx_id is
/// distinct) and mines them into blocks of up to three.
pub fn chain_of(calls: &[Call]) -> Chain {
    let params = ChainParams::new(0, 3).unwrap();
    let mut chain = Chain::genesis(params).unwrap();
    let first_deployer = calls
        .iter()
        .find(|c| matches!(c.kind, Kind::Deploy) && !c.wrong_target)
        .map(|c| actor(c.sender));
    let txs: Vec<Transaction> = calls
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let sender = actor(c.sender);
            let payload = match c.kind {
                Kind::Deploy => ContractCall::Deploy {},
                Kind::Register { uni, name } => ContractCall::RegisterUniversity {
                    name: if name == 0 {
                        " ".into()
                    } else {
                        format!("Uni {name}")
                    },
                    university_address: actor(uni),
                },
                Kind::Store { cert: d } => ContractCall::StoreCertificate {
                    cert_digest: cert(d),
                    student_ref: format!("S{i}"),
                },
                Kind::Revoke { cert: d } => ContractCall::RevokeCertificate {
                    cert_digest: cert(d),
                },
            };
            let target = match (&c.kind, c.wrong_target) {
                (_, true) => Address::derive(b"elsewhere"),
                (Kind::Deploy, false) => contract_address_for(&sender),
                (_, false) => first_deployer
                    .map(|d| contract_address_for(&d))
                    .unwrap_or_default(),
            };
            Transaction::new(sender, target, payload, i as u64 + 1)
        })
        .collect();
    for (t, chunk) in txs.chunks(3).enumerate() {
        let block = mine_block(1, chunk.to_vec(), chain.tip(), 0, t as u64 + 1);
        chain.append(block).unwrap();
    }
    chain
}

#[derive(Debug, Default, PartialEq)]
pub struct OracleState {
    pub admin: Option<usize>,
    pub universities: BTreeSet<usize>,
    pub certs: BTreeMap<u8, (usize, bool)>,
}

/// Tracks permissions with plain sets, independent of `ContractState`.
pub fn permission_oracle(calls: &[Call]) -> OracleState {
    let mut s = OracleState::default();
    for c in calls {
        let deployed_target_ok = s.admin.is_some() && !c.wrong_target;
        match c.kind {
            Kind::Deploy => {
                if s.admin.is_none() && !c.wrong_target {
                    s.admin = Some(c.sender);
                }
            }
            Kind::Register { uni, name } => {
                if deployed_target_ok && s.admin == Some(c.sender) && name != 0 {
                    s.universities.insert(uni);
                }
            }
            Kind::Store { cert } => {
                if deployed_target_ok
                    && s.universities.contains(&c.sender)
                    && !s.certs.contains_key(&cert)
                {
                    s.certs.insert(cert, (c.sender, false));
                }
            }
            Kind::Revoke { cert } => {
                if deployed_target_ok {
                    if let Some((issuer, revoked)) = s.certs.get_mut(&cert) {
                        if *issuer == c.sender {
                            *revoked = true;
                        }
                    }
                }
            }
        }
    }
    s
}

/// Validity by scanning the log: the first accepted store of the digest, and
/// no later accepted revoke by that issuer.
pub fn log_scan_valid(calls: &[Call], digest: u8) -> bool {
    let accepted = |upto: usize| permission_oracle(&calls[..upto]);
    let store_at = (0..calls.len()).find(|&i| {
        matches!(calls[i].kind, Kind::Store { cert } if cert == digest)
            && accepted(i + 1).certs.get(&digest).map(|(who, _)| *who) == Some(calls[i].sender)
            && !accepted(i).certs.contains_key(&digest)
    });
    let Some(store_at) = store_at else {
        return false;
    };
    let issuer = calls[store_at].sender;
    !calls[store_at + 1..].iter().any(|c| {
        matches!(c.kind, Kind::Revoke { cert } if cert == digest)
            && c.sender == issuer
            && !c.wrong_target
    })
}
