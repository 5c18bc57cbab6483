//! The achievement-registry contract.
//!
//! Contract state is never written directly. It is the fold of every confirmed
//! [`ContractCall`] over the chain in (block index, position) order. Calls that
//! fail execution stay on chain with their fee spent and leave state untouched.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::Digest128;
use crate::ledger::{Address, Block, Chain, Ledger, Transaction, TxStatus};

/// Tag of the only contract code this system knows. Fixed at deployment.
pub const CODE_VERSION: &str = "achievement-registry/1";

/// Payload of a transaction addressed to the contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContractCall {
    Deploy {},
    RegisterUniversity {
        name: String,
        university_address: Address,
    },
    StoreCertificate {
        cert_digest: Digest128,
        student_ref: String,
    },
    RevokeCertificate {
        cert_digest: Digest128,
    },
}

impl ContractCall {
    /// Compact JSON with lexicographically sorted keys.
    pub fn canonical_json(&self) -> String {
        // serde_json's map is a BTreeMap without `preserve_order`, so going
        // through `Value` sorts every object's keys.
        let value = serde_json::to_value(self).expect("contract calls always serialize");
        serde_json::to_string(&value).expect("json values always serialize")
    }
}

/// The contract address a deployment by `deployer` lands at.
pub fn contract_address_for(deployer: &Address) -> Address {
    let mut material = Vec::with_capacity(26);
    material.extend_from_slice(deployer.as_bytes());
    material.extend_from_slice(b"deploy");
    Address::derive(&material)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(rename_all = "snake_case")]
pub enum ExecError {
    #[error("already deployed")]
    AlreadyDeployed,
    #[error("not deployed")]
    NotDeployed,
    #[error("wrong target")]
    WrongTarget,
    #[error("unauthorized")]
    Unauthorized,
    #[error("duplicate")]
    Duplicate,
    #[error("empty name")]
    EmptyName,
    #[error("duplicate digest")]
    DuplicateDigest,
    #[error("unknown digest")]
    UnknownDigest,
    #[error("already revoked")]
    AlreadyRevoked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deployment {
    pub contract_address: Address,
    pub admin: Address,
    pub code_version: String,
    pub deployed_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniversityEntry {
    pub name: String,
    pub registered_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateEntry {
    pub cert_digest: Digest128,
    pub issuer: Address,
    pub student_ref: String,
    pub stored_at: u64,
    pub revoked: bool,
    pub revoked_at: Option<u64>,
}

/// Execution outcome of one confirmed transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub block_index: u64,
    pub outcome: Result<(), ExecError>,
}

/// Result of a read-only certificate lookup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verification {
    pub valid: bool,
    pub issuer_name: Option<String>,
    pub revoked: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractState {
    pub deployment: Option<Deployment>,
    pub universities: BTreeMap<Address, UniversityEntry>,
    pub certificates: BTreeMap<Digest128, CertificateEntry>,
    pub receipts: BTreeMap<Digest128, Receipt>,
}

impl ContractState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_deployed(&self) -> bool {
        self.deployment.is_some()
    }

    pub fn contract_address(&self) -> Option<Address> {
        self.deployment.as_ref().map(|d| d.contract_address)
    }

    pub fn admin(&self) -> Option<Address> {
        self.deployment.as_ref().map(|d| d.admin)
    }

    /// Applies every transaction of `block` in order.
    pub fn apply_block(&mut self, block: &Block) {
        for tx in &block.transactions {
            let outcome = self.execute(tx, block.index);
            self.receipts.insert(
                tx.tx_id,
                Receipt {
                    block_index: block.index,
                    outcome,
                },
            );
        }
    }

    /// Executes one confirmed call. On error the state is unchanged.
    pub fn execute(&mut self, tx: &Transaction, block_index: u64) -> Result<(), ExecError> {
        if let ContractCall::Deploy {} = tx.payload {
            return self.deploy(tx.sender, tx.target, block_index);
        }
        let deployment = self.deployment.as_ref().ok_or(ExecError::NotDeployed)?;
        if tx.target != deployment.contract_address {
            return Err(ExecError::WrongTarget);
        }
        match &tx.payload {
            ContractCall::Deploy {} => unreachable!(),
            ContractCall::RegisterUniversity {
                name,
                university_address,
            } => self.register_university(tx.sender, name, *university_address, block_index),
            ContractCall::StoreCertificate {
                cert_digest,
                student_ref,
            } => self.store_certificate(tx.sender, *cert_digest, student_ref, block_index),
            ContractCall::RevokeCertificate { cert_digest } => {
                self.revoke_certificate(tx.sender, *cert_digest, block_index)
            }
        }
    }

    fn deploy(&mut self, deployer: Address, target: Address, at: u64) -> Result<(), ExecError> {
        if self.deployment.is_some() {
            return Err(ExecError::AlreadyDeployed);
        }
        let contract_address = contract_address_for(&deployer);
        if target != contract_address {
            return Err(ExecError::WrongTarget);
        }
        self.deployment = Some(Deployment {
            contract_address,
            admin: deployer,
            code_version: CODE_VERSION.into(),
            deployed_at: at,
        });
        Ok(())
    }

    /// Admin-only. Adds `university` under `name`.
    pub fn register_university(
        &mut self,
        caller: Address,
        name: &str,
        university: Address,
        at: u64,
    ) -> Result<(), ExecError> {
        if self.admin() != Some(caller) {
            return Err(ExecError::Unauthorized);
        }
        if name.trim().is_empty() {
            return Err(ExecError::EmptyName);
        }
        if self.universities.contains_key(&university) {
            return Err(ExecError::Duplicate);
        }
        self.universities.insert(
            university,
            UniversityEntry {
                name: name.into(),
                registered_at: at,
            },
        );
        Ok(())
    }

    /// Registered universities only. Records the digest, never the document.
    pub fn store_certificate(
        &mut self,
        caller: Address,
        cert_digest: Digest128,
        student_ref: &str,
        at: u64,
    ) -> Result<(), ExecError> {
        if !self.universities.contains_key(&caller) {
            return Err(ExecError::Unauthorized);
        }
        if self.certificates.contains_key(&cert_digest) {
            return Err(ExecError::DuplicateDigest);
        }
        self.certificates.insert(
            cert_digest,
            CertificateEntry {
                cert_digest,
                issuer: caller,
                student_ref: student_ref.into(),
                stored_at: at,
                revoked: false,
                revoked_at: None,
            },
        );
        Ok(())
    }

    /// Issuer-only. Flags the certificate revoked; the entry is kept.
    pub fn revoke_certificate(
        &mut self,
        caller: Address,
        cert_digest: Digest128,
        at: u64,
    ) -> Result<(), ExecError> {
        let entry = self
            .certificates
            .get_mut(&cert_digest)
            .ok_or(ExecError::UnknownDigest)?;
        if entry.issuer != caller {
            return Err(ExecError::Unauthorized);
        }
        if entry.revoked {
            return Err(ExecError::AlreadyRevoked);
        }
        entry.revoked = true;
        entry.revoked_at = Some(at);
        Ok(())
    }

    /// Read-only lookup; costs no transaction.
    pub fn verify_certificate(&self, cert_digest: &Digest128) -> Verification {
        match self.certificates.get(cert_digest) {
            None => Verification {
                valid: false,
                issuer_name: None,
                revoked: false,
            },
            Some(entry) => Verification {
                valid: !entry.revoked,
                issuer_name: self.universities.get(&entry.issuer).map(|u| u.name.clone()),
                revoked: entry.revoked,
            },
        }
    }
}

/// Contract state derived from every confirmed transaction on `chain`.
pub fn replay_state(chain: &Chain) -> ContractState {
    let mut state = ContractState::new();
    for block in chain.blocks() {
        state.apply_block(block);
    }
    state
}

/// Submits a call from `sender` to `target` with `gas_fee`.
pub fn submit_call(
    ledger: &mut Ledger,
    sender: Address,
    target: Address,
    call: ContractCall,
    gas_fee: u64,
) -> (Transaction, TxStatus) {
    let tx = Transaction::new(sender, target, call, gas_fee);
    let status = ledger.submit(tx.clone());
    (tx, status)
}

/// Submits the deployment transaction and returns the contract address it
/// will occupy once confirmed.
pub fn deploy(
    ledger: &mut Ledger,
    deployer: Address,
    gas_fee: u64,
) -> (Address, Transaction, TxStatus) {
    let address = contract_address_for(&deployer);
    let (tx, status) = submit_call(ledger, deployer, address, ContractCall::Deploy {}, gas_fee);
    (address, tx, status)
}
