use alloc::string::String;

use thiserror::Error;

use crate::crypto::Digest128;
use crate::ledger::RoundError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    #[error("authentication required")]
    Unauthenticated,
    #[error("operation not permitted for this account")]
    Forbidden,
    #[error("invalid credentials")]
    InvalidCredentials,
    #[error("invalid token")]
    InvalidToken,
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("certificate digest already stored")]
    DuplicateDigest,
    #[error("wallet balance does not cover the transaction fee")]
    WalletUnderfunded,
    #[error("contract is not deployed")]
    NotDeployed,
    #[error("university registration is not yet confirmed on chain")]
    UniversityNotConfirmed,
    #[error("{0}")]
    BadRequest(String),
    #[error("ledger rejected the transaction: {0}")]
    LedgerRejected(String),
    #[error(transparent)]
    Round(#[from] RoundError),
}

impl ServiceError {
    /// Stable machine-readable code used on the wire and by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Unauthenticated => "unauthenticated",
            ServiceError::Forbidden => "forbidden",
            ServiceError::InvalidCredentials => "invalid_credentials",
            ServiceError::InvalidToken => "invalid_token",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::DuplicateDigest => "duplicate_digest",
            ServiceError::WalletUnderfunded => "wallet_underfunded",
            ServiceError::NotDeployed => "not_deployed",
            ServiceError::UniversityNotConfirmed => "university_not_confirmed",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::LedgerRejected(_) => "ledger_rejected",
            ServiceError::Round(_) => "internal",
        }
    }
}

/// Replaying a journal produced a different chain than it recorded.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("event {position}: round produced block {found} at index {index}, journal recorded {expected}")]
    Diverged {
        position: usize,
        index: u64,
        expected: Digest128,
        found: Digest128,
    },
    #[error("event {position}: {source}")]
    Round { position: usize, source: RoundError },
    #[error("event {position}: reset applied with unknown token")]
    UnknownReset { position: usize },
}
