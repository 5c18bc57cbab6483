use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::crypto::{decode_fixed, hex_encode, Digest128, Md5};
use crate::ledger::{Address, Transaction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Admin,
    University,
    Student,
    Employer,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Admin, Role::University, Role::Student, Role::Employer];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Admin => "admin",
            Role::University => "university",
            Role::Student => "student",
            Role::Employer => "employer",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// 16 random octets mixed into a stored secret digest.
#[derive(Clone, Copy, PartialEq, Eq, Default)]
pub struct Salt(pub [u8; 16]);

impl fmt::Debug for Salt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Salt({})", hex_encode(&self.0))
    }
}

impl Serialize for Salt {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex_encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Salt {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        decode_fixed(&text)
            .map(Salt)
            .map_err(serde::de::Error::custom)
    }
}

/// `md5(salt || secret)`.
pub fn secret_digest(salt: &Salt, secret: &str) -> Digest128 {
    let mut hasher = Md5::new();
    hasher.update(&salt.0);
    hasher.update(secret.as_bytes());
    hasher.finalize()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAccount {
    pub user_id: String,
    pub role: Role,
    pub display_name: String,
    pub email: String,
    pub secret_digest: Digest128,
    pub salt: Salt,
    /// Wallet of Admin and University accounts.
    pub linked_address: Option<Address>,
    /// Owning university of a Student account.
    pub university_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Academic,
    ExtraCurricular,
    Employability,
    Voluntary,
    Prize,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Academic,
        Category::ExtraCurricular,
        Category::Employability,
        Category::Voluntary,
        Category::Prize,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Academic => "academic",
            Category::ExtraCurricular => "extra_curricular",
            Category::Employability => "employability",
            Category::Voluntary => "voluntary",
            Category::Prize => "prize",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownCategory;

impl fmt::Display for UnknownCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("unknown achievement category")
    }
}

impl FromStr for Category {
    type Err = UnknownCategory;

    /// Accepts `extra_curricular`, `extra-curricular`, `ExtraCurricular`, and so on.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().replace('_', "") == folded)
            .ok_or(UnknownCategory)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AchievementEntry {
    pub cert_digest: Digest128,
    pub title: String,
    pub category: Category,
    pub issuer_university: String,
    pub issuer_id: String,
    pub tx_id: Digest128,
    pub confirmed_block: u64,
    pub revoked: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AchievementRecord {
    pub student_id: String,
    pub entries: Vec<AchievementEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmailKind {
    CertificateIssued,
    CredentialReset,
}

/// A notification captured in the outbox. Nothing is ever sent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmailEvent {
    pub event_id: u64,
    pub kind: EmailKind,
    pub to: String,
    pub subject: String,
    pub body: String,
    pub created_at: u64,
    pub delivered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResetToken {
    pub token: String,
    pub user_id: String,
    pub expires_at: u64,
    pub used: bool,
}

/// What the service does once a transaction it submitted is confirmed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum PendingAction {
    Deploy,
    RegisterUniversity {
        user_id: String,
    },
    StoreCertificate {
        student_id: String,
        title: String,
        category: Category,
        issuer_id: String,
    },
    RevokeCertificate,
}

/// Journal entry. The service state is the fold of its events; they carry
/// every random value (addresses, salts, tokens) so replay needs no RNG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    AccountCreated {
        account: UserAccount,
    },
    Funded {
        address: Address,
        amount: u64,
    },
    Submitted {
        tx: Transaction,
        action: PendingAction,
    },
    RoundMined {
        block_index: u64,
        block_hash: Digest128,
    },
    ResetIssued {
        reset: ResetToken,
    },
    ResetApplied {
        token: String,
        salt: Salt,
        secret_digest: Digest128,
    },
}
