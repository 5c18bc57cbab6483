//! Off-chain registry service: accounts and sessions, student achievement
//! records, the certificate authentication pipeline, a simulated email
//! outbox, and credential resets. It embeds the [`Ledger`] and keeps the
//! contract state in step with it, block by block.
//!
//! Every mutation is an [`Event`] appended to a journal. Replaying the journal
//! over a fresh registry with the same configuration rebuilds the same state,
//! including the chain, which is how the service restores from disk.

mod access;
mod error;
mod model;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use subtle::ConstantTimeEq;

pub use access::{is_allowed, Operation};
pub use error::{ReplayError, ServiceError};
pub use model::{
    secret_digest, AchievementEntry, AchievementRecord, Category, EmailEvent, EmailKind, Event,
    PendingAction, ResetToken, Role, Salt, UnknownCategory, UserAccount,
};

use crate::contract::{contract_address_for, ContractCall, ContractState, Verification};
use crate::crypto::{hex_encode, md5_digest, Digest128};
use crate::ledger::{
    Address, Block, Chain, Ledger, LedgerConfig, RejectReason, RoundReport, Transaction, TxStatus,
};

pub type Result<T, E = ServiceError> = core::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryConfig {
    pub ledger: LedgerConfig,
    /// Fee attached to every transaction the service submits.
    pub gas_fee: u64,
    /// Balance granted to new admin and university wallets.
    pub faucet_amount: u64,
    /// Reset tokens stop working once the tick passes issue tick + this.
    pub reset_ttl: u64,
    /// Sessions idle for more than this many ticks are dropped.
    pub session_ttl: u64,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        RegistryConfig {
            ledger: LedgerConfig::default(),
            gas_fee: 1,
            faucet_amount: 100,
            reset_ttl: 10,
            session_ttl: 1_000,
        }
    }
}

/// Account as shown to API clients: no salt, no secret digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountView {
    pub user_id: String,
    pub role: Role,
    pub display_name: String,
    pub email: String,
    pub linked_address: Option<Address>,
    pub university_id: Option<String>,
}

impl From<&UserAccount> for AccountView {
    fn from(account: &UserAccount) -> Self {
        AccountView {
            user_id: account.user_id.clone(),
            role: account.role,
            display_name: account.display_name.clone(),
            email: account.email.clone(),
            linked_address: account.linked_address,
            university_id: account.university_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxReceipt {
    pub tx_id: Digest128,
    pub status: TxStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateReceipt {
    pub cert_digest: Digest128,
    pub tx_id: Digest128,
    pub status: TxStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniversitySummary {
    pub user_id: String,
    pub name: String,
    pub address: Address,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub valid: bool,
    pub issuer_name: Option<String>,
    pub revoked: bool,
    pub checked_digest: Digest128,
}

#[derive(Debug, Clone, Copy)]
pub enum VerifyInput<'a> {
    Digest(&'a str),
    Document(&'a [u8]),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub category: Option<Category>,
    pub university: Option<String>,
    pub keyword: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub student_id: String,
    pub display_name: String,
    pub entries: Vec<AchievementEntry>,
}

#[derive(Debug, Clone)]
struct Session {
    user_id: String,
    last_seen: u64,
}

#[derive(Debug, Clone)]
struct Caller {
    user_id: String,
    role: Role,
    address: Option<Address>,
}

pub struct Registry {
    config: RegistryConfig,
    ledger: Ledger,
    contract: ContractState,
    accounts: BTreeMap<String, UserAccount>,
    records: BTreeMap<String, AchievementRecord>,
    listed: Vec<String>,
    pending: BTreeMap<Digest128, PendingAction>,
    outbox: Vec<EmailEvent>,
    resets: BTreeMap<String, ResetToken>,
    sessions: BTreeMap<String, Session>,
    journal: Vec<Event>,
    events_applied: u64,
    rng: ChaCha20Rng,
}

fn slugify(name: &str) -> String {
    let mut slug = String::new();
    for c in name.trim().chars() {
        if c.is_ascii_alphanumeric() {
            slug.push(c.to_ascii_lowercase());
        } else if !slug.ends_with('-') && !slug.is_empty() {
            slug.push('-');
        }
    }
    while slug.ends_with('-') {
        slug.pop();
    }
    slug
}

fn require(value: &str, field: &str) -> Result<()> {
    if value.trim().is_empty() {
        return Err(ServiceError::BadRequest(format!(
            "{field} must not be empty"
        )));
    }
    Ok(())
}

impl Registry {
    pub fn new(config: RegistryConfig) -> core::result::Result<Self, crate::ledger::ConfigError> {
        let ledger = Ledger::new(config.ledger)?;
        let mut contract = ContractState::new();
        contract.apply_block(&ledger.chain().blocks()[0]);
        Ok(Registry {
            rng: ChaCha20Rng::seed_from_u64(config.ledger.seed),
            config,
            ledger,
            contract,
            accounts: BTreeMap::new(),
            records: BTreeMap::new(),
            listed: Vec::new(),
            pending: BTreeMap::new(),
            outbox: Vec::new(),
            resets: BTreeMap::new(),
            sessions: BTreeMap::new(),
            journal: Vec::new(),
            events_applied: 0,
        })
    }

    /// Rebuilds a registry from a journal written by a registry with the same
    /// configuration. Sessions are not restored.
    pub fn restore<I>(config: RegistryConfig, events: I) -> core::result::Result<Self, RestoreError>
    where
        I: IntoIterator<Item = Event>,
    {
        let mut registry = Registry::new(config).map_err(RestoreError::Config)?;
        for (position, event) in events.into_iter().enumerate() {
            registry
                .replay(position, &event)
                .map_err(RestoreError::Replay)?;
        }
        registry.rng.set_stream(registry.events_applied);
        Ok(registry)
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.config
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn chain(&self) -> &Chain {
        self.ledger.chain()
    }

    pub fn contract(&self) -> &ContractState {
        &self.contract
    }

    pub fn tick(&self) -> u64 {
        self.ledger.tick()
    }

    pub fn account(&self, user_id: &str) -> Option<&UserAccount> {
        self.accounts.get(user_id)
    }

    pub fn accounts(&self) -> impl Iterator<Item = &UserAccount> {
        self.accounts.values()
    }

    /// Operator view of the simulated outbox.
    pub fn outbox(&self) -> &[EmailEvent] {
        &self.outbox
    }

    /// Events recorded since the last call, for persistence.
    pub fn take_journal(&mut self) -> Vec<Event> {
        core::mem::take(&mut self.journal)
    }

    pub fn tx_status(&self, tx_id: &Digest128) -> TxStatus {
        self.ledger.confirmation_status(tx_id)
    }

    /// Universities whose on-chain registration has been confirmed, in
    /// confirmation order.
    pub fn universities(&self) -> Vec<UniversitySummary> {
        self.listed
            .iter()
            .filter_map(|id| self.accounts.get(id))
            .map(|a| UniversitySummary {
                user_id: a.user_id.clone(),
                name: a.display_name.clone(),
                address: a.linked_address.unwrap_or_default(),
            })
            .collect()
    }

    /// Digest of all persistent state (everything except live sessions).
    pub fn state_digest(&self) -> Digest128 {
        #[derive(Serialize)]
        struct View<'a> {
            accounts: &'a BTreeMap<String, UserAccount>,
            records: &'a BTreeMap<String, AchievementRecord>,
            listed: &'a [String],
            pending: &'a BTreeMap<Digest128, PendingAction>,
            outbox: &'a [EmailEvent],
            resets: &'a BTreeMap<String, ResetToken>,
            blocks: &'a [Block],
            pool: Vec<Digest128>,
            wallets: &'a BTreeMap<Address, u64>,
            contract: &'a ContractState,
        }
        let view = View {
            accounts: &self.accounts,
            records: &self.records,
            listed: &self.listed,
            pending: &self.pending,
            outbox: &self.outbox,
            resets: &self.resets,
            blocks: self.ledger.chain().blocks(),
            pool: self.ledger.pool().entries().map(|e| e.tx.tx_id).collect(),
            wallets: self.ledger.wallets(),
            contract: &self.contract,
        };
        let json = serde_json::to_vec(&view).expect("state serializes");
        md5_digest(&json)
    }

    // ---- event application -------------------------------------------------

    fn record(&mut self, event: Event) {
        self.journal.push(event);
        self.events_applied += 1;
    }

    fn commit(&mut self, event: Event) -> Option<TxStatus> {
        let status = self.apply(&event);
        self.record(event);
        status
    }

    /// Applies every event kind except `RoundMined`, which needs the ledger
    /// to run a round and is handled by the callers.
    fn apply(&mut self, event: &Event) -> Option<TxStatus> {
        match event {
            Event::AccountCreated { account } => {
                if account.role == Role::Student {
                    self.records.insert(
                        account.user_id.clone(),
                        AchievementRecord {
                            student_id: account.user_id.clone(),
                            entries: Vec::new(),
                        },
                    );
                }
                self.accounts
                    .insert(account.user_id.clone(), account.clone());
                None
            }
            Event::Funded { address, amount } => {
                self.ledger.fund(*address, *amount);
                None
            }
            Event::Submitted { tx, action } => {
                let status = self.ledger.submit(tx.clone());
                if status == TxStatus::Pending {
                    self.pending.insert(tx.tx_id, action.clone());
                }
                Some(status)
            }
            Event::ResetIssued { reset } => {
                if let Some(account) = self.accounts.get(&reset.user_id) {
                    let to = account.email.clone();
                    self.send_email(
                        EmailKind::CredentialReset,
                        to,
                        "Credential reset requested".into(),
                        format!(
                            "Use this single-use reset token before tick {}:\n{}\n",
                            reset.expires_at, reset.token
                        ),
                    );
                }
                self.resets.insert(reset.token.clone(), reset.clone());
                None
            }
            Event::ResetApplied {
                token,
                salt,
                secret_digest,
            } => {
                if let Some(reset) = self.resets.get_mut(token) {
                    reset.used = true;
                    let user_id = reset.user_id.clone();
                    if let Some(account) = self.accounts.get_mut(&user_id) {
                        account.salt = *salt;
                        account.secret_digest = *secret_digest;
                    }
                    self.sessions.retain(|_, s| s.user_id != user_id);
                }
                None
            }
            Event::RoundMined { .. } => None,
        }
    }

    fn replay(&mut self, position: usize, event: &Event) -> core::result::Result<(), ReplayError> {
        match event {
            Event::RoundMined {
                block_index,
                block_hash,
            } => {
                let report = self
                    .ledger
                    .run_round()
                    .map_err(|source| ReplayError::Round { position, source })?;
                if report.block.hash != *block_hash || report.block.index != *block_index {
                    return Err(ReplayError::Diverged {
                        position,
                        index: report.block.index,
                        expected: *block_hash,
                        found: report.block.hash,
                    });
                }
                self.after_block(&report.block);
            }
            Event::ResetApplied { token, .. } if !self.resets.contains_key(token) => {
                return Err(ReplayError::UnknownReset { position });
            }
            other => {
                self.apply(other);
            }
        }
        self.events_applied += 1;
        Ok(())
    }

    fn after_block(&mut self, block: &Block) {
        self.contract.apply_block(block);
        for tx in &block.transactions {
            let Some(action) = self.pending.remove(&tx.tx_id) else {
                continue;
            };
            let succeeded = self
                .contract
                .receipts
                .get(&tx.tx_id)
                .is_some_and(|r| r.outcome.is_ok());
            if !succeeded {
                continue;
            }
            match action {
                PendingAction::Deploy | PendingAction::RevokeCertificate => {}
                PendingAction::RegisterUniversity { user_id } => self.listed.push(user_id),
                PendingAction::StoreCertificate {
                    student_id,
                    title,
                    category,
                    issuer_id,
                } => self.append_entry(tx, block.index, student_id, title, category, issuer_id),
            }
        }
    }

    fn append_entry(
        &mut self,
        tx: &Transaction,
        block_index: u64,
        student_id: String,
        title: String,
        category: Category,
        issuer_id: String,
    ) {
        let ContractCall::StoreCertificate { cert_digest, .. } = tx.payload else {
            return;
        };
        let issuer_university = self
            .accounts
            .get(&issuer_id)
            .map(|a| a.display_name.clone())
            .unwrap_or_default();
        let Some(student) = self.accounts.get(&student_id) else {
            return;
        };
        let to = student.email.clone();
        let subject = format!("Achievement authenticated: {title}");
        if let Some(record) = self.records.get_mut(&student_id) {
            record.entries.push(AchievementEntry {
                cert_digest,
                title,
                category,
                issuer_university,
                issuer_id,
                tx_id: tx.tx_id,
                confirmed_block: block_index,
                revoked: false,
            });
        }
        self.send_email(
            EmailKind::CertificateIssued,
            to,
            subject,
            format!(
                "A certificate was authenticated and added to your achievement record.\n\
                 Certificate digest: {cert_digest}\n\
                 Share this digest with employers so they can verify it.\n"
            ),
        );
    }

    fn send_email(&mut self, kind: EmailKind, to: String, subject: String, body: String) {
        let event_id = self.outbox.len() as u64 + 1;
        self.outbox.push(EmailEvent {
            event_id,
            kind,
            to,
            subject,
            body,
            created_at: self.ledger.tick(),
            delivered: false,
        });
    }

    // ---- randomness and sessions --------------------------------------------

    fn random_bytes<const N: usize>(&mut self) -> [u8; N] {
        let mut out = [0u8; N];
        self.rng.fill_bytes(&mut out);
        out
    }

    fn random_token(&mut self) -> String {
        hex_encode(&self.random_bytes::<16>())
    }

    fn caller(&mut self, token: Option<&str>) -> Result<Option<Caller>> {
        let Some(token) = token else {
            return Ok(None);
        };
        let tick = self.ledger.tick();
        let ttl = self.config.session_ttl;
        let session = self
            .sessions
            .get_mut(token)
            .ok_or(ServiceError::Unauthenticated)?;
        if tick.saturating_sub(session.last_seen) > ttl {
            self.sessions.remove(token);
            return Err(ServiceError::Unauthenticated);
        }
        session.last_seen = tick;
        let user_id = session.user_id.clone();
        let account = self
            .accounts
            .get(&user_id)
            .ok_or(ServiceError::Unauthenticated)?;
        Ok(Some(Caller {
            user_id,
            role: account.role,
            address: account.linked_address,
        }))
    }

    fn authorize(&mut self, token: Option<&str>, op: Operation) -> Result<Caller> {
        let caller = self.caller(token)?;
        let role = caller.as_ref().map(|c| c.role);
        match caller {
            Some(caller) if is_allowed(role, op) => Ok(caller),
            Some(_) => Err(ServiceError::Forbidden),
            None => Err(ServiceError::Unauthenticated),
        }
    }

    /// Checks that the session behind `token` may perform `op`, without doing
    /// it. Lets front ends refuse a request before reading its body.
    pub fn permit(&mut self, token: Option<&str>, op: Operation) -> Result<Option<Role>> {
        if token.is_none() && is_allowed(None, op) {
            return Ok(None);
        }
        self.authorize(token, op).map(|c| Some(c.role))
    }

    /// Role of the session behind `token`, if it is live.
    pub fn session_role(&mut self, token: &str) -> Result<Role> {
        self.caller(Some(token))?
            .map(|c| c.role)
            .ok_or(ServiceError::Unauthenticated)
    }

    fn new_account(
        &mut self,
        user_id: String,
        role: Role,
        display_name: &str,
        email: &str,
        secret: &str,
        university_id: Option<String>,
    ) -> Result<UserAccount> {
        require(&user_id, "user id")?;
        require(display_name, "name")?;
        require(email, "email")?;
        require(secret, "secret")?;
        if self.accounts.contains_key(&user_id) {
            return Err(ServiceError::Conflict(format!(
                "user {user_id} already exists"
            )));
        }
        let salt = Salt(self.random_bytes());
        let linked_address = match role {
            Role::Admin | Role::University => Some(Address(self.random_bytes())),
            Role::Student | Role::Employer => None,
        };
        Ok(UserAccount {
            secret_digest: secret_digest(&salt, secret),
            salt,
            user_id,
            role,
            display_name: display_name.trim().into(),
            email: email.trim().into(),
            linked_address,
            university_id,
        })
    }

    fn submit(
        &mut self,
        sender: Address,
        call: ContractCall,
        action: PendingAction,
    ) -> Result<TxReceipt> {
        let target = match &call {
            ContractCall::Deploy {} => contract_address_for(&sender),
            _ => self
                .contract
                .contract_address()
                .ok_or(ServiceError::NotDeployed)?,
        };
        let tx = Transaction::new(sender, target, call, self.config.gas_fee);
        let tx_id = tx.tx_id;
        let status = self
            .commit(Event::Submitted { tx, action })
            .expect("submissions report a status");
        match status {
            TxStatus::Rejected {
                reason: RejectReason::InsufficientBalance,
            } => Err(ServiceError::WalletUnderfunded),
            TxStatus::Rejected { reason } => Err(ServiceError::LedgerRejected(reason.to_string())),
            status => Ok(TxReceipt { tx_id, status }),
        }
    }

    fn ensure_funded(&self, address: &Address) -> Result<()> {
        if self.ledger.balance(address) < self.config.gas_fee {
            return Err(ServiceError::WalletUnderfunded);
        }
        Ok(())
    }

    fn pending_call(&self, matches: impl Fn(&ContractCall) -> bool) -> bool {
        self.ledger.pool().entries().any(|e| matches(&e.tx.payload))
    }

    // ---- operations ----------------------------------------------------------

    /// Creates the single Admin account and funds its wallet.
    pub fn bootstrap_admin(
        &mut self,
        user_id: &str,
        display_name: &str,
        email: &str,
        secret: &str,
    ) -> Result<AccountView> {
        if self.accounts.values().any(|a| a.role == Role::Admin) {
            return Err(ServiceError::Conflict(
                "an admin account already exists".into(),
            ));
        }
        let account = self.new_account(
            user_id.into(),
            Role::Admin,
            display_name,
            email,
            secret,
            None,
        )?;
        let view = AccountView::from(&account);
        let address = account.linked_address.expect("admins have wallets");
        self.commit(Event::AccountCreated { account });
        if self.config.faucet_amount > 0 {
            self.commit(Event::Funded {
                address,
                amount: self.config.faucet_amount,
            });
        }
        Ok(view)
    }

    /// Anonymous self-registration for employers.
    pub fn register_employer(
        &mut self,
        user_id: &str,
        display_name: &str,
        email: &str,
        secret: &str,
    ) -> Result<AccountView> {
        let account = self.new_account(
            user_id.into(),
            Role::Employer,
            display_name,
            email,
            secret,
            None,
        )?;
        let view = AccountView::from(&account);
        self.commit(Event::AccountCreated { account });
        Ok(view)
    }

    pub fn login(&mut self, user_id: &str, secret: &str) -> Result<String> {
        let (salt, expected) = match self.accounts.get(user_id) {
            Some(a) => (a.salt, Some(a.secret_digest)),
            None => (Salt::default(), None),
        };
        // Digest is computed for unknown users too so both paths cost the same.
        let presented = secret_digest(&salt, secret);
        let matches = expected
            .map(|e| bool::from(e.as_bytes().ct_eq(presented.as_bytes())))
            .unwrap_or(false);
        if !matches {
            return Err(ServiceError::InvalidCredentials);
        }
        let token = self.random_token();
        self.sessions.insert(
            token.clone(),
            Session {
                user_id: user_id.into(),
                last_seen: self.ledger.tick(),
            },
        );
        Ok(token)
    }

    pub fn logout(&mut self, token: &str) -> Result<()> {
        self.authorize(Some(token), Operation::Logout)?;
        self.sessions.remove(token);
        Ok(())
    }

    /// Submits the contract deployment from the admin wallet.
    pub fn deploy_contract(&mut self, token: &str) -> Result<TxReceipt> {
        let caller = self.authorize(Some(token), Operation::DeployContract)?;
        if self.contract.is_deployed()
            || self.pending_call(|c| matches!(c, ContractCall::Deploy {}))
        {
            return Err(ServiceError::Conflict("contract already deployed".into()));
        }
        let address = caller.address.ok_or(ServiceError::Forbidden)?;
        self.submit(address, ContractCall::Deploy {}, PendingAction::Deploy)
    }

    /// Creates a University account with a funded wallet and submits its
    /// on-chain registration. It is listed once that transaction confirms.
    pub fn admin_register_university(
        &mut self,
        token: &str,
        name: &str,
        email: &str,
        secret: &str,
    ) -> Result<(AccountView, TxReceipt)> {
        let caller = self.authorize(Some(token), Operation::RegisterUniversity)?;
        if !self.contract.is_deployed() {
            return Err(ServiceError::NotDeployed);
        }
        require(name, "name")?;
        let user_id = slugify(name);
        if user_id.is_empty() {
            return Err(ServiceError::BadRequest(
                "name must contain letters or digits".into(),
            ));
        }
        let folded = name.trim().to_lowercase();
        let taken = self
            .accounts
            .values()
            .any(|a| a.role == Role::University && a.display_name.to_lowercase() == folded);
        if taken || self.accounts.contains_key(&user_id) {
            return Err(ServiceError::Conflict(format!(
                "university {name} already exists"
            )));
        }
        let admin = caller.address.ok_or(ServiceError::Forbidden)?;
        self.ensure_funded(&admin)?;

        let account =
            self.new_account(user_id.clone(), Role::University, name, email, secret, None)?;
        let view = AccountView::from(&account);
        let address = account.linked_address.expect("universities have wallets");
        self.commit(Event::AccountCreated { account });
        if self.config.faucet_amount > 0 {
            self.commit(Event::Funded {
                address,
                amount: self.config.faucet_amount,
            });
        }
        let call = ContractCall::RegisterUniversity {
            name: name.trim().into(),
            university_address: address,
        };
        let receipt = self.submit(admin, call, PendingAction::RegisterUniversity { user_id })?;
        Ok((view, receipt))
    }

    fn university_caller(
        &mut self,
        token: &str,
        op: Operation,
        university_id: &str,
    ) -> Result<Caller> {
        let caller = self.authorize(Some(token), op)?;
        if caller.user_id != university_id {
            return Err(ServiceError::Forbidden);
        }
        if !self.listed.iter().any(|id| id == university_id) {
            return Err(ServiceError::UniversityNotConfirmed);
        }
        Ok(caller)
    }

    pub fn university_add_student(
        &mut self,
        token: &str,
        university_id: &str,
        student_id: &str,
        display_name: &str,
        email: &str,
        secret: &str,
    ) -> Result<AccountView> {
        let caller = self.university_caller(token, Operation::AddStudent, university_id)?;
        let account = self.new_account(
            student_id.trim().into(),
            Role::Student,
            display_name,
            email,
            secret,
            Some(caller.user_id),
        )?;
        let view = AccountView::from(&account);
        self.commit(Event::AccountCreated { account });
        Ok(view)
    }

    /// Fingerprints `document` and submits the digest for storage on chain.
    /// Once confirmed, the entry is appended to the student's record and the
    /// student is emailed the digest. The document itself never reaches the
    /// chain.
    pub fn authenticate_certificate(
        &mut self,
        token: &str,
        university_id: &str,
        student_id: &str,
        title: &str,
        category: Category,
        document: &[u8],
    ) -> Result<CertificateReceipt> {
        let caller =
            self.university_caller(token, Operation::AuthenticateCertificate, university_id)?;
        let student = self
            .accounts
            .get(student_id)
            .filter(|a| a.role == Role::Student)
            .ok_or_else(|| ServiceError::NotFound(format!("student {student_id}")))?;
        if student.university_id.as_deref() != Some(caller.user_id.as_str()) {
            return Err(ServiceError::Forbidden);
        }
        require(title, "title")?;
        if document.is_empty() {
            return Err(ServiceError::BadRequest(
                "document must not be empty".into(),
            ));
        }
        let cert_digest = md5_digest(document);
        let queued = self.pending_call(|c| {
            matches!(c, ContractCall::StoreCertificate { cert_digest: d, .. } if *d == cert_digest)
        });
        if queued || self.contract.certificates.contains_key(&cert_digest) {
            return Err(ServiceError::DuplicateDigest);
        }
        let address = caller.address.ok_or(ServiceError::Forbidden)?;
        let call = ContractCall::StoreCertificate {
            cert_digest,
            student_ref: student_id.into(),
        };
        let action = PendingAction::StoreCertificate {
            student_id: student_id.into(),
            title: title.trim().into(),
            category,
            issuer_id: caller.user_id,
        };
        let receipt = self.submit(address, call, action)?;
        Ok(CertificateReceipt {
            cert_digest,
            tx_id: receipt.tx_id,
            status: receipt.status,
        })
    }

    /// Submits a revocation for a certificate this university issued.
    pub fn revoke_certificate(
        &mut self,
        token: &str,
        university_id: &str,
        digest: &str,
    ) -> Result<TxReceipt> {
        let caller = self.university_caller(token, Operation::RevokeCertificate, university_id)?;
        let cert_digest: Digest128 = digest
            .trim()
            .parse()
            .map_err(|_| ServiceError::BadRequest("malformed digest".into()))?;
        let address = caller.address.ok_or(ServiceError::Forbidden)?;
        let entry = self
            .contract
            .certificates
            .get(&cert_digest)
            .ok_or_else(|| ServiceError::NotFound(format!("certificate {cert_digest}")))?;
        if entry.issuer != address {
            return Err(ServiceError::Forbidden);
        }
        let queued = self.pending_call(|c| {
            matches!(c, ContractCall::RevokeCertificate { cert_digest: d } if *d == cert_digest)
        });
        if entry.revoked || queued {
            return Err(ServiceError::Conflict("certificate already revoked".into()));
        }
        self.submit(
            address,
            ContractCall::RevokeCertificate { cert_digest },
            PendingAction::RevokeCertificate,
        )
    }

    /// Public verification against the current contract state. Costs nothing.
    pub fn employer_verify(&self, input: VerifyInput<'_>) -> Result<VerifyOutcome> {
        let checked_digest = match input {
            VerifyInput::Digest(text) => text
                .trim()
                .parse()
                .map_err(|_| ServiceError::BadRequest("digest must be 32 hex characters".into()))?,
            VerifyInput::Document(bytes) => md5_digest(bytes),
        };
        let Verification {
            valid,
            issuer_name,
            revoked,
        } = self.contract.verify_certificate(&checked_digest);
        Ok(VerifyOutcome {
            valid,
            issuer_name,
            revoked,
            checked_digest,
        })
    }

    fn live_record(&self, record: &AchievementRecord) -> AchievementRecord {
        let mut record = record.clone();
        for entry in &mut record.entries {
            entry.revoked = self
                .contract
                .certificates
                .get(&entry.cert_digest)
                .is_some_and(|c| c.revoked);
        }
        record
    }

    pub fn get_achievement_record(
        &mut self,
        token: &str,
        student_id: &str,
    ) -> Result<AchievementRecord> {
        let caller = self.authorize(Some(token), Operation::ViewRecord)?;
        let student = self
            .accounts
            .get(student_id)
            .filter(|a| a.role == Role::Student)
            .ok_or_else(|| ServiceError::NotFound(format!("student {student_id}")))?;
        let permitted = match caller.role {
            Role::Student => caller.user_id == student_id,
            Role::University => student.university_id.as_deref() == Some(caller.user_id.as_str()),
            Role::Employer => true,
            Role::Admin => false,
        };
        if !permitted {
            return Err(ServiceError::Forbidden);
        }
        let record = &self.records[student_id];
        Ok(self.live_record(record))
    }

    /// Students with at least one unrevoked entry matching every given filter.
    pub fn search_students(&mut self, token: &str, query: &SearchQuery) -> Result<Vec<SearchHit>> {
        self.authorize(Some(token), Operation::SearchStudents)?;
        let keyword = query.keyword.as_ref().map(|k| k.trim().to_lowercase());
        let university = query.university.as_ref().map(|u| u.trim().to_lowercase());
        let mut hits = Vec::new();
        for (student_id, record) in &self.records {
            let entries: Vec<AchievementEntry> = self
                .live_record(record)
                .entries
                .into_iter()
                .filter(|e| !e.revoked)
                .filter(|e| query.category.is_none_or(|c| c == e.category))
                .filter(|e| {
                    university.as_ref().is_none_or(|u| {
                        e.issuer_university.to_lowercase() == *u || e.issuer_id == *u
                    })
                })
                .filter(|e| {
                    keyword
                        .as_ref()
                        .is_none_or(|k| e.title.to_lowercase().contains(k.as_str()))
                })
                .collect();
            if entries.is_empty() {
                continue;
            }
            hits.push(SearchHit {
                student_id: student_id.clone(),
                display_name: self.accounts[student_id].display_name.clone(),
                entries,
            });
        }
        Ok(hits)
    }

    /// Starts a reset. Unknown ids succeed silently and send nothing.
    pub fn request_reset(&mut self, user_id: &str) -> Result<()> {
        if !self.accounts.contains_key(user_id) {
            return Ok(());
        }
        let reset = ResetToken {
            token: self.random_token(),
            user_id: user_id.into(),
            expires_at: self.ledger.tick() + self.config.reset_ttl,
            used: false,
        };
        self.commit(Event::ResetIssued { reset });
        Ok(())
    }

    /// Replaces the secret and ends every session of the account.
    pub fn apply_reset(&mut self, token: &str, new_secret: &str) -> Result<()> {
        let tick = self.ledger.tick();
        let usable = self
            .resets
            .get(token)
            .is_some_and(|r| !r.used && tick <= r.expires_at);
        if !usable {
            return Err(ServiceError::InvalidToken);
        }
        require(new_secret, "secret")?;
        let salt = Salt(self.random_bytes());
        self.commit(Event::ResetApplied {
            token: token.into(),
            salt,
            secret_digest: secret_digest(&salt, new_secret),
        });
        Ok(())
    }

    pub fn read_outbox(&mut self, token: &str) -> Result<Vec<EmailEvent>> {
        self.authorize(Some(token), Operation::ReadOutbox)?;
        Ok(self.outbox.clone())
    }

    /// Admin faucet.
    pub fn faucet(&mut self, token: &str, address: Address, amount: u64) -> Result<u64> {
        self.authorize(Some(token), Operation::Faucet)?;
        Ok(self.fund(address, amount))
    }

    /// Operator faucet (CLI). Returns the new balance.
    pub fn fund(&mut self, address: Address, amount: u64) -> u64 {
        self.commit(Event::Funded { address, amount });
        self.ledger.balance(&address)
    }

    /// Runs `rounds` mining rounds and processes their confirmations.
    pub fn mine(&mut self, rounds: usize) -> Result<Vec<RoundReport>> {
        let mut reports = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let report = self.ledger.run_round()?;
            self.after_block(&report.block);
            self.record(Event::RoundMined {
                block_index: report.block.index,
                block_hash: report.block.hash,
            });
            reports.push(report);
        }
        Ok(reports)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RestoreError {
    #[error(transparent)]
    Config(crate::ledger::ConfigError),
    #[error(transparent)]
    Replay(ReplayError),
}
