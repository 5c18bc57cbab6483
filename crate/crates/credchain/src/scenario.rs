//! Line-oriented actor scripts. Each non-blank line is `verb {json-args}`;
//! `#` starts a comment line. String arguments of the form `$name` are
//! replaced by values saved by earlier steps (`save_as`, `save_tx`).
//!
//! Any step may carry `"expect_error": "<code>"`, in which case it passes only
//! if the operation fails with that error code.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use credchain_core::ledger::{validate_chain, Address, TxStatus};
use credchain_core::registry::{
    Category, EmailKind, Operation, Registry, SearchQuery, ServiceError, VerifyInput,
};
use credchain_core::Digest128;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::store::Store;

macro_rules! verbs {
    ($($variant:ident => $name:literal, [$($op:ident),*];)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum Verb {
            $($variant,)*
        }

        impl Verb {
            pub const ALL: &'static [Verb] = &[$(Verb::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Verb::$variant => $name,)*
                }
            }

            /// Gated registry operations this verb exercises.
            pub fn operations(self) -> &'static [Operation] {
                match self {
                    $(Verb::$variant => &[$(Operation::$op),*],)*
                }
            }
        }

        impl FromStr for Verb {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok(Verb::$variant),)*
                    other => Err(format!("unknown verb `{other}`")),
                }
            }
        }
    };
}

verbs! {
    Admin => "admin", [];
    Login => "login", [];
    Logout => "logout", [Logout];
    Deploy => "deploy", [DeployContract];
    RegisterUniversity => "register_university", [RegisterUniversity];
    Universities => "universities", [];
    AddStudent => "add_student", [AddStudent];
    RegisterEmployer => "register_employer", [];
    Authenticate => "authenticate", [AuthenticateCertificate];
    Revoke => "revoke", [RevokeCertificate];
    Verify => "verify", [Verify];
    Record => "record", [ViewRecord];
    Search => "search", [SearchStudents];
    ReadEmail => "read_email", [];
    Outbox => "outbox", [ReadOutbox];
    RequestReset => "request_reset", [];
    ApplyReset => "apply_reset", [];
    Faucet => "faucet", [Faucet];
    Mine => "mine", [];
    Status => "status", [];
    AssertChainValid => "assert_chain_valid", [];
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct Step {
    pub line: usize,
    pub verb: Verb,
    pub args: Value,
    pub expect_error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Script {
    pub steps: Vec<Step>,
    /// Directory that `document_file` paths are relative to.
    pub base_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("line {line}: {verb}: {message}")]
    Failed {
        line: usize,
        verb: Verb,
        message: String,
    },
}

impl ScenarioError {
    /// 1 for a failing step, 2 for an unusable script.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Failed { .. } => 1,
            ScenarioError::Parse { .. } | ScenarioError::Io { .. } => 2,
        }
    }
}

// ---- argument shapes ------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AdminArgs {
    user_id: String,
    secret: String,
    name: Option<String>,
    email: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoginArgs {
    user_id: String,
    secret: String,
    save_as: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AsArgs {
    #[serde(rename = "as")]
    session: String,
    save_tx: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegisterUniversityArgs {
    #[serde(rename = "as")]
    session: String,
    name: String,
    email: String,
    secret: String,
    save_tx: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UniversitiesArgs {
    expect: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AddStudentArgs {
    #[serde(rename = "as")]
    session: String,
    university: String,
    student_id: String,
    name: String,
    email: String,
    secret: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmployerArgs {
    user_id: String,
    name: String,
    email: String,
    secret: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AuthenticateArgs {
    #[serde(rename = "as")]
    session: String,
    university: String,
    student: String,
    title: String,
    category: String,
    document: Option<String>,
    document_file: Option<String>,
    save_as: Option<String>,
    save_tx: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RevokeArgs {
    #[serde(rename = "as")]
    session: String,
    university: String,
    digest: String,
    save_tx: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyArgs {
    digest: Option<String>,
    document: Option<String>,
    document_file: Option<String>,
    expect: Option<bool>,
    revoked: Option<bool>,
    issuer: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordArgs {
    #[serde(rename = "as")]
    session: String,
    student: String,
    expect_entries: Option<usize>,
    expect_titles: Option<Vec<String>>,
    expect_revoked: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchArgs {
    #[serde(rename = "as")]
    session: String,
    category: Option<String>,
    university: Option<String>,
    keyword: Option<String>,
    expect_students: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReadEmailArgs {
    /// User id of the recipient.
    to: String,
    kind: Option<EmailKind>,
    save_as: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OutboxArgs {
    #[serde(rename = "as")]
    session: String,
    expect_count: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestResetArgs {
    user_id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ApplyResetArgs {
    token: String,
    new_secret: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FaucetArgs {
    /// Admin session; without it the operator faucet is used.
    #[serde(rename = "as")]
    session: Option<String>,
    address: Option<String>,
    /// User id whose wallet is funded.
    user: Option<String>,
    amount: u64,
    expect_balance: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MineArgs {
    rounds: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StatusArgs {
    tx: String,
    expect: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoArgs {}

fn check<T: DeserializeOwned>(args: &Value) -> Result<(), String> {
    serde_json::from_value::<T>(args.clone())
        .map(|_| ())
        .map_err(|e| e.to_string())
}

fn check_args(verb: Verb, args: &Value) -> Result<(), String> {
    match verb {
        Verb::Admin => check::<AdminArgs>(args),
        Verb::Login => check::<LoginArgs>(args),
        Verb::Logout | Verb::Deploy => check::<AsArgs>(args),
        Verb::RegisterUniversity => check::<RegisterUniversityArgs>(args),
        Verb::Universities => check::<UniversitiesArgs>(args),
        Verb::AddStudent => check::<AddStudentArgs>(args),
        Verb::RegisterEmployer => check::<EmployerArgs>(args),
        Verb::Authenticate => check::<AuthenticateArgs>(args),
        Verb::Revoke => check::<RevokeArgs>(args),
        Verb::Verify => check::<VerifyArgs>(args),
        Verb::Record => check::<RecordArgs>(args),
        Verb::Search => check::<SearchArgs>(args),
        Verb::ReadEmail => check::<ReadEmailArgs>(args),
        Verb::Outbox => check::<OutboxArgs>(args),
        Verb::RequestReset => check::<RequestResetArgs>(args),
        Verb::ApplyReset => check::<ApplyResetArgs>(args),
        Verb::Faucet => check::<FaucetArgs>(args),
        Verb::Mine => check::<MineArgs>(args),
        Verb::Status => check::<StatusArgs>(args),
        Verb::AssertChainValid => check::<NoArgs>(args),
    }
}

// ---- parsing --------------------------------------------------------------------

pub fn parse(text: &str) -> Result<Script, ScenarioError> {
    let mut steps = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| ScenarioError::Parse { line, message };
        let (word, rest) = match trimmed.find(char::is_whitespace) {
            Some(at) => (&trimmed[..at], trimmed[at..].trim()),
            None => (trimmed, ""),
        };
        let verb: Verb = word.parse().map_err(parse_err)?;
        let mut args: Value = if rest.is_empty() {
            json!({})
        } else {
            serde_json::from_str(rest)
                .map_err(|e| parse_err(format!("invalid JSON arguments: {e}")))?
        };
        let Value::Object(map) = &mut args else {
            return Err(parse_err("arguments must be a JSON object".into()));
        };
        let expect_error = match map.remove("expect_error") {
            None => None,
            Some(Value::String(code)) => Some(code),
            Some(_) => return Err(parse_err("expect_error must be a string".into())),
        };
        check_args(verb, &args).map_err(|e| parse_err(format!("{verb}: {e}")))?;
        steps.push(Step {
            line,
            verb,
            args,
            expect_error,
        });
    }
    Ok(Script {
        steps,
        base_dir: PathBuf::from("."),
    })
}

pub fn load(path: &Path) -> Result<Script, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut script = parse(&text)?;
    script.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(script)
}

// ---- execution ------------------------------------------------------------------

enum StepError {
    Service(ServiceError),
    Assert(String),
}

impl From<ServiceError> for StepError {
    fn from(e: ServiceError) -> Self {
        StepError::Service(e)
    }
}

fn fail<T>(message: impl Into<String>) -> Result<T, StepError> {
    Err(StepError::Assert(message.into()))
}

fn expect_eq<T: PartialEq + fmt::Debug>(
    what: &str,
    expected: &T,
    found: &T,
) -> Result<(), StepError> {
    if expected != found {
        return fail(format!("{what}: expected {expected:?}, found {found:?}"));
    }
    Ok(())
}

/// Outcome of one executed step.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StepReport {
    pub line: usize,
    pub verb: &'static str,
    pub detail: Value,
}

/// Executes scripts against an embedded registry.
pub struct Runner {
    store: Store,
    vars: BTreeMap<String, String>,
    sessions: BTreeMap<String, String>,
    base_dir: PathBuf,
}

impl Runner {
    pub fn new(store: Store) -> Self {
        Runner {
            store,
            vars: BTreeMap::new(),
            sessions: BTreeMap::new(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn into_store(self) -> Store {
        self.store
    }

    pub fn var(&self, name: &str) -> Option<&str> {
        self.vars.get(name).map(String::as_str)
    }

    /// Runs every step in order, stopping at the first failure.
    pub fn run(&mut self, script: &Script) -> Result<Vec<StepReport>, ScenarioError> {
        self.base_dir = script.base_dir.clone();
        let mut reports = Vec::with_capacity(script.steps.len());
        for step in &script.steps {
            let failed = |message: String| ScenarioError::Failed {
                line: step.line,
                verb: step.verb,
                message,
            };
            let args = self.substitute(&step.args).map_err(failed)?;
            let result = self.execute(step.verb, &args);
            self.store
                .persist()
                .map_err(|e| failed(format!("persistence failed: {e}")))?;
            let detail = match (result, &step.expect_error) {
                (Ok(detail), None) => detail,
                (Ok(_), Some(code)) => {
                    return Err(failed(format!(
                        "expected error `{code}`, but the step succeeded"
                    )))
                }
                (Err(StepError::Service(e)), Some(code)) if e.code() == code => {
                    json!({ "error": e.code(), "expected": true })
                }
                (Err(StepError::Service(e)), _) => {
                    return Err(failed(format!("{} ({})", e, e.code())));
                }
                (Err(StepError::Assert(message)), _) => return Err(failed(message)),
            };
            reports.push(StepReport {
                line: step.line,
                verb: step.verb.name(),
                detail,
            });
        }
        Ok(reports)
    }

    fn substitute(&self, value: &Value) -> Result<Value, String> {
        Ok(match value {
            Value::String(s) => match s.strip_prefix('$') {
                Some(name) => Value::String(
                    self.vars
                        .get(name)
                        .cloned()
                        .ok_or_else(|| format!("undefined variable ${name}"))?,
                ),
                None => value.clone(),
            },
            Value::Array(items) => Value::Array(
                items
                    .iter()
                    .map(|v| self.substitute(v))
                    .collect::<Result<_, _>>()?,
            ),
            Value::Object(map) => Value::Object(
                map.iter()
                    .map(|(k, v)| Ok((k.clone(), self.substitute(v)?)))
                    .collect::<Result<_, String>>()?,
            ),
            other => other.clone(),
        })
    }

    fn registry(&mut self) -> &mut Registry {
        self.store.registry_mut()
    }

    fn session(&self, name: &str) -> Result<String, StepError> {
        match self.sessions.get(name) {
            Some(token) => Ok(token.clone()),
            None => fail(format!("no session named `{name}`; log in first")),
        }
    }

    fn save(&mut self, name: &Option<String>, value: impl fmt::Display) {
        if let Some(name) = name {
            self.vars.insert(name.clone(), value.to_string());
        }
    }

    fn document(&self, text: &Option<String>, file: &Option<String>) -> Result<Vec<u8>, StepError> {
        match (text, file) {
            (Some(text), None) => Ok(text.as_bytes().to_vec()),
            (None, Some(file)) => {
                let path = self.base_dir.join(file);
                fs::read(&path).or_else(|e| fail(format!("{}: {e}", path.display())))
            }
            _ => fail("give exactly one of `document` or `document_file`"),
        }
    }

    fn wallet_of(&self, user_id: &str) -> Result<Address, StepError> {
        match self
            .store
            .registry()
            .account(user_id)
            .and_then(|a| a.linked_address)
        {
            Some(address) => Ok(address),
            None => fail(format!("user {user_id} has no wallet")),
        }
    }

    fn execute(&mut self, verb: Verb, args: &Value) -> Result<Value, StepError> {
        fn args_as<T: DeserializeOwned>(args: &Value) -> Result<T, StepError> {
            serde_json::from_value(args.clone()).or_else(|e| fail(e.to_string()))
        }

        match verb {
            Verb::Admin => {
                let a: AdminArgs = args_as(args)?;
                let name = a.name.unwrap_or_else(|| "System administrator".into());
                let email = a
                    .email
                    .unwrap_or_else(|| format!("{}@localhost", a.user_id));
                let view = self
                    .registry()
                    .bootstrap_admin(&a.user_id, &name, &email, &a.secret)?;
                Ok(json!(view))
            }
            Verb::Login => {
                let a: LoginArgs = args_as(args)?;
                let token = self.registry().login(&a.user_id, &a.secret)?;
                let name = a.save_as.unwrap_or_else(|| a.user_id.clone());
                self.sessions.insert(name.clone(), token);
                Ok(json!({ "session": name }))
            }
            Verb::Logout => {
                let a: AsArgs = args_as(args)?;
                let token = self.session(&a.session)?;
                self.registry().logout(&token)?;
                self.sessions.remove(&a.session);
                Ok(json!({ "logged_out": a.session }))
            }
            Verb::Deploy => {
                let a: AsArgs = args_as(args)?;
                let token = self.session(&a.session)?;
                let receipt = self.registry().deploy_contract(&token)?;
                self.save(&a.save_tx, receipt.tx_id);
                Ok(json!(receipt))
            }
            Verb::RegisterUniversity => {
                let a: RegisterUniversityArgs = args_as(args)?;
                let token = self.session(&a.session)?;
                let (account, receipt) = self
                    .registry()
                    .admin_register_university(&token, &a.name, &a.email, &a.secret)?;
                self.save(&a.save_tx, receipt.tx_id);
                Ok(json!({ "account": account, "receipt": receipt }))
            }
            Verb::Universities => {
                let a: UniversitiesArgs = args_as(args)?;
                let listed = self.store.registry().universities();
                if let Some(expected) = &a.expect {
                    let names: Vec<String> = listed.iter().map(|u| u.name.clone()).collect();
                    expect_eq("universities", expected, &names)?;
                }
                Ok(json!(listed))
            }
            Verb::AddStudent => {
                let a: AddStudentArgs = args_as(args)?;
                let token = self.session(&a.session)?;
                let view = self.registry().university_add_student(
                    &token,
                    &a.university,
                    &a.student_id,
                    &a.name,
                    &a.email,
                    &a.secret,
                )?;
                Ok(json!(view))
            }
            Verb::RegisterEmployer => {
                let a: EmployerArgs = args_as(args)?;
                let view = self
                    .registry()
                    .register_employer(&a.user_id, &a.name, &a.email, &a.secret)?;
                Ok(json!(view))
            }
            Verb::Authenticate => {
                let a: AuthenticateArgs = args_as(args)?;
                let token = self.session(&a.session)?;
                let document = self.document(&a.document, &a.document_file)?;
                let category: Category = a.category.parse().or_else(|e| fail(format!("{e}")))?;
                let receipt = self.registry().authenticate_certificate(
                    &token,
                    &a.university,
                    &a.student,
                    &a.title,
                    category,
                    &document,
                )?;
                self.store
                    .save_document(&receipt.cert_digest, &document)
                    .or_else(|e| fail(e.to_string()))?;
                self.save(&a.save_as, receipt.cert_digest);
                self.save(&a.save_tx, receipt.tx_id);
                Ok(json!(receipt))
            }
            Verb::Revoke => {
                let a: RevokeArgs = args_as(args)?;
                let token = self.session(&a.session)?;
                let receipt =
                    self.registry()
                        .revoke_certificate(&token, &a.university, &a.digest)?;
                self.save(&a.save_tx, receipt.tx_id);
                Ok(json!(receipt))
            }
            Verb::Verify => {
                let a: VerifyArgs = args_as(args)?;
                let outcome = match (&a.digest, &a.document, &a.document_file) {
                    (Some(digest), None, None) => self
                        .store
                        .registry()
                        .employer_verify(VerifyInput::Digest(digest))?,
                    (None, text, file) => {
                        let bytes = self.document(text, file)?;
                        self.store
                            .registry()
                            .employer_verify(VerifyInput::Document(&bytes))?
                    }
                    _ => return fail("give a digest or a document, not both"),
                };
                if let Some(valid) = a.expect {
                    expect_eq("valid", &valid, &outcome.valid)?;
                }
                if let Some(revoked) = a.revoked {
                    expect_eq("revoked", &revoked, &outcome.revoked)?;
                }
                if let Some(issuer) = &a.issuer {
                    expect_eq("issuer", &Some(issuer.clone()), &outcome.issuer_name)?;
                }
                Ok(json!(outcome))
            }
            Verb::Record => {
                let a: RecordArgs = args_as(args)?;
                let token = self.session(&a.session)?;
                let record = self.registry().get_achievement_record(&token, &a.student)?;
                if let Some(n) = a.expect_entries {
                    expect_eq("entries", &n, &record.entries.len())?;
                }
                if let Some(titles) = &a.expect_titles {
                    let found: Vec<String> =
                        record.entries.iter().map(|e| e.title.clone()).collect();
                    expect_eq("titles", titles, &found)?;
                }
                if let Some(n) = a.expect_revoked {
                    let found = record.entries.iter().filter(|e| e.revoked).count();
                    expect_eq("revoked entries", &n, &found)?;
                }
                Ok(json!(record))
            }
            Verb::Search => {
                let a: SearchArgs = args_as(args)?;
                let token = self.session(&a.session)?;
                let category = a
                    .category
                    .map(|c| c.parse::<Category>())
                    .transpose()
                    .or_else(|e| fail(format!("{e}")))?;
                let query = SearchQuery {
                    category,
                    university: a.university,
                    keyword: a.keyword,
                };
                let hits = self.registry().search_students(&token, &query)?;
                if let Some(expected) = &a.expect_students {
                    let found: Vec<String> = hits.iter().map(|h| h.student_id.clone()).collect();
                    expect_eq("students", expected, &found)?;
                }
                Ok(json!(hits))
            }
            Verb::ReadEmail => {
                let a: ReadEmailArgs = args_as(args)?;
                let registry = self.store.registry();
                let Some(account) = registry.account(&a.to) else {
                    return fail(format!("no user {}", a.to));
                };
                let email = registry
                    .outbox()
                    .iter()
                    .rev()
                    .find(|m| m.to == account.email && a.kind.is_none_or(|k| k == m.kind))
                    .cloned();
                let Some(email) = email else {
                    return fail(format!("no matching email to {}", a.to));
                };
                let token = extract_hex_token(&email.body);
                if a.save_as.is_some() {
                    match &token {
                        Some(token) => self.save(&a.save_as, token),
                        None => return fail("email carries no 32-hex token"),
                    }
                }
                Ok(json!(email))
            }
            Verb::Outbox => {
                let a: OutboxArgs = args_as(args)?;
                let token = self.session(&a.session)?;
                let outbox = self.registry().read_outbox(&token)?;
                if let Some(n) = a.expect_count {
                    expect_eq("outbox size", &n, &outbox.len())?;
                }
                Ok(json!(outbox))
            }
            Verb::RequestReset => {
                let a: RequestResetArgs = args_as(args)?;
                self.registry().request_reset(&a.user_id)?;
                Ok(json!({ "requested": a.user_id }))
            }
            Verb::ApplyReset => {
                let a: ApplyResetArgs = args_as(args)?;
                self.registry().apply_reset(&a.token, &a.new_secret)?;
                Ok(json!({ "reset": true }))
            }
            Verb::Faucet => {
                let a: FaucetArgs = args_as(args)?;
                let address = match (&a.address, &a.user) {
                    (Some(text), None) => text
                        .parse::<Address>()
                        .or_else(|e| fail(format!("invalid address: {e}")))?,
                    (None, Some(user)) => self.wallet_of(user)?,
                    _ => return fail("give exactly one of `address` or `user`"),
                };
                let balance = match &a.session {
                    Some(session) => {
                        let token = self.session(session)?;
                        self.registry().faucet(&token, address, a.amount)?
                    }
                    None => self.registry().fund(address, a.amount),
                };
                if let Some(expected) = a.expect_balance {
                    expect_eq("balance", &expected, &balance)?;
                }
                Ok(json!({ "address": address, "balance": balance }))
            }
            Verb::Mine => {
                let a: MineArgs = args_as(args)?;
                let reports = self.registry().mine(a.rounds.unwrap_or(1))?;
                let blocks: Vec<Value> = reports
                    .iter()
                    .map(|r| {
                        json!({
                            "index": r.block.index,
                            "hash": r.block.hash,
                            "winner": r.winner,
                            "transactions": r.block.transactions.len(),
                        })
                    })
                    .collect();
                Ok(json!(blocks))
            }
            Verb::Status => {
                let a: StatusArgs = args_as(args)?;
                let tx_id: Digest128 =
                    a.tx.parse()
                        .or_else(|_| fail("tx must be 32 hex characters"))?;
                let status = self.store.registry().tx_status(&tx_id);
                if let Some(expected) = &a.expect {
                    let found = match status {
                        TxStatus::Pending => "pending",
                        TxStatus::Confirmed { .. } => "confirmed",
                        TxStatus::Rejected { .. } => "rejected",
                    };
                    expect_eq("status", &expected.as_str(), &found)?;
                }
                Ok(json!(status))
            }
            Verb::AssertChainValid => {
                let chain = self.store.registry().chain();
                validate_chain(chain).or_else(|e| fail(format!("chain invalid: {e}")))?;
                Ok(json!({ "length": chain.len(), "tip": chain.tip().hash }))
            }
        }
    }
}

/// First whitespace-separated word of exactly 32 hex characters.
pub fn extract_hex_token(body: &str) -> Option<String> {
    body.split(|c: char| c.is_whitespace() || c == ':')
        .find(|w| w.len() == 32 && w.chars().all(|c| c.is_ascii_hexdigit()))
        .map(str::to_string)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::api::API_OPERATIONS;

    #[test]
    fn verbs_cover_every_operation() {
        for op in &Operation::ALL {
            assert!(
                Verb::ALL.iter().any(|v| v.operations().contains(op)),
                "no scenario verb performs {op:?}"
            );
        }
    }

    #[test]
    fn verbs_cover_every_api_route() {
        // Ungated routes map to verbs by name.
        let ungated = [
            ("/login", Verb::Login),
            ("/reset/request", Verb::RequestReset),
            ("/reset/apply", Verb::ApplyReset),
            ("/employers", Verb::RegisterEmployer),
            ("/universities", Verb::Universities),
            ("/chain", Verb::AssertChainValid),
            ("/chain/status/{tx_id}", Verb::Status),
        ];
        for (method, path, op) in API_OPERATIONS {
            match op {
                Some(op) => assert!(
                    Verb::ALL.iter().any(|v| v.operations().contains(op)),
                    "{method} {path} has no verb"
                ),
                None => assert!(
                    ungated.iter().any(|(p, _)| p == path),
                    "{method} {path} has no verb"
                ),
            }
        }
    }

    #[test]
    fn verb_names_round_trip() {
        for verb in Verb::ALL {
            assert_eq!(verb.name().parse::<Verb>().unwrap(), *verb);
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse("# comment\n\nmine {}\nfly {}\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 4, .. }), "{err}");
        assert_eq!(err.exit_code(), 2);

        let err = parse("mine {\"rounds\": }").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 1, .. }));
        let err = parse("mine {\"laps\": 2}").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 1, .. }));
        let err = parse("mine [1]").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 1, .. }));
    }

    #[test]
    fn expect_error_is_lifted_out_of_args() {
        let script =
            parse(r#"login {"user_id":"x","secret":"y","expect_error":"invalid_credentials"}"#)
                .unwrap();
        assert_eq!(
            script.steps[0].expect_error.as_deref(),
            Some("invalid_credentials")
        );
        assert!(script.steps[0].args.get("expect_error").is_none());
    }

    #[test]
    fn hex_token_extraction() {
        let body = "Hello\nCertificate digest: 0123456789abcdef0123456789ABCDEF\n";
        assert_eq!(
            extract_hex_token(body).as_deref(),
            Some("0123456789abcdef0123456789ABCDEF")
        );
        assert_eq!(extract_hex_token("nothing here"), None);
    }
}
