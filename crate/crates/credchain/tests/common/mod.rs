//! HTTP fixtures shared by the API and acceptance targets.
#![allow(dead_code)]

use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use credchain::api::{self, Shared};
use credchain::store::Store;
use credchain_core::ledger::{ChainParams, LedgerConfig};
use credchain_core::registry::{is_allowed, Category, Operation, RegistryConfig, Role};
use credchain_core::Digest128;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub const BOUNDARY: &str = "credchain-test-boundary";

pub fn config(difficulty: u8, seed: u64) -> RegistryConfig {
    RegistryConfig {
        ledger: LedgerConfig {
            params: ChainParams::new(difficulty, 4).unwrap(),
            nodes: 3,
            seed,
        },
        ..RegistryConfig::default()
    }
}

pub struct Response {
    pub status: StatusCode,
    pub body: Value,
}

pub async fn send(app: &Router, request: Request<Body>) -> Response {
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes)
            .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    Response { status, body }
}

fn builder(method: Method, path: &str, token: Option<&str>) -> axum::http::request::Builder {
    let mut b = Request::builder().method(method).uri(path);
    if let Some(token) = token {
        b = b.header("authorization", format!("Bearer {token}"));
    }
    b
}

pub async fn get(app: &Router, path: &str, token: Option<&str>) -> Response {
    send(
        app,
        builder(Method::GET, path, token)
            .body(Body::empty())
            .unwrap(),
    )
    .await
}

pub async fn post(app: &Router, path: &str, token: Option<&str>, body: Value) -> Response {
    let request = builder(Method::POST, path, token)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    send(app, request).await
}

/// Multipart body with the given (name, bytes) fields.
pub fn multipart(fields: &[(&str, &[u8])]) -> Vec<u8> {
    let mut out = Vec::new();
    for (name, bytes) in fields {
        out.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        if *name == "document" {
            out.extend_from_slice(
                format!(
                    "Content-Disposition: form-data; name=\"{name}\"; filename=\"certificate.pdf\"\r\n\
                     Content-Type: application/octet-stream\r\n\r\n"
                )
                .as_bytes(),
            );
        } else {
            out.extend_from_slice(
                format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes(),
            );
        }
        out.extend_from_slice(bytes);
        out.extend_from_slice(b"\r\n");
    }
    out.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    out
}

pub async fn post_multipart(
    app: &Router,
    path: &str,
    token: Option<&str>,
    fields: &[(&str, &[u8])],
) -> Response {
    let request = builder(Method::POST, path, token)
        .header(
            "content-type",
            format!("multipart/form-data; boundary={BOUNDARY}"),
        )
        .body(Body::from(multipart(fields)))
        .unwrap();
    send(app, request).await
}

pub async fn upload_certificate(
    app: &Router,
    token: Option<&str>,
    university: &str,
    student: &str,
    title: &str,
    category: Category,
    document: &[u8],
) -> Response {
    let metadata =
        json!({ "student_id": student, "title": title, "category": category }).to_string();
    post_multipart(
        app,
        &format!("/universities/{university}/certificates"),
        token,
        &[("metadata", metadata.as_bytes()), ("document", document)],
    )
    .await
}

pub async fn mine(shared: &Shared, rounds: usize) {
    let mut store = shared.lock().unwrap();
    store.registry_mut().mine(rounds).unwrap();
    store.persist().unwrap();
}

pub async fn login(app: &Router, user_id: &str, secret: &str) -> String {
    let r = post(
        app,
        "/login",
        None,
        json!({ "user_id": user_id, "secret": secret }),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "login {user_id}: {}", r.body);
    r.body["token"].as_str().unwrap().to_string()
}

/// A registry with one account of every role, a confirmed university, and
/// one confirmed certificate, all driven through the API.
pub struct World {
    pub app: Router,
    pub shared: Shared,
    pub admin: String,
    pub university: String,
    pub student: String,
    pub employer: String,
    pub cert_digest: Digest128,
}

pub const UNIVERSITY_ID: &str = "newcastle";
pub const DOCUMENT: &[u8] = b"Newcastle certifies that S1 was awarded a BSc in Computer Science.";

impl World {
    pub async fn build(store: Store) -> World {
        let shared: Shared = Arc::new(Mutex::new(store));
        {
            let mut s = shared.lock().unwrap();
            s.registry_mut()
                .bootstrap_admin("admin", "Admin", "admin@example.org", "admin-pass")
                .unwrap();
            s.persist().unwrap();
        }
        let app = api::router(shared.clone());
        let admin = login(&app, "admin", "admin-pass").await;

        let r = post(&app, "/admin/deploy", Some(&admin), json!({})).await;
        assert_eq!(r.status, StatusCode::ACCEPTED, "{}", r.body);
        mine(&shared, 1).await;
        let r = post(
            &app,
            "/admin/universities",
            Some(&admin),
            json!({ "name": "Newcastle", "email": "registry@ncl.example", "secret": "uni-pass" }),
        )
        .await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
        mine(&shared, 1).await;
        let university = login(&app, UNIVERSITY_ID, "uni-pass").await;

        let r = post(
            &app,
            &format!("/universities/{UNIVERSITY_ID}/students"),
            Some(&university),
            json!({ "student_id": "S1", "display_name": "Ada", "email": "s1@example.org", "secret": "s-pass" }),
        )
        .await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
        let student = login(&app, "S1", "s-pass").await;

        let r = upload_certificate(
            &app,
            Some(&university),
            UNIVERSITY_ID,
            "S1",
            "BSc Computer Science",
            Category::Academic,
            DOCUMENT,
        )
        .await;
        assert_eq!(r.status, StatusCode::ACCEPTED, "{}", r.body);
        let cert_digest: Digest128 = r.body["cert_digest"].as_str().unwrap().parse().unwrap();
        mine(&shared, 1).await;

        let r = post(
            &app,
            "/employers",
            None,
            json!({ "user_id": "acme", "display_name": "Acme", "email": "jobs@acme.example", "secret": "e-pass" }),
        )
        .await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
        let employer = login(&app, "acme", "e-pass").await;

        World {
            app,
            shared,
            admin,
            university,
            student,
            employer,
            cert_digest,
        }
    }

    pub fn token(&self, role: Option<Role>) -> Option<&str> {
        match role {
            None => None,
            Some(Role::Admin) => Some(&self.admin),
            Some(Role::University) => Some(&self.university),
            Some(Role::Student) => Some(&self.student),
            Some(Role::Employer) => Some(&self.employer),
        }
    }

    pub fn state_digest(&self) -> Digest128 {
        self.shared.lock().unwrap().registry().state_digest()
    }

    /// A well-formed request performing `op`.
    pub async fn perform(&self, role: Option<Role>, op: Operation) -> Response {
        let token = self.token(role);
        let app = &self.app;
        match op {
            Operation::DeployContract => post(app, "/admin/deploy", token, json!({})).await,
            Operation::RegisterUniversity => {
                post(
                    app,
                    "/admin/universities",
                    token,
                    json!({ "name": "Durham", "email": "d@example.org", "secret": "d-pass" }),
                )
                .await
            }
            Operation::AddStudent => {
                post(
                    app,
                    &format!("/universities/{UNIVERSITY_ID}/students"),
                    token,
                    json!({ "student_id": "S2", "display_name": "Bea", "email": "s2@example.org", "secret": "p" }),
                )
                .await
            }
            Operation::AuthenticateCertificate => {
                upload_certificate(
                    app,
                    token,
                    UNIVERSITY_ID,
                    "S1",
                    "Chess prize",
                    Category::Prize,
                    b"A different document about a chess prize, long enough.",
                )
                .await
            }
            Operation::RevokeCertificate => {
                let path = format!(
                    "/universities/{UNIVERSITY_ID}/certificates/{}/revoke",
                    self.cert_digest
                );
                post(app, &path, token, json!({})).await
            }
            Operation::ViewRecord => get(app, "/students/S1/record", token).await,
            Operation::SearchStudents => get(app, "/students/search?category=academic", token).await,
            Operation::ReadOutbox => get(app, "/admin/outbox", token).await,
            Operation::Faucet => {
                post(
                    app,
                    "/admin/faucet",
                    token,
                    json!({ "address": "00000000000000000000000000000000000000aa", "amount": 5 }),
                )
                .await
            }
            Operation::Logout => post(app, "/logout", token, json!({})).await,
            Operation::Verify => {
                post(app, "/verify", token, json!({ "digest": self.cert_digest })).await
            }
        }
    }
}

pub const ROLES: [Option<Role>; 5] = [
    None,
    Some(Role::Admin),
    Some(Role::University),
    Some(Role::Student),
    Some(Role::Employer),
];

/// Every denied (role, operation) pair must fail with 401/403 and leave the
/// persistent state untouched. Returns the number of denied pairs checked.
pub async fn check_denied_pairs(world: &World) -> Result<usize, String> {
    let mut checked = 0;
    for role in ROLES {
        for op in Operation::ALL {
            if is_allowed(role, op) {
                continue;
            }
            let before = world.state_digest();
            let r = world.perform(role, op).await;
            let after = world.state_digest();
            let expected = if role.is_none() {
                (StatusCode::UNAUTHORIZED, "unauthenticated")
            } else {
                (StatusCode::FORBIDDEN, "forbidden")
            };
            if (r.status, r.body["error"].as_str().unwrap_or("")) != expected {
                return Err(format!("{role:?} {op:?}: got {} {}", r.status, r.body));
            }
            if before != after {
                return Err(format!("{role:?} {op:?}: state changed"));
            }
            checked += 1;
        }
    }
    Ok(checked)
}
