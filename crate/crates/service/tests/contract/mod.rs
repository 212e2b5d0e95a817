//! Test harness for the HTTP contract, shared with the acceptance run.
#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use oed::problem::{Design, ObjectiveSpec, Problem, Value as DesignValue, VariableSpec};
use oed::optimizer::Source;
use oed::store::Store;
use oed_service::{router, Action, AppState, Role, UserAccount, UserDb};

pub const MANAGER: &str = "tok-manager";
pub const SCIENTIST: &str = "tok-scientist";
pub const TECHNICIAN: &str = "tok-technician";

pub fn token(role: Role) -> &'static str {
    match role {
        Role::Manager => MANAGER,
        Role::Scientist => SCIENTIST,
        Role::Technician => TECHNICIAN,
    }
}

pub fn users() -> UserDb {
    UserDb::in_memory(
        Role::ALL
            .iter()
            .map(|r| UserAccount {
                username: r.name().to_string(),
                role: *r,
                token: token(*r).to_string(),
            })
            .collect(),
    )
    .unwrap()
}

pub fn problem() -> Problem {
    Problem::new(
        vec![VariableSpec::continuous("x", 0.0, 1.0), VariableSpec::continuous("y", 0.0, 1.0)],
        vec![ObjectiveSpec::minimize("f1"), ObjectiveSpec::minimize("f2")],
    )
}

pub fn design(x: f64, y: f64) -> Design {
    Design::new().with("x", DesignValue::Real(x)).with("y", DesignValue::Real(y))
}

pub struct Harness {
    pub _dir: tempfile::TempDir,
    pub state: Arc<AppState>,
    pub app: Router,
}

impl Harness {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(Store::open(dir.path()).unwrap());
        let state = AppState::new(store, users());
        let app = router(state.clone());
        Self { _dir: dir, state, app }
    }

    pub async fn call(&self, method: Method, uri: &str, tok: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        self.call_with_key(method, uri, tok, body, None).await
    }

    pub async fn call_with_key(
        &self,
        method: Method,
        uri: &str,
        tok: Option<&str>,
        body: Option<Value>,
        key: Option<&str>,
    ) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = tok {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        if let Some(k) = key {
            req = req.header("idempotency-key", k);
        }
        let body = body.map_or_else(Body::empty, |b| Body::from(b.to_string()));
        let resp = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, value)
    }

    pub async fn create(&self, name: &str) -> String {
        let (s, v) = self
            .call(
                Method::POST,
                "/v1/experiments",
                Some(SCIENTIST),
                Some(json!({"name": name, "problem": problem()})),
            )
            .await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_string()
    }

    pub fn seed_pending(&self, name: &str, n: usize) -> Vec<u64> {
        let exp = self.state.store().experiment(name).unwrap();
        let designs: Vec<Design> = (0..n).map(|i| design(i as f64 / (n as f64 + 1.0), 0.5)).collect();
        exp.insert_pending(&designs, Source::Manual, 0, "test").unwrap()
    }
}

/// One request per protected action, run against a fresh experiment.
pub async fn attempt(h: &Harness, action: Action, role: Role) -> StatusCode {
    let tok = Some(token(role));
    let exp = h.create("perm").await;
    let ids = h.seed_pending(&exp, 2);
    h.state.store().experiment(&exp).unwrap().start(ids[1], Some(role.name()), "test").unwrap();
    let (status, _) = match action {
        Action::ViewExperiments => h.call(Method::GET, &format!("/v1/experiments/{exp}/status"), tok, None).await,
        Action::ClaimRecords => h.call(Method::POST, &format!("/v1/experiments/{exp}/claim"), tok, None).await,
        Action::SubmitResults => {
            let body = json!({"experiment": exp, "objectives": [1.0, 2.0]});
            h.call(Method::POST, &format!("/v1/records/{}/result", ids[1]), tok, Some(body)).await
        }
        Action::CreateExperiments => {
            let body = json!({"name": "other", "problem": problem()});
            h.call(Method::POST, "/v1/experiments", tok, Some(body)).await
        }
        Action::ControlScheduler => {
            let (s, v) = h.call(Method::POST, &format!("/v1/experiments/{exp}/runs"), tok, Some(json!({"budget": 0}))).await;
            if s.is_success() {
                // Let the zero-budget run end so the experiment can be deleted.
                for _ in 0..200 {
                    let (_, st) = h.call(Method::GET, &format!("/v1/experiments/{exp}/status"), Some(MANAGER), None).await;
                    if st["scheduler"]["state"] != "running" && st["scheduler"]["state"] != "stopping" {
                        break;
                    }
                    tokio::time::sleep(std::time::Duration::from_millis(10)).await;
                }
            }
            (s, v)
        }
        Action::QueryPredictions => {
            let body = json!({"design": design(0.5, 0.5)});
            h.call(Method::POST, &format!("/v1/experiments/{exp}/predict"), tok, Some(body)).await
        }
        Action::ExportData => h.call(Method::GET, &format!("/v1/experiments/{exp}/export"), tok, None).await,
        Action::ManageUsers => {
            let body = json!({"username": format!("new-{}", role.name()), "role": "technician"});
            h.call(Method::POST, "/v1/users", tok, Some(body)).await
        }
        Action::DeleteExperiments => h.call(Method::DELETE, &format!("/v1/experiments/{exp}"), tok, None).await,
    };
    let _ = h.state.store().delete("other");
    let _ = h.state.store().delete(&exp);
    status
}

/// Every (role, action) pair: allowed pairs must not be refused, the others
/// must get 403. Returns the number of pairs checked.
pub async fn permission_table() -> Result<usize, String> {
    let h = Harness::new();
    let perms = oed_service::Permissions::default();
    let mut checked = 0;
    for action in Action::ALL {
        for role in Role::ALL {
            let status = attempt(&h, action, role).await;
            let ok = if perms.allows(role, action) {
                status != StatusCode::FORBIDDEN && status != StatusCode::UNAUTHORIZED
            } else {
                status == StatusCode::FORBIDDEN
            };
            if !ok {
                return Err(format!("{role} / {action:?}: got {status}"));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// `claimers` concurrent claims against `pending` records, `reps` times.
/// Each repetition must claim exactly min(claimers, pending) distinct records.
pub async fn claim_stress(claimers: usize, pending: usize, reps: usize) -> Result<(), String> {
    let h = Arc::new(Harness::new());
    for rep in 0..reps {
        let exp = h.create(&format!("stress-{rep}")).await;
        h.seed_pending(&exp, pending);
        let barrier = Arc::new(tokio::sync::Barrier::new(claimers));
        let tasks: Vec<_> = (0..claimers)
            .map(|w| {
                let h = h.clone();
                let exp = exp.clone();
                let barrier = barrier.clone();
                tokio::spawn(async move {
                    barrier.wait().await;
                    let body = json!({"worker": format!("w{w}")});
                    h.call(Method::POST, &format!("/v1/experiments/{exp}/claim"), Some(TECHNICIAN), Some(body)).await
                })
            })
            .collect();
        let mut claimed = Vec::new();
        let mut empty = 0;
        for t in tasks {
            let (s, v) = t.await.map_err(|e| e.to_string())?;
            match s {
                StatusCode::OK => claimed.push(v["record"]["id"].as_u64().unwrap_or(0)),
                StatusCode::CONFLICT if v["status"] == "none_pending" => empty += 1,
                other => return Err(format!("rep {rep}: unexpected {other}: {v}")),
            }
        }
        let total = claimed.len();
        claimed.sort_unstable();
        claimed.dedup();
        if claimed.len() != total || total != claimers.min(pending) || empty != claimers - total {
            return Err(format!("rep {rep}: claimed {claimed:?} of {total}, {empty} empty"));
        }
    }
    Ok(())
}
