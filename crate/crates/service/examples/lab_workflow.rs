//! A scientist creates an experiment and starts a manual run; a technician
//! claims the suggested designs and reports results over the HTTP API.
//!
//! Requests go through the router in-process. Pass `--serve` to listen on
//! 127.0.0.1:8080 instead.

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request};
use http_body_util::BodyExt;
use oed::store::Store;
use oed_service::{router, AppState, Role, UserAccount, UserDb};
use serde_json::{json, Value};
use tower::ServiceExt;

fn account(username: &str, role: Role) -> UserAccount {
    UserAccount {
        username: username.into(),
        role,
        token: format!("{username}-token"),
    }
}

async fn call(app: &axum::Router, method: Method, uri: &str, token: &str, body: Option<Value>) -> Value {
    let req = Request::builder()
        .method(method.clone())
        .uri(uri)
        .header("authorization", format!("Bearer {token}"))
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let v: Value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    println!("{method} {uri} -> {status}");
    v
}

#[tokio::main]
async fn main() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path()).unwrap());
    let users = UserDb::in_memory(vec![
        account("maria", Role::Scientist),
        account("tom", Role::Technician),
    ])
    .unwrap();
    let state = AppState::new(store, users);

    if std::env::args().any(|a| a == "--serve") {
        println!("tokens: maria-token (scientist), tom-token (technician)");
        oed_service::serve("127.0.0.1:8080".parse().unwrap(), state).await.unwrap();
        return;
    }
    let app = router(state);

    let problem = json!({
        "variables": [
            {"name": "flow", "kind": "continuous", "bounds": [0.5, 4.0]},
            {"name": "column", "kind": "categorical", "categories": ["C18", "HILIC"]}
        ],
        "objectives": [
            {"name": "resolution", "sense": "maximize"},
            {"name": "runtime", "sense": "minimize"}
        ]
    });
    let config = json!({"n_init": 3, "budget": 6, "batch_size": 3, "eval_mode": "sync_batch"});
    let created = call(&app, Method::POST, "/v1/experiments", "maria-token", Some(json!({"name": "hplc", "problem": problem, "config": config}))).await;
    let id = created["id"].as_str().unwrap().to_string();

    call(&app, Method::POST, &format!("/v1/experiments/{id}/runs"), "maria-token", Some(json!({}))).await;

    // The manual run keeps a batch of pending designs for the bench.
    let mut done = 0;
    while done < 6 {
        let claim = call(&app, Method::POST, &format!("/v1/experiments/{id}/claim"), "tom-token", Some(json!({}))).await;
        if claim["status"] != "claimed" {
            tokio::time::sleep(std::time::Duration::from_millis(200)).await;
            continue;
        }
        let record = &claim["record"];
        let flow = record["design"]["flow"].as_f64().unwrap();
        let hilic = record["design"]["column"] == "HILIC";
        let resolution = 2.0 - (flow - 1.5).powi(2) + if hilic { 0.4 } else { 0.0 };
        let runtime = 30.0 / flow + if hilic { 5.0 } else { 0.0 };
        let body = json!({"experiment": id, "objectives": [resolution, runtime]});
        call(&app, Method::POST, &format!("/v1/records/{}/result", record["id"]), "tom-token", Some(body)).await;
        done += 1;
    }

    let status = call(&app, Method::GET, &format!("/v1/experiments/{id}/status"), "maria-token", None).await;
    println!("scheduler: {}", status["scheduler"]);
    println!("statistics: {}", status["statistics"]);
    let predicted = call(
        &app,
        Method::POST,
        &format!("/v1/experiments/{id}/predict"),
        "maria-token",
        Some(json!({"design": {"flow": 1.5, "column": "HILIC"}})),
    )
    .await;
    println!("prediction at flow 1.5 on HILIC: {predicted}");
}
