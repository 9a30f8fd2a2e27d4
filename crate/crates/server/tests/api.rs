use std::sync::OnceLock;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use trust_pomdp::learning::{Episode, InteractionLog};
use trust_pomdp::pomdp::{belief_update, exact_plan, Belief, ExactOptions, Policy};
use trust_pomdp::task::{build_model, preset, reference_parameters, TaskConfig};
use trust_session_server::{router, AppState, Registry};

fn solved() -> &'static [(TaskConfig, Policy); 2] {
    static CELL: OnceLock<[(TaskConfig, Policy); 2]> = OnceLock::new();
    CELL.get_or_init(|| {
        let params = reference_parameters();
        ["always-success", "failure-scenario"].map(|name| {
            let config = preset(name, &params).unwrap();
            let policy = exact_plan(&build_model(&config).unwrap(), ExactOptions::default()).unwrap().policy;
            (config, policy)
        })
    })
}

fn registry() -> Registry {
    let [(success, p1), (failure, p2)] = solved().clone();
    let mut r = Registry::new();
    r.add_config("always-success", success).unwrap();
    r.add_config("failure-scenario", failure).unwrap();
    r.add_policy("p1", p1);
    r.add_policy("p2", p2);
    r
}

fn app() -> Router {
    router(AppState::new(registry()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let request = request.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn create(app: &Router, config: &str, policy: &str, seed: u64, muir: bool) -> Value {
    let body = json!({"config": config, "policy": policy, "seed": seed, "collectMuir": muir});
    let (status, view) = call(app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{view}");
    view
}

async fn act(app: &Router, id: &str, action: &str) -> (StatusCode, Value) {
    call(app, "POST", &format!("/sessions/{id}/human-action"), Some(json!({"action": action}))).await
}

async fn report(app: &Router, id: &str, items: Value) -> (StatusCode, Value) {
    call(app, "POST", &format!("/sessions/{id}/trust-report"), Some(json!({"items": items}))).await
}

fn id(view: &Value) -> String {
    view["id"].as_str().unwrap().to_string()
}

fn expected_trust(belief: &Value) -> f64 {
    belief.as_array().unwrap().iter().enumerate().map(|(i, w)| (i + 1) as f64 * w.as_f64().unwrap()).sum()
}

#[tokio::test]
async fn create_returns_intent_and_initial_belief() {
    let app = app();
    let view = create(&app, "always-success", "p1", 7, false).await;
    assert_eq!(view["phase"], "AwaitingHumanAction");
    assert!(view["robotIntent"]["object"].is_u64());
    let belief = view["belief"].as_array().unwrap();
    assert_eq!(belief.len(), 7);
    assert!((belief.iter().map(|w| w.as_f64().unwrap()).sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(view.get("totals").is_none());
}

#[tokio::test]
async fn unknown_references_are_not_found() {
    let app = app();
    let (status, body) = call(&app, "POST", "/sessions", Some(json!({"config": "always-success", "policy": "nope"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "POLICY_NOT_FOUND");
    assert!(body["message"].is_string());
    let (status, body) = call(&app, "POST", "/sessions", Some(json!({"config": "nope", "policy": "p1"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "CONFIG_NOT_FOUND");
    let (status, body) = call(&app, "GET", "/sessions/missing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "SESSION_NOT_FOUND");
    let (status, _) = act(&app, "missing", "stayPut").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/sessions/missing/history", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn mismatched_policy_conflicts() {
    let app = app();
    let (status, body) = call(&app, "POST", "/sessions", Some(json!({"config": "always-success", "policy": "p2"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "POLICY_MISMATCH");
}

#[tokio::test]
async fn malformed_bodies_are_unprocessable() {
    let app = app();
    let (status, body) = call(&app, "POST", "/sessions", Some(json!({"config": 3}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "INVALID_REQUEST");
    let view = create(&app, "always-success", "p1", 0, false).await;
    let (status, _) = act(&app, &id(&view), "wave").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn same_seed_same_inputs_same_session() {
    let app = app();
    let inputs = ["stayPut", "stayPut", "intervene", "stayPut", "stayPut", "stayPut", "stayPut"];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let view = create(&app, "failure-scenario", "p2", 11, false).await;
        let sid = id(&view);
        let mut trace = vec![view["robotIntent"].clone()];
        for a in inputs {
            let (status, result) = act(&app, &sid, a).await;
            if status != StatusCode::OK {
                break;
            }
            trace.push(result);
        }
        runs.push(trace);
    }
    assert_eq!(runs[0], runs[1]);
}

#[tokio::test]
async fn intervene_removes_object_for_zero_reward() {
    let app = app();
    let view = create(&app, "always-success", "p1", 1, false).await;
    let sid = id(&view);
    let mut saw_glass = false;
    loop {
        let (_, state) = call(&app, "GET", &format!("/sessions/{sid}"), None).await;
        let Some(intent) = state.get("robotIntent").cloned() else { break };
        let (status, result) = act(&app, &sid, "intervene").await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(result["status"], "removedHuman");
        assert_eq!(result["reward"], 0.0);
        saw_glass |= intent["category"] == "glass";
    }
    assert!(saw_glass);
}

#[tokio::test]
async fn stay_put_on_bottle_succeeds_and_raises_trust() {
    let app = app();
    let view = create(&app, "always-success", "p1", 2, false).await;
    let sid = id(&view);
    let mut belief = view["belief"].clone();
    let mut checked = 0;
    loop {
        let (_, state) = call(&app, "GET", &format!("/sessions/{sid}"), None).await;
        let Some(intent) = state.get("robotIntent").cloned() else { break };
        let (_, result) = act(&app, &sid, "stayPut").await;
        if intent["category"] == "bottle" {
            assert_eq!(result["reward"], 1.0);
            assert_eq!(result["status"], "removedRobotSuccess");
            assert!(expected_trust(&result["belief"]) >= expected_trust(&belief));
            checked += 1;
        }
        belief = result["belief"].clone();
    }
    assert!(checked > 0);
}

#[tokio::test]
async fn completed_session_rejects_actions_and_exports_history() {
    let app = app();
    let view = create(&app, "always-success", "p1", 3, false).await;
    let sid = id(&view);
    let mut last = Value::Null;
    for n in 0..5 {
        let (status, result) = act(&app, &sid, if n % 2 == 0 { "stayPut" } else { "intervene" }).await;
        assert_eq!(status, StatusCode::OK);
        if n < 4 {
            assert_eq!(result["phase"], "AwaitingHumanAction");
            assert!(result.get("totals").is_none());
            assert!(result["nextIntent"].is_object());
        }
        last = result;
    }
    assert_eq!(last["phase"], "Completed");
    assert_eq!(last["totals"]["steps"], 5);
    assert!(last.get("nextIntent").is_none());

    let (status, body) = act(&app, &sid, "stayPut").await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "WRONG_PHASE");

    let (_, state) = call(&app, "GET", &format!("/sessions/{sid}"), None).await;
    assert_eq!(state["totals"]["totalReward"], state["runningReward"]);

    let (status, history) = call(&app, "GET", &format!("/sessions/{sid}/history"), None).await;
    assert_eq!(status, StatusCode::OK);
    let episode: Episode = serde_json::from_value(history.clone()).unwrap();
    assert_eq!(episode.steps.len(), 5);
    let log = InteractionLog::from_jsonl(&format!("{history}\n")).unwrap();
    log.validate().unwrap();
    assert_eq!(log.episodes[0], episode);
}

#[tokio::test]
async fn trust_reports_are_logged_but_never_move_the_belief() {
    let app = app();
    let view = create(&app, "always-success", "p1", 4, true).await;
    let sid = id(&view);
    assert_eq!(view["acceptsTrustReport"], true);

    let (status, ack) = report(&app, &sid, json!([4, 5, 5, 6])).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["rating"], 5.0);
    assert_eq!(ack["step"], 0);
    assert_eq!(ack["belief"], view["belief"]);
    let (_, state) = call(&app, "GET", &format!("/sessions/{sid}"), None).await;
    assert_eq!(state["belief"], view["belief"]);
    assert_eq!(state["acceptsTrustReport"], false);

    let (status, body) = report(&app, &sid, json!([4, 5, 5, 6])).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "DUPLICATE_REPORT");

    let (_, step) = act(&app, &sid, "stayPut").await;
    for bad in [json!([4, 5, 5, 8]), json!([4, 5, 5]), json!([0, 5, 5, 5])] {
        let (status, body) = report(&app, &sid, bad).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(body["code"], "INVALID_REPORT");
    }
    let (status, ack) = report(&app, &sid, json!([1, 2, 3, 4])).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["rating"], 2.5);
    assert_eq!(ack["belief"], step["belief"]);

    let (_, history) = call(&app, "GET", &format!("/sessions/{sid}/history"), None).await;
    assert_eq!(history["initialMuir"], 5.0);
    assert_eq!(history["initialMuirItems"], json!([4.0, 5.0, 5.0, 6.0]));
    assert_eq!(history["steps"][0]["postMuir"], 2.5);
}

#[tokio::test]
async fn reports_rejected_when_collection_is_off() {
    let app = app();
    let view = create(&app, "always-success", "p1", 5, false).await;
    let (status, body) = report(&app, &id(&view), json!([4, 4, 4, 4])).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "MUIR_DISABLED");
}

#[tokio::test]
async fn belief_trajectory_matches_offline_replay() {
    let (config, _) = &solved()[1];
    let model = build_model(config).unwrap();
    let app = app();
    let view = create(&app, "failure-scenario", "p2", 9, false).await;
    let sid = id(&view);
    let mut served = vec![view["belief"].to_string()];
    let inputs = ["stayPut", "intervene", "stayPut", "stayPut", "stayPut", "intervene", "stayPut"];
    for a in inputs {
        let (status, result) = act(&app, &sid, a).await;
        if status != StatusCode::OK {
            break;
        }
        served.push(result["belief"].to_string());
    }
    let (_, state) = call(&app, "GET", &format!("/sessions/{sid}"), None).await;

    let mut v = model.initial_visible();
    let mut b: Belief = config.initial_trust_belief.clone();
    let mut replayed = vec![serde_json::to_string(&b).unwrap()];
    for step in state["steps"].as_array().unwrap() {
        let a = step["action"].as_u64().unwrap() as usize;
        let object = step["object"].as_u64().unwrap() as usize;
        let status = serde_json::from_value(step["status"].clone()).unwrap();
        let next = model.state_index(&model.world(v).with_status(object, status)).unwrap();
        b = belief_update(&model, &b, v, a, next).unwrap();
        v = next;
        replayed.push(serde_json::to_string(&b).unwrap());
    }
    assert_eq!(served, replayed);
    assert_eq!(state["phase"], "Completed");
}

#[tokio::test]
async fn concurrent_actions_on_one_session_are_serialized() {
    let app = app();
    let view = create(&app, "always-success", "p1", 6, false).await;
    let sid = id(&view);
    let handles: Vec<_> = (0..6)
        .map(|_| {
            let app = app.clone();
            let sid = sid.clone();
            tokio::spawn(async move { act(&app, &sid, "stayPut").await.0 })
        })
        .collect();
    let mut statuses = Vec::new();
    for h in handles {
        statuses.push(h.await.unwrap());
    }
    assert_eq!(statuses.iter().filter(|s| **s == StatusCode::OK).count(), 5);
    assert_eq!(statuses.iter().filter(|s| **s == StatusCode::CONFLICT).count(), 1);
    let (_, state) = call(&app, "GET", &format!("/sessions/{sid}"), None).await;
    assert_eq!(state["steps"].as_array().unwrap().len(), 5);
}

#[tokio::test]
async fn completed_episodes_are_appended_to_the_log() {
    let path = std::env::temp_dir().join(format!("sessions-{}.jsonl", std::process::id()));
    let _ = std::fs::remove_file(&path);
    let app = router(AppState::with_log(registry(), Some(path.clone())));
    for seed in 0..2 {
        let sid = id(&create(&app, "always-success", "p1", seed, false).await);
        for _ in 0..5 {
            act(&app, &sid, "stayPut").await;
        }
    }
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    let log = InteractionLog::from_jsonl(&text).unwrap();
    assert_eq!(log.episodes.len(), 2);
    log.validate().unwrap();
}

#[tokio::test]
async fn cross_origin_requests_are_allowed() {
    let app = app();
    let request = Request::builder()
        .method("OPTIONS")
        .uri("/sessions")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let response = app.oneshot(request).await.unwrap();
    assert!(response.headers().contains_key("access-control-allow-origin"));
}
