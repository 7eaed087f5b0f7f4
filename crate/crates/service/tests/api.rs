use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use cryochain::data::DataStore;
use cryochain::scenario::{parse_scenario, ScenarioDocument};
use cryochain_service::{router, AppState, BODY_LIMIT};

fn app() -> Router {
    router(AppState::new(DataStore::bundled()))
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

async fn post(app: &Router, path: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::post(path)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (status, bytes) = call(app, req).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn temperature(resp: &Value, stage: &str) -> f64 {
    resp["report"]["thermal"]["stages"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["stage"] == stage)
        .unwrap()["temperature"]
        .as_f64()
        .unwrap()
}

fn stage<'a>(resp: &'a Value, stage: &str) -> &'a Value {
    resp["report"]["thermal"]["stages"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["stage"] == stage)
        .unwrap()
}

#[tokio::test]
async fn solve_bundled_scenario() {
    let app = app();
    let (status, resp) = post(&app, "/solve", json!({"scenario": "optical_coax_sc"})).await;
    assert_eq!(status, StatusCode::OK, "{resp}");
    let table2 = [
        ("50K", 34.0),
        ("4K", 2.9),
        ("Still", 1.4),
        ("CP", 0.1),
        ("MXC", 0.019),
    ];
    for (s, expected) in table2 {
        let t = temperature(&resp, s);
        assert!((t - expected).abs() / expected < 0.25, "{s}: {t}");
    }
    assert_eq!(
        resp["scenario_hash"],
        resp["report"]["metadata"]["scenario_hash"]
    );
    assert_eq!(resp["parameters"]["control_count"], 840);
}

#[tokio::test]
async fn identical_requests_give_identical_bodies() {
    let app = app();
    let body =
        json!({"scenario": "optical_coax_normal", "overrides": {"duty_cycle": "20 %"}}).to_string();
    let make = || {
        Request::post("/solve")
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(body.clone()))
            .unwrap()
    };
    let (a, b) = tokio::join!(call(&app, make()), call(&app, make()));
    assert_eq!(a.0, StatusCode::OK);
    assert_eq!(a, b);
    let (c, _) = tokio::join!(call(&app, make()), async {});
    assert_eq!(a, c);
}

#[tokio::test]
async fn photodiodes_moved_to_4k() {
    let app = app();
    let (status, resp) = post(
        &app,
        "/solve",
        json!({"scenario": "optical_coax_sc", "overrides": {"photodiode_stage": "4K"}}),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{resp}");
    let t4 = temperature(&resp, "4K");
    assert!((t4 - 3.012).abs() / 3.012 < 0.05, "{t4}");
    assert_eq!(resp["parameters"]["photodiode_stage"], "4K");
}

#[tokio::test]
async fn zero_duty_cycle_removes_optical_dissipation() {
    let app = app();
    let (status, resp) = post(
        &app,
        "/solve",
        json!({"scenario": "optical_coax_sc", "overrides": {"duty_cycle": 0}}),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{resp}");
    let still = stage(&resp, "Still");
    assert_eq!(still["optical_dissipation"], 0.0);
    assert!(still["fiber_conduction"].as_f64().unwrap() > 0.0);
}

#[tokio::test]
async fn document_text_and_json_object_match_the_name() {
    let app = app();
    let text = DataStore::bundled().scenario_text("all_coax").unwrap();
    let (_, by_name) = post(&app, "/solve", json!({"scenario": "all_coax"})).await;
    let (status, by_text) = post(&app, "/solve", json!({"document": text})).await;
    assert_eq!(status, StatusCode::OK);
    let doc = serde_json::to_value(ScenarioDocument::parse(&text).unwrap()).unwrap();
    let (_, by_object) = post(&app, "/solve", json!({"inline": doc})).await;
    let req = Request::post("/solve")
        .header(header::CONTENT_TYPE, "application/toml")
        .body(Body::from(text))
        .unwrap();
    let (status, raw) = call(&app, req).await;
    assert_eq!(status, StatusCode::OK);
    let raw: Value = serde_json::from_slice(&raw).unwrap();
    assert_eq!(by_name, by_text);
    assert_eq!(by_name, by_object);
    assert_eq!(by_name, raw);
}

#[tokio::test]
async fn validation_errors_match_file_loading() {
    let app = app();
    let store = DataStore::bundled();
    let cases = [
        ("all_coax", "duty_cycle = \"33 %\"", "duty_cycle = 1.5"),
        ("all_coax", "\"14 uW\"", "\"14 dB\""),
        (
            "optical_coax_sc",
            "photodiode_stage = \"Still\"",
            "photodiode_stage = \"CP\"",
        ),
        ("empty", "xld1000s_2xpt420", "missing_fridge"),
    ];
    for (name, from, to) in cases {
        let text = store.scenario_text(name).unwrap().replace(from, to);
        let expected = parse_scenario(&text, &store).unwrap_err();
        let (status, resp) = post(&app, "/solve", json!({"document": text})).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{resp}");
        assert_eq!(resp["error"], "validation");
        assert_eq!(resp["path"], expected.field_path().unwrap(), "{resp}");
    }
}

#[tokio::test]
async fn override_errors_carry_paths() {
    let app = app();
    let (status, resp) = post(
        &app,
        "/solve",
        json!({"scenario": "optical_coax_sc", "overrides": {"optical_power": "50 K"}}),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(resp["path"], "overrides.optical_power");

    let (status, resp) = post(
        &app,
        "/solve",
        json!({"scenario": "optical_coax_sc", "overrides": {"no_such_knob": 1}}),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(resp["error"], "parse");
}

#[tokio::test]
async fn malformed_requests() {
    let app = app();
    let req = Request::post("/solve")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let (status, _) = call(&app, req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, resp) = post(&app, "/solve", json!({})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(resp["error"], "bad_request");

    let (status, resp) = post(&app, "/solve", json!({"scenario": "nope"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND, "{resp}");

    let (status, resp) = post(&app, "/solve", json!({"document": ""})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(resp["error"], "parse");
}

#[tokio::test]
async fn bodies_over_one_mebibyte_are_refused() {
    let app = app();
    let big = format!("{{\"document\": \"{}\"}}", "#".repeat(BODY_LIMIT + 1));
    let req = Request::post("/solve")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(big))
        .unwrap();
    let (status, _) = call(&app, req).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn solver_failure_is_422_with_residuals_field() {
    let app = app();
    let text = DataStore::bundled()
        .scenario_text("all_coax")
        .unwrap()
        .replace("\"14 uW\"", "\"5 W\"");
    let (status, resp) = post(&app, "/solve", json!({"document": text})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{resp}");
    assert_eq!(resp["error"], "solver");
    assert!(resp["residuals"].is_array());
}

#[tokio::test]
async fn scenario_listing() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(DataStore::open(Some(dir.path())).unwrap()));
    let get = || Request::get("/scenarios").body(Body::empty()).unwrap();
    let (status, first) = call(&app, get()).await;
    assert_eq!(status, StatusCode::OK);
    let (_, second) = call(&app, get()).await;
    assert_eq!(first, second);
    let list: Value = serde_json::from_slice(&first).unwrap();
    let names: Vec<&str> = list["scenarios"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    for n in ["all_coax", "optical_coax_normal", "optical_coax_sc"] {
        assert!(names.contains(&n));
    }
    assert!(list["overrides_schema"]["photodiode_stage"].is_object());

    std::fs::create_dir(dir.path().join("scenarios")).unwrap();
    let text = DataStore::bundled().scenario_text("empty").unwrap();
    std::fs::write(dir.path().join("scenarios/added.scenario"), text).unwrap();
    let (_, third) = call(&app, get()).await;
    let list: Value = serde_json::from_slice(&third).unwrap();
    let added = list["scenarios"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| s["name"] == "added")
        .count();
    assert_eq!(added, 1);
}

#[tokio::test]
async fn noise_inference() {
    let app = app();
    let (status, resp) = post(
        &app,
        "/noise/infer",
        json!({"scenario": "experiment", "chain": "feedline", "target": "100 mK", "frequency": "6 GHz"}),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{resp}");
    let t = resp["result"]["outcome"]["source_temperature"]["kelvin"]
        .as_f64()
        .unwrap_or_else(|| panic!("{resp}"));
    assert!((17.0..=31.0).contains(&t), "{t}");
    assert!(!resp["assumption_flags"].as_array().unwrap().is_empty());

    let (status, resp) = post(
        &app,
        "/noise/infer",
        json!({"scenario": "experiment", "chain": "feedline", "target": "1 mK"}),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(resp["floor_temperature"].as_f64().unwrap() > 0.001);
}

#[tokio::test]
async fn zero_db_chain_is_the_identity() {
    let app = app();
    let chain = json!({
        "name": "through",
        "frequency": "6 GHz",
        "items": [{"kind": "element", "label": "thru", "attenuation": "0 dB", "temperature": "10 mK"}],
    });
    let (status, resp) = post(
        &app,
        "/noise/infer",
        json!({"inline": chain, "target": "2 K"}),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{resp}");
    let out = &resp["result"]["outcome"];
    let t = out["source_temperature"]["kelvin"].as_f64().unwrap();
    assert!((t - 2.0).abs() < 1e-9, "{t}");

    let (status, resp) = post(&app, "/noise/infer", json!({"inline": chain})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(resp["path"], "target");
}

#[tokio::test]
async fn compare_endpoint() {
    let app = app();
    let (status, resp) = post(
        &app,
        "/compare",
        json!({"scenarios": [{"scenario": "all_coax"}, {"scenario": "optical_coax_sc"}]}),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{resp}");
    // One row per cooled flange; RT is the fixed boundary and has none.
    assert_eq!(resp["rows"].as_array().unwrap().len(), 5);

    let (status, _) = post(
        &app,
        "/compare",
        json!({"scenarios": [{"scenario": "all_coax"}]}),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn cors_headers_present() {
    let app = app();
    let req = Request::get("/scenarios")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let res = app.oneshot(req).await.unwrap();
    assert!(res
        .headers()
        .contains_key(header::ACCESS_CONTROL_ALLOW_ORIGIN));
}
