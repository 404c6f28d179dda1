use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use citefusion::corpus::Setting;
use citefusion::pipeline::{train_pipeline, PipelineConfig};
use citefusion::service::{results_json, ClassifyRequest, Ensembles, RequestItem};
use citefusion::synth::{generate, SynthConfig};
use citefusion_cli::server::router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const LIMIT: usize = 64 * 1024;

fn ensembles() -> Arc<Ensembles> {
    static CELL: OnceLock<Arc<Ensembles>> = OnceLock::new();
    CELL.get_or_init(|| {
        let data = generate(&SynthConfig {
            size: 600,
            ..Default::default()
        })
        .unwrap();
        let train = |setting| {
            train_pipeline(
                &data,
                &PipelineConfig {
                    setting,
                    seed: 1,
                    ..Default::default()
                },
            )
            .unwrap()
            .bundle
        };
        Arc::new(Ensembles::new(Some(train(Setting::WS)), Some(train(Setting::WoS))).unwrap())
    })
    .clone()
}

fn app() -> Router {
    router(ensembles(), LIMIT)
}

async fn send(req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

fn post(path: &str, body: impl Into<Body>) -> Request<Body> {
    Request::post(path)
        .header(header::CONTENT_TYPE, "application/json")
        .body(body.into())
        .unwrap()
}

fn json_of(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

#[tokio::test]
async fn health_reports_both_bundles() {
    let (status, body) = send(Request::get("/health").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let v = json_of(&body);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["bundles"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn schema_lists_labels_and_iris() {
    let (status, body) = send(Request::get("/schema").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let v = json_of(&body);
    let classes = v["classes"].as_array().unwrap();
    assert_eq!(classes.len(), 3);
    assert_eq!(classes[1]["name"], "Background");
    assert_eq!(classes[1]["cito"], "http://purl.org/spar/cito/obtainsBackgroundFrom");
    assert_eq!(v["max_batch"], 512);
}

#[tokio::test]
async fn classify_single_item_matches_the_library_output() {
    let body = json!({"items": [{"section": "Methods", "context": "We use the tagger of [4]."}]});
    let (status, bytes) = send(post("/classify", body.to_string())).await;
    assert_eq!(status, StatusCode::OK);
    let v = json_of(&bytes);
    let items = v.as_array().unwrap();
    assert_eq!(items.len(), 1);
    let p: f64 = items[0]["probabilities"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((p - 1.0).abs() < 1e-12);

    let request = ClassifyRequest::new(vec![RequestItem::new(Some("Methods"), "We use the tagger of [4].")]);
    let expected = results_json(&ensembles().classify(&request).unwrap()).unwrap();
    assert_eq!(bytes, expected.as_bytes());
}

#[tokio::test]
async fn concurrent_identical_requests_get_identical_bodies() {
    let body = json!({"items": [{"context": "Results agree with 88.2% in (Author et al., 2003)."}], "threshold": 0.5});
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let b = body.to_string();
            tokio::spawn(async move { send(post("/classify", b)).await })
        })
        .collect();
    let mut bodies = Vec::new();
    for h in handles {
        let (status, bytes) = h.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        bodies.push(bytes);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn malformed_requests_get_4xx_without_results() {
    let cases = [
        (post("/classify", "{not json"), StatusCode::BAD_REQUEST),
        (post("/classify", r#"{"items": [{"contxt": "typo"}]}"#), StatusCode::UNPROCESSABLE_ENTITY),
        (post("/classify", r#"{"items": []}"#), StatusCode::BAD_REQUEST),
        (
            post("/classify", r#"{"items": [{"context": "x"}], "threshold": 1.5}"#),
            StatusCode::BAD_REQUEST,
        ),
        (
            Request::post("/classify").body(Body::from(r#"{"items": []}"#)).unwrap(),
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
        ),
    ];
    for (req, want) in cases {
        let (status, bytes) = send(req).await;
        assert_eq!(status, want);
        let v = json_of(&bytes);
        assert!(v["error"].is_string(), "{v}");
        assert!(v.get("items").is_none() && !v.is_array());
    }
    let (status, bytes) = send(post("/classify", r#"{"items": [{"contxt": "typo"}]}"#)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(json_of(&bytes)["error"].as_str().unwrap().contains("contxt"));
}

#[tokio::test]
async fn oversize_batches_and_bodies_are_rejected() {
    let items: Vec<Value> = (0..513).map(|_| json!({"context": "x"})).collect();
    let (status, bytes) = send(post("/classify", json!({ "items": items }).to_string())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(json_of(&bytes)["error"].as_str().unwrap().contains("512"));

    let huge = json!({"items": [{"context": "word ".repeat(LIMIT)}]}).to_string();
    let (status, _) = send(post("/classify", huge)).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn explain_returns_one_report_per_item() {
    let body = json!({
        "items": [
            {"section": "Introduction", "context": "Prior work surveyed this topic (Author et al., 2011)."},
            {"context": "We adopt the toolkit of [9]."}
        ]
    });
    let (status, bytes) = send(post("/explain", body.to_string())).await;
    assert_eq!(status, StatusCode::OK);
    let v = json_of(&bytes);
    let reports = v.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["setting"], "WS");
    assert_eq!(reports[1]["setting"], "WoS");
    for r in reports {
        assert_eq!(r["experts"].as_array().unwrap().len(), 6);
        assert!(r["shapley"]["efficiency_residual"].as_f64().unwrap() < 1e-9);
    }
}

#[tokio::test]
async fn unknown_paths_are_404() {
    let (status, bytes) = send(Request::get("/nope").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(json_of(&bytes)["error"].is_string());
}
