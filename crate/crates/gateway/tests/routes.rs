use std::collections::BTreeSet;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use base64::Engine as _;
use edgefaas_core::backends::sim::SimFabric;
use edgefaas_core::backends::SyntheticFunction;
use edgefaas_core::fixtures;
use edgefaas_core::functions::{build_package, PackageDescriptor};
use edgefaas_core::platform::PlatformConfig;
use edgefaas_core::registry::ResourceId;
use edgefaas_core::store::{FileKv, KvBackend, MemoryKv};
use edgefaas_gateway::config::Runtime;
use edgefaas_gateway::server::{router, sample_path, ROUTES};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Reply {
    status: StatusCode,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|_| {
            panic!("not json: {}", String::from_utf8_lossy(&self.body))
        })
    }
}

async fn call(app: &Router, method: Method, path: &str, body: impl Into<Body>) -> Reply {
    let req = Request::builder()
        .method(method)
        .uri(path)
        .body(body.into())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, body }
}

fn sim_app(kv: Arc<dyn KvBackend>, fabric: &SimFabric, register: bool) -> Router {
    let rt = Runtime::with_fabric(kv, fabric.clone(), PlatformConfig::default(), register).unwrap();
    router(rt.plane)
}

fn fresh(register: bool) -> (Router, SimFabric) {
    let fabric = SimFabric::new(fixtures::reference_topology());
    (sim_app(Arc::new(MemoryKv::default()), &fabric, register), fabric)
}

fn echo_package() -> String {
    let desc = PackageDescriptor {
        handler: "handler.py".into(),
        image: None,
        labels: Default::default(),
        synthetic: Some(SyntheticFunction::echo()),
    };
    base64::engine::general_purpose::STANDARD.encode(build_package(&desc, &[]).unwrap())
}

/// Registers the video pipeline, a camera bucket on resource 0 and deploys
/// the generator there.
async fn deploy_generator(app: &Router) -> Value {
    let r = call(app, Method::POST, "/system/applications", fixtures::VIDEO_PIPELINE_YAML).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let r = call(
        app,
        Method::POST,
        "/system/storage/videopipeline/buckets",
        json!({"bucket": "camera-0", "hints": {"generator_resource": 0}}).to_string(),
    )
    .await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&r.body));
    let r = call(
        app,
        Method::PUT,
        "/system/storage/videopipeline/buckets/camera-0/objects/clip.h264",
        "frames",
    )
    .await;
    assert_eq!(r.status, StatusCode::CREATED);
    let url = r.json()["url"].clone();
    let r = call(
        app,
        Method::POST,
        "/system/functions",
        json!({
            "application": "videopipeline",
            "function": "video-generator",
            "package": echo_package(),
            "data_urls": [url],
        })
        .to_string(),
    )
    .await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&r.body));
    r.json()
}

#[tokio::test]
async fn sample_registration_gets_id_zero() {
    let (app, _) = fresh(false);
    let r = call(&app, Method::POST, "/system/resources", fixtures::SAMPLE_RESOURCE_YAML).await;
    assert_eq!(r.status, StatusCode::CREATED);
    assert_eq!(r.json(), json!({"resource_id": 0}));

    let r = call(&app, Method::GET, "/system/resources", Body::empty()).await;
    assert_eq!(r.status, StatusCode::OK);
    let text = String::from_utf8(r.body).unwrap();
    assert!(!text.contains("s2TshbDfGi"));
    assert!(!text.contains("minioadmin"));
    assert!(text.contains("10.107.30.249:8080"));

    let again = call(&app, Method::POST, "/system/resources", fixtures::SAMPLE_RESOURCE_YAML).await;
    assert_eq!(again.status, StatusCode::CONFLICT);
    let bad = call(&app, Method::POST, "/system/resources", "name: cloud\n").await;
    assert_eq!(bad.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn sync_invoke_returns_results() {
    let (app, _) = fresh(true);
    let deployed = deploy_generator(&app).await;
    assert_eq!(deployed["resources"], json!([0]));
    let r = call(
        &app,
        Method::POST,
        "/function/videopipeline.video-generator",
        r#"{"frame": 1}"#,
    )
    .await;
    assert_eq!(r.status, StatusCode::OK);
    let results = r.json();
    assert_eq!(results[0]["resource_id"], json!(0));
    assert_eq!(results[0]["output"], json!({"frame": 1}));

    let f = call(&app, Method::GET, "/system/functions/videopipeline.video-generator", Body::empty()).await;
    assert_eq!(f.status, StatusCode::OK);
    let text = String::from_utf8(f.body).unwrap();
    assert!(text.contains("/function/videopipeline.video-generator"));
    assert!(!text.contains("sim-0:8080"));
}

#[tokio::test]
async fn async_invoke_completes() {
    let (app, _) = fresh(true);
    deploy_generator(&app).await;
    let r = call(&app, Method::POST, "/async-function/videopipeline.video-generator", "{}").await;
    assert_eq!(r.status, StatusCode::ACCEPTED);
    let id = r.json()["invocation_id"].as_str().unwrap().to_string();
    let mut state = Value::Null;
    for _ in 0..200 {
        state = call(&app, Method::GET, &format!("/system/invocations/{id}"), Body::empty())
            .await
            .json();
        if state["state"] != "pending" {
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(5)).await;
    }
    assert_eq!(state["state"], "done");
    let missing = call(&app, Method::GET, "/system/invocations/nope", Body::empty()).await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn status_mapping() {
    let (app, fabric) = fresh(true);
    let r = call(&app, Method::GET, "/system/applications/ghost", Body::empty()).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_ne!(r.json()["error"], "unknown route");

    let r = call(&app, Method::GET, "/no/such/route", Body::empty()).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.json()["error"], "unknown route");

    deploy_generator(&app).await;
    let dup = call(
        &app,
        Method::POST,
        "/system/storage/videopipeline/buckets",
        json!({"bucket": "camera-0"}).to_string(),
    )
    .await;
    assert_eq!(dup.status, StatusCode::CONFLICT);
    let busy = call(&app, Method::DELETE, "/system/resources/0", Body::empty()).await;
    assert_eq!(busy.status, StatusCode::CONFLICT);
    let bad = call(&app, Method::POST, "/system/functions/x", Body::empty()).await;
    assert_eq!(bad.status, StatusCode::METHOD_NOT_ALLOWED);
    let malformed = call(&app, Method::GET, "/system/functions/nodot", Body::empty()).await;
    assert_eq!(malformed.status, StatusCode::UNPROCESSABLE_ENTITY);

    fabric.set_online(ResourceId(0), false);
    let r = call(&app, Method::POST, "/function/videopipeline.video-generator", "{}").await;
    assert_eq!(r.status, StatusCode::BAD_GATEWAY);
    assert_eq!(r.json()["failed_resources"], json!([0]));
}

#[tokio::test]
async fn object_round_trip_and_listing() {
    let (app, _) = fresh(true);
    deploy_generator(&app).await;
    let base = "/system/storage/videopipeline/buckets/camera-0/objects";
    let payload: Vec<u8> = (0..=255u8).cycle().take(70_000).collect();
    let r = call(&app, Method::PUT, &format!("{base}/blob"), payload.clone()).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let r = call(&app, Method::GET, &format!("{base}/blob"), Body::empty()).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.body, payload);
    let r = call(&app, Method::GET, base, Body::empty()).await;
    assert_eq!(r.json(), json!(["blob", "clip.h264"]));
    for o in ["blob", "clip.h264"] {
        let r = call(&app, Method::DELETE, &format!("{base}/{o}"), Body::empty()).await;
        assert_eq!(r.status, StatusCode::NO_CONTENT);
    }
    let r = call(&app, Method::GET, &format!("{base}/blob"), Body::empty()).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn experiments() {
    let (app, _) = fresh(false);
    let r = call(&app, Method::POST, "/system/experiments/sweep", json!({"format": "csv"}).to_string()).await;
    assert_eq!(r.status, StatusCode::OK);
    let csv = String::from_utf8(r.body).unwrap();
    assert_eq!(csv.lines().count(), 7);

    let r = call(&app, Method::POST, "/system/experiments/sweep", Body::empty()).await;
    assert_eq!(r.json()["argmin"], "motion-detection");

    let r = call(&app, Method::POST, "/system/experiments/video", Body::empty()).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["partition"], "motion-detection");

    let r = call(&app, Method::POST, "/system/experiments/fl", json!({"rounds": 2, "weight_dim": 4}).to_string()).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["placements"]["firstaggregation"], json!([8, 9]));

    let r = call(&app, Method::POST, "/system/experiments/sweep", json!({"format": "pdf"}).to_string()).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn every_operation_has_exactly_one_route() {
    let expected: BTreeSet<&str> = [
        "register_resource",
        "unregister_resource",
        "list_resources",
        "get_resource",
        "register_application",
        "list_applications",
        "get_application",
        "deploy_function",
        "delete_function",
        "get_function",
        "list_functions",
        "invoke_function",
        "invoke_async",
        "invocation_result",
        "chain_invoke",
        "create_bucket",
        "delete_bucket",
        "list_buckets",
        "put_object",
        "get_object",
        "delete_object",
        "list_objects",
        "run_video_pipeline",
        "run_federated_learning",
        "sweep_partitions",
    ]
    .into();
    let ops: Vec<&str> = ROUTES.iter().map(|r| r.2).collect();
    assert_eq!(ops.len(), expected.len(), "an operation is routed twice");
    assert_eq!(ops.iter().copied().collect::<BTreeSet<_>>(), expected);
    let keys: BTreeSet<(&str, &str)> = ROUTES.iter().map(|r| (r.0, r.1)).collect();
    assert_eq!(keys.len(), ROUTES.len());

    let (app, _) = fresh(false);
    for (method, template, op) in ROUTES {
        let path = sample_path(template);
        let r = call(&app, method.parse().unwrap(), &path, Body::empty()).await;
        assert_ne!(r.status, StatusCode::METHOD_NOT_ALLOWED, "{op}: {method} {path}");
        if r.status == StatusCode::NOT_FOUND {
            assert_ne!(r.json()["error"], "unknown route", "{op}: {method} {path}");
        }
    }
}

/// Drives a broad set of requests and checks no body carries a credential.
#[tokio::test]
async fn credentials_never_leak() {
    let fabric = SimFabric::new(fixtures::reference_topology());
    let app = sim_app(Arc::new(MemoryKv::default()), &fabric, true);
    let secrets: Vec<String> = fabric
        .topology()
        .resources
        .iter()
        .flat_map(|r| {
            let m = r.manifest();
            [m.pwd, m.minio_access_key, m.minio_secret_key]
        })
        .collect();
    let mut bodies = Vec::new();
    deploy_generator(&app).await;
    for (method, path, body) in [
        ("GET", "/system/resources".to_string(), String::new()),
        ("GET", "/system/resources/3".into(), String::new()),
        ("GET", "/system/applications".into(), String::new()),
        ("GET", "/system/functions?application=videopipeline".into(), String::new()),
        ("GET", "/system/functions/videopipeline.video-generator".into(), String::new()),
        ("POST", "/function/videopipeline.video-generator".into(), "{}".into()),
        ("DELETE", "/system/resources/0".into(), String::new()),
        ("POST", "/system/resources".into(), "name: edge\ngateway: sim-1:8080\npwd: gw-secret-1\n".into()),
        ("GET", "/system/storage/videopipeline/buckets".into(), String::new()),
    ] {
        bodies.push(call(&app, method.parse().unwrap(), &path, body).await.body);
    }
    fabric.set_online(ResourceId(0), false);
    bodies.push(call(&app, Method::POST, "/function/videopipeline.video-generator", "{}").await.body);
    for body in &bodies {
        let text = String::from_utf8_lossy(body);
        for s in &secrets {
            assert!(!text.contains(s.as_str()), "{s} leaked in {text}");
        }
    }
}

#[tokio::test]
async fn restart_recovers_mappings() {
    let dir = tempfile::tempdir().unwrap();
    let fabric = SimFabric::new(fixtures::reference_topology());
    {
        let app = sim_app(Arc::new(FileKv::new(dir.path()).unwrap()), &fabric, true);
        deploy_generator(&app).await;
    }
    let app = sim_app(Arc::new(FileKv::new(dir.path()).unwrap()), &fabric, true);
    let r = call(&app, Method::GET, "/system/resources", Body::empty()).await;
    assert_eq!(r.json().as_array().unwrap().len(), 11);
    let r = call(&app, Method::POST, "/function/videopipeline.video-generator", "{}").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()[0]["resource_id"], json!(0));
    let r = call(
        &app,
        Method::GET,
        "/system/storage/videopipeline/buckets/camera-0/objects/clip.h264",
        Body::empty(),
    )
    .await;
    assert_eq!(r.body, b"frames");
}

#[tokio::test]
async fn empty_store_restart_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let fabric = SimFabric::new(fixtures::reference_topology());
    let app = sim_app(Arc::new(FileKv::new(dir.path()).unwrap()), &fabric, false);
    let r = call(&app, Method::GET, "/system/resources", Body::empty()).await;
    assert_eq!(r.json(), json!([]));
    let r = call(&app, Method::GET, "/system/applications", Body::empty()).await;
    assert_eq!(r.json(), json!([]));
}

#[tokio::test]
async fn corrupt_store_refuses_writes() {
    let kv = Arc::new(MemoryKv::default());
    kv.set_raw(edgefaas_core::store::RESOURCE_MAPPING, "{not json");
    let fabric = SimFabric::new(fixtures::reference_topology());
    let app = sim_app(kv, &fabric, true);
    let r = call(&app, Method::GET, "/system/resources", Body::empty()).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json(), json!([]));
    let r = call(&app, Method::POST, "/system/resources", fixtures::SAMPLE_RESOURCE_YAML).await;
    assert_eq!(r.status, StatusCode::SERVICE_UNAVAILABLE);
}
