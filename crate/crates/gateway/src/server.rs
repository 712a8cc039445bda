//! REST routes over the control plane.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post, put};
use axum::{Json, Router};
use base64::Engine as _;
use edgefaas_core::functions::{self, InvocationEnvelope, NamespacedFunction};
use edgefaas_core::harness::{
    self, fl, report, video, HarnessError, LatencyProfile, SimCluster,
};
use edgefaas_core::platform::{ControlPlane, ErrorClass, PlatformError};
use edgefaas_core::registry::ResourceId;
use edgefaas_core::storage::{self, ObjectUrl, PlacementHints, StorageError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

/// Every route: method, path template, operation served.
pub const ROUTES: &[(&str, &str, &str)] = &[
    ("POST", "/system/resources", "register_resource"),
    ("GET", "/system/resources", "list_resources"),
    ("GET", "/system/resources/{id}", "get_resource"),
    ("DELETE", "/system/resources/{id}", "unregister_resource"),
    ("POST", "/system/applications", "register_application"),
    ("GET", "/system/applications", "list_applications"),
    ("GET", "/system/applications/{app}", "get_application"),
    ("POST", "/system/functions", "deploy_function"),
    ("GET", "/system/functions", "list_functions"),
    ("GET", "/system/functions/{name}", "get_function"),
    ("DELETE", "/system/functions/{name}", "delete_function"),
    ("POST", "/system/chain", "chain_invoke"),
    ("POST", "/function/{name}", "invoke_function"),
    ("POST", "/async-function/{name}", "invoke_async"),
    ("GET", "/system/invocations/{id}", "invocation_result"),
    ("POST", "/system/storage/{app}/buckets", "create_bucket"),
    ("GET", "/system/storage/{app}/buckets", "list_buckets"),
    ("DELETE", "/system/storage/{app}/buckets/{bucket}", "delete_bucket"),
    ("GET", "/system/storage/{app}/buckets/{bucket}/objects", "list_objects"),
    ("PUT", "/system/storage/{app}/buckets/{bucket}/objects/{object}", "put_object"),
    ("GET", "/system/storage/{app}/buckets/{bucket}/objects/{object}", "get_object"),
    ("DELETE", "/system/storage/{app}/buckets/{bucket}/objects/{object}", "delete_object"),
    ("POST", "/system/experiments/video", "run_video_pipeline"),
    ("POST", "/system/experiments/fl", "run_federated_learning"),
    ("POST", "/system/experiments/sweep", "sweep_partitions"),
];

type Plane = Arc<ControlPlane>;

pub fn router(plane: Plane) -> Router {
    Router::new()
        .route("/system/resources", post(register_resource).get(list_resources))
        .route("/system/resources/{id}", get(get_resource).delete(unregister_resource))
        .route("/system/applications", post(register_application).get(list_applications))
        .route("/system/applications/{app}", get(get_application))
        .route("/system/functions", post(deploy_function).get(list_functions))
        .route("/system/functions/{name}", get(get_function).delete(delete_function))
        .route("/system/chain", post(chain_invoke))
        .route("/function/{name}", post(invoke_function))
        .route("/async-function/{name}", post(invoke_async))
        .route("/system/invocations/{id}", get(invocation_result))
        .route("/system/storage/{app}/buckets", post(create_bucket).get(list_buckets))
        .route("/system/storage/{app}/buckets/{bucket}", delete(delete_bucket))
        .route("/system/storage/{app}/buckets/{bucket}/objects", get(list_objects))
        .route(
            "/system/storage/{app}/buckets/{bucket}/objects/{object}",
            put(put_object).get(get_object).delete(delete_object),
        )
        .route("/system/experiments/video", post(run_video))
        .route("/system/experiments/fl", post(run_fl))
        .route("/system/experiments/sweep", post(run_sweep))
        .fallback(unknown_route)
        .layer(axum::middleware::from_fn(log_request))
        .with_state(plane)
}

async fn log_request(
    req: axum::extract::Request,
    next: axum::middleware::Next,
) -> Response {
    let (method, path) = (req.method().clone(), req.uri().path().to_string());
    let response = next.run(req).await;
    tracing::info!(%method, %path, status = response.status().as_u16(), "request");
    response
}

async fn unknown_route() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "unknown route")
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    failed: Vec<ResourceId>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            failed: Vec::new(),
        }
    }

    fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

pub fn status_of(class: ErrorClass) -> StatusCode {
    match class {
        ErrorClass::NotFound => StatusCode::NOT_FOUND,
        ErrorClass::Conflict => StatusCode::CONFLICT,
        ErrorClass::Validation => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorClass::Backend => StatusCode::BAD_GATEWAY,
        ErrorClass::Unavailable => StatusCode::SERVICE_UNAVAILABLE,
    }
}

impl From<PlatformError> for ApiError {
    fn from(e: PlatformError) -> Self {
        ApiError {
            status: status_of(e.class()),
            message: e.to_string(),
            failed: e.failed_resources(),
        }
    }
}

impl From<HarnessError> for ApiError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Platform(p) => p.into(),
            HarnessError::Io(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
            other => Self::validation(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if !self.failed.is_empty() {
            body["failed_resources"] = json!(self.failed);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Removes every registered credential from `text`.
fn scrub(plane: &ControlPlane, mut text: String) -> String {
    for record in plane.snapshot().resource_mapping.values() {
        for secret in record.secrets() {
            if !secret.is_empty() {
                text = text.replace(secret, "***");
            }
        }
    }
    text
}

/// Runs blocking control-plane work off the async executor.
async fn blocking<T, F>(plane: &Plane, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&ControlPlane) -> ApiResult<T> + Send + 'static,
{
    let p = Arc::clone(plane);
    let outcome = tokio::task::spawn_blocking(move || f(&p))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    outcome.map_err(|mut e| {
        e.message = scrub(plane, e.message);
        e
    })
}

fn text(body: &Bytes) -> ApiResult<&str> {
    std::str::from_utf8(body).map_err(|_| ApiError::validation("body is not UTF-8"))
}

fn json_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let body: &[u8] = if body.is_empty() { b"{}" } else { body };
    serde_json::from_slice(body).map_err(|e| ApiError::validation(format!("invalid request body: {e}")))
}

fn qualified(name: &str) -> ApiResult<NamespacedFunction> {
    NamespacedFunction::parse(name)
        .ok_or_else(|| ApiError::validation(format!("`{name}` is not of the form application.function")))
}

// Registry

async fn register_resource(State(plane): State<Plane>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let doc = text(&body)?.to_string();
    let reg = blocking(&plane, move |p| Ok(p.register_resource(&doc)?)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "resource_id": reg.resource_id }))))
}

async fn list_resources(State(plane): State<Plane>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&plane, |p| Ok(p.list_resources())).await?))
}

async fn get_resource(State(plane): State<Plane>, Path(id): Path<u32>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&plane, move |p| Ok(p.get_resource(ResourceId(id))?)).await?))
}

async fn unregister_resource(State(plane): State<Plane>, Path(id): Path<u32>) -> ApiResult<impl IntoResponse> {
    blocking(&plane, move |p| Ok(p.unregister_resource(ResourceId(id))?)).await?;
    Ok(StatusCode::NO_CONTENT)
}

// Applications

async fn register_application(State(plane): State<Plane>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let doc = text(&body)?.to_string();
    let dag = blocking(&plane, move |p| Ok(p.register_application(&doc)?)).await?;
    Ok((StatusCode::CREATED, Json(dag)))
}

async fn list_applications(State(plane): State<Plane>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&plane, |p| Ok(p.list_applications())).await?))
}

async fn get_application(State(plane): State<Plane>, Path(app): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&plane, move |p| Ok(p.get_application(&app)?)).await?))
}

// Functions

#[derive(Debug, Serialize, Deserialize)]
pub struct DeployRequest {
    pub application: String,
    pub function: String,
    /// Base64 of the zip archive.
    pub package: String,
    #[serde(default)]
    pub data_urls: Vec<ObjectUrl>,
}

async fn deploy_function(State(plane): State<Plane>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: DeployRequest = json_body(&body)?;
    let package = base64::engine::general_purpose::STANDARD
        .decode(req.package.trim())
        .map_err(|e| ApiError::validation(format!("package is not base64: {e}")))?;
    let qualified = NamespacedFunction::new(&req.application, &req.function).qualified();
    let ids = blocking(&plane, move |p| {
        Ok(p.deploy_function(&req.application, &req.function, &package, &req.data_urls)?)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(json!({ "function": qualified, "resources": ids }))))
}

#[derive(Debug, Deserialize)]
struct AppQuery {
    application: String,
}

async fn list_functions(State(plane): State<Plane>, Query(q): Query<AppQuery>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&plane, move |p| Ok(p.list_functions(&q.application)?)).await?))
}

async fn get_function(State(plane): State<Plane>, Path(name): Path<String>) -> ApiResult<impl IntoResponse> {
    let f = qualified(&name)?;
    Ok(Json(blocking(&plane, move |p| Ok(p.get_function(&f.application, &f.function)?)).await?))
}

async fn delete_function(State(plane): State<Plane>, Path(name): Path<String>) -> ApiResult<impl IntoResponse> {
    let f = qualified(&name)?;
    blocking(&plane, move |p| Ok(p.delete_function(&f.application, &f.function)?)).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Default, Deserialize)]
struct InvokeQuery {
    #[serde(default)]
    invoke_one: bool,
}

async fn invoke_function(
    State(plane): State<Plane>,
    Path(name): Path<String>,
    Query(q): Query<InvokeQuery>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let f = qualified(&name)?;
    let payload = functions::payload_from_bytes(&body);
    let results = blocking(&plane, move |p| {
        Ok(p.invoke(&f.application, &f.function, payload, q.invoke_one)?)
    })
    .await?;
    Ok(Json(results))
}

async fn invoke_async(
    State(plane): State<Plane>,
    Path(name): Path<String>,
    Query(q): Query<InvokeQuery>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let f = qualified(&name)?;
    let payload = functions::payload_from_bytes(&body);
    let shared = Arc::clone(&plane);
    let id = blocking(&plane, move |_| {
        Ok(shared.invoke_async(&f.application, &f.function, payload, q.invoke_one)?)
    })
    .await?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "invocation_id": id }))))
}

async fn invocation_result(State(plane): State<Plane>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&plane, move |p| Ok(p.invocation_result(&id)?)).await?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ChainRequest {
    pub envelope: InvocationEnvelope,
    pub next: String,
    #[serde(default)]
    pub outputs: Vec<ObjectUrl>,
}

async fn chain_invoke(State(plane): State<Plane>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: ChainRequest = json_body(&body)?;
    let outcome = blocking(&plane, move |p| Ok(p.chain_invoke(&req.envelope, &req.next, &req.outputs)?)).await?;
    Ok(Json(outcome))
}

// Storage

#[derive(Debug, Serialize, Deserialize)]
pub struct BucketRequest {
    pub bucket: String,
    #[serde(default)]
    pub hints: PlacementHints,
}

async fn create_bucket(
    State(plane): State<Plane>,
    Path(app): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let req: BucketRequest = json_body(&body)?;
    let bucket = req.bucket.clone();
    let id = blocking(&plane, move |p| Ok(p.create_bucket(&app, &req.bucket, &req.hints)?)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "bucket": bucket, "resource_id": id }))))
}

async fn list_buckets(State(plane): State<Plane>, Path(app): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&plane, move |p| Ok(p.list_buckets(&app))).await?))
}

async fn delete_bucket(
    State(plane): State<Plane>,
    Path((app, bucket)): Path<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    blocking(&plane, move |p| Ok(p.delete_bucket(&app, &bucket)?)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn list_objects(
    State(plane): State<Plane>,
    Path((app, bucket)): Path<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&plane, move |p| Ok(p.list_objects(&app, &bucket)?)).await?))
}

async fn put_object(
    State(plane): State<Plane>,
    Path((app, bucket, object)): Path<(String, String, String)>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let url = blocking(&plane, move |p| Ok(p.put_object(&app, &bucket, &object, &body)?)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "url": url }))))
}

async fn get_object(
    State(plane): State<Plane>,
    Path((app, bucket, object)): Path<(String, String, String)>,
) -> ApiResult<impl IntoResponse> {
    let bytes = blocking(&plane, move |p| {
        let ns = storage::namespaced_bucket(&app, &bucket);
        let rid = *p
            .snapshot()
            .bucket_map
            .get(&ns)
            .ok_or(PlatformError::Storage(StorageError::UnknownBucket(bucket.clone())))?;
        let url = ObjectUrl::new(&app, &bucket, rid, &object);
        Ok(p.get_object(&url.to_string())?)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes))
}

async fn delete_object(
    State(plane): State<Plane>,
    Path((app, bucket, object)): Path<(String, String, String)>,
) -> ApiResult<impl IntoResponse> {
    blocking(&plane, move |p| Ok(p.delete_object(&app, &bucket, &object)?)).await?;
    Ok(StatusCode::NO_CONTENT)
}

// Experiments. Each run gets a fresh simulated cluster, so results do not
// depend on the gateway's own state.

fn profile_or_default(yaml: Option<&str>) -> ApiResult<LatencyProfile> {
    match yaml {
        Some(text) => Ok(LatencyProfile::from_yaml(text)?),
        None => Ok(harness::video_profile()),
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct VideoRequest {
    #[serde(default)]
    pub cameras: Option<Vec<ResourceId>>,
    /// Latency profile YAML; the bundled calibration when absent.
    #[serde(default)]
    pub profile: Option<String>,
}

async fn run_video(State(plane): State<Plane>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: VideoRequest = json_body(&body)?;
    let run = blocking(&plane, move |_| {
        let profile = profile_or_default(req.profile.as_deref())?;
        let cameras = req.cameras.unwrap_or_else(|| (0..4).map(ResourceId).collect());
        Ok(video::run_video_pipeline(&SimCluster::reference(), &profile, &cameras)?)
    })
    .await?;
    Ok(Json(run))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FlRequest {
    #[serde(default = "one")]
    pub rounds: usize,
    #[serde(default = "eight")]
    pub weight_dim: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

fn eight() -> usize {
    8
}

async fn run_fl(State(plane): State<Plane>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: FlRequest = json_body(&body)?;
    if req.rounds == 0 || req.weight_dim == 0 {
        return Err(ApiError::validation("rounds and weight_dim must be positive"));
    }
    let run = blocking(&plane, move |_| {
        Ok(fl::run_federated_learning(&SimCluster::reference(), req.rounds, req.weight_dim, req.seed)?)
    })
    .await?;
    Ok(Json(run))
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct SweepRequest {
    #[serde(default)]
    pub profile: Option<String>,
    /// `csv`, `table` or `svg`; JSON when absent.
    #[serde(default)]
    pub format: Option<String>,
}

async fn run_sweep(State(plane): State<Plane>, body: Bytes) -> ApiResult<Response> {
    let req: SweepRequest = json_body(&body)?;
    let format = req
        .format
        .as_deref()
        .map(str::parse::<report::ReportFormat>)
        .transpose()?;
    let sweep = blocking(&plane, move |_| {
        let profile = profile_or_default(req.profile.as_deref())?;
        Ok(harness::sweep_partitions(&profile)?)
    })
    .await?;
    Ok(match format {
        None => Json(sweep).into_response(),
        Some(f) => {
            let content_type = match f {
                report::ReportFormat::Csv => "text/csv",
                report::ReportFormat::Table => "text/plain",
                report::ReportFormat::Svg => "image/svg+xml",
            };
            ([(header::CONTENT_TYPE, content_type)], report::render(&sweep, f)).into_response()
        }
    })
}

/// Placeholder values for a route template, used by tests and the CLI help.
pub fn sample_path(template: &str) -> String {
    template
        .replace("{id}", "0")
        .replace("{app}", "app")
        .replace("{name}", "app.fn")
        .replace("{bucket}", "bucket")
        .replace("{object}", "object")
}
