//! Best-effort HTTP providers: OpenFaaS-style gateways and S3-compatible
//! stores, addressed through each resource record's endpoints.

use std::io::Read;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rusty_s3::actions::{ListObjectsV2, S3Action};
use rusty_s3::{Bucket, Credentials, UrlStyle};
use serde::Deserialize;
use serde_json::json;

use super::{
    BackendError, FaasProvider, FunctionDeployment, FunctionStatus, InvokeReply, ObjectStore,
};
use crate::registry::ResourceRecord;

const GATEWAY_USER: &str = "admin";
const SIGN_TTL: Duration = Duration::from_secs(300);

fn http_base(endpoint: &str) -> String {
    if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
        endpoint.trim_end_matches('/').to_string()
    } else {
        format!("http://{}", endpoint.trim_end_matches('/'))
    }
}

fn map_error(target: &ResourceRecord, err: ureq::Error) -> BackendError {
    match err {
        ureq::Error::Status(code, resp) => {
            let body = resp.into_string().unwrap_or_default();
            BackendError::Rejected(format!("status {code}: {}", body.trim()))
        }
        ureq::Error::Transport(_) => BackendError::Unreachable(target.resource_id),
    }
}

/// Talks to `/system/functions` and `/function/{name}` on the resource's
/// gateway with basic authentication.
#[derive(Debug, Clone)]
pub struct OpenFaasProvider {
    agent: ureq::Agent,
}

impl Default for OpenFaasProvider {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct OpenFaasFunction {
    name: String,
    #[serde(default)]
    image: String,
    #[serde(default)]
    invocation_count: f64,
    #[serde(default)]
    replicas: u32,
    #[serde(default)]
    available_replicas: u32,
    #[serde(default)]
    labels: Option<std::collections::BTreeMap<String, String>>,
}

impl OpenFaasProvider {
    pub fn new(timeout: Duration) -> Self {
        OpenFaasProvider {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    fn request(&self, method: &str, target: &ResourceRecord, path: &str) -> ureq::Request {
        let auth = base64::Engine::encode(
            &base64::engine::general_purpose::STANDARD,
            format!("{GATEWAY_USER}:{}", target.pwd),
        );
        self.agent
            .request(method, &format!("{}{path}", http_base(&target.gateway)))
            .set("Authorization", &format!("Basic {auth}"))
    }
}

impl FaasProvider for OpenFaasProvider {
    fn deploy(
        &self,
        target: &ResourceRecord,
        deployment: &FunctionDeployment,
    ) -> Result<(), BackendError> {
        let body = json!({
            "service": deployment.service,
            "image": deployment.image,
            "envProcess": deployment.handler,
            "labels": deployment.labels,
        });
        let update = self
            .request("PUT", target, "/system/functions")
            .send_json(body.clone());
        match update {
            Ok(_) => Ok(()),
            Err(ureq::Error::Status(404, _)) => self
                .request("POST", target, "/system/functions")
                .send_json(body)
                .map(|_| ())
                .map_err(|e| map_error(target, e)),
            Err(e) => Err(map_error(target, e)),
        }
    }

    fn remove(&self, target: &ResourceRecord, service: &str) -> Result<(), BackendError> {
        match self
            .request("DELETE", target, "/system/functions")
            .send_json(json!({ "functionName": service }))
        {
            Ok(_) => Ok(()),
            Err(ureq::Error::Status(404, _)) => Err(BackendError::NoSuchFunction(service.into())),
            Err(e) => Err(map_error(target, e)),
        }
    }

    fn describe(
        &self,
        target: &ResourceRecord,
        service: &str,
    ) -> Result<FunctionStatus, BackendError> {
        let resp = match self
            .request("GET", target, &format!("/system/function/{service}"))
            .call()
        {
            Ok(r) => r,
            Err(ureq::Error::Status(404, _)) => {
                return Err(BackendError::NoSuchFunction(service.into()))
            }
            Err(e) => return Err(map_error(target, e)),
        };
        let f: OpenFaasFunction = resp
            .into_json()
            .map_err(|e| BackendError::Rejected(e.to_string()))?;
        Ok(FunctionStatus {
            status: if f.available_replicas > 0 { "Ready" } else { "NotReady" }.into(),
            url: format!("{}/function/{}", http_base(&target.gateway), f.name),
            name: f.name,
            replicas: f.replicas,
            invocation_count: f.invocation_count as u64,
            image: f.image,
            labels: f.labels.unwrap_or_default(),
        })
    }

    fn invoke(
        &self,
        target: &ResourceRecord,
        service: &str,
        body: &[u8],
    ) -> Result<InvokeReply, BackendError> {
        let started = Instant::now();
        let resp = self
            .request("POST", target, &format!("/function/{service}"))
            .set("content-type", "application/json")
            .send_bytes(body)
            .map_err(|e| map_error(target, e))?;
        let mut out = Vec::new();
        resp.into_reader()
            .read_to_end(&mut out)
            .map_err(|_| BackendError::Unreachable(target.resource_id))?;
        Ok(InvokeReply {
            body: out,
            latency: started.elapsed().as_secs_f64(),
        })
    }
}

/// Path-style S3 requests signed with the resource's access keys.
#[derive(Debug)]
pub struct S3Store {
    agent: ureq::Agent,
    region: String,
    versions: AtomicU64,
}

impl Default for S3Store {
    fn default() -> Self {
        Self::new("us-east-1")
    }
}

impl S3Store {
    pub fn new(region: &str) -> Self {
        S3Store {
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build(),
            region: region.to_string(),
            versions: AtomicU64::new(0),
        }
    }

    fn bucket(&self, target: &ResourceRecord, name: &str) -> Result<(Bucket, Credentials), BackendError> {
        let endpoint = http_base(&target.minio)
            .parse()
            .map_err(|e| BackendError::Rejected(format!("bad store endpoint: {e}")))?;
        let bucket = Bucket::new(endpoint, UrlStyle::Path, name.to_string(), self.region.clone())
            .map_err(|e| BackendError::Rejected(e.to_string()))?;
        let creds = Credentials::new(&target.minio_access_key, &target.minio_secret_key);
        Ok((bucket, creds))
    }

    fn send(
        &self,
        target: &ResourceRecord,
        method: &str,
        url: &url::Url,
        body: Option<&[u8]>,
        bucket: &str,
        object: Option<&str>,
    ) -> Result<ureq::Response, BackendError> {
        let req = self.agent.request_url(method, url);
        let res = match body {
            Some(b) => req.send_bytes(b),
            None => req.call(),
        };
        res.map_err(|e| match e {
            ureq::Error::Status(404, resp) => {
                let text = resp.into_string().unwrap_or_default();
                match object {
                    Some(o) if !text.contains("NoSuchBucket") => {
                        BackendError::NoSuchObject(o.to_string())
                    }
                    _ => BackendError::NoSuchBucket(bucket.to_string()),
                }
            }
            ureq::Error::Status(409, resp) => {
                let text = resp.into_string().unwrap_or_default();
                if text.contains("BucketNotEmpty") {
                    BackendError::BucketNotEmpty(bucket.to_string())
                } else {
                    BackendError::BucketExists(bucket.to_string())
                }
            }
            other => map_error(target, other),
        })
    }
}

impl ObjectStore for S3Store {
    fn make_bucket(&self, target: &ResourceRecord, bucket: &str) -> Result<(), BackendError> {
        let (b, c) = self.bucket(target, bucket)?;
        let url = b.create_bucket(&c).sign(SIGN_TTL);
        self.send(target, "PUT", &url, Some(&[]), bucket, None).map(|_| ())
    }

    fn remove_bucket(&self, target: &ResourceRecord, bucket: &str) -> Result<(), BackendError> {
        let (b, c) = self.bucket(target, bucket)?;
        let url = b.delete_bucket(&c).sign(SIGN_TTL);
        self.send(target, "DELETE", &url, None, bucket, None).map(|_| ())
    }

    fn put_object(
        &self,
        target: &ResourceRecord,
        bucket: &str,
        object: &str,
        data: &[u8],
    ) -> Result<u64, BackendError> {
        let (b, c) = self.bucket(target, bucket)?;
        let url = b.put_object(Some(&c), object).sign(SIGN_TTL);
        self.send(target, "PUT", &url, Some(data), bucket, None)?;
        Ok(self.versions.fetch_add(1, Ordering::SeqCst) + 1)
    }

    fn get_object(
        &self,
        target: &ResourceRecord,
        bucket: &str,
        object: &str,
    ) -> Result<Vec<u8>, BackendError> {
        let (b, c) = self.bucket(target, bucket)?;
        let url = b.get_object(Some(&c), object).sign(SIGN_TTL);
        let resp = self.send(target, "GET", &url, None, bucket, Some(object))?;
        let mut out = Vec::new();
        resp.into_reader()
            .read_to_end(&mut out)
            .map_err(|_| BackendError::Unreachable(target.resource_id))?;
        Ok(out)
    }

    fn list_objects(
        &self,
        target: &ResourceRecord,
        bucket: &str,
    ) -> Result<Vec<String>, BackendError> {
        let (b, c) = self.bucket(target, bucket)?;
        let mut keys = Vec::new();
        let mut token: Option<String> = None;
        loop {
            let mut action = b.list_objects_v2(Some(&c));
            if let Some(t) = &token {
                action.with_continuation_token(t.clone());
            }
            let url = action.sign(SIGN_TTL);
            let text = self
                .send(target, "GET", &url, None, bucket, None)?
                .into_string()
                .map_err(|_| BackendError::Unreachable(target.resource_id))?;
            let page = ListObjectsV2::parse_response(&text)
                .map_err(|e| BackendError::Rejected(e.to_string()))?;
            keys.extend(page.contents.into_iter().map(|o| o.key));
            match page.next_continuation_token {
                Some(t) => token = Some(t),
                None => return Ok(keys),
            }
        }
    }

    fn delete_object(
        &self,
        target: &ResourceRecord,
        bucket: &str,
        object: &str,
    ) -> Result<(), BackendError> {
        let (b, c) = self.bucket(target, bucket)?;
        let head = b.head_object(Some(&c), object).sign(SIGN_TTL);
        self.send(target, "HEAD", &head, None, bucket, Some(object))?;
        let url = b.delete_object(Some(&c), object).sign(SIGN_TTL);
        self.send(target, "DELETE", &url, None, bucket, Some(object)).map(|_| ())
    }
}
