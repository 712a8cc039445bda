//! The `edgefaas` operator CLI. Every subcommand except `serve` and
//! `fn package` is one request to a running gateway.

use std::io::Read as _;
use std::path::PathBuf;

use base64::Engine as _;
use clap::{Args, Parser, Subcommand};
use edgefaas_core::functions::{build_package, PackageDescriptor};
use edgefaas_core::registry::ResourceId;
use edgefaas_core::storage::PlacementHints;
use serde_json::Value;

use crate::server::{BucketRequest, DeployRequest, FlRequest, SweepRequest, VideoRequest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "edgefaas", version, about = "Federated FaaS gateway and operator CLI")]
pub struct Cli {
    /// Gateway base URL.
    #[arg(long, global = true, env = "EDGEFAAS_GATEWAY", default_value = "http://127.0.0.1:8080")]
    pub gateway: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the gateway. Configuration comes from EDGEFAAS_CONFIG or --config.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    #[command(subcommand)]
    Resource(ResourceCmd),
    #[command(subcommand)]
    App(AppCmd),
    #[command(subcommand, name = "fn")]
    Function(FnCmd),
    #[command(subcommand)]
    Store(StoreCmd),
    #[command(subcommand)]
    Exp(ExpCmd),
}

#[derive(Debug, Subcommand)]
pub enum ResourceCmd {
    /// Register a resource from a YAML manifest.
    Register { manifest: PathBuf },
    Unregister { id: u32 },
    List,
    Get { id: u32 },
}

#[derive(Debug, Subcommand)]
pub enum AppCmd {
    /// Register an application from its YAML DAG.
    Register { manifest: PathBuf },
    List,
    Get { application: String },
}

#[derive(Debug, Args)]
pub struct InvokeMode {
    /// Wait for the result (default).
    #[arg(long, conflicts_with = "async_")]
    pub sync: bool,
    /// Return an invocation id at once.
    #[arg(long = "async")]
    pub async_: bool,
}

#[derive(Debug, Subcommand)]
pub enum FnCmd {
    /// Schedule and deploy `application.function` from a zip package.
    Deploy {
        function: String,
        package: PathBuf,
        #[arg(long = "data-url")]
        data_urls: Vec<String>,
    },
    Invoke {
        function: String,
        /// Payload; JSON is passed through, anything else as base64.
        #[arg(long, conflicts_with = "file")]
        data: Option<String>,
        #[arg(long)]
        file: Option<PathBuf>,
        #[command(flatten)]
        mode: InvokeMode,
        /// Invoke only the least loaded instance.
        #[arg(long)]
        invoke_one: bool,
    },
    /// Fetch an asynchronous invocation's state.
    Result { invocation_id: String },
    Delete { function: String },
    Get { function: String },
    List { application: String },
    /// Build a package archive from a descriptor and handler files.
    Package {
        descriptor: PathBuf,
        files: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum StoreCmd {
    /// Make a bucket.
    Mb {
        application: String,
        bucket: String,
        /// Resource where the data is produced.
        #[arg(long)]
        generator: Option<u32>,
        /// Expected volume in bytes.
        #[arg(long)]
        volume: Option<u64>,
    },
    /// Remove an empty bucket.
    Rb { application: String, bucket: String },
    Put {
        application: String,
        bucket: String,
        object: String,
        file: PathBuf,
    },
    Get {
        application: String,
        bucket: String,
        object: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    Rm {
        application: String,
        bucket: String,
        object: String,
    },
    /// List buckets, or the objects of one bucket.
    Ls {
        application: String,
        bucket: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ExpCmd {
    /// Deploy and run the video pipeline on the simulated fabric.
    Video {
        #[arg(long, value_delimiter = ',')]
        cameras: Option<Vec<u32>>,
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Run hierarchical federated averaging on the simulated fabric.
    Fl {
        #[arg(long, default_value_t = 1)]
        rounds: usize,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep every partition point of the video pipeline.
    Sweep {
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, value_parser = ["csv", "table", "svg"])]
        format: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

/// Exit code for an HTTP status returned by the gateway.
pub fn exit_code_for_status(status: u16) -> i32 {
    match status {
        200..=299 => EXIT_OK,
        400..=499 => EXIT_VALIDATION,
        _ => EXIT_BACKEND,
    }
}

fn read_file(path: &PathBuf) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn read_text(path: &PathBuf) -> Result<String, CliError> {
    String::from_utf8(read_file(path)?).map_err(|_| CliError::usage(format!("{} is not UTF-8", path.display())))
}

pub struct Client {
    base: String,
    agent: ureq::Agent,
}

pub enum Body {
    Empty,
    Text(String),
    Bytes(Vec<u8>),
    Json(Value),
}

impl Client {
    pub fn new(base: &str) -> Self {
        Client {
            base: base.trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new().build(),
        }
    }

    /// Sends one request and returns the raw response body.
    pub fn send(&self, method: &str, path: &str, body: Body) -> Result<Vec<u8>, CliError> {
        let req = self.agent.request(method, &format!("{}{path}", self.base));
        let outcome = match body {
            Body::Empty => req.call(),
            Body::Text(t) => req.set("content-type", "application/yaml").send_string(&t),
            Body::Bytes(b) => req.set("content-type", "application/octet-stream").send_bytes(&b),
            Body::Json(v) => req.send_json(v),
        };
        match outcome {
            Ok(resp) => {
                let mut buf = Vec::new();
                resp.into_reader()
                    .read_to_end(&mut buf)
                    .map_err(|e| CliError {
                        code: EXIT_BACKEND,
                        message: e.to_string(),
                    })?;
                Ok(buf)
            }
            Err(ureq::Error::Status(code, resp)) => Err(CliError {
                code: exit_code_for_status(code),
                message: format!("{code}: {}", resp.into_string().unwrap_or_default()),
            }),
            Err(e) => Err(CliError {
                code: EXIT_BACKEND,
                message: format!("gateway unreachable: {e}"),
            }),
        }
    }
}

fn pretty(bytes: &[u8]) -> String {
    match serde_json::from_slice::<Value>(bytes) {
        Ok(v) => serde_json::to_string_pretty(&v).unwrap_or_default(),
        Err(_) => String::from_utf8_lossy(bytes).into_owned(),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("request types serialize")
}

/// Runs a client subcommand. Returns what to print on stdout.
pub fn run_client(gateway: &str, command: Command) -> Result<Vec<u8>, CliError> {
    let c = Client::new(gateway);
    let json_out = |b: Vec<u8>| Ok(pretty(&b).into_bytes());
    match command {
        Command::Serve { .. } => Err(CliError::usage("serve is not a client command")),
        Command::Resource(cmd) => match cmd {
            ResourceCmd::Register { manifest } => {
                json_out(c.send("POST", "/system/resources", Body::Text(read_text(&manifest)?))?)
            }
            ResourceCmd::Unregister { id } => {
                c.send("DELETE", &format!("/system/resources/{id}"), Body::Empty)
            }
            ResourceCmd::List => json_out(c.send("GET", "/system/resources", Body::Empty)?),
            ResourceCmd::Get { id } => json_out(c.send("GET", &format!("/system/resources/{id}"), Body::Empty)?),
        },
        Command::App(cmd) => match cmd {
            AppCmd::Register { manifest } => {
                json_out(c.send("POST", "/system/applications", Body::Text(read_text(&manifest)?))?)
            }
            AppCmd::List => json_out(c.send("GET", "/system/applications", Body::Empty)?),
            AppCmd::Get { application } => {
                json_out(c.send("GET", &format!("/system/applications/{application}"), Body::Empty)?)
            }
        },
        Command::Function(cmd) => match cmd {
            FnCmd::Deploy {
                function,
                package,
                data_urls,
            } => {
                let (application, function) = function
                    .rsplit_once('.')
                    .ok_or_else(|| CliError::usage("function must be application.function"))?;
                let data_urls = data_urls
                    .iter()
                    .map(|u| u.parse())
                    .collect::<Result<_, _>>()
                    .map_err(|e| CliError::usage(format!("{e}")))?;
                let req = DeployRequest {
                    application: application.into(),
                    function: function.into(),
                    package: base64::engine::general_purpose::STANDARD.encode(read_file(&package)?),
                    data_urls,
                };
                json_out(c.send("POST", "/system/functions", Body::Json(to_json(&req)))?)
            }
            FnCmd::Invoke {
                function,
                data,
                file,
                mode,
                invoke_one,
            } => {
                let payload = match (data, file) {
                    (Some(d), _) => d.into_bytes(),
                    (None, Some(f)) => read_file(&f)?,
                    (None, None) => Vec::new(),
                };
                let prefix = if mode.async_ { "/async-function" } else { "/function" };
                let query = if invoke_one { "?invoke_one=true" } else { "" };
                json_out(c.send("POST", &format!("{prefix}/{function}{query}"), Body::Bytes(payload))?)
            }
            FnCmd::Result { invocation_id } => {
                json_out(c.send("GET", &format!("/system/invocations/{invocation_id}"), Body::Empty)?)
            }
            FnCmd::Delete { function } => {
                c.send("DELETE", &format!("/system/functions/{function}"), Body::Empty)
            }
            FnCmd::Get { function } => {
                json_out(c.send("GET", &format!("/system/functions/{function}"), Body::Empty)?)
            }
            FnCmd::List { application } => json_out(c.send(
                "GET",
                &format!("/system/functions?application={application}"),
                Body::Empty,
            )?),
            FnCmd::Package {
                descriptor,
                files,
                output,
            } => {
                let desc: PackageDescriptor = serde_yaml::from_str(&read_text(&descriptor)?)
                    .map_err(|e| CliError::usage(format!("descriptor: {e}")))?;
                let mut contents = Vec::new();
                for f in &files {
                    let name = f
                        .file_name()
                        .and_then(|n| n.to_str())
                        .ok_or_else(|| CliError::usage(format!("bad file name {}", f.display())))?;
                    contents.push((name.to_string(), read_file(f)?));
                }
                let borrowed: Vec<(&str, &[u8])> =
                    contents.iter().map(|(n, b)| (n.as_str(), b.as_slice())).collect();
                let zip = build_package(&desc, &borrowed)
                    .map_err(|e| CliError { code: EXIT_VALIDATION, message: e.to_string() })?;
                std::fs::write(&output, zip).map_err(|e| CliError::usage(e.to_string()))?;
                Ok(Vec::new())
            }
        },
        Command::Store(cmd) => match cmd {
            StoreCmd::Mb {
                application,
                bucket,
                generator,
                volume,
            } => {
                let req = BucketRequest {
                    bucket,
                    hints: PlacementHints {
                        generator_resource: generator.map(ResourceId),
                        expected_volume: volume,
                        ..Default::default()
                    },
                };
                json_out(c.send(
                    "POST",
                    &format!("/system/storage/{application}/buckets"),
                    Body::Json(to_json(&req)),
                )?)
            }
            StoreCmd::Rb { application, bucket } => c.send(
                "DELETE",
                &format!("/system/storage/{application}/buckets/{bucket}"),
                Body::Empty,
            ),
            StoreCmd::Put {
                application,
                bucket,
                object,
                file,
            } => json_out(c.send(
                "PUT",
                &format!("/system/storage/{application}/buckets/{bucket}/objects/{object}"),
                Body::Bytes(read_file(&file)?),
            )?),
            StoreCmd::Get {
                application,
                bucket,
                object,
                output,
            } => {
                let bytes = c.send(
                    "GET",
                    &format!("/system/storage/{application}/buckets/{bucket}/objects/{object}"),
                    Body::Empty,
                )?;
                match output {
                    Some(path) => {
                        std::fs::write(&path, bytes).map_err(|e| CliError::usage(e.to_string()))?;
                        Ok(Vec::new())
                    }
                    None => Ok(bytes),
                }
            }
            StoreCmd::Rm {
                application,
                bucket,
                object,
            } => c.send(
                "DELETE",
                &format!("/system/storage/{application}/buckets/{bucket}/objects/{object}"),
                Body::Empty,
            ),
            StoreCmd::Ls { application, bucket } => {
                let path = match bucket {
                    Some(b) => format!("/system/storage/{application}/buckets/{b}/objects"),
                    None => format!("/system/storage/{application}/buckets"),
                };
                json_out(c.send("GET", &path, Body::Empty)?)
            }
        },
        Command::Exp(cmd) => match cmd {
            ExpCmd::Video { cameras, profile } => {
                let req = VideoRequest {
                    cameras: cameras.map(|c| c.into_iter().map(ResourceId).collect()),
                    profile: profile.as_ref().map(read_text).transpose()?,
                };
                json_out(c.send("POST", "/system/experiments/video", Body::Json(to_json(&req)))?)
            }
            ExpCmd::Fl { rounds, dim, seed } => {
                let req = FlRequest {
                    rounds,
                    weight_dim: dim,
                    seed,
                };
                json_out(c.send("POST", "/system/experiments/fl", Body::Json(to_json(&req)))?)
            }
            ExpCmd::Sweep {
                profile,
                format,
                output,
            } => {
                let req = SweepRequest {
                    profile: profile.as_ref().map(read_text).transpose()?,
                    format: format.clone(),
                };
                let body = c.send("POST", "/system/experiments/sweep", Body::Json(to_json(&req)))?;
                let body = if format.is_none() { pretty(&body).into_bytes() } else { body };
                match output {
                    Some(path) => {
                        std::fs::write(&path, body).map_err(|e| CliError::usage(e.to_string()))?;
                        Ok(Vec::new())
                    }
                    None => Ok(body),
                }
            }
        },
    }
}

/// Parses arguments, mapping clap's own exit code onto ours.
pub fn parse<I, T>(args: I) -> Result<Cli, (i32, String)>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(args).map_err(|e| {
        let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        (code, e.render().to_string())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_classes() {
        assert_eq!(exit_code_for_status(201), EXIT_OK);
        assert_eq!(exit_code_for_status(404), EXIT_VALIDATION);
        assert_eq!(exit_code_for_status(422), EXIT_VALIDATION);
        assert_eq!(exit_code_for_status(502), EXIT_BACKEND);
        assert_eq!(exit_code_for_status(503), EXIT_BACKEND);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(parse(["edgefaas", "fn", "explode"]).unwrap_err().0, EXIT_USAGE);
        assert_eq!(parse(["edgefaas", "--help"]).unwrap_err().0, EXIT_OK);
        assert!(parse(["edgefaas", "fn", "invoke", "a.b", "--sync", "--async"]).is_err());
    }

    #[test]
    fn parses_every_group() {
        for args in [
            &["edgefaas", "resource", "list"][..],
            &["edgefaas", "app", "register", "dag.yaml"],
            &["edgefaas", "fn", "invoke", "app.fn", "--async", "--invoke-one"],
            &["edgefaas", "store", "mb", "app", "bucket", "--generator", "3"],
            &["edgefaas", "exp", "sweep", "--format", "svg"],
            &["edgefaas", "--gateway", "http://h:1", "exp", "video", "--cameras", "0,1"],
        ] {
            assert!(parse(args.iter().copied()).is_ok(), "{args:?}");
        }
        assert!(parse(["edgefaas", "exp", "sweep", "--format", "pdf"]).is_err());
    }

    #[test]
    fn unreachable_gateway_is_backend_failure() {
        let cli = parse(["edgefaas", "--gateway", "http://127.0.0.1:9", "resource", "list"]).unwrap();
        let err = run_client(&cli.gateway, cli.command).unwrap_err();
        assert_eq!(err.code, EXIT_BACKEND);
    }
}
