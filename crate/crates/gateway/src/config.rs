//! Gateway configuration, loaded from the YAML file named by `EDGEFAAS_CONFIG`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use edgefaas_core::backends::http::{OpenFaasProvider, S3Store};
use edgefaas_core::backends::sim::{FabricTopology, SimFabric};
use edgefaas_core::fixtures;
use edgefaas_core::metrics::{PromQueries, PrometheusMetrics, SimMetrics};
use edgefaas_core::platform::{secs, Backends, ControlPlane, PlatformConfig};
use edgefaas_core::store::{FileKv, HttpKv, KvBackend, MemoryKv};
use serde::{Deserialize, Serialize};

pub const CONFIG_ENV: &str = "EDGEFAAS_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    #[serde(default)]
    pub store: StoreConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(flatten)]
    pub platform: PlatformConfig,
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            listen: default_listen(),
            store: StoreConfig::default(),
            backend: BackendConfig::default(),
            platform: PlatformConfig::default(),
        }
    }
}

/// Where the mappings live.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StoreConfig {
    #[default]
    Memory,
    Dir { path: PathBuf },
    Http { url: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    /// In-process simulated fabric. Without a topology file the bundled
    /// eleven-resource fabric is used.
    Sim {
        #[serde(default)]
        topology: Option<PathBuf>,
        /// Register the fabric's resources when the registry is empty.
        #[serde(default = "yes")]
        register: bool,
    },
    /// Real OpenFaaS gateways, S3-compatible stores and Prometheus.
    Http {
        #[serde(default = "default_timeout", with = "secs")]
        timeout: Duration,
        #[serde(default = "default_region")]
        region: String,
        #[serde(default)]
        queries: PromQueries,
        /// Topology file read only for its RTT matrix.
        #[serde(default)]
        topology: Option<PathBuf>,
    },
}

fn yes() -> bool {
    true
}

fn default_timeout() -> Duration {
    Duration::from_secs(30)
}

fn default_region() -> String {
    "us-east-1".into()
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Sim {
            topology: None,
            register: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Platform(#[from] edgefaas_core::platform::PlatformError),
}

impl GatewayConfig {
    pub fn from_yaml(text: &str) -> Result<Self, ConfigError> {
        serde_yaml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_yaml(&read(path)?)
    }

    /// The file named by `EDGEFAAS_CONFIG`, or defaults when unset.
    pub fn from_env() -> Result<Self, ConfigError> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) => Self::load(Path::new(&p)),
            None => Ok(Self::default()),
        }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn topology(path: Option<&Path>) -> Result<FabricTopology, ConfigError> {
    match path {
        Some(p) => FabricTopology::from_yaml(&read(p)?).map_err(ConfigError::Invalid),
        None => Ok(fixtures::reference_topology()),
    }
}

/// A control plane plus, for the simulated backend, the fabric behind it.
pub struct Runtime {
    pub plane: Arc<ControlPlane>,
    pub fabric: Option<SimFabric>,
}

impl Runtime {
    pub fn build(config: &GatewayConfig) -> Result<Self, ConfigError> {
        let kv: Arc<dyn KvBackend> = match &config.store {
            StoreConfig::Memory => Arc::new(MemoryKv::default()),
            StoreConfig::Dir { path } => Arc::new(
                FileKv::new(path).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            ),
            StoreConfig::Http { url } => Arc::new(HttpKv::new(url)),
        };
        match &config.backend {
            BackendConfig::Sim { topology: path, register } => {
                let fabric = SimFabric::new(topology(path.as_deref())?);
                Self::with_fabric(kv, fabric, config.platform.clone(), *register)
            }
            BackendConfig::Http {
                timeout,
                region,
                queries,
                topology: path,
            } => {
                let backends = Backends {
                    faas: Arc::new(OpenFaasProvider::new(*timeout)),
                    objects: Arc::new(S3Store::new(region)),
                    metrics: Arc::new(PrometheusMetrics::new(queries.clone())),
                };
                let plane = ControlPlane::open(kv, backends, config.platform.clone())?;
                if path.is_some() {
                    plane.set_rtt(topology(path.as_deref())?.rtt_ms);
                }
                Ok(Runtime {
                    plane: Arc::new(plane),
                    fabric: None,
                })
            }
        }
    }

    /// A plane over `fabric`. Clones of one fabric share state, so planes
    /// built over the same fabric and store see the same cluster.
    pub fn with_fabric(
        kv: Arc<dyn KvBackend>,
        fabric: SimFabric,
        platform: PlatformConfig,
        register: bool,
    ) -> Result<Self, ConfigError> {
        let plane = ControlPlane::open(kv, Backends::sim(&fabric, &SimMetrics::new()), platform)?;
        if register && plane.degraded().is_none() && plane.list_resources().is_empty() {
            for r in &fabric.topology().resources {
                plane.register_manifest(r.manifest())?;
            }
        }
        plane.set_rtt(fabric.topology().rtt_ms.clone());
        Ok(Runtime {
            plane: Arc::new(plane),
            fabric: Some(fabric),
        })
    }
}
