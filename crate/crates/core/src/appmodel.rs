//! Application manifests and their function DAGs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_yaml::{Mapping, Value};
use thiserror::Error;

use crate::registry::{parse_capacity, Tier};
use crate::store::{Mappings, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AffinityType {
    /// Place near the function's input data.
    Data,
    /// Place near where the dependencies run.
    Function,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduce {
    /// A single instance closest to all anchors.
    One,
    /// One instance near each anchor.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    pub dependencies: Vec<String>,
    /// Bytes.
    pub memory_req: u64,
    pub gpu_req: u32,
    /// Restricts execution to the IoT devices holding the input data.
    pub privacy: bool,
    pub nodetype: Tier,
    pub affinity_type: AffinityType,
    pub reduce: Reduce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationDag {
    pub application: String,
    pub entrypoints: Vec<String>,
    /// Functions in manifest order.
    pub functions: Vec<FunctionSpec>,
    pub dag_id: String,
}

#[derive(Debug, Error)]
pub enum AppError {
    #[error("dependency cycle through {0:?}")]
    CycleDetected(Vec<String>),
    #[error("function `{function}` depends on unknown `{dependency}`")]
    UnknownDependency { function: String, dependency: String },
    #[error("application `{0}` is already registered")]
    DuplicateApplication(String),
    #[error("unknown application `{0}`")]
    UnknownApplication(String),
    #[error("bad entrypoint `{0}`: must be a function of the application without dependencies")]
    BadEntrypoint(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl ApplicationDag {
    pub fn function(&self, name: &str) -> Option<&FunctionSpec> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// `(dependency, dependent)` pairs.
    pub fn edges(&self) -> Vec<(String, String)> {
        self.functions
            .iter()
            .flat_map(|f| f.dependencies.iter().map(|d| (d.clone(), f.name.clone())))
            .collect()
    }

    pub fn successors(&self, name: &str) -> Vec<&FunctionSpec> {
        self.functions
            .iter()
            .filter(|f| f.dependencies.iter().any(|d| d == name))
            .collect()
    }

    /// Renders back to a manifest using canonical keys.
    pub fn to_yaml(&self) -> String {
        let mut root = Mapping::new();
        root.insert("application".into(), self.application.clone().into());
        let entry: Value = if self.entrypoints.len() == 1 {
            self.entrypoints[0].clone().into()
        } else {
            Value::Sequence(self.entrypoints.iter().cloned().map(Value::from).collect())
        };
        root.insert("entrypoint".into(), entry);
        let dag = self
            .functions
            .iter()
            .map(|f| {
                let mut node = Mapping::new();
                node.insert("name".into(), f.name.clone().into());
                node.insert(
                    "dependencies".into(),
                    Value::Sequence(f.dependencies.iter().cloned().map(Value::from).collect()),
                );
                let mut req = Mapping::new();
                req.insert("memory".into(), f.memory_req.into());
                req.insert("gpu".into(), f.gpu_req.into());
                req.insert("privacy".into(), u8::from(f.privacy).into());
                node.insert("requirements".into(), Value::Mapping(req));
                let mut aff = Mapping::new();
                aff.insert("nodetype".into(), f.nodetype.as_str().into());
                let at = match f.affinity_type {
                    AffinityType::Data => "data",
                    AffinityType::Function => "function",
                };
                aff.insert("affinitytype".into(), at.into());
                let reduce: Value = match f.reduce {
                    Reduce::One => 1.into(),
                    Reduce::Auto => "auto".into(),
                };
                aff.insert("reduce".into(), reduce);
                node.insert("affinity".into(), Value::Mapping(aff));
                Value::Mapping(node)
            })
            .collect();
        root.insert("dag".into(), Value::Sequence(dag));
        serde_yaml::to_string(&Value::Mapping(root)).expect("mapping serializes")
    }
}

/// Application names double as bucket-name prefixes, so they are restricted
/// to lowercase alphanumerics and interior dots.
pub fn valid_application_name(name: &str) -> bool {
    let bytes = name.as_bytes();
    let alnum = |b: &u8| b.is_ascii_lowercase() || b.is_ascii_digit();
    match bytes {
        [] => false,
        [only] => alnum(only),
        [first, middle @ .., last] => {
            alnum(first) && alnum(last) && middle.iter().all(|b| alnum(b) || *b == b'.')
        }
    }
}

fn valid_function_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn invalid(msg: impl Into<String>) -> AppError {
    AppError::InvalidField(msg.into())
}

fn as_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Scalar, list, or null/absent.
fn name_list(v: Option<&Value>, field: &str) -> Result<Vec<String>, AppError> {
    match v {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Sequence(items)) => items
            .iter()
            .map(|i| as_text(i).ok_or_else(|| invalid(format!("{field}: entries must be names"))))
            .collect(),
        Some(other) => as_text(other)
            .map(|s| vec![s])
            .ok_or_else(|| invalid(format!("{field}: expected a name or list of names"))),
    }
}

fn parse_function(node: &Value) -> Result<FunctionSpec, AppError> {
    let Value::Mapping(node) = node else {
        return Err(invalid("dag entries must be mappings"));
    };
    let name = node
        .get("name")
        .and_then(as_text)
        .ok_or_else(|| invalid("dag entry without a name"))?;
    if !valid_function_name(&name) {
        return Err(invalid(format!("function name `{name}`")));
    }
    let dependencies = name_list(node.get("dependencies"), "dependencies")?;

    let (memory_req, gpu_req, privacy) = match node.get("requirements") {
        None | Some(Value::Null) => (0, 0, false),
        Some(Value::Mapping(req)) => {
            let memory = match req.get("memory") {
                None | Some(Value::Null) => 0,
                Some(Value::Number(n)) => n
                    .as_u64()
                    .ok_or_else(|| invalid(format!("{name}: memory must be non-negative")))?,
                Some(Value::String(s)) => parse_capacity(s)
                    .ok_or_else(|| invalid(format!("{name}: bad memory `{s}`")))?,
                Some(_) => return Err(invalid(format!("{name}: bad memory"))),
            };
            let gpu = match req.get("gpu") {
                None | Some(Value::Null) => 0,
                Some(v) => as_text(v)
                    .and_then(|s| s.parse::<u32>().ok())
                    .ok_or_else(|| invalid(format!("{name}: gpu must be a non-negative integer")))?,
            };
            let privacy = match req.get("privacy") {
                None | Some(Value::Null) => false,
                Some(Value::Bool(b)) => *b,
                Some(v) => match as_text(v).as_deref() {
                    Some("0") => false,
                    Some("1") => true,
                    _ => return Err(invalid(format!("{name}: privacy must be 0 or 1"))),
                },
            };
            (memory, gpu, privacy)
        }
        Some(_) => return Err(invalid(format!("{name}: requirements must be a mapping"))),
    };

    let Some(Value::Mapping(aff)) = node.get("affinity") else {
        return Err(invalid(format!("{name}: affinity block is required")));
    };
    let nodetype = aff
        .get("nodetype")
        .and_then(as_text)
        .and_then(|s| Tier::from_label(&s))
        .ok_or_else(|| invalid(format!("{name}: nodetype must be iot, edge or cloud")))?;
    let parse_at = |key: &str| -> Result<Option<AffinityType>, AppError> {
        match aff.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => match as_text(v).map(|s| s.to_ascii_lowercase()).as_deref() {
                Some("data") => Ok(Some(AffinityType::Data)),
                Some("function") => Ok(Some(AffinityType::Function)),
                _ => Err(invalid(format!("{name}: {key} must be data or function"))),
            },
        }
    };
    let affinity_type = match (parse_at("affinitytype")?, parse_at("nodelocation")?) {
        (Some(a), Some(b)) if a != b => {
            return Err(invalid(format!(
                "{name}: affinitytype and nodelocation disagree"
            )))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err(invalid(format!("{name}: affinitytype is required"))),
    };
    let reduce = match aff.get("reduce").and_then(as_text) {
        Some(s) if s == "1" => Reduce::One,
        Some(s) if s.eq_ignore_ascii_case("auto") => Reduce::Auto,
        _ => return Err(invalid(format!("{name}: reduce must be 1 or auto"))),
    };

    if privacy && nodetype != Tier::Iot {
        return Err(invalid(format!("{name}: privacy requires nodetype iot")));
    }
    if affinity_type == AffinityType::Function && dependencies.is_empty() {
        return Err(invalid(format!(
            "{name}: affinitytype function needs at least one dependency"
        )));
    }

    Ok(FunctionSpec {
        name,
        dependencies,
        memory_req,
        gpu_req,
        privacy,
        nodetype,
        affinity_type,
        reduce,
    })
}

/// Parses and validates a manifest. The returned DAG has an empty `dag_id`
/// until it is registered.
pub fn parse_application(document: &str) -> Result<ApplicationDag, AppError> {
    let root: Value =
        serde_yaml::from_str(document).map_err(|e| invalid(format!("invalid YAML: {e}")))?;
    let Value::Mapping(root) = root else {
        return Err(invalid("manifest must be a mapping"));
    };
    let application = root
        .get("application")
        .and_then(as_text)
        .ok_or_else(|| invalid("application name is required"))?;
    if !valid_application_name(&application) {
        return Err(invalid(format!(
            "application name `{application}` must be lowercase alphanumerics and dots"
        )));
    }
    let entrypoints = name_list(root.get("entrypoint"), "entrypoint")?;
    if entrypoints.is_empty() {
        return Err(invalid("at least one entrypoint is required"));
    }
    let Some(Value::Sequence(nodes)) = root.get("dag") else {
        return Err(invalid("dag must be a list"));
    };
    let functions = nodes
        .iter()
        .map(parse_function)
        .collect::<Result<Vec<_>, _>>()?;

    let mut seen = BTreeSet::new();
    for f in &functions {
        if !seen.insert(f.name.as_str()) {
            return Err(invalid(format!("duplicate function `{}`", f.name)));
        }
    }
    for f in &functions {
        for d in &f.dependencies {
            if !seen.contains(d.as_str()) {
                return Err(AppError::UnknownDependency {
                    function: f.name.clone(),
                    dependency: d.clone(),
                });
            }
        }
    }
    let dag = ApplicationDag {
        application,
        entrypoints,
        functions,
        dag_id: String::new(),
    };
    for e in &dag.entrypoints {
        match dag.function(e) {
            Some(f) if f.dependencies.is_empty() => {}
            _ => return Err(AppError::BadEntrypoint(e.clone())),
        }
    }
    if let Err(stuck) = kahn(&dag) {
        return Err(AppError::CycleDetected(stuck));
    }
    Ok(dag)
}

/// Kahn's algorithm with a lexicographic ready set. On a cycle, returns the
/// nodes that could never be scheduled.
fn kahn(dag: &ApplicationDag) -> Result<Vec<String>, Vec<String>> {
    let mut indegree: BTreeMap<&str, usize> = dag
        .functions
        .iter()
        .map(|f| (f.name.as_str(), f.dependencies.len()))
        .collect();
    let mut ready: BTreeSet<&str> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(n, _)| *n)
        .collect();
    let mut order = Vec::with_capacity(dag.functions.len());
    while let Some(next) = ready.pop_first() {
        order.push(next.to_string());
        for succ in dag.successors(next) {
            let d = indegree.get_mut(succ.name.as_str()).expect("known node");
            *d -= succ.dependencies.iter().filter(|x| *x == next).count();
            if *d == 0 {
                ready.insert(succ.name.as_str());
            }
        }
    }
    if order.len() == dag.functions.len() {
        Ok(order)
    } else {
        let done: BTreeSet<&str> = order.iter().map(String::as_str).collect();
        Err(indegree
            .keys()
            .filter(|n| !done.contains(*n))
            .map(|n| n.to_string())
            .collect())
    }
}

/// Dependencies before dependents; ties by name.
pub fn topo_order(dag: &ApplicationDag) -> Vec<String> {
    kahn(dag).expect("registered DAGs are acyclic")
}

/// Stores a parsed DAG under a fresh id.
pub fn register_application(
    maps: &mut Mappings,
    mut dag: ApplicationDag,
) -> Result<ApplicationDag, AppError> {
    let existing = &maps.snapshot().dag_store;
    if existing.contains_key(&dag.application) {
        return Err(AppError::DuplicateApplication(dag.application));
    }
    let next = existing
        .values()
        .filter_map(|d| d.dag_id.strip_prefix("dag-")?.parse::<u64>().ok())
        .max()
        .map_or(1, |m| m + 1);
    dag.dag_id = format!("dag-{next:04}");
    let stored = dag.clone();
    maps.update_dags(|m| {
        m.insert(stored.application.clone(), stored);
    })?;
    Ok(dag)
}
