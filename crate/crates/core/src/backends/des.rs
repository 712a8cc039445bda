//! Discrete-event execution over a virtual clock.
//!
//! Tasks occupy no shared capacity; a task starts once every task it waits
//! on has completed and finishes `duration` seconds later.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::ResourceId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTask {
    pub id: String,
    pub label: String,
    pub resource: Option<ResourceId>,
    pub duration: f64,
    #[serde(default)]
    pub after: Vec<String>,
}

impl SimTask {
    pub fn new(id: impl Into<String>, duration: f64) -> Self {
        let id = id.into();
        SimTask {
            label: id.clone(),
            id,
            resource: None,
            duration,
            after: Vec::new(),
        }
    }

    pub fn on(mut self, resource: ResourceId) -> Self {
        self.resource = Some(resource);
        self
    }

    pub fn label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn after(mut self, deps: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.after.extend(deps.into_iter().map(Into::into));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub id: String,
    pub label: String,
    pub resource: Option<ResourceId>,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Ordered by completion time, then by submission order.
    pub events: Vec<TraceEvent>,
    pub makespan: f64,
}

impl Trace {
    pub fn event(&self, id: &str) -> Option<&TraceEvent> {
        self.events.iter().find(|e| e.id == id)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesError {
    #[error("task `{task}` waits on unknown task `{missing}`")]
    UnknownDependency { task: String, missing: String },
    #[error("tasks {0:?} wait on each other")]
    Cycle(Vec<String>),
    #[error("task `{0}` has a negative or non-finite duration")]
    BadDuration(String),
    #[error("task id `{0}` is used twice")]
    DuplicateId(String),
}

#[derive(Debug, PartialEq)]
struct Completion {
    at: f64,
    seq: usize,
}

impl Eq for Completion {}

impl Ord for Completion {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (time, submission order).
        other
            .at
            .total_cmp(&self.at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Completion {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Runs `tasks` to completion. Identical inputs give identical traces.
pub fn run(tasks: &[SimTask]) -> Result<Trace, DesError> {
    let mut index = BTreeMap::new();
    for (i, t) in tasks.iter().enumerate() {
        if !(t.duration >= 0.0 && t.duration.is_finite()) {
            return Err(DesError::BadDuration(t.id.clone()));
        }
        if index.insert(t.id.as_str(), i).is_some() {
            return Err(DesError::DuplicateId(t.id.clone()));
        }
    }
    let mut waiting = vec![0usize; tasks.len()];
    let mut dependents = vec![Vec::new(); tasks.len()];
    for (i, t) in tasks.iter().enumerate() {
        for dep in &t.after {
            let &j = index.get(dep.as_str()).ok_or_else(|| DesError::UnknownDependency {
                task: t.id.clone(),
                missing: dep.clone(),
            })?;
            waiting[i] += 1;
            dependents[j].push(i);
        }
    }

    let mut ready_at = vec![0.0f64; tasks.len()];
    let mut start = vec![0.0f64; tasks.len()];
    let mut heap = BinaryHeap::new();
    for (i, t) in tasks.iter().enumerate() {
        if waiting[i] == 0 {
            heap.push(Completion { at: t.duration, seq: i });
        }
    }
    let mut trace = Trace::default();
    while let Some(Completion { at, seq }) = heap.pop() {
        let t = &tasks[seq];
        trace.events.push(TraceEvent {
            id: t.id.clone(),
            label: t.label.clone(),
            resource: t.resource,
            start: start[seq],
            end: at,
        });
        trace.makespan = trace.makespan.max(at);
        for &d in &dependents[seq] {
            ready_at[d] = ready_at[d].max(at);
            waiting[d] -= 1;
            if waiting[d] == 0 {
                start[d] = ready_at[d];
                heap.push(Completion {
                    at: ready_at[d] + tasks[d].duration,
                    seq: d,
                });
            }
        }
    }
    if trace.events.len() < tasks.len() {
        let stuck = tasks
            .iter()
            .enumerate()
            .filter(|(i, _)| waiting[*i] > 0)
            .map(|(_, t)| t.id.clone())
            .collect();
        return Err(DesError::Cycle(stuck));
    }
    Ok(trace)
}
