//! Two-phase function placement.
//!
//! Phase one drops resources that violate the function's privacy rule or
//! lack free capacity. Phase two keeps candidates of the requested tier and
//! picks the ones closest (by RTT) to the placement anchors: the input data
//! for `affinitytype: data`, the dependencies' placements for
//! `affinitytype: function`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::appmodel::{AffinityType, FunctionSpec, Reduce};
use crate::metrics::{available, MetricsSnapshot};
use crate::registry::{ResourceId, ResourceRecord, Tier};
use crate::storage::ObjectUrl;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("no resource satisfies the requirements of `{0}`")]
    NoCandidates(String),
    #[error("no {tier} candidate for `{function}`")]
    NoTierCandidates { function: String, tier: Tier },
    #[error("`{0}` has no placement anchors")]
    NoAnchors(String),
    #[error("no candidate of `{function}` is reachable from resource {anchor}")]
    Unreachable { function: String, anchor: ResourceId },
    #[error("unknown scheduling policy `{0}`")]
    UnknownPolicy(String),
}

/// Symmetric round-trip times in milliseconds. Missing pairs are
/// unreachable; the diagonal is zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RttMatrix {
    entries: BTreeMap<(ResourceId, ResourceId), f64>,
}

fn key(a: ResourceId, b: ResourceId) -> (ResourceId, ResourceId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl RttMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on negative or NaN input.
    pub fn set(&mut self, a: ResourceId, b: ResourceId, ms: f64) {
        assert!(ms >= 0.0, "rtt must be non-negative, got {ms}");
        if a != b {
            self.entries.insert(key(a, b), ms);
        }
    }

    pub fn get(&self, a: ResourceId, b: ResourceId) -> f64 {
        if a == b {
            return 0.0;
        }
        self.entries.get(&key(a, b)).copied().unwrap_or(f64::INFINITY)
    }

    pub fn scaled(&self, factor: f64) -> RttMatrix {
        RttMatrix {
            entries: self.entries.iter().map(|(k, v)| (*k, v * factor)).collect(),
        }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (ResourceId, ResourceId, f64)> + '_ {
        self.entries.iter().map(|((a, b), v)| (*a, *b, *v))
    }
}

#[derive(Debug, Clone)]
pub struct PlacementContext {
    pub function: FunctionSpec,
    pub application: String,
    pub data_locations: Vec<ResourceId>,
    /// Dependency function name -> where it runs.
    pub dependency_placements: BTreeMap<String, Vec<ResourceId>>,
    pub rtt: RttMatrix,
    pub tiers: BTreeMap<ResourceId, Tier>,
}

impl PlacementContext {
    pub fn anchors(&self) -> BTreeSet<ResourceId> {
        match self.function.affinity_type {
            AffinityType::Data => self.data_locations.iter().copied().collect(),
            AffinityType::Function => self
                .dependency_placements
                .values()
                .flatten()
                .copied()
                .collect(),
        }
    }
}

pub fn filter_phase_one(
    function: &FunctionSpec,
    resources: &[ResourceRecord],
    snaps: &BTreeMap<ResourceId, MetricsSnapshot>,
    data_locations: &[ResourceId],
) -> Result<Vec<ResourceId>, ScheduleError> {
    let mut out: Vec<ResourceId> = resources
        .iter()
        .filter(|r| {
            if function.privacy
                && !(r.tier() == Some(Tier::Iot) && data_locations.contains(&r.resource_id))
            {
                return false;
            }
            let Some(snap) = snaps.get(&r.resource_id) else {
                return false;
            };
            match available(r, snap) {
                Ok(free) => {
                    free.memory_free >= function.memory_req
                        && free.gpu_free >= f64::from(function.gpu_req)
                        && free.cpu_free > 0.0
                }
                Err(_) => false,
            }
        })
        .map(|r| r.resource_id)
        .collect();
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(ScheduleError::NoCandidates(function.name.clone()));
    }
    Ok(out)
}

/// Lowest cost wins; equal costs go to the smaller id.
fn argmin(costs: impl Iterator<Item = (ResourceId, f64)>) -> Option<(ResourceId, f64)> {
    costs.fold(None, |best, (id, cost)| match best {
        Some((bid, bcost)) if bcost < cost || (bcost == cost && bid < id) => Some((bid, bcost)),
        _ => Some((id, cost)),
    })
}

pub fn place_phase_two(
    ctx: &PlacementContext,
    candidates: &[ResourceId],
) -> Result<Vec<ResourceId>, ScheduleError> {
    let function = &ctx.function;
    let tiered: Vec<ResourceId> = candidates
        .iter()
        .copied()
        .filter(|id| ctx.tiers.get(id) == Some(&function.nodetype))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if tiered.is_empty() {
        return Err(ScheduleError::NoTierCandidates {
            function: function.name.clone(),
            tier: function.nodetype,
        });
    }
    let anchors = ctx.anchors();
    if anchors.is_empty() {
        return Err(ScheduleError::NoAnchors(function.name.clone()));
    }
    let unreachable = |anchor| ScheduleError::Unreachable {
        function: function.name.clone(),
        anchor,
    };

    match function.reduce {
        Reduce::Auto => {
            let mut chosen = BTreeSet::new();
            for &anchor in &anchors {
                let (id, cost) = argmin(tiered.iter().map(|&c| (c, ctx.rtt.get(anchor, c))))
                    .expect("tiered is non-empty");
                if cost.is_infinite() {
                    return Err(unreachable(anchor));
                }
                chosen.insert(id);
            }
            Ok(chosen.into_iter().collect())
        }
        Reduce::One => {
            let (id, cost) = argmin(
                tiered
                    .iter()
                    .map(|&c| (c, anchors.iter().map(|&a| ctx.rtt.get(a, c)).sum::<f64>())),
            )
            .expect("tiered is non-empty");
            if cost.is_infinite() {
                let anchor = anchors
                    .iter()
                    .copied()
                    .find(|&a| ctx.rtt.get(a, id).is_infinite())
                    .unwrap_or(id);
                return Err(unreachable(anchor));
            }
            Ok(vec![id])
        }
    }
}

/// Input to a scheduling policy.
#[derive(Debug, Clone)]
pub struct FunctionCreation {
    pub application: String,
    pub function: FunctionSpec,
    pub data_urls: Vec<ObjectUrl>,
    pub dependency_placements: BTreeMap<String, Vec<ResourceId>>,
}

impl FunctionCreation {
    pub fn data_locations(&self) -> Vec<ResourceId> {
        self.data_urls
            .iter()
            .map(|u| u.resource_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

/// What a policy may look at.
#[derive(Debug, Clone, Default)]
pub struct ClusterView {
    pub resources: Vec<ResourceRecord>,
    /// Resources whose metrics could not be fetched are absent.
    pub snapshots: BTreeMap<ResourceId, MetricsSnapshot>,
    pub rtt: RttMatrix,
}

impl ClusterView {
    pub fn tiers(&self) -> BTreeMap<ResourceId, Tier> {
        self.resources
            .iter()
            .filter_map(|r| Some((r.resource_id, r.tier()?)))
            .collect()
    }
}

/// Placement decision hook. Implementations replace the whole decision.
pub trait SchedulingPolicy: Send + Sync {
    fn name(&self) -> &str;

    fn schedule(
        &self,
        request: &FunctionCreation,
        view: &ClusterView,
    ) -> Result<Vec<ResourceId>, ScheduleError>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct TwoPhasePolicy;

impl SchedulingPolicy for TwoPhasePolicy {
    fn name(&self) -> &str {
        "two-phase"
    }

    fn schedule(
        &self,
        request: &FunctionCreation,
        view: &ClusterView,
    ) -> Result<Vec<ResourceId>, ScheduleError> {
        let data_locations = request.data_locations();
        let candidates = filter_phase_one(
            &request.function,
            &view.resources,
            &view.snapshots,
            &data_locations,
        )?;
        let ctx = PlacementContext {
            function: request.function.clone(),
            application: request.application.clone(),
            data_locations,
            dependency_placements: request.dependency_placements.clone(),
            rtt: view.rtt.clone(),
            tiers: view.tiers(),
        };
        place_phase_two(&ctx, &candidates)
    }
}

/// Single instance on the least CPU-loaded phase-one survivor of the
/// requested tier.
#[derive(Debug, Default, Clone, Copy)]
pub struct LowestLoadPolicy;

impl SchedulingPolicy for LowestLoadPolicy {
    fn name(&self) -> &str {
        "lowest-load"
    }

    fn schedule(
        &self,
        request: &FunctionCreation,
        view: &ClusterView,
    ) -> Result<Vec<ResourceId>, ScheduleError> {
        let candidates = filter_phase_one(
            &request.function,
            &view.resources,
            &view.snapshots,
            &request.data_locations(),
        )?;
        let loads = view.resources.iter().filter_map(|r| {
            if !candidates.contains(&r.resource_id) || r.tier() != Some(request.function.nodetype)
            {
                return None;
            }
            Some((r.resource_id, view.snapshots.get(&r.resource_id)?.cpu_load(r)))
        });
        match argmin(loads) {
            Some((id, _)) => Ok(vec![id]),
            None => Err(ScheduleError::NoTierCandidates {
                function: request.function.name.clone(),
                tier: request.function.nodetype,
            }),
        }
    }
}

/// Always answers the same placement.
#[derive(Debug, Clone)]
pub struct ConstantPolicy(pub Vec<ResourceId>);

impl SchedulingPolicy for ConstantPolicy {
    fn name(&self) -> &str {
        "constant"
    }

    fn schedule(&self, _: &FunctionCreation, _: &ClusterView) -> Result<Vec<ResourceId>, ScheduleError> {
        Ok(self.0.clone())
    }
}

pub fn policy_by_name(name: &str) -> Result<Arc<dyn SchedulingPolicy>, ScheduleError> {
    match name {
        "two-phase" | "default" => Ok(Arc::new(TwoPhasePolicy)),
        "lowest-load" => Ok(Arc::new(LowestLoadPolicy)),
        other => Err(ScheduleError::UnknownPolicy(other.to_string())),
    }
}
