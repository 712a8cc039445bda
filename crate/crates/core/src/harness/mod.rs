//! Latency cost model for the video pipeline, partition sweeps, and
//! end-to-end runs of both bundled applications on the simulated fabric.
//!
//! A partition at stage `p` keeps the first stage on its IoT device, runs
//! stages `1..=p` on the edge and everything after `p` on the cloud. The
//! final output is always delivered to the cloud, so partitioning at the
//! first stage is the cloud-only path and at the last stage the edge-only
//! path.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::des::{self, DesError, SimTask, Trace};
use crate::backends::sim::{FabricTopology, SimFabric};
use crate::fixtures;
use crate::metrics::SimMetrics;
use crate::platform::{Backends, ControlPlane, PlatformConfig, PlatformError};
use crate::store::MemoryKv;
use crate::registry::{ResourceId, Tier};

pub mod fl;
pub mod report;
pub mod video;

pub const VIDEO_STAGES: [&str; 6] = [
    "video-generator",
    "video-processing",
    "motion-detection",
    "face-detection",
    "face-extraction",
    "face-recognition",
];

/// Committed calibration of the video pipeline.
pub const VIDEO_PROFILE_YAML: &str = include_str!("../../fixtures/video-profile.yaml");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown stage `{0}`")]
    UnknownStage(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error(transparent)]
    Des(#[from] DesError),
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("malformed report: {0}")]
    MalformedReport(String),
    #[error("unusable topology: {0}")]
    Topology(String),
}

/// A control plane wired to a fresh simulated fabric, with every fabric
/// resource registered under its fabric id.
#[derive(Clone)]
pub struct SimCluster {
    pub plane: Arc<ControlPlane>,
    pub fabric: SimFabric,
    pub metrics: SimMetrics,
}

impl SimCluster {
    pub fn new(topology: FabricTopology) -> Result<Self, HarnessError> {
        let fabric = SimFabric::new(topology);
        let metrics = SimMetrics::new();
        let plane = ControlPlane::open(
            Arc::new(MemoryKv::default()),
            Backends::sim(&fabric, &metrics),
            PlatformConfig::default(),
        )?;
        for r in &fabric.topology().resources {
            let reg = plane.register_manifest(r.manifest())?;
            if reg.resource_id != r.id {
                return Err(HarnessError::Topology(format!(
                    "fabric ids must run 0..n, resource {} registered as {}",
                    r.id, reg.resource_id
                )));
            }
        }
        plane.set_rtt(fabric.topology().rtt_ms.clone());
        Ok(SimCluster {
            plane: Arc::new(plane),
            fabric,
            metrics,
        })
    }

    pub fn reference() -> Self {
        Self::new(fixtures::reference_topology()).expect("bundled topology registers")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageProfile {
    pub name: String,
    /// Bytes written by the stage.
    pub output_size: u64,
    /// Seconds of compute per tier.
    pub compute: BTreeMap<Tier, f64>,
    /// Seconds to ship the output from the stage's location to the edge.
    pub upload_to_edge: f64,
    /// Seconds to ship the output from the stage's location to the cloud.
    pub upload_to_cloud: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub stages: Vec<StageProfile>,
}

impl LatencyProfile {
    pub fn from_yaml(text: &str) -> Result<Self, HarnessError> {
        let p: LatencyProfile =
            serde_yaml::from_str(text).map_err(|e| HarnessError::InvalidProfile(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("profile serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidProfile(m));
        if self.stages.is_empty() {
            return bad("no stages".into());
        }
        for (i, s) in self.stages.iter().enumerate() {
            let values = s.compute.values().chain([&s.upload_to_edge, &s.upload_to_cloud]);
            if values.into_iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return bad(format!("stage `{}` has a negative or non-finite entry", s.name));
            }
            let needed: &[Tier] = if i == 0 { &[Tier::Iot] } else { &[Tier::Edge, Tier::Cloud] };
            if let Some(t) = needed.iter().find(|t| !s.compute.contains_key(t)) {
                return bad(format!("stage `{}` has no {t} compute entry", s.name));
            }
            if self.stages[..i].iter().any(|o| o.name == s.name) {
                return bad(format!("stage `{}` appears twice", s.name));
            }
        }
        Ok(())
    }

    pub fn stage_index(&self, name: &str) -> Result<usize, HarnessError> {
        self.stages
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| HarnessError::UnknownStage(name.to_string()))
    }

    /// Tier of every stage when partitioning at `partition`.
    pub fn partition_tiers(&self, partition: &str) -> Result<Vec<Tier>, HarnessError> {
        let p = self.stage_index(partition)?;
        Ok((0..self.stages.len())
            .map(|i| match i {
                0 => Tier::Iot,
                i if i <= p => Tier::Edge,
                _ => Tier::Cloud,
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeTerm {
    pub stage: String,
    pub tier: Tier,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferTerm {
    /// Stage whose output moves.
    pub stage: String,
    pub to: Tier,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub compute: Vec<ComputeTerm>,
    pub transfer: Vec<TransferTerm>,
    pub total: f64,
}

impl LatencyBreakdown {
    pub fn compute_seconds(&self) -> f64 {
        self.compute.iter().map(|c| c.seconds).sum()
    }

    pub fn transfer_seconds(&self) -> f64 {
        self.transfer.iter().map(|t| t.seconds).sum()
    }
}

fn upload(stage: &StageProfile, to: Tier) -> f64 {
    match to {
        Tier::Cloud => stage.upload_to_cloud,
        _ => stage.upload_to_edge,
    }
}

/// Closed-form latency of one input flowing through the stages on the
/// given tiers.
pub fn latency_for_tiers(
    profile: &LatencyProfile,
    tiers: &[Tier],
) -> Result<LatencyBreakdown, HarnessError> {
    if tiers.len() != profile.stages.len() {
        return Err(HarnessError::InvalidProfile(format!(
            "{} tiers for {} stages",
            tiers.len(),
            profile.stages.len()
        )));
    }
    let mut out = LatencyBreakdown {
        compute: Vec::new(),
        transfer: Vec::new(),
        total: 0.0,
    };
    for (i, (stage, &tier)) in profile.stages.iter().zip(tiers).enumerate() {
        let seconds = *stage.compute.get(&tier).ok_or_else(|| {
            HarnessError::InvalidProfile(format!("stage `{}` has no {tier} compute entry", stage.name))
        })?;
        out.total += seconds;
        out.compute.push(ComputeTerm {
            stage: stage.name.clone(),
            tier,
            seconds,
        });
        let next = tiers.get(i + 1).copied().unwrap_or(Tier::Cloud);
        if next != tier {
            let seconds = upload(stage, next);
            out.total += seconds;
            out.transfer.push(TransferTerm {
                stage: stage.name.clone(),
                to: next,
                seconds,
            });
        }
    }
    Ok(out)
}

pub fn end_to_end_latency(
    profile: &LatencyProfile,
    partition: &str,
) -> Result<LatencyBreakdown, HarnessError> {
    latency_for_tiers(profile, &profile.partition_tiers(partition)?)
}

/// Discrete-event tasks for one input: compute and transfer steps in a
/// chain, each waiting on the previous one.
pub fn chain_tasks(
    profile: &LatencyProfile,
    tiers: &[Tier],
    prefix: &str,
    resources: &dyn Fn(usize) -> Option<ResourceId>,
) -> Result<Vec<SimTask>, HarnessError> {
    let breakdown = latency_for_tiers(profile, tiers)?;
    let mut tasks: Vec<SimTask> = Vec::new();
    let mut transfers = breakdown.transfer.iter().peekable();
    for (i, c) in breakdown.compute.iter().enumerate() {
        let mut task = SimTask::new(format!("{prefix}{}", c.stage), c.seconds)
            .label(format!("compute {}", c.stage));
        if let Some(r) = resources(i) {
            task = task.on(r);
        }
        if let Some(prev) = tasks.last() {
            task = task.after([prev.id.clone()]);
        }
        tasks.push(task);
        if let Some(t) = transfers.next_if(|t| t.stage == c.stage) {
            let prev = tasks.last().expect("just pushed").id.clone();
            tasks.push(
                SimTask::new(format!("{prefix}{}->{}", t.stage, t.to), t.seconds)
                    .label(format!("transfer {} to {}", t.stage, t.to))
                    .after([prev]),
            );
        }
    }
    Ok(tasks)
}

/// Runs one input through the discrete-event engine.
pub fn trace_partition(profile: &LatencyProfile, partition: &str) -> Result<Trace, HarnessError> {
    let tiers = profile.partition_tiers(partition)?;
    Ok(des::run(&chain_tasks(profile, &tiers, "", &|_| None)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionRow {
    pub partition: String,
    pub compute_seconds: f64,
    pub transfer_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub rows: Vec<PartitionRow>,
    /// Cheapest partition; the earliest stage wins ties.
    pub argmin: Option<String>,
}

impl PartitionReport {
    pub fn row(&self, partition: &str) -> Option<&PartitionRow> {
        self.rows.iter().find(|r| r.partition == partition)
    }

    pub fn best(&self) -> Option<&PartitionRow> {
        self.row(self.argmin.as_deref()?)
    }
}

pub fn sweep_partitions(profile: &LatencyProfile) -> Result<PartitionReport, HarnessError> {
    let mut report = PartitionReport::default();
    let mut best: Option<(f64, String)> = None;
    for stage in &profile.stages {
        let b = end_to_end_latency(profile, &stage.name)?;
        if best.as_ref().is_none_or(|(t, _)| b.total < *t) {
            best = Some((b.total, stage.name.clone()));
        }
        report.rows.push(PartitionRow {
            partition: stage.name.clone(),
            compute_seconds: b.compute_seconds(),
            transfer_seconds: b.transfer_seconds(),
            total_seconds: b.total,
        });
    }
    report.argmin = best.map(|(_, s)| s);
    Ok(report)
}

/// Latency anchors the calibration reproduces.
pub mod anchors {
    pub const VIDEO_BYTES: u64 = 92_000_000;
    pub const UPLOAD_CLOUD_S: f64 = 92.7;
    pub const UPLOAD_EDGE_S: f64 = 8.5;
    pub const CLOUD_ONLY_S: f64 = 96.7;
    pub const EDGE_ONLY_S: f64 = 12.1;
    pub const BEST_S: f64 = 11.5;
    pub const FACE_DETECTION_CLOUD_S: f64 = 0.113;
    pub const FACE_DETECTION_EDGE_S: f64 = 0.433;
}

/// Solves the video profile from the anchors and the evaluation topology.
///
/// Upload times come from the links between IoT device 0, its edge server 8
/// and the cloud 10. Face detection uses the measured compute times; face
/// extraction and recognition, video processing and the chosen edge compute
/// split are fixed, and the remaining three unknowns are solved so that the
/// cloud-only, edge-only and motion-detection totals land on their anchors.
pub fn calibrated_profile(topology: &FabricTopology) -> LatencyProfile {
    use anchors::*;
    let (iot, edge, cloud) = (ResourceId(0), ResourceId(8), ResourceId(10));
    let t = |bytes, a, b| topology.transfer_time(bytes, a, b).expect("reference links");
    let sizes: [u64; 6] = [VIDEO_BYTES, 6_000_000, 200_000, 100_000, 20_000, 1_000];

    let (e_vp, e_fd, e_fe) = (1.6, FACE_DETECTION_EDGE_S, 0.2);
    let (c_vp, c_fd, c_fe, c_fr) = (2.4, FACE_DETECTION_CLOUD_S, 0.05, 0.25);
    let up_edge_gen = t(sizes[0], iot, edge);
    let up_cloud_gen = t(sizes[0], iot, cloud);
    let up_cloud: Vec<f64> = sizes.iter().map(|&b| t(b, edge, cloud)).collect();

    // Cloud only: gen upload + all cloud compute.
    let c_md = CLOUD_ONLY_S - up_cloud_gen - c_vp - c_fd - c_fe - c_fr;
    // Motion detection: edge gen upload + vp, md on edge + md upload + face stages on cloud.
    let e_md = BEST_S - up_edge_gen - e_vp - up_cloud[2] - c_fd - c_fe - c_fr;
    // Edge only: everything on edge + final upload.
    let e_fr = EDGE_ONLY_S - up_edge_gen - e_vp - e_md - e_fd - e_fe - up_cloud[5];

    let compute = [
        vec![(Tier::Iot, 0.0)],
        vec![(Tier::Edge, e_vp), (Tier::Cloud, c_vp)],
        vec![(Tier::Edge, e_md), (Tier::Cloud, c_md)],
        vec![(Tier::Edge, e_fd), (Tier::Cloud, c_fd)],
        vec![(Tier::Edge, e_fe), (Tier::Cloud, c_fe)],
        vec![(Tier::Edge, e_fr), (Tier::Cloud, c_fr)],
    ];
    let stages = VIDEO_STAGES
        .iter()
        .enumerate()
        .map(|(i, name)| StageProfile {
            name: name.to_string(),
            output_size: sizes[i],
            compute: compute[i].iter().copied().collect(),
            upload_to_edge: if i == 0 { up_edge_gen } else { 0.0 },
            upload_to_cloud: if i == 0 { up_cloud_gen } else { up_cloud[i] },
        })
        .collect();
    LatencyProfile { stages }
}

/// The committed calibration.
pub fn video_profile() -> LatencyProfile {
    LatencyProfile::from_yaml(VIDEO_PROFILE_YAML).expect("bundled profile is valid")
}
