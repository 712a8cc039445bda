//! The six-stage video pipeline driven through the control plane.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{chain_tasks, latency_for_tiers, HarnessError, LatencyBreakdown, LatencyProfile, SimCluster};
use crate::backends::des::{self, Trace};
use crate::backends::{Behavior, SyntheticFunction};
use crate::fixtures::VIDEO_PIPELINE_YAML;
use crate::functions::{self, build_package, InvocationEnvelope, InvocationResult, NamespacedFunction, PackageDescriptor};
use crate::platform::ChainOutcome;
use crate::registry::{ResourceId, Tier};
use crate::storage::PlacementHints;

pub const APPLICATION: &str = "videopipeline";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRun {
    /// Stage -> resources hosting it.
    pub placements: BTreeMap<String, Vec<ResourceId>>,
    /// Tier each stage ran on.
    pub tiers: Vec<Tier>,
    /// Partition point the placements correspond to, if any.
    pub partition: Option<String>,
    /// Closed-form latency of one stream under these placements.
    pub latency: LatencyBreakdown,
    /// Every stream, on the virtual clock.
    pub trace: Trace,
    /// Stage -> number of instance invocations.
    pub invocations: BTreeMap<String, usize>,
}

/// Partition whose tier layout equals `tiers`.
pub fn implied_partition(profile: &LatencyProfile, tiers: &[Tier]) -> Option<String> {
    profile
        .stages
        .iter()
        .find(|s| profile.partition_tiers(&s.name).is_ok_and(|t| t == tiers))
        .map(|s| s.name.clone())
}

fn stage_package(profile: &LatencyProfile, stage: &str) -> Result<Vec<u8>, HarnessError> {
    let compute = profile.stages[profile.stage_index(stage)?].compute.clone();
    let descriptor = PackageDescriptor {
        handler: format!("{stage}.handler"),
        image: Some(format!("edgefaas/{stage}:sim")),
        labels: BTreeMap::new(),
        synthetic: Some(SyntheticFunction {
            behavior: Behavior::Delay,
            compute,
        }),
    };
    Ok(build_package(&descriptor, &[]).map_err(crate::platform::PlatformError::from)?)
}

/// Registers the application, places one camera feed on each of `cameras`,
/// deploys every stage through the scheduler and pushes one frame batch
/// down the chain.
pub fn run_video_pipeline(
    cluster: &SimCluster,
    profile: &LatencyProfile,
    cameras: &[ResourceId],
) -> Result<VideoRun, HarnessError> {
    let plane = &cluster.plane;
    let dag = plane.register_application(VIDEO_PIPELINE_YAML)?;
    let stages: Vec<String> = dag.functions.iter().map(|f| f.name.clone()).collect();
    for s in &stages {
        profile.stage_index(s)?;
    }

    let mut feeds = Vec::new();
    for cam in cameras {
        let bucket = format!("camera-{cam}");
        let hints = PlacementHints {
            generator_resource: Some(*cam),
            ..Default::default()
        };
        plane.create_bucket(APPLICATION, &bucket, &hints)?;
        feeds.push(plane.put_object(APPLICATION, &bucket, "clip-0.h264", b"frames")?);
    }

    let mut placements = BTreeMap::new();
    for s in &stages {
        let data = if dag.entrypoints.contains(s) { feeds.clone() } else { Vec::new() };
        let ids = plane.deploy_function(APPLICATION, s, &stage_package(profile, s)?, &data)?;
        placements.insert(s.clone(), ids);
    }

    let mut invocations = BTreeMap::new();
    let mut frontier: Vec<InvocationResult> = Vec::new();
    for (i, s) in stages.iter().enumerate() {
        if i == 0 {
            frontier = plane.invoke(APPLICATION, s, json!({ "clips": feeds }), false)?;
            invocations.insert(s.clone(), frontier.len());
            continue;
        }
        let prev = &stages[i - 1];
        let mut next = Vec::new();
        for done in &frontier {
            let bucket = format!("{prev}-{}", done.resource_id);
            if !plane.list_buckets(APPLICATION).contains(&bucket) {
                let hints = PlacementHints {
                    generator_resource: Some(done.resource_id),
                    ..Default::default()
                };
                plane.create_bucket(APPLICATION, &bucket, &hints)?;
            }
            let url = plane.put_object(APPLICATION, &bucket, "batch-0", b"stage output")?;
            let env = InvocationEnvelope::new(
                &NamespacedFunction::new(APPLICATION, prev),
                done.resource_id,
                &functions::new_invocation_id(),
                Value::Null,
                true,
            );
            if let ChainOutcome::Invoked { result } = plane.chain_invoke(&env, s, &[url])? {
                next.push(result);
            }
        }
        invocations.insert(s.clone(), next.len());
        frontier = next;
    }

    let topo = cluster.fabric.topology();
    let tier_of = |id: &ResourceId| topo.resource(*id).map(|r| r.tier);
    let tiers: Vec<Tier> = stages
        .iter()
        .map(|s| {
            placements[s]
                .first()
                .and_then(tier_of)
                .ok_or_else(|| HarnessError::Topology(format!("`{s}` has no placement")))
        })
        .collect::<Result<_, _>>()?;
    let latency = latency_for_tiers(profile, &tiers)?;

    let rtt = plane.rtt();
    let mut tasks = Vec::new();
    for &gen in &placements[&stages[0]] {
        let mut path = vec![gen];
        for s in &stages[1..] {
            let from = *path.last().expect("non-empty");
            path.push(functions::route_to(from, &placements[s], &rtt).expect("stage is placed"));
        }
        tasks.extend(chain_tasks(profile, &tiers, &format!("stream{gen}/"), &|i| {
            path.get(i).copied()
        })?);
    }
    let trace = des::run(&tasks)?;

    Ok(VideoRun {
        partition: implied_partition(profile, &tiers),
        placements,
        tiers,
        latency,
        trace,
        invocations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{end_to_end_latency, video_profile};

    #[test]
    fn set_one_placements_and_trace() {
        let cluster = SimCluster::reference();
        let profile = video_profile();
        let cams: Vec<ResourceId> = (0..4).map(ResourceId).collect();
        let run = run_video_pipeline(&cluster, &profile, &cams).unwrap();
        assert_eq!(run.placements["video-generator"], cams);
        assert_eq!(run.placements["video-processing"], vec![ResourceId(8)]);
        assert_eq!(run.placements["motion-detection"], vec![ResourceId(8)]);
        for s in ["face-detection", "face-extraction", "face-recognition"] {
            assert_eq!(run.placements[s], vec![ResourceId(10)]);
        }
        assert_eq!(run.partition.as_deref(), Some("motion-detection"));
        let closed = end_to_end_latency(&profile, "motion-detection").unwrap().total;
        assert!((run.trace.makespan - closed).abs() < 1e-9);
        assert_eq!(run.invocations["video-generator"], 4);
        // Four camera streams fan in to one edge instance.
        assert_eq!(run.invocations["video-processing"], 1);
        assert_eq!(run.invocations["face-recognition"], 1);
    }

    #[test]
    fn implied_partition_rejects_non_monotone_layouts() {
        let p = video_profile();
        let tiers = [Tier::Iot, Tier::Cloud, Tier::Edge, Tier::Cloud, Tier::Cloud, Tier::Cloud];
        assert_eq!(implied_partition(&p, &tiers), None);
    }
}
