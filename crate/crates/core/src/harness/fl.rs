//! Two-level federated averaging driven through the control plane.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{HarnessError, SimCluster};
use crate::aggregation::WeightedVector;
use crate::backends::des::{self, SimTask, Trace};
use crate::backends::{Behavior, SyntheticFunction};
use crate::fixtures::FEDERATED_LEARNING_YAML;
use crate::functions::{self, build_package, InvocationEnvelope, NamespacedFunction, PackageDescriptor};
use crate::platform::{ChainOutcome, PlatformError};
use crate::registry::ResourceId;
use crate::storage::PlacementHints;

pub const APPLICATION: &str = "federatedlearning";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlRun {
    pub placements: BTreeMap<String, Vec<ResourceId>>,
    /// Output of the last round's second-level aggregation.
    pub final_weights: Vec<f64>,
    /// Plain mean of the last round's worker vectors.
    pub global_mean: Vec<f64>,
    /// Function -> instance invocations over all rounds.
    pub invocations: BTreeMap<String, usize>,
    pub trace: Trace,
}

fn package(behavior: Behavior) -> Result<Vec<u8>, HarnessError> {
    let descriptor = PackageDescriptor {
        handler: "handler.py".into(),
        image: None,
        labels: BTreeMap::new(),
        synthetic: Some(SyntheticFunction {
            behavior,
            compute: BTreeMap::new(),
        }),
    };
    Ok(build_package(&descriptor, &[]).map_err(PlatformError::from)?)
}

fn ensure_bucket(cluster: &SimCluster, bucket: &str, at: ResourceId) -> Result<(), HarnessError> {
    if !cluster.plane.list_buckets(APPLICATION).iter().any(|b| b == bucket) {
        let hints = PlacementHints {
            generator_resource: Some(at),
            ..Default::default()
        };
        cluster.plane.create_bucket(APPLICATION, bucket, &hints)?;
    }
    Ok(())
}

fn envelope(function: &str, at: ResourceId) -> InvocationEnvelope {
    InvocationEnvelope::new(
        &NamespacedFunction::new(APPLICATION, function),
        at,
        &functions::new_invocation_id(),
        serde_json::Value::Null,
        true,
    )
}

fn decode(value: &serde_json::Value) -> Result<WeightedVector, HarnessError> {
    serde_json::from_value(value.clone())
        .map_err(|e| HarnessError::MalformedReport(format!("aggregator output: {e}")))
}

/// Runs `rounds` rounds with seeded pseudo-random worker vectors in `[-1, 1)`.
pub fn run_federated_learning(
    cluster: &SimCluster,
    rounds: usize,
    weight_dim: usize,
    seed: u64,
) -> Result<FlRun, HarnessError> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    run_federated_learning_with(cluster, rounds, |_, _| {
        (0..weight_dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    })
}

/// Runs `rounds` rounds; `weights(round, worker)` supplies each update.
pub fn run_federated_learning_with(
    cluster: &SimCluster,
    rounds: usize,
    mut weights: impl FnMut(usize, ResourceId) -> Vec<f64>,
) -> Result<FlRun, HarnessError> {
    let plane = &cluster.plane;
    let dag = plane.register_application(FEDERATED_LEARNING_YAML)?;
    let iot: Vec<ResourceId> = cluster
        .fabric
        .topology()
        .resources
        .iter()
        .filter(|r| r.tier == crate::registry::Tier::Iot)
        .map(|r| r.id)
        .collect();

    let mut data = Vec::new();
    for &w in &iot {
        let bucket = format!("data-{w}");
        ensure_bucket(cluster, &bucket, w)?;
        data.push(plane.put_object(APPLICATION, &bucket, "shard-0", b"local samples")?);
    }
    let mut placements = BTreeMap::new();
    for f in &dag.functions {
        let behavior = if f.name == "train" { Behavior::Echo } else { Behavior::VectorAverage };
        let urls = if dag.entrypoints.contains(&f.name) { data.clone() } else { Vec::new() };
        let ids = plane.deploy_function(APPLICATION, &f.name, &package(behavior)?, &urls)?;
        placements.insert(f.name.clone(), ids);
    }

    let fabric = &cluster.fabric;
    let mut invocations: BTreeMap<String, usize> = BTreeMap::new();
    let mut tasks: Vec<SimTask> = Vec::new();
    let mut last_round_end: Option<String> = None;
    let mut final_weights = Vec::new();
    let mut global_mean = Vec::new();

    for round in 0..rounds {
        let trained = plane.invoke(APPLICATION, "train", json!({ "round": round }), false)?;
        *invocations.entry("train".into()).or_default() += trained.len();
        let mut updates: Vec<Vec<f64>> = Vec::new();
        let mut edge_inputs: BTreeMap<ResourceId, Vec<String>> = BTreeMap::new();
        let mut edge_outputs = Vec::new();

        for done in &trained {
            let w = weights(round, done.resource_id);
            let body = serde_json::to_vec(&WeightedVector { weights: w.clone(), count: 1 })
                .expect("vector serializes");
            updates.push(w);
            let bucket = format!("updates-{}", done.resource_id);
            ensure_bucket(cluster, &bucket, done.resource_id)?;
            let url = plane.put_object(APPLICATION, &bucket, &format!("round-{round}"), &body)?;

            let train_task = format!("r{round}/train@{}", done.resource_id);
            let mut t = SimTask::new(&train_task, done.latency).on(done.resource_id);
            if let Some(prev) = &last_round_end {
                t = t.after([prev.clone()]);
            }
            tasks.push(t);

            let outcome = plane.chain_invoke(&envelope("train", done.resource_id), "firstaggregation", &[url])?;
            let target = match &outcome {
                ChainOutcome::Waiting { instance, .. } => *instance,
                ChainOutcome::Invoked { result } => result.resource_id,
            };
            let upload = format!("r{round}/upload@{}", done.resource_id);
            let secs = fabric
                .transfer_time(body.len() as u64, done.resource_id, target)
                .map_err(|e| HarnessError::Topology(e.to_string()))?;
            tasks.push(SimTask::new(&upload, secs).after([train_task]));
            edge_inputs.entry(target).or_default().push(upload);
            if let ChainOutcome::Invoked { result } = outcome {
                *invocations.entry("firstaggregation".into()).or_default() += 1;
                edge_outputs.push(result);
            }
        }

        let mut cloud_inputs = Vec::new();
        let mut final_result = None;
        for partial in &edge_outputs {
            let edge = partial.resource_id;
            let agg_task = format!("r{round}/firstaggregation@{edge}");
            tasks.push(
                SimTask::new(&agg_task, partial.latency)
                    .on(edge)
                    .after(edge_inputs.remove(&edge).unwrap_or_default()),
            );
            let body = serde_json::to_vec(&partial.output).expect("json serializes");
            let bucket = format!("partial-{edge}");
            ensure_bucket(cluster, &bucket, edge)?;
            let url = plane.put_object(APPLICATION, &bucket, &format!("round-{round}"), &body)?;
            let outcome = plane.chain_invoke(
                &envelope("firstaggregation", edge),
                "secondaggregation",
                &[url],
            )?;
            let target = match &outcome {
                ChainOutcome::Waiting { instance, .. } => *instance,
                ChainOutcome::Invoked { result } => result.resource_id,
            };
            let upload = format!("r{round}/upload@{edge}");
            let secs = fabric
                .transfer_time(body.len() as u64, edge, target)
                .map_err(|e| HarnessError::Topology(e.to_string()))?;
            tasks.push(SimTask::new(&upload, secs).after([agg_task]));
            cloud_inputs.push(upload);
            if let ChainOutcome::Invoked { result } = outcome {
                *invocations.entry("secondaggregation".into()).or_default() += 1;
                final_result = Some(result);
            }
        }

        let result = final_result.ok_or_else(|| {
            HarnessError::Topology(format!("round {round} never reached the second aggregation"))
        })?;
        let end = format!("r{round}/secondaggregation@{}", result.resource_id);
        tasks.push(SimTask::new(&end, result.latency).on(result.resource_id).after(cloud_inputs));
        last_round_end = Some(end);
        final_weights = decode(&result.output)?.weights;

        let n = updates.len() as f64;
        global_mean = (0..final_weights.len())
            .map(|i| updates.iter().map(|u| u[i]).sum::<f64>() / n)
            .collect();
    }

    Ok(FlRun {
        placements,
        final_weights,
        global_mean,
        invocations,
        trace: des::run(&tasks)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::relative_error;

    #[test]
    fn placements_follow_the_two_sets() {
        let cluster = SimCluster::reference();
        let run = run_federated_learning(&cluster, 1, 4, 7).unwrap();
        assert_eq!(run.placements["train"], (0..8).map(ResourceId).collect::<Vec<_>>());
        assert_eq!(run.placements["firstaggregation"], vec![ResourceId(8), ResourceId(9)]);
        assert_eq!(run.placements["secondaggregation"], vec![ResourceId(10)]);
        assert_eq!(run.invocations["train"], 8);
        assert_eq!(run.invocations["firstaggregation"], 2);
        assert_eq!(run.invocations["secondaggregation"], 1);
        assert!(relative_error(&run.final_weights, &run.global_mean) < 1e-12);
        assert!(run.trace.makespan < 1.0);
    }

    #[test]
    fn identical_updates_average_to_themselves() {
        let cluster = SimCluster::reference();
        let v = vec![0.25, -1.5, 3.0];
        let run = run_federated_learning_with(&cluster, 2, |_, _| v.clone()).unwrap();
        assert_eq!(run.final_weights, v);
        assert_eq!(run.invocations["train"], 16);
    }

    #[test]
    fn basis_updates_give_uniform_mean() {
        let cluster = SimCluster::reference();
        let run = run_federated_learning_with(&cluster, 1, |_, id| {
            let mut e = vec![0.0; 8];
            e[id.0 as usize] = 1.0;
            e
        })
        .unwrap();
        assert_eq!(run.final_weights, vec![0.125; 8]);
    }
}
