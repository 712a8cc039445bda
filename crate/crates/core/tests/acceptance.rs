//! Acceptance criteria. Prints one PASS or FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use edgefaas_core::aggregation::{hierarchical_average, relative_error, WeightedVector};
use edgefaas_core::appmodel::{AffinityType, FunctionSpec, Reduce};
use edgefaas_core::backends::des;
use edgefaas_core::backends::sim::SimFabric;
use edgefaas_core::backends::SyntheticFunction;
use edgefaas_core::fixtures;
use edgefaas_core::functions::{build_package, route_to, PackageDescriptor};
use edgefaas_core::harness::{
    self, end_to_end_latency, fl, latency_for_tiers, sweep_partitions, trace_partition, video,
    LatencyProfile, SimCluster, StageProfile,
};
use edgefaas_core::metrics::{MetricsSnapshot, SimMetrics};
use edgefaas_core::platform::{Backends, ControlPlane, PlatformConfig, PlatformError};
use edgefaas_core::registry::{self, RegistryError, ResourceId, ResourceManifest, ResourceRecord, Tier};
use edgefaas_core::scheduler::{filter_phase_one, place_phase_two, PlacementContext, RttMatrix, ScheduleError};
use edgefaas_core::storage::{ObjectUrl, PlacementHints, StorageError};
use edgefaas_core::store::{FileKv, Mappings, MemoryKv};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

fn within(actual: f64, expected: f64, tol: f64) -> bool {
    ((actual - expected) / expected).abs() <= tol
}

fn ids(range: std::ops::Range<u32>) -> Vec<ResourceId> {
    range.map(ResourceId).collect()
}

/// Resource labels as shown to operators, numbered from one.
fn one_based(ids: &[ResourceId]) -> String {
    ids.iter().map(|i| (i.0 + 1).to_string()).collect::<Vec<_>>().join(",")
}

// 1. Federated learning placement

fn fl_scheduling() -> Check {
    let cluster = SimCluster::reference();
    let run = fl::run_federated_learning(&cluster, 1, 16, 42).map_err(|e| e.to_string())?;
    let p = &run.placements;
    ensure!(p["train"] == ids(0..8), "train on {:?}", p["train"]);
    ensure!(
        p["firstaggregation"] == vec![ResourceId(8), ResourceId(9)],
        "firstaggregation on {:?}",
        p["firstaggregation"]
    );
    ensure!(
        p["secondaggregation"] == vec![ResourceId(10)],
        "secondaggregation on {:?}",
        p["secondaggregation"]
    );
    let rtt = cluster.plane.rtt();
    for w in 0..8 {
        let home = if w < 4 { 8 } else { 9 };
        let routed = route_to(ResourceId(w), &p["firstaggregation"], &rtt);
        ensure!(routed == Some(ResourceId(home)), "worker {w} routed to {routed:?}");
    }
    ensure!(run.invocations["firstaggregation"] == 2, "{:?}", run.invocations);
    ensure!(run.invocations["secondaggregation"] == 1, "{:?}", run.invocations);
    ensure!(run.trace.makespan < 1.0, "virtual runtime {}", run.trace.makespan);
    Ok(format!(
        "train on iot {}, firstaggregation on edge {}, secondaggregation on cloud {}; virtual runtime {:.4}s",
        one_based(&p["train"]),
        one_based(&p["firstaggregation"]),
        one_based(&p["secondaggregation"]),
        run.trace.makespan
    ))
}

// 2. Video pipeline placement

fn video_scheduling() -> Check {
    let cluster = SimCluster::reference();
    let cams = ids(0..4);
    let run = video::run_video_pipeline(&cluster, &harness::video_profile(), &cams)
        .map_err(|e| e.to_string())?;
    let p = &run.placements;
    ensure!(p["video-generator"] == cams, "video-generator on {:?}", p["video-generator"]);
    for s in ["video-processing", "motion-detection"] {
        ensure!(p[s] == vec![ResourceId(8)], "{s} on {:?}", p[s]);
    }
    for s in ["face-detection", "face-extraction", "face-recognition"] {
        ensure!(p[s] == vec![ResourceId(10)], "{s} on {:?}", p[s]);
    }
    Ok(format!(
        "video-generator on iot {}, processing and motion-detection co-located on edge {}, face-* on cloud {}",
        one_based(&p["video-generator"]),
        one_based(&p["video-processing"]),
        one_based(&p["face-detection"])
    ))
}

// 3. Latency anchors

fn latency_anchors() -> Check {
    let start = Instant::now();
    let profile = harness::video_profile();
    let total = |p: &str| end_to_end_latency(&profile, p).map(|b| b.total).map_err(|e| e.to_string());
    let cloud = total("video-generator")?;
    let edge = total("face-recognition")?;
    let sweep = sweep_partitions(&profile).map_err(|e| e.to_string())?;
    let best = sweep.best().ok_or("empty sweep")?;
    let topo = fixtures::reference_topology();
    let t = |dst| topo.transfer_time(92_000_000, ResourceId(0), ResourceId(dst)).map_err(|e| e.to_string());
    let (to_cloud, to_edge) = (t(10)?, t(8)?);
    let trace = trace_partition(&profile, &best.partition).map_err(|e| e.to_string())?;

    ensure!(within(cloud, 96.7, 0.02), "cloud-only {cloud:.3}s");
    ensure!(within(edge, 12.1, 0.02), "edge-only {edge:.3}s");
    ensure!(best.partition == "motion-detection", "argmin at {}", best.partition);
    ensure!(within(best.total_seconds, 11.5, 0.02), "best {:.3}s", best.total_seconds);
    ensure!(within(to_cloud, 92.7, 0.01), "92 MB to cloud {to_cloud:.3}s");
    ensure!(within(to_edge, 8.5, 0.01), "92 MB to edge {to_edge:.3}s");
    let ratio = edge / best.total_seconds;
    ensure!((ratio - 1.05).abs() <= 0.01, "edge-only/best {ratio:.4}");
    ensure!((trace.makespan - best.total_seconds).abs() < 1e-9, "trace {}", trace.makespan);
    let wall = start.elapsed().as_secs_f64();
    ensure!(wall < 1.0, "took {wall:.3}s");
    Ok(format!(
        "cloud-only {cloud:.2}s, edge-only {edge:.2}s, best {} at {:.2}s, uploads {to_cloud:.2}s/{to_edge:.2}s, edge-only/best {ratio:.3}, cloud-only/best {:.2} (reported only)",
        best.partition,
        best.total_seconds,
        cloud / best.total_seconds
    ))
}

// 4. Two-level aggregation

fn aggregation_exactness() -> Check {
    let mut rng = StdRng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let dim = rng.gen_range(1..=64);
        let groups: Vec<Vec<WeightedVector>> = (0..rng.gen_range(1..=8))
            .map(|_| {
                (0..rng.gen_range(1..=16))
                    .map(|_| WeightedVector {
                        weights: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                        count: 1,
                    })
                    .collect()
            })
            .collect();
        let got = hierarchical_average(&groups).map_err(|e| e.to_string())?;
        let all: Vec<&WeightedVector> = groups.iter().flatten().collect();
        let mean: Vec<f64> = (0..dim)
            .map(|i| all.iter().map(|w| w.weights[i]).sum::<f64>() / all.len() as f64)
            .collect();
        let err = relative_error(&got.weights, &mean);
        worst = worst.max(err);
        ensure!(err <= 1e-12, "trial {trial}: relative error {err:e}");
        ensure!(got.count == all.len() as u64, "trial {trial}: count {}", got.count);
    }
    for trial in 0..20 {
        let dim = rng.gen_range(1..=64);
        let cluster = SimCluster::reference();
        let mut sent = Vec::new();
        let run = fl::run_federated_learning_with(&cluster, 1, |_, _| {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            sent.push(v.clone());
            v
        })
        .map_err(|e| e.to_string())?;
        let mean: Vec<f64> = (0..dim)
            .map(|i| sent.iter().map(|v| v[i]).sum::<f64>() / sent.len() as f64)
            .collect();
        let err = relative_error(&run.final_weights, &mean);
        worst = worst.max(err);
        ensure!(err <= 1e-12, "simulated trial {trial}: relative error {err:e}");
    }
    Ok(format!("1000 random trials plus 20 simulated rounds, worst relative error {worst:.1e}"))
}

// 5. Scheduler oracle equivalence

struct Instance {
    resources: Vec<ResourceRecord>,
    snaps: BTreeMap<ResourceId, MetricsSnapshot>,
    function: FunctionSpec,
    data: Vec<ResourceId>,
    deps: BTreeMap<String, Vec<ResourceId>>,
    rtt: RttMatrix,
}

const GB: u64 = 1 << 30;

fn random_instance(rng: &mut StdRng) -> Instance {
    let n = rng.gen_range(1..=8u32);
    let labels = ["iot", "edge", "cloud", "iot", "edge", "cloud", "gpu-farm"];
    let resources: Vec<ResourceRecord> = (0..n)
        .map(|i| {
            let label = if rng.gen_bool(0.05) { labels[6] } else { labels[rng.gen_range(0..6)] };
            ResourceRecord {
                resource_id: ResourceId(i),
                name: label.into(),
                node: rng.gen_range(1..=4),
                memory: [0, GB, 2 * GB, 4 * GB][rng.gen_range(0..4)],
                cpu: rng.gen_range(1..=8),
                storage: 64 * GB,
                gpunode: rng.gen_range(0..=2),
                gpu: rng.gen_range(0..=4),
                gateway: format!("10.9.0.{i}:8080"),
                pwd: "p".into(),
                prometheus: format!("10.9.0.{i}:9090"),
                minio: format!("10.9.0.{i}:9000"),
                minio_access_key: "a".into(),
                minio_secret_key: "s".into(),
            }
        })
        .collect();
    let present: Vec<bool> = resources.iter().map(|_| rng.gen_bool(0.9)).collect();
    let snaps = resources
        .iter()
        .zip(present)
        .filter(|(_, keep)| *keep)
        .map(|(r, _)| {
            let cpu_total = f64::from(r.cpu * r.node);
            let mem_total = r.memory * u64::from(r.node);
            let gpu_total = f64::from(r.gpu * r.gpunode);
            let snap = MetricsSnapshot {
                resource_id: r.resource_id,
                cpu_used: if rng.gen_bool(0.15) { cpu_total } else { rng.gen_range(0.0..=cpu_total) },
                memory_used: rng.gen_range(0..=mem_total + GB),
                io_bandwidth_used: 0.0,
                gpu_used: rng.gen_range(0.0..=gpu_total),
                per_node_load: Vec::new(),
                timestamp: 0.0,
            };
            (r.resource_id, snap)
        })
        .collect();
    let affinity_type = if rng.gen_bool(0.5) { AffinityType::Data } else { AffinityType::Function };
    let function = FunctionSpec {
        name: "f".into(),
        dependencies: Vec::new(),
        memory_req: [0, GB / 2, GB, 3 * GB][rng.gen_range(0..4)],
        gpu_req: rng.gen_range(0..=2),
        privacy: rng.gen_bool(0.25),
        nodetype: Tier::ALL[rng.gen_range(0..3)],
        affinity_type,
        reduce: if rng.gen_bool(0.5) { Reduce::Auto } else { Reduce::One },
    };
    // One id past the registered range: data or dependencies may sit on a
    // resource that has since left the registry.
    let subset = |rng: &mut StdRng| -> Vec<ResourceId> {
        (0..=n).filter(|_| rng.gen_bool(0.35)).map(ResourceId).collect()
    };
    let data = subset(rng);
    let deps = (0..rng.gen_range(0..=2))
        .map(|d| (format!("dep{d}"), subset(rng)))
        .collect();
    let mut rtt = RttMatrix::new();
    for a in 0..=n {
        for b in a + 1..=n {
            if rng.gen_bool(0.85) {
                rtt.set(ResourceId(a), ResourceId(b), f64::from(rng.gen_range(0..=60u32)));
            }
        }
    }
    Instance {
        resources,
        snaps,
        function,
        data,
        deps,
        rtt,
    }
}

fn oracle_phase_one(inst: &Instance) -> Result<Vec<ResourceId>, ScheduleError> {
    let f = &inst.function;
    let mut out = Vec::new();
    for r in &inst.resources {
        if f.privacy && !(r.name == "iot" && inst.data.contains(&r.resource_id)) {
            continue;
        }
        let Some(s) = inst.snaps.get(&r.resource_id) else { continue };
        let mem_free = (i128::from(r.memory) * i128::from(r.node) - i128::from(s.memory_used)).max(0);
        let cpu_free = f64::from(r.cpu) * f64::from(r.node) - s.cpu_used;
        let gpu_free = (f64::from(r.gpu) * f64::from(r.gpunode) - s.gpu_used).max(0.0);
        if mem_free >= i128::from(f.memory_req) && gpu_free >= f64::from(f.gpu_req) && cpu_free > 0.0 {
            out.push(r.resource_id);
        }
    }
    if out.is_empty() {
        return Err(ScheduleError::NoCandidates(f.name.clone()));
    }
    Ok(out)
}

fn oracle_phase_two(inst: &Instance, candidates: &[ResourceId]) -> Result<Vec<ResourceId>, ScheduleError> {
    let f = &inst.function;
    let tier_of = |id: &ResourceId| {
        inst.resources
            .iter()
            .find(|r| r.resource_id == *id)
            .and_then(|r| Tier::from_label(&r.name))
    };
    let tiered: Vec<ResourceId> = candidates
        .iter()
        .filter(|c| tier_of(c) == Some(f.nodetype))
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if tiered.is_empty() {
        return Err(ScheduleError::NoTierCandidates {
            function: f.name.clone(),
            tier: f.nodetype,
        });
    }
    let anchors: BTreeSet<ResourceId> = match f.affinity_type {
        AffinityType::Data => inst.data.iter().copied().collect(),
        AffinityType::Function => inst.deps.values().flatten().copied().collect(),
    };
    if anchors.is_empty() {
        return Err(ScheduleError::NoAnchors(f.name.clone()));
    }
    let unreachable = |anchor| ScheduleError::Unreachable {
        function: f.name.clone(),
        anchor,
    };
    // Lexicographic (rtt, id) order over a set.
    let best_in = |a: ResourceId, set: &[ResourceId]| -> (f64, ResourceId) {
        let mut options: Vec<(f64, ResourceId)> = set.iter().map(|&c| (inst.rtt.get(a, c), c)).collect();
        options.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        options[0]
    };
    match f.reduce {
        Reduce::Auto => {
            if let Some(&a) = anchors.iter().find(|&&a| best_in(a, &tiered).0.is_infinite()) {
                return Err(unreachable(a));
            }
            // Brute force: the unique subset in which every anchor finds its
            // overall nearest candidate and every member is someone's nearest.
            let mut valid = Vec::new();
            for mask in 1u32..(1 << tiered.len()) {
                let set: Vec<ResourceId> = tiered
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, c)| *c)
                    .collect();
                let picks: BTreeSet<ResourceId> = anchors.iter().map(|&a| best_in(a, &set).1).collect();
                let faithful = anchors.iter().all(|&a| best_in(a, &set) == best_in(a, &tiered));
                if faithful && picks == set.iter().copied().collect() {
                    valid.push(set);
                }
            }
            assert_eq!(valid.len(), 1, "oracle found {} valid subsets", valid.len());
            Ok(valid.remove(0))
        }
        Reduce::One => {
            let mut costs: Vec<(f64, ResourceId)> = tiered
                .iter()
                .map(|&c| (anchors.iter().map(|&a| inst.rtt.get(a, c)).sum(), c))
                .collect();
            costs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            let (cost, id) = costs[0];
            if cost.is_infinite() {
                let a = anchors.iter().copied().find(|&a| inst.rtt.get(a, id).is_infinite()).unwrap_or(id);
                return Err(unreachable(a));
            }
            Ok(vec![id])
        }
    }
}

fn context(inst: &Instance, rtt: RttMatrix) -> PlacementContext {
    PlacementContext {
        function: inst.function.clone(),
        application: "app".into(),
        data_locations: inst.data.clone(),
        dependency_placements: inst.deps.clone(),
        rtt,
        tiers: inst
            .resources
            .iter()
            .filter_map(|r| Some((r.resource_id, r.tier()?)))
            .collect(),
    }
}

fn scheduler_oracle() -> Check {
    let mut rng = StdRng::seed_from_u64(5);
    let (mut placed, mut rejected) = (0, 0);
    for trial in 0..1000 {
        let inst = random_instance(&mut rng);
        let one = filter_phase_one(&inst.function, &inst.resources, &inst.snaps, &inst.data);
        ensure!(one == oracle_phase_one(&inst), "trial {trial}: phase one {one:?}");
        // Phase two runs on the phase-one output and on an arbitrary subset,
        // so that tier and anchor handling get exercised even when phase one
        // is empty.
        let mut inputs = vec![];
        if let Ok(c) = &one {
            inputs.push(c.clone());
        }
        inputs.push(
            inst.resources
                .iter()
                .map(|r| r.resource_id)
                .filter(|_| rng.gen_bool(0.6))
                .collect(),
        );
        for candidates in inputs.into_iter().filter(|c: &Vec<ResourceId>| !c.is_empty()) {
            let got = place_phase_two(&context(&inst, inst.rtt.clone()), &candidates);
            let want = oracle_phase_two(&inst, &candidates);
            ensure!(got == want, "trial {trial}: phase two {got:?}, oracle {want:?}");
            let again = place_phase_two(&context(&inst, inst.rtt.clone()), &candidates);
            ensure!(again == got, "trial {trial}: not deterministic");
            for k in [0.25, 3.0, 1024.0] {
                let scaled = place_phase_two(&context(&inst, inst.rtt.scaled(k)), &candidates);
                ensure!(scaled == got, "trial {trial}: scaling by {k} changed {got:?} to {scaled:?}");
            }
            match &got {
                Ok(ids) => {
                    placed += 1;
                    ensure!(ids.iter().all(|i| candidates.contains(i)), "trial {trial}: outside candidates");
                    if inst.function.reduce == Reduce::One {
                        ensure!(ids.len() == 1, "trial {trial}: reduce=1 gave {ids:?}");
                    }
                    if inst.function.privacy && one.as_ref().is_ok_and(|c| c == &candidates) {
                        ensure!(
                            ids.iter().all(|i| inst.data.contains(i) && inst.resources[i.0 as usize].name == "iot"),
                            "trial {trial}: privacy violated by {ids:?}"
                        );
                    }
                }
                Err(_) => rejected += 1,
            }
        }
    }
    Ok(format!("1000 instances, {placed} placements and {rejected} rejections all match the brute-force oracle"))
}

// 6. Storage state machine

fn storage_kind(e: &PlatformError) -> &'static str {
    match e {
        PlatformError::Storage(StorageError::BucketExists(_)) => "BucketExists",
        PlatformError::Storage(StorageError::BucketNotEmpty(_)) => "BucketNotEmpty",
        PlatformError::Storage(StorageError::UnknownBucket(_)) => "UnknownBucket",
        PlatformError::Storage(StorageError::UnknownObject(_)) => "UnknownObject",
        _ => "other",
    }
}

const MB8: usize = 8 * 1024 * 1024;

fn random_valid_url(rng: &mut StdRng) -> ObjectUrl {
    let alnum = b"abcdefghijklmnopqrstuvwxyz0123456789";
    let word = |rng: &mut StdRng, len: usize| -> String {
        (0..len).map(|_| alnum[rng.gen_range(0..alnum.len())] as char).collect()
    };
    let len = rng.gen_range(1..6);
    let mut app = word(rng, len);
    if rng.gen_bool(0.3) {
        let len = rng.gen_range(1..4);
        app = format!("{app}.{}", word(rng, len));
    }
    let len = rng.gen_range(3..10);
    let mut bucket = word(rng, len);
    if rng.gen_bool(0.4) {
        bucket = format!("{}-{}", word(rng, 2), word(rng, 3));
    }
    let object_chars = b"abcXYZ019._-~+ ";
    let object: String = (0..rng.gen_range(1..20))
        .map(|_| object_chars[rng.gen_range(0..object_chars.len())] as char)
        .collect();
    ObjectUrl::new(&app, &bucket, ResourceId(rng.gen()), &object)
}

fn storage_state_machine() -> Check {
    let cluster = SimCluster::reference();
    let plane = &cluster.plane;
    let mut rng = StdRng::seed_from_u64(6);
    let apps = ["alpha", "beta", "gamma.v2"];
    let buckets = ["data", "frames", "models", "out-1"];
    let objects = ["a", "b", "c.bin", "d"];
    let mut model: BTreeMap<(&str, &str), (ResourceId, BTreeMap<&str, Vec<u8>>)> = BTreeMap::new();
    let mut large = 0;

    for step in 0..10_000 {
        let app = *apps.choose(&mut rng).unwrap();
        let bucket = *buckets.choose(&mut rng).unwrap();
        let object = *objects.choose(&mut rng).unwrap();
        let exists = model.contains_key(&(app, bucket));
        match rng.gen_range(0..100) {
            0..=14 => {
                let hints = PlacementHints {
                    generator_resource: Some(ResourceId(rng.gen_range(0..11))),
                    ..Default::default()
                };
                let got = plane.create_bucket(app, bucket, &hints);
                match (got, exists) {
                    (Ok(rid), false) => {
                        ensure!(Some(rid) == hints.generator_resource, "step {step}: placed on {rid}");
                        model.insert((app, bucket), (rid, BTreeMap::new()));
                    }
                    (Err(e), true) if storage_kind(&e) == "BucketExists" => {}
                    (other, _) => return Err(format!("step {step}: create {app}/{bucket}: {other:?}")),
                }
            }
            15..=22 => {
                let got = plane.delete_bucket(app, bucket);
                let want = match model.get(&(app, bucket)) {
                    None => Some("UnknownBucket"),
                    Some((_, objs)) if !objs.is_empty() => Some("BucketNotEmpty"),
                    Some(_) => None,
                };
                match (&got, want) {
                    (Ok(()), None) => {
                        model.remove(&(app, bucket));
                    }
                    (Err(e), Some(k)) if storage_kind(e) == k => {}
                    _ => return Err(format!("step {step}: delete bucket {app}/{bucket}: {got:?}, expected {want:?}")),
                }
            }
            23..=32 => {
                let want: Vec<String> = model.keys().filter(|(a, _)| *a == app).map(|(_, b)| b.to_string()).collect();
                let got = plane.list_buckets(app);
                ensure!(got == want, "step {step}: buckets of {app} {got:?}, expected {want:?}");
            }
            33..=57 => {
                let len = if rng.gen_bool(0.002) {
                    large += 1;
                    MB8
                } else {
                    rng.gen_range(0..2048)
                };
                let mut data = vec![0u8; len];
                rng.fill(&mut data[..]);
                let got = plane.put_object(app, bucket, object, &data);
                match (got, model.get_mut(&(app, bucket))) {
                    (Ok(url), Some((rid, objs))) => {
                        ensure!(url == ObjectUrl::new(app, bucket, *rid, object), "step {step}: url {url}");
                        objs.insert(object, data);
                    }
                    (Err(e), None) if storage_kind(&e) == "UnknownBucket" => {}
                    (other, _) => return Err(format!("step {step}: put {app}/{bucket}/{object}: {other:?}")),
                }
            }
            58..=77 => {
                let rid = model.get(&(app, bucket)).map_or(ResourceId(0), |(r, _)| *r);
                let url = ObjectUrl::new(app, bucket, rid, object).to_string();
                let got = plane.get_object(&url);
                match (got, model.get(&(app, bucket)).and_then(|(_, o)| o.get(object))) {
                    (Ok(bytes), Some(want)) => ensure!(&bytes == want, "step {step}: bytes differ for {url}"),
                    (Err(e), None) if storage_kind(&e) == "UnknownObject" => {}
                    (other, want) => {
                        return Err(format!(
                            "step {step}: get {url}: {:?}, expected {}",
                            other.map(|b| b.len()),
                            want.map_or("missing".into(), |w| format!("{} bytes", w.len()))
                        ))
                    }
                }
            }
            78..=89 => {
                let got = plane.delete_object(app, bucket, object);
                let removed = model.get_mut(&(app, bucket)).map(|(_, objs)| objs.remove(object).is_some());
                match (got, removed) {
                    (Ok(()), Some(true)) => {}
                    (Err(e), Some(false)) if storage_kind(&e) == "UnknownObject" => {}
                    (Err(e), None) if storage_kind(&e) == "UnknownBucket" => {}
                    (other, _) => return Err(format!("step {step}: delete {app}/{bucket}/{object}: {other:?}")),
                }
            }
            _ => {
                let got = plane.list_objects(app, bucket);
                match (got, model.get(&(app, bucket))) {
                    (Ok(names), Some((_, objs))) => {
                        let want: Vec<String> = objs.keys().map(|s| s.to_string()).collect();
                        ensure!(names == want, "step {step}: objects {names:?}, expected {want:?}");
                    }
                    (Err(e), None) if storage_kind(&e) == "UnknownBucket" => {}
                    (other, _) => return Err(format!("step {step}: list {app}/{bucket}: {other:?}")),
                }
            }
        }
        if step % 50 == 0 {
            let snap = plane.snapshot();
            for (ns, rid) in &snap.bucket_map {
                let owner = model
                    .iter()
                    .find(|((a, b), _)| format!("{a}-{b}") == *ns)
                    .ok_or(format!("step {step}: unexpected bucket {ns}"))?;
                ensure!(owner.1 .0 == *rid, "step {step}: {ns} moved to {rid}");
            }
            ensure!(snap.bucket_map.len() == model.len(), "step {step}: bucket count");
        }
    }

    for size in [0, 1, MB8] {
        if !model.contains_key(&("alpha", "data")) {
            plane
                .create_bucket("alpha", "data", &PlacementHints::default())
                .map_err(|e| e.to_string())?;
        }
        let mut data = vec![0u8; size];
        rng.fill(&mut data[..]);
        let url = plane.put_object("alpha", "data", "edge-case", &data).map_err(|e| e.to_string())?;
        ensure!(plane.get_object(&url.to_string()).map_err(|e| e.to_string())? == data, "{size} bytes differ");
    }

    for i in 0..1000 {
        let url = random_valid_url(&mut rng);
        let text = url.to_string();
        let back: ObjectUrl = text.parse().map_err(|e| format!("url {i} `{text}`: {e}"))?;
        ensure!(back == url && back.to_string() == text, "url {i} `{text}` did not round-trip");
    }
    Ok(format!(
        "10000 steps over 3 applications match the reference map ({large} random 8 MB payloads); 1000 URLs round-trip"
    ))
}

// 7. Registry

fn manifest(gateway: &str) -> ResourceManifest {
    ResourceManifest {
        name: "edge".into(),
        node: 1,
        memory: 8 * GB,
        cpu: 4,
        storage: 100 * GB,
        gpunode: 0,
        gpu: 0,
        gateway: gateway.into(),
        pwd: "pw".into(),
        prometheus: "10.0.0.1:9090".into(),
        minio: "10.0.0.1:9000".into(),
        minio_access_key: "ak".into(),
        minio_secret_key: "sk".into(),
        warnings: Vec::new(),
    }
}

fn registry_properties() -> Check {
    let mut rng = StdRng::seed_from_u64(7);
    let (mut blocked, mut reused) = (0, 0);
    for seq in 0..1000 {
        let mut maps = Mappings::open(Arc::new(MemoryKv::default())).map_err(|e| e.to_string())?;
        let mut live: BTreeSet<u32> = BTreeSet::new();
        let mut fn_refs: BTreeMap<String, Vec<ResourceId>> = BTreeMap::new();
        let mut bucket_refs: BTreeMap<String, ResourceId> = BTreeMap::new();
        let mut ever = 0u32;
        for step in 0..rng.gen_range(5..40) {
            let pick = |rng: &mut StdRng| ResourceId(rng.gen_range(0..ever.max(1) + 1));
            match rng.gen_range(0..10) {
                0..=3 => {
                    let want = (0..).find(|i| !live.contains(i)).unwrap();
                    let reg = registry::register_resource(&mut maps, manifest(&format!("10.1.{seq}.{step}:8080")))
                        .map_err(|e| e.to_string())?;
                    ensure!(reg.resource_id == ResourceId(want), "seq {seq}: got {}, oracle {want}", reg.resource_id);
                    if want < ever {
                        reused += 1;
                    }
                    ever = ever.max(want + 1);
                    live.insert(want);
                }
                4..=6 => {
                    let id = pick(&mut rng);
                    let referenced = fn_refs.values().any(|v| v.contains(&id))
                        || bucket_refs.values().any(|r| *r == id);
                    let got = registry::unregister_resource(&mut maps, id);
                    match got {
                        Ok(()) => {
                            ensure!(live.remove(&id.0) && !referenced, "seq {seq}: unregistered {id}");
                        }
                        Err(RegistryError::UnknownResource(_)) => ensure!(!live.contains(&id.0), "seq {seq}: {id} is live"),
                        Err(RegistryError::ResourceBusy { .. }) => {
                            ensure!(live.contains(&id.0) && referenced, "seq {seq}: {id} wrongly busy");
                            blocked += 1;
                        }
                        Err(e) => return Err(e.to_string()),
                    }
                }
                7 => {
                    let name = format!("app.f{}", rng.gen_range(0..3));
                    let ids: Vec<ResourceId> = live.iter().filter(|_| rng.gen_bool(0.4)).map(|&i| ResourceId(i)).collect();
                    maps.update_candidates(|c| {
                        c.insert(name.clone(), ids.clone());
                    })
                    .map_err(|e| e.to_string())?;
                    fn_refs.insert(name, ids);
                }
                8 => {
                    let name = format!("app-b{}", rng.gen_range(0..3));
                    match live.iter().copied().collect::<Vec<_>>().choose(&mut rng) {
                        Some(&id) if rng.gen_bool(0.7) => {
                            maps.update_buckets(|b, _| {
                                b.insert(name.clone(), ResourceId(id));
                            })
                            .map_err(|e| e.to_string())?;
                            bucket_refs.insert(name, ResourceId(id));
                        }
                        _ => {
                            maps.update_buckets(|b, _| {
                                b.remove(&name);
                            })
                            .map_err(|e| e.to_string())?;
                            bucket_refs.remove(&name);
                        }
                    }
                }
                _ => {
                    let name = format!("app.f{}", rng.gen_range(0..3));
                    maps.update_candidates(|c| {
                        c.remove(&name);
                    })
                    .map_err(|e| e.to_string())?;
                    fn_refs.remove(&name);
                }
            }
            let listed: BTreeSet<u32> = registry::list_resources(&maps).iter().map(|r| r.resource_id.0).collect();
            ensure!(listed == live, "seq {seq} step {step}: registry {listed:?}, oracle {live:?}");
        }
    }
    Ok(format!(
        "1000 sequences match the free-id oracle ({reused} reused ids); {blocked} unregistrations blocked, all by live references"
    ))
}

// 8. Crash recovery

#[derive(Debug, Clone)]
enum Op {
    RegisterResource(usize),
    Unregister(u32),
    RegisterApp(usize),
    Deploy(usize, usize),
    DeleteFunction(usize, usize),
    CreateBucket(usize, usize, u32),
    Put(usize, usize, usize, Vec<u8>),
    DeleteObject(usize, usize, usize),
    DeleteBucket(usize, usize),
    Invoke(usize, usize, bool),
}

const APPS: [(&str, &str, &[&str]); 2] = [
    (
        "videopipeline",
        fixtures::VIDEO_PIPELINE_YAML,
        &["video-generator", "video-processing", "motion-detection", "face-detection"],
    ),
    (
        "federatedlearning",
        fixtures::FEDERATED_LEARNING_YAML,
        &["train", "firstaggregation", "secondaggregation"],
    ),
];
const BUCKETS: [&str; 3] = ["raw", "models", "out"];
const OBJECTS: [&str; 3] = ["x", "y", "z"];

fn random_op(rng: &mut StdRng) -> Op {
    let app = rng.gen_range(0..APPS.len());
    let func = rng.gen_range(0..APPS[app].2.len());
    let b = rng.gen_range(0..BUCKETS.len());
    let o = rng.gen_range(0..OBJECTS.len());
    match rng.gen_range(0..20) {
        0..=4 => Op::RegisterResource(rng.gen_range(0..11)),
        5 => Op::Unregister(rng.gen_range(0..12)),
        6..=7 => Op::RegisterApp(app),
        8..=10 => Op::Deploy(app, func),
        11 => Op::DeleteFunction(app, func),
        12..=13 => Op::CreateBucket(app, b, rng.gen_range(0..11)),
        14..=15 => Op::Put(app, b, o, (0..rng.gen_range(0..64)).map(|_| rng.gen()).collect()),
        16 => Op::DeleteObject(app, b, o),
        17 => Op::DeleteBucket(app, b),
        _ => Op::Invoke(app, func, rng.gen_bool(0.5)),
    }
}

fn echo_package() -> Vec<u8> {
    let desc = PackageDescriptor {
        handler: "handler.py".into(),
        image: None,
        labels: BTreeMap::new(),
        synthetic: Some(SyntheticFunction::echo()),
    };
    build_package(&desc, &[]).expect("package builds")
}

fn open_plane(dir: &std::path::Path, fabric: &SimFabric) -> ControlPlane {
    let plane = ControlPlane::open(
        Arc::new(FileKv::new(dir).expect("store dir")),
        Backends::sim(fabric, &SimMetrics::new()),
        PlatformConfig::default(),
    )
    .expect("plane opens");
    plane.set_rtt(fabric.topology().rtt_ms.clone());
    plane
}

/// Applies `op` and renders its outcome without invocation ids.
fn apply(plane: &ControlPlane, fabric: &SimFabric, op: &Op, package: &[u8]) -> String {
    let show = |r: Result<String, PlatformError>| match r {
        Ok(s) => format!("ok {s}"),
        Err(e) => format!("err {e}"),
    };
    match op {
        Op::RegisterResource(i) => show(
            plane
                .register_manifest(fabric.topology().resources[*i].manifest())
                .map(|r| r.resource_id.to_string()),
        ),
        Op::Unregister(id) => show(plane.unregister_resource(ResourceId(*id)).map(|_| String::new())),
        Op::RegisterApp(a) => show(plane.register_application(APPS[*a].1).map(|d| d.dag_id)),
        Op::Deploy(a, f) => {
            let (app, _, funcs) = APPS[*a];
            let data: Vec<ObjectUrl> = plane
                .snapshot()
                .bucket_map
                .iter()
                .filter(|(ns, _)| ns.starts_with(&format!("{app}-")))
                .map(|(ns, rid)| ObjectUrl::new(app, &ns[app.len() + 1..], *rid, "seed"))
                .collect();
            show(plane.deploy_function(app, funcs[*f], package, &data).map(|ids| format!("{ids:?}")))
        }
        Op::DeleteFunction(a, f) => show(plane.delete_function(APPS[*a].0, APPS[*a].2[*f]).map(|_| String::new())),
        Op::CreateBucket(a, b, g) => {
            let hints = PlacementHints {
                generator_resource: Some(ResourceId(*g)),
                ..Default::default()
            };
            show(plane.create_bucket(APPS[*a].0, BUCKETS[*b], &hints).map(|r| r.to_string()))
        }
        Op::Put(a, b, o, data) => show(plane.put_object(APPS[*a].0, BUCKETS[*b], OBJECTS[*o], data).map(|u| u.to_string())),
        Op::DeleteObject(a, b, o) => show(plane.delete_object(APPS[*a].0, BUCKETS[*b], OBJECTS[*o]).map(|_| String::new())),
        Op::DeleteBucket(a, b) => show(plane.delete_bucket(APPS[*a].0, BUCKETS[*b]).map(|_| String::new())),
        Op::Invoke(a, f, one) => show(
            plane
                .invoke(APPS[*a].0, APPS[*a].2[*f], serde_json::json!({"op": "probe"}), *one)
                .map(|rs| format!("{:?}", rs.iter().map(|r| (r.resource_id, r.output.clone())).collect::<Vec<_>>())),
        ),
    }
}

/// Every read the plane answers, rendered.
fn reads(plane: &ControlPlane) -> Vec<String> {
    let mut out = vec![
        format!("{:?}", plane.snapshot()),
        format!("{:?}", plane.list_resources()),
        format!("{:?}", plane.list_applications()),
    ];
    for (app, _, _) in APPS {
        out.push(format!("{:?}", plane.list_functions(app).map_err(|e| e.to_string())));
        for b in plane.list_buckets(app) {
            let objs = plane.list_objects(app, &b);
            out.push(format!("{app}/{b}: {objs:?}", objs = objs.as_ref().map_err(|e| e.to_string())));
            let rid = plane.snapshot().bucket_map[&format!("{app}-{b}")];
            for o in objs.unwrap_or_default() {
                let url = ObjectUrl::new(app, &b, rid, &o).to_string();
                out.push(format!("{url}: {:?}", plane.get_object(&url).map_err(|e| e.to_string())));
            }
        }
    }
    out
}

fn crash_recovery() -> Check {
    let package = echo_package();
    let topology = fixtures::reference_topology();
    let mut rng = StdRng::seed_from_u64(8);
    let mut compared = 0;
    for trial in 0..200 {
        let ops: Vec<Op> = (0..rng.gen_range(5..40)).map(|_| random_op(&mut rng)).collect();
        let restart_at = rng.gen_range(0..=ops.len());

        let dir_a = tempfile::tempdir().map_err(|e| e.to_string())?;
        let fabric_a = SimFabric::new(topology.clone());
        let plane_a = open_plane(dir_a.path(), &fabric_a);
        let log_a: Vec<String> = ops.iter().map(|op| apply(&plane_a, &fabric_a, op, &package)).collect();

        let dir_b = tempfile::tempdir().map_err(|e| e.to_string())?;
        let fabric_b = SimFabric::new(topology.clone());
        let mut plane_b = open_plane(dir_b.path(), &fabric_b);
        let mut log_b = Vec::new();
        let mut before = Vec::new();
        for (i, op) in ops.iter().enumerate() {
            if i == restart_at {
                before = reads(&plane_b);
                drop(plane_b);
                plane_b = open_plane(dir_b.path(), &fabric_b);
                ensure!(reads(&plane_b) == before, "trial {trial}: reads changed across restart at {i}");
            }
            log_b.push(apply(&plane_b, &fabric_b, op, &package));
        }
        if restart_at == ops.len() {
            before = reads(&plane_b);
            plane_b = open_plane(dir_b.path(), &fabric_b);
            ensure!(reads(&plane_b) == before, "trial {trial}: reads changed across final restart");
        }
        for (i, (a, b)) in log_a.iter().zip(&log_b).enumerate() {
            ensure!(a == b, "trial {trial}: op {i} {:?} gave `{b}` after restart, `{a}` without", ops[i]);
        }
        let (ra, rb) = (reads(&plane_a), reads(&plane_b));
        ensure!(ra == rb, "trial {trial}: final reads differ");
        compared += ra.len() + before.len();
    }
    Ok(format!("200 random prefixes, {compared} reads identical with and without restart"))
}

// 9. Cost model against the event trace

fn random_profile(rng: &mut StdRng) -> LatencyProfile {
    LatencyProfile {
        stages: (0..rng.gen_range(1..=8))
            .map(|i| StageProfile {
                name: format!("stage-{i}"),
                output_size: rng.gen_range(0..100_000_000),
                compute: Tier::ALL.iter().map(|t| (*t, rng.gen_range(0.0..20.0))).collect(),
                upload_to_edge: rng.gen_range(0.0..50.0),
                upload_to_cloud: rng.gen_range(0.0..120.0),
            })
            .collect(),
    }
}

fn cost_model_equivalence() -> Check {
    let mut rng = StdRng::seed_from_u64(9);
    let mut worst = 0.0f64;
    let mut layouts = 0;
    for trial in 0..500 {
        let profile = random_profile(&mut rng);
        for s in &profile.stages {
            let closed = end_to_end_latency(&profile, &s.name).map_err(|e| e.to_string())?;
            let trace = trace_partition(&profile, &s.name).map_err(|e| e.to_string())?;
            let terms = closed.compute_seconds() + closed.transfer_seconds();
            let diff = (trace.makespan - closed.total).abs().max((terms - closed.total).abs());
            worst = worst.max(diff);
            ensure!(diff <= 1e-9, "trial {trial} partition {}: trace {} vs {}", s.name, trace.makespan, closed.total);
            layouts += 1;
        }
        let tiers: Vec<Tier> = profile.stages.iter().map(|_| Tier::ALL[rng.gen_range(0..3)]).collect();
        let closed = latency_for_tiers(&profile, &tiers).map_err(|e| e.to_string())?;
        let tasks = harness::chain_tasks(&profile, &tiers, "", &|_| None).map_err(|e| e.to_string())?;
        let trace = des::run(&tasks).map_err(|e| e.to_string())?;
        let diff = (trace.makespan - closed.total).abs();
        worst = worst.max(diff);
        ensure!(diff <= 1e-9, "trial {trial} layout {tiers:?}: trace {} vs {}", trace.makespan, closed.total);
        layouts += 1;
    }
    Ok(format!("500 random profiles, {layouts} layouts, worst difference {worst:.1e}s"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("federated learning placement", fl_scheduling),
        ("video pipeline placement", video_scheduling),
        ("latency anchors", latency_anchors),
        ("two-level aggregation exactness", aggregation_exactness),
        ("scheduler oracle equivalence", scheduler_oracle),
        ("storage state machine", storage_state_machine),
        ("registry properties", registry_properties),
        ("crash recovery", crash_recovery),
        ("cost model and trace equivalence", cost_model_equivalence),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} PASS [{name}] {detail} ({secs:.2}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL [{name}] {why} ({secs:.2}s)", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
}
