//! Bundled manifests and the evaluation topology.

use crate::backends::sim::FabricTopology;

/// Six-stage video analytics application.
pub const VIDEO_PIPELINE_YAML: &str = include_str!("../fixtures/videopipeline.yaml");
/// Two-level federated learning application.
pub const FEDERATED_LEARNING_YAML: &str = include_str!("../fixtures/federatedlearning.yaml");
/// Sample resource registration manifest.
pub const SAMPLE_RESOURCE_YAML: &str = include_str!("../fixtures/sample-resource.yaml");
/// Eight IoT devices in two sets of four, one edge server per set, one
/// cloud cluster.
pub const REFERENCE_FABRIC_YAML: &str = include_str!("../fixtures/reference-fabric.yaml");

pub fn reference_topology() -> FabricTopology {
    FabricTopology::from_yaml(REFERENCE_FABRIC_YAML).expect("bundled topology parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{ResourceId, Tier};

    /// Distance along the iot -> edge -> cloud tree.
    fn tree_rtt(a: u32, b: u32) -> f64 {
        let hop = |n: u32| -> Option<(u32, f64)> {
            match n {
                0..=3 => Some((8, 5.7)),
                4..=7 => Some((9, 0.6)),
                8 => Some((10, 43.4)),
                9 => Some((10, 4.7)),
                _ => None,
            }
        };
        let ancestors = |mut n: u32| {
            let mut out = vec![(n, 0.0)];
            let mut d = 0.0;
            while let Some((p, w)) = hop(n) {
                d += w;
                out.push((p, d));
                n = p;
            }
            out
        };
        let up_a = ancestors(a);
        for (node, db) in ancestors(b) {
            if let Some((_, da)) = up_a.iter().find(|(n, _)| *n == node) {
                return da + db;
            }
        }
        unreachable!("tree is connected")
    }

    #[test]
    fn reference_shape() {
        let topo = reference_topology();
        let count = |t| topo.resources.iter().filter(|r| r.tier == t).count();
        assert_eq!((count(Tier::Iot), count(Tier::Edge), count(Tier::Cloud)), (8, 2, 1));
        for a in 0..11 {
            for b in 0..11 {
                let got = topo.rtt_ms.get(ResourceId(a), ResourceId(b));
                assert!((got - tree_rtt(a, b)).abs() < 1e-9, "{a}-{b}: {got}");
            }
        }
    }
}
