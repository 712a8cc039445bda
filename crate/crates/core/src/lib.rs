//! Unified function and storage control plane for tiered IoT, edge and
//! cloud resources.

pub mod aggregation;
pub mod appmodel;
pub mod backends;
pub mod fixtures;
pub mod functions;
pub mod metrics;
pub mod registry;
pub mod scheduler;
pub mod storage;
pub mod store;
pub mod harness;
pub mod platform;
