//! Per-worker accounting: bytes moved and leaf work.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::level::TensorPartitionBundle;
use crate::partition::intersect_sorted;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WorkerStats {
    pub bytes_by_tensor: BTreeMap<String, usize>,
    /// Products computed by the worker's leaf.
    pub work: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub workers: usize,
    pub per_worker: Vec<WorkerStats>,
    /// Largest work over mean work (1.0 when nobody works).
    pub imbalance: f64,
    /// Output entries written by more than one worker.
    pub combines: usize,
}

impl Stats {
    pub fn new(per_worker: Vec<WorkerStats>, combines: usize) -> Self {
        let workers = per_worker.len();
        let total: usize = per_worker.iter().map(|w| w.work).sum();
        let max = per_worker.iter().map(|w| w.work).max().unwrap_or(0);
        let imbalance = if total == 0 {
            1.0
        } else {
            max as f64 / (total as f64 / workers as f64)
        };
        Stats { workers, per_worker, imbalance, combines }
    }

    pub fn bytes(&self, worker: usize, tensor: &str) -> usize {
        self.per_worker[worker].bytes_by_tensor.get(tensor).copied().unwrap_or(0)
    }

    pub fn total_bytes(&self) -> usize {
        self.per_worker.iter().flat_map(|w| w.bytes_by_tensor.values()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }
}

/// Bytes worker `color` must receive to hold `needed`, given that it already
/// holds `resident` (nothing when `None`).
pub fn communication_bytes(
    needed: &TensorPartitionBundle,
    resident: Option<&TensorPartitionBundle>,
    color: usize,
) -> usize {
    let wanted = needed.regions();
    let owned = resident.map(|r| r.regions());
    wanted
        .iter()
        .enumerate()
        .map(|(k, region)| {
            let want = region.partition.subset(color);
            let have = owned
                .as_ref()
                .map(|o| intersect_sorted(want, o[k].partition.subset(color)).len())
                .unwrap_or(0);
            (want.len() - have) * region.kind.bytes()
        })
        .sum()
}
