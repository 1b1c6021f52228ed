//! Persistent continual cluster state: pseudo-labeled clusters with FIFO
//! replay buffers, the distance novelty threshold, and identity matching
//! of re-discovered modes across tasks.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, UvclError};
use crate::kde::{distance, Mode};

/// Per-cluster FIFO exemplar store, oldest first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Vec<f64>>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            items: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: Vec<f64>) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.items.iter()
    }
}

/// One pseudo-labeled cluster. Ids are issued monotonically and double as
/// indices into `Registry::clusters`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    pub center: Vec<f64>,
    pub buffer: ReplayBuffer,
    pub created_at_task: usize,
}

/// Whether a sample falls inside the known cluster landscape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KdeNovelty {
    Known(usize),
    Novel,
}

/// The full continual cluster model for the KDE variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Registry {
    pub dimension: usize,
    pub theta1: Option<f64>,
    pub clusters: Vec<Cluster>,
    pub next_id: usize,
}

impl Registry {
    pub fn new(dimension: usize) -> Self {
        Registry {
            dimension,
            theta1: None,
            clusters: Vec::new(),
            next_id: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn cluster(&self, id: usize) -> Result<&Cluster> {
        self.clusters.get(id).ok_or(UvclError::UnknownCluster(id))
    }

    /// Max pairwise distance between cluster centers. Computed once from
    /// the first task's clusters and then frozen.
    pub fn estimate_theta1(&mut self) -> Result<f64> {
        if self.clusters.len() < 2 {
            return Err(UvclError::Theta1Undefined);
        }
        let mut max = 0.0f64;
        for i in 0..self.clusters.len() {
            for j in (i + 1)..self.clusters.len() {
                max = max.max(distance(&self.clusters[i].center, &self.clusters[j].center));
            }
        }
        self.theta1 = Some(max);
        Ok(max)
    }

    /// Single-cluster fallback: the bandwidth is the only distance scale.
    pub fn set_theta1_fallback(&mut self, h: f64) {
        self.theta1 = Some(2.0 * h);
    }

    /// Distance novelty test: novel iff the nearest center is strictly
    /// farther than theta1.
    pub fn novelty_kde(&self, x: &[f64]) -> Result<KdeNovelty> {
        let theta1 = self.theta1.ok_or(UvclError::Theta1Unset)?;
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for c in &self.clusters {
            let d = distance(x, &c.center);
            if d < best_d {
                best_d = d;
                best = Some(c.id);
            }
        }
        match best {
            Some(id) if best_d <= theta1 => Ok(KdeNovelty::Known(id)),
            _ => Ok(KdeNovelty::Novel),
        }
    }

    pub fn add_cluster(&mut self, center: Vec<f64>, capacity: usize, task: usize) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        self.clusters.push(Cluster {
            id,
            center,
            buffer: ReplayBuffer::new(capacity),
            created_at_task: task,
        });
        id
    }

    pub fn push_exemplars(&mut self, cluster_id: usize, items: Vec<Vec<f64>>) -> Result<()> {
        let cluster = self
            .clusters
            .get_mut(cluster_id)
            .ok_or(UvclError::UnknownCluster(cluster_id))?;
        for item in items {
            cluster.buffer.push(item);
        }
        Ok(())
    }

    /// Greedy nearest matching of freshly found modes to existing cluster
    /// identities. Pairs are considered in ascending distance order; a
    /// mode within theta1 of an unclaimed center takes over that cluster
    /// (the center drifts to the mode); everything left becomes new.
    /// Returns the cluster id for each mode, in mode order.
    pub fn match_modes_to_clusters(
        &mut self,
        modes: &[Mode],
        buffer_capacity: usize,
        task: usize,
    ) -> Result<Vec<usize>> {
        let theta1 = self.theta1.unwrap_or(f64::INFINITY);
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        if !self.clusters.is_empty() {
            for (mi, m) in modes.iter().enumerate() {
                for c in &self.clusters {
                    let d = distance(&m.center, &c.center);
                    if d <= theta1 {
                        pairs.push((d, mi, c.id));
                    }
                }
            }
        }
        pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());

        let mut mode_assignment: Vec<Option<usize>> = vec![None; modes.len()];
        let mut claimed = vec![false; self.clusters.len()];
        for (_, mi, cid) in pairs {
            if mode_assignment[mi].is_none() && !claimed[cid] {
                mode_assignment[mi] = Some(cid);
                claimed[cid] = true;
            }
        }
        let mut out = Vec::with_capacity(modes.len());
        for (mi, m) in modes.iter().enumerate() {
            match mode_assignment[mi] {
                Some(cid) => {
                    self.clusters[cid].center = m.center.clone();
                    out.push(cid);
                }
                None => out.push(self.add_cluster(m.center.clone(), buffer_capacity, task)),
            }
        }
        Ok(out)
    }

    /// All buffered exemplars tagged with their pseudo-label.
    pub fn memory_snapshot(&self) -> Vec<(Vec<f64>, usize)> {
        self.clusters
            .iter()
            .flat_map(|c| c.buffer.iter().map(move |v| (v.clone(), c.id)))
            .collect()
    }

    pub fn total_buffered(&self) -> usize {
        self.clusters.iter().map(|c| c.buffer.len()).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| UvclError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| UvclError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
