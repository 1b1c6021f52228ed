//! The continual loop for both variants: pure KDE clustering with replay,
//! and KDE clustering with a confidence-gated linear head.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UvclError};
use crate::head::{novelty_rbf, AdamState, LinearHead, RbfNovelty, TrainConfig};
use crate::ingest::TaskBatch;
use crate::kde::{assign_to_modes, find_modes_detailed, Bandwidth, MeanShiftConfig};
use crate::metrics::{acacc, bwf, cluster_accuracy, fwf, AccuracyTrace};
use crate::registry::{KdeNovelty, Registry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Kde,
    KdeRbf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineConfig {
    pub variant: Variant,
    pub bandwidth: f64,
    pub theta2: f64,
    pub buffer_capacity: usize,
    pub train: TrainConfig,
    pub meanshift: MeanShiftConfig,
    pub seed: u64,
    pub eval_each_task: bool,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        Bandwidth::new(self.bandwidth)?;
        if !(self.theta2 > 0.0 && self.theta2 <= 1.0) {
            return Err(UvclError::InvalidConfig("theta2 must be in (0, 1]".into()));
        }
        self.train.validate()?;
        self.meanshift.validate()?;
        Ok(())
    }

    pub fn defaults_with(variant: Variant, bandwidth: f64, seed: u64) -> Self {
        EngineConfig {
            variant,
            bandwidth,
            theta2: 0.3,
            buffer_capacity: 20,
            train: TrainConfig::default(),
            meanshift: MeanShiftConfig::default(),
            seed,
            eval_each_task: true,
        }
    }
}

/// Per-task outcome. Wall time is informational only and stays out of the
/// serialized report so that identical runs produce identical bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_index: usize,
    pub clusters: usize,
    pub cacc: Option<f64>,
    pub novel_count: usize,
    pub merged_count: usize,
    #[serde(skip)]
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: EngineConfig,
    pub theta1: Option<f64>,
    pub theta1_fallback_used: bool,
    pub per_task: Vec<TaskReport>,
    pub acacc: Option<f64>,
    pub bwf: Option<f64>,
    pub fwf: Option<f64>,
}

impl RunReport {
    pub fn trace(&self) -> AccuracyTrace {
        AccuracyTrace {
            per_task: self.per_task.iter().filter_map(|t| t.cacc).collect(),
        }
    }

    /// Trace CSV rows: task,L_k,cacc.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("task,L_k,cacc\n");
        for t in &self.per_task {
            let cacc = t.cacc.map(|c| c.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", t.task_index, t.clusters, cacc));
        }
        out
    }
}

fn derived_seed(seed: u64, task: usize, salt: u64) -> u64 {
    seed ^ (task as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt
}

const SALT_BUFFER: u64 = 0x01;
const SALT_TRAIN: u64 = 0x02;
const SALT_HEAD: u64 = 0x03;

/// One continual run: registry plus, for the RBF variant, the head and its
/// optimizer state.
pub struct Engine {
    pub cfg: EngineConfig,
    pub registry: Registry,
    pub head: Option<LinearHead>,
    pub opt: Option<AdamState>,
    theta1_fallback: bool,
}

impl Engine {
    pub fn new(cfg: EngineConfig, dimension: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Engine {
            cfg,
            registry: Registry::new(dimension),
            head: None,
            opt: None,
            theta1_fallback: false,
        })
    }

    fn bandwidth(&self) -> Bandwidth {
        Bandwidth::new(self.cfg.bandwidth).expect("validated")
    }

    fn check_dim(&self, batch: &TaskBatch) -> Result<()> {
        batch.validate()?;
        if batch.dim() != self.registry.dimension {
            return Err(UvclError::DimensionMismatch {
                expected: self.registry.dimension,
                got: batch.dim(),
            });
        }
        Ok(())
    }

    /// Random N-subsample (in original order) of this task's per-cluster
    /// assignments, then FIFO push.
    fn push_buffers(&mut self, groups: Vec<(usize, Vec<Vec<f64>>)>, task: usize) -> Result<()> {
        use rand::SeedableRng;
        let n = self.cfg.buffer_capacity;
        for (cluster_id, items) in groups {
            let picked = if items.len() > n {
                let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(derived_seed(
                    self.cfg.seed,
                    task,
                    SALT_BUFFER.wrapping_add(cluster_id as u64),
                ));
                let mut idx = rand::seq::index::sample(&mut rng, items.len(), n).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| items[i].clone()).collect()
            } else {
                items
            };
            self.registry.push_exemplars(cluster_id, picked)?;
        }
        Ok(())
    }

    fn group_by_cluster(labels: &[usize], feats: &[Vec<f64>]) -> Vec<(usize, Vec<Vec<f64>>)> {
        let mut map: std::collections::BTreeMap<usize, Vec<Vec<f64>>> = Default::default();
        for (label, feat) in labels.iter().zip(feats) {
            map.entry(*label).or_default().push(feat.clone());
        }
        map.into_iter().collect()
    }

    fn finish_theta1(&mut self) {
        if self.registry.theta1.is_none() {
            if self.registry.estimate_theta1().is_err() {
                self.registry.set_theta1_fallback(self.cfg.bandwidth);
                self.theta1_fallback = true;
            }
        }
    }

    /// KDE variant task: mean-shift over memory plus new data, identity
    /// matching, buffer refresh, theta1 freeze after the first task.
    pub fn run_task_kde(&mut self, batch: &TaskBatch) -> Result<TaskReport> {
        let start = std::time::Instant::now();
        self.check_dim(batch)?;
        let task = batch.task_index;
        let feats = batch.features();

        let novel_count = if self.registry.theta1.is_some() {
            feats
                .iter()
                .filter(|x| self.registry.novelty_kde(x).map(|n| n == KdeNovelty::Novel).unwrap_or(false))
                .count()
        } else {
            feats.len()
        };

        let mut pool: Vec<Vec<f64>> = self
            .registry
            .memory_snapshot()
            .into_iter()
            .map(|(v, _)| v)
            .collect();
        pool.extend(feats.iter().cloned());

        let (mut modes, merged_count) =
            find_modes_detailed(&pool, self.bandwidth(), &self.cfg.meanshift)?;
        let mode_ids =
            self.registry
                .match_modes_to_clusters(&modes, self.cfg.buffer_capacity, task)?;
        let assignment = assign_to_modes(&feats, &mut modes)?;
        let labels: Vec<usize> = assignment.iter().map(|&m| mode_ids[m]).collect();
        self.push_buffers(Self::group_by_cluster(&labels, &feats), task)?;
        self.finish_theta1();

        log::info!(
            "task={} variant=kde clusters={} novel={} merged={}",
            task,
            self.registry.len(),
            novel_count,
            merged_count
        );
        Ok(TaskReport {
            task_index: task,
            clusters: self.registry.len(),
            cacc: None,
            novel_count,
            merged_count,
            wall_time_ms: start.elapsed().as_millis() as u64,
        })
    }

    /// Confidence gate for the RBF variant. The softmax test alone goes
    /// dead while the head has fewer than 1/theta2 rows (its max output
    /// never drops below 1/L), so the distance test backstops it: a
    /// sample is novel when the head is unsure or it sits beyond theta1
    /// of every known center.
    fn rbf_is_novel(&self, head: &LinearHead, x: &[f64]) -> Result<(bool, usize)> {
        match novelty_rbf(head, x, self.cfg.theta2)? {
            RbfNovelty::Novel => Ok((true, 0)),
            RbfNovelty::Known { label, .. } => {
                if self.registry.novelty_kde(x)? == KdeNovelty::Novel {
                    Ok((true, 0))
                } else {
                    Ok((false, label))
                }
            }
        }
    }

    /// RBF variant task: gate, cluster the novel pool into fresh clusters,
    /// expand the head, retrain with focal loss on memory plus the task.
    pub fn run_task_rbf(&mut self, batch: &TaskBatch) -> Result<TaskReport> {
        let start = std::time::Instant::now();
        self.check_dim(batch)?;
        let task = batch.task_index;
        let feats = batch.features();
        let dim = self.registry.dimension;

        let (labels, novel_count, merged_count);
        if self.head.is_none() {
            // First task: behave like the KDE variant, then train from a
            // random init.
            let (mut modes, merged) =
                find_modes_detailed(&feats, self.bandwidth(), &self.cfg.meanshift)?;
            let mode_ids =
                self.registry
                    .match_modes_to_clusters(&modes, self.cfg.buffer_capacity, task)?;
            let assignment = assign_to_modes(&feats, &mut modes)?;
            labels = assignment.iter().map(|&m| mode_ids[m]).collect::<Vec<_>>();
            novel_count = feats.len();
            merged_count = merged;
            self.finish_theta1();
            let head = LinearHead::random(
                self.registry.len(),
                dim,
                derived_seed(self.cfg.seed, task, SALT_HEAD),
            );
            self.opt = Some(AdamState::new(self.registry.len(), dim));
            self.head = Some(head);
        } else {
            let head = self.head.as_ref().unwrap();
            let mut gated: Vec<Option<usize>> = Vec::with_capacity(feats.len());
            let mut novel_feats: Vec<Vec<f64>> = Vec::new();
            for x in &feats {
                let (novel, label) = self.rbf_is_novel(head, x)?;
                if novel {
                    gated.push(None);
                    novel_feats.push(x.clone());
                } else {
                    gated.push(Some(label));
                }
            }
            novel_count = novel_feats.len();
            let mut new_ids: Vec<usize> = Vec::new();
            let mut novel_modes = Vec::new();
            let mut merged = 0;
            if !novel_feats.is_empty() {
                let (modes, m) =
                    find_modes_detailed(&novel_feats, self.bandwidth(), &self.cfg.meanshift)?;
                merged = m;
                // Every novel-pool mode opens a fresh cluster: the gate
                // already ruled these samples out of the known landscape.
                for mode in &modes {
                    new_ids.push(self.registry.add_cluster(
                        mode.center.clone(),
                        self.cfg.buffer_capacity,
                        task,
                    ));
                }
                novel_modes = modes;
            }
            merged_count = merged;
            let novel_labels: Vec<usize> = if novel_modes.is_empty() {
                Vec::new()
            } else {
                assign_to_modes(&novel_feats, &mut novel_modes)?
                    .into_iter()
                    .map(|m| new_ids[m])
                    .collect()
            };
            let mut novel_iter = novel_labels.into_iter();
            labels = gated
                .into_iter()
                .map(|g| g.unwrap_or_else(|| novel_iter.next().expect("one label per novel sample")))
                .collect();
            if !new_ids.is_empty() {
                let head = self.head.as_mut().unwrap();
                head.expand(
                    new_ids.len(),
                    dim,
                    derived_seed(self.cfg.seed, task, SALT_HEAD),
                )?;
                self.opt.as_mut().unwrap().expand(self.registry.len(), dim);
            }
        }

        // Retrain on memory plus the current task's assignments.
        let mut train_data: Vec<(Vec<f64>, usize)> = self.registry.memory_snapshot();
        train_data.extend(feats.iter().cloned().zip(labels.iter().cloned()));
        let train_cfg = TrainConfig {
            seed: derived_seed(self.cfg.seed, task, SALT_TRAIN),
            theta2: self.cfg.theta2,
            ..self.cfg.train
        };
        let loss = crate::head::train(
            self.head.as_mut().unwrap(),
            self.opt.as_mut().unwrap(),
            &train_data,
            &train_cfg,
        )?;

        self.push_buffers(Self::group_by_cluster(&labels, &feats), task)?;

        log::info!(
            "task={} variant=kde_rbf clusters={} novel={} merged={} loss={:.6}",
            task,
            self.registry.len(),
            novel_count,
            merged_count,
            loss
        );
        Ok(TaskReport {
            task_index: task,
            clusters: self.registry.len(),
            cacc: None,
            novel_count,
            merged_count,
            wall_time_ms: start.elapsed().as_millis() as u64,
        })
    }

    pub fn run_task(&mut self, batch: &TaskBatch) -> Result<TaskReport> {
        match self.cfg.variant {
            Variant::Kde => self.run_task_kde(batch),
            Variant::KdeRbf => self.run_task_rbf(batch),
        }
    }

    /// Accuracy on a labeled test set: nearest center for the KDE variant,
    /// argmax softmax for the RBF variant.
    pub fn evaluate_after_task(&self, test: &TaskBatch) -> Result<f64> {
        let truth = test.labels().ok_or(UvclError::UnlabeledTestSet)?;
        let pred = self.predict(test)?;
        cluster_accuracy(&pred, &truth)
    }

    pub fn predict(&self, batch: &TaskBatch) -> Result<Vec<usize>> {
        let feats = batch.features();
        match (self.cfg.variant, &self.head) {
            (Variant::KdeRbf, Some(head)) => feats
                .iter()
                .map(|x| {
                    let z = head.logits(x)?;
                    Ok(z.iter()
                        .enumerate()
                        .fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                            if v > bv {
                                (i, v)
                            } else {
                                (bi, bv)
                            }
                        })
                        .0)
                })
                .collect(),
            _ => {
                if self.registry.is_empty() {
                    return Err(UvclError::EmptyInput("predict with empty registry"));
                }
                Ok(feats
                    .iter()
                    .map(|x| {
                        self.registry
                            .clusters
                            .iter()
                            .map(|c| crate::kde::squared_distance(x, &c.center))
                            .enumerate()
                            .fold((0usize, f64::INFINITY), |(bi, bv), (i, v)| {
                                if v < bv {
                                    (i, v)
                                } else {
                                    (bi, bv)
                                }
                            })
                            .0
                    })
                    .collect())
            }
        }
    }

    /// Full stream: tasks in order, optional per-task evaluation, final
    /// aggregates. Deterministic given (stream, config, seed).
    pub fn run_stream(&mut self, tasks: &[TaskBatch], test: Option<&TaskBatch>) -> Result<RunReport> {
        if tasks.is_empty() {
            return Err(UvclError::EmptyInput("run_stream tasks"));
        }
        let mut per_task = Vec::with_capacity(tasks.len());
        for batch in tasks {
            let mut report = self.run_task(batch)?;
            if self.cfg.eval_each_task {
                if let Some(test) = test {
                    report.cacc = Some(self.evaluate_after_task(test)?);
                }
            }
            per_task.push(report);
        }
        let trace = AccuracyTrace {
            per_task: per_task.iter().filter_map(|t| t.cacc).collect(),
        };
        let (a, b, f) = if trace.is_empty() {
            (None, None, None)
        } else {
            (
                Some(acacc(&trace)?),
                bwf(&trace).ok(),
                fwf(&trace).ok(),
            )
        };
        Ok(RunReport {
            config: self.cfg.clone(),
            theta1: self.registry.theta1,
            theta1_fallback_used: self.theta1_fallback,
            per_task,
            acacc: a,
            bwf: b,
            fwf: f,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic_stream, generate_synthetic_test, SyntheticSpec};

    fn spec(num_classes: usize, tasks: usize, schedule: Option<Vec<Vec<usize>>>) -> SyntheticSpec {
        SyntheticSpec {
            num_classes,
            dim: 8,
            class_centers: vec![],
            center_separation: Some(20.0),
            class_stddev: 1.0,
            tasks,
            examples_per_task: 60,
            classes_per_task_schedule: schedule,
            seed: 5,
            test_examples_per_class: 10,
        }
    }

    #[test]
    fn kde_task_one_three_gaussians() {
        let s = spec(3, 1, Some(vec![vec![0, 1, 2]]));
        let tasks = generate_synthetic_stream(&s).unwrap();
        let cfg = EngineConfig::defaults_with(Variant::Kde, 3.0, 1);
        let mut engine = Engine::new(cfg, 8).unwrap();
        engine.run_task_kde(&tasks[0]).unwrap();
        assert_eq!(engine.registry.len(), 3);
        // theta1 equals the max pairwise distance of the 3 centers
        let mut snapshot = engine.registry.clone();
        let expect = snapshot.estimate_theta1().unwrap();
        assert_eq!(engine.registry.theta1, Some(expect));
    }

    #[test]
    fn kde_stable_across_resampled_tasks() {
        let s = spec(3, 3, Some(vec![vec![0, 1, 2]; 3]));
        let tasks = generate_synthetic_stream(&s).unwrap();
        let cfg = EngineConfig::defaults_with(Variant::Kde, 3.0, 1);
        let mut engine = Engine::new(cfg, 8).unwrap();
        for t in &tasks {
            engine.run_task_kde(t).unwrap();
        }
        assert_eq!(engine.registry.len(), 3, "no spurious growth");
    }

    #[test]
    fn kde_grows_for_new_far_class() {
        let s = spec(4, 2, Some(vec![vec![0, 1, 2], vec![0, 1, 2, 3]]));
        let tasks = generate_synthetic_stream(&s).unwrap();
        let cfg = EngineConfig::defaults_with(Variant::Kde, 3.0, 1);
        let mut engine = Engine::new(cfg, 8).unwrap();
        engine.run_task_kde(&tasks[0]).unwrap();
        assert_eq!(engine.registry.len(), 3);
        let r = engine.run_task_kde(&tasks[1]).unwrap();
        assert_eq!(engine.registry.len(), 4);
        assert!(r.novel_count > 0);
    }

    #[test]
    fn memory_bound_holds() {
        let s = spec(3, 3, Some(vec![vec![0, 1, 2]; 3]));
        let tasks = generate_synthetic_stream(&s).unwrap();
        let mut cfg = EngineConfig::defaults_with(Variant::Kde, 3.0, 1);
        cfg.buffer_capacity = 7;
        let mut engine = Engine::new(cfg, 8).unwrap();
        for t in &tasks {
            engine.run_task_kde(t).unwrap();
            assert!(engine.registry.total_buffered() <= engine.registry.len() * 7);
        }
    }

    #[test]
    fn rbf_gate_closed_means_no_growth() {
        let s = spec(2, 2, Some(vec![vec![0, 1]; 2]));
        let tasks = generate_synthetic_stream(&s).unwrap();
        let cfg = EngineConfig::defaults_with(Variant::KdeRbf, 3.0, 1);
        let mut engine = Engine::new(cfg, 8).unwrap();
        engine.run_task_rbf(&tasks[0]).unwrap();
        assert_eq!(engine.registry.len(), 2);
        let l = engine.head.as_ref().unwrap().classes();
        let r = engine.run_task_rbf(&tasks[1]).unwrap();
        assert_eq!(r.novel_count, 0, "same classes, nothing novel");
        assert_eq!(engine.registry.len(), 2);
        assert_eq!(engine.head.as_ref().unwrap().classes(), l);
    }

    #[test]
    fn rbf_all_novel_task_spawns_mode_count() {
        let s = spec(4, 2, Some(vec![vec![0, 1], vec![2, 3]]));
        let tasks = generate_synthetic_stream(&s).unwrap();
        let cfg = EngineConfig::defaults_with(Variant::KdeRbf, 3.0, 1);
        let mut engine = Engine::new(cfg, 8).unwrap();
        engine.run_task_rbf(&tasks[0]).unwrap();
        let r = engine.run_task_rbf(&tasks[1]).unwrap();
        assert!(r.novel_count as f64 >= 0.9 * tasks[1].len() as f64);
        assert_eq!(engine.registry.len(), 4);
        assert_eq!(engine.head.as_ref().unwrap().classes(), 4);
    }

    #[test]
    fn clusters_never_shrink_and_eval_matches_metrics() {
        let s = spec(4, 2, None);
        let tasks = generate_synthetic_stream(&s).unwrap();
        let test = generate_synthetic_test(&s).unwrap();
        let cfg = EngineConfig::defaults_with(Variant::KdeRbf, 3.0, 1);
        let mut engine = Engine::new(cfg, 8).unwrap();
        let mut last = 0;
        for t in &tasks {
            let r = engine.run_task(t).unwrap();
            assert!(r.clusters >= last);
            last = r.clusters;
        }
        let acc = engine.evaluate_after_task(&test).unwrap();
        let pred = engine.predict(&test).unwrap();
        let truth = test.labels().unwrap();
        let direct = cluster_accuracy(&pred, &truth).unwrap();
        assert_eq!(acc, direct);
    }

    #[test]
    fn single_task_stream_report_shape() {
        let s = spec(3, 1, Some(vec![vec![0, 1, 2]]));
        let tasks = generate_synthetic_stream(&s).unwrap();
        let test = generate_synthetic_test(&s).unwrap();
        let cfg = EngineConfig::defaults_with(Variant::Kde, 3.0, 1);
        let mut engine = Engine::new(cfg, 8).unwrap();
        let report = engine.run_stream(&tasks, Some(&test)).unwrap();
        assert_eq!(report.per_task.len(), 1);
        assert_eq!(report.acacc, report.per_task[0].cacc);
        assert!(report.bwf.is_none());
        assert!(report.fwf.is_none());
    }

    #[test]
    fn stream_deterministic_bytes() {
        let s = spec(4, 3, None);
        let tasks = generate_synthetic_stream(&s).unwrap();
        let test = generate_synthetic_test(&s).unwrap();
        let run = || {
            let cfg = EngineConfig::defaults_with(Variant::KdeRbf, 3.0, 9);
            let mut engine = Engine::new(cfg, 8).unwrap();
            let report = engine.run_stream(&tasks, Some(&test)).unwrap();
            serde_json::to_string_pretty(&report).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn perfect_centers_give_perfect_accuracy() {
        let s = spec(3, 1, Some(vec![vec![0, 1, 2]]));
        let centers = s.centers().unwrap();
        let cfg = EngineConfig::defaults_with(Variant::Kde, 3.0, 1);
        let mut engine = Engine::new(cfg, 8).unwrap();
        for c in &centers {
            engine.registry.add_cluster(c.clone(), 20, 1);
        }
        // test points exactly at the centers
        let test = TaskBatch {
            task_index: 0,
            records: centers
                .iter()
                .enumerate()
                .map(|(i, c)| crate::ingest::FeatureRecord {
                    vector: c.iter().map(|&v| v as f32).collect(),
                    hidden_label: Some(i),
                    source_id: String::new(),
                })
                .collect(),
        };
        assert_eq!(engine.evaluate_after_task(&test).unwrap(), 1.0);
    }

    #[test]
    fn one_cluster_two_classes_modal_bound() {
        let cfg = EngineConfig::defaults_with(Variant::Kde, 3.0, 1);
        let mut engine = Engine::new(cfg, 2).unwrap();
        engine.registry.add_cluster(vec![0.0, 0.0], 20, 1);
        let test = TaskBatch {
            task_index: 0,
            records: (0..4)
                .map(|i| crate::ingest::FeatureRecord {
                    vector: vec![i as f32, 0.0],
                    hidden_label: Some(i % 2),
                    source_id: String::new(),
                })
                .collect(),
        };
        assert_eq!(engine.evaluate_after_task(&test).unwrap(), 0.5);
    }
}
