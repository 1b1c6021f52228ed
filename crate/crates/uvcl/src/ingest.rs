//! Feature-file IO, task-stream manifests, and synthetic Gaussian-mixture
//! stream generation.
//!
//! Binary feature file layout (little-endian throughout):
//!
//! ```text
//! magic "UVCL" | version u32 = 1 | count u64 | dim u32 | count*dim f32 row-major
//! ```
//!
//! Ground-truth labels never live in the payload. They go to an optional
//! sidecar `<path>.labels.csv` (one integer per line) so that learner code
//! structurally cannot see them; only evaluation reads the sidecar.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UvclError};

const MAGIC: &[u8; 4] = b"UVCL";
const VERSION: u32 = 1;

/// One feature vector with optional hidden ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub vector: Vec<f32>,
    pub hidden_label: Option<usize>,
    pub source_id: String,
}

impl FeatureRecord {
    pub fn new(vector: Vec<f32>) -> Self {
        FeatureRecord {
            vector,
            hidden_label: None,
            source_id: String::new(),
        }
    }

    /// Feature values widened to f64 for numeric work.
    pub fn as_f64(&self) -> Vec<f64> {
        self.vector.iter().map(|&v| v as f64).collect()
    }
}

/// One task's worth of records, presented as a unit of continual learning.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskBatch {
    pub task_index: usize,
    pub records: Vec<FeatureRecord>,
}

impl TaskBatch {
    pub fn dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.vector.len())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// All feature vectors as f64 rows.
    pub fn features(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.as_f64()).collect()
    }

    /// Hidden labels, present for all records or for none.
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.records.iter().map(|r| r.hidden_label).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(UvclError::EmptyBatch);
        }
        let d = self.records[0].vector.len();
        if d == 0 {
            return Err(UvclError::ZeroDimension);
        }
        let labeled = self.records[0].hidden_label.is_some();
        for (i, rec) in self.records.iter().enumerate() {
            if rec.vector.len() != d {
                return Err(UvclError::DimensionMismatch {
                    expected: d,
                    got: rec.vector.len(),
                });
            }
            if rec.vector.iter().any(|v| !v.is_finite()) {
                return Err(UvclError::NonFiniteValue { record: i });
            }
            if rec.hidden_label.is_some() != labeled {
                return Err(UvclError::InvalidSpec(
                    "hidden labels must cover all records or none".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Ordered task-file references defining one stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamManifest {
    pub dimension: usize,
    pub tasks: Vec<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

impl StreamManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| UvclError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| UvclError::io(path, e))
    }
}

/// Parameters for the deterministic Gaussian-mixture stream generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub dim: usize,
    /// One center per class. Empty with `center_separation` set means
    /// centers are placed on scaled coordinate axes at that separation.
    #[serde(default)]
    pub class_centers: Vec<Vec<f64>>,
    #[serde(default)]
    pub center_separation: Option<f64>,
    pub class_stddev: f64,
    pub tasks: usize,
    #[serde(default = "default_examples_per_task")]
    pub examples_per_task: usize,
    /// Which classes are active at each task. Default: task t draws from
    /// classes {0..2(t+1)} so every task mixes new and old classes.
    #[serde(default)]
    pub classes_per_task_schedule: Option<Vec<Vec<usize>>>,
    pub seed: u64,
    #[serde(default = "default_test_examples")]
    pub test_examples_per_class: usize,
}

fn default_examples_per_task() -> usize {
    256
}

fn default_test_examples() -> usize {
    20
}

impl SyntheticSpec {
    /// Effective class centers, materializing the axis placement when
    /// explicit centers were not given.
    pub fn centers(&self) -> Result<Vec<Vec<f64>>> {
        if !self.class_centers.is_empty() {
            return Ok(self.class_centers.clone());
        }
        match self.center_separation {
            Some(sep) => orthogonal_centers(self.num_classes, self.dim, sep),
            None => Err(UvclError::InvalidSpec(
                "either class_centers or center_separation is required".into(),
            )),
        }
    }

    /// Active classes for task `t` (0-based).
    pub fn schedule_for(&self, t: usize) -> Vec<usize> {
        match &self.classes_per_task_schedule {
            Some(s) => s[t].clone(),
            None => (0..(2 * (t + 1)).min(self.num_classes)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.dim == 0 || self.tasks == 0 {
            return Err(UvclError::InvalidSpec(
                "num_classes, dim and tasks must be positive".into(),
            ));
        }
        if self.examples_per_task == 0 {
            return Err(UvclError::InvalidSpec("examples_per_task must be >= 1".into()));
        }
        if !(self.class_stddev >= 0.0 && self.class_stddev.is_finite()) {
            return Err(UvclError::InvalidSpec("class_stddev must be finite and >= 0".into()));
        }
        let centers = self.centers()?;
        if centers.len() != self.num_classes {
            return Err(UvclError::InvalidSpec(format!(
                "expected {} class centers, got {}",
                self.num_classes,
                centers.len()
            )));
        }
        for c in &centers {
            if c.len() != self.dim {
                return Err(UvclError::DimensionMismatch {
                    expected: self.dim,
                    got: c.len(),
                });
            }
        }
        for i in 0..centers.len() {
            for j in (i + 1)..centers.len() {
                if centers[i] == centers[j] {
                    return Err(UvclError::InvalidSpec(format!(
                        "class centers {i} and {j} coincide"
                    )));
                }
            }
        }
        if let Some(schedule) = &self.classes_per_task_schedule {
            if schedule.len() != self.tasks {
                return Err(UvclError::InvalidSpec(
                    "schedule length must equal task count".into(),
                ));
            }
            let mut seen = vec![false; self.num_classes];
            for entry in schedule {
                if entry.is_empty() {
                    return Err(UvclError::InvalidSpec("empty schedule entry".into()));
                }
                for &c in entry {
                    if c >= self.num_classes {
                        return Err(UvclError::InvalidSpec(format!(
                            "schedule references unknown class {c}"
                        )));
                    }
                    seen[c] = true;
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(UvclError::InvalidSpec(
                    "schedule must cover every class at least once".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Centers on coordinate axes with growing radii: center i sits at
/// `(sep/sqrt(2)) * (1 + i/4)` along axis i. Orthogonality makes every
/// pairwise distance at least `sep`; the growing radii keep later classes
/// strictly outside the distance scale set by earlier ones. Requires
/// m <= d.
pub fn orthogonal_centers(m: usize, d: usize, sep: f64) -> Result<Vec<Vec<f64>>> {
    if m > d {
        return Err(UvclError::InvalidSpec(format!(
            "axis placement needs num_classes <= dim ({m} > {d})"
        )));
    }
    if !(sep > 0.0 && sep.is_finite()) {
        return Err(UvclError::InvalidSpec("separation must be positive".into()));
    }
    let base = sep / std::f64::consts::SQRT_2;
    Ok((0..m)
        .map(|i| {
            let mut c = vec![0.0; d];
            c[i] = base * (1.0 + i as f64 / 4.0);
            c
        })
        .collect())
}

/// Write a task batch to the binary feature format. Hidden labels, when
/// present, go to the `<path>.labels.csv` sidecar.
pub fn write_features(batch: &TaskBatch, path: &Path) -> Result<()> {
    batch.validate()?;
    let d = batch.dim();
    let mut buf = Vec::with_capacity(20 + batch.len() * d * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(batch.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    for rec in &batch.records {
        for &v in &rec.vector {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| UvclError::io(path, e))?;
    file.write_all(&buf).map_err(|e| UvclError::io(path, e))?;

    if batch.records[0].hidden_label.is_some() {
        let side = sidecar_path(path);
        let mut text = String::new();
        for rec in &batch.records {
            text.push_str(&rec.hidden_label.unwrap().to_string());
            text.push('\n');
        }
        fs::write(&side, text).map_err(|e| UvclError::io(side, e))?;
    }
    Ok(())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".labels.csv");
    PathBuf::from(s)
}

/// Read a feature file; never touches the label sidecar. Falls back to
/// parsing plain CSV (one row per record) when the magic is absent.
pub fn read_features(path: &Path) -> Result<TaskBatch> {
    let bytes = fs::read(path).map_err(|e| UvclError::io(path, e))?;
    if bytes.len() >= 4 && &bytes[..4] == MAGIC {
        read_binary(path, &bytes)
    } else {
        read_csv(path, &bytes)
    }
}

fn read_binary(path: &Path, bytes: &[u8]) -> Result<TaskBatch> {
    if bytes.len() < 20 {
        return Err(UvclError::Truncated {
            path: path.into(),
            need: 20,
            have: bytes.len(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(UvclError::BadVersion(version));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(UvclError::ZeroDimension);
    }
    let need = count * dim * 4;
    let payload = &bytes[20..];
    if payload.len() < need {
        return Err(UvclError::Truncated {
            path: path.into(),
            need,
            have: payload.len(),
        });
    }
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let row = &payload[i * dim * 4..(i + 1) * dim * 4];
        let vector: Vec<f32> = row
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push(FeatureRecord {
            vector,
            hidden_label: None,
            source_id: format!("{}#{}", path.display(), i),
        });
    }
    Ok(TaskBatch {
        task_index: 0,
        records,
    })
}

fn read_csv(path: &Path, bytes: &[u8]) -> Result<TaskBatch> {
    let text = std::str::from_utf8(bytes).map_err(|_| UvclError::BadMagic { path: path.into() })?;
    let mut records = Vec::new();
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vector: Vec<f32> = line
            .split(',')
            .map(|f| f.trim().parse::<f32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| UvclError::BadMagic { path: path.into() })?;
        match dim {
            None => dim = Some(vector.len()),
            Some(d) if d != vector.len() => {
                return Err(UvclError::DimensionMismatch {
                    expected: d,
                    got: vector.len(),
                })
            }
            _ => {}
        }
        records.push(FeatureRecord {
            vector,
            hidden_label: None,
            source_id: format!("{}#{}", path.display(), i),
        });
    }
    if records.is_empty() {
        return Err(UvclError::BadMagic { path: path.into() });
    }
    Ok(TaskBatch {
        task_index: 0,
        records,
    })
}

/// Read a feature file and attach labels from the sidecar, if one exists.
/// Evaluation-only entry point.
pub fn read_features_labeled(path: &Path) -> Result<TaskBatch> {
    let mut batch = read_features(path)?;
    let side = sidecar_path(path);
    if side.exists() {
        let text = fs::read_to_string(&side).map_err(|e| UvclError::io(&side, e))?;
        let labels: Vec<usize> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse::<usize>()
                    .map_err(|_| UvclError::InvalidSpec(format!("bad label line: {l}")))
            })
            .collect::<Result<_>>()?;
        if labels.len() != batch.len() {
            return Err(UvclError::LengthMismatch(labels.len(), batch.len()));
        }
        for (rec, lab) in batch.records.iter_mut().zip(labels) {
            rec.hidden_label = Some(lab);
        }
    }
    Ok(batch)
}

/// Draw the full task stream for a spec. Same seed, same bytes.
pub fn generate_synthetic_stream(spec: &SyntheticSpec) -> Result<Vec<TaskBatch>> {
    spec.validate()?;
    let centers = spec.centers()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut batches = Vec::with_capacity(spec.tasks);
    for t in 0..spec.tasks {
        let active = spec.schedule_for(t);
        let mut records = Vec::with_capacity(spec.examples_per_task);
        for i in 0..spec.examples_per_task {
            let class = active[rng.random_range(0..active.len())];
            records.push(FeatureRecord {
                vector: sample_around(&centers[class], spec.class_stddev, &mut rng),
                hidden_label: Some(class),
                source_id: format!("synthetic/task{}/{}", t + 1, i),
            });
        }
        batches.push(TaskBatch {
            task_index: t + 1,
            records,
        });
    }
    Ok(batches)
}

/// Held-out labeled test draw covering every class, from an independent
/// RNG stream of the same seed.
pub fn generate_synthetic_test(spec: &SyntheticSpec) -> Result<TaskBatch> {
    spec.validate()?;
    let centers = spec.centers()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let mut records = Vec::new();
    for class in 0..spec.num_classes {
        for i in 0..spec.test_examples_per_class {
            records.push(FeatureRecord {
                vector: sample_around(&centers[class], spec.class_stddev, &mut rng),
                hidden_label: Some(class),
                source_id: format!("synthetic/test/{class}/{i}"),
            });
        }
    }
    Ok(TaskBatch {
        task_index: 0,
        records,
    })
}

fn sample_around(center: &[f64], stddev: f64, rng: &mut ChaCha20Rng) -> Vec<f32> {
    center
        .iter()
        .map(|&c| {
            let n: f64 = rng.sample(StandardNormal);
            (c + stddev * n) as f32
        })
        .collect()
}

/// Shuffle records by seed and chunk into tasks of `per_task`. The last
/// chunk may be short; nothing is dropped.
pub fn split_tasks(records: Vec<FeatureRecord>, per_task: usize, seed: u64) -> Result<Vec<TaskBatch>> {
    if per_task == 0 {
        return Err(UvclError::InvalidSpec("per_task must be >= 1".into()));
    }
    let mut shuffled = records;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let mut batches = Vec::new();
    let mut iter = shuffled.into_iter().peekable();
    let mut task_index = 1;
    while iter.peek().is_some() {
        let chunk: Vec<FeatureRecord> = iter.by_ref().take(per_task).collect();
        batches.push(TaskBatch {
            task_index,
            records: chunk,
        });
        task_index += 1;
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;
    use tempfile::tempdir;

    fn batch(vecs: Vec<Vec<f32>>, labels: Option<Vec<usize>>) -> TaskBatch {
        let records = vecs
            .into_iter()
            .enumerate()
            .map(|(i, vector)| FeatureRecord {
                vector,
                hidden_label: labels.as_ref().map(|l| l[i]),
                source_id: format!("t/{i}"),
            })
            .collect();
        TaskBatch {
            task_index: 1,
            records,
        }
    }

    #[test]
    fn roundtrip_identity() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f.uvcl");
        let b = batch(
            vec![vec![1.0, -2.5, 3.25], vec![0.0, 7.5, -0.125]],
            Some(vec![3, 9]),
        );
        write_features(&b, &path).unwrap();
        let back = read_features_labeled(&path).unwrap();
        for (a, b) in b.records.iter().zip(&back.records) {
            assert_eq!(a.vector, b.vector);
            assert_eq!(a.hidden_label, b.hidden_label);
        }
    }

    #[test]
    fn unlabeled_read_never_sees_sidecar() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f.uvcl");
        let b = batch(vec![vec![1.0, 2.0]], Some(vec![5]));
        write_features(&b, &path).unwrap();
        let back = read_features(&path).unwrap();
        assert!(back.records[0].hidden_label.is_none());
    }

    #[test]
    fn empty_batch_rejected() {
        let dir = tempdir().unwrap();
        let b = TaskBatch {
            task_index: 1,
            records: vec![],
        };
        let err = write_features(&b, &dir.path().join("e.uvcl")).unwrap_err();
        assert!(matches!(err, UvclError::EmptyBatch));
    }

    #[test]
    fn nan_rejected() {
        let dir = tempdir().unwrap();
        let b = batch(vec![vec![1.0, f32::NAN]], None);
        let err = write_features(&b, &dir.path().join("n.uvcl")).unwrap_err();
        assert!(matches!(err, UvclError::NonFiniteValue { record: 0 }));
    }

    #[test]
    fn header_arithmetic() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("h.uvcl");
        let b = batch((0..5).map(|i| vec![i as f32; 4]).collect(), None);
        write_features(&b, &path).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 20 + 80);
        let back = read_features(&path).unwrap();
        assert_eq!(back.len(), 5);
        assert_eq!(back.dim(), 4);
    }

    #[test]
    fn truncated_payload_detected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.uvcl");
        let b = batch((0..5).map(|i| vec![i as f32; 4]).collect(), None);
        write_features(&b, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..20 + 60]).unwrap();
        let err = read_features(&path).unwrap_err();
        assert!(matches!(err, UvclError::Truncated { need: 80, have: 60, .. }));
    }

    #[test]
    fn bad_magic_detected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("b.bin");
        fs::write(&path, [0u8, 1, 2, 3, 4, 5]).unwrap();
        let err = read_features(&path).unwrap_err();
        assert!(matches!(err, UvclError::BadMagic { .. }));
    }

    #[test]
    fn csv_fallback() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let rows: Vec<Vec<f32>> = (0..3)
            .map(|_| (0..1024).map(|_| rng.random_range(-1.0f32..1.0)).collect())
            .collect();
        let text: String = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>()
            .join("\n");
        fs::write(&path, text).unwrap();
        let back = read_features(&path).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.dim(), 1024);
        for (orig, rec) in rows.iter().zip(&back.records) {
            for (a, b) in orig.iter().zip(&rec.vector) {
                assert_eq!(a, b);
            }
        }
    }

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            num_classes: 3,
            dim: 4,
            class_centers: vec![],
            center_separation: Some(20.0),
            class_stddev: 0.5,
            tasks: 2,
            examples_per_task: 10,
            classes_per_task_schedule: None,
            seed: 7,
            test_examples_per_class: 5,
        }
    }

    #[test]
    fn synthetic_deterministic() {
        let spec = small_spec();
        let a = generate_synthetic_stream(&spec).unwrap();
        let b = generate_synthetic_stream(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_stddev_hits_centers() {
        let mut spec = small_spec();
        spec.class_stddev = 0.0;
        let centers = spec.centers().unwrap();
        for batch in generate_synthetic_stream(&spec).unwrap() {
            for rec in &batch.records {
                let c = &centers[rec.hidden_label.unwrap()];
                for (v, e) in rec.vector.iter().zip(c) {
                    assert_eq!(*v, *e as f32);
                }
            }
        }
    }

    #[test]
    fn samples_stay_near_their_center() {
        // Gaussian tail bound: 5 sigma per the sampling oracle.
        let spec = small_spec();
        let centers = spec.centers().unwrap();
        let bound = 5.0 * spec.class_stddev * (spec.dim as f64).sqrt();
        for batch in generate_synthetic_stream(&spec).unwrap() {
            for rec in &batch.records {
                let c = &centers[rec.hidden_label.unwrap()];
                let dist: f64 = rec
                    .vector
                    .iter()
                    .zip(c)
                    .map(|(v, e)| (*v as f64 - e).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(dist < bound, "sample {dist} beyond {bound}");
            }
        }
    }

    #[test]
    fn bad_schedule_rejected() {
        let mut spec = small_spec();
        spec.classes_per_task_schedule = Some(vec![vec![0, 1], vec![2, 5]]);
        assert!(spec.validate().is_err());
    }

    fn key(r: &FeatureRecord) -> (String, Vec<u32>) {
        (
            r.source_id.clone(),
            r.vector.iter().map(|v| v.to_bits()).collect(),
        )
    }

    #[test]
    fn split_multiset_conservation() {
        let records: Vec<FeatureRecord> = (0..10)
            .map(|i| FeatureRecord {
                vector: vec![i as f32],
                hidden_label: None,
                source_id: format!("r{i}"),
            })
            .collect();
        let mut before = BTreeMap::new();
        for r in &records {
            *before.entry(key(r)).or_insert(0usize) += 1;
        }
        let batches = split_tasks(records, 3, 42).unwrap();
        assert_eq!(batches.len(), 4);
        assert_eq!(batches.last().unwrap().len(), 1);
        let mut after = BTreeMap::new();
        for b in &batches {
            for r in &b.records {
                *after.entry(key(r)).or_insert(0usize) += 1;
            }
        }
        assert_eq!(before, after);
    }

    #[test]
    fn split_ucf_sized() {
        let records: Vec<FeatureRecord> = (0..9537)
            .map(|i| FeatureRecord {
                vector: vec![i as f32],
                hidden_label: None,
                source_id: String::new(),
            })
            .collect();
        let batches = split_tasks(records, 256, 0).unwrap();
        assert_eq!(batches.len(), 38);
        assert!(batches[..37].iter().all(|b| b.len() == 256));
        assert_eq!(batches[37].len(), 9537 - 37 * 256);
    }

    #[test]
    fn split_single_chunk() {
        let records: Vec<FeatureRecord> = (0..256)
            .map(|i| FeatureRecord {
                vector: vec![i as f32],
                hidden_label: None,
                source_id: format!("{i}"),
            })
            .collect();
        let batches = split_tasks(records.clone(), 256, 9).unwrap();
        assert_eq!(batches.len(), 1);
        let mut got: Vec<_> = batches[0].records.iter().map(key).collect();
        let mut want: Vec<_> = records.iter().map(key).collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }
}
