//! Command implementations behind the `uvcl` binary: synthetic stream
//! generation, config-driven runs, ablation grids, and buffer export.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{Engine, EngineConfig, RunReport, Variant};
use crate::error::{Result, UvclError};
use crate::head::TrainConfig;
use crate::ingest::{
    generate_synthetic_stream, generate_synthetic_test, read_features, read_features_labeled,
    write_features, StreamManifest, SyntheticSpec, TaskBatch,
};
use crate::kde::MeanShiftConfig;
use crate::registry::Registry;

/// Full run configuration: engine settings plus data wiring. Exactly one
/// of `manifest` / `synthetic` selects the stream source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfigFile {
    pub variant: Variant,
    pub bandwidth: f64,
    #[serde(default = "default_theta2")]
    pub theta2: f64,
    #[serde(default = "default_buffer")]
    pub buffer_capacity: usize,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub meanshift: Option<MeanShiftConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub eval_each_task: bool,
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub folds: Vec<PathBuf>,
}

fn default_theta2() -> f64 {
    0.3
}

fn default_buffer() -> usize {
    20
}

fn default_true() -> bool {
    true
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| UvclError::io(path, e))?;
        let mut cfg: RunConfigFile = serde_json::from_str(&text)?;
        if let Ok(seed) = std::env::var("UVCL_SEED") {
            cfg.seed = seed
                .parse()
                .map_err(|_| UvclError::InvalidConfig("UVCL_SEED must be an integer".into()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.manifest.is_some() == self.synthetic.is_some() {
            return Err(UvclError::InvalidConfig(
                "exactly one of manifest / synthetic must be set".into(),
            ));
        }
        self.engine_config().validate()
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            variant: self.variant,
            bandwidth: self.bandwidth,
            theta2: self.theta2,
            buffer_capacity: self.buffer_capacity,
            train: self.train.unwrap_or_default(),
            meanshift: self.meanshift.unwrap_or_default(),
            seed: self.seed,
            eval_each_task: self.eval_each_task,
        }
    }
}

/// Generate the task files, held-out labeled test file, and manifest for a
/// synthetic spec. Deterministic: same spec, same directory bytes.
pub fn cmd_synth(spec_path: &Path, out_dir: &Path) -> Result<()> {
    let text = fs::read_to_string(spec_path).map_err(|e| UvclError::io(spec_path, e))?;
    let spec: SyntheticSpec = serde_json::from_str(&text)?;
    spec.validate()?;
    let tasks = generate_synthetic_stream(&spec)?;
    let test = generate_synthetic_test(&spec)?;
    fs::create_dir_all(out_dir).map_err(|e| UvclError::io(out_dir, e))?;
    let mut task_paths = Vec::new();
    for batch in &tasks {
        let path = out_dir.join(format!("task_{:03}.uvcl", batch.task_index));
        write_features(batch, &path)?;
        task_paths.push(path);
    }
    write_features(&test, &out_dir.join("test.uvcl"))?;
    let manifest = StreamManifest {
        dimension: spec.dim,
        tasks: task_paths,
        seed: Some(spec.seed),
        synthetic: Some(spec),
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(())
}

fn load_stream(cfg: &RunConfigFile) -> Result<(Vec<TaskBatch>, Option<TaskBatch>, usize)> {
    if let Some(spec) = &cfg.synthetic {
        spec.validate()?;
        let tasks = generate_synthetic_stream(spec)?;
        let test = generate_synthetic_test(spec)?;
        return Ok((tasks, Some(test), spec.dim));
    }
    let manifest_path = cfg.manifest.as_ref().expect("validated");
    let manifest = StreamManifest::load(manifest_path)?;
    let mut tasks = Vec::new();
    for (i, path) in manifest.tasks.iter().enumerate() {
        let mut batch = read_features(path)?;
        batch.task_index = i + 1;
        if batch.dim() != manifest.dimension {
            return Err(UvclError::DimensionMismatch {
                expected: manifest.dimension,
                got: batch.dim(),
            });
        }
        tasks.push(batch);
    }
    let test = match &cfg.test {
        Some(path) => Some(read_features_labeled(path)?),
        None => None,
    };
    Ok((tasks, test, manifest.dimension))
}

fn execute(cfg: &RunConfigFile, engine_cfg: EngineConfig) -> Result<(RunReport, Engine)> {
    let (tasks, test, dim) = load_stream(cfg)?;
    let mut engine = Engine::new(engine_cfg, dim)?;
    let report = engine.run_stream(&tasks, test.as_ref())?;
    Ok((report, engine))
}

fn write_report(report: &RunReport, engine: &Engine, out_dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| UvclError::io(out_dir, e))?;
    let json = serde_json::to_string_pretty(report)?;
    let report_path = out_dir.join(format!("{stem}.json"));
    fs::write(&report_path, json).map_err(|e| UvclError::io(&report_path, e))?;
    let csv_path = out_dir.join(format!("{stem}_trace.csv"));
    fs::write(&csv_path, report.trace_csv()).map_err(|e| UvclError::io(&csv_path, e))?;
    engine
        .registry
        .save(&out_dir.join(format!("{stem}_registry.json")))?;
    if let Some(head) = &engine.head {
        head.save(&out_dir.join(format!("{stem}_head.json")))?;
    }
    Ok(())
}

/// Per-fold summary numbers in table shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldSummary {
    pub folds: usize,
    pub mean_final_clusters: f64,
    pub mean_final_cacc: Option<f64>,
    pub mean_acacc: Option<f64>,
    pub mean_bwf: Option<f64>,
    pub mean_fwf: Option<f64>,
}

fn mean_opt(values: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    if present.len() == values.len() && !present.is_empty() {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    } else {
        None
    }
}

pub fn summarize_folds(reports: &[RunReport]) -> FoldSummary {
    let finals: Vec<&crate::engine::TaskReport> =
        reports.iter().map(|r| r.per_task.last().expect("nonempty")).collect();
    FoldSummary {
        folds: reports.len(),
        mean_final_clusters: finals.iter().map(|t| t.clusters as f64).sum::<f64>()
            / finals.len() as f64,
        mean_final_cacc: mean_opt(&finals.iter().map(|t| t.cacc).collect::<Vec<_>>()),
        mean_acacc: mean_opt(&reports.iter().map(|r| r.acacc).collect::<Vec<_>>()),
        mean_bwf: mean_opt(&reports.iter().map(|r| r.bwf).collect::<Vec<_>>()),
        mean_fwf: mean_opt(&reports.iter().map(|r| r.fwf).collect::<Vec<_>>()),
    }
}

/// Run one experiment (or a fold list) and write report JSON plus trace
/// CSV under the config's output directory.
pub fn cmd_run(config_path: &Path) -> Result<()> {
    let cfg = RunConfigFile::load(config_path)?;
    if cfg.folds.is_empty() {
        let (report, engine) = execute(&cfg, cfg.engine_config())?;
        write_report(&report, &engine, &cfg.out_dir, "report")?;
    } else {
        let mut reports = Vec::new();
        for (i, fold_manifest) in cfg.folds.iter().enumerate() {
            let mut fold_cfg = cfg.clone();
            fold_cfg.manifest = Some(fold_manifest.clone());
            fold_cfg.synthetic = None;
            fold_cfg.folds.clear();
            fold_cfg.validate()?;
            let (report, engine) = execute(&fold_cfg, fold_cfg.engine_config())?;
            write_report(&report, &engine, &cfg.out_dir, &format!("fold_{i}"))?;
            reports.push(report);
        }
        let summary = summarize_folds(&reports);
        let path = cfg.out_dir.join("fold_summary.json");
        fs::write(&path, serde_json::to_string_pretty(&summary)?)
            .map_err(|e| UvclError::io(&path, e))?;
    }
    Ok(())
}

/// Which hyperparameter an ablation sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AblationAxis {
    Bandwidth,
    Theta2,
    Buffer,
}

impl AblationAxis {
    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::Bandwidth => "bandwidth",
            AblationAxis::Theta2 => "theta2",
            AblationAxis::Buffer => "buffer",
        }
    }
}

/// Run the grid sequentially with a shared seed; one report per value plus
/// a combined CSV with one row per value.
pub fn cmd_ablate(config_path: &Path, axis: AblationAxis, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(UvclError::InvalidConfig("empty ablation grid".into()));
    }
    let cfg = RunConfigFile::load(config_path)?;
    let mut rows = String::from("axis,value,final_L,final_cacc,acacc,bwf,fwf\n");
    for &value in values {
        let mut engine_cfg = cfg.engine_config();
        match axis {
            AblationAxis::Bandwidth => engine_cfg.bandwidth = value,
            AblationAxis::Theta2 => engine_cfg.theta2 = value,
            AblationAxis::Buffer => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(UvclError::InvalidConfig(
                        "buffer grid values must be non-negative integers".into(),
                    ));
                }
                engine_cfg.buffer_capacity = value as usize;
            }
        }
        engine_cfg.validate()?;
        let (report, engine) = execute(&cfg, engine_cfg)?;
        let stem = format!("ablate_{}_{}", axis.name(), value);
        write_report(&report, &engine, &cfg.out_dir, &stem)?;
        let last = report.per_task.last().expect("nonempty");
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        rows.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            axis.name(),
            value,
            last.clusters,
            fmt(last.cacc),
            fmt(report.acacc),
            fmt(report.bwf),
            fmt(report.fwf),
        ));
    }
    let path = cfg.out_dir.join(format!("ablation_{}.csv", axis.name()));
    fs::write(&path, rows).map_err(|e| UvclError::io(&path, e))?;
    Ok(())
}

/// Dump every buffered vector from a registry checkpoint as CSV rows of
/// `cluster_id, v_0..v_{d-1}`.
pub fn cmd_export_buffers(checkpoint: &Path, out: &Path) -> Result<()> {
    let registry = Registry::load(checkpoint)?;
    let mut text = String::from("cluster_id");
    for i in 0..registry.dimension {
        text.push_str(&format!(",v_{i}"));
    }
    text.push('\n');
    for cluster in &registry.clusters {
        for item in cluster.buffer.iter() {
            text.push_str(&cluster.id.to_string());
            for v in item {
                text.push_str(&format!(",{v}"));
            }
            text.push('\n');
        }
    }
    fs::write(out, text).map_err(|e| UvclError::io(out, e))
}

/// Process exit code for an error, per the command contract: 2 config,
/// 3 data, 4 numeric.
pub fn exit_code(err: &UvclError) -> i32 {
    match err {
        UvclError::InvalidConfig(_) | UvclError::InvalidSpec(_) => 2,
        UvclError::NonFiniteValue { .. }
        | UvclError::NonFiniteCost(..)
        | UvclError::Theta1Undefined
        | UvclError::Theta1Unset => 4,
        _ => 3,
    }
}
