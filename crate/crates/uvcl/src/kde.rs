//! Gaussian kernel density estimation and mean-shift mode seeking.
//!
//! The density is the unnormalized sum `Σ_i exp(-||x - x_i||^2 / (2h^2))`;
//! normalization constants cancel in the shift update and in the ridge
//! merge test, so they are dropped.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UvclError};

/// Kernel bandwidth, strictly positive and finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h.is_finite() {
            Ok(Bandwidth(h))
        } else {
            Err(UvclError::InvalidConfig("bandwidth must be positive".into()))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// A KDE mode: one local maximum, defining one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub center: Vec<f64>,
    pub support_count: usize,
    pub converged_in: usize,
}

/// How seeds for mode seeking are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "fraction")]
pub enum SeedStrategy {
    /// Every data point starts a trajectory. Exact, O(n^2) per iteration.
    EveryPoint,
    /// Evenly strided subset covering the given fraction of the data.
    Subsample(f64),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeanShiftConfig {
    pub max_iterations: usize,
    /// Absolute convergence threshold; `None` means `1e-4 * h`.
    #[serde(default)]
    pub convergence_eps: Option<f64>,
    /// Points sampled on the segment joining two candidate modes.
    pub merge_samples: usize,
    pub seed_strategy: SeedStrategy,
}

impl Default for MeanShiftConfig {
    fn default() -> Self {
        MeanShiftConfig {
            max_iterations: 300,
            convergence_eps: None,
            merge_samples: 25,
            seed_strategy: SeedStrategy::EveryPoint,
        }
    }
}

impl MeanShiftConfig {
    pub fn eps(&self, h: Bandwidth) -> f64 {
        self.convergence_eps.unwrap_or(1e-4 * h.get())
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(UvclError::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if self.merge_samples < 3 {
            return Err(UvclError::InvalidConfig("merge_samples must be >= 3".into()));
        }
        if let Some(e) = self.convergence_eps {
            if !(e > 0.0 && e.is_finite()) {
                return Err(UvclError::InvalidConfig("convergence_eps must be positive".into()));
            }
        }
        if let SeedStrategy::Subsample(p) = self.seed_strategy {
            if !(p > 0.0 && p <= 1.0) {
                return Err(UvclError::InvalidConfig("subsample fraction must be in (0,1]".into()));
            }
        }
        Ok(())
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Unnormalized Gaussian KDE at `x`.
pub fn kde_density(x: &[f64], data: &[Vec<f64>], h: Bandwidth) -> Result<f64> {
    let denom = 2.0 * h.get() * h.get();
    let mut sum = 0.0;
    for (i, xi) in data.iter().enumerate() {
        if xi.len() != x.len() {
            return Err(UvclError::DimensionMismatch {
                expected: x.len(),
                got: data[i].len(),
            });
        }
        sum += (-squared_distance(x, xi) / denom).exp();
    }
    Ok(sum)
}

/// Result of one mean-shift update.
#[derive(Debug, Clone, PartialEq)]
pub enum ShiftOutcome {
    Moved(Vec<f64>),
    /// All kernel weights underflowed: the seed sits outside numerical
    /// support of every datum and stays its own mode.
    Isolated,
}

/// One fixed-point update: Gaussian-weighted mean of the data around `mu`.
pub fn mean_shift_step(mu: &[f64], data: &[Vec<f64>], h: Bandwidth) -> Result<ShiftOutcome> {
    let denom = 2.0 * h.get() * h.get();
    let mut weight_sum = 0.0;
    let mut acc = vec![0.0; mu.len()];
    for xi in data {
        if xi.len() != mu.len() {
            return Err(UvclError::DimensionMismatch {
                expected: mu.len(),
                got: xi.len(),
            });
        }
        let w = (-squared_distance(mu, xi) / denom).exp();
        weight_sum += w;
        for (a, &v) in acc.iter_mut().zip(xi) {
            *a += w * v;
        }
    }
    if weight_sum <= 0.0 {
        return Ok(ShiftOutcome::Isolated);
    }
    for a in &mut acc {
        *a /= weight_sum;
    }
    Ok(ShiftOutcome::Moved(acc))
}

/// Whether two candidate modes share a basin: distinct only when the KDE
/// dips to a local minimum on the joining segment.
#[derive(Debug, Clone, PartialEq)]
pub enum MergeOutcome {
    Distinct,
    /// The higher-density endpoint survives.
    Merged(Mode),
}

const MERGE_REL_TOL: f64 = 1e-6;

pub fn merge_modes(
    a: &Mode,
    b: &Mode,
    data: &[Vec<f64>],
    h: Bandwidth,
    cfg: &MeanShiftConfig,
) -> Result<MergeOutcome> {
    let eps = cfg.eps(h);
    let da = kde_density(&a.center, data, h)?;
    let db = kde_density(&b.center, data, h)?;
    let keep_higher = |da: f64, db: f64| -> Mode {
        let winner = if da >= db { a } else { b };
        Mode {
            center: winner.center.clone(),
            support_count: a.support_count + b.support_count,
            converged_in: winner.converged_in,
        }
    };
    if distance(&a.center, &b.center) < eps {
        return Ok(MergeOutcome::Merged(keep_higher(da, db)));
    }
    let floor = da.min(db) * (1.0 - MERGE_REL_TOL);
    let n = cfg.merge_samples;
    for s in 1..n - 1 {
        let t = s as f64 / (n - 1) as f64;
        let point: Vec<f64> = a
            .center
            .iter()
            .zip(&b.center)
            .map(|(x, y)| x + t * (y - x))
            .collect();
        if kde_density(&point, data, h)? < floor {
            return Ok(MergeOutcome::Distinct);
        }
    }
    Ok(MergeOutcome::Merged(keep_higher(da, db)))
}

fn seeds_for(data: &[Vec<f64>], strategy: SeedStrategy) -> Vec<usize> {
    match strategy {
        SeedStrategy::EveryPoint => (0..data.len()).collect(),
        SeedStrategy::Subsample(p) => {
            let k = ((data.len() as f64 * p).ceil() as usize).clamp(1, data.len());
            let stride = data.len() as f64 / k as f64;
            (0..k).map(|i| (i as f64 * stride) as usize).collect()
        }
    }
}

/// Mode seeking with dedup and ridge-test merging, plus how many merge
/// events happened (mode pairs collapsed after trajectory dedup).
pub fn find_modes_detailed(
    data: &[Vec<f64>],
    h: Bandwidth,
    cfg: &MeanShiftConfig,
) -> Result<(Vec<Mode>, usize)> {
    if data.is_empty() {
        return Err(UvclError::EmptyInput("find_modes data"));
    }
    cfg.validate()?;
    let eps = cfg.eps(h);
    let dedup_radius = h.get() / 2.0;

    // Converge one trajectory per seed.
    let mut candidates: Vec<Mode> = Vec::new();
    for seed_idx in seeds_for(data, cfg.seed_strategy) {
        let mut mu = data[seed_idx].clone();
        let mut iterations = 0;
        for it in 1..=cfg.max_iterations {
            iterations = it;
            match mean_shift_step(&mu, data, h)? {
                ShiftOutcome::Isolated => break,
                ShiftOutcome::Moved(next) => {
                    let moved = distance(&next, &mu);
                    mu = next;
                    if moved < eps {
                        break;
                    }
                }
            }
        }
        // Group trajectories landing close together.
        match candidates
            .iter_mut()
            .find(|m| distance(&m.center, &mu) < dedup_radius)
        {
            Some(m) => m.support_count += 1,
            None => candidates.push(Mode {
                center: mu,
                support_count: 1,
                converged_in: iterations,
            }),
        }
    }

    // Pairwise ridge test until stable.
    let mut merged_events = 0;
    'outer: loop {
        for i in 0..candidates.len() {
            for j in (i + 1)..candidates.len() {
                if let MergeOutcome::Merged(m) =
                    merge_modes(&candidates[i], &candidates[j], data, h, cfg)?
                {
                    candidates.remove(j);
                    candidates[i] = m;
                    merged_events += 1;
                    continue 'outer;
                }
            }
        }
        break;
    }

    // Canonical order: first coordinate, then lexicographic.
    candidates.sort_by(|a, b| {
        a.center
            .iter()
            .zip(&b.center)
            .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok((candidates, merged_events))
}

pub fn find_modes(data: &[Vec<f64>], h: Bandwidth, cfg: &MeanShiftConfig) -> Result<Vec<Mode>> {
    find_modes_detailed(data, h, cfg).map(|(m, _)| m)
}

/// Hard assignment: each datum to its nearest mode center, ties to the
/// lowest mode index. Updates support counts to the assignment tally.
pub fn assign_to_modes(data: &[Vec<f64>], modes: &mut [Mode]) -> Result<Vec<usize>> {
    if modes.is_empty() {
        return Err(UvclError::EmptyInput("assign_to_modes modes"));
    }
    for m in modes.iter_mut() {
        m.support_count = 0;
    }
    let mut out = Vec::with_capacity(data.len());
    for x in data {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, m) in modes.iter().enumerate() {
            let d = squared_distance(x, &m.center);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        modes[best].support_count += 1;
        out.push(best);
    }
    Ok(out)
}
