//! Expandable linear classification head trained with focal loss over
//! cluster pseudo-labels, plus the confidence-based novelty gate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UvclError};

/// Probability floor inside the cross-entropy, so confident mistakes stay
/// finite.
const PROB_FLOOR: f64 = 1e-12;

/// Linear map from features to per-cluster logits. Row j scores cluster j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LinearHead {
    /// Fresh head with `classes` rows, uniform in [-1/sqrt(d), 1/sqrt(d)].
    pub fn random(classes: usize, dim: usize, seed: u64) -> Self {
        let mut head = LinearHead {
            weights: Vec::new(),
            bias: Vec::new(),
        };
        head.expand(classes, dim, seed).expect("classes >= 1");
        head
    }

    pub fn classes(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, |r| r.len())
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(UvclError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect())
    }

    /// Append `new_rows` randomly initialized rows; existing rows are
    /// untouched bit for bit.
    pub fn expand(&mut self, new_rows: usize, dim: usize, seed: u64) -> Result<()> {
        if new_rows == 0 {
            return Err(UvclError::InvalidConfig("expand by at least one row".into()));
        }
        let bound = 1.0 / (dim as f64).sqrt();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for _ in 0..new_rows {
            let row: Vec<f64> = (0..dim).map(|_| rng.random_range(-bound..bound)).collect();
            self.weights.push(row);
            self.bias.push(rng.random_range(-bound..bound));
        }
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| UvclError::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| UvclError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Numerically stable softmax: shift by the max before exponentiating.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// One-hot multi-class cross-entropy: -log p_target, floored.
pub fn mce(probs: &[f64], target: usize) -> Result<f64> {
    if target >= probs.len() {
        return Err(UvclError::LabelOutOfRange {
            label: target,
            classes: probs.len(),
        });
    }
    Ok(-probs[target].max(PROB_FLOOR).ln())
}

/// Focal modulation of an already-computed cross-entropy value:
/// `alpha * (1 - exp(-mce))^gamma * mce`. Since `exp(-mce) = p_target`,
/// this is the usual `alpha * (1 - p)^gamma * ce`.
pub fn focal_loss(mce_value: f64, alpha: f64, gamma: f64) -> f64 {
    alpha * (1.0 - (-mce_value).exp()).powf(gamma) * mce_value
}

/// Per-cluster balance weights: inverse frequency over the training pool,
/// clipped to [0.1, 10].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    pub alpha: Vec<f64>,
}

impl ClassWeights {
    pub fn uniform(classes: usize) -> Self {
        ClassWeights {
            alpha: vec![1.0; classes],
        }
    }

    pub fn inverse_frequency(labels: &[usize], classes: usize) -> Result<Self> {
        let mut counts = vec![0usize; classes];
        for &l in labels {
            if l >= classes {
                return Err(UvclError::LabelOutOfRange { label: l, classes });
            }
            counts[l] += 1;
        }
        let n = labels.len() as f64;
        let alpha = counts
            .iter()
            .map(|&c| {
                if c == 0 {
                    1.0
                } else {
                    (n / (classes as f64 * c as f64)).clamp(0.1, 10.0)
                }
            })
            .collect();
        Ok(ClassWeights { alpha })
    }
}

/// Exact gradient of the mean focal loss over a batch, w.r.t. weights and
/// bias.
pub fn gradient(
    head: &LinearHead,
    batch: &[(Vec<f64>, usize)],
    weights: &ClassWeights,
    gamma: f64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if batch.is_empty() {
        return Err(UvclError::EmptyInput("gradient batch"));
    }
    let classes = head.classes();
    let dim = head.dim();
    let mut dw = vec![vec![0.0; dim]; classes];
    let mut db = vec![0.0; classes];
    let scale = 1.0 / batch.len() as f64;
    for (x, target) in batch {
        if *target >= classes {
            return Err(UvclError::LabelOutOfRange {
                label: *target,
                classes,
            });
        }
        let probs = softmax(&head.logits(x)?);
        let p = probs[*target];
        if p <= PROB_FLOOR {
            // loss is flat at the floor here
            continue;
        }
        let alpha = weights.alpha[*target];
        let m = -p.ln();
        let one_minus_p = 1.0 - p;
        // d(focal)/dp, guarding the 0^negative corner at p == 1
        let dfl_dp = if one_minus_p <= 0.0 {
            -alpha * if gamma == 0.0 { 1.0 / p } else { 0.0 }
        } else {
            -alpha * (gamma * one_minus_p.powf(gamma - 1.0) * m + one_minus_p.powf(gamma) / p)
        };
        for j in 0..classes {
            let indicator = if j == *target { 1.0 } else { 0.0 };
            let dz = dfl_dp * p * (indicator - probs[j]) * scale;
            for (g, &v) in dw[j].iter_mut().zip(x) {
                *g += dz * v;
            }
            db[j] += dz;
        }
    }
    Ok((dw, db))
}

/// Training hyperparameters, including the adaptive-moment optimizer
/// constants and the confidence novelty threshold.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub theta2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 8,
            learning_rate: 0.001,
            gamma: 2.0,
            theta2: 0.3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(UvclError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(UvclError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.gamma < 0.0 {
            return Err(UvclError::InvalidConfig("gamma must be >= 0".into()));
        }
        if !(self.theta2 > 0.0 && self.theta2 <= 1.0) {
            return Err(UvclError::InvalidConfig("theta2 must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Adam first/second moment accumulators for the head parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<f64>,
    v_b: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(classes: usize, dim: usize) -> Self {
        AdamState {
            m_w: vec![vec![0.0; dim]; classes],
            v_w: vec![vec![0.0; dim]; classes],
            m_b: vec![0.0; classes],
            v_b: vec![0.0; classes],
            step: 0,
        }
    }

    /// Grow the moment buffers when the head grows; old moments persist.
    pub fn expand(&mut self, classes: usize, dim: usize) {
        while self.m_w.len() < classes {
            self.m_w.push(vec![0.0; dim]);
            self.v_w.push(vec![0.0; dim]);
            self.m_b.push(0.0);
            self.v_b.push(0.0);
        }
    }

    fn apply(&mut self, head: &mut LinearHead, dw: &[Vec<f64>], db: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for j in 0..head.classes() {
            for k in 0..head.dim() {
                let g = dw[j][k];
                self.m_w[j][k] = cfg.beta1 * self.m_w[j][k] + (1.0 - cfg.beta1) * g;
                self.v_w[j][k] = cfg.beta2 * self.v_w[j][k] + (1.0 - cfg.beta2) * g * g;
                let m_hat = self.m_w[j][k] / bc1;
                let v_hat = self.v_w[j][k] / bc2;
                head.weights[j][k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
            let g = db[j];
            self.m_b[j] = cfg.beta1 * self.m_b[j] + (1.0 - cfg.beta1) * g;
            self.v_b[j] = cfg.beta2 * self.v_b[j] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m_b[j] / bc1;
            let v_hat = self.v_b[j] / bc2;
            head.bias[j] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

/// Mean focal loss of the head over a dataset.
pub fn mean_loss(
    head: &LinearHead,
    data: &[(Vec<f64>, usize)],
    weights: &ClassWeights,
    gamma: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for (x, target) in data {
        let probs = softmax(&head.logits(x)?);
        let m = mce(&probs, *target)?;
        total += focal_loss(m, weights.alpha[*target], gamma);
    }
    Ok(total / data.len().max(1) as f64)
}

const EARLY_STOP_PATIENCE: usize = 5;
const EARLY_STOP_TOL: f64 = 1e-6;

/// Seeded mini-batch training with Adam and patience-based early stopping
/// under the epoch cap. Returns the final mean loss.
pub fn train(
    head: &mut LinearHead,
    opt: &mut AdamState,
    data: &[(Vec<f64>, usize)],
    cfg: &TrainConfig,
) -> Result<f64> {
    cfg.validate()?;
    let classes = head.classes();
    for (_, l) in data {
        if *l >= classes {
            return Err(UvclError::LabelOutOfRange { label: *l, classes });
        }
    }
    let weights = ClassWeights::inverse_frequency(
        &data.iter().map(|(_, l)| *l).collect::<Vec<_>>(),
        classes,
    )?;
    if cfg.epochs == 0 || data.is_empty() {
        return mean_loss(head, data, &weights, cfg.gamma);
    }
    opt.expand(classes, head.dim());
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut last = f64::INFINITY;
    for _epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(Vec<f64>, usize)> =
                chunk.iter().map(|&i| data[i].clone()).collect();
            let (dw, db) = gradient(head, &batch, &weights, cfg.gamma)?;
            opt.apply(head, &dw, &db, cfg);
        }
        last = mean_loss(head, data, &weights, cfg.gamma)?;
        if last < best - EARLY_STOP_TOL {
            best = last;
            stale = 0;
        } else {
            stale += 1;
            if stale >= EARLY_STOP_PATIENCE {
                break;
            }
        }
    }
    Ok(last)
}

/// Confidence gate for the RBF variant.
#[derive(Debug, Clone, PartialEq)]
pub enum RbfNovelty {
    Known { label: usize, confidence: f64 },
    Novel,
}

/// Novel iff the max softmax probability is strictly below theta2; ties on
/// the argmax go to the lowest index.
pub fn novelty_rbf(head: &LinearHead, x: &[f64], theta2: f64) -> Result<RbfNovelty> {
    let probs = softmax(&head.logits(x)?);
    let (label, confidence) = probs
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    if confidence < theta2 {
        Ok(RbfNovelty::Novel)
    } else {
        Ok(RbfNovelty::Known { label, confidence })
    }
}
