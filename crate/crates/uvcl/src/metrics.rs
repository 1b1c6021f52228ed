//! Evaluation: minimum-cost assignment between pseudo-labels and ground
//! truth, cluster accuracy, and the continual-learning aggregates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, UvclError};

/// Injective pairing of rows to columns with its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// (row, col) pairs sorted by row; min(R, C) of them.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

const COST_TOL: f64 = 1e-9;

/// Shortest-augmenting-path min-cost assignment (Kuhn's method with
/// potentials). Requires rows <= cols; assigns every row.
fn lap_square(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = cost.len();
    let m = cost[0].len();
    debug_assert!(n <= m);
    // 1-indexed; column 0 is the virtual start.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1]; // row matched to column (0 = free)
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![usize::MAX; n];
    let mut total = 0.0;
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
            total += cost[p[j] - 1][j - 1];
        }
    }
    (row_to_col, total)
}

/// Minimum total cost of assigning min(R, C) pairs; transposes when rows
/// outnumber columns.
fn min_cost(cost: &[Vec<f64>]) -> f64 {
    if cost.is_empty() || cost[0].is_empty() {
        return 0.0;
    }
    let r = cost.len();
    let c = cost[0].len();
    if r <= c {
        lap_square(cost).1
    } else {
        let t: Vec<Vec<f64>> = (0..c).map(|j| (0..r).map(|i| cost[i][j]).collect()).collect();
        lap_square(&t).1
    }
}

/// Min-cost injective assignment with ties broken to the lexicographically
/// smallest (row, col) pair sequence. The optimum is found once, then each
/// row greedily takes the smallest column that still completes optimally.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Assignment> {
    if cost.is_empty() || cost[0].is_empty() {
        return Err(UvclError::EmptyInput("hungarian cost matrix"));
    }
    let rows = cost.len();
    let cols = cost[0].len();
    for (i, row) in cost.iter().enumerate() {
        if row.len() != cols {
            return Err(UvclError::DimensionMismatch {
                expected: cols,
                got: row.len(),
            });
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(UvclError::NonFiniteCost(i, j));
            }
        }
    }
    let k = rows.min(cols);
    let best = min_cost(cost);
    let tol = COST_TOL * (1.0 + best.abs());

    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(k);
    let mut fixed_cost = 0.0;
    let mut col_used = vec![false; cols];
    for r in 0..rows {
        if pairs.len() == k {
            break;
        }
        let sub = |extra_col: Option<usize>| -> f64 {
            // completion over rows after r and unused columns
            let free_cols: Vec<usize> = (0..cols)
                .filter(|&j| !col_used[j] && Some(j) != extra_col)
                .collect();
            let m: Vec<Vec<f64>> = ((r + 1)..rows)
                .map(|i| free_cols.iter().map(|&j| cost[i][j]).collect())
                .collect();
            min_cost(&m)
        };
        let mut chosen = None;
        for c in 0..cols {
            if col_used[c] {
                continue;
            }
            let total = fixed_cost + cost[r][c] + sub(Some(c));
            if (total - best).abs() <= tol {
                chosen = Some(c);
                break;
            }
        }
        match chosen {
            Some(c) => {
                col_used[c] = true;
                fixed_cost += cost[r][c];
                pairs.push((r, c));
            }
            None => {
                // row left out; only possible when rows exceed columns
                debug_assert!(rows > cols);
            }
        }
    }
    Ok(Assignment {
        pairs,
        total_cost: best,
    })
}

/// Per-task cluster accuracies, in learning order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTrace {
    pub per_task: Vec<f64>,
}

impl AccuracyTrace {
    pub fn new() -> Self {
        AccuracyTrace { per_task: Vec::new() }
    }

    pub fn push(&mut self, cacc: f64) {
        self.per_task.push(cacc);
    }

    pub fn len(&self) -> usize {
        self.per_task.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_task.is_empty()
    }
}

impl Default for AccuracyTrace {
    fn default() -> Self {
        Self::new()
    }
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    for &l in labels {
        let next = map.len();
        map.entry(l).or_insert(next);
    }
    (labels.iter().map(|l| map[l]).collect(), map.len())
}

/// Fraction of samples correct after the best injective matching of
/// pseudo-labels to true labels (agreement maximized via min-cost on
/// negated confusion counts).
pub fn cluster_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(UvclError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(UvclError::EmptyInput("cluster_accuracy"));
    }
    let (p, np) = compact(pred);
    let (t, nt) = compact(truth);
    let mut confusion = vec![vec![0.0f64; nt]; np];
    for (&a, &b) in p.iter().zip(&t) {
        confusion[a][b] += 1.0;
    }
    let cost: Vec<Vec<f64>> = confusion
        .iter()
        .map(|row| row.iter().map(|&c| -c).collect())
        .collect();
    let assignment = hungarian(&cost)?;
    let correct: f64 = assignment
        .pairs
        .iter()
        .map(|&(r, c)| confusion[r][c])
        .sum();
    Ok(correct / pred.len() as f64)
}

/// Mean accuracy over the tasks learned so far.
pub fn acacc(trace: &AccuracyTrace) -> Result<f64> {
    if trace.is_empty() {
        return Err(UvclError::EmptyInput("acacc trace"));
    }
    Ok(trace.per_task.iter().sum::<f64>() / trace.len() as f64)
}

/// Forward forgetting: mean step-to-step accuracy drop. Positive means
/// later tasks hurt.
pub fn fwf(trace: &AccuracyTrace) -> Result<f64> {
    let t = trace.len();
    if t < 2 {
        return Err(UvclError::EmptyInput("fwf needs >= 2 tasks"));
    }
    let sum: f64 = trace
        .per_task
        .windows(2)
        .map(|w| w[0] - w[1])
        .sum();
    Ok(sum / (t - 1) as f64)
}

/// Backward forgetting: mean gain of the final accuracy over each earlier
/// task. Negative means the run forgot.
pub fn bwf(trace: &AccuracyTrace) -> Result<f64> {
    let t = trace.len();
    if t < 2 {
        return Err(UvclError::EmptyInput("bwf needs >= 2 tasks"));
    }
    let last = trace.per_task[t - 1];
    let sum: f64 = trace.per_task[..t - 1].iter().map(|&a| last - a).sum();
    Ok(sum / (t - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    /// Brute-force minimum over all injective assignments.
    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        let r = cost.len();
        let c = cost[0].len();
        fn recurse(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, left: usize) -> f64 {
            if left == 0 {
                return 0.0;
            }
            let r = cost.len();
            if row >= r {
                return f64::INFINITY;
            }
            // skip this row entirely (legal when enough rows remain)
            let mut best = if r - row - 1 >= left {
                recurse(cost, row + 1, used, left)
            } else {
                f64::INFINITY
            };
            for c in 0..used.len() {
                if !used[c] {
                    used[c] = true;
                    let v = cost[row][c] + recurse(cost, row + 1, used, left - 1);
                    used[c] = false;
                    best = best.min(v);
                }
            }
            best
        }
        let mut used = vec![false; c];
        recurse(cost, 0, &mut used, r.min(c))
    }

    #[test]
    fn diagonal_zeros() {
        let a = hungarian(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn matches_brute_force_square() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        for _ in 0..60 {
            let n = rng.random_range(1..=6);
            let cost: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.random_range(0..50) as f64).collect())
                .collect();
            let a = hungarian(&cost).unwrap();
            let bf = brute_force(&cost);
            assert!((a.total_cost - bf).abs() < 1e-9, "{} vs {}", a.total_cost, bf);
            let direct: f64 = a.pairs.iter().map(|&(r, c)| cost[r][c]).sum();
            assert!((direct - bf).abs() < 1e-9);
        }
    }

    #[test]
    fn rectangular_both_ways() {
        let wide = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0]];
        let a = hungarian(&wide).unwrap();
        assert_eq!(a.pairs.len(), 2);
        assert!((a.total_cost - brute_force(&wide)).abs() < 1e-9);

        let tall = vec![vec![4.0, 1.0], vec![2.0, 0.0], vec![3.0, 9.0]];
        let b = hungarian(&tall).unwrap();
        assert_eq!(b.pairs.len(), 2);
        assert!((b.total_cost - brute_force(&tall)).abs() < 1e-9);
    }

    #[test]
    fn tie_break_lexicographic() {
        // all-equal costs: every assignment optimal, identity is smallest
        let a = hungarian(&[vec![1.0; 3], vec![1.0; 3], vec![1.0; 3]]).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn rejects_nan() {
        assert!(matches!(
            hungarian(&[vec![0.0, f64::NAN]]),
            Err(UvclError::NonFiniteCost(0, 1))
        ));
    }

    #[test]
    fn accuracy_exact_and_relabeled() {
        let truth = vec![0, 1, 2, 0, 1, 2];
        assert_eq!(cluster_accuracy(&truth, &truth).unwrap(), 1.0);
        let relabeled: Vec<usize> = truth.iter().map(|&l| (l + 1) % 3 + 10).collect();
        assert_eq!(cluster_accuracy(&relabeled, &truth).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_hand_case() {
        // best matching fixes 3 of 4
        let acc = cluster_accuracy(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        assert_eq!(acc, 0.75);
    }

    #[test]
    fn single_cluster_yields_modal_frequency() {
        let truth = vec![0, 0, 0, 1, 1, 2];
        let pred = vec![7; 6];
        assert_eq!(cluster_accuracy(&pred, &truth).unwrap(), 0.5);
    }

    #[test]
    fn overclustering_handled() {
        // more clusters than classes: extra clusters count zero
        let truth = vec![0, 0, 1, 1];
        let pred = vec![0, 1, 2, 2];
        let acc = cluster_accuracy(&pred, &truth).unwrap();
        assert_eq!(acc, 0.75);
    }

    #[test]
    fn aggregate_hand_values() {
        let t = AccuracyTrace {
            per_task: vec![0.9, 0.8, 0.7],
        };
        assert!((acacc(&t).unwrap() - 0.8).abs() < 1e-15);
        assert!((fwf(&t).unwrap() - 0.1).abs() < 1e-12);
        assert!((bwf(&t).unwrap() + 0.15).abs() < 1e-12);
    }

    #[test]
    fn aggregate_edges() {
        let single = AccuracyTrace { per_task: vec![0.42] };
        assert_eq!(acacc(&single).unwrap(), 0.42);
        assert!(fwf(&single).is_err());
        assert!(bwf(&single).is_err());

        let improving = AccuracyTrace {
            per_task: vec![0.5, 0.9],
        };
        assert!((fwf(&improving).unwrap() + 0.4).abs() < 1e-12);

        let helped = AccuracyTrace {
            per_task: vec![0.5, 0.6, 0.9],
        };
        assert!((bwf(&helped).unwrap() - 0.35).abs() < 1e-12);

        let constant = AccuracyTrace {
            per_task: vec![0.7; 5],
        };
        assert_eq!(fwf(&constant).unwrap(), 0.0);
        assert_eq!(bwf(&constant).unwrap(), 0.0);
    }

    proptest! {
        // FWF telescopes to (first - last) / (T - 1).
        #[test]
        fn fwf_telescoping(trace in proptest::collection::vec(0.0f64..1.0, 2..12)) {
            let t = AccuracyTrace { per_task: trace.clone() };
            let direct = fwf(&t).unwrap();
            let telescoped = (trace[0] - trace[trace.len() - 1]) / (trace.len() - 1) as f64;
            prop_assert!((direct - telescoped).abs() < 1e-12);
        }

        // accuracy invariant under bijective relabeling of either side
        #[test]
        fn accuracy_relabel_invariance(
            labels in proptest::collection::vec(0usize..4, 4..40),
            preds in proptest::collection::vec(0usize..4, 4..40),
        ) {
            let n = labels.len().min(preds.len());
            let (labels, preds) = (&labels[..n], &preds[..n]);
            let base = cluster_accuracy(preds, labels).unwrap();
            let perm = [2usize, 0, 3, 1];
            let preds2: Vec<usize> = preds.iter().map(|&p| perm[p]).collect();
            let labels2: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
            prop_assert!((cluster_accuracy(&preds2, labels).unwrap() - base).abs() < 1e-12);
            prop_assert!((cluster_accuracy(preds, &labels2).unwrap() - base).abs() < 1e-12);
            prop_assert!(base >= 0.0 && base <= 1.0);
        }
    }
}
