//! Lloyd's K-means with k-means++ seeding.
//!
//! Assignment ties go to the lower cluster index. An empty cluster is
//! repaired by moving into it the point farthest from its own centroid
//! (taken from a cluster with more than one member), which can only lower
//! the objective, so the recorded objective history is non-increasing.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seeds::split_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Independent k-means++ restarts; the lowest objective wins.
    pub n_init: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 100,
            n_init: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Within-cluster sum of squared distances of the final partition.
    pub objective: f64,
    /// Objective after each iteration's update step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub repairs: usize,
}

pub fn kmeans(points: &Array2<f64>, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let n = points.nrows();
    if cfg.k < 1 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    if n < cfg.k {
        return Err(Error::InvalidInput(format!(
            "cannot form {} clusters from {n} points",
            cfg.k
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite clustering input".into()));
    }
    let mut best: Option<KMeansResult> = None;
    for run in 0..cfg.n_init.max(1) {
        let seed = if run == 0 {
            cfg.seed
        } else {
            split_seed(cfg.seed, run as u64)
        };
        let res = lloyd(points, cfg.k, seed, cfg.max_iter);
        if best.as_ref().is_none_or(|b| res.objective < b.objective) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one run"))
}

fn dist2(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_init(points: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| dist2(points.row(i), centroids.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            // guard against landing on a zero-weight point through rounding
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist2(points.row(i), centroids.row(c)));
        }
    }
    centroids
}

pub(crate) fn assign(points: &Array2<f64>, centroids: &Array2<f64>) -> Vec<usize> {
    points
        .rows()
        .into_iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, cen) in centroids.rows().into_iter().enumerate() {
                let d = dist2(p, cen);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn update(points: &Array2<f64>, labels: &[usize], centroids: &mut Array2<f64>) -> Vec<usize> {
    let k = centroids.nrows();
    let mut sums = Array2::<f64>::zeros(centroids.dim());
    let mut counts = vec![0usize; k];
    for (p, &l) in points.rows().into_iter().zip(labels) {
        let mut row = sums.row_mut(l);
        row += &p;
        counts[l] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            centroids.row_mut(c).assign(&sums.row(c).mapv(|v| v * inv));
        }
    }
    counts
}

fn recompute_centroid(points: &Array2<f64>, labels: &[usize], c: usize, centroids: &mut Array2<f64>) {
    let mut sum = ndarray::Array1::<f64>::zeros(points.ncols());
    let mut count = 0usize;
    for (p, &l) in points.rows().into_iter().zip(labels) {
        if l == c {
            sum += &p;
            count += 1;
        }
    }
    if count > 0 {
        centroids.row_mut(c).assign(&(sum / count as f64));
    }
}

pub fn objective(points: &Array2<f64>, labels: &[usize], centroids: &Array2<f64>) -> f64 {
    points
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(p, &l)| dist2(p, centroids.row(l)))
        .sum()
}

fn repair_empty(
    points: &Array2<f64>,
    labels: &mut [usize],
    counts: &mut [usize],
    centroids: &mut Array2<f64>,
) -> usize {
    let mut repairs = 0;
    for c in 0..counts.len() {
        if counts[c] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, p) in points.rows().into_iter().enumerate() {
            let l = labels[i];
            if counts[l] < 2 {
                continue;
            }
            let d = dist2(p, centroids.row(l));
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let Some(i) = far else { break };
        let old = labels[i];
        labels[i] = c;
        counts[old] -= 1;
        counts[c] = 1;
        centroids.row_mut(c).assign(&points.row(i));
        recompute_centroid(points, labels, old, centroids);
        repairs += 1;
    }
    repairs
}

fn lloyd(points: &Array2<f64>, k: usize, seed: u64, max_iter: usize) -> KMeansResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut labels = assign(points, &centroids);
    let mut prev_assignment: Option<Vec<usize>> = None;
    let mut history = Vec::new();
    let mut repairs = 0;
    let mut iterations = 0;

    for _ in 0..max_iter.max(1) {
        let assignment = assign(points, &centroids);
        if prev_assignment.as_ref() == Some(&assignment) {
            break;
        }
        prev_assignment = Some(assignment.clone());
        labels = assignment;
        let mut counts = update(points, &labels, &mut centroids);
        repairs += repair_empty(points, &mut labels, &mut counts, &mut centroids);
        let j = objective(points, &labels, &centroids);
        debug_assert!(
            history.last().is_none_or(|&prev: &f64| j <= prev + 1e-9 * prev.abs().max(1.0)),
            "k-means objective increased"
        );
        history.push(j);
        iterations += 1;
    }
    let objective = *history.last().expect("at least one iteration");
    KMeansResult {
        labels,
        centroids,
        objective,
        history,
        iterations,
        repairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_far_points() {
        let pts = array![[0.0, 0.0], [10.0, 0.0]];
        let r = kmeans(&pts, &KMeansConfig::new(2, 1)).unwrap();
        assert_ne!(r.labels[0], r.labels[1]);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn identical_points_exercise_repair() {
        let pts = Array2::from_elem((6, 3), 1.5);
        let r = kmeans(&pts, &KMeansConfig::new(2, 4)).unwrap();
        assert_eq!(r.objective, 0.0);
        assert!(r.repairs >= 1);
        assert!(r.labels.iter().all(|&l| l < 2));
    }

    #[test]
    fn too_few_points() {
        let pts = array![[0.0], [1.0]];
        assert!(kmeans(&pts, &KMeansConfig::new(3, 0)).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let pts = Array2::from_shape_fn((40, 2), |(i, j)| ((i * 7 + j * 3) as f64).sin() * 5.0);
        let a = kmeans(&pts, &KMeansConfig::new(4, 99)).unwrap();
        let b = kmeans(&pts, &KMeansConfig::new(4, 99)).unwrap();
        assert_eq!(a, b);
    }
}
