//! Embedding tail scores, the tail set, r-Pareto feature vectors and the
//! augmented embedding used for zoning.

use ndarray::{concatenate, s, Array2, Axis};

use crate::error::{Error, Result};
use crate::gpd::GpdFit;
use crate::grid::empirical_quantile;

/// Tail sets smaller than this trigger a reliability warning.
pub const MIN_RELIABLE_TAIL: usize = 5;

/// Tail nodes with `|score|` at or below this are left out of the
/// direction-normalized set.
pub const SCORE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TailAnalysis {
    pub scores: Vec<f64>,
    pub tau: f64,
    pub threshold: f64,
    /// Row indices with `score >= threshold`, ascending.
    pub tail_ids: Vec<usize>,
    /// `scores[i] - shift`, aligned with `tail_ids`.
    pub excesses: Vec<f64>,
    /// Smallest tail score.
    pub shift: f64,
    pub small_tail: bool,
}

impl TailAnalysis {
    pub fn is_tail(&self, i: usize) -> bool {
        self.tail_ids.binary_search(&i).is_ok()
    }
}

/// Row means of `z`.
pub fn tail_scores(z: &Array2<f64>) -> Vec<f64> {
    let d = z.ncols() as f64;
    z.rows().into_iter().map(|r| r.sum() / d).collect()
}

pub fn extract_tail(scores: &[f64], tau: f64) -> Result<TailAnalysis> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidInput(format!("tau {tau} outside (0, 1)")));
    }
    if scores.is_empty() {
        return Err(Error::EmptyTail);
    }
    let threshold = empirical_quantile(scores, tau)?;
    let tail_ids: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= threshold).collect();
    if tail_ids.is_empty() {
        return Err(Error::EmptyTail);
    }
    let small_tail = tail_ids.len() < MIN_RELIABLE_TAIL;
    if small_tail {
        log::warn!(
            "GPD fit unreliable: tail set has {} nodes (< {MIN_RELIABLE_TAIL})",
            tail_ids.len()
        );
    }
    let shift = tail_ids
        .iter()
        .map(|&i| scores[i])
        .fold(f64::INFINITY, f64::min);
    let excesses = tail_ids.iter().map(|&i| scores[i] - shift).collect();
    Ok(TailAnalysis {
        scores: scores.to_vec(),
        tau,
        threshold,
        tail_ids,
        excesses,
        shift,
        small_tail,
    })
}

/// `N x 4` matrix with rows `(F(r_i), excess_i / sigma, xi, sigma)` for tail
/// nodes and zeros elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct RParetoFeatures {
    pub r: Array2<f64>,
}

/// Largest double below one; keeps the CDF feature in `[0, 1)`.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

pub fn rpareto_features(analysis: &TailAnalysis, fit: &GpdFit) -> RParetoFeatures {
    let mut r = Array2::zeros((analysis.scores.len(), 4));
    for (&i, &excess) in analysis.tail_ids.iter().zip(&analysis.excesses) {
        r[(i, 0)] = fit.cdf(analysis.scores[i]).min(BELOW_ONE);
        r[(i, 1)] = excess / fit.sigma;
        r[(i, 2)] = fit.xi;
        r[(i, 3)] = fit.sigma;
    }
    RParetoFeatures { r }
}

/// Direction-preserving vectors `y_i = z_i / r_i` for tail nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    pub ids: Vec<usize>,
    pub vectors: Array2<f64>,
    /// Tail nodes skipped because their score was too close to zero.
    pub excluded: Vec<usize>,
}

pub fn direction_normalize(z: &Array2<f64>, analysis: &TailAnalysis) -> Result<DirectionSet> {
    if z.nrows() != analysis.scores.len() {
        return Err(Error::shape(
            "embedding rows vs scores",
            analysis.scores.len(),
            z.nrows(),
        ));
    }
    let mut ids = Vec::new();
    let mut excluded = Vec::new();
    for &i in &analysis.tail_ids {
        if analysis.scores[i].abs() <= SCORE_EPS {
            log::warn!("tail node {i} has score {} ~ 0; excluded from normalization", analysis.scores[i]);
            excluded.push(i);
        } else {
            ids.push(i);
        }
    }
    let mut vectors = Array2::zeros((ids.len(), z.ncols()));
    for (row, &i) in ids.iter().enumerate() {
        let r = analysis.scores[i];
        vectors.row_mut(row).assign(&z.row(i).mapv(|v| v / r));
    }
    Ok(DirectionSet {
        ids,
        vectors,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedEmbedding {
    pub z_aug: Array2<f64>,
    pub d_z: usize,
}

impl AugmentedEmbedding {
    pub fn latent(&self) -> ndarray::ArrayView2<'_, f64> {
        self.z_aug.slice(s![.., ..self.d_z])
    }
}

/// Horizontal concatenation `[Z | R]`.
pub fn augment(z: &Array2<f64>, r: &RParetoFeatures) -> Result<AugmentedEmbedding> {
    if z.nrows() != r.r.nrows() {
        return Err(Error::shape("augment rows", z.nrows(), r.r.nrows()));
    }
    let z_aug = concatenate(Axis(1), &[z.view(), r.r.view()]).expect("row counts checked");
    Ok(AugmentedEmbedding {
        z_aug,
        d_z: z.ncols(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpd::FitMethod;
    use ndarray::array;

    fn fit(xi: f64, sigma: f64, mu: f64) -> GpdFit {
        GpdFit {
            xi,
            sigma,
            mu,
            log_likelihood: 0.0,
            n_exceed: 0,
            method: FitMethod::ProfileLikelihood,
        }
    }

    #[test]
    fn scores_are_row_means() {
        let z = array![[1.0, 3.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0], [-1.0, 2.0, 5.0, -2.0]];
        assert_eq!(tail_scores(&z), vec![1.0, 0.0, 1.0]);
        assert_eq!(tail_scores(&array![[1.0, 3.0]]), vec![2.0]);
    }

    #[test]
    fn tail_of_one_to_hundred() {
        let scores: Vec<f64> = (1..=100).map(f64::from).collect();
        let t = extract_tail(&scores, 0.95).unwrap();
        assert!((t.threshold - 95.05).abs() < 1e-12);
        assert_eq!(t.tail_ids, vec![95, 96, 97, 98, 99]);
        assert_eq!(t.shift, 96.0);
        assert_eq!(t.excesses, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(!t.small_tail);
    }

    #[test]
    fn equal_scores_put_everyone_in_the_tail() {
        let t = extract_tail(&[0.7; 30], 0.95).unwrap();
        assert_eq!(t.tail_ids.len(), 30);
        assert!(t.excesses.iter().all(|&e| e == 0.0));
        assert_eq!(t.threshold, 0.7);
    }

    #[test]
    fn low_tau_takes_all_distinct_scores() {
        let scores: Vec<f64> = (0..25).map(|i| 1.0 + (i as f64).sqrt()).collect();
        // the interpolated threshold rounds onto the minimum
        let t = extract_tail(&scores, 1e-18).unwrap();
        assert_eq!(t.tail_ids.len(), 25);
        // a tau just large enough to move off the minimum drops it
        let t = extract_tail(&scores, 1e-6).unwrap();
        assert_eq!(t.tail_ids.len(), 24);
    }

    #[test]
    fn empty_scores_error() {
        assert!(matches!(extract_tail(&[], 0.9), Err(Error::EmptyTail)));
    }

    #[test]
    fn small_tail_flagged() {
        let scores: Vec<f64> = (0..20).map(f64::from).collect();
        assert!(extract_tail(&scores, 0.95).unwrap().small_tail);
    }

    #[test]
    fn rpareto_rows() {
        let scores = vec![0.0, 1.0, 5.0, 7.0];
        let analysis = TailAnalysis {
            scores: scores.clone(),
            tau: 0.5,
            threshold: 3.0,
            tail_ids: vec![2, 3],
            excesses: vec![0.0, 2.0],
            shift: 5.0,
            small_tail: true,
        };
        let f = fit(0.0, 2.0, 5.0);
        let r = rpareto_features(&analysis, &f).r;
        assert_eq!(r.row(0).to_vec(), vec![0.0; 4]);
        assert_eq!(r.row(1).to_vec(), vec![0.0; 4]);
        assert_eq!(r.row(2).to_vec(), vec![0.0, 0.0, 0.0, 2.0]);
        assert!((r[(3, 0)] - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert_eq!(r[(3, 1)], 1.0);
    }

    #[test]
    fn direction_vectors() {
        // the last row sits below the tail threshold
        let z = array![[2.0, 4.0], [3.0, 3.0], [1e-10, -1e-10], [-5.0, -5.0]];
        let analysis = extract_tail(&tail_scores(&z), 0.01).unwrap();
        let y = direction_normalize(&z, &analysis).unwrap();
        assert_eq!(y.excluded, vec![2]);
        assert_eq!(y.ids, vec![0, 1]);
        assert!((y.vectors[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((y.vectors[(0, 1)] - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(y.vectors.row(1).to_vec(), vec![1.0, 1.0]);
    }

    #[test]
    fn augment_shapes() {
        let z = Array2::from_shape_fn((5, 8), |(i, j)| (i * 8 + j) as f64);
        let r = RParetoFeatures {
            r: Array2::zeros((5, 4)),
        };
        let aug = augment(&z, &r).unwrap();
        assert_eq!(aug.z_aug.dim(), (5, 12));
        assert_eq!(aug.latent(), z.view());
        assert!(aug.z_aug.slice(s![.., 8..]).iter().all(|&v| v == 0.0));
        let bad = RParetoFeatures {
            r: Array2::zeros((4, 4)),
        };
        assert!(augment(&z, &bad).is_err());
    }
}
