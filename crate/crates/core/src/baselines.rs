//! Comparison zonings built directly on embedding tail scores, and the
//! multi-year precision / recall / ARI comparison table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::kmeans::{kmeans, KMeansConfig};
use crate::metrics::{adjusted_rand_index, precision_recall_highrisk};
use crate::tail::tail_scores;
use crate::zoning::{order_zones, ZoneMap};

/// Above this many distinct scores the 1-D clustering falls back from the
/// exact dynamic program to Lloyd iterations.
pub const EXACT_1D_LIMIT: usize = 5000;

const LLOYD_RESTARTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    TailFunctional,
    TopKTail,
}

impl BaselineMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineMethod::TailFunctional => "tail_functional",
            BaselineMethod::TopKTail => "topk_tail",
        }
    }
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tail_functional" => Ok(BaselineMethod::TailFunctional),
            "topk_tail" => Ok(BaselineMethod::TopKTail),
            other => Err(Error::Config(format!("unknown baseline method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    pub k_c: usize,
    /// Top-zone size for `topk_tail`; `None` means `ceil(0.05 N)`.
    pub k_top: Option<usize>,
}

pub fn default_k_top(n: usize) -> usize {
    (n * 5).div_ceil(100).max(1)
}

/// Zones from one-dimensional K-means on the embedding tail scores.
pub fn tail_functional_zoning(z: &Array2<f64>, k_c: usize, seed: u64) -> Result<ZoneMap> {
    tail_functional_from_scores(&tail_scores(z), k_c, seed)
}

pub fn tail_functional_from_scores(scores: &[f64], k_c: usize, seed: u64) -> Result<ZoneMap> {
    if k_c < 1 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    if scores.len() < k_c {
        return Err(Error::InvalidInput(format!(
            "cannot form {k_c} clusters from {} points",
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("non-finite tail score".into()));
    }
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let (labels, centroids) = if distinct.len() <= EXACT_1D_LIMIT {
        optimal_1d(scores, &distinct, k_c)
    } else {
        lloyd_1d(scores, k_c, seed)?
    };
    order_zones(&labels, &centroids, scores)
}

/// Exact 1-D K-means by dynamic programming over the distinct sorted values,
/// so equal scores always share a cluster. Segments are contiguous in value
/// order; with fewer distinct values than `k` the extra clusters stay empty.
fn optimal_1d(scores: &[f64], distinct: &[f64], k: usize) -> (Vec<usize>, Array2<f64>) {
    let m = distinct.len();
    let mut weight = vec![0.0; m];
    for s in scores {
        let pos = distinct.partition_point(|v| v < s);
        weight[pos] += 1.0;
    }
    // centre values to keep the prefix-sum cost well conditioned
    let centre = scores.iter().sum::<f64>() / scores.len() as f64;
    let mut pw = vec![0.0; m + 1];
    let mut px = vec![0.0; m + 1];
    let mut pxx = vec![0.0; m + 1];
    for i in 0..m {
        let x = distinct[i] - centre;
        pw[i + 1] = pw[i] + weight[i];
        px[i + 1] = px[i] + weight[i] * x;
        pxx[i + 1] = pxx[i] + weight[i] * x * x;
    }
    // sum of squared deviations of segment [i, j)
    let cost = |i: usize, j: usize| {
        let w = pw[j] - pw[i];
        let s = px[j] - px[i];
        (pxx[j] - pxx[i] - s * s / w).max(0.0)
    };
    let k_eff = k.min(m);
    let mut dp = vec![vec![f64::INFINITY; m + 1]; k_eff + 1];
    let mut cut = vec![vec![0usize; m + 1]; k_eff + 1];
    dp[0][0] = 0.0;
    for c in 1..=k_eff {
        for j in c..=m {
            let mut best = f64::INFINITY;
            let mut arg = c - 1;
            for i in (c - 1)..j {
                let v = dp[c - 1][i] + cost(i, j);
                if v < best {
                    best = v;
                    arg = i;
                }
            }
            dp[c][j] = best;
            cut[c][j] = arg;
        }
    }
    let mut segment_of = vec![0usize; m];
    let mut j = m;
    for c in (1..=k_eff).rev() {
        let i = cut[c][j];
        for s in segment_of.iter_mut().take(j).skip(i) {
            *s = c - 1;
        }
        j = i;
    }
    let labels: Vec<usize> = scores
        .iter()
        .map(|s| segment_of[distinct.partition_point(|v| v < s)])
        .collect();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&l, &s) in labels.iter().zip(scores) {
        sums[l] += s;
        counts[l] += 1;
    }
    let centroids = Array2::from_shape_fn((k, 1), |(c, _)| {
        if counts[c] > 0 {
            sums[c] / counts[c] as f64
        } else {
            0.0
        }
    });
    (labels, centroids)
}

/// Lloyd fallback for very large inputs; clusters whose centroids coincide
/// are merged so equal scores share a zone.
fn lloyd_1d(scores: &[f64], k: usize, seed: u64) -> Result<(Vec<usize>, Array2<f64>)> {
    let points = Array2::from_shape_fn((scores.len(), 1), |(i, _)| scores[i]);
    let cfg = KMeansConfig {
        n_init: LLOYD_RESTARTS,
        ..KMeansConfig::new(k, seed)
    };
    let km = kmeans(&points, &cfg)?;
    let mut canon: Vec<usize> = (0..k).collect();
    for c in 0..k {
        if let Some(first) = (0..c).find(|&o| km.centroids[(o, 0)] == km.centroids[(c, 0)]) {
            canon[c] = canon[first];
        }
    }
    let labels = km.labels.iter().map(|&l| canon[l]).collect();
    Ok((labels, km.centroids))
}

/// The `k_top` highest-score nodes form zone `k_c - 1`; the rest are split
/// into `k_c - 1` equal-frequency score bands. Ties go to the lower row
/// index, which is also the smaller node id.
pub fn topk_tail_zoning(z: &Array2<f64>, k_top: usize, k_c: usize) -> Result<ZoneMap> {
    topk_tail_from_scores(&tail_scores(z), k_top, k_c)
}

pub fn topk_tail_from_scores(scores: &[f64], k_top: usize, k_c: usize) -> Result<ZoneMap> {
    let n = scores.len();
    if k_c < 1 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    if k_top < 1 || k_top > n {
        return Err(Error::InvalidInput(format!("K_top {k_top} outside 1..={n}")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("non-finite tail score".into()));
    }
    let mut desc: Vec<usize> = (0..n).collect();
    desc.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut labels = vec![0usize; n];
    for &i in &desc[..k_top] {
        labels[i] = k_c - 1;
    }
    let mut rest: Vec<usize> = desc[k_top..].to_vec();
    rest.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let bands = k_c - 1;
    let m = rest.len();
    if bands > 0 {
        for (rank, &i) in rest.iter().enumerate() {
            labels[i] = rank * bands / m;
        }
    }
    let mut sums = vec![0.0; k_c];
    let mut counts = vec![0usize; k_c];
    for (&l, &s) in labels.iter().zip(scores) {
        sums[l] += s;
        counts[l] += 1;
    }
    let zone_mean_scores: Vec<f64> = (0..k_c)
        .map(|c| if counts[c] > 0 { sums[c] / counts[c] as f64 } else { f64::NAN })
        .collect();
    let centroids = Array2::from_shape_fn((k_c, 1), |(c, _)| {
        if counts[c] > 0 {
            zone_mean_scores[c]
        } else {
            0.0
        }
    });
    Ok(ZoneMap {
        labels,
        centroids,
        k: k_c,
        severity_order: (0..k_c).collect(),
        zone_mean_scores,
    })
}

/// One model's zonings keyed by year.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodZonings {
    pub model: String,
    pub by_year: BTreeMap<i32, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub model: String,
    /// `None` when every year's ratio was undefined.
    pub mean_precision: Option<f64>,
    pub mean_recall: Option<f64>,
    pub mean_ari: Option<f64>,
}

pub const COMPARISON_HEADER: &str = "model,mean_precision,mean_recall,mean_ari";

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// For each model, compares every year other than `reference_year` with that
/// model's own reference-year zoning: mean precision and recall of the
/// `high_zone`, and mean ARI.
pub fn run_comparison(
    methods: &[MethodZonings],
    years: &[i32],
    reference_year: i32,
    high_zone: usize,
) -> Result<Vec<ComparisonRow>> {
    let wanted: BTreeSet<i32> = years.iter().copied().chain([reference_year]).collect();
    if wanted.len() < 2 {
        return Err(Error::InsufficientObservations {
            needed: 2,
            got: wanted.len(),
        });
    }
    let missing: BTreeSet<i32> = methods
        .iter()
        .flat_map(|m| wanted.iter().filter(|y| !m.by_year.contains_key(y)).copied())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingYears(missing.into_iter().collect()));
    }
    methods
        .iter()
        .map(|m| {
            let reference = &m.by_year[&reference_year];
            let (mut ps, mut rs, mut aris) = (Vec::new(), Vec::new(), Vec::new());
            for y in wanted.iter().filter(|&&y| y != reference_year) {
                let pred = &m.by_year[y];
                let (p, r) = precision_recall_highrisk(reference, pred, high_zone)?;
                ps.extend(p);
                rs.extend(r);
                aris.push(adjusted_rand_index(reference, pred)?);
            }
            Ok(ComparisonRow {
                model: m.model.clone(),
                mean_precision: mean(&ps),
                mean_recall: mean(&rs),
                mean_ari: mean(&aris),
            })
        })
        .collect()
}
