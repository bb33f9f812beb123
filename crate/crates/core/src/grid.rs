//! Gridded daily precipitation: per-node annual summary features and their
//! standardization across nodes.
//!
//! Every node is described by four numbers computed from its daily series
//! for one year: mean, sample standard deviation, maximum, and the fraction
//! of days strictly above the `tau` quantile.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Number of per-node input features (mean, std, max, exceedance frequency).
pub const N_FEATURES: usize = 4;

/// A node is kept only if at least this fraction of its days are valid.
pub const MIN_VALID_FRACTION: f64 = 0.9;

/// Daily precipitation of one grid node for one year. Missing days are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecipPanel {
    pub node_id: u32,
    pub lat: f64,
    pub lon: f64,
    pub year: i32,
    pub values: Vec<f64>,
}

impl PrecipPanel {
    pub fn new(node_id: u32, lat: f64, lon: f64, year: i32, values: Vec<f64>) -> Result<Self> {
        let panel = Self {
            node_id,
            lat,
            lon,
            year,
            values,
        };
        panel.validate()?;
        Ok(panel)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::InvalidInput(format!(
                "node {}: coordinates ({}, {}) out of range",
                self.node_id, self.lat, self.lon
            )));
        }
        if self.values.len() < 2 {
            return Err(Error::InsufficientObservations {
                needed: 2,
                got: self.values.len(),
            });
        }
        if let Some(v) = self
            .values
            .iter()
            .find(|v| !v.is_nan() && (!v.is_finite() || **v < 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "node {}: precipitation value {v} is negative or infinite",
                self.node_id
            )));
        }
        Ok(())
    }

    /// Days with a recorded value.
    pub fn valid_values(&self) -> Vec<f64> {
        self.values.iter().copied().filter(|v| !v.is_nan()).collect()
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().filter(|v| !v.is_nan()).count() as f64 / self.values.len() as f64
    }
}

/// All node panels of one year.
#[derive(Debug, Clone, PartialEq)]
pub struct YearData {
    pub year: i32,
    pub nodes: Vec<PrecipPanel>,
}

impl YearData {
    pub fn new(year: i32, mut nodes: Vec<PrecipPanel>) -> Result<Self> {
        nodes.sort_by_key(|p| p.node_id);
        for w in nodes.windows(2) {
            if w[0].node_id == w[1].node_id {
                return Err(Error::InvalidInput(format!(
                    "duplicate node_id {} in year {year}",
                    w[0].node_id
                )));
            }
        }
        let mut coords: Vec<(u64, u64)> = nodes
            .iter()
            .map(|p| (p.lat.to_bits(), p.lon.to_bits()))
            .collect();
        coords.sort_unstable();
        if coords.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!(
                "duplicate node coordinates in year {year}"
            )));
        }
        for p in &mut nodes {
            p.year = year;
            p.validate()?;
        }
        Ok(Self { year, nodes })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeFeatures {
    pub mu: f64,
    pub sigma: f64,
    pub max_daily: f64,
    pub exceed_freq: f64,
}

impl NodeFeatures {
    pub fn to_array(self) -> [f64; N_FEATURES] {
        [self.mu, self.sigma, self.max_daily, self.exceed_freq]
    }
}

/// Standardized `N x 4` feature matrix with the statistics needed to undo it.
///
/// A `col_stds` entry of exactly zero marks a constant raw column, which is
/// mapped to all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Array2<f64>,
    pub col_means: Vec<f64>,
    pub col_stds: Vec<f64>,
    pub node_index: Vec<u32>,
}

impl FeatureMatrix {
    pub fn n_nodes(&self) -> usize {
        self.rows.nrows()
    }

    /// `x * col_std + col_mean`, column by column.
    pub fn inverse_transform(&self) -> Array2<f64> {
        let mut out = self.rows.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.col_means[j], self.col_stds[j]);
            col.mapv_inplace(|x| x * s + m);
        }
        out
    }
}

/// Linear-interpolation empirical quantile: position `h = (n-1) tau` on the
/// sorted sample (0-based), interpolated between its floor and ceiling.
pub fn empirical_quantile(values: &[f64], tau: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidInput(format!("tau {tau} outside (0, 1]")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, tau))
}

pub(crate) fn quantile_sorted(sorted: &[f64], tau: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * tau;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 || lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Features of one node using the node's own `tau` quantile as the exceedance
/// threshold.
pub fn compute_features(panel: &PrecipPanel, tau: f64) -> Result<NodeFeatures> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidInput(format!("tau {tau} outside (0, 1)")));
    }
    let valid = panel.valid_values();
    if valid.len() < 2 {
        return Err(Error::InsufficientObservations {
            needed: 2,
            got: valid.len(),
        });
    }
    let q = empirical_quantile(&valid, tau)?;
    Ok(features_of(&valid, q))
}

/// Features of one node against an externally supplied threshold (used for
/// the domain-pooled quantile scope).
pub fn compute_features_with_threshold(panel: &PrecipPanel, threshold: f64) -> Result<NodeFeatures> {
    let valid = panel.valid_values();
    if valid.len() < 2 {
        return Err(Error::InsufficientObservations {
            needed: 2,
            got: valid.len(),
        });
    }
    Ok(features_of(&valid, threshold))
}

fn features_of(valid: &[f64], threshold: f64) -> NodeFeatures {
    let n = valid.len() as f64;
    let mu = valid.iter().sum::<f64>() / n;
    let ss: f64 = valid.iter().map(|v| (v - mu) * (v - mu)).sum();
    let sigma = (ss / (n - 1.0)).sqrt();
    let max_daily = valid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exceed = valid.iter().filter(|&&v| v > threshold).count() as f64;
    NodeFeatures {
        mu,
        // a constant series can leave mu a rounding step above the max
        sigma,
        max_daily: max_daily.max(mu),
        exceed_freq: exceed / n,
    }
}

/// Column-wise z-scores with the sample (N-1) standard deviation.
pub fn standardize(raw: &Array2<f64>, node_index: Vec<u32>) -> Result<FeatureMatrix> {
    let n = raw.nrows();
    if n < 2 {
        return Err(Error::InsufficientObservations { needed: 2, got: n });
    }
    if node_index.len() != n {
        return Err(Error::shape("standardize node index", n, node_index.len()));
    }
    let mut rows = raw.clone();
    let mut col_means = Vec::with_capacity(raw.ncols());
    let mut col_stds = Vec::with_capacity(raw.ncols());
    for mut col in rows.axis_iter_mut(Axis(1)) {
        let mean = col.iter().sum::<f64>() / n as f64;
        let ss: f64 = col.iter().map(|x| (x - mean) * (x - mean)).sum();
        let std = (ss / (n - 1) as f64).sqrt();
        let scale = col.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        if std <= 1e-14 * scale.max(f64::MIN_POSITIVE) || std == 0.0 {
            col.fill(0.0);
            col_stds.push(0.0);
        } else {
            col.mapv_inplace(|x| (x - mean) / std);
            col_stds.push(std);
        }
        col_means.push(mean);
    }
    Ok(FeatureMatrix {
        rows,
        col_means,
        col_stds,
        node_index,
    })
}

/// Pooling scope of the exceedance threshold used by the frequency feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuantileScope {
    /// Each node's own `tau` quantile.
    #[default]
    Node,
    /// One `tau` quantile over every valid value of every retained node.
    Domain,
}

impl QuantileScope {
    pub fn as_str(self) -> &'static str {
        match self {
            QuantileScope::Node => "node",
            QuantileScope::Domain => "domain",
        }
    }
}

impl std::str::FromStr for QuantileScope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node" => Ok(Self::Node),
            "domain" => Ok(Self::Domain),
            other => Err(Error::Config(format!("unknown quantile scope `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedNode {
    pub node_id: u32,
    pub valid_fraction: f64,
}

/// Retained node metadata alongside its raw features.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub node_id: u32,
    pub lat: f64,
    pub lon: f64,
    pub features: NodeFeatures,
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearFeatures {
    pub year: i32,
    pub records: Vec<NodeRecord>,
    pub matrix: FeatureMatrix,
    pub dropped: Vec<DroppedNode>,
    pub scope: QuantileScope,
}

impl YearFeatures {
    pub fn coords(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.lat, r.lon)).collect()
    }
}

/// Drops nodes with too many missing days, computes the four features for
/// the rest, and standardizes them across nodes.
pub fn build_year_features(data: &YearData, tau: f64, scope: QuantileScope) -> Result<YearFeatures> {
    let mut dropped = Vec::new();
    let mut kept: Vec<&PrecipPanel> = Vec::new();
    for p in &data.nodes {
        let frac = p.valid_fraction();
        if frac < MIN_VALID_FRACTION || p.valid_values().len() < 2 {
            log::warn!(
                "year {}: dropping node {} ({:.1}% valid days)",
                data.year,
                p.node_id,
                100.0 * frac
            );
            dropped.push(DroppedNode {
                node_id: p.node_id,
                valid_fraction: frac,
            });
        } else {
            kept.push(p);
        }
    }
    if kept.len() < 2 {
        return Err(Error::InsufficientObservations {
            needed: 2,
            got: kept.len(),
        });
    }

    let pooled_threshold = match scope {
        QuantileScope::Node => None,
        QuantileScope::Domain => {
            let all: Vec<f64> = kept.iter().flat_map(|p| p.valid_values()).collect();
            Some(empirical_quantile(&all, tau)?)
        }
    };

    let mut records = Vec::with_capacity(kept.len());
    for p in &kept {
        let features = match pooled_threshold {
            None => compute_features(p, tau)?,
            Some(q) => compute_features_with_threshold(p, q)?,
        };
        records.push(NodeRecord {
            node_id: p.node_id,
            lat: p.lat,
            lon: p.lon,
            features,
        });
    }
    let mut raw = Array2::zeros((records.len(), N_FEATURES));
    for (i, r) in records.iter().enumerate() {
        for (j, v) in r.features.to_array().into_iter().enumerate() {
            raw[(i, j)] = v;
        }
    }
    let matrix = standardize(&raw, records.iter().map(|r| r.node_id).collect())?;
    Ok(YearFeatures {
        year: data.year,
        records,
        matrix,
        dropped,
        scope,
    })
}
