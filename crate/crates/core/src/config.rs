//! Run configuration: defaults, `key=value` file parsing and the metadata
//! dump written next to every run.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gcn::TrainConfig;
use crate::graph::{DistanceMetric, GraphOptions, Symmetrize};
use crate::grid::QuantileScope;

/// Which matrix the zoning K-means runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterInput {
    /// `[Z | R]`.
    Augmented,
    EmbeddingOnly,
}

/// How non-tail nodes receive a zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    /// K-means over every node.
    Full,
    /// K-means over tail nodes, then nearest-tail propagation.
    Propagate,
}

macro_rules! str_enum {
    ($ty:ident, $what:literal, $($variant:ident => $name:literal),+) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($ty::$variant => $name,)+
                }
            }
        }

        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(Error::Config(format!(concat!("unknown ", $what, " '{}'"), other))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

str_enum!(ClusterInput, "cluster input", Augmented => "augmented", EmbeddingOnly => "embedding_only");
str_enum!(Assignment, "assignment mode", Full => "full", Propagate => "propagate");

/// Layout of the synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub rows: usize,
    pub cols: usize,
    pub n_years: usize,
    pub days: usize,
    pub first_year: i32,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            rows: 20,
            cols: 20,
            n_years: 3,
            days: 365,
            first_year: 2001,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Directory of `<year>.csv` / `<year>.bin` inputs. `None` means synthetic.
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    /// Years to process; empty means every year found.
    pub years: Vec<i32>,
    pub seed: u64,
    pub tau: f64,
    pub k_neighbors: usize,
    pub symmetrize: Symmetrize,
    pub metric: DistanceMetric,
    pub quantile_scope: QuantileScope,
    pub d_h: usize,
    pub d_z: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub k_c: usize,
    pub cluster_input: ClusterInput,
    pub assignment: Assignment,
    pub kmeans_restarts: usize,
    pub orient: bool,
    pub free_location: bool,
    pub ridge_scale: f64,
    pub reference_year: Option<i32>,
    pub k_top: Option<usize>,
    pub synth: SynthSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            out: PathBuf::from("out"),
            years: Vec::new(),
            seed: 42,
            tau: 0.95,
            k_neighbors: 8,
            symmetrize: Symmetrize::Union,
            metric: DistanceMetric::Euclidean,
            quantile_scope: QuantileScope::Node,
            d_h: 16,
            d_z: 8,
            epochs: 200,
            learning_rate: 0.01,
            k_c: 4,
            cluster_input: ClusterInput::Augmented,
            assignment: Assignment::Full,
            kmeans_restarts: 10,
            orient: true,
            free_location: false,
            ridge_scale: crate::metrics::DEFAULT_RIDGE_SCALE,
            reference_year: None,
            k_top: None,
            synth: SynthSettings::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid value '{value}' for {key}"))),
    }
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value.is_empty() || value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn map_config_err<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    })
}

impl RunConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "input" => self.input = (!value.is_empty()).then(|| PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "years" => {
                self.years = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse("years", s))
                    .collect::<Result<_>>()?
            }
            "seed" => self.seed = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "k" | "k_neighbors" => self.k_neighbors = parse(key, value)?,
            "symmetrize" => self.symmetrize = map_config_err(value.parse())?,
            "metric" => self.metric = map_config_err(value.parse())?,
            "quantile_scope" => self.quantile_scope = map_config_err(value.parse())?,
            "d_h" => self.d_h = parse(key, value)?,
            "d_z" => self.d_z = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "learning_rate" | "lr" => self.learning_rate = parse(key, value)?,
            "zones" | "k_c" => self.k_c = parse(key, value)?,
            "cluster_input" => self.cluster_input = value.parse()?,
            "assignment" => self.assignment = value.parse()?,
            "kmeans_restarts" => self.kmeans_restarts = parse(key, value)?,
            "orient" => self.orient = parse_bool(key, value)?,
            "free_location" => self.free_location = parse_bool(key, value)?,
            "ridge_scale" => self.ridge_scale = parse(key, value)?,
            "reference_year" => self.reference_year = parse_opt(key, value)?,
            "k_top" => self.k_top = parse_opt(key, value)?,
            "synth_rows" => self.synth.rows = parse(key, value)?,
            "synth_cols" => self.synth.cols = parse(key, value)?,
            "synth_years" => self.synth.n_years = parse(key, value)?,
            "synth_days" => self.synth.days = parse(key, value)?,
            "synth_first_year" => self.synth.first_year = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_str(text)?;
        Ok(cfg)
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got '{line}'", n + 1))
            })?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau {} outside (0, 1)", self.tau));
        }
        if self.k_neighbors < 1 {
            return bad("k must be at least 1".into());
        }
        if self.d_h < 1 || self.d_z < 1 {
            return bad("d_h and d_z must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.k_c < 1 {
            return bad("zones must be at least 1".into());
        }
        if self.kmeans_restarts < 1 {
            return bad("kmeans_restarts must be at least 1".into());
        }
        if !(self.ridge_scale >= 0.0 && self.ridge_scale.is_finite()) {
            return bad(format!("ridge_scale {} must be >= 0", self.ridge_scale));
        }
        if self.k_top == Some(0) {
            return bad("k_top must be at least 1".into());
        }
        if self.input.is_none() {
            let s = &self.synth;
            if s.rows < 1 || s.cols < 1 || s.n_years < 1 || s.days < 2 {
                return bad("synthetic grid needs rows, cols, years >= 1 and days >= 2".into());
            }
        }
        Ok(())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            d_h: self.d_h,
            d_z: self.d_z,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn graph_options(&self) -> GraphOptions {
        GraphOptions {
            symmetrize: self.symmetrize,
            metric: self.metric,
        }
    }

    /// Every setting as sorted-by-appearance `key=value` pairs.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let opt = |o: Option<String>| o.unwrap_or_else(|| "auto".into());
        vec![
            (
                "input",
                self.input
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_else(|| "synthetic".into()),
            ),
            (
                "years",
                self.years.iter().map(i32::to_string).collect::<Vec<_>>().join(","),
            ),
            ("seed", self.seed.to_string()),
            ("tau", self.tau.to_string()),
            ("k_neighbors", self.k_neighbors.to_string()),
            ("symmetrize", self.symmetrize.as_str().into()),
            ("metric", self.metric.as_str().into()),
            ("quantile_scope", self.quantile_scope.as_str().into()),
            ("d_h", self.d_h.to_string()),
            ("d_z", self.d_z.to_string()),
            ("epochs", self.epochs.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("k_c", self.k_c.to_string()),
            ("cluster_input", self.cluster_input.as_str().into()),
            ("assignment", self.assignment.as_str().into()),
            ("kmeans_restarts", self.kmeans_restarts.to_string()),
            ("orient", self.orient.to_string()),
            ("free_location", self.free_location.to_string()),
            ("ridge_scale", self.ridge_scale.to_string()),
            ("reference_year", opt(self.reference_year.map(|y| y.to_string()))),
            ("k_top", opt(self.k_top.map(|k| k.to_string()))),
            ("synth_rows", self.synth.rows.to_string()),
            ("synth_cols", self.synth.cols.to_string()),
            ("synth_years", self.synth.n_years.to_string()),
            ("synth_days", self.synth.days.to_string()),
            ("synth_first_year", self.synth.first_year.to_string()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.tau, 0.95);
        assert_eq!(c.k_neighbors, 8);
        assert_eq!(c.k_c, 4);
        assert_eq!((c.d_h, c.d_z, c.epochs), (16, 8, 200));
        assert_eq!(c.learning_rate, 0.01);
        c.validate().unwrap();
    }

    #[test]
    fn parse_file_text() {
        let c = RunConfig::parse_str(
            "# run\n tau = 0.9\nk=6\n\ncluster_input=embedding_only # trailing\nyears=2001, 2003\nk_top=auto\n",
        )
        .unwrap();
        assert_eq!(c.tau, 0.9);
        assert_eq!(c.k_neighbors, 6);
        assert_eq!(c.cluster_input, ClusterInput::EmbeddingOnly);
        assert_eq!(c.years, vec![2001, 2003]);
        assert_eq!(c.k_top, None);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::parse_str("bogus=1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse_str("tau"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse_str("k=x"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse_str("metric=manhattan"), Err(Error::Config(_))));
        let mut c = RunConfig::default();
        c.tau = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn pairs_round_trip() {
        let mut c = RunConfig::default();
        c.set("assignment", "propagate").unwrap();
        c.set("reference_year", "2002").unwrap();
        let text: String = c
            .to_pairs()
            .into_iter()
            .filter(|(k, _)| *k != "input")
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        assert_eq!(RunConfig::parse_str(&text).unwrap(), c);
    }
}
