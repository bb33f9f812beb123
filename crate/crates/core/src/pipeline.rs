//! End-to-end orchestration: per-year zoning, cross-year diagnostics,
//! baseline comparison, and the output directory tree.
//!
//! Each year consumes only its own data and its own derived seeds, so years
//! run in parallel and a failing year does not affect the others.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::baselines::{
    default_k_top, run_comparison, tail_functional_zoning, topk_tail_zoning, ComparisonRow,
    MethodZonings,
};
use crate::config::{Assignment, ClusterInput, RunConfig};
use crate::error::{Error, Result};
use crate::export::{write_fraction_pgm, write_geojson, write_zone_ppm, MapPoint};
use crate::gcn::{orient_embeddings, train, EmbeddingSet, GcnParams, TrainReport};
use crate::gpd::{fit_gpd, fit_gpd_free_location, GpdFit};
use crate::graph::{build_knn_graph_with, normalize_adjacency, NormalizedAdjacency, SpatialGraph};
use crate::grid::{build_year_features, YearData, YearFeatures};
use crate::io;
use crate::kmeans::KMeansConfig;
use crate::metrics::{adjusted_rand_index, mahalanobis_crossyear, CrossYearDiagnostics, Ridge};
use crate::seeds::{stage_seed, Stage};
use crate::synth::{synth_generate, SynthSpec};
use crate::tail::{
    augment, direction_normalize, extract_tail, rpareto_features, tail_scores, DirectionSet,
    RParetoFeatures, TailAnalysis,
};
use crate::zoning::{aggregate_years, zone_by_clustering, zone_by_propagation, MultiYearZones, ZoneMap};

/// Model name of the main pipeline in comparison tables.
pub const MAIN_MODEL: &str = "gnn_rp";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct YearSeeds {
    pub train: u64,
    pub cluster: u64,
    pub baseline: u64,
}

impl YearSeeds {
    pub fn derive(master: u64, year: i32) -> Self {
        Self {
            train: stage_seed(master, year, Stage::Train),
            cluster: stage_seed(master, year, Stage::Cluster),
            baseline: stage_seed(master, year, Stage::Baseline),
        }
    }
}

/// Everything produced for one year.
#[derive(Debug, Clone)]
pub struct YearBundle {
    pub year: i32,
    pub seeds: YearSeeds,
    pub features: YearFeatures,
    pub graph: SpatialGraph,
    pub operator: NormalizedAdjacency,
    pub params: GcnParams,
    pub embedding: EmbeddingSet,
    pub train: TrainReport,
    pub flipped: bool,
    pub tail: TailAnalysis,
    pub fit: GpdFit,
    pub rpareto: RParetoFeatures,
    pub directions: DirectionSet,
    pub zones: ZoneMap,
}

impl YearBundle {
    pub fn summary(&self) -> YearSummary {
        YearSummary {
            year: self.year,
            node_index: self.embedding.node_index.clone(),
            coords: self.features.coords(),
            z: self.embedding.z.clone(),
            labels: self.zones.labels.clone(),
            k: self.zones.k,
        }
    }
}

/// What cross-year stages need from a year; also loadable from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct YearSummary {
    pub year: i32,
    pub node_index: Vec<u32>,
    pub coords: Vec<(f64, f64)>,
    pub z: Array2<f64>,
    pub labels: Vec<usize>,
    pub k: usize,
}

fn tagged<T>(stage: &'static str, year: i32, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::stage(stage, year, e))
}

/// Features only.
pub fn run_features(cfg: &RunConfig, data: &YearData) -> Result<YearFeatures> {
    tagged(
        "features",
        data.year,
        build_year_features(data, cfg.tau, cfg.quantile_scope),
    )
}

/// Features, graph, embedding, tail model and zones for one year.
pub fn run_year(cfg: &RunConfig, data: &YearData) -> Result<YearBundle> {
    let year = data.year;
    let seeds = YearSeeds::derive(cfg.seed, year);
    let features = run_features(cfg, data)?;

    let coords = features.coords();
    let graph = tagged(
        "graph",
        year,
        build_knn_graph_with(&coords, cfg.k_neighbors, cfg.graph_options()),
    )?;
    let operator = normalize_adjacency(&graph);

    let x = &features.matrix.rows;
    let (mut params, mut embedding, report) = tagged(
        "train",
        year,
        train(&operator, x, &features.matrix.node_index, &cfg.train_config(seeds.train)),
    )?;
    embedding.year = Some(year);
    let flipped = if cfg.orient {
        let reference: Vec<f64> = x.sum_axis(Axis(1)).to_vec();
        orient_embeddings(&mut params, &mut embedding.z, &reference)
    } else {
        false
    };

    let scores = tail_scores(&embedding.z);
    let tail = tagged("tail", year, extract_tail(&scores, cfg.tau))?;
    let fit = tagged("tail", year, {
        if cfg.free_location {
            let values: Vec<f64> = tail.tail_ids.iter().map(|&i| scores[i]).collect();
            fit_gpd_free_location(&values, tail.shift)
        } else {
            fit_gpd(&tail.excesses, tail.shift)
        }
    })?;
    let rpareto = rpareto_features(&tail, &fit);
    let directions = tagged("tail", year, direction_normalize(&embedding.z, &tail))?;
    let aug = tagged("zoning", year, augment(&embedding.z, &rpareto))?;

    let points = match cfg.cluster_input {
        ClusterInput::Augmented => &aug.z_aug,
        ClusterInput::EmbeddingOnly => &embedding.z,
    };
    let km = KMeansConfig {
        n_init: cfg.kmeans_restarts,
        ..KMeansConfig::new(cfg.k_c, seeds.cluster)
    };
    let zones = tagged("zoning", year, match cfg.assignment {
        Assignment::Full => zone_by_clustering(points, &scores, &km),
        Assignment::Propagate => {
            zone_by_propagation(points, embedding.z.view(), &tail.tail_ids, &scores, &km)
        }
    })?;

    Ok(YearBundle {
        year,
        seeds,
        features,
        graph,
        operator,
        params,
        embedding,
        train: report,
        flipped,
        tail,
        fit,
        rpareto,
        directions,
        zones,
    })
}

fn kv(pairs: Vec<(&str, String)>) -> Vec<(String, String)> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Writes the features of one year into `dir`.
pub fn write_features(dir: &Path, features: &YearFeatures) -> Result<()> {
    io::write_features_csv(&dir.join("features.csv"), &features.records)
}

/// Writes every artifact of one year into `dir`.
pub fn write_year(dir: &Path, cfg: &RunConfig, b: &YearBundle) -> Result<()> {
    let ids = &b.embedding.node_index;
    write_features(dir, &b.features)?;
    io::write_matrix_csv(&dir.join("features_std.csv"), "x", ids, &b.features.matrix.rows)?;
    io::write_edges_csv(&dir.join("edges.csv"), &b.graph.edges, ids)?;
    io::write_operator_csv(&dir.join("operator.csv"), &b.operator)?;
    io::write_embedding_bin(&dir.join("embedding.bin"), &b.embedding.z)?;
    io::write_embedding_csv(&dir.join("embedding.csv"), ids, &b.embedding.z)?;
    io::write_tail_report(&dir.join("tail.csv"), &io::tail_rows(ids, &b.tail, &b.rpareto))?;
    io::write_fit_summary(&dir.join("gpd_fit.txt"), &b.fit)?;
    let dir_ids: Vec<u32> = b.directions.ids.iter().map(|&i| ids[i]).collect();
    io::write_matrix_csv(&dir.join("directions.csv"), "y", &dir_ids, &b.directions.vectors)?;
    let losses: Vec<(String, f64)> = b
        .train
        .loss_curve
        .iter()
        .enumerate()
        .map(|(e, l)| ((e + 1).to_string(), *l))
        .collect();
    write_pairs_csv(&dir.join("loss.csv"), "epoch,loss", &losses)?;

    let coords = b.features.coords();
    let zone_rows: Vec<io::ZoneRow> = b
        .features
        .records
        .iter()
        .zip(&b.zones.labels)
        .map(|(r, &zone)| io::ZoneRow {
            node_id: r.node_id,
            lat: r.lat,
            lon: r.lon,
            zone,
        })
        .collect();
    io::write_zone_csv(&dir.join("zones.csv"), &zone_rows)?;
    let points: Vec<MapPoint> = zone_rows
        .iter()
        .map(|r| MapPoint {
            node_id: r.node_id,
            lat: r.lat,
            lon: r.lon,
            zone: r.zone,
            high_risk_freq: None,
        })
        .collect();
    write_geojson(&dir.join("zones.geojson"), &points)?;
    write_zone_ppm(&dir.join("zones.ppm"), &coords, &b.zones.labels, b.zones.k)?;

    let dropped: Vec<u32> = b.features.dropped.iter().map(|d| d.node_id).collect();
    let mut meta = kv(vec![
        ("year", b.year.to_string()),
        ("seed_train", b.seeds.train.to_string()),
        ("seed_cluster", b.seeds.cluster.to_string()),
        ("seed_baseline", b.seeds.baseline.to_string()),
        ("matmul_threads", "1".into()),
        ("n_nodes", ids.len().to_string()),
        ("dropped_nodes", join(&dropped)),
        ("k_effective", b.graph.k.to_string()),
        ("k_clamped", b.graph.was_clamped().to_string()),
        ("n_edges", b.graph.edges.len().to_string()),
        ("initial_loss", b.train.initial_loss.to_string()),
        ("final_loss", b.train.final_loss.to_string()),
        ("final_learning_rate", b.train.learning_rate.to_string()),
        ("lr_halvings", b.train.halvings.to_string()),
        ("rejected_steps", b.train.rejected_steps.to_string()),
        ("orientation_flipped", b.flipped.to_string()),
        ("tail_threshold", b.tail.threshold.to_string()),
        ("n_tail", b.tail.tail_ids.len().to_string()),
        ("small_tail", b.tail.small_tail.to_string()),
        ("direction_excluded", b.directions.excluded.len().to_string()),
        ("gpd_method", b.fit.method.as_str().into()),
        ("zone_sizes", join(&b.zones.zone_sizes())),
        ("zone_mean_scores", join(&b.zones.zone_mean_scores)),
        ("severity_order", join(&b.zones.severity_order)),
    ]);
    meta.extend(config_pairs(cfg));
    io::write_kv(&dir.join("metadata.txt"), &meta)
}

fn config_pairs(cfg: &RunConfig) -> Vec<(String, String)> {
    cfg.to_pairs()
        .into_iter()
        .filter(|(k, _)| *k != "input")
        .map(|(k, v)| (format!("config.{k}"), v))
        .collect()
}

fn write_pairs_csv(path: &Path, header: &str, rows: &[(String, f64)]) -> Result<()> {
    let text: String = std::iter::once(format!("{header}\n"))
        .chain(rows.iter().map(|(a, b)| format!("{a},{b}\n")))
        .collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads the cross-year inputs of one year from a directory written by
/// [`write_year`].
pub fn load_year_summary(dir: &Path, year: i32, d_z: usize) -> Result<YearSummary> {
    let (node_index, z) = io::read_embedding_csv(&dir.join("embedding.csv"), d_z)?;
    let zones = io::read_zone_csv(&dir.join("zones.csv"))?;
    if zones.iter().map(|r| r.node_id).ne(node_index.iter().copied()) {
        return Err(Error::IndexMismatch(format!(
            "year {year}: zones and embedding list different nodes"
        )));
    }
    let meta: BTreeMap<String, String> = io::read_kv(&dir.join("metadata.txt"))?.into_iter().collect();
    let k = meta
        .get("config.k_c")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::InvalidInput(format!("year {year}: metadata lacks config.k_c")))?;
    Ok(YearSummary {
        year,
        node_index,
        coords: zones.iter().map(|r| (r.lat, r.lon)).collect(),
        z,
        labels: zones.iter().map(|r| r.zone).collect(),
        k,
    })
}

/// Loads every `<out>/<year>/` directory written by [`write_year`].
pub fn load_year_summaries(out: &Path, d_z: usize) -> Result<Vec<YearSummary>> {
    let entries = std::fs::read_dir(out).map_err(|e| Error::io(out, e))?;
    let mut years = BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(out, e))?;
        if entry.path().join("zones.csv").is_file() {
            if let Some(y) = entry.file_name().to_str().and_then(|s| s.parse::<i32>().ok()) {
                years.insert(y);
            }
        }
    }
    years
        .into_iter()
        .map(|y| load_year_summary(&out.join(y.to_string()), y, d_z))
        .collect()
}

/// Restricts every year to the nodes present in all years.
fn common_nodes(years: &[YearSummary]) -> Result<(Vec<u32>, Vec<YearSummary>)> {
    let mut common: BTreeSet<u32> = years[0].node_index.iter().copied().collect();
    for y in &years[1..] {
        let ids: BTreeSet<u32> = y.node_index.iter().copied().collect();
        common = common.intersection(&ids).copied().collect();
    }
    if common.len() < 2 {
        return Err(Error::IndexMismatch("fewer than two nodes shared by all years".into()));
    }
    let restricted = years
        .iter()
        .map(|y| {
            if y.node_index.len() != common.len() {
                log::warn!("year {}: restricted to {} shared nodes", y.year, common.len());
            }
            let rows: Vec<usize> = (0..y.node_index.len())
                .filter(|&i| common.contains(&y.node_index[i]))
                .collect();
            YearSummary {
                year: y.year,
                node_index: rows.iter().map(|&i| y.node_index[i]).collect(),
                coords: rows.iter().map(|&i| y.coords[i]).collect(),
                z: y.z.select(Axis(0), &rows),
                labels: rows.iter().map(|&i| y.labels[i]).collect(),
                k: y.k,
            }
        })
        .collect();
    Ok((common.into_iter().collect(), restricted))
}

#[derive(Debug, Clone)]
pub struct TemporalReport {
    pub years: Vec<i32>,
    pub reference_year: i32,
    pub node_index: Vec<u32>,
    pub coords: Vec<(f64, f64)>,
    /// Consecutive pairs `(label, diagnostics)`.
    pub diagnostics: Vec<(String, CrossYearDiagnostics)>,
    pub ari_reference: Vec<(String, f64)>,
    pub ari_consecutive: Vec<(String, f64)>,
    pub zones: MultiYearZones,
}

fn pair_label(a: i32, b: i32) -> String {
    format!("{a}-{b}")
}

fn sorted_years(years: &[YearSummary]) -> Result<Vec<YearSummary>> {
    let mut v = years.to_vec();
    v.sort_by_key(|y| y.year);
    if v.windows(2).any(|w| w[0].year == w[1].year) {
        return Err(Error::InvalidInput("duplicate year".into()));
    }
    Ok(v)
}

fn reference_year(cfg: &RunConfig, years: &[i32]) -> Result<i32> {
    match cfg.reference_year {
        Some(y) if years.contains(&y) => Ok(y),
        Some(y) => Err(Error::MissingYears(vec![y])),
        None => Ok(years[0]),
    }
}

/// Consecutive-year Mahalanobis diagnostics, ARI series and multi-year maps.
pub fn run_temporal(cfg: &RunConfig, years: &[YearSummary]) -> Result<TemporalReport> {
    if years.len() < 2 {
        return Err(Error::InsufficientObservations {
            needed: 2,
            got: years.len(),
        });
    }
    let years = sorted_years(years)?;
    let (node_index, years) = common_nodes(&years)?;
    let labels: Vec<i32> = years.iter().map(|y| y.year).collect();
    let reference = reference_year(cfg, &labels)?;

    let diagnostics = years
        .par_windows(2)
        .map(|w| {
            let d = mahalanobis_crossyear(
                &w[0].z,
                &w[0].node_index,
                &w[1].z,
                &w[1].node_index,
                Ridge::Relative(cfg.ridge_scale),
            )?;
            Ok((pair_label(w[0].year, w[1].year), d))
        })
        .collect::<Result<Vec<_>>>()?;

    let ref_labels = &years.iter().find(|y| y.year == reference).expect("checked").labels;
    let ari_reference = years
        .iter()
        .filter(|y| y.year != reference)
        .map(|y| Ok((pair_label(reference, y.year), adjusted_rand_index(ref_labels, &y.labels)?)))
        .collect::<Result<Vec<_>>>()?;
    let ari_consecutive = years
        .windows(2)
        .map(|w| {
            Ok((
                pair_label(w[0].year, w[1].year),
                adjusted_rand_index(&w[0].labels, &w[1].labels)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let maps: Vec<ZoneMap> = years
        .iter()
        .map(|y| ZoneMap {
            labels: y.labels.clone(),
            centroids: Array2::zeros((y.k, 0)),
            k: y.k,
            severity_order: (0..y.k).collect(),
            zone_mean_scores: vec![f64::NAN; y.k],
        })
        .collect();
    let zones = aggregate_years(&labels, &maps, &node_index)?;
    Ok(TemporalReport {
        years: labels,
        reference_year: reference,
        coords: years[0].coords.clone(),
        node_index,
        diagnostics,
        ari_reference,
        ari_consecutive,
        zones,
    })
}

pub fn write_temporal(dir: &Path, cfg: &RunConfig, r: &TemporalReport) -> Result<()> {
    let summaries: Vec<_> = r.diagnostics.iter().map(|(p, d)| (p.clone(), d.summary)).collect();
    io::write_diagnostics_csv(&dir.join("diagnostics.csv"), &summaries)?;
    for (pair, d) in &r.diagnostics {
        io::write_distances_csv(&dir.join(format!("distances_{pair}.csv")), d)?;
    }
    io::write_ari_series(&dir.join("ari_reference.csv"), &r.ari_reference)?;
    io::write_ari_series(&dir.join("ari_consecutive.csv"), &r.ari_consecutive)?;

    let rows: Vec<io::ZoneRow> = r
        .node_index
        .iter()
        .zip(&r.coords)
        .zip(&r.zones.modal_zone)
        .map(|((&node_id, &(lat, lon)), &zone)| io::ZoneRow { node_id, lat, lon, zone })
        .collect();
    io::write_zone_csv(&dir.join("modal_zones.csv"), &rows)?;
    let freq: Vec<(String, f64)> = r
        .node_index
        .iter()
        .zip(&r.zones.high_risk_freq)
        .map(|(id, f)| (id.to_string(), *f))
        .collect();
    write_pairs_csv(&dir.join("high_risk_freq.csv"), "node_id,high_risk_freq", &freq)?;
    let points: Vec<MapPoint> = rows
        .iter()
        .zip(&r.zones.high_risk_freq)
        .map(|(row, &f)| MapPoint {
            node_id: row.node_id,
            lat: row.lat,
            lon: row.lon,
            zone: row.zone,
            high_risk_freq: Some(f),
        })
        .collect();
    write_geojson(&dir.join("zones.geojson"), &points)?;
    write_zone_ppm(&dir.join("modal_zones.ppm"), &r.coords, &r.zones.modal_zone, r.zones.k)?;
    write_fraction_pgm(&dir.join("high_risk_freq.pgm"), &r.coords, &r.zones.high_risk_freq)?;

    let ridges: Vec<f64> = r.diagnostics.iter().map(|(_, d)| d.ridge).collect();
    let dof = r.diagnostics.first().map_or(0, |(_, d)| d.dof);
    let mut meta = kv(vec![
        ("years", join(&r.years)),
        ("reference_year", r.reference_year.to_string()),
        ("n_shared_nodes", r.node_index.len().to_string()),
        ("chi2_dof", dof.to_string()),
        ("chi2_dof_assumption", "dof equals the embedding dimension".into()),
        ("significance_level", crate::metrics::SIGNIFICANCE.to_string()),
        ("ridges", join(&ridges)),
    ]);
    meta.extend(config_pairs(cfg));
    io::write_kv(&dir.join("metadata.txt"), &meta)
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub reference_year: i32,
    pub k_top: usize,
    pub rows: Vec<ComparisonRow>,
    pub methods: Vec<MethodZonings>,
    pub node_index: Vec<u32>,
}

/// Builds both baselines for every year and scores all three models.
pub fn run_compare(cfg: &RunConfig, years: &[YearSummary]) -> Result<ComparisonReport> {
    if years.len() < 2 {
        return Err(Error::InsufficientObservations {
            needed: 2,
            got: years.len(),
        });
    }
    let years = sorted_years(years)?;
    let (node_index, years) = common_nodes(&years)?;
    let labels: Vec<i32> = years.iter().map(|y| y.year).collect();
    let reference = reference_year(cfg, &labels)?;
    let k_top = cfg.k_top.unwrap_or_else(|| default_k_top(node_index.len()));

    let baselines = years
        .par_iter()
        .map(|y| {
            let seed = YearSeeds::derive(cfg.seed, y.year).baseline;
            let tf = tagged("baseline", y.year, tail_functional_zoning(&y.z, cfg.k_c, seed))?;
            let tk = tagged("baseline", y.year, topk_tail_zoning(&y.z, k_top, cfg.k_c))?;
            Ok((y.year, tf.labels, tk.labels))
        })
        .collect::<Result<Vec<_>>>()?;

    let main = MethodZonings {
        model: MAIN_MODEL.into(),
        by_year: years.iter().map(|y| (y.year, y.labels.clone())).collect(),
    };
    let tf = MethodZonings {
        model: "tail_functional".into(),
        by_year: baselines.iter().map(|(y, l, _)| (*y, l.clone())).collect(),
    };
    let tk = MethodZonings {
        model: "topk_tail".into(),
        by_year: baselines.iter().map(|(y, _, l)| (*y, l.clone())).collect(),
    };
    let methods = vec![main, tf, tk];
    let rows = run_comparison(&methods, &labels, reference, cfg.k_c - 1)?;
    Ok(ComparisonReport {
        reference_year: reference,
        k_top,
        rows,
        methods,
        node_index,
    })
}

pub fn write_compare(dir: &Path, cfg: &RunConfig, r: &ComparisonReport) -> Result<()> {
    io::write_comparison_csv(&dir.join("comparison.csv"), &r.rows)?;
    for m in &r.methods[1..] {
        for (year, labels) in &m.by_year {
            let lines: Vec<(String, f64)> = r
                .node_index
                .iter()
                .zip(labels)
                .map(|(id, &z)| (id.to_string(), z as f64))
                .collect();
            write_pairs_csv(&dir.join(format!("{}_{year}.csv", m.model)), "node_id,zone", &lines)?;
        }
    }
    let mut meta = kv(vec![
        ("reference_year", r.reference_year.to_string()),
        ("high_zone", (cfg.k_c - 1).to_string()),
        ("k_top", r.k_top.to_string()),
    ]);
    meta.extend(config_pairs(cfg));
    io::write_kv(&dir.join("metadata.txt"), &meta)
}

/// Years to process: the configured list, or everything available.
pub fn resolve_years(cfg: &RunConfig) -> Result<Vec<i32>> {
    let available = match &cfg.input {
        Some(dir) => io::discover_years(dir)?,
        None => SynthSpec::from_settings(&cfg.synth, cfg.seed).years(),
    };
    if cfg.years.is_empty() {
        if available.is_empty() {
            return Err(Error::InvalidInput("no input years found".into()));
        }
        return Ok(available);
    }
    let missing: Vec<i32> = cfg.years.iter().copied().filter(|y| !available.contains(y)).collect();
    if !missing.is_empty() {
        return Err(Error::MissingYears(missing));
    }
    let mut years = cfg.years.clone();
    years.sort_unstable();
    years.dedup();
    Ok(years)
}

/// Loads one year of input, generating it when no input directory is set.
pub fn load_year(cfg: &RunConfig, year: i32) -> Result<YearData> {
    match &cfg.input {
        Some(dir) => io::read_year_input(dir, year),
        None => crate::synth::synth_year(&SynthSpec::from_settings(&cfg.synth, cfg.seed), year),
    }
}

/// Writes the synthetic dataset (one CSV per year, plus planted labels).
pub fn write_synth(dir: &Path, spec: &SynthSpec) -> Result<()> {
    let data = synth_generate(spec)?;
    for y in &data.years {
        io::write_precip_csv(&dir.join(format!("{}.csv", y.year)), y)?;
    }
    let rows: Vec<io::ZoneRow> = data
        .planted
        .iter()
        .enumerate()
        .map(|(id, &zone)| {
            let (lat, lon) = spec.coords_of(id);
            io::ZoneRow {
                node_id: id as u32,
                lat,
                lon,
                zone,
            }
        })
        .collect();
    io::write_zone_csv(&dir.join("planted_labels.csv"), &rows)
}

/// Outcome of a multi-year run; failed years carry their stage error.
#[derive(Debug)]
pub struct RunSummary {
    pub out: PathBuf,
    pub completed: Vec<i32>,
    pub failures: Vec<Error>,
    pub temporal: Option<TemporalReport>,
    pub comparison: Option<ComparisonReport>,
}

/// Runs every year in parallel and writes its directory; returns the
/// completed years' summaries and the failures.
pub fn run_years(cfg: &RunConfig, out: &Path) -> Result<(Vec<YearSummary>, Vec<Error>)> {
    let years = resolve_years(cfg)?;
    let results: Vec<Result<YearSummary>> = years
        .par_iter()
        .map(|&year| {
            let data = tagged("load", year, load_year(cfg, year))?;
            let bundle = run_year(cfg, &data)?;
            write_year(&out.join(year.to_string()), cfg, &bundle)?;
            Ok(bundle.summary())
        })
        .collect();
    let mut done = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(s) => done.push(s),
            Err(e) => {
                log::error!("{e}");
                failures.push(e);
            }
        }
    }
    Ok((done, failures))
}

/// Full run: per-year zoning, then the temporal and comparison stages on
/// the years that completed.
pub fn run_all(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let out = cfg.out.clone();
    if cfg.input.is_none() {
        write_synth(&out.join("input"), &SynthSpec::from_settings(&cfg.synth, cfg.seed))?;
    }
    let mut run_meta = kv(vec![("matmul_threads", "1".into())]);
    run_meta.extend(config_pairs(cfg));
    io::write_kv(&out.join("metadata.txt"), &run_meta)?;

    let (done, failures) = run_years(cfg, &out)?;
    let mut temporal = None;
    let mut comparison = None;
    if done.len() >= 2 {
        let t = run_temporal(cfg, &done)?;
        write_temporal(&out.join("temporal"), cfg, &t)?;
        temporal = Some(t);
        let c = run_compare(cfg, &done)?;
        write_compare(&out.join("comparison"), cfg, &c)?;
        comparison = Some(c);
    } else {
        log::warn!("fewer than two years completed; skipping temporal and comparison stages");
    }
    Ok(RunSummary {
        out,
        completed: done.iter().map(|s| s.year).collect(),
        failures,
        temporal,
        comparison,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> RunConfig {
        let mut c = RunConfig::default();
        c.synth.rows = 6;
        c.synth.cols = 6;
        c.synth.n_years = 2;
        c.synth.days = 120;
        c.epochs = 30;
        c.k_neighbors = 4;
        c
    }

    #[test]
    fn year_bundle_is_consistent() {
        let cfg = small_cfg();
        let data = load_year(&cfg, 2001).unwrap();
        let b = run_year(&cfg, &data).unwrap();
        assert_eq!(b.zones.labels.len(), 36);
        assert_eq!(b.embedding.z.dim(), (36, cfg.d_z));
        assert!(b.train.final_loss <= b.train.initial_loss);
        assert!(b.zones.labels.iter().all(|&l| l < cfg.k_c));
    }

    #[test]
    fn stage_errors_are_tagged() {
        let cfg = small_cfg();
        let nodes = (0..4u32)
            .map(|i| crate::grid::PrecipPanel::new(i, 0.0, f64::from(i), 2001, vec![2.0; 30]).unwrap())
            .collect();
        let data = YearData::new(2001, nodes).unwrap();
        match run_year(&cfg, &data) {
            Err(Error::Stage { stage, year, .. }) => {
                assert_eq!(year, 2001);
                assert_eq!(stage, "tail");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn temporal_needs_two_years() {
        let cfg = small_cfg();
        let b = run_year(&cfg, &load_year(&cfg, 2001).unwrap()).unwrap();
        assert!(run_temporal(&cfg, &[b.summary()]).is_err());
        let t = run_temporal(&cfg, &[b.summary(), YearSummary { year: 2002, ..b.summary() }]).unwrap();
        assert_eq!(t.ari_consecutive[0].1, 1.0);
        assert!(t.diagnostics[0].1.distances.iter().all(|&d| d == 0.0));
    }
}
