//! Readers and writers for every on-disk format.
//!
//! Floats are written with Rust's shortest round-trip formatting so a file
//! read back yields bit-identical values. Undefined values are written `NA`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;

use crate::baselines::{ComparisonRow, COMPARISON_HEADER};
use crate::error::{Error, Result};
use crate::gpd::{FitMethod, GpdFit};
use crate::graph::NormalizedAdjacency;
use crate::grid::{NodeFeatures, NodeRecord, PrecipPanel, YearData};
use crate::metrics::{CrossYearDiagnostics, DistanceSummary, DIAGNOSTICS_HEADER};
use crate::tail::{RParetoFeatures, TailAnalysis};

pub const GRID_MAGIC: &[u8; 8] = b"EZGRID1\0";
pub const EMB_MAGIC: &[u8; 7] = b"EZEMB1\0";

pub const PRECIP_HEADER: &str = "node_id,lat,lon,day_index,precip_mm";
pub const FEATURES_HEADER: &str = "node_id,lat,lon,mu,sigma,max,exceed_freq";
pub const EDGES_HEADER: &str = "src,dst";
pub const OPERATOR_HEADER: &str = "i,j,value";
pub const TAIL_HEADER: &str = "node_id,score,is_tail,excess,R1,R2,R3,R4";
pub const ZONE_HEADER: &str = "node_id,lat,lon,zone";
pub const DISTANCES_HEADER: &str = "node_id,distance,p_value";
pub const ARI_HEADER: &str = "pair,ari";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_lines(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut w = create(path)?;
    let go = || -> std::io::Result<()> {
        writeln!(w, "{header}")?;
        for r in rows {
            writeln!(w, "{r}")?;
        }
        w.flush()
    };
    go().map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// A parsed CSV table: `(line number, fields)` per data row.
struct Table {
    path: PathBuf,
    rows: Vec<(usize, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path, header: &str) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(BufReader::new(file));
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let got = rdr
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .iter()
            .collect::<Vec<_>>()
            .join(",");
        if got != header {
            return Err(parse_err(1, format!("expected header `{header}`, found `{got}`")));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            rows.push((line, rec));
        }
        Ok(Self {
            path: path.to_path_buf(),
            rows,
        })
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn get<T: FromStr>(&self, line: usize, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
        let raw = rec.get(idx).ok_or_else(|| self.err(line, format!("missing field `{name}`")))?;
        raw.parse()
            .map_err(|_| self.err(line, format!("invalid {name} `{raw}`")))
    }

    fn get_opt(&self, line: usize, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<Option<f64>> {
        match rec.get(idx) {
            Some("NA") => Ok(None),
            _ => self.get(line, rec, idx, name).map(Some),
        }
    }
}

/// Missing-day markers accepted in the precipitation column.
fn parse_precip(raw: &str) -> Option<f64> {
    match raw {
        "" | "NA" | "NaN" | "nan" => Some(f64::NAN),
        s => s.parse().ok(),
    }
}

/// Long-form precipitation CSV. Rows may be in any order; days never listed
/// for a node are missing.
pub fn read_precip_csv(path: &Path, year: i32) -> Result<YearData> {
    let table = Table::read(path, PRECIP_HEADER)?;
    let mut nodes: BTreeMap<u32, (f64, f64, BTreeMap<usize, f64>)> = BTreeMap::new();
    let mut n_days = 0usize;
    for (line, rec) in &table.rows {
        let line = *line;
        let id: u32 = table.get(line, rec, 0, "node_id")?;
        let lat: f64 = table.get(line, rec, 1, "lat")?;
        let lon: f64 = table.get(line, rec, 2, "lon")?;
        let day: usize = table.get(line, rec, 3, "day_index")?;
        let raw = rec.get(4).unwrap_or("");
        let value = parse_precip(raw).ok_or_else(|| table.err(line, format!("invalid precip_mm `{raw}`")))?;
        let entry = nodes.entry(id).or_insert((lat, lon, BTreeMap::new()));
        if entry.0.to_bits() != lat.to_bits() || entry.1.to_bits() != lon.to_bits() {
            return Err(table.err(line, format!("node {id} listed with two different coordinates")));
        }
        if entry.2.insert(day, value).is_some() {
            return Err(table.err(line, format!("node {id} day {day} listed twice")));
        }
        n_days = n_days.max(day + 1);
    }
    if nodes.is_empty() {
        return Err(Error::EmptySample);
    }
    let panels = nodes
        .into_iter()
        .map(|(id, (lat, lon, days))| {
            let mut values = vec![f64::NAN; n_days];
            for (d, v) in days {
                values[d] = v;
            }
            PrecipPanel::new(id, lat, lon, year, values)
        })
        .collect::<Result<Vec<_>>>()?;
    YearData::new(year, panels)
}

pub fn write_precip_csv(path: &Path, data: &YearData) -> Result<()> {
    let rows = data.nodes.iter().flat_map(|p| {
        p.values
            .iter()
            .enumerate()
            .map(move |(d, v)| format!("{},{},{},{d},{v}", p.node_id, p.lat, p.lon))
    });
    write_lines(path, PRECIP_HEADER, rows)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::io(path, e))
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, path)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read, path: &Path) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, path)?;
    Ok(f64::from_le_bytes(b))
}

/// Packed binary grid. Records carry no node ids; record `i` is node `i`.
pub fn read_grid_bin(path: &Path, year: i32) -> Result<YearData> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, path)?;
    if &magic != GRID_MAGIC {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "not a packed grid file (bad magic)".into(),
        });
    }
    let n = read_u32(&mut r, path)? as usize;
    let t = read_u32(&mut r, path)? as usize;
    let mut panels = Vec::with_capacity(n);
    let mut buf = vec![0u8; 4 * t];
    for id in 0..n {
        let lat = read_f64(&mut r, path)?;
        let lon = read_f64(&mut r, path)?;
        read_exact(&mut r, &mut buf, path)?;
        let values = buf
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        panels.push(PrecipPanel::new(id as u32, lat, lon, year, values)?);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(|e| Error::io(path, e))?;
    if !rest.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("{} trailing bytes", rest.len()),
        });
    }
    YearData::new(year, panels)
}

/// Writes the packed grid. Node ids must be `0..N` and every series the same
/// length; values are stored as `f32`.
pub fn write_grid_bin(path: &Path, data: &YearData) -> Result<()> {
    let n = data.nodes.len();
    let t = data.nodes.first().map_or(0, |p| p.values.len());
    for (i, p) in data.nodes.iter().enumerate() {
        if p.node_id as usize != i {
            return Err(Error::InvalidInput(format!(
                "packed grids need node ids 0..{n}; found {} at position {i}",
                p.node_id
            )));
        }
        if p.values.len() != t {
            return Err(Error::shape("series length", t, p.values.len()));
        }
    }
    let mut w = create(path)?;
    let mut go = || -> std::io::Result<()> {
        w.write_all(GRID_MAGIC)?;
        w.write_all(&(n as u32).to_le_bytes())?;
        w.write_all(&(t as u32).to_le_bytes())?;
        for p in &data.nodes {
            w.write_all(&p.lat.to_le_bytes())?;
            w.write_all(&p.lon.to_le_bytes())?;
            for &v in &p.values {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        w.flush()
    };
    go().map_err(|e| Error::io(path, e))
}

/// Reads `<dir>/<year>.bin` if present, otherwise `<dir>/<year>.csv`.
pub fn read_year_input(dir: &Path, year: i32) -> Result<YearData> {
    let bin = dir.join(format!("{year}.bin"));
    if bin.exists() {
        return read_grid_bin(&bin, year);
    }
    read_precip_csv(&dir.join(format!("{year}.csv")), year)
}

/// Years with a `<year>.csv` or `<year>.bin` file in `dir`, ascending.
pub fn discover_years(dir: &Path) -> Result<Vec<i32>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut years = std::collections::BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let ext = path.extension().and_then(|e| e.to_str());
        if !matches!(ext, Some("csv") | Some("bin")) {
            continue;
        }
        if let Some(y) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse().ok()) {
            years.insert(y);
        }
    }
    Ok(years.into_iter().collect())
}

pub fn write_features_csv(path: &Path, records: &[NodeRecord]) -> Result<()> {
    let rows = records.iter().map(|r| {
        let f = r.features;
        format!(
            "{},{},{},{},{},{},{}",
            r.node_id, r.lat, r.lon, f.mu, f.sigma, f.max_daily, f.exceed_freq
        )
    });
    write_lines(path, FEATURES_HEADER, rows)
}

pub fn read_features_csv(path: &Path) -> Result<Vec<NodeRecord>> {
    let t = Table::read(path, FEATURES_HEADER)?;
    t.rows
        .iter()
        .map(|(line, rec)| {
            let l = *line;
            Ok(NodeRecord {
                node_id: t.get(l, rec, 0, "node_id")?,
                lat: t.get(l, rec, 1, "lat")?,
                lon: t.get(l, rec, 2, "lon")?,
                features: NodeFeatures {
                    mu: t.get(l, rec, 3, "mu")?,
                    sigma: t.get(l, rec, 4, "sigma")?,
                    max_daily: t.get(l, rec, 5, "max")?,
                    exceed_freq: t.get(l, rec, 6, "exceed_freq")?,
                },
            })
        })
        .collect()
}

/// Edge list in node ids; `node_index` must be ascending so `src < dst`.
pub fn write_edges_csv(path: &Path, edges: &[(usize, usize)], node_index: &[u32]) -> Result<()> {
    let rows = edges
        .iter()
        .map(|&(a, b)| format!("{},{}", node_index[a], node_index[b]));
    write_lines(path, EDGES_HEADER, rows)
}

pub fn read_edges_csv(path: &Path) -> Result<Vec<(u32, u32)>> {
    let t = Table::read(path, EDGES_HEADER)?;
    t.rows
        .iter()
        .map(|(l, rec)| {
            let a: u32 = t.get(*l, rec, 0, "src")?;
            let b: u32 = t.get(*l, rec, 1, "dst")?;
            if a >= b {
                return Err(t.err(*l, format!("edge ({a}, {b}) must have src < dst")));
            }
            Ok((a, b))
        })
        .collect()
}

pub fn write_operator_csv(path: &Path, s: &NormalizedAdjacency) -> Result<()> {
    let rows = s.triples().into_iter().map(|(i, j, v)| format!("{i},{j},{v}"));
    write_lines(path, OPERATOR_HEADER, rows)
}

pub fn read_operator_csv(path: &Path, n_nodes: usize) -> Result<NormalizedAdjacency> {
    let t = Table::read(path, OPERATOR_HEADER)?;
    let triples = t
        .rows
        .iter()
        .map(|(l, rec)| Ok((t.get(*l, rec, 0, "i")?, t.get(*l, rec, 1, "j")?, t.get(*l, rec, 2, "value")?)))
        .collect::<Result<Vec<(usize, usize, f64)>>>()?;
    NormalizedAdjacency::from_triples(n_nodes, &triples)
}

pub fn write_embedding_bin(path: &Path, z: &Array2<f64>) -> Result<()> {
    let (n, d) = z.dim();
    let mut w = create(path)?;
    let mut go = || -> std::io::Result<()> {
        w.write_all(EMB_MAGIC)?;
        w.write_all(&(n as u32).to_le_bytes())?;
        w.write_all(&(d as u32).to_le_bytes())?;
        for v in z.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    };
    go().map_err(|e| Error::io(path, e))
}

pub fn read_embedding_bin(path: &Path) -> Result<Array2<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 7];
    read_exact(&mut r, &mut magic, path)?;
    if &magic != EMB_MAGIC {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "not a packed embedding file (bad magic)".into(),
        });
    }
    let n = read_u32(&mut r, path)? as usize;
    let d = read_u32(&mut r, path)? as usize;
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        data.push(read_f64(&mut r, path)?);
    }
    Ok(Array2::from_shape_vec((n, d), data).expect("length is n * d"))
}

fn matrix_header(prefix: &str, d: usize) -> String {
    std::iter::once("node_id".to_string())
        .chain((0..d).map(|j| format!("{prefix}{j}")))
        .collect::<Vec<_>>()
        .join(",")
}

/// `node_id` followed by columns `<prefix>0 .. <prefix>{d-1}`.
pub fn write_matrix_csv(path: &Path, prefix: &str, node_index: &[u32], m: &Array2<f64>) -> Result<()> {
    if node_index.len() != m.nrows() {
        return Err(Error::shape("matrix rows vs node ids", m.nrows(), node_index.len()));
    }
    let rows = node_index.iter().zip(m.rows()).map(|(id, row)| {
        std::iter::once(id.to_string())
            .chain(row.iter().map(f64::to_string))
            .collect::<Vec<_>>()
            .join(",")
    });
    write_lines(path, &matrix_header(prefix, m.ncols()), rows)
}

pub fn read_matrix_csv(path: &Path, prefix: &str, d: usize) -> Result<(Vec<u32>, Array2<f64>)> {
    let t = Table::read(path, &matrix_header(prefix, d))?;
    let mut ids = Vec::with_capacity(t.rows.len());
    let mut m = Array2::zeros((t.rows.len(), d));
    for (i, (l, rec)) in t.rows.iter().enumerate() {
        ids.push(t.get(*l, rec, 0, "node_id")?);
        for j in 0..d {
            m[(i, j)] = t.get(*l, rec, j + 1, prefix)?;
        }
    }
    Ok((ids, m))
}

pub fn write_embedding_csv(path: &Path, node_index: &[u32], z: &Array2<f64>) -> Result<()> {
    write_matrix_csv(path, "z", node_index, z)
}

pub fn read_embedding_csv(path: &Path, d_z: usize) -> Result<(Vec<u32>, Array2<f64>)> {
    read_matrix_csv(path, "z", d_z)
}

/// One row of the tail report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRow {
    pub node_id: u32,
    pub score: f64,
    pub is_tail: bool,
    /// `None` for non-tail nodes.
    pub excess: Option<f64>,
    pub r: [f64; 4],
}

pub fn tail_rows(node_index: &[u32], analysis: &TailAnalysis, r: &RParetoFeatures) -> Vec<TailRow> {
    let excess: BTreeMap<usize, f64> = analysis
        .tail_ids
        .iter()
        .copied()
        .zip(analysis.excesses.iter().copied())
        .collect();
    node_index
        .iter()
        .enumerate()
        .map(|(i, &id)| TailRow {
            node_id: id,
            score: analysis.scores[i],
            is_tail: excess.contains_key(&i),
            excess: excess.get(&i).copied(),
            r: [r.r[(i, 0)], r.r[(i, 1)], r.r[(i, 2)], r.r[(i, 3)]],
        })
        .collect()
}

pub fn write_tail_report(path: &Path, rows: &[TailRow]) -> Result<()> {
    let lines = rows.iter().map(|t| {
        format!(
            "{},{},{},{},{},{},{},{}",
            t.node_id,
            t.score,
            u8::from(t.is_tail),
            opt(t.excess),
            t.r[0],
            t.r[1],
            t.r[2],
            t.r[3]
        )
    });
    write_lines(path, TAIL_HEADER, lines)
}

pub fn read_tail_report(path: &Path) -> Result<Vec<TailRow>> {
    let t = Table::read(path, TAIL_HEADER)?;
    t.rows
        .iter()
        .map(|(l, rec)| {
            let l = *l;
            let flag: u8 = t.get(l, rec, 2, "is_tail")?;
            Ok(TailRow {
                node_id: t.get(l, rec, 0, "node_id")?,
                score: t.get(l, rec, 1, "score")?,
                is_tail: flag == 1,
                excess: t.get_opt(l, rec, 3, "excess")?,
                r: [
                    t.get(l, rec, 4, "R1")?,
                    t.get(l, rec, 5, "R2")?,
                    t.get(l, rec, 6, "R3")?,
                    t.get(l, rec, 7, "R4")?,
                ],
            })
        })
        .collect()
}

/// `key=value` lines, in the given order.
pub fn write_kv(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut w = create(path)?;
    let mut go = || -> std::io::Result<()> {
        for (k, v) in pairs {
            writeln!(w, "{k}={v}")?;
        }
        w.flush()
    };
    go().map_err(|e| Error::io(path, e))
}

pub fn read_kv(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    msg: "expected key=value".into(),
                })
        })
        .collect()
}

pub fn fit_summary_pairs(fit: &GpdFit) -> Vec<(String, String)> {
    vec![
        ("xi".into(), fit.xi.to_string()),
        ("sigma".into(), fit.sigma.to_string()),
        ("mu".into(), fit.mu.to_string()),
        ("n_exceed".into(), fit.n_exceed.to_string()),
        ("loglik".into(), fit.log_likelihood.to_string()),
        ("method".into(), fit.method.as_str().into()),
    ]
}

pub fn write_fit_summary(path: &Path, fit: &GpdFit) -> Result<()> {
    write_kv(path, &fit_summary_pairs(fit))
}

pub fn read_fit_summary(path: &Path) -> Result<GpdFit> {
    let kv: BTreeMap<String, String> = read_kv(path)?.into_iter().collect();
    let bad = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg,
    };
    let num = |k: &str| -> Result<f64> {
        kv.get(k)
            .ok_or_else(|| bad(format!("missing key {k}")))?
            .parse()
            .map_err(|_| bad(format!("invalid {k}")))
    };
    let method = match kv.get("method").map(String::as_str) {
        Some("profile_mle") => FitMethod::ProfileLikelihood,
        Some("moments") => FitMethod::MethodOfMoments,
        other => return Err(bad(format!("unknown fit method {other:?}"))),
    };
    Ok(GpdFit {
        xi: num("xi")?,
        sigma: num("sigma")?,
        mu: num("mu")?,
        log_likelihood: num("loglik")?,
        n_exceed: kv
            .get("n_exceed")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("invalid n_exceed".into()))?,
        method,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneRow {
    pub node_id: u32,
    pub lat: f64,
    pub lon: f64,
    pub zone: usize,
}

pub fn write_zone_csv(path: &Path, rows: &[ZoneRow]) -> Result<()> {
    let lines = rows
        .iter()
        .map(|r| format!("{},{},{},{}", r.node_id, r.lat, r.lon, r.zone));
    write_lines(path, ZONE_HEADER, lines)
}

pub fn read_zone_csv(path: &Path) -> Result<Vec<ZoneRow>> {
    let t = Table::read(path, ZONE_HEADER)?;
    t.rows
        .iter()
        .map(|(l, rec)| {
            Ok(ZoneRow {
                node_id: t.get(*l, rec, 0, "node_id")?,
                lat: t.get(*l, rec, 1, "lat")?,
                lon: t.get(*l, rec, 2, "lon")?,
                zone: t.get(*l, rec, 3, "zone")?,
            })
        })
        .collect()
}

pub fn write_diagnostics_csv(path: &Path, rows: &[(String, DistanceSummary)]) -> Result<()> {
    let lines = rows.iter().map(|(pair, s)| {
        std::iter::once(pair.clone())
            .chain(s.values().iter().map(f64::to_string))
            .collect::<Vec<_>>()
            .join(",")
    });
    write_lines(path, DIAGNOSTICS_HEADER, lines)
}

pub fn read_diagnostics_csv(path: &Path) -> Result<Vec<(String, DistanceSummary)>> {
    let t = Table::read(path, DIAGNOSTICS_HEADER)?;
    t.rows
        .iter()
        .map(|(l, rec)| {
            let v = |i: usize| -> Result<f64> { t.get(*l, rec, i, "statistic") };
            Ok((
                rec.get(0).unwrap_or("").to_string(),
                DistanceSummary {
                    mean: v(1)?,
                    std: v(2)?,
                    min: v(3)?,
                    q25: v(4)?,
                    median: v(5)?,
                    q75: v(6)?,
                    q90: v(7)?,
                    q99: v(8)?,
                    max: v(9)?,
                    mean_p: v(10)?,
                    median_p: v(11)?,
                    min_p: v(12)?,
                    max_p: v(13)?,
                    prop_sig: v(14)?,
                },
            ))
        })
        .collect()
}

pub fn write_distances_csv(path: &Path, diag: &CrossYearDiagnostics) -> Result<()> {
    let lines = diag
        .node_index
        .iter()
        .zip(diag.distances.iter().zip(&diag.p_values))
        .map(|(id, (d, p))| format!("{id},{d},{p}"));
    write_lines(path, DISTANCES_HEADER, lines)
}

pub fn read_distances_csv(path: &Path) -> Result<Vec<(u32, f64, f64)>> {
    let t = Table::read(path, DISTANCES_HEADER)?;
    t.rows
        .iter()
        .map(|(l, rec)| {
            Ok((
                t.get(*l, rec, 0, "node_id")?,
                t.get(*l, rec, 1, "distance")?,
                t.get(*l, rec, 2, "p_value")?,
            ))
        })
        .collect()
}

pub fn write_comparison_csv(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let lines = rows.iter().map(|r| {
        format!(
            "{},{},{},{}",
            r.model,
            opt(r.mean_precision),
            opt(r.mean_recall),
            opt(r.mean_ari)
        )
    });
    write_lines(path, COMPARISON_HEADER, lines)
}

pub fn read_comparison_csv(path: &Path) -> Result<Vec<ComparisonRow>> {
    let t = Table::read(path, COMPARISON_HEADER)?;
    t.rows
        .iter()
        .map(|(l, rec)| {
            Ok(ComparisonRow {
                model: rec.get(0).unwrap_or("").to_string(),
                mean_precision: t.get_opt(*l, rec, 1, "mean_precision")?,
                mean_recall: t.get_opt(*l, rec, 2, "mean_recall")?,
                mean_ari: t.get_opt(*l, rec, 3, "mean_ari")?,
            })
        })
        .collect()
}

pub fn write_ari_series(path: &Path, rows: &[(String, f64)]) -> Result<()> {
    write_lines(path, ARI_HEADER, rows.iter().map(|(p, a)| format!("{p},{a}")))
}

pub fn read_ari_series(path: &Path) -> Result<Vec<(String, f64)>> {
    let t = Table::read(path, ARI_HEADER)?;
    t.rows
        .iter()
        .map(|(l, rec)| Ok((rec.get(0).unwrap_or("").to_string(), t.get(*l, rec, 1, "ari")?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn year() -> YearData {
        let nodes = (0..3u32)
            .map(|i| {
                let vals = vec![0.0, 1.5 + f64::from(i), f64::NAN, 0.25];
                PrecipPanel::new(i, 10.0 + f64::from(i) * 0.5, -3.25, 2005, vals).unwrap()
            })
            .collect();
        YearData::new(2005, nodes).unwrap()
    }

    fn same(a: &YearData, b: &YearData) -> bool {
        a.year == b.year
            && a.nodes.len() == b.nodes.len()
            && a.nodes.iter().zip(&b.nodes).all(|(x, y)| {
                x.node_id == y.node_id
                    && x.lat == y.lat
                    && x.lon == y.lon
                    && x.values.len() == y.values.len()
                    && x.values.iter().zip(&y.values).all(|(u, v)| u.to_bits() == v.to_bits() || (u.is_nan() && v.is_nan()))
            })
    }

    #[test]
    fn precip_round_trips() {
        let dir = tempdir().unwrap();
        let y = year();
        let csv = dir.path().join("2005.csv");
        write_precip_csv(&csv, &y).unwrap();
        assert!(same(&read_precip_csv(&csv, 2005).unwrap(), &y));
        let bin = dir.path().join("2005.bin");
        write_grid_bin(&bin, &y).unwrap();
        assert!(same(&read_grid_bin(&bin, 2005).unwrap(), &y));
        assert_eq!(discover_years(dir.path()).unwrap(), vec![2005]);
    }

    #[test]
    fn precip_csv_rows_any_order_and_gaps() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "node_id,lat,lon,day_index,precip_mm\n1,0,1,1,2.5\n0,0,0,1,1\n0,0,0,0,3\n1,0,1,0,NA\n").unwrap();
        let y = read_precip_csv(&p, 1).unwrap();
        assert_eq!(y.nodes[0].values, vec![3.0, 1.0]);
        assert!(y.nodes[1].values[0].is_nan());
    }

    #[test]
    fn precip_csv_errors_carry_line() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "node_id,lat,lon,day_index,precip_mm\n0,0,0,0,1\n0,0,0,1,abc\n").unwrap();
        match read_precip_csv(&p, 1) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&p, "a,b\n").unwrap();
        assert!(matches!(read_precip_csv(&p, 1), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("x.bin");
        std::fs::write(&p, b"NOTAGRID\0\0\0\0").unwrap();
        assert!(matches!(read_grid_bin(&p, 1), Err(Error::Parse { .. })));
        assert!(matches!(read_embedding_bin(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn embedding_round_trips() {
        let dir = tempdir().unwrap();
        let z = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 + 0.1).powf(j as f64 + 0.3) / 7.0);
        let p = dir.path().join("z.bin");
        write_embedding_bin(&p, &z).unwrap();
        assert_eq!(read_embedding_bin(&p).unwrap(), z);
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 7 + 8 + 12 * 8);
        let c = dir.path().join("z.csv");
        write_embedding_csv(&c, &[3, 5, 8, 9], &z).unwrap();
        assert_eq!(read_embedding_csv(&c, 3).unwrap(), (vec![3, 5, 8, 9], z));
    }

    #[test]
    fn fit_summary_round_trips() {
        let dir = tempdir().unwrap();
        let fit = GpdFit {
            xi: 0.123456789,
            sigma: 1.0 / 3.0,
            mu: -0.25,
            log_likelihood: -12.5,
            n_exceed: 20,
            method: FitMethod::MethodOfMoments,
        };
        let p = dir.path().join("fit.txt");
        write_fit_summary(&p, &fit).unwrap();
        assert_eq!(read_fit_summary(&p).unwrap(), fit);
    }

    #[test]
    fn comparison_na_round_trips() {
        let dir = tempdir().unwrap();
        let rows = vec![ComparisonRow {
            model: "topk_tail".into(),
            mean_precision: None,
            mean_recall: Some(0.1),
            mean_ari: Some(-0.02),
        }];
        let p = dir.path().join("c.csv");
        write_comparison_csv(&p, &rows).unwrap();
        assert_eq!(read_comparison_csv(&p).unwrap(), rows);
    }
}
