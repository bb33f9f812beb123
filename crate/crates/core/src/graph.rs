//! k-nearest-neighbour spatial graph and its symmetric-normalized adjacency
//! `D^-1/2 (A + I) D^-1/2`.

use std::collections::BTreeSet;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::kdtree::KdTree;

/// How the directed kNN relation becomes an undirected edge set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Symmetrize {
    /// Edge if either endpoint selects the other.
    #[default]
    Union,
    /// Edge only if both endpoints select each other.
    Intersection,
}

impl Symmetrize {
    pub fn as_str(self) -> &'static str {
        match self {
            Symmetrize::Union => "union",
            Symmetrize::Intersection => "intersection",
        }
    }
}

impl std::str::FromStr for Symmetrize {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "union" => Ok(Self::Union),
            "intersection" => Ok(Self::Intersection),
            other => Err(Error::Config(format!("unknown symmetrization `{other}`"))),
        }
    }
}

/// Distance used to rank neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceMetric {
    /// Plain Euclidean distance on (lat, lon) degrees.
    #[default]
    Euclidean,
    /// Great-circle distance (ranked through unit-sphere chord length).
    GreatCircle,
}

impl DistanceMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::GreatCircle => "great_circle",
        }
    }
}

impl std::str::FromStr for DistanceMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Self::Euclidean),
            "great_circle" => Ok(Self::GreatCircle),
            other => Err(Error::Config(format!("unknown distance metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GraphOptions {
    pub symmetrize: Symmetrize,
    pub metric: DistanceMetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGraph {
    pub n_nodes: usize,
    /// Unordered pairs stored as `(lo, hi)` with `lo < hi`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Effective neighbour count, `min(requested, n - 1)`.
    pub k: usize,
    pub requested_k: usize,
    pub coords: Vec<(f64, f64)>,
}

impl SpatialGraph {
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    pub fn was_clamped(&self) -> bool {
        self.k != self.requested_k
    }
}

pub fn build_knn_graph(coords: &[(f64, f64)], k: usize) -> Result<SpatialGraph> {
    build_knn_graph_with(coords, k, GraphOptions::default())
}

pub fn build_knn_graph_with(
    coords: &[(f64, f64)],
    k: usize,
    opts: GraphOptions,
) -> Result<SpatialGraph> {
    let n = coords.len();
    if n < 2 {
        return Err(Error::InsufficientObservations { needed: 2, got: n });
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let k_eff = if k >= n {
        log::warn!("k = {k} >= N = {n}; clamping to {}", n - 1);
        n - 1
    } else {
        k
    };

    let neighbours: Vec<Vec<usize>> = match opts.metric {
        DistanceMetric::Euclidean => {
            let tree = KdTree::build(coords.iter().map(|&(la, lo)| [la, lo]).collect());
            (0..n).map(|i| tree.nearest_excluding(i, k_eff)).collect()
        }
        DistanceMetric::GreatCircle => {
            let tree = KdTree::build(coords.iter().map(|&(la, lo)| unit_sphere(la, lo)).collect());
            (0..n).map(|i| tree.nearest_excluding(i, k_eff)).collect()
        }
    };

    let mut edges = BTreeSet::new();
    match opts.symmetrize {
        Symmetrize::Union => {
            for (i, nb) in neighbours.iter().enumerate() {
                for &j in nb {
                    edges.insert((i.min(j), i.max(j)));
                }
            }
        }
        Symmetrize::Intersection => {
            let sets: Vec<BTreeSet<usize>> = neighbours
                .iter()
                .map(|nb| nb.iter().copied().collect())
                .collect();
            for (i, nb) in neighbours.iter().enumerate() {
                for &j in nb {
                    if i < j && sets[j].contains(&i) {
                        edges.insert((i, j));
                    }
                }
            }
        }
    }

    Ok(SpatialGraph {
        n_nodes: n,
        edges: edges.into_iter().collect(),
        k: k_eff,
        requested_k: k,
        coords: coords.to_vec(),
    })
}

fn unit_sphere(lat: f64, lon: f64) -> [f64; 3] {
    let (la, lo) = (lat.to_radians(), lon.to_radians());
    [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
}

/// Symmetric sparse operator in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub n_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    /// Builds the operator from `(i, j, value)` triples, which must describe
    /// a symmetric matrix.
    pub fn from_triples(n_nodes: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted = triples.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; n_nodes + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        for &(i, j, v) in &sorted {
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::shape("operator triple index", n_nodes, i.max(j)));
            }
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for i in 0..n_nodes {
            row_ptr[i + 1] += row_ptr[i];
        }
        let op = Self {
            n_nodes,
            row_ptr,
            col_idx,
            values,
        };
        for &(i, j, v) in &sorted {
            if (op.get(j, i) - v).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "operator is not symmetric at ({i}, {j})"
                )));
            }
        }
        Ok(op)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(p) => self.values[self.row_ptr[i] + p],
            Err(_) => 0.0,
        }
    }

    pub fn triples(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.values.len());
        for i in 0..self.n_nodes {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.push((i, self.col_idx[p], self.values[p]));
            }
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.n_nodes, self.n_nodes));
        for (i, j, v) in self.triples() {
            d[(i, j)] = v;
        }
        d
    }

    /// `S * m` for a dense right-hand side.
    pub fn matmul(&self, m: &Array2<f64>) -> Array2<f64> {
        assert_eq!(m.nrows(), self.n_nodes, "operator/matrix row mismatch");
        let mut out = Array2::zeros((self.n_nodes, m.ncols()));
        for i in 0..self.n_nodes {
            let mut row = out.row_mut(i);
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                row.scaled_add(self.values[p], &m.row(self.col_idx[p]));
            }
        }
        out
    }

    /// Applies a node permutation: entry `(perm[i], perm[j])` of the result
    /// equals entry `(i, j)` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let t: Vec<(usize, usize, f64)> = self
            .triples()
            .into_iter()
            .map(|(i, j, v)| (perm[i], perm[j], v))
            .collect();
        Self::from_triples(self.n_nodes, &t).expect("permutation preserves symmetry")
    }
}

pub fn normalize_adjacency(graph: &SpatialGraph) -> NormalizedAdjacency {
    let n = graph.n_nodes;
    let deg: Vec<f64> = graph.degrees().into_iter().map(|d| d as f64 + 1.0).collect();
    let mut triples = Vec::with_capacity(n + 2 * graph.edges.len());
    for (i, d) in deg.iter().enumerate() {
        triples.push((i, i, 1.0 / d));
    }
    for &(a, b) in &graph.edges {
        let v = 1.0 / (deg[a] * deg[b]).sqrt();
        triples.push((a, b, v));
        triples.push((b, a, v));
    }
    NormalizedAdjacency::from_triples(n, &triples).expect("normalized adjacency is symmetric")
}
