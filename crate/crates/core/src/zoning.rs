//! Risk zones: severity-ordered K-means clusters, nearest-tail label
//! propagation, and multi-year aggregation.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::kmeans::{kmeans, KMeansConfig};

/// Per-node zone labels in `0..k`, where a larger zone means a higher
/// cluster-mean tail score.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneMap {
    pub labels: Vec<usize>,
    /// Row `z` is the centroid of zone `z`.
    pub centroids: Array2<f64>,
    pub k: usize,
    /// `severity_order[raw_cluster] = zone`.
    pub severity_order: Vec<usize>,
    /// Mean tail score per zone (`NaN` for an empty zone).
    pub zone_mean_scores: Vec<f64>,
}

impl ZoneMap {
    pub fn high_zone(&self) -> usize {
        self.k - 1
    }

    pub fn zone_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Relabels raw clusters so ascending zone id follows ascending cluster-mean
/// tail score. Equal means put the larger cluster in the lower zone; empty
/// clusters take the highest ids.
pub fn order_zones(labels: &[usize], centroids: &Array2<f64>, tail_scores: &[f64]) -> Result<ZoneMap> {
    let k = centroids.nrows();
    if labels.len() != tail_scores.len() {
        return Err(Error::shape("labels vs scores", tail_scores.len(), labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidInput(format!("label {bad} outside 0..{k}")));
    }
    let mut sums = vec![0.0; k];
    let mut sizes = vec![0usize; k];
    for (&l, &s) in labels.iter().zip(tail_scores) {
        sums[l] += s;
        sizes[l] += 1;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&sizes)
        .map(|(&s, &n)| if n > 0 { s / n as f64 } else { f64::NAN })
        .collect();

    let mut raw: Vec<usize> = (0..k).collect();
    raw.sort_by(|&a, &b| {
        let (ea, eb) = (sizes[a] == 0, sizes[b] == 0);
        ea.cmp(&eb)
            .then_with(|| {
                if ea {
                    std::cmp::Ordering::Equal
                } else {
                    means[a].total_cmp(&means[b])
                }
            })
            .then(sizes[b].cmp(&sizes[a]))
            .then(a.cmp(&b))
    });
    let mut severity_order = vec![0; k];
    for (zone, &r) in raw.iter().enumerate() {
        severity_order[r] = zone;
    }
    let mut ordered = Array2::zeros(centroids.dim());
    let mut zone_mean_scores = vec![f64::NAN; k];
    for (r, &zone) in severity_order.iter().enumerate() {
        ordered.row_mut(zone).assign(&centroids.row(r));
        zone_mean_scores[zone] = means[r];
    }
    Ok(ZoneMap {
        labels: labels.iter().map(|&l| severity_order[l]).collect(),
        centroids: ordered,
        k,
        severity_order,
        zone_mean_scores,
    })
}

/// Gives every non-tail node the label of its nearest tail node in `z`
/// (ties to the smaller node index). `tail_labels` aligns with `tail_ids`.
pub fn propagate_from_tail(
    z: ArrayView2<'_, f64>,
    tail_labels: &[usize],
    tail_ids: &[usize],
) -> Result<Vec<usize>> {
    if tail_ids.is_empty() {
        return Err(Error::EmptyTail);
    }
    if tail_labels.len() != tail_ids.len() {
        return Err(Error::shape("tail labels vs tail ids", tail_ids.len(), tail_labels.len()));
    }
    if let Some(&bad) = tail_ids.iter().find(|&&i| i >= z.nrows()) {
        return Err(Error::InvalidInput(format!("tail id {bad} out of range")));
    }
    let mut order: Vec<usize> = (0..tail_ids.len()).collect();
    order.sort_by_key(|&t| tail_ids[t]);

    let mut labels = vec![usize::MAX; z.nrows()];
    for (&i, &l) in tail_ids.iter().zip(tail_labels) {
        labels[i] = l;
    }
    for j in 0..z.nrows() {
        if labels[j] != usize::MAX && tail_ids.contains(&j) {
            continue;
        }
        let mut best = order[0];
        let mut best_d = f64::INFINITY;
        for &t in &order {
            let d: f64 = z
                .row(j)
                .iter()
                .zip(z.row(tail_ids[t]).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best_d {
                best_d = d;
                best = t;
            }
        }
        labels[j] = tail_labels[best];
    }
    Ok(labels)
}

/// Full-set zoning: K-means on `points`, ordered by `tail_scores`.
pub fn zone_by_clustering(points: &Array2<f64>, tail_scores: &[f64], cfg: &KMeansConfig) -> Result<ZoneMap> {
    let km = kmeans(points, cfg)?;
    order_zones(&km.labels, &km.centroids, tail_scores)
}

/// Tail-driven zoning: K-means on the tail rows of `points` only, then
/// nearest-tail propagation in the latent space `latent`.
pub fn zone_by_propagation(
    points: &Array2<f64>,
    latent: ArrayView2<'_, f64>,
    tail_ids: &[usize],
    tail_scores: &[f64],
    cfg: &KMeansConfig,
) -> Result<ZoneMap> {
    if tail_ids.is_empty() {
        return Err(Error::EmptyTail);
    }
    let tail_points = points.select(ndarray::Axis(0), tail_ids);
    let km = kmeans(&tail_points, cfg)?;
    let labels = propagate_from_tail(latent, &km.labels, tail_ids)?;
    // centroids over all members after propagation
    let mut centroids = Array2::zeros((cfg.k, points.ncols()));
    let mut counts = vec![0usize; cfg.k];
    for (i, &l) in labels.iter().enumerate() {
        let mut row = centroids.row_mut(l);
        row += &points.row(i);
        counts[l] += 1;
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            centroids.row_mut(c).mapv_inplace(|v| v / n as f64);
        } else {
            centroids.row_mut(c).assign(&km.centroids.row(c));
        }
    }
    order_zones(&labels, &centroids, tail_scores)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiYearZones {
    pub years: Vec<i32>,
    pub maps: Vec<ZoneMap>,
    pub node_index: Vec<u32>,
    pub modal_zone: Vec<usize>,
    pub high_risk_freq: Vec<f64>,
    pub k: usize,
}

/// Modal zone per node (ties resolve to the higher zone) and the fraction
/// of years each node sits in the top zone.
pub fn aggregate_years(
    years: &[i32],
    maps: &[ZoneMap],
    node_index: &[u32],
) -> Result<MultiYearZones> {
    if maps.is_empty() {
        return Err(Error::InvalidInput("no zone maps to aggregate".into()));
    }
    if years.len() != maps.len() {
        return Err(Error::shape("years vs zone maps", maps.len(), years.len()));
    }
    let k = maps[0].k;
    let n = node_index.len();
    for (y, m) in years.iter().zip(maps) {
        if m.labels.len() != n {
            return Err(Error::IndexMismatch(format!(
                "year {y} has {} nodes, expected {n}",
                m.labels.len()
            )));
        }
        if m.k != k {
            return Err(Error::IndexMismatch(format!("year {y} has {} zones, expected {k}", m.k)));
        }
    }
    let mut modal_zone = Vec::with_capacity(n);
    let mut high_risk_freq = Vec::with_capacity(n);
    for i in 0..n {
        let mut counts = vec![0usize; k];
        for m in maps {
            counts[m.labels[i]] += 1;
        }
        let top = *counts.iter().max().expect("k >= 1");
        let modal = counts.iter().rposition(|&c| c == top).expect("max exists");
        modal_zone.push(modal);
        high_risk_freq.push(counts[k - 1] as f64 / maps.len() as f64);
    }
    Ok(MultiYearZones {
        years: years.to_vec(),
        maps: maps.to_vec(),
        node_index: node_index.to_vec(),
        modal_zone,
        high_risk_freq,
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn map(labels: Vec<usize>, k: usize) -> ZoneMap {
        ZoneMap {
            labels,
            centroids: Array2::zeros((k, 1)),
            k,
            severity_order: (0..k).collect(),
            zone_mean_scores: vec![0.0; k],
        }
    }

    #[test]
    fn order_swaps_clusters() {
        let c = array![[5.0], [1.0]];
        let z = order_zones(&[0, 0, 1], &c, &[5.0, 5.0, 1.0]).unwrap();
        assert_eq!(z.severity_order, vec![1, 0]);
        assert_eq!(z.labels, vec![1, 1, 0]);
        assert_eq!(z.centroids, array![[1.0], [5.0]]);
    }

    #[test]
    fn order_identity_when_sorted() {
        let c = array![[0.0], [1.0], [2.0]];
        let z = order_zones(&[0, 1, 2, 2], &c, &[0.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(z.severity_order, vec![0, 1, 2]);
    }

    #[test]
    fn order_ties_favour_larger_cluster_low() {
        let c = array![[0.0], [1.0]];
        // cluster 0 has one node, cluster 1 three; both mean 2
        let z = order_zones(&[0, 1, 1, 1], &c, &[2.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(z.severity_order, vec![1, 0]);
    }

    #[test]
    fn propagation_rules() {
        let z = array![[-1.0], [0.4], [1.0], [0.0], [5.0]];
        let l = propagate_from_tail(z.view(), &[7, 9], &[0, 2]).unwrap();
        assert_eq!(l[1], 9);
        // node 3 is equidistant: lower node id wins
        assert_eq!(l[3], 7);
        assert_eq!(l[0], 7);
        assert_eq!(l[2], 9);
        let single = propagate_from_tail(z.view(), &[3], &[4]).unwrap();
        assert!(single.iter().all(|&x| x == 3));
        assert!(propagate_from_tail(z.view(), &[], &[]).is_err());
    }

    #[test]
    fn aggregate_modal_and_frequency() {
        let maps = vec![map(vec![3, 1, 0], 4), map(vec![3, 3, 0], 4), map(vec![1, 2, 0], 4)];
        let agg = aggregate_years(&[1, 2, 3], &maps, &[10, 11, 12]).unwrap();
        assert_eq!(agg.modal_zone[0], 3);
        assert!((agg.high_risk_freq[0] - 2.0 / 3.0).abs() < 1e-15);
        // node 1: labels 1, 3, 2 all once -> highest
        assert_eq!(agg.modal_zone[1], 3);
        assert_eq!(agg.modal_zone[2], 0);
        assert_eq!(agg.high_risk_freq[2], 0.0);

        let tie = aggregate_years(&[1, 2], &[map(vec![1], 4), map(vec![3], 4)], &[0]).unwrap();
        assert_eq!(tie.modal_zone, vec![3]);
    }

    #[test]
    fn aggregate_rejects_mismatch() {
        let maps = vec![map(vec![0, 1], 4), map(vec![0], 4)];
        assert!(matches!(
            aggregate_years(&[1, 2], &maps, &[0, 1]),
            Err(Error::IndexMismatch(_))
        ));
    }
}
