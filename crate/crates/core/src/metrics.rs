//! Cross-year change and agreement metrics: Mahalanobis distances with
//! chi-square p-values, the adjusted Rand index, high-zone precision and
//! recall, and the Hill tail-index estimator.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::quantile_sorted;
use crate::special::gamma_q;

/// Significance level used for `prop_significant`.
pub const SIGNIFICANCE: f64 = 0.01;

/// Relative ridge applied to the difference covariance by default.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-6;

const MAX_RIDGE_ESCALATIONS: usize = 3;

/// Chi-square survival function `P(X > x)` with `dof` degrees of freedom.
pub fn chi2_sf(x: f64, dof: u32) -> Result<f64> {
    if dof < 1 {
        return Err(Error::InvalidInput("chi-square dof must be at least 1".into()));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::InvalidInput(format!("chi-square argument {x} must be >= 0")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma_q(f64::from(dof) / 2.0, x / 2.0))
}

/// Summary statistics of a distance sample, in diagnostics-table order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceSummary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q90: f64,
    pub q99: f64,
    pub max: f64,
    pub mean_p: f64,
    pub median_p: f64,
    pub min_p: f64,
    pub max_p: f64,
    pub prop_sig: f64,
}

impl DistanceSummary {
    pub fn compute(distances: &[f64], p_values: &[f64]) -> Result<Self> {
        if distances.is_empty() || distances.len() != p_values.len() {
            return Err(Error::shape("distances vs p-values", distances.len(), p_values.len()));
        }
        let n = distances.len() as f64;
        let mean = distances.iter().sum::<f64>() / n;
        let std = if distances.len() > 1 {
            (distances.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut d = distances.to_vec();
        d.sort_by(f64::total_cmp);
        let mut p = p_values.to_vec();
        p.sort_by(f64::total_cmp);
        let sig = p_values.iter().filter(|&&v| v < SIGNIFICANCE).count();
        Ok(Self {
            mean,
            std,
            min: d[0],
            q25: quantile_sorted(&d, 0.25),
            median: quantile_sorted(&d, 0.5),
            q75: quantile_sorted(&d, 0.75),
            q90: quantile_sorted(&d, 0.9),
            q99: quantile_sorted(&d, 0.99),
            max: d[d.len() - 1],
            mean_p: p_values.iter().sum::<f64>() / n,
            median_p: quantile_sorted(&p, 0.5),
            min_p: p[0],
            max_p: p[p.len() - 1],
            prop_sig: sig as f64 / n,
        })
    }

    /// Values in the column order of the diagnostics CSV (after `pair`).
    pub fn values(&self) -> [f64; 14] {
        [
            self.mean,
            self.std,
            self.min,
            self.q25,
            self.median,
            self.q75,
            self.q90,
            self.q99,
            self.max,
            self.mean_p,
            self.median_p,
            self.min_p,
            self.max_p,
            self.prop_sig,
        ]
    }
}

pub const DIAGNOSTICS_HEADER: &str =
    "pair,mean,std,min,q25,median,q75,q90,q99,max,mean_p,median_p,min_p,max_p,prop_sig";

#[derive(Debug, Clone, PartialEq)]
pub struct CrossYearDiagnostics {
    pub node_index: Vec<u32>,
    pub distances: Vec<f64>,
    pub p_values: Vec<f64>,
    pub prop_significant: f64,
    pub summary: DistanceSummary,
    /// Ridge actually added to the covariance diagonal.
    pub ridge: f64,
    pub dof: u32,
}

/// How the ridge is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// `scale * trace / d`.
    Relative(f64),
    Absolute(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(DEFAULT_RIDGE_SCALE)
    }
}

/// Lower-triangular Cholesky factor, or `None` if `a` is not numerically
/// positive definite.
pub fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Solves `L w = v` by forward substitution and returns `|w|^2`, which is
/// `v' (L L')^{-1} v`.
fn whitened_norm2(l: &Array2<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut s = v[i];
        for k in 0..i {
            s -= l[(i, k)] * w[k];
        }
        w[i] = s / l[(i, i)];
    }
    w.iter().map(|x| x * x).sum()
}

/// Sample covariance of the rows of `d` (denominator `N - 1`).
pub fn row_covariance(d: &Array2<f64>) -> Array2<f64> {
    let n = d.nrows() as f64;
    let mean = d.mean_axis(ndarray::Axis(0)).expect("non-empty");
    let c = d - &mean;
    c.t().dot(&c) / (n - 1.0)
}

/// Per-node Mahalanobis distances between two years' embeddings of the same
/// nodes, with chi-square (`dof = d_z`) p-values.
pub fn mahalanobis_crossyear(
    z_a: &Array2<f64>,
    index_a: &[u32],
    z_b: &Array2<f64>,
    index_b: &[u32],
    ridge: Ridge,
) -> Result<CrossYearDiagnostics> {
    if index_a != index_b {
        return Err(Error::IndexMismatch(
            "embeddings cover different node sets".into(),
        ));
    }
    if z_a.dim() != z_b.dim() {
        return Err(Error::shape("embedding shapes", z_a.len(), z_b.len()));
    }
    if z_a.nrows() != index_a.len() {
        return Err(Error::shape("embedding rows vs index", index_a.len(), z_a.nrows()));
    }
    let (n, d) = z_a.dim();
    if n <= d {
        return Err(Error::InsufficientObservations { needed: d + 1, got: n });
    }
    let diff = z_a - z_b;
    if diff.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite embedding difference".into()));
    }
    let cov = row_covariance(&diff);
    let trace: f64 = cov.diag().sum();
    let dof = d as u32;

    if trace == 0.0 {
        // no variation in the differences: nothing to whiten
        let distances = vec![0.0; n];
        let p_values = vec![1.0; n];
        let summary = DistanceSummary::compute(&distances, &p_values)?;
        return Ok(CrossYearDiagnostics {
            node_index: index_a.to_vec(),
            distances,
            p_values,
            prop_significant: 0.0,
            summary,
            ridge: 0.0,
            dof,
        });
    }

    let mut lambda = match ridge {
        Ridge::Relative(s) => s * trace / d as f64,
        Ridge::Absolute(r) => r,
    };
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("ridge {lambda} must be >= 0")));
    }
    let mut factor = None;
    for attempt in 0..=MAX_RIDGE_ESCALATIONS {
        let mut reg = cov.clone();
        for i in 0..d {
            reg[(i, i)] += lambda;
        }
        if let Some(l) = cholesky(&reg) {
            factor = Some(l);
            break;
        }
        if attempt < MAX_RIDGE_ESCALATIONS {
            let next = if lambda > 0.0 { lambda * 10.0 } else { 1e-9 * trace / d as f64 };
            log::warn!("difference covariance not positive definite; ridge {lambda} -> {next}");
            lambda = next;
        }
    }
    let l = factor.ok_or_else(|| {
        Error::Numerical(format!(
            "difference covariance not positive definite with ridge {lambda}"
        ))
    })?;

    let mut distances = Vec::with_capacity(n);
    let mut p_values = Vec::with_capacity(n);
    for row in diff.rows() {
        let v: Vec<f64> = row.to_vec();
        let d2 = whitened_norm2(&l, &v).max(0.0);
        distances.push(d2.sqrt());
        p_values.push(chi2_sf(d2, dof)?);
    }
    let summary = DistanceSummary::compute(&distances, &p_values)?;
    Ok(CrossYearDiagnostics {
        node_index: index_a.to_vec(),
        prop_significant: summary.prop_sig,
        distances,
        p_values,
        summary,
        ridge: lambda,
        dof,
    })
}

fn choose2(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Pair-counting adjusted Rand index. Identical partitions (including the
/// degenerate single-cluster and all-singleton cases) score 1.
pub fn adjusted_rand_index<A: Ord + Clone, B: Ord + Clone>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("ARI label lengths", a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::InsufficientObservations { needed: 2, got: a.len() });
    }
    let mut table: BTreeMap<(A, B), u64> = BTreeMap::new();
    let mut rows: BTreeMap<A, u64> = BTreeMap::new();
    let mut cols: BTreeMap<B, u64> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x.clone(), y.clone())).or_default() += 1;
        *rows.entry(x.clone()).or_default() += 1;
        *cols.entry(y.clone()).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(a.len() as u64);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    let denom = max - expected;
    if denom == 0.0 {
        // both partitions are trivial in the same way, or one is and they agree
        return Ok(if index == max { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

/// Precision and recall of `pred`'s high zone against `reference`'s. `None`
/// marks an undefined `0/0` ratio.
pub fn precision_recall_highrisk(
    reference: &[usize],
    pred: &[usize],
    high_zone: usize,
) -> Result<(Option<f64>, Option<f64>)> {
    if reference.len() != pred.len() {
        return Err(Error::shape("precision/recall label lengths", reference.len(), pred.len()));
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&r, &p) in reference.iter().zip(pred) {
        match (r == high_zone, p == high_zone) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fneg += 1,
            (false, false) => {}
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok((ratio(tp, tp + fp), ratio(tp, tp + fneg)))
}

/// Hill estimator of the tail index `1/alpha` from the `k_top` largest values.
pub fn hill_estimator(values: &[f64], k_top: usize) -> Result<f64> {
    if k_top < 1 {
        return Err(Error::InvalidInput("k_top must be at least 1".into()));
    }
    if values.len() < k_top + 1 {
        return Err(Error::InsufficientObservations {
            needed: k_top + 1,
            got: values.len(),
        });
    }
    if let Some(bad) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "Hill estimator needs positive finite values, got {bad}"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let anchor = sorted[k_top].ln();
    Ok(sorted[..k_top].iter().map(|x| x.ln() - anchor).sum::<f64>() / k_top as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn chi2_basics() {
        assert_eq!(chi2_sf(0.0, 3).unwrap(), 1.0);
        assert!((chi2_sf(2.0 * 2f64.ln(), 2).unwrap() - 0.5).abs() < 1e-15);
        assert!(chi2_sf(1.0, 0).is_err());
        assert!(chi2_sf(-1.0, 2).is_err());
        let mut prev = 1.0;
        for i in 1..200 {
            let p = chi2_sf(i as f64, 5).unwrap();
            assert!(p <= prev);
            prev = p;
        }
        assert!(prev < 1e-30);
    }

    #[test]
    fn ari_examples() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 2, 2]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 1, 2, 0], &[0, 0, 0, 0]).unwrap(), 0.0);
        assert_eq!(adjusted_rand_index(&[0, 1, 2], &[3, 4, 5]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[1, 1, 1], &[0, 0, 0]).unwrap(), 1.0);
        // pairs: a-same {01,23}, b-same {12,13,23}; index 1, expected 2*3/6 = 1, max 2.5
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap(), 0.0);
        assert!(adjusted_rand_index(&[0], &[0]).is_err());
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn precision_recall_examples() {
        let r = [0, 3, 3, 3, 3, 0, 0];
        let p = [0, 0, 0, 3, 3, 3, 3];
        assert_eq!(precision_recall_highrisk(&r, &p, 3).unwrap(), (Some(0.5), Some(0.5)));
        assert_eq!(precision_recall_highrisk(&r, &r, 3).unwrap(), (Some(1.0), Some(1.0)));
        assert_eq!(
            precision_recall_highrisk(&[3, 0], &[0, 3], 3).unwrap(),
            (Some(0.0), Some(0.0))
        );
        assert_eq!(precision_recall_highrisk(&[0, 0], &[0, 0], 3).unwrap(), (None, None));
    }

    #[test]
    fn hill_examples() {
        assert_eq!(hill_estimator(&[2.0; 10], 3).unwrap(), 0.0);
        let v: Vec<f64> = (1..50).map(|i| (i as f64).powf(1.3)).collect();
        let a = hill_estimator(&v, 10).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| x * 7.5).collect();
        assert!((a - hill_estimator(&scaled, 10).unwrap()).abs() < 1e-12);
        assert!(hill_estimator(&[1.0, 0.0, 2.0], 1).is_err());
        assert!(hill_estimator(&[1.0], 1).is_err());
    }

    #[test]
    fn mahalanobis_identical_years() {
        let z = Array2::from_shape_fn((12, 3), |(i, j)| ((i * 3 + j) as f64).cos());
        let idx: Vec<u32> = (0..12).collect();
        let d = mahalanobis_crossyear(&z, &idx, &z, &idx, Ridge::default()).unwrap();
        assert!(d.distances.iter().all(|&v| v == 0.0));
        assert!(d.p_values.iter().all(|&p| p == 1.0));
        assert_eq!(d.prop_significant, 0.0);
    }

    #[test]
    fn mahalanobis_index_mismatch() {
        let z = Array2::zeros((5, 2));
        assert!(matches!(
            mahalanobis_crossyear(&z, &[0, 1, 2, 3, 4], &z, &[0, 1, 2, 3, 5], Ridge::default()),
            Err(Error::IndexMismatch(_))
        ));
    }

    #[test]
    fn mahalanobis_escalates_for_singular_covariance() {
        // second coordinate never varies: singular covariance
        let a = Array2::from_shape_fn((10, 2), |(i, j)| if j == 0 { i as f64 } else { 0.0 });
        let b = Array2::zeros((10, 2));
        let idx: Vec<u32> = (0..10).collect();
        let d = mahalanobis_crossyear(&a, &idx, &b, &idx, Ridge::Absolute(0.0)).unwrap();
        assert!(d.ridge > 0.0);
        assert!(d.distances.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn cholesky_small() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let l = cholesky(&a).unwrap();
        assert!((l.dot(&l.t()) - &a).iter().all(|v| v.abs() < 1e-14));
        assert!(cholesky(&array![[1.0, 2.0], [2.0, 1.0]]).is_none());
    }
}
