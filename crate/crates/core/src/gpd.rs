//! Generalized Pareto distribution: CDF, log-likelihood and maximum-likelihood
//! fitting of threshold excesses.
//!
//! The fit uses Grimshaw's reduction. With `theta = xi / sigma`, the
//! likelihood maximized over `xi` for fixed `theta` has the closed form
//! `xi(theta) = mean(ln(1 + theta x))`, which leaves a one-dimensional
//! profile `l*(theta) = -n (ln(xi / theta) + xi + 1)`. The profile is scanned
//! on a grid covering the admissible range and the best bracket is refined
//! by golden-section search. `xi` is held inside `[XI_MIN, XI_MAX]`.

use crate::error::{Error, Result};

pub const XI_MIN: f64 = -0.9;
pub const XI_MAX: f64 = 5.0;

/// Below this magnitude the shape is treated as zero (exponential limit).
const XI_ZERO: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    ProfileLikelihood,
    MethodOfMoments,
}

impl FitMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FitMethod::ProfileLikelihood => "profile_mle",
            FitMethod::MethodOfMoments => "moments",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdFit {
    pub xi: f64,
    pub sigma: f64,
    pub mu: f64,
    pub log_likelihood: f64,
    pub n_exceed: usize,
    pub method: FitMethod,
}

impl GpdFit {
    pub fn cdf(&self, x: f64) -> f64 {
        gpd_cdf(x, self.xi, self.sigma, self.mu).expect("fitted scale is positive")
    }
}

pub fn gpd_cdf(x: f64, xi: f64, sigma: f64, mu: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput(format!("GPD scale must be positive, got {sigma}")));
    }
    if x <= mu {
        return Ok(0.0);
    }
    let z = (x - mu) / sigma;
    let p = if xi.abs() < XI_ZERO {
        -(-z).exp_m1()
    } else {
        let t = xi * z;
        if t <= -1.0 {
            // beyond the upper endpoint of a bounded tail
            1.0
        } else {
            -(-t.ln_1p() / xi).exp_m1()
        }
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Log-likelihood of non-negative excesses under GPD(`xi`, `sigma`, 0);
/// `-inf` outside the support.
pub fn log_likelihood(excesses: &[f64], xi: f64, sigma: f64) -> f64 {
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let n = excesses.len() as f64;
    if xi.abs() < XI_ZERO {
        return -n * sigma.ln() - excesses.iter().sum::<f64>() / sigma;
    }
    let mut acc = 0.0;
    for &x in excesses {
        let t = xi * x / sigma;
        if t <= -1.0 {
            return f64::NEG_INFINITY;
        }
        acc += t.ln_1p();
    }
    -n * sigma.ln() - (1.0 + 1.0 / xi) * acc
}

struct Profile<'a> {
    x: &'a [f64],
    n: f64,
    mean: f64,
    max: f64,
}

impl Profile<'_> {
    fn xi_of(&self, theta: f64) -> f64 {
        self.x.iter().map(|&v| (theta * v).ln_1p()).sum::<f64>() / self.n
    }

    /// Parameters maximizing the likelihood along the ray `xi / sigma = theta`
    /// with `xi` clamped to the admissible box.
    fn params(&self, theta: f64) -> (f64, f64) {
        if (theta * self.max).abs() < 1e-12 {
            return (0.0, self.mean);
        }
        let xi = self.xi_of(theta);
        if xi.is_finite() && (XI_MIN..=XI_MAX).contains(&xi) {
            return (xi, xi / theta);
        }
        let xi = if xi.is_nan() || xi < XI_MIN { XI_MIN } else { XI_MAX };
        (xi, xi / theta)
    }

    fn value(&self, theta: f64) -> f64 {
        if theta * self.max <= -1.0 {
            return f64::NEG_INFINITY;
        }
        if (theta * self.max).abs() < 1e-12 {
            return -self.n * self.mean.ln() - self.n;
        }
        let xi = self.xi_of(theta);
        if xi.is_finite() && (XI_MIN..=XI_MAX).contains(&xi) && xi.abs() >= XI_ZERO {
            -self.n * ((xi / theta).ln() + xi + 1.0)
        } else {
            let (xi, sigma) = self.params(theta);
            log_likelihood(self.x, xi, sigma)
        }
    }
}

fn validate_excesses(excesses: &[f64]) -> Result<()> {
    if excesses.len() < 2 {
        return Err(Error::DegenerateTail(format!(
            "need at least 2 excesses, got {}",
            excesses.len()
        )));
    }
    if excesses.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidInput("excesses must be finite and non-negative".into()));
    }
    let first = excesses[0];
    if excesses.iter().all(|&x| x == first) {
        return Err(Error::DegenerateTail(
            "all excesses are equal (zero-variance sample)".into(),
        ));
    }
    Ok(())
}

/// Maximum-likelihood GPD fit of `excesses` with the location pinned to
/// `shift`. Falls back to the method of moments if the profile search does
/// not produce a finite optimum.
pub fn fit_gpd(excesses: &[f64], shift: f64) -> Result<GpdFit> {
    validate_excesses(excesses)?;
    if excesses.len() < 5 {
        log::warn!("GPD fit unreliable: only {} excesses", excesses.len());
    }
    let n = excesses.len() as f64;
    let mean = excesses.iter().sum::<f64>() / n;
    let max = excesses.iter().copied().fold(0.0, f64::max);
    let prof = Profile {
        x: excesses,
        n,
        mean,
        max,
    };

    let grid = theta_grid(&prof);
    let values: Vec<f64> = grid.iter().map(|&t| prof.value(t)).collect();
    let best = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i);

    let Some(best) = best else {
        return moments_fit(excesses, shift);
    };
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let theta = golden_max(|t| prof.value(t), lo, hi, grid[best], values[best]);
    let (xi, sigma) = prof.params(theta);
    let ll = log_likelihood(excesses, xi, sigma);
    if !ll.is_finite() || !(sigma > 0.0) {
        return moments_fit(excesses, shift);
    }
    Ok(GpdFit {
        xi,
        sigma,
        mu: shift,
        log_likelihood: ll,
        n_exceed: excesses.len(),
        method: FitMethod::ProfileLikelihood,
    })
}

/// Moment estimates `xi = (1 - m^2/v) / 2`, `sigma = m (1 + m^2/v) / 2`,
/// with `xi` clamped to the admissible box.
pub fn moments_fit(excesses: &[f64], shift: f64) -> Result<GpdFit> {
    validate_excesses(excesses)?;
    let n = excesses.len() as f64;
    let m = excesses.iter().sum::<f64>() / n;
    let v = excesses.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    let ratio = m * m / v;
    let xi = (0.5 * (1.0 - ratio)).clamp(XI_MIN, XI_MAX);
    let mut sigma = 0.5 * m * (1.0 + ratio);
    // keep every excess inside a bounded support
    if xi < 0.0 {
        let max = excesses.iter().copied().fold(0.0, f64::max);
        sigma = sigma.max(-xi * max * (1.0 + 1e-9));
    }
    Ok(GpdFit {
        xi,
        sigma,
        mu: shift,
        log_likelihood: log_likelihood(excesses, xi, sigma),
        n_exceed: excesses.len(),
        method: FitMethod::MethodOfMoments,
    })
}

/// Fit with a free location: the location is searched on
/// `[shift - span, shift]` (with `span` the range of `values` above `shift`)
/// and the excesses `values - mu` are fitted at each candidate.
pub fn fit_gpd_free_location(values: &[f64], shift: f64) -> Result<GpdFit> {
    let excess_at = |mu: f64| values.iter().map(|v| v - mu).collect::<Vec<_>>();
    let pinned = fit_gpd(&excess_at(shift), shift)?;
    let span = values.iter().copied().fold(shift, f64::max) - shift;
    if !(span > 0.0) {
        return Ok(pinned);
    }
    let score = |mu: f64| fit_gpd(&excess_at(mu), mu).map_or(f64::NEG_INFINITY, |f| f.log_likelihood);
    let mu = golden_max(score, shift - span, shift, shift, pinned.log_likelihood);
    let free = fit_gpd(&excess_at(mu), mu)?;
    Ok(if free.log_likelihood > pinned.log_likelihood {
        free
    } else {
        pinned
    })
}

fn theta_grid(prof: &Profile<'_>) -> Vec<f64> {
    let inv_max = 1.0 / prof.max;
    let mut grid = Vec::with_capacity(160);
    // negative side: theta = -u / max with u in (0, 1)
    for m in (3..=10).rev() {
        grid.push(-(1.0 - 10f64.powi(-m)) * inv_max);
    }
    for j in (1..50).rev() {
        grid.push(-(j as f64 / 50.0) * inv_max);
    }
    for m in 3..=8 {
        grid.push(-(10f64.powi(-m)) * inv_max);
    }
    grid.push(0.0);
    // positive side: log-spaced until xi(theta) passes XI_MAX
    let mut t = 1e-8 * inv_max;
    let step = 10f64.powf(0.1);
    loop {
        grid.push(t);
        if prof.xi_of(t) > XI_MAX || t > 1e12 * inv_max {
            break;
        }
        t *= step;
    }
    grid
}

/// Golden-section maximization on `[lo, hi]`; returns the best point seen,
/// never worse than the supplied starting point.
fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, start: f64, start_val: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let (mut best, mut best_val) = (start, start_val);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        for (x, v) in [(c, fc), (d, fd)] {
            if v > best_val {
                best = x;
                best_val = v;
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_points() {
        assert!((gpd_cdf(2f64.ln(), 0.0, 1.0, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((gpd_cdf(1.0, 1.0, 1.0, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(gpd_cdf(3.0, 0.2, 1.0, 3.0).unwrap(), 0.0);
        assert_eq!(gpd_cdf(-1.0, 0.2, 1.0, 0.0).unwrap(), 0.0);
        assert!(gpd_cdf(1.0, 0.0, 0.0, 0.0).is_err());
        // bounded tail: endpoint at sigma / |xi| = 2
        assert_eq!(gpd_cdf(2.5, -0.5, 1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn cdf_continuous_in_shape_at_zero() {
        for i in 0..200 {
            let x = i as f64 * 0.05;
            let a = gpd_cdf(x, 1e-10, 1.3, 0.0).unwrap();
            let b = gpd_cdf(x, 0.0, 1.3, 0.0).unwrap();
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn degenerate_samples() {
        assert!(matches!(fit_gpd(&[0.0; 6], 0.0), Err(Error::DegenerateTail(_))));
        assert!(matches!(fit_gpd(&[2.5; 6], 0.0), Err(Error::DegenerateTail(_))));
        assert!(matches!(fit_gpd(&[1.0], 0.0), Err(Error::DegenerateTail(_))));
    }

    #[test]
    fn log_likelihood_support() {
        assert_eq!(log_likelihood(&[0.0, 3.0], -0.5, 1.0), f64::NEG_INFINITY);
        let exp = log_likelihood(&[0.5, 1.5], 0.0, 1.0);
        assert!((exp + 2.0).abs() < 1e-15);
    }

    #[test]
    fn fit_reports_pinned_location() {
        let x = [0.0, 0.3, 0.9, 1.7, 2.2, 4.1, 0.05, 1.2];
        let fit = fit_gpd(&x, 7.5).unwrap();
        assert_eq!(fit.mu, 7.5);
        assert_eq!(fit.n_exceed, 8);
        assert_eq!(fit.method, FitMethod::ProfileLikelihood);
        assert!(fit.sigma > 0.0);
        assert!((fit.log_likelihood - log_likelihood(&x, fit.xi, fit.sigma)).abs() < 1e-12);
    }

    #[test]
    fn moments_fit_is_in_support() {
        let x = [0.0, 0.9, 1.0, 0.95, 0.97, 0.99];
        let fit = moments_fit(&x, 0.0).unwrap();
        assert!(fit.log_likelihood.is_finite());
        assert_eq!(fit.method, FitMethod::MethodOfMoments);
    }

    #[test]
    fn free_location_never_worse_than_pinned() {
        let values = [3.0, 3.2, 3.9, 4.4, 5.1, 3.05, 6.3, 3.6];
        let pinned = fit_gpd(&values.map(|v| v - 3.0), 3.0).unwrap();
        let free = fit_gpd_free_location(&values, 3.0).unwrap();
        assert!(free.log_likelihood >= pinned.log_likelihood);
        assert!(free.mu <= 3.0);
    }
}
