//! Replica statistics: means with standard errors, bootstrap resampling,
//! least-squares fits and the goodness-of-fit tests used by the checks.

use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRole};

/// Default number of bootstrap resamples.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub replicas: usize,
}

impl Estimate {
    /// Sample mean and the usual `s/√n` standard error (NaN for one sample).
    pub fn from_samples(xs: &[f64]) -> Estimate {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Estimate { mean, stderr, replicas: n }
    }

    /// Sample mean with a bootstrap standard error.
    pub fn bootstrap(xs: &[f64], resamples: usize, seed: u64) -> Result<Estimate> {
        let stats = bootstrap(xs.len(), resamples, seed, |idx| idx.iter().map(|&i| xs[i]).sum::<f64>() / idx.len() as f64)?;
        Ok(Estimate { mean: xs.iter().sum::<f64>() / xs.len() as f64, stderr: std_dev(&stats), replicas: xs.len() })
    }
}

/// Unbiased sample standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Evaluate `stat` on `resamples` index sets drawn with replacement from
/// `0..n`. The draws come from the `Bootstrap` stream of `seed`.
pub fn bootstrap<F>(n: usize, resamples: usize, seed: u64, mut stat: F) -> Result<Vec<f64>>
where
    F: FnMut(&[usize]) -> f64,
{
    if n < 2 || resamples == 0 {
        return Err(Error::Domain(format!("bootstrap needs at least two replicas, got {n}")));
    }
    let mut r = rng::stream(seed, 0, StreamRole::Bootstrap);
    let mut idx = vec![0usize; n];
    Ok((0..resamples)
        .map(|_| {
            for slot in idx.iter_mut() {
                *slot = r.random_range(0..n);
            }
            stat(&idx)
        })
        .collect())
}

/// Empirical `q`-quantile (linear interpolation between order statistics).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut s: Vec<f64> = xs.iter().copied().filter(|x| !x.is_nan()).collect();
    s.sort_by(f64::total_cmp);
    if s.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

/// Ordinary least-squares line with a 95% confidence interval on the slope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub ci95: (f64, f64),
    pub points: usize,
}

impl LinearFit {
    pub fn contains(&self, x: f64) -> bool {
        self.ci95.0 <= x && x <= self.ci95.1
    }
}

/// Student-t quantile with `dof` degrees of freedom.
pub fn t_quantile(p: f64, dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof).expect("positive dof").inverse_cdf(p)
}

/// OLS fit of `y` on `x`. Needs at least three points for the interval.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::SizeMismatch { expected: n, got: y.len() });
    }
    if n < 3 {
        return Err(Error::Domain(format!("a line fit with an interval needs 3 points, got {n}")));
    }
    let (slope, intercept) = ols(x, y)?;
    let mx = x.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let dof = (n - 2) as f64;
    let slope_stderr = (rss / dof / sxx).sqrt();
    let t = t_quantile(0.975, dof);
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr,
        ci95: (slope - t * slope_stderr, slope + t * slope_stderr),
        points: n,
    })
}

/// `(slope, intercept)` of the least-squares line.
pub fn ols(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Domain("line fit needs at least two distinct abscissae".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Pearson chi-square test of observed counts against expected counts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

pub fn chi_square(observed: &[u64], expected: &[f64]) -> Result<ChiSquareTest> {
    if observed.len() != expected.len() {
        return Err(Error::SizeMismatch { expected: expected.len(), got: observed.len() });
    }
    if observed.len() < 2 || expected.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Domain("chi-square needs at least two bins with positive expectation".into()));
    }
    let statistic: f64 = observed.iter().zip(expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum();
    let dof = observed.len() - 1;
    let p_value = ChiSquared::new(dof as f64).expect("positive dof").sf(statistic);
    Ok(ChiSquareTest { statistic, dof, p_value })
}

/// Kolmogorov–Smirnov test result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.3 {
        // The alternating series converges slowly here; the value is 1 to
        // double precision.
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample KS test of `xs` against the continuous CDF `cdf`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> KsTest {
    let mut s: Vec<f64> = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let sq = n.sqrt();
    KsTest { statistic: d, p_value: kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d) }
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsTest {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let sq = ne.sqrt();
    KsTest { statistic: d, p_value: kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_of_constant() {
        let e = Estimate::from_samples(&[2.0, 2.0, 2.0]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.stderr, 0.0);
        assert!(Estimate::from_samples(&[1.0]).stderr.is_nan());
    }

    #[test]
    fn bootstrap_se_matches_analytic() {
        let xs: Vec<f64> = (0..400).map(|i| ((i * 7919) % 400) as f64 / 400.0).collect();
        let a = Estimate::from_samples(&xs);
        let b = Estimate::bootstrap(&xs, 2000, 5).unwrap();
        assert_eq!(a.mean, b.mean);
        assert!((b.stderr / a.stderr - 1.0).abs() < 0.1, "{} vs {}", b.stderr, a.stderr);
    }

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14);
        assert!((f.intercept - 1.0).abs() < 1e-13);
        assert!(f.slope_stderr < 1e-12);
        assert!(linear_fit(&[1.0, 1.0, 1.0], &y[..3]).is_err());
    }

    #[test]
    fn line_interval_against_reference() {
        // By hand: slope 0.72, intercept 0.02, residuals (0.08, -0.14, 0.04, 0.02).
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0.1, 0.6, 1.5, 2.2];
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 0.72).abs() < 1e-12);
        // rss = 0.028, sxx = 5, two dof
        assert!((f.slope_stderr - (0.014f64 / 5.0).sqrt()).abs() < 1e-12);
        assert!((t_quantile(0.975, 2.0) - 4.302_652_729_911_275).abs() < 1e-9);
    }

    #[test]
    fn chi_square_reference() {
        let t = chi_square(&[10, 10], &[10.0, 10.0]).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert!((t.p_value - 1.0).abs() < 1e-12);
        // χ² = 3.84146 with one dof is the 5% point.
        let t = chi_square(&[60, 40], &[50.0, 50.0]).unwrap();
        assert!((t.statistic - 4.0).abs() < 1e-12);
        assert!((t.p_value - 0.045_500_263_896_358_4).abs() < 1e-9);
    }

    #[test]
    fn kolmogorov_reference_points() {
        // Classical critical values: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01.
        assert!((kolmogorov_sf(1.358_099) - 0.05).abs() < 1e-5);
        assert!((kolmogorov_sf(1.627_624) - 0.01).abs() < 1e-5);
    }

    #[test]
    fn ks_uniform_grid_passes() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let t = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!(t.statistic <= 0.0005 + 1e-12);
        assert!(t.p_value > 0.99);
        let shifted: Vec<f64> = xs.iter().map(|x| x * 0.8).collect();
        assert!(ks_two_sample(&xs, &shifted).p_value < 1e-6);
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert!((quantile(&xs, 0.5) - 2.5).abs() < 1e-15);
    }
}
