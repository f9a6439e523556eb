//! Empirical CDFs, Kolmogorov–Smirnov tests, moment estimators and log-log fits.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// A sample sorted ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
}

impl Sample {
    /// Sorts `values`; NaNs are rejected.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("sample contains NaN".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Fraction of values `<= x`.
    pub fn ecdf(&self, x: f64) -> f64 {
        self.values.partition_point(|&v| v <= x) as f64 / self.len() as f64
    }

    /// Runs of equal values as `(value, start, end)` index ranges.
    fn runs(&self) -> impl Iterator<Item = (f64, usize, usize)> + '_ {
        let v = &self.values;
        let mut i = 0;
        std::iter::from_fn(move || {
            if i >= v.len() {
                return None;
            }
            let mut j = i + 1;
            while j < v.len() && v[j] == v[i] {
                j += 1;
            }
            let out = (v[i], i, j);
            i = j;
            Some(out)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution, `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        // Theta-function form converges fast for small arguments.
        let c = std::f64::consts::PI.powi(2) / (8.0 * x * x);
        let mut sum = 0.0;
        for k in 1..=50 {
            let m = (2 * k - 1) as f64;
            let term = (-m * m * c).exp();
            sum += term;
            if term < 1e-16 {
                break;
            }
        }
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * sum).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value for statistic `d` at effective size `n`, with Stephens' small-n
/// correction of the scaling.
fn ks_p_value(d: f64, n: f64) -> f64 {
    let rn = n.sqrt();
    kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d)
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample(s: &Sample, cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    ks_one_sample_with_left(s, &cdf, &cdf)
}

/// One-sample KS test against a CDF with atoms: `cdf_left(x)` is `F(x-)`.
pub fn ks_one_sample_with_left(
    s: &Sample,
    cdf: impl Fn(f64) -> f64,
    cdf_left: impl Fn(f64) -> f64,
) -> Result<KsResult> {
    if s.is_empty() {
        return Err(Error::InsufficientData("KS test needs a nonempty sample".into()));
    }
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (x, i, j) in s.runs() {
        d = d.max((j as f64 / n - cdf(x)).abs()).max((cdf_left(x) - i as f64 / n).abs());
    }
    let statistic = d.min(1.0);
    Ok(KsResult { statistic, p_value: ks_p_value(statistic, n) })
}

/// One-sample KS test where `cdf_values[i]` is `F` at the `i`-th sorted value and the
/// law has no atoms except possibly at `atom_at` (whose left limit is `F(atom_at-) = 0`).
pub fn ks_one_sample_values(s: &Sample, cdf_values: &[f64], atom_at: Option<f64>) -> Result<KsResult> {
    if cdf_values.len() != s.len() {
        return Err(Error::ShapeMismatch { expected: s.len(), got: cdf_values.len() });
    }
    if s.is_empty() {
        return Err(Error::InsufficientData("KS test needs a nonempty sample".into()));
    }
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (x, i, j) in s.runs() {
        let f = cdf_values[i];
        let left = if atom_at == Some(x) { 0.0 } else { f };
        d = d.max((j as f64 / n - f).abs()).max((left - i as f64 / n).abs());
    }
    let statistic = d.min(1.0);
    Ok(KsResult { statistic, p_value: ks_p_value(statistic, n) })
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &Sample, b: &Sample) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("KS test needs nonempty samples".into()));
    }
    let (x, y) = (a.values(), b.values());
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] == v {
            i += 1;
        }
        while j < y.len() && y[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let statistic = d.min(1.0);
    Ok(KsResult { statistic, p_value: ks_p_value(statistic, n * m / (n + m)) })
}

/// Bonferroni-adjusted p-value for `m` simultaneous tests.
pub fn bonferroni(p: f64, m: usize) -> f64 {
    (p * m as f64).min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; NaN with only two points.
    pub stderr: f64,
}

/// Least squares fit of `log count` on `log N`.
pub fn loglog_slope(pairs: &[(f64, f64)]) -> Result<SlopeFit> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(format!("slope needs at least 2 points, got {}", pairs.len())));
    }
    if pairs.iter().any(|&(n, c)| !(n > 0.0) || !(c > 0.0)) {
        return Err(Error::InvalidParameter("log-log fit needs positive N and counts".into()));
    }
    let pts: Vec<(f64, f64)> = pairs.iter().map(|&(n, c)| (n.ln(), c.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("slope needs at least two distinct N".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if pts.len() > 2 {
        let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        (rss / (k - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(SlopeFit { slope, intercept, stderr })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
    pub std_err: f64,
}

/// Normal-approximation confidence interval for the mean at confidence `level`.
pub fn mean_ci(values: &[f64], level: f64) -> Result<MeanCi> {
    if values.is_empty() {
        return Err(Error::InsufficientData("mean of an empty sample".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence level must lie in (0,1), got {level}")));
    }
    let m = Moments::of(values);
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    Ok(MeanCi { mean: m.mean, half_width: z * m.se_mean, std_err: m.se_mean })
}

/// Sample mean and variance with their standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub se_mean: f64,
    /// Large-sample standard error of the variance, `sqrt((m4 - m2²)/n)`.
    pub se_variance: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { n, mean: f64::NAN, variance: f64::NAN, se_mean: f64::NAN, se_variance: f64::NAN };
        }
        let nf = n as f64;
        let mean = values.iter().sum::<f64>() / nf;
        let (mut m2, mut m4) = (0.0, 0.0);
        for &v in values {
            let d2 = (v - mean).powi(2);
            m2 += d2;
            m4 += d2 * d2;
        }
        m2 /= nf;
        m4 /= nf;
        let variance = if n > 1 { m2 * nf / (nf - 1.0) } else { 0.0 };
        Self {
            n,
            mean,
            variance,
            se_mean: (variance / nf).sqrt(),
            se_variance: ((m4 - m2 * m2).max(0.0) / nf).sqrt(),
        }
    }
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}
