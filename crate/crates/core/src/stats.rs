//! Small descriptive statistics used by the simulation summaries.

use crate::normal;

/// Two-pass sample moments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    /// Unbiased variance.
    pub var: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Moments {
                n,
                mean: f64::NAN,
                var: f64::NAN,
                skewness: f64::NAN,
                excess_kurtosis: f64::NAN,
            };
        }
        let nf = n as f64;
        let mean = xs.iter().sum::<f64>() / nf;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &x in xs {
            let d = x - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        let var = if n > 1 { m2 / (nf - 1.0) } else { 0.0 };
        let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
        let (skewness, excess_kurtosis) = if m2 > 0.0 {
            (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        } else {
            (0.0, 0.0)
        };
        Moments {
            n,
            mean,
            var,
            skewness,
            excess_kurtosis,
        }
    }

    pub fn sd(&self) -> f64 {
        self.var.sqrt()
    }

    pub fn se_mean(&self) -> f64 {
        (self.var / self.n as f64).sqrt()
    }

    /// Large-sample standard error of the variance estimate,
    /// σ²·√(2/(n−1) + κ/n) with κ the excess kurtosis.
    pub fn se_var(&self) -> f64 {
        let n = self.n as f64;
        let k = self.excess_kurtosis.max(-2.0);
        self.var * (2.0 / (n - 1.0) + k / n).max(0.0).sqrt()
    }
}

/// Kolmogorov-Smirnov distance between the sample and N(mean, sd²).
pub fn ks_normal(xs: &[f64], mean: f64, sd: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    ks_sorted(&v, |x| normal::cdf((x - mean) / sd))
}

/// KS distance between a sorted sample and a continuous CDF.
pub fn ks_sorted<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Linear-interpolation quantile (type 7) of an unsorted sample.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Least-squares slope of ln y on ln x.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
