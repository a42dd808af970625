//! ECDF distances, histogram total variation, bootstrap intervals and small fits.

use crate::error::{FragError, Result};
use crate::rng;
use rand::Rng;
use serde::Serialize;

/// 99% DKW half-width for an ECDF built from `n` points.
pub fn dkw_band(n: usize) -> f64 {
    ((2.0f64 / 0.01).ln() / (2.0 * n as f64)).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct EcdfReport {
    pub n_a: usize,
    pub n_b: usize,
    pub ks: f64,
    pub band: f64,
    pub ks_ci: Option<(f64, f64)>,
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
}

impl EcdfReport {
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = Some(tol);
        self.pass = Some(self.ks <= tol);
        self
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("NaN in sample"));
    s
}

/// Sup distance between two ECDFs, exact for tied and lattice-valued data.
pub fn ks_statistic_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<EcdfReport> {
    if a.is_empty() || b.is_empty() {
        return Err(FragError::InsufficientData { need: 1, have: 0 });
    }
    let ks = ks_statistic_sorted(&sorted(a), &sorted(b));
    Ok(EcdfReport {
        n_a: a.len(),
        n_b: b.len(),
        ks,
        band: dkw_band(a.len()) + dkw_band(b.len()),
        ks_ci: None,
        tolerance: None,
        pass: None,
    })
}

/// Percentile bootstrap interval for the two-sample KS distance.
pub fn ks_bootstrap_ci(a: &[f64], b: &[f64], n_boot: usize, level: f64, seed: u64) -> (f64, f64) {
    let mut stats: Vec<f64> = (0..n_boot)
        .map(|k| {
            let mut r = rng::stream(rng::derive(seed, k as u64));
            let ra: Vec<f64> = (0..a.len()).map(|_| a[r.random_range(0..a.len())]).collect();
            let rb: Vec<f64> = (0..b.len()).map(|_| b[r.random_range(0..b.len())]).collect();
            ks_statistic_sorted(&sorted(&ra), &sorted(&rb))
        })
        .collect();
    percentile_interval(&mut stats, level)
}

/// Sup distance between the ECDF of `a` and a continuous CDF.
pub fn ks_against_cdf<F: Fn(f64) -> f64>(a: &[f64], cdf: F) -> Result<EcdfReport> {
    if a.is_empty() {
        return Err(FragError::InsufficientData { need: 1, have: 0 });
    }
    let s = sorted(a);
    let n = s.len() as f64;
    let mut d = 0f64;
    for (i, x) in s.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(EcdfReport { n_a: a.len(), n_b: 0, ks: d, band: dkw_band(a.len()), ks_ci: None, tolerance: None, pass: None })
}

/// Uniform binning of [lo, hi) with two overflow cells.
#[derive(Debug, Clone, Copy)]
pub struct Bins {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Bins {
    pub fn index(&self, x: f64) -> usize {
        if x < self.lo {
            0
        } else if x >= self.hi {
            self.n + 1
        } else {
            1 + (((x - self.lo) / (self.hi - self.lo) * self.n as f64) as usize).min(self.n - 1)
        }
    }

    pub fn edge(&self, j: usize) -> f64 {
        self.lo + (self.hi - self.lo) * j as f64 / self.n as f64
    }

    pub fn histogram(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.n + 2];
        for v in x {
            h[self.index(*v)] += 1.0;
        }
        let t = x.len().max(1) as f64;
        h.iter_mut().for_each(|c| *c /= t);
        h
    }

    /// Cell probabilities of a law given by its CDF.
    pub fn probabilities<F: Fn(f64) -> f64>(&self, cdf: F) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n + 2);
        p.push(cdf(self.lo));
        for j in 0..self.n {
            p.push(cdf(self.edge(j + 1)) - cdf(self.edge(j)));
        }
        p.push(1.0 - cdf(self.hi));
        p
    }
}

pub fn tv_between(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Half the l1 distance between the normalised histograms of two samples.
pub fn tv_histogram(a: &[f64], b: &[f64], bins: Bins) -> f64 {
    tv_between(&bins.histogram(a), &bins.histogram(b))
}

fn percentile_interval(stats: &mut [f64], level: f64) -> (f64, f64) {
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = (1.0 - level) / 2.0;
    (quantile_sorted(stats, alpha), quantile_sorted(stats, 1.0 - alpha))
}

/// Percentile bootstrap interval of `statistic`, deterministic in `seed`.
pub fn bootstrap_ci<F: Fn(&[f64]) -> f64>(
    samples: &[f64],
    statistic: F,
    n_boot: usize,
    level: f64,
    seed: u64,
) -> (f64, f64) {
    let n = samples.len();
    let mut buf = vec![0.0; n];
    let mut stats: Vec<f64> = (0..n_boot)
        .map(|k| {
            let mut r = rng::stream(rng::derive(seed, k as u64));
            for b in buf.iter_mut() {
                *b = samples[r.random_range(0..n)];
            }
            statistic(&buf)
        })
        .collect();
    percentile_interval(&mut stats, level)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn std_error(x: &[f64]) -> f64 {
    (variance(x) / x.len() as f64).sqrt()
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    if s.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

pub fn quantile(x: &[f64], p: f64) -> f64 {
    quantile_sorted(&sorted(x), p)
}

pub fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

/// Ordinary least squares y = a + b x.
pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = if n > 2.0 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    LineFit { slope, intercept, slope_se }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn uniforms(seed: u64, n: usize) -> Vec<f64> {
        let mut r = rng::stream(seed);
        (0..n).map(|_| r.random::<f64>()).collect()
    }

    #[test]
    fn ks_examples() {
        let a = [0.3, 0.1, 0.7];
        assert_eq!(ks_two_sample(&a, &a).unwrap().ks, 0.0);
        assert_eq!(ks_two_sample(&[0.0; 5], &[1.0; 7]).unwrap().ks, 1.0);
        assert!(ks_two_sample(&[], &a).is_err());
    }

    #[test]
    fn ks_lattice_ties() {
        // two lattice samples with identical frequencies in different orders
        let a = [1.0, 2.0, 2.0, 4.0];
        let b = [4.0, 2.0, 1.0, 2.0];
        assert_eq!(ks_two_sample(&a, &b).unwrap().ks, 0.0);
        let c = [1.0, 1.0, 2.0, 4.0];
        assert!((ks_two_sample(&a, &c).unwrap().ks - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ks_uniform_calibration_against_dkw() {
        let n = 20_000;
        let inside = (0..100)
            .filter(|t| {
                let r = ks_two_sample(&uniforms(2 * t, n), &uniforms(2 * t + 1, n)).unwrap();
                r.ks <= r.band
            })
            .count();
        assert!(inside >= 99, "{inside}");
    }

    #[test]
    fn ks_against_cdf_uniform() {
        let r = ks_against_cdf(&uniforms(5, 50_000), |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(r.ks < r.band);
    }

    #[test]
    fn tv_examples() {
        let bins = Bins { lo: 0.0, hi: 1.0, n: 10 };
        let a = uniforms(1, 1000);
        assert_eq!(tv_histogram(&a, &a, bins), 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 5.0).collect();
        assert!((tv_histogram(&a, &b, bins) - 1.0).abs() < 1e-12);
        let mut r = rng::stream(9);
        let n = 100_000;
        let g: Vec<f64> = (0..n).map(|_| Distribution::<f64>::sample(&StandardNormal, &mut r)).collect();
        let h: Vec<f64> = (0..n).map(|_| 0.1 + Distribution::<f64>::sample(&StandardNormal, &mut r)).collect();
        let tv = tv_histogram(&g, &h, Bins { lo: -4.0, hi: 4.0, n: 64 });
        assert!(tv > 0.02 && tv < 0.08, "{tv}");
    }

    #[test]
    fn bootstrap_examples() {
        let c = [2.5; 50];
        assert_eq!(bootstrap_ci(&c, mean, 200, 0.99, 1), (2.5, 2.5));
        let u = uniforms(11, 10_000);
        let ci = bootstrap_ci(&u, mean, 400, 0.99, 3);
        assert!(ci.0 < 0.5 && 0.5 < ci.1);
        assert_eq!(ci, bootstrap_ci(&u, mean, 400, 0.99, 3));
        let m = bootstrap_ci(&u, median, 200, 0.9, 3);
        assert!(m.0 < m.1);
    }

    #[test]
    fn line_fit_recovers_slope() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 - 0.5 * v).collect();
        let f = fit_line(&x, &y);
        assert!((f.slope + 0.5).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
    }
}
