//! Streaming moments, estimates and goodness-of-fit statistics.

use serde::{Deserialize, Serialize};

/// Welford accumulator with Chan's merge.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Welford {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, other: &Welford) -> Welford {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let mean = if self.mean == other.mean {
            self.mean
        } else {
            self.mean + d * other.n as f64 / n as f64
        };
        let m2 = self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64 / n as f64);
        Welford { n, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    /// Deterministic pairwise reduction of an ordered list.
    pub fn reduce(parts: &[Welford]) -> Welford {
        match parts.len() {
            0 => Welford::default(),
            1 => parts[0],
            n => {
                let (l, r) = parts.split_at(n / 2);
                Welford::reduce(l).merge(&Welford::reduce(r))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
}

impl Estimate {
    pub fn from_welford(w: &Welford, seed: u64) -> Self {
        Estimate {
            mean: w.mean,
            std_error: w.std_error(),
            n_samples: w.n,
            seed,
        }
    }
}

/// Two-sample Kolmogorov-Smirnov statistic. Infinite values (censored
/// observations) compare equal to each other.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = if x[i] <= y[j] { x[i] } else { y[j] };
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// One-sample KS statistic against a continuous cdf.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Asymptotic Kolmogorov survival function Q(λ) = 2Σ(-1)^{j-1} e^{-2j²λ²}.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..100 {
        let t = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        s += if j % 2 == 1 { t } else { -t };
        if t < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// p-value of a two-sample KS statistic (Stephens' effective n correction).
pub fn ks_two_sample_pvalue(d: f64, n: usize, m: usize) -> f64 {
    let ne = (n as f64 * m as f64) / (n + m) as f64;
    let s = ne.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

pub fn ks_one_sample_pvalue(d: f64, n: usize) -> f64 {
    let s = (n as f64).sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

/// Pearson chi-square statistic and p-value for observed counts against
/// expected probabilities.
pub fn chi_square(observed: &[u64], probs: &[f64]) -> (f64, f64) {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let n: u64 = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dof = (observed.len() - 1) as f64;
    let p = 1.0 - ChiSquared::new(dof).map(|c| c.cdf(stat)).unwrap_or(0.0);
    (stat, p)
}

/// Real part of the empirical characteristic function.
pub fn empirical_cf(sample: &[f64], theta: f64) -> f64 {
    sample.iter().map(|x| (theta * x).cos()).sum::<f64>() / sample.len() as f64
}

/// Ordinary least squares slope and intercept.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Hill estimator of the tail index from the `k` largest observations.
pub fn hill_tail_index(sample: &[f64], k: usize) -> f64 {
    let mut x: Vec<f64> = sample.iter().map(|v| v.abs()).collect();
    x.sort_by(|a, b| b.total_cmp(a));
    let xk = x[k].ln();
    let s: f64 = x[..k].iter().map(|v| v.ln() - xk).sum();
    k as f64 / s
}
