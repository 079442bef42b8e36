//! Summary statistics, log-log power-law fits and Gaussian kernel density
//! estimates for stopping-time samples.

use thiserror::Error;

/// Exponent used by the pinned fit.
pub const PINNED_EXPONENT: f64 = -2.0 / 3.0;

/// Number of points on a density grid.
pub const KDE_GRID_POINTS: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("power-law fit needs positive inputs, got ({0}, {1})")]
    NonPositiveInput(f64, f64),
    #[error("empty sample")]
    EmptySample,
    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),
    #[error("bin count must be positive")]
    InvalidBins,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub k: f64,
    pub exponent: f64,
    /// Best prefactor with the exponent held at −2/3.
    pub k_fixed_exponent: f64,
    /// RMS residual of the free fit in log space.
    pub residual: f64,
}

/// Ordinary least squares of `ln τ` against `ln g`, plus a pinned-exponent fit.
pub fn power_law_fit(points: &[(f64, f64)]) -> Result<FitResult, StatsError> {
    if points.len() < 3 {
        return Err(StatsError::InsufficientPoints {
            needed: 3,
            got: points.len(),
        });
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(StatsError::NonPositiveInput(x, y));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(StatsError::InsufficientPoints { needed: 2, got: 1 });
    }
    let exponent = sxy / sxx;
    let ln_k = my - exponent * mx;
    let residual = (logs
        .iter()
        .map(|&(x, y)| (y - ln_k - exponent * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let ln_k_fixed = logs.iter().map(|&(x, y)| y - PINNED_EXPONENT * x).sum::<f64>() / n;
    Ok(FitResult {
        k: ln_k.exp(),
        exponent,
        k_fixed_exponent: ln_k_fixed.exp(),
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Silverman's rule of thumb.
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityEstimate {
    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }

    /// Number of strict local maxima of the density.
    pub fn mode_count(&self) -> usize {
        count_modes(&self.density)
    }
}

/// `0.9 · min(std, IQR/1.34) · n^{−1/5}`.
///
/// Falls back to whichever spread is nonzero, and to 1 when the sample has
/// no spread at all.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let std = if samples.len() > 1 {
        sample_std(samples)
    } else {
        0.0
    };
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = match (std > 0.0, iqr > 0.0) {
        (true, true) => std.min(iqr / 1.34),
        (true, false) => std,
        (false, true) => iqr / 1.34,
        (false, false) => 1.0,
    };
    Ok(0.9 * spread * (samples.len() as f64).powf(-0.2))
}

/// Gaussian-kernel density on a uniform grid spanning the data ± 4 bandwidths.
pub fn gaussian_kde(samples: &[f64], bandwidth: Bandwidth) -> Result<DensityEstimate, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let h = match bandwidth {
        Bandwidth::Silverman => silverman_bandwidth(samples)?,
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => return Err(StatsError::InvalidBandwidth(h)),
    };
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * h;
    let step = (hi - lo) / (KDE_GRID_POINTS - 1) as f64;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let grid: Vec<f64> = (0..KDE_GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let density = grid
        .iter()
        .map(|&x| {
            norm * samples
                .iter()
                .map(|&s| {
                    let u = (x - s) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(DensityEstimate {
        grid,
        density,
        bandwidth: h,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(samples: &[f64], bins: usize) -> Result<Self, StatsError> {
        if samples.is_empty() {
            return Err(StatsError::EmptySample);
        }
        if bins == 0 {
            return Err(StatsError::InvalidBins);
        }
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi == lo {
            hi = lo + 1.0;
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0usize; bins];
        for &s in samples {
            let k = (((s - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Ok(Self { edges, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Local maxima of the counts, treating runs of equal counts as one.
    pub fn mode_count(&self) -> usize {
        let counts: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        count_modes(&counts)
    }
}

/// Sturges' rule, `⌈log₂ n⌉ + 1`.
pub fn sturges_bins(n: usize) -> usize {
    if n <= 1 {
        1
    } else {
        (n as f64).log2().ceil() as usize + 1
    }
}

fn count_modes(values: &[f64]) -> usize {
    // collapse plateaus, then count interior and edge peaks
    let mut runs: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        if runs.last() != Some(&v) {
            runs.push(v);
        }
    }
    if runs.len() == 1 {
        return 1;
    }
    (0..runs.len())
        .filter(|&i| {
            let left = i == 0 || runs[i - 1] < runs[i];
            let right = i + 1 == runs.len() || runs[i + 1] < runs[i];
            left && right
        })
        .count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    /// Unbiased; `None` for fewer than two samples.
    pub std: Option<f64>,
    pub stderr: Option<f64>,
    pub histogram: Histogram,
}

pub fn summarize(samples: &[f64], bins: Option<usize>) -> Result<Summary, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let std = (n >= 2).then(|| sample_std(samples));
    let stderr = std.map(|s| s / (n as f64).sqrt());
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let histogram = Histogram::new(samples, bins.unwrap_or_else(|| sturges_bins(n)))?;
    Ok(Summary {
        n,
        mean,
        median: quantile_sorted(&sorted, 0.5),
        std,
        stderr,
        histogram,
    })
}

fn sample_std(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Exact two-sided binomial test: total probability of outcomes no more
/// likely than `k` successes out of `n` at success probability `p`.
pub fn binomial_two_sided_p(k: u64, n: u64, p: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let ln_pmf = |j: u64| -> f64 {
        let (jf, nf) = (j as f64, n as f64);
        let ln_choose = ln_gamma(nf + 1.0) - ln_gamma(jf + 1.0) - ln_gamma(nf - jf + 1.0);
        let a = if j == 0 { 0.0 } else { jf * p.ln() };
        let b = if j == n { 0.0 } else { (nf - jf) * (1.0 - p).ln() };
        ln_choose + a + b
    };
    let observed = ln_pmf(k);
    let total: f64 = (0..=n)
        .map(ln_pmf)
        .filter(|&l| l <= observed + 1e-7)
        .map(f64::exp)
        .sum();
    total.min(1.0)
}
