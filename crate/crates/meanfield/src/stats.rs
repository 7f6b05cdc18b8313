use meanfield_core::metrics::mean_and_std;
use meanfield_core::rng::{Channel, NoiseStream};
use meanfield_core::simulate::SummaryRecord;
use serde::Serialize;

/// Least-squares slope and intercept of `y` on `x`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Mean `f`-distance over outputs with `t ∈ [0.75T, T]`.
pub fn plateau(records: &[SummaryRecord], horizon: f64) -> f64 {
    let lo = 0.75 * horizon - 1e-9;
    let hi = horizon + 1e-9;
    let window: Vec<f64> = records
        .iter()
        .filter(|r| r.t >= lo && r.t <= hi)
        .map(|r| r.mean_f_distance)
        .collect();
    window.iter().sum::<f64>() / window.len() as f64
}

/// Mean with standard error over replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_and_std(values);
        Estimate {
            mean,
            std_error: std / (values.len() as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
}

pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Log-log slope of the mean plateau against `N`, with a replication
/// bootstrap 95% interval. `per_n[k]` holds one plateau per replication.
/// `None` if a mean plateau is not positive.
pub fn fit_scaling(ns: &[usize], per_n: &[Vec<f64>], seed: u64) -> Option<SlopeFit> {
    let log_n: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let log_mean = |groups: &[Vec<f64>]| -> Option<Vec<f64>> {
        groups
            .iter()
            .map(|g| {
                let m = g.iter().sum::<f64>() / g.len() as f64;
                (m > 0.0).then(|| m.ln())
            })
            .collect()
    };
    let (slope, intercept) = ols(&log_n, &log_mean(per_n)?);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for b in 0..BOOTSTRAP_RESAMPLES {
        let resampled: Vec<Vec<f64>> = per_n
            .iter()
            .enumerate()
            .map(|(k, g)| {
                let mut s = NoiseStream::new(seed, Channel::Bootstrap, b as u64, k as u64);
                (0..g.len())
                    .map(|_| g[((s.uniform() * g.len() as f64) as usize).min(g.len() - 1)])
                    .collect()
            })
            .collect();
        if let Some(y) = log_mean(&resampled) {
            slopes.push(ols(&log_n, &y).0);
        }
    }
    slopes.sort_by(f64::total_cmp);
    let pick = |q: f64| slopes[((q * (slopes.len() - 1) as f64).round() as usize).min(slopes.len() - 1)];
    Some(SlopeFit {
        slope,
        intercept,
        ci_low: pick(0.025),
        ci_high: pick(0.975),
        resamples: slopes.len(),
    })
}
