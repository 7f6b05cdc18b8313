//! Transport distances with concave costs `f(‖x − y‖)` and moment tracking.
//!
//! The distance between an `N`-particle law and the product of nonlinear
//! laws is only ever bounded through the simulated coupling
//! ([`coupled_distance`]); empirical transport in `dN` dimensions is not
//! attempted. The exact solvers compare two empirical clouds.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::math::{dist, dot, sqrt};
use crate::points::Points;
use crate::rates::RateProfile;
use crate::simulate::CoupledEnsemble;

/// Largest cloud accepted by [`wasserstein_assignment`].
pub const MAX_ASSIGNMENT_SIZE: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Method {
    CoupledBound,
    Exact1d,
    ExactAssignment,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransportEstimate {
    pub value: f64,
    /// Standard error of the mean over replications.
    pub std_error: f64,
    pub method: Method,
    /// Number of replications.
    pub n_samples: usize,
}

/// `(1/N) Σ f(‖E^i‖)` over the coupled pairs.
pub fn coupled_distance(ens: &CoupledEnsemble, profile: &RateProfile) -> f64 {
    let n = ens.len() as f64;
    ens.difference.rows().map(|e| profile.f(crate::math::norm(e))).sum::<f64>() / n
}

/// `(1/N) Σ ‖x_i‖²`.
pub fn second_moment(state: &Points) -> f64 {
    state.rows().map(|x| dot(x, x)).sum::<f64>() / state.len() as f64
}

fn check_counts(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("sample counts differ: {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::Shape("empty samples".into()));
    }
    Ok(())
}

fn sorted(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples", "non-finite value"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Cost of the monotone (sorted-order) pairing. Optimal for convex costs;
/// for concave costs it is only an upper bound on the transport cost.
pub fn monotone_1d_cost<F: Fn(f64) -> f64>(a: &[f64], b: &[f64], cost: F) -> Result<f64> {
    check_counts(a.len(), b.len())?;
    let (a, b) = (sorted(a)?, sorted(b)?);
    Ok(a.iter().zip(&b).map(|(x, y)| cost((x - y).abs())).sum::<f64>() / a.len() as f64)
}

/// Exact optimal transport between two equal-size samples on the line
/// under a concave nondecreasing cost with `cost(0) = 0`.
///
/// Concave costs admit an optimal matching whose arcs are nested or
/// disjoint, so an interval dynamic program over the merged sorted sample
/// is exact. `O(n³)` time, `O(n²)` memory.
pub fn wasserstein_1d_exact<F: Fn(f64) -> f64>(a: &[f64], b: &[f64], cost: F) -> Result<f64> {
    check_counts(a.len(), b.len())?;
    let n = a.len();
    let mut merged: Vec<(f64, bool)> = sorted(a)?.into_iter().map(|x| (x, true)).collect();
    merged.extend(sorted(b)?.into_iter().map(|y| (y, false)));
    merged.sort_by(|p, q| p.0.total_cmp(&q.0));

    let len = merged.len();
    // balance[i] = (#a − #b) among the first i points
    let mut balance = vec![0i64; len + 1];
    for (i, &(_, is_a)) in merged.iter().enumerate() {
        balance[i + 1] = balance[i] + if is_a { 1 } else { -1 };
    }
    let width = len + 1;
    // best[i·width + j]: optimal cost of the balanced block [i, j)
    let mut best = vec![f64::INFINITY; width * width];
    for i in 0..=len {
        best[i * width + i] = 0.0;
    }
    for span in (2..=len).step_by(2) {
        for i in 0..=len - span {
            let j = i + span;
            if balance[i] != balance[j] {
                continue;
            }
            let (xi, ci) = merged[i];
            let mut value = f64::INFINITY;
            // partner k of the leftmost point; [i+1, k) and [k+1, j) balanced
            for k in (i + 1..j).step_by(2) {
                if merged[k].1 == ci || balance[i + 1] != balance[k] {
                    continue;
                }
                let inner = best[(i + 1) * width + k];
                let outer = best[(k + 1) * width + j];
                let candidate = cost(merged[k].0 - xi) + inner + outer;
                if candidate < value {
                    value = candidate;
                }
            }
            best[i * width + j] = value;
        }
    }
    Ok(best[len] / n as f64)
}

/// Minimum-cost perfect matching on a square cost matrix (row-major),
/// returning `assignment[row] = column`. Shortest augmenting paths with
/// dual potentials, `O(n³)`.
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    debug_assert_eq!(cost.len(), n * n);
    // 1-based internally; column 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut min_v = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[(r - 1) * n + col - 1] - u[r] - v[col];
                if reduced < min_v[col] {
                    min_v[col] = reduced;
                    way[col] = col0;
                }
                if min_v[col] < delta {
                    delta = min_v[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_v[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        assignment[owner[col] - 1] = col - 1;
    }
    assignment
}

/// Exact transport cost between two equal-size clouds in any dimension.
pub fn wasserstein_assignment<F: Fn(f64) -> f64>(a: &Points, b: &Points, cost: F) -> Result<f64> {
    check_counts(a.len(), b.len())?;
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("dimensions differ: {} vs {}", a.dim(), b.dim())));
    }
    let n = a.len();
    if n > MAX_ASSIGNMENT_SIZE {
        return Err(Error::invalid(
            "n",
            format!("assignment limited to {MAX_ASSIGNMENT_SIZE} points, got {n}"),
        ));
    }
    if !a.all_finite() || !b.all_finite() {
        return Err(Error::invalid("samples", "non-finite value"));
    }
    let mut matrix = Vec::with_capacity(n * n);
    for x in a.rows() {
        for y in b.rows() {
            matrix.push(cost(dist(x, y)));
        }
    }
    let assignment = hungarian(&matrix, n);
    Ok(assignment.iter().enumerate().map(|(i, &j)| matrix[i * n + j]).sum::<f64>() / n as f64)
}

/// Runs `estimator` once per seed and reports the mean with its standard
/// error.
pub fn replicate(
    exec: &dyn Executor,
    estimator: &(dyn Fn(u64) -> f64 + Sync),
    seeds: &[u64],
    method: Method,
) -> Result<TransportEstimate> {
    let r = seeds.len();
    if r < 2 {
        return Err(Error::invalid("R", format!("need at least 2 replications, got {r}")));
    }
    let values = exec.map_indices(r, &|k| estimator(seeds[k]));
    if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Numerical(format!("estimator returned {bad}")));
    }
    let (mean, std) = mean_and_std(&values);
    Ok(TransportEstimate {
        value: mean,
        std_error: std / sqrt(r as f64),
        method,
        n_samples: r,
    })
}

/// Mean and unbiased sample standard deviation.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, sqrt(var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;

    #[test]
    fn second_moment_examples() {
        assert_eq!(second_moment(&Points::zeros(4, 3)), 0.0);
        assert_eq!(second_moment(&Points::from_vec(2, vec![3.0, 4.0]).unwrap()), 25.0);
    }

    #[test]
    fn one_d_examples() {
        let id = |r: f64| r;
        assert_eq!(wasserstein_1d_exact(&[0.3, -1.0], &[-1.0, 0.3], id).unwrap(), 0.0);
        assert_eq!(wasserstein_1d_exact(&[0.0], &[1.0], id).unwrap(), 1.0);
        assert!(wasserstein_1d_exact(&[0.0], &[1.0, 2.0], id).is_err());
    }

    #[test]
    fn concave_cost_beats_monotone_pairing() {
        let sq = |r: f64| r.sqrt();
        let exact = wasserstein_1d_exact(&[0.0, 1.0], &[1.0, 2.0], sq).unwrap();
        let mono = monotone_1d_cost(&[0.0, 1.0], &[1.0, 2.0], sq).unwrap();
        assert!((exact - 2f64.sqrt() / 2.0).abs() < 1e-15);
        assert!((mono - 1.0).abs() < 1e-15);
    }

    #[test]
    fn assignment_examples() {
        let a = Points::from_vec(2, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let b = Points::from_vec(2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(wasserstein_assignment(&a, &b, |r| r).unwrap(), 0.0);
        assert_eq!(wasserstein_assignment(&a, &a, |r| r).unwrap(), 0.0);
        let big = Points::zeros(513, 1);
        assert!(wasserstein_assignment(&big, &big, |r| r).is_err());
    }

    #[test]
    fn hungarian_small_matrix() {
        let c = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = hungarian(&c, 3);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| c[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn replicate_statistics() {
        let seeds = [1, 2, 3, 4];
        let est = replicate(&Sequential, &|_| 0.5, &seeds, Method::Exact1d).unwrap();
        assert_eq!((est.value, est.std_error, est.n_samples), (0.5, 0.0, 4));
        assert!(replicate(&Sequential, &|_| 0.5, &seeds[..1], Method::Exact1d).is_err());
        let est = replicate(&Sequential, &|s| s as f64, &seeds, Method::CoupledBound).unwrap();
        assert_eq!(est.value, 2.5);
        assert!((est.std_error - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }
}
