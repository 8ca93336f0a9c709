//! Lloyd's K-Means on scalar values with multiple restarts.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 15,
            restarts: 10,
            max_iter: 300,
            tol: 1e-10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// Strictly ascending.
    pub centroids: Vec<f64>,
    pub objective: f64,
    /// Which restart produced the winning fit.
    pub restart: usize,
}

/// One Lloyd run from a fixed initialisation.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydRun {
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    /// Objective after each assignment step, ending with the final objective.
    pub objective_trace: Vec<f64>,
}

impl LloydRun {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::INFINITY)
    }
}

/// Index of the nearest centroid; ties go to the lower index.
pub fn nearest(value: f64, centroids: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &c) in centroids.iter().enumerate() {
        let d = (value - c).abs();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Sum of squared distances to the nearest centroid.
pub fn objective(values: &[f64], centroids: &[f64]) -> f64 {
    values
        .iter()
        .map(|&v| {
            let c = centroids[nearest(v, centroids)];
            (v - c) * (v - c)
        })
        .sum()
}

pub fn lloyd(values: &[f64], init: Vec<f64>, max_iter: usize, tol: f64) -> LloydRun {
    let k = init.len();
    let mut centroids = init;
    let mut assignments = vec![0; values.len()];
    let mut trace = Vec::new();
    for _ in 0..max_iter {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        let mut obj = 0.0;
        for (a, &v) in assignments.iter_mut().zip(values) {
            *a = nearest(v, &centroids);
            sums[*a] += v;
            counts[*a] += 1;
            obj += (v - centroids[*a]).powi(2);
        }
        trace.push(obj);

        let mut shift: f64 = 0.0;
        let mut next: Vec<f64> = (0..k)
            .map(|c| {
                if counts[c] > 0 {
                    sums[c] / counts[c] as f64
                } else {
                    centroids[c]
                }
            })
            .collect();
        // An empty cluster takes over the point currently worst served.
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let worst = values
                .iter()
                .enumerate()
                .max_by(|a, b| {
                    let da = (a.1 - next[nearest(*a.1, &next)]).abs();
                    let db = (b.1 - next[nearest(*b.1, &next)]).abs();
                    da.total_cmp(&db).then(b.0.cmp(&a.0))
                })
                .map(|(_, &v)| v);
            if let Some(v) = worst {
                next[c] = v;
            }
        }
        for (a, b) in centroids.iter().zip(&next) {
            shift = shift.max((a - b).abs());
        }
        centroids = next;
        if shift <= tol {
            break;
        }
    }
    for (a, &v) in assignments.iter_mut().zip(values) {
        *a = nearest(v, &centroids);
    }
    trace.push(objective(values, &centroids));
    LloydRun {
        centroids,
        assignments,
        objective_trace: trace,
    }
}

/// `k` distinct seeds at evenly spaced quantiles of the distinct values.
fn quantile_seeds(distinct: &[f64], k: usize) -> Vec<f64> {
    let m = distinct.len();
    (0..k)
        .map(|i| distinct[(((i as f64 + 0.5) * m as f64 / k as f64).floor() as usize).min(m - 1)])
        .collect()
}

/// Best-of-`restarts` Lloyd fit. Restart 0 starts from quantile seeds, the
/// rest from distinct values drawn uniformly. Output centroids are sorted so
/// that cluster indices follow the value order.
pub fn kmeans_1d(values: &[f64], cfg: &KMeansConfig) -> Result<KMeansFit> {
    if cfg.k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if values.len() < cfg.k {
        return Err(Error::TooFewValues {
            needed: cfg.k,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means input"));
    }
    let mut distinct = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < cfg.k {
        return Err(Error::TooFewValues {
            needed: cfg.k,
            got: distinct.len(),
        });
    }

    let restarts = cfg.restarts.max(1);
    let runs: Vec<(usize, LloydRun)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let init = if r == 0 {
                quantile_seeds(&distinct, cfg.k)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(r as u64);
                sample(&mut rng, distinct.len(), cfg.k)
                    .into_iter()
                    .map(|i| distinct[i])
                    .collect()
            };
            (r, lloyd(values, init, cfg.max_iter, cfg.tol))
        })
        .collect();
    let (restart, best) = runs
        .into_iter()
        .min_by(|a, b| a.1.objective().total_cmp(&b.1.objective()).then(a.0.cmp(&b.0)))
        .expect("at least one restart");
    let objective = best.objective();
    let mut centroids = best.centroids;
    centroids.sort_by(f64::total_cmp);
    Ok(KMeansFit {
        centroids,
        objective,
        restart,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Exhaustive optimum over contiguous partitions of the sorted values.
    fn brute_force(values: &[f64], k: usize) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let sse = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
        };
        fn go(v: &[f64], k: usize, sse: &dyn Fn(&[f64]) -> f64) -> f64 {
            if k == 1 {
                return sse(v);
            }
            (1..=v.len() - (k - 1))
                .map(|cut| sse(&v[..cut]) + go(&v[cut..], k - 1, sse))
                .fold(f64::INFINITY, f64::min)
        }
        go(&v, k, &sse)
    }

    fn cfg(k: usize, restarts: usize) -> KMeansConfig {
        KMeansConfig {
            k,
            restarts,
            max_iter: 300,
            tol: 1e-12,
            seed: 42,
        }
    }

    #[test]
    fn separable_pairs() {
        let fit = kmeans_1d(&[0.0, 0.0, 10.0, 10.0], &cfg(2, 5)).unwrap();
        assert_eq!(fit.centroids, vec![0.0, 10.0]);
        assert_eq!(fit.objective, 0.0);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let v = [1.0, 2.0, 6.0, 7.0];
        let fit = kmeans_1d(&v, &cfg(1, 3)).unwrap();
        assert!((fit.centroids[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(kmeans_1d(&[1.0], &cfg(2, 1)), Err(Error::TooFewValues { .. })));
        assert!(matches!(kmeans_1d(&[1.0, 1.0, 1.0], &cfg(2, 1)), Err(Error::TooFewValues { .. })));
        assert!(kmeans_1d(&[1.0, f64::NAN], &cfg(1, 1)).is_err());
        assert!(kmeans_1d(&[1.0], &cfg(0, 1)).is_err());
    }

    #[test]
    fn matches_exhaustive_optimum_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..50 {
            let n = rng.gen_range(3..=12);
            let k = rng.gen_range(1..=3);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let fit = kmeans_1d(&v, &cfg(k, 20)).unwrap();
            let opt = brute_force(&v, k);
            assert!((fit.objective - opt).abs() < 1e-9, "{v:?} k={k}: {} vs {opt}", fit.objective);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..500).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let a = kmeans_1d(&v, &cfg(15, 8)).unwrap();
        let b = kmeans_1d(&v, &cfg(15, 8)).unwrap();
        assert_eq!(a, b);
        assert!(a.centroids.windows(2).all(|w| w[0] < w[1]));
    }

    proptest::proptest! {
        #[test]
        fn lloyd_objective_never_increases(
            values in proptest::collection::vec(-10.0f64..10.0, 4..60),
            k in 1usize..5,
            seed in 0u64..100
        ) {
            proptest::prop_assume!(values.len() >= k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init: Vec<f64> = sample(&mut rng, values.len(), k).into_iter().map(|i| values[i]).collect();
            let run = lloyd(&values, init, 100, 0.0);
            for w in run.objective_trace.windows(2) {
                proptest::prop_assert!(w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()));
            }
        }

        #[test]
        fn converged_fit_is_self_consistent(
            values in proptest::collection::vec(-10.0f64..10.0, 8..60),
            k in 1usize..4
        ) {
            let mut d = values.clone();
            d.sort_by(f64::total_cmp);
            d.dedup();
            proptest::prop_assume!(d.len() >= k);
            let fit = kmeans_1d(&values, &cfg(k, 4)).unwrap();
            // each centroid is the mean of the values nearest to it
            for (c, &centroid) in fit.centroids.iter().enumerate() {
                let members: Vec<f64> = values.iter().cloned().filter(|&v| nearest(v, &fit.centroids) == c).collect();
                if !members.is_empty() {
                    let mean = members.iter().sum::<f64>() / members.len() as f64;
                    proptest::prop_assert!((mean - centroid).abs() < 1e-9);
                }
            }
        }
    }
}
