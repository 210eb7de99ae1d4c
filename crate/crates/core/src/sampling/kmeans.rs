//! Representative sampling through k-means.
//!
//! Fits k = m clusters with the usual kmeans++ seeding and Lloyd updates,
//! then walks the centroids in order and lets each claim its nearest still
//! unclaimed pool row. Restarts keep the fit with the lowest inertia. All
//! ties resolve toward the lowest index, so a fixed seed gives a fixed
//! design.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{squared_euclidean, Design, SamplerConfig};
use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, seeded_rng};

/// Converged centroids of a single best-of-restarts k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    centroids: Vec<f64>,
    p: usize,
    inertia: f64,
    iterations: usize,
}

impl KMeansFit {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.p
    }

    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.p..(c + 1) * self.p]
    }

    /// Total squared distance from each pool row to its nearest centroid.
    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

pub fn kmeans_fit(pool: &FeatureMatrix, k: usize, config: &SamplerConfig) -> Result<KMeansFit> {
    config.validate()?;
    let n = pool.n();
    if k == 0 || k > n {
        return Err(Error::Size(format!(
            "k-means needs 1 <= k <= {n} clusters, got {k}"
        )));
    }

    let mut best: Option<KMeansFit> = None;
    for restart in 0..config.restarts {
        let seed = derive_seed(config.seed, &["kmeans", &restart.to_string()]);
        let mut rng = seeded_rng(seed);
        let fit = lloyd(pool, k, config.kmeans_max_iters, &mut rng);
        if best.as_ref().map_or(true, |held| fit.inertia < held.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart ran"))
}

/// Selects m rows, one per centroid: centroids claim their nearest pool row
/// in centroid order, skipping rows already claimed.
pub fn kmeans_sample(pool: &FeatureMatrix, m: usize, config: &SamplerConfig) -> Result<Design> {
    let fit = kmeans_fit(pool, m, config)?;
    let n = pool.n();
    let mut claimed = vec![false; n];
    let mut indices = Vec::with_capacity(m);
    for c in 0..m {
        let centroid = fit.centroid(c);
        let mut pick = usize::MAX;
        let mut nearest = f64::INFINITY;
        for i in 0..n {
            if claimed[i] {
                continue;
            }
            let d = squared_euclidean(pool.row(i), centroid);
            if d < nearest {
                nearest = d;
                pick = i;
            }
        }
        claimed[pick] = true;
        indices.push(pick);
    }
    Design::new(pool, indices)
}

fn lloyd(pool: &FeatureMatrix, k: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> KMeansFit {
    let n = pool.n();
    let p = pool.p();
    let mut centroids = plus_plus_init(pool, k, rng);
    let mut assignment = vec![usize::MAX; n];
    let mut iterations = 0;

    for _ in 0..max_iters {
        iterations += 1;

        let mut changed = false;
        for (i, slot) in assignment.iter_mut().enumerate() {
            let row = pool.row(i);
            let mut cluster = 0;
            let mut nearest = f64::INFINITY;
            for c in 0..k {
                let d = squared_euclidean(row, &centroids[c * p..(c + 1) * p]);
                if d < nearest {
                    nearest = d;
                    cluster = c;
                }
            }
            if *slot != cluster {
                *slot = cluster;
                changed = true;
            }
        }

        let mut counts = vec![0usize; k];
        let mut sums = vec![0.0; k * p];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (acc, v) in sums[c * p..(c + 1) * p].iter_mut().zip(pool.row(i)) {
                *acc += v;
            }
        }

        let mut reseeded = false;
        for c in 0..k {
            let slot = c * p..(c + 1) * p;
            if counts[c] == 0 {
                let former = centroids[slot.clone()].to_vec();
                let mut pick = 0;
                let mut farthest = -1.0;
                for i in 0..n {
                    let d = squared_euclidean(pool.row(i), &former);
                    if d > farthest {
                        farthest = d;
                        pick = i;
                    }
                }
                if centroids[slot.clone()] != *pool.row(pick) {
                    centroids[slot].copy_from_slice(pool.row(pick));
                    reseeded = true;
                }
            } else {
                let scale = 1.0 / counts[c] as f64;
                for (dst, acc) in centroids[slot].iter_mut().zip(&sums[c * p..(c + 1) * p]) {
                    *dst = acc * scale;
                }
            }
        }

        if !changed && !reseeded {
            break;
        }
    }

    let inertia = (0..n)
        .map(|i| {
            let row = pool.row(i);
            (0..k)
                .map(|c| squared_euclidean(row, &centroids[c * p..(c + 1) * p]))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();

    KMeansFit {
        centroids,
        p,
        inertia,
        iterations,
    }
}

/// kmeans++ seeding: after a uniform first pick, each further centroid is
/// drawn with probability proportional to squared distance from the chosen
/// set. A pool with no spread left falls back to the lowest unchosen row.
fn plus_plus_init(pool: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = pool.n();
    let p = pool.p();
    let mut centroids = Vec::with_capacity(k * p);
    let mut chosen = vec![false; n];

    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(pool.row(first));
    chosen[first] = true;
    let mut weight: Vec<f64> = (0..n)
        .map(|i| squared_euclidean(pool.row(i), pool.row(first)))
        .collect();

    for _ in 1..k {
        let total: f64 = weight.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut cumulative = 0.0;
            let mut pick = None;
            for (i, &w) in weight.iter().enumerate() {
                cumulative += w;
                if cumulative > target {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| {
                weight
                    .iter()
                    .rposition(|&w| w > 0.0)
                    .expect("positive total weight")
            })
        } else {
            (0..n).find(|&i| !chosen[i]).expect("k is at most n")
        };
        chosen[next] = true;
        let row = pool.row(next);
        centroids.extend_from_slice(row);
        for (w, i) in weight.iter_mut().zip(0..n) {
            *w = w.min(squared_euclidean(pool.row(i), row));
        }
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pool_1d(values: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_rows(
            (0..values.len()).map(|i| format!("r{i}")).collect(),
            values.iter().map(|&v| vec![v]).collect(),
        )
        .unwrap()
    }

    fn sorted(design: &Design) -> Vec<usize> {
        let mut indices = design.indices().to_vec();
        indices.sort_unstable();
        indices
    }

    #[test]
    fn integer_line_splits_into_halves() {
        let values: Vec<f64> = (0..10).map(|v| v as f64).collect();
        let pool = pool_1d(&values);
        let design = kmeans_sample(&pool, 2, &SamplerConfig::default()).unwrap();
        assert_eq!(sorted(&design), vec![2, 7]);

        let fit = kmeans_fit(&pool, 2, &SamplerConfig::default()).unwrap();
        assert_eq!(fit.inertia(), 20.0);
    }

    #[test]
    fn centroid_ties_claim_the_lowest_row() {
        let pool = pool_1d(&[0.0, 0.5, 10.0, 10.5]);
        let design = kmeans_sample(&pool, 2, &SamplerConfig::default()).unwrap();
        assert_eq!(sorted(&design), vec![0, 2]);
    }

    #[test]
    fn duplicate_rows_still_yield_distinct_indices() {
        let pool = pool_1d(&[1.0, 1.0, 1.0]);
        let design = kmeans_sample(&pool, 2, &SamplerConfig::default()).unwrap();
        assert_eq!(design.indices(), &[0, 1]);
    }

    #[test]
    fn selecting_the_whole_pool_returns_every_row() {
        let pool = pool_1d(&[1.0, 2.0, 3.0]);
        let design = kmeans_sample(&pool, 3, &SamplerConfig::default()).unwrap();
        assert_eq!(sorted(&design), vec![0, 1, 2]);
    }

    #[test]
    fn a_single_cluster_centers_on_the_mean() {
        let pool = pool_1d(&[0.0, 1.0, 2.0]);
        for seed in [0, 1, 99] {
            let config = SamplerConfig::default().with_seed(seed);
            let design = kmeans_sample(&pool, 1, &config).unwrap();
            assert_eq!(design.indices(), &[1]);
        }
    }

    #[test]
    fn restarts_never_hurt_the_inertia() {
        let values: Vec<f64> = (0..40).map(|v| (v * v % 23) as f64).collect();
        let pool = pool_1d(&values);
        let single = SamplerConfig {
            restarts: 1,
            ..SamplerConfig::default()
        };
        let many = SamplerConfig::default();
        let lone = kmeans_fit(&pool, 4, &single).unwrap();
        let raced = kmeans_fit(&pool, 4, &many).unwrap();
        assert!(raced.inertia() <= lone.inertia());
    }

    #[test]
    fn repeated_runs_are_identical() {
        let values: Vec<f64> = (0..30).map(|v| ((v * 7) % 13) as f64).collect();
        let pool = pool_1d(&values);
        let config = SamplerConfig::default().with_seed(5);
        assert_eq!(
            kmeans_sample(&pool, 5, &config).unwrap(),
            kmeans_sample(&pool, 5, &config).unwrap()
        );
    }

    #[test]
    fn rejects_bad_cluster_counts() {
        let pool = pool_1d(&[1.0, 2.0]);
        assert!(matches!(
            kmeans_sample(&pool, 0, &SamplerConfig::default()),
            Err(Error::Size(_))
        ));
        assert!(matches!(
            kmeans_sample(&pool, 3, &SamplerConfig::default()),
            Err(Error::Size(_))
        ));
    }

    proptest! {
        #[test]
        fn designs_are_valid_and_fits_are_finite(
            values in proptest::collection::vec(-50.0f64..50.0, 3..20),
            m in 1usize..5,
            seed in 0u64..500,
        ) {
            let m = m.min(values.len());
            let pool = pool_1d(&values);
            let config = SamplerConfig { restarts: 2, seed, ..SamplerConfig::default() };

            let fit = kmeans_fit(&pool, m, &config).unwrap();
            prop_assert!(fit.inertia() >= 0.0 && fit.inertia().is_finite());
            prop_assert_eq!(fit.k(), m);

            let design = kmeans_sample(&pool, m, &config).unwrap();
            prop_assert_eq!(design.m(), m);
            let mut indices = design.indices().to_vec();
            indices.sort_unstable();
            indices.dedup();
            prop_assert_eq!(indices.len(), m);
        }
    }
}
