//! Kennard-Stone coverage sampling.
//!
//! Picks the two mutually farthest rows, then repeatedly adds the row whose
//! distance to the current selection is largest. Distances are Euclidean in
//! a whitened space when the Mahalanobis metric is configured, so correlated
//! or differently scaled features do not dominate. The procedure has no
//! random element; ties go to the lowest row index.

use super::{pool_covariance, squared_euclidean, Design, DistanceMetric, SamplerConfig};
use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use nalgebra::{Cholesky, DVector};

pub fn kennard_stone(pool: &FeatureMatrix, m: usize, config: &SamplerConfig) -> Result<Design> {
    config.validate()?;
    let n = pool.n();
    if m < 2 {
        return Err(Error::Size(format!(
            "kennard-stone starts from a farthest pair and needs m >= 2, got {m}"
        )));
    }
    if m > n {
        return Err(Error::Size(format!(
            "kennard-stone cannot select {m} rows from a pool of {n}"
        )));
    }

    let coords = match config.distance {
        DistanceMetric::Euclidean => pool.data().to_vec(),
        DistanceMetric::Mahalanobis => whiten(pool, config.covariance_shrinkage)?,
    };
    let p = pool.p();
    let point = |i: usize| &coords[i * p..(i + 1) * p];

    let mut start = (0, 1);
    let mut farthest = -1.0;
    for i in 0..n {
        for j in i + 1..n {
            let d = squared_euclidean(point(i), point(j));
            if d > farthest {
                farthest = d;
                start = (i, j);
            }
        }
    }

    let mut order = vec![start.0, start.1];
    let mut selected = vec![false; n];
    selected[start.0] = true;
    selected[start.1] = true;
    let mut gap: Vec<f64> = (0..n)
        .map(|i| squared_euclidean(point(i), point(start.0)).min(squared_euclidean(point(i), point(start.1))))
        .collect();

    while order.len() < m {
        let mut pick = 0;
        let mut widest = -1.0;
        for (i, &g) in gap.iter().enumerate() {
            if !selected[i] && g > widest {
                widest = g;
                pick = i;
            }
        }
        selected[pick] = true;
        order.push(pick);
        for (i, g) in gap.iter_mut().enumerate() {
            *g = g.min(squared_euclidean(point(i), point(pick)));
        }
    }

    Design::new(pool, order)
}

/// Maps rows into a space where Euclidean distance equals Mahalanobis
/// distance under the shrunk pool covariance. When the covariance cannot be
/// factored as given, one automatic shrinkage bump is tried before giving
/// up.
fn whiten(pool: &FeatureMatrix, shrinkage: f64) -> Result<Vec<f64>> {
    let p = pool.p();
    let covariance = pool_covariance(pool);

    let shrunk = |gamma: f64| {
        let mut a = covariance.clone();
        for j in 0..p {
            a[(j, j)] += gamma;
        }
        Cholesky::new(a)
    };
    let chol = match shrunk(shrinkage) {
        Some(chol) => chol,
        None => {
            let bump = shrinkage + 1e-6 * covariance.diagonal().mean();
            match shrunk(bump) {
                Some(chol) => {
                    log::warn!(
                        "pool covariance is not positive definite; whitening with shrinkage {bump}"
                    );
                    chol
                }
                None => {
                    return Err(Error::Numeric(
                        "pool covariance is singular; increase covariance_shrinkage".into(),
                    ))
                }
            }
        }
    };

    let lower = chol.l();
    let mut coords = Vec::with_capacity(pool.n() * p);
    for i in 0..pool.n() {
        let x = DVector::from_column_slice(pool.row(i));
        let z = lower
            .solve_lower_triangular(&x)
            .ok_or_else(|| Error::Numeric("whitening solve failed".into()))?;
        coords.extend(z.iter());
    }
    Ok(coords)
}
