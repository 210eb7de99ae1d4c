//! Exchange optimization of information criteria.
//!
//! Starting from a random subset, each pass scans every (design row, pool
//! row) pair and applies the single best strictly improving swap. The run
//! stops when no swap clears the acceptance threshold or the pass budget is
//! exhausted. Several random restarts are raced and the best final design
//! wins.

use nalgebra::{Cholesky, DMatrix, Dyn};

use super::{log_det_from_cholesky, sym_matvec, Criterion, Design, SamplerConfig};
use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, seeded_rng};

/// Selects m pool rows maximizing the configured criterion.
pub fn fedorov_exchange(pool: &FeatureMatrix, m: usize, config: &SamplerConfig) -> Result<Design> {
    fedorov_augment(pool, None, m, config)
}

/// Extends an existing design by `m_new` rows. The existing rows are pinned;
/// only the added rows take part in exchanges. With no existing design this
/// is plain exchange selection.
pub fn fedorov_augment(
    pool: &FeatureMatrix,
    existing: Option<&Design>,
    m_new: usize,
    config: &SamplerConfig,
) -> Result<Design> {
    config.validate()?;
    let fixed: Vec<usize> = match existing {
        Some(design) => {
            design.check_pool(pool)?;
            design.indices().to_vec()
        }
        None => Vec::new(),
    };
    if m_new == 0 {
        return Err(Error::Size("exchange selection must add at least one row".into()));
    }
    let n = pool.n();
    let m_total = fixed.len() + m_new;
    if m_total > n {
        return Err(Error::Size(format!(
            "design of {m_total} rows exceeds the pool of {n}"
        )));
    }

    let p = pool.p();
    let weight_matrix = match config.criterion {
        Criterion::D => None,
        Criterion::A => Some(DMatrix::identity(p, p)),
        Criterion::I => Some(second_moment(pool)),
    };

    let mut best: Option<(Vec<usize>, f64)> = None;
    for restart in 0..config.restarts {
        let seed = derive_seed(config.seed, &["fedorov", &restart.to_string()]);
        let (free, value, _) =
            optimize_restart(pool, &fixed, m_new, m_total, config, weight_matrix.as_ref(), seed)?;
        if best.as_ref().map_or(true, |(_, held)| value > *held) {
            best = Some((free, value));
        }
    }
    let (free, value) = best.expect("at least one restart ran");

    let mut indices = fixed;
    indices.extend(free);
    Ok(Design::new(pool, indices)?.with_criterion_value(Some(value)))
}

/// One restart: random initial free rows, then best-swap passes until
/// convergence or the pass budget. Returns the sorted free rows, the final
/// criterion value and the per-pass criterion trace.
fn optimize_restart(
    pool: &FeatureMatrix,
    fixed: &[usize],
    m_new: usize,
    m_total: usize,
    config: &SamplerConfig,
    weight_matrix: Option<&DMatrix<f64>>,
    seed: u64,
) -> Result<(Vec<usize>, f64, Vec<f64>)> {
    let n = pool.n();
    let mut in_design = vec![false; n];
    for &i in fixed {
        in_design[i] = true;
    }
    let complement: Vec<usize> = (0..n).filter(|&i| !in_design[i]).collect();

    let mut rng = seeded_rng(seed);
    let mut free: Vec<usize> = rand::seq::index::sample(&mut rng, complement.len(), m_new)
        .iter()
        .map(|k| complement[k])
        .collect();
    free.sort_unstable();
    for &i in &free {
        in_design[i] = true;
    }

    let mut trace = Vec::new();
    let mut passes = 0;
    loop {
        let moment = regularized_moment(pool, fixed, &free, m_total, config.ridge_delta);
        let chol = Cholesky::new(moment.clone()).ok_or_else(|| {
            Error::Numeric(
                "regularized information matrix is not positive definite; increase ridge_delta"
                    .into(),
            )
        })?;
        let value = match weight_matrix {
            None => log_det_from_cholesky(&chol),
            Some(weights) => -trace_product(&chol.inverse(), weights),
        };
        if !value.is_finite() {
            return Err(Error::Numeric("exchange criterion became non-finite".into()));
        }
        trace.push(value);
        if passes >= config.max_exchange_passes {
            return Ok((free, value, trace));
        }
        passes += 1;

        let threshold = 1e-12 * value.abs().max(1.0);
        let swap = match weight_matrix {
            None => best_determinant_swap(pool, &free, &in_design, &chol, m_total, threshold),
            Some(weights) => best_weighted_swap(
                pool, &free, &in_design, &moment, weights, value, m_total, threshold,
            ),
        };
        match swap {
            Some((position, incoming)) => {
                in_design[free[position]] = false;
                in_design[incoming] = true;
                free[position] = incoming;
                free.sort_unstable();
            }
            None => return Ok((free, value, trace)),
        }
    }
}

/// Best swap under the D criterion, scored by the rank-two determinant
/// update so no candidate needs a fresh factorization. With c = 1/m and
/// d_ab = x_a^T (M + delta I)^-1 x_b, replacing row i by row j scales the
/// determinant by (1 + c d_jj)(1 - c d_ii) + c^2 d_ij^2.
fn best_determinant_swap(
    pool: &FeatureMatrix,
    free: &[usize],
    in_design: &[bool],
    chol: &Cholesky<f64, Dyn>,
    m_total: usize,
    threshold: f64,
) -> Option<(usize, usize)> {
    let inverse = chol.inverse();
    let c = 1.0 / m_total as f64;
    let mut w = vec![0.0; pool.p()];

    let d_in: Vec<f64> = free
        .iter()
        .map(|&i| {
            let row = pool.row(i);
            sym_matvec(&inverse, row, &mut w);
            dot(row, &w)
        })
        .collect();

    let mut best: Option<(usize, usize, f64)> = None;
    for incoming in 0..pool.n() {
        if in_design[incoming] {
            continue;
        }
        let row_in = pool.row(incoming);
        sym_matvec(&inverse, row_in, &mut w);
        let d_jj = dot(row_in, &w);
        for (position, &outgoing) in free.iter().enumerate() {
            let d_ij = dot(pool.row(outgoing), &w);
            let ratio = (1.0 + c * d_jj) * (1.0 - c * d_in[position]) + c * c * d_ij * d_ij;
            if best.map_or(true, |(_, _, held)| ratio > held) {
                best = Some((position, incoming, ratio));
            }
        }
    }
    best.and_then(|(position, incoming, ratio)| {
        (ratio > 0.0 && ratio.ln() > threshold).then_some((position, incoming))
    })
}

/// Best swap under the A or I criterion. Candidates are few enough outside
/// the D hot path that each one gets its own factorization.
#[allow(clippy::too_many_arguments)]
fn best_weighted_swap(
    pool: &FeatureMatrix,
    free: &[usize],
    in_design: &[bool],
    moment: &DMatrix<f64>,
    weights: &DMatrix<f64>,
    current: f64,
    m_total: usize,
    threshold: f64,
) -> Option<(usize, usize)> {
    let c = 1.0 / m_total as f64;
    let mut best: Option<(usize, usize, f64)> = None;
    for incoming in 0..pool.n() {
        if in_design[incoming] {
            continue;
        }
        for (position, &outgoing) in free.iter().enumerate() {
            let mut candidate = moment.clone();
            add_scaled_outer(&mut candidate, pool.row(incoming), c);
            add_scaled_outer(&mut candidate, pool.row(outgoing), -c);
            let Some(chol) = Cholesky::new(candidate) else {
                continue;
            };
            let value = -trace_product(&chol.inverse(), weights);
            if value.is_finite() && best.map_or(true, |(_, _, held)| value > held) {
                best = Some((position, incoming, value));
            }
        }
    }
    best.and_then(|(position, incoming, value)| {
        (value - current > threshold).then_some((position, incoming))
    })
}

/// (1/m) X_design^T X_design + delta I over the fixed and free rows.
fn regularized_moment(
    pool: &FeatureMatrix,
    fixed: &[usize],
    free: &[usize],
    m_total: usize,
    delta: f64,
) -> DMatrix<f64> {
    let p = pool.p();
    let mut moment = DMatrix::<f64>::zeros(p, p);
    for &i in fixed.iter().chain(free.iter()) {
        add_scaled_outer(&mut moment, pool.row(i), 1.0);
    }
    let scale = 1.0 / m_total as f64;
    moment.scale_mut(scale);
    for j in 0..p {
        moment[(j, j)] += delta;
    }
    moment
}

/// (1/n) X^T X over the whole pool; the weight matrix of the I criterion.
fn second_moment(pool: &FeatureMatrix) -> DMatrix<f64> {
    let p = pool.p();
    let mut moment = DMatrix::<f64>::zeros(p, p);
    for i in 0..pool.n() {
        add_scaled_outer(&mut moment, pool.row(i), 1.0);
    }
    moment.scale_mut(1.0 / pool.n() as f64);
    moment
}

fn add_scaled_outer(matrix: &mut DMatrix<f64>, row: &[f64], weight: f64) {
    for (k, &xk) in row.iter().enumerate() {
        let scaled = weight * xk;
        for (entry, &xj) in matrix.column_mut(k).iter_mut().zip(row.iter()) {
            *entry += scaled * xj;
        }
    }
}

/// trace(A B) for symmetric A and B.
fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
