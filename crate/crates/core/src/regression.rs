//! Ridge regression on standardized features, plus integer score rounding.
//!
//! Models are fit by solving the penalized normal equations with a Cholesky
//! factorization. Features are centered and scaled with training-set
//! statistics and the intercept is left out of the penalty, so predictions at
//! the training centroid equal the training mean.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureMatrix, ScoreRange};
use crate::error::{Error, Result};
use crate::seed::seeded_rng;

/// Per-column centering and scaling parameters learned from training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl Standardizer {
    /// Learns column means and standard deviations. Columns with zero
    /// variance get scale 1 so they pass through centered but unscaled.
    pub fn fit(x: &FeatureMatrix) -> Standardizer {
        let n = x.n() as f64;
        let p = x.p();
        let mut means = vec![0.0; p];
        for i in 0..x.n() {
            for (m, v) in means.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut scales = vec![0.0; p];
        for i in 0..x.n() {
            for ((s, m), v) in scales.iter_mut().zip(&means).zip(x.row(i)) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut scales {
            *s = (*s / n).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Standardizer { means, scales }
    }

    /// A pass-through standardizer (zero means, unit scales).
    pub fn identity(p: usize) -> Standardizer {
        Standardizer {
            means: vec![0.0; p],
            scales: vec![1.0; p],
        }
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn p(&self) -> usize {
        self.means.len()
    }

    fn transform_into(&self, row: &[f64], out: &mut [f64]) {
        for ((o, v), (m, s)) in out
            .iter_mut()
            .zip(row)
            .zip(self.means.iter().zip(&self.scales))
        {
            *o = (v - m) / s;
        }
    }

    fn validate(&self) -> Result<()> {
        if self.means.len() != self.scales.len() {
            return Err(Error::Shape(format!(
                "{} means for {} scales",
                self.means.len(),
                self.scales.len()
            )));
        }
        if self
            .scales
            .iter()
            .any(|s| !s.is_finite() || *s <= 0.0)
        {
            return Err(Error::Validation("scales must be finite and positive".into()));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Validation("means must be finite".into()));
        }
        Ok(())
    }
}

/// Switches for the fitting pipeline. The defaults match the evaluation
/// harness; tests use the raw variants to pin closed-form solutions.
#[derive(Debug, Clone, Copy)]
pub struct RidgeOptions {
    pub standardize: bool,
    pub intercept: bool,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        RidgeOptions {
            standardize: true,
            intercept: true,
        }
    }
}

/// A fitted ridge model, serializable to JSON and back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    lambda: f64,
    #[serde(flatten)]
    standardizer: Standardizer,
    coefficients: Vec<f64>,
    intercept: f64,
    score_range: ScoreRange,
}

impl RidgeModel {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    /// Coefficients in standardized feature space.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn score_range(&self) -> ScoreRange {
        self.score_range
    }

    pub fn p(&self) -> usize {
        self.coefficients.len()
    }

    /// Raw (unrounded) prediction for a single feature row.
    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.p() {
            return Err(Error::Shape(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.p()
            )));
        }
        let mut acc = self.intercept;
        for ((v, b), (m, s)) in row
            .iter()
            .zip(&self.coefficients)
            .zip(self.standardizer.means.iter().zip(&self.standardizer.scales))
        {
            acc += b * (v - m) / s;
        }
        Ok(acc)
    }

    /// Raw predictions for every row of a feature matrix.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.p() != self.p() {
            return Err(Error::Shape(format!(
                "matrix has {} features, model expects {}",
                x.p(),
                self.p()
            )));
        }
        (0..x.n()).map(|i| self.predict_row(x.row(i))).collect()
    }

    /// Predictions rounded onto the model's scoring scale.
    pub fn predict_scores(&self, x: &FeatureMatrix) -> Result<Vec<i32>> {
        Ok(self
            .predict(x)?
            .into_iter()
            .map(|y| round_score(y, self.score_range))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Validation(format!("model serialization failed: {e}")))
    }

    pub fn from_json(json: &str) -> Result<RidgeModel> {
        let model: RidgeModel = serde_json::from_str(json)
            .map_err(|e| Error::schema("model json", e.to_string()))?;
        model.standardizer.validate()?;
        if model.standardizer.p() != model.coefficients.len() {
            return Err(Error::Shape(format!(
                "{} coefficients for {} standardized columns",
                model.coefficients.len(),
                model.standardizer.p()
            )));
        }
        if !model.lambda.is_finite() || model.lambda < 0.0 {
            return Err(Error::Validation(format!(
                "lambda must be finite and non-negative, got {}",
                model.lambda
            )));
        }
        if !model.intercept.is_finite() || model.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("model parameters must be finite".into()));
        }
        Ok(model)
    }
}

/// Fits a ridge model with standardization and an unpenalized intercept.
pub fn fit_ridge(
    x: &FeatureMatrix,
    y: &[f64],
    lambda: f64,
    score_range: ScoreRange,
) -> Result<RidgeModel> {
    fit_ridge_with(x, y, lambda, score_range, RidgeOptions::default())
}

/// Fits a ridge model with explicit pipeline switches.
pub fn fit_ridge_with(
    x: &FeatureMatrix,
    y: &[f64],
    lambda: f64,
    score_range: ScoreRange,
    options: RidgeOptions,
) -> Result<RidgeModel> {
    let n = x.n();
    let p = x.p();
    if y.len() != n {
        return Err(Error::Shape(format!("{} targets for {n} rows", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("targets must be finite".into()));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Validation(format!(
            "lambda must be finite and non-negative, got {lambda}"
        )));
    }
    if lambda == 0.0 && n < p {
        log::warn!("ridge with lambda 0 on {n} rows and {p} features is underdetermined");
    }

    let standardizer = if options.standardize {
        Standardizer::fit(x)
    } else {
        Standardizer::identity(p)
    };
    let intercept = if options.intercept {
        y.iter().sum::<f64>() / n as f64
    } else {
        0.0
    };

    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut xs = vec![0.0; p];
    for i in 0..n {
        standardizer.transform_into(x.row(i), &mut xs);
        let residual = y[i] - intercept;
        for j in 0..p {
            rhs[j] += xs[j] * residual;
            for k in j..p {
                gram[(j, k)] += xs[j] * xs[k];
            }
        }
    }
    for j in 0..p {
        gram[(j, j)] += lambda;
        for k in j + 1..p {
            gram[(k, j)] = gram[(j, k)];
        }
    }

    let chol = Cholesky::new(gram).ok_or_else(|| {
        if lambda == 0.0 {
            Error::Numeric(
                "normal equations are singular with lambda 0; use a positive lambda".into(),
            )
        } else {
            Error::Numeric("normal equations are singular; increase lambda".into())
        }
    })?;
    let beta = chol.solve(&rhs);
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numeric("ridge solve produced non-finite coefficients".into()));
    }

    Ok(RidgeModel {
        lambda,
        standardizer,
        coefficients: beta.iter().copied().collect(),
        intercept,
        score_range,
    })
}

/// Raw predictions for a row-major block of feature rows. An empty block
/// yields an empty prediction vector.
pub fn predict_raw(model: &RidgeModel, rows: &[f64]) -> Result<Vec<f64>> {
    let p = model.p();
    if rows.len() % p != 0 {
        return Err(Error::Shape(format!(
            "{} values do not fill rows of width {p}",
            rows.len()
        )));
    }
    rows.chunks_exact(p).map(|row| model.predict_row(row)).collect()
}

/// Rounds a raw prediction onto the scale: predictions at or below the
/// bottom clip up, at or above the top clip down, and interior values go to
/// the nearer of the two neighboring labels, downward on exact midpoints.
///
/// Total over all inputs; NaN clips to the bottom of the scale.
pub fn round_score(y_hat: f64, range: ScoreRange) -> i32 {
    let min = range.min_score();
    let max = range.max_score();
    if y_hat.is_nan() || y_hat <= f64::from(min) {
        return min;
    }
    if y_hat >= f64::from(max) {
        return max;
    }
    let z1 = y_hat.floor() as i32;
    let z2 = (z1 + 1).min(max);
    if y_hat <= (f64::from(z1) + f64::from(z2)) / 2.0 {
        z1
    } else {
        z2
    }
}

/// Picks the best mean-MSE entry; exact ties go to the larger lambda.
fn pick_best_lambda(scored: &[(f64, f64)]) -> f64 {
    let mut best = scored[0];
    for &(lambda, mse) in &scored[1..] {
        if mse < best.1 || (mse == best.1 && lambda > best.0) {
            best = (lambda, mse);
        }
    }
    best.0
}

/// Selects lambda from a grid by seeded k-fold cross-validation on raw
/// (unrounded) squared error.
pub fn select_lambda_cv(
    x: &FeatureMatrix,
    y: &[f64],
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<f64> {
    let n = x.n();
    if y.len() != n {
        return Err(Error::Shape(format!("{} targets for {n} rows", y.len())));
    }
    if grid.is_empty() {
        return Err(Error::Size("lambda grid must be non-empty".into()));
    }
    if grid.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::Validation(
            "lambda grid entries must be finite and non-negative".into(),
        ));
    }
    if folds < 2 {
        return Err(Error::Size(format!("cross-validation needs at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(Error::Size(format!(
            "cross-validation needs at least one row per fold: {n} rows for {folds} folds"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut seeded_rng(seed));

    let base = n / folds;
    let extra = n % folds;
    let mut bounds = Vec::with_capacity(folds + 1);
    bounds.push(0);
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        bounds.push(bounds[f] + size);
    }

    let mut scored = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let mut squared_error = 0.0;
        for f in 0..folds {
            let held_out = &order[bounds[f]..bounds[f + 1]];
            let train: Vec<usize> = order[..bounds[f]]
                .iter()
                .chain(&order[bounds[f + 1]..])
                .copied()
                .collect();
            let x_train = x.select_rows(&train)?;
            let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let model = fit_ridge(&x_train, &y_train, lambda, ScoreRange::new(0, 1)?)?;
            for &i in held_out {
                let pred = model.predict_row(x.row(i))?;
                squared_error += (pred - y[i]) * (pred - y[i]);
            }
        }
        scored.push((lambda, squared_error / n as f64));
    }
    Ok(pick_best_lambda(&scored))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn range() -> ScoreRange {
        ScoreRange::new(2, 12).unwrap()
    }

    fn matrix(rows: Vec<Vec<f64>>) -> FeatureMatrix {
        let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
        FeatureMatrix::from_rows(ids, rows).unwrap()
    }

    fn raw_options() -> RidgeOptions {
        RidgeOptions {
            standardize: false,
            intercept: false,
        }
    }

    #[test]
    fn closed_form_single_feature_fit() {
        let x = matrix(vec![vec![1.0], vec![2.0]]);
        let model = fit_ridge_with(&x, &[2.0, 4.0], 5.0, range(), raw_options()).unwrap();
        assert_abs_diff_eq!(model.coefficients()[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(model.intercept(), 0.0);

        let interpolating = fit_ridge_with(&x, &[2.0, 4.0], 0.0, range(), raw_options()).unwrap();
        assert_abs_diff_eq!(interpolating.coefficients()[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_lambda_interpolates_through_the_standardized_pipeline() {
        let x = matrix(vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]]);
        let y = [1.0, 2.0, 5.0];
        let model = fit_ridge(&x, &y, 0.0, range()).unwrap();
        let preds = model.predict(&x).unwrap();
        for (pred, target) in preds.iter().zip(&y) {
            assert_abs_diff_eq!(pred, target, epsilon = 1e-8);
        }
    }

    #[test]
    fn huge_lambda_shrinks_to_the_mean() {
        let ds = generate_synthetic(40, 3, &[1.0, -2.0, 0.5], 0.2, range(), 21).unwrap();
        let y = ds.scores_f64();
        let model = fit_ridge(ds.features(), &y, 1e8, range()).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        for c in model.coefficients() {
            assert!(c.abs() < 1e-4, "coefficient {c} not shrunk");
        }
        for pred in model.predict(ds.features()).unwrap() {
            assert_abs_diff_eq!(pred, mean, epsilon = 1e-4);
        }
    }

    #[test]
    fn prediction_at_the_training_centroid_is_the_target_mean() {
        let ds = generate_synthetic(30, 4, &[1.0, 0.5, -1.0, 2.0], 0.4, range(), 3).unwrap();
        let y = ds.scores_f64();
        let model = fit_ridge(ds.features(), &y, 1.0, range()).unwrap();
        let centroid: Vec<f64> = (0..ds.p())
            .map(|j| (0..ds.n()).map(|i| ds.features().row(i)[j]).sum::<f64>() / ds.n() as f64)
            .collect();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert_abs_diff_eq!(model.predict_row(&centroid).unwrap(), mean, epsilon = 1e-10);
    }

    #[test]
    fn fit_validates_inputs() {
        let x = matrix(vec![vec![1.0], vec![2.0]]);
        assert!(matches!(
            fit_ridge(&x, &[1.0], 1.0, range()),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            fit_ridge(&x, &[1.0, f64::NAN], 1.0, range()),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            fit_ridge(&x, &[1.0, 2.0], -0.5, range()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn singular_zero_lambda_fit_reports_a_numeric_error() {
        let x = matrix(vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]);
        let err = fit_ridge_with(&x, &[1.0, 2.0, 3.0], 0.0, range(), raw_options()).unwrap_err();
        assert!(matches!(err, Error::Numeric(msg) if msg.contains("lambda")));
    }

    #[test]
    fn predict_checks_dimensions_and_handles_empty_blocks() {
        let x = matrix(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let model = fit_ridge(&x, &[1.0, 2.0], 1.0, range()).unwrap();
        assert!(matches!(model.predict_row(&[1.0]), Err(Error::Shape(_))));
        assert!(matches!(predict_raw(&model, &[1.0, 2.0, 3.0]), Err(Error::Shape(_))));
        assert_eq!(predict_raw(&model, &[]).unwrap(), Vec::<f64>::new());

        let block = predict_raw(&model, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        let direct = model.predict(&x).unwrap();
        assert_eq!(block, direct);
    }

    #[test]
    fn model_json_round_trips() {
        let x = matrix(vec![vec![1.0, 3.0], vec![2.0, -1.0], vec![0.5, 0.0]]);
        let model = fit_ridge(&x, &[2.0, 4.0, 3.0], 0.7, range()).unwrap();
        let json = model.to_json().unwrap();
        for key in ["lambda", "means", "scales", "coefficients", "intercept", "score_range"] {
            assert!(json.contains(key), "missing {key} in {json}");
        }
        let back = RidgeModel::from_json(&json).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn model_json_rejects_corrupt_parameters() {
        let x = matrix(vec![vec![1.0], vec![2.0]]);
        let model = fit_ridge(&x, &[1.0, 2.0], 1.0, range()).unwrap();
        let json = model.to_json().unwrap();
        let bad = json.replace("\"lambda\": 1.0", "\"lambda\": -3.0");
        assert!(RidgeModel::from_json(&bad).is_err());
    }

    #[test]
    fn round_score_matches_the_worked_cases() {
        let r = range();
        assert_eq!(round_score(2.4, r), 2);
        assert_eq!(round_score(2.5, r), 2);
        assert_eq!(round_score(2.6, r), 3);
        assert_eq!(round_score(13.7, r), 12);
        assert_eq!(round_score(-4.0, r), 2);
        assert_eq!(round_score(f64::NAN, r), 2);
        assert_eq!(round_score(f64::INFINITY, r), 12);
        assert_eq!(round_score(f64::NEG_INFINITY, r), 2);
    }

    #[test]
    fn midpoints_round_down_across_a_wide_scale() {
        let r = ScoreRange::new(0, 60).unwrap();
        for z in 0..60 {
            let midpoint = f64::from(z) + 0.5;
            assert_eq!(round_score(midpoint, r), z);
        }
    }

    #[test]
    fn cv_prefers_interpolation_on_noiseless_linear_data() {
        let ds = generate_synthetic(60, 2, &[1.0, -1.5], 0.0, range(), 8).unwrap();
        let y: Vec<f64> = (0..ds.n())
            .map(|i| {
                let row = ds.features().row(i);
                3.0 * row[0] - 2.0 * row[1] + 1.0
            })
            .collect();
        let picked = select_lambda_cv(ds.features(), &y, &[0.01, 1e6], 5, 4).unwrap();
        assert_eq!(picked, 0.01);
    }

    #[test]
    fn cv_with_one_candidate_returns_it() {
        let ds = generate_synthetic(20, 2, &[1.0, 1.0], 0.3, range(), 2).unwrap();
        let y = ds.scores_f64();
        assert_eq!(select_lambda_cv(ds.features(), &y, &[0.5], 2, 0).unwrap(), 0.5);
    }

    #[test]
    fn cv_is_deterministic_in_the_seed() {
        let ds = generate_synthetic(50, 3, &[1.0, 0.5, 0.0], 1.0, range(), 6).unwrap();
        let y = ds.scores_f64();
        let grid = [0.01, 0.1, 1.0, 10.0, 100.0];
        let a = select_lambda_cv(ds.features(), &y, &grid, 5, 9).unwrap();
        let b = select_lambda_cv(ds.features(), &y, &grid, 5, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cv_validates_grid_and_folds() {
        let ds = generate_synthetic(10, 1, &[1.0], 0.1, range(), 0).unwrap();
        let y = ds.scores_f64();
        assert!(matches!(
            select_lambda_cv(ds.features(), &y, &[], 2, 0),
            Err(Error::Size(_))
        ));
        assert!(matches!(
            select_lambda_cv(ds.features(), &y, &[1.0], 1, 0),
            Err(Error::Size(_))
        ));
        assert!(matches!(
            select_lambda_cv(ds.features(), &y, &[1.0], 11, 0),
            Err(Error::Size(_))
        ));
        assert!(matches!(
            select_lambda_cv(ds.features(), &y, &[-1.0], 2, 0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn lambda_ties_break_toward_the_larger_value() {
        assert_eq!(pick_best_lambda(&[(0.1, 3.0), (1.0, 3.0)]), 1.0);
        assert_eq!(pick_best_lambda(&[(1.0, 3.0), (0.1, 3.0)]), 1.0);
        assert_eq!(pick_best_lambda(&[(0.1, 2.0), (1.0, 3.0)]), 0.1);
    }

    proptest! {
        #[test]
        fn round_score_agrees_with_nearest_label_ties_low(y in -20.0f64..30.0) {
            let r = range();
            let rounded = round_score(y, r);
            let mut best = r.min_score();
            let mut best_gap = (y - f64::from(best)).abs();
            for z in r.min_score()..=r.max_score() {
                let gap = (y - f64::from(z)).abs();
                if gap < best_gap {
                    best = z;
                    best_gap = gap;
                }
            }
            prop_assert_eq!(rounded, best);
        }

        #[test]
        fn round_score_stays_in_range_and_fixes_labels(y in -1e6f64..1e6) {
            let r = ScoreRange::new(-3, 4).unwrap();
            let rounded = round_score(y, r);
            prop_assert!(r.contains(rounded));
        }

        #[test]
        fn integer_labels_round_to_themselves(z in -3i32..=4) {
            let r = ScoreRange::new(-3, 4).unwrap();
            prop_assert_eq!(round_score(f64::from(z), r), z);
        }

        #[test]
        fn coefficient_norm_shrinks_as_lambda_grows(seed in 0u64..50) {
            let ds = generate_synthetic(25, 3, &[1.0, -1.0, 0.5], 0.5, range(), seed).unwrap();
            let y = ds.scores_f64();
            let mut previous = f64::INFINITY;
            for lambda in [0.0, 0.1, 1.0, 10.0, 100.0, 1e4] {
                let model = fit_ridge(ds.features(), &y, lambda, range()).unwrap();
                let norm: f64 = model.coefficients().iter().map(|c| c * c).sum();
                prop_assert!(norm <= previous + 1e-9, "norm {norm} grew past {previous}");
                previous = norm;
            }
        }
    }
}
