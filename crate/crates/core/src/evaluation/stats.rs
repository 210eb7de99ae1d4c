//! Statistics used to compare sampling algorithms: Pearson correlation,
//! the Fisher Z transform, Welch's t-test and percent change over a
//! baseline.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Sample Pearson correlation. Constant input has no defined correlation
/// and is reported as a degenerate error so callers can skip the trial.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "correlation needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Size("correlation needs at least two observations".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Validation("correlation input must be finite".into()));
    }

    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cross = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cross += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::Degenerate("correlation of a constant vector".into()));
    }
    Ok((cross / (var_a * var_b).sqrt()).clamp(-1.0, 1.0))
}

/// atanh(r), with r pulled just inside (-1, 1) first so perfect
/// correlations stay finite.
pub fn fisher_z(r: f64) -> Result<f64> {
    if !r.is_finite() || r.abs() > 1.0 {
        return Err(Error::Validation(format!(
            "correlation must lie in [-1, 1], got {r}"
        )));
    }
    let magnitude = r.abs().min(1.0 - 1e-12).atanh();
    Ok(magnitude.copysign(r))
}

/// Welch's unequal-variance two-sample t-test with Welch-Satterthwaite
/// degrees of freedom. Returns the t statistic and the two-sided p-value.
///
/// Two zero-variance samples with equal means compare as (t=0, p=1); with
/// different means there is no finite statistic and the call reports a
/// degenerate error, leaving the verdict to the caller.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Size(format!(
            "t-test needs at least two observations per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Validation("t-test input must be finite".into()));
    }

    let (mean_a, var_a) = mean_and_variance(a);
    let (mean_b, var_b) = mean_and_variance(b);
    if var_a == 0.0 && var_b == 0.0 {
        if mean_a == mean_b {
            return Ok((0.0, 1.0));
        }
        return Err(Error::Degenerate(
            "zero variance in both samples with different means".into(),
        ));
    }

    let na = a.len() as f64;
    let nb = b.len() as f64;
    let sa = var_a / na;
    let sb = var_b / nb;
    let se = (sa + sb).sqrt();
    let t = (mean_a - mean_b) / se;
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::Numeric(format!("t distribution with df {df}: {e}")))?;
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok((t, p))
}

/// 100 * (value - baseline) / baseline.
pub fn percent_change(value: f64, baseline: f64) -> Result<f64> {
    if !value.is_finite() || !baseline.is_finite() {
        return Err(Error::Validation("percent change input must be finite".into()));
    }
    if baseline == 0.0 {
        return Err(Error::Validation(
            "percent change against a zero baseline is undefined".into(),
        ));
    }
    Ok(100.0 * (value - baseline) / baseline)
}

/// Mean and unbiased sample variance (n - 1 denominator).
fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    (mean, ss / (n - 1.0))
}

/// Mean and sample standard deviation; a single observation has sd 0.
pub(crate) fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    if values.len() < 2 {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        return (mean, 0.0);
    }
    let (mean, var) = mean_and_variance(values);
    (mean, var.sqrt())
}

/// Half-width of the normal-approximation 95% confidence interval of the
/// mean.
pub(crate) fn ci95_half_width(sd: f64, count: usize) -> f64 {
    1.96 * sd / (count as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pearson_matches_a_reference_value() {
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_abs_diff_eq!(r, 0.9819805060619655, epsilon = 1e-12);
    }

    #[test]
    fn pearson_hits_the_exact_endpoints() {
        let a = [0.3, 1.7, -2.0, 5.5];
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert_abs_diff_eq!(pearson(&a, &a).unwrap(), 1.0);
        assert_abs_diff_eq!(pearson(&a, &neg).unwrap(), -1.0);
    }

    #[test]
    fn pearson_rejects_bad_input() {
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(Error::Size(_))));
        assert!(matches!(
            pearson(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            pearson(&[1.0, f64::NAN], &[1.0, 2.0]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn fisher_z_matches_atanh() {
        assert_abs_diff_eq!(fisher_z(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(fisher_z(0.5).unwrap(), 0.5493061443340549, epsilon = 1e-12);
        assert_abs_diff_eq!(
            fisher_z(0.5).unwrap(),
            -fisher_z(-0.5).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn fisher_z_clamps_perfect_correlations() {
        let top = fisher_z(1.0).unwrap();
        assert!(top.is_finite() && top > 10.0);
        assert_abs_diff_eq!(top, -fisher_z(-1.0).unwrap(), epsilon = 1e-9);
        assert!(fisher_z(1.5).is_err());
        assert!(fisher_z(f64::NAN).is_err());
    }

    #[test]
    fn welch_matches_a_reference_value() {
        let (t, p) = welch_t_test(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 5.0, 6.0]).unwrap();
        assert_abs_diff_eq!(t, -1.3416407864998738, epsilon = 1e-12);
        assert_abs_diff_eq!(p, 0.23337045165064577, epsilon = 1e-9);
    }

    #[test]
    fn welch_handles_one_constant_sample() {
        let (t, p) = welch_t_test(&[2.0, 2.0, 2.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_abs_diff_eq!(t, -0.3779644730092274, epsilon = 1e-12);
        assert_abs_diff_eq!(p, 0.7418011102528388, epsilon = 1e-9);
    }

    #[test]
    fn identical_samples_are_indistinguishable() {
        let sample = [0.1, 0.4, 0.9, 1.6];
        let (t, p) = welch_t_test(&sample, &sample).unwrap();
        assert_eq!(t, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn equal_means_with_unequal_variances_stay_insignificant() {
        let (t, p) = welch_t_test(&[-1.0, 0.0, 1.0], &[-10.0, 0.0, 10.0]).unwrap();
        assert_eq!(t, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn distant_means_are_detected() {
        let a: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { -0.5 } else { 0.5 }).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 10.0).collect();
        let (t, p) = welch_t_test(&a, &b).unwrap();
        assert!(t < -50.0);
        assert!(p < 1e-10);
    }

    #[test]
    fn flat_samples_with_different_means_are_degenerate() {
        let (t, p) = welch_t_test(&[3.0, 3.0], &[3.0, 3.0]).unwrap();
        assert_eq!((t, p), (0.0, 1.0));
        assert!(matches!(
            welch_t_test(&[3.0, 3.0], &[4.0, 4.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(welch_t_test(&[1.0], &[1.0, 2.0]), Err(Error::Size(_))));
    }

    #[test]
    fn percent_change_is_plain_arithmetic() {
        assert_abs_diff_eq!(percent_change(0.71, 0.50).unwrap(), 42.0, epsilon = 1e-9);
        assert_abs_diff_eq!(percent_change(0.40, 0.50).unwrap(), -20.0, epsilon = 1e-9);
        assert_eq!(percent_change(0.8, 0.8).unwrap(), 0.0);
        assert!(matches!(
            percent_change(0.5, 0.0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn spread_summaries_match_hand_values() {
        let (mean, sd) = mean_and_sd(&[0.6, 0.8]);
        assert_abs_diff_eq!(mean, 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(sd, 0.02f64.sqrt(), epsilon = 1e-12);
        assert_eq!(mean_and_sd(&[0.9]), (0.9, 0.0));
        assert_abs_diff_eq!(
            ci95_half_width(sd, 2),
            1.96 * 0.02f64.sqrt() / 2.0f64.sqrt(),
            epsilon = 1e-12
        );
    }
}
