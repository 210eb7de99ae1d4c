//! Pool-based training-set selection for scored-response regression.
//!
//! Given a candidate pool of feature rows with integer scores, this crate
//! picks informative subsets (exchange-optimized designs, Kennard-Stone
//! coverage, k-means representatives or plain random draws), fits ridge
//! models on the selections, and replays the whole resampling protocol that
//! compares the samplers against the random baseline.
//!
//! Everything stochastic takes an explicit seed and is deterministic given
//! one, including the parallel simulation harness.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod regression;
pub mod sampling;
pub mod seed;

pub use dataset::{
    generate_synthetic, half_sample, load_dataset, read_manifest, write_dataset, write_manifest,
    FeatureMatrix, LabeledDataset, ScoreRange, SetManifest, Task,
};
pub use error::{Error, Result};
pub use evaluation::{
    fisher_z, format_diagnostics, format_percent_table, pearson, percent_change,
    persistence_curve, read_trials, run_simulation, summarize, welch_t_test, write_persistence,
    write_plot_data, write_summary, write_trials, Algorithm, SimulationPlan, SummaryRow,
    TrialResult,
};
pub use regression::{
    fit_ridge, fit_ridge_with, predict_raw, round_score, select_lambda_cv, RidgeModel,
    RidgeOptions, Standardizer,
};
pub use sampling::{
    design_criterion, fedorov_augment, fedorov_exchange, information_matrix, kennard_stone,
    kmeans_fit, kmeans_sample, mahalanobis_distance, persistence, pool_covariance, random_sample,
    Criterion, Design, DesignFile, DistanceMetric, InformationMatrix, KMeansFit, SamplerConfig,
};
pub use seed::derive_seed;
