//! Fault isolation: window features, support vector classification and
//! detection metrics.

mod cv;
mod features;
mod metrics;
mod svm;

pub use cv::{
    cross_validate, median_pairwise_distance, search_and_fit, stratified_folds, stratified_split, Candidate,
    CvResult, SearchOptions, TrainingReport,
};
pub use features::{
    channel_statistics, extract_windows, read_dataset, window_features, write_dataset, FeatureMode, LabeledWindow,
    Signals, WindowSpec, STATISTICS,
};
pub use metrics::{harmonic_mean, metrics, ConfusionMatrix, Metrics, CLASS_NAMES, N_CLASSES};
pub use svm::{
    kernel_matrix, solve_dual, train_svm, vote, BinaryMachine, DualSolution, Kernel, SmoOptions, Standardizer,
    SvmModel,
};
