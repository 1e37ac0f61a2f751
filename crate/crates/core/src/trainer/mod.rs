//! Training loops, comparison baselines, hyperparameter search and evaluation.

pub mod baseline;
pub mod metrics;
pub mod report;
pub mod search;
pub mod train;

pub use baseline::{ClassicModel, PcaLinReg, PcaSvm};
pub use metrics::{average_baseline, eval_classification, eval_regression, AverageBaseline, ClassReport, ClassScores, RegReport};
pub use report::{classification_table, per_class_table, regression_table, ClassRow, RegRow};
pub use search::{hyper_search, ParamRange, SearchOptions, SearchResult, SearchStage, Trial};
pub use train::{carve_validation, eval_loss, train, write_loss_curve, EpochRecord, Task, TrainConfig, TrainOutcome};
