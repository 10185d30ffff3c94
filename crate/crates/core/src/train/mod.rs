//! Splitting, augmentation, the pre-training and fine-tuning loops, MAE
//! evaluation, the ablation runner and gradient verification.

pub mod ablation;
pub mod adam;
pub mod augment;
pub mod data;
pub mod evaluate;
pub mod gradcheck;
pub mod split;
pub mod synthetic;
pub mod trainer;

pub use ablation::{run_ablation_matrix, AblationRow, DatasetSplits};
pub use adam::{Adam, AdamConfig};
pub use augment::{augment, FlipDraw};
pub use data::{curve_values, merge_labels, Dataset, Labels, RungValues, Sample};
pub use evaluate::{evaluate, mae, neumaier_sum, PredictionRow, SplitMetrics};
pub use gradcheck::{gradient_check_suite, GradModule, GradcheckConfig, GradcheckReport, ModuleReport};
pub use split::{split_dataset, Split, SplitSpec};
pub use synthetic::{SyntheticData, SyntheticSpec};
pub use trainer::{batch_gradient, fit, finetune, pretrain, warm_start, EvalLog, LrSchedule, Precision, StepLog, TrainConfig, TrainOutcome, WarmStart};
