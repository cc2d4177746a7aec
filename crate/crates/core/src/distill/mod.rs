//! Teacher/student training: balanced label budgets, the supervised baseline and the
//! cyclical temperature-scaled distillation loop.

mod io;
mod split;
mod train;

pub use io::{
    dataset_to_csv, load_activations, parse_dataset_csv, read_activations, read_dataset_csv,
    save_activations, write_activations, write_dataset_csv, DatasetFile, ACTIVATION_MAGIC,
    ACTIVATION_VERSION,
};
pub use split::{balanced_subset, class_count, BalancedSubset, SplitDataset};
pub use train::{
    distill_student, extract_activations, train_supervised, train_teacher, train_undistilled,
    Condition, DistillConfig, TrainReport,
};
