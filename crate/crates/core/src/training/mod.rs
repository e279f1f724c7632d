//! Bottlenecked training: the loss, AdamW with selective decay, the
//! warmup-cosine schedule, crop/flip augmentation, CIFAR-format data,
//! checkpoints and run logs.

mod augment;
mod checkpoint;
mod config;
mod data;
mod loss;
mod optim;
mod runlog;
mod schedule;
pub mod synthetic;
mod trainer;

pub use augment::{apply_crop, augment_train, augment_with, sample_crop, AugmentOverrides, CropSpec, CROP_ASPECT, CROP_SCALE};
pub use checkpoint::{Checkpoint, CheckpointConfig};
pub use config::TrainConfig;
pub use data::{
    decode_cifar, encode_cifar, load_cifar10, load_cifar10_subset, read_cifar_file, ChannelStats, CifarRecords,
    CifarSplits, Dataset, Split, CIFAR_CLASSES, CIFAR_PIXELS, CIFAR_RECORD, CIFAR_TEST_FILE, CIFAR_TRAIN_FILES,
};
pub use loss::{batch_mean, cross_entropy, vib_loss, LossParts};
pub use optim::{adamw_step, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use runlog::{read_run_log, run_log_csv, write_run_log, EpochRecord};
pub use schedule::lr_schedule;
pub use trainer::{evaluate_stochastic, keyed_rng, steps_per_epoch, train_epoch, EpochMetrics, EvalMetrics, RngDomain, Trainer};
