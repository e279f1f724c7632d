use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trainer::{EpochMetrics, EvalMetrics};
use crate::error::Result;

/// One row of the per-epoch run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_ce: f64,
    pub train_kl: f64,
    pub train_acc: f64,
    pub val_acc_mean: f64,
    pub val_acc_std: f64,
    pub val_kl_per_image: f64,
}

impl EpochRecord {
    /// Epochs are reported one-based.
    pub fn new(train: &EpochMetrics, val: &EvalMetrics) -> Self {
        EpochRecord {
            epoch: train.epoch + 1,
            lr: train.lr,
            train_ce: train.train_ce,
            train_kl: train.train_kl,
            train_acc: train.train_acc,
            val_acc_mean: val.acc_mean,
            val_acc_std: val.acc_std,
            val_kl_per_image: val.kl_per_image,
        }
    }
}

pub fn run_log_csv(records: &[EpochRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if records.is_empty() {
        w.write_record([
            "epoch",
            "lr",
            "train_ce",
            "train_kl",
            "train_acc",
            "val_acc_mean",
            "val_acc_std",
            "val_kl_per_image",
        ])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn write_run_log(path: &Path, records: &[EpochRecord]) -> Result<()> {
    std::fs::write(path, run_log_csv(records)?)?;
    Ok(())
}

pub fn read_run_log(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}
