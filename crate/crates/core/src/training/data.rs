use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compute::Tensor;
use crate::error::{Error, Result};

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_CHANNELS: usize = 3;
pub const CIFAR_PIXELS: usize = CIFAR_CHANNELS * CIFAR_SIDE * CIFAR_SIDE;
pub const CIFAR_RECORD: usize = 1 + CIFAR_PIXELS;
pub const CIFAR_CLASSES: usize = 10;
pub const CIFAR_TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const CIFAR_TEST_FILE: &str = "test_batch.bin";

/// Raw 8-bit records: label byte then R, G, B planes, each 32x32 row-major.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CifarRecords {
    pub labels: Vec<u8>,
    pub pixels: Vec<u8>,
}

impl CifarRecords {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, label: u8, pixels: &[u8]) -> Result<()> {
        if pixels.len() != CIFAR_PIXELS {
            return Err(Error::Format(format!("record needs {CIFAR_PIXELS} pixel bytes, got {}", pixels.len())));
        }
        if label as usize >= CIFAR_CLASSES {
            return Err(Error::Format(format!("label byte {label} out of range 0..=9")));
        }
        self.labels.push(label);
        self.pixels.extend_from_slice(pixels);
        Ok(())
    }

    pub fn record(&self, i: usize) -> &[u8] {
        &self.pixels[i * CIFAR_PIXELS..(i + 1) * CIFAR_PIXELS]
    }

    pub fn extend(&mut self, other: &CifarRecords) {
        self.labels.extend_from_slice(&other.labels);
        self.pixels.extend_from_slice(&other.pixels);
    }

    /// First `n` records.
    pub fn truncate(&mut self, n: usize) {
        if n < self.len() {
            self.labels.truncate(n);
            self.pixels.truncate(n * CIFAR_PIXELS);
        }
    }
}

/// Parses a whole batch file.
pub fn decode_cifar(bytes: &[u8]) -> Result<CifarRecords> {
    if bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::Format(format!(
            "file size {} is not a multiple of the {CIFAR_RECORD}-byte record",
            bytes.len()
        )));
    }
    let mut out = CifarRecords {
        labels: Vec::with_capacity(bytes.len() / CIFAR_RECORD),
        pixels: Vec::with_capacity(bytes.len() / CIFAR_RECORD * CIFAR_PIXELS),
    };
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        out.push(rec[0], &rec[1..])
            .map_err(|e| Error::Format(format!("record {i}: {e}")))?;
    }
    Ok(out)
}

pub fn encode_cifar(records: &CifarRecords) -> Vec<u8> {
    let mut out = Vec::with_capacity(records.len() * CIFAR_RECORD);
    for i in 0..records.len() {
        out.push(records.labels[i]);
        out.extend_from_slice(records.record(i));
    }
    out
}

/// Per-channel mean and standard deviation of pixel values scaled to [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn identity(channels: usize) -> Self {
        ChannelStats {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn from_records(records: &CifarRecords) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Usage("cannot compute statistics of an empty split".into()));
        }
        let plane = CIFAR_SIDE * CIFAR_SIDE;
        let mut mean = vec![0.0; CIFAR_CHANNELS];
        let mut std = vec![0.0; CIFAR_CHANNELS];
        for c in 0..CIFAR_CHANNELS {
            let (mut s, mut s2) = (0.0f64, 0.0f64);
            for i in 0..records.len() {
                for &b in &records.record(i)[c * plane..(c + 1) * plane] {
                    let x = b as f64 / 255.0;
                    s += x;
                    s2 += x * x;
                }
            }
            let n = (records.len() * plane) as f64;
            mean[c] = s / n;
            std[c] = (s2 / n - mean[c] * mean[c]).max(0.0).sqrt().max(1e-12);
        }
        Ok(ChannelStats { mean, std })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Validation,
}

/// Normalised images `[C, H, W]` with class labels.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub images: Vec<Tensor<f32>>,
    pub labels: Vec<usize>,
    pub split: Split,
    pub num_classes: usize,
    pub stats: ChannelStats,
    /// sha256 of the source bytes, hex.
    pub sha256: String,
}

impl Dataset {
    pub fn new(images: Vec<Tensor<f32>>, labels: Vec<usize>, split: Split, num_classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Usage(format!("{} images but {} labels", images.len(), labels.len())));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Usage(format!("label {l} outside 0..{num_classes}")));
        }
        let channels = images.first().map_or(0, |im| im.shape()[0]);
        let mut h = Sha256::new();
        for (im, &l) in images.iter().zip(&labels) {
            h.update((l as u64).to_le_bytes());
            for v in im.data() {
                h.update(v.to_le_bytes());
            }
        }
        Ok(Dataset {
            images,
            labels,
            split,
            num_classes,
            stats: ChannelStats::identity(channels),
            sha256: hex(&h.finalize()),
        })
    }

    /// Scales bytes to [0, 1] and normalises each channel with `stats`.
    pub fn from_records(records: &CifarRecords, stats: &ChannelStats, split: Split) -> Result<Self> {
        let plane = CIFAR_SIDE * CIFAR_SIDE;
        let images = (0..records.len())
            .map(|i| {
                let data = records
                    .record(i)
                    .iter()
                    .enumerate()
                    .map(|(j, &b)| {
                        let c = j / plane;
                        ((b as f64 / 255.0 - stats.mean[c]) / stats.std[c]) as f32
                    })
                    .collect();
                Tensor::new(vec![CIFAR_CHANNELS, CIFAR_SIDE, CIFAR_SIDE], data)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            images,
            labels: records.labels.iter().map(|&l| l as usize).collect(),
            split,
            num_classes: CIFAR_CLASSES,
            stats: stats.clone(),
            sha256: hex(&Sha256::digest(encode_cifar(records))),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn read_cifar_file(path: &Path) -> Result<CifarRecords> {
    let bytes = fs::read(path).map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
    decode_cifar(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Training and validation splits of one dataset directory.
#[derive(Clone, Debug)]
pub struct CifarSplits {
    pub train: Dataset,
    pub val: Dataset,
}

/// Loads `data_batch_*.bin` (those present) as the training split and
/// `test_batch.bin` as validation, optionally keeping only the first records
/// of each. Both are normalised by the kept training records' statistics.
pub fn load_cifar10_subset(dir: &Path, train_limit: Option<usize>, val_limit: Option<usize>) -> Result<CifarSplits> {
    let train_paths: Vec<PathBuf> = CIFAR_TRAIN_FILES
        .iter()
        .map(|f| dir.join(f))
        .filter(|p| p.exists())
        .collect();
    if train_paths.is_empty() {
        return Err(Error::Usage(format!("no data_batch_*.bin files in {}", dir.display())));
    }
    let mut train = CifarRecords::default();
    for p in &train_paths {
        train.extend(&read_cifar_file(p)?);
        if train_limit.is_some_and(|n| train.len() >= n) {
            break;
        }
    }
    let mut val = read_cifar_file(&dir.join(CIFAR_TEST_FILE))?;
    if let Some(n) = train_limit {
        train.truncate(n);
    }
    if let Some(n) = val_limit {
        val.truncate(n);
    }
    let stats = ChannelStats::from_records(&train)?;
    Ok(CifarSplits {
        train: Dataset::from_records(&train, &stats, Split::Train)?,
        val: Dataset::from_records(&val, &stats, Split::Validation)?,
    })
}

pub fn load_cifar10(dir: &Path) -> Result<CifarSplits> {
    load_cifar10_subset(dir, None, None)
}
