use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::training::TrainConfig;
use crate::vib::BottleneckMode;
use crate::vit::ViTConfig;

/// Everything a command needs, resolved from defaults, an optional
/// `key = value` file and command-line overrides (later wins).
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ViTConfig,
    pub train: TrainConfig,
    /// Directory in the CIFAR binary layout; `None` uses synthetic data.
    pub data_dir: Option<PathBuf>,
    pub train_limit: Option<usize>,
    pub val_limit: Option<usize>,
    pub synthetic_train: usize,
    pub synthetic_val: usize,
    pub synthetic_seed: u64,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_b: Option<PathBuf>,
    /// Write a checkpoint every this many epochs (0: final only).
    pub checkpoint_every: usize,
    /// Stochastic validation repetitions after each epoch.
    pub val_runs: usize,
    /// Bottleneck mode for `eval` and analyses; `None` means the mode the
    /// checkpoint was trained with (eval) or mean (analyses).
    pub eval_mode: Option<BottleneckMode>,
    /// Validation images used by analyses (0: all).
    pub images: usize,
    /// Image used by `analyze kl-map`.
    pub image_id: usize,
    /// Validation images whose patches form the MI/NMI items.
    pub mi_images: usize,
    pub draws: usize,
    pub threshold: f64,
    pub dim_threshold: f64,
    pub layer: Option<usize>,
    pub head: Option<usize>,
    pub n_values: Vec<usize>,
    pub samples: usize,
    pub fraction: f64,
    pub select_count: usize,
    pub survival_max: f64,
    pub survival_points: usize,
    /// `all` head pairs or only `diagonal` ones for `analyze nmi`.
    pub nmi_pairs: String,
    pub betas: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ViTConfig::desk(),
            train: TrainConfig::default(),
            data_dir: None,
            train_limit: None,
            val_limit: None,
            synthetic_train: 5000,
            synthetic_val: 1000,
            synthetic_seed: 0,
            out_dir: PathBuf::from("runs"),
            checkpoint: None,
            checkpoint_b: None,
            checkpoint_every: 0,
            val_runs: 1,
            eval_mode: None,
            images: 100,
            image_id: 0,
            mi_images: 16,
            draws: 20_000,
            threshold: 1e-2,
            dim_threshold: 1e-2,
            layer: None,
            head: None,
            n_values: vec![4, 16, 64],
            samples: 1024,
            fraction: 0.1,
            select_count: 16,
            survival_max: 2.0,
            survival_points: 41,
            nmi_pairs: "diagonal".into(),
            betas: vec![0.0, 0.1, 10.0],
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse '{value}': {e}")))
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: Display,
{
    match value.trim() {
        "" | "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected a boolean, got '{other}'"))),
    }
}

fn opt_str<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn list_str<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "model" => self.model = ViTConfig::named(v)?,
            "image_size" => self.model.image_size = parse(key, v)?,
            "patch_size" => self.model.patch_size = parse(key, v)?,
            "channels" => self.model.channels = parse(key, v)?,
            "embed_dim" => self.model.embed_dim = parse(key, v)?,
            "depth" => self.model.depth = parse(key, v)?,
            "heads_per_block" => self.model.heads_per_block = parse(key, v)?,
            "mlp_ratio" => self.model.mlp_ratio = parse(key, v)?,
            "num_classes" => self.model.num_classes = parse(key, v)?,
            "latent_dim" => self.model.latent_dim = parse(key, v)?,
            "beta" => self.train.beta = parse(key, v)?,
            "base_lr" => self.train.base_lr = parse(key, v)?,
            "weight_decay" => self.train.weight_decay = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "warmup_epochs" => self.train.warmup_epochs = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "seed" => self.train.seed = parse(key, v)?,
            "eval_runs" => self.train.eval_runs = parse(key, v)?,
            "bottleneck" => self.train.bottleneck = BottleneckMode::parse(v).map_err(|e| Error::Config(e.to_string()))?,
            "augment" => self.train.augment = parse_bool(key, v)?,
            "data_dir" => self.data_dir = parse_opt::<String>(key, v)?.map(PathBuf::from),
            "train_limit" => self.train_limit = parse_opt(key, v)?,
            "val_limit" => self.val_limit = parse_opt(key, v)?,
            "synthetic_train" => self.synthetic_train = parse(key, v)?,
            "synthetic_val" => self.synthetic_val = parse(key, v)?,
            "synthetic_seed" => self.synthetic_seed = parse(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "checkpoint" => self.checkpoint = parse_opt::<String>(key, v)?.map(PathBuf::from),
            "checkpoint_b" => self.checkpoint_b = parse_opt::<String>(key, v)?.map(PathBuf::from),
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "val_runs" => self.val_runs = parse(key, v)?,
            "eval_mode" => {
                self.eval_mode = match v {
                    "" | "none" => None,
                    m => Some(BottleneckMode::parse(m).map_err(|e| Error::Config(e.to_string()))?),
                }
            }
            "images" => self.images = parse(key, v)?,
            "image_id" => self.image_id = parse(key, v)?,
            "mi_images" => self.mi_images = parse(key, v)?,
            "draws" => self.draws = parse(key, v)?,
            "threshold" => self.threshold = parse(key, v)?,
            "dim_threshold" => self.dim_threshold = parse(key, v)?,
            "layer" => self.layer = parse_opt(key, v)?,
            "head" => self.head = parse_opt(key, v)?,
            "n_values" => self.n_values = parse_list(key, v)?,
            "samples" => self.samples = parse(key, v)?,
            "fraction" => self.fraction = parse(key, v)?,
            "select_count" => self.select_count = parse(key, v)?,
            "survival_max" => self.survival_max = parse(key, v)?,
            "survival_points" => self.survival_points = parse(key, v)?,
            "nmi_pairs" => match v {
                "all" | "diagonal" => self.nmi_pairs = v.to_string(),
                other => return Err(Error::Config(format!("nmi_pairs must be all or diagonal, got '{other}'"))),
            },
            "betas" => self.betas = parse_list(key, v)?,
            other => return Err(Error::Config(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file; blank lines and `#` comments are
    /// skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected key = value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// `key=value` overrides from the command line.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{}' is not key=value", o.as_ref())))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn resolve<S: AsRef<str>>(file: Option<&Path>, overrides: &[S]) -> Result<Self> {
        let mut c = RunConfig::default();
        if let Some(f) = file {
            c.apply_file(f)?;
        }
        c.apply_overrides(overrides)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.val_runs == 0 {
            return Err(Error::Config("val_runs must be at least 1".into()));
        }
        if self.mi_images == 0 {
            return Err(Error::Config("mi_images must be at least 1".into()));
        }
        if self.draws == 0 {
            return Err(Error::Config("draws must be at least 1".into()));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Config(format!("fraction {} outside (0, 1]", self.fraction)));
        }
        if self.survival_points < 2 || !(self.survival_max > 0.0) {
            return Err(Error::Config("survival grid needs survival_points >= 2 and survival_max > 0".into()));
        }
        if self.betas.iter().any(|&b| !(b >= 0.0)) {
            return Err(Error::Config("betas must be >= 0".into()));
        }
        Ok(())
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let m = &self.model;
        let t = &self.train;
        vec![
            ("image_size", m.image_size.to_string()),
            ("patch_size", m.patch_size.to_string()),
            ("channels", m.channels.to_string()),
            ("embed_dim", m.embed_dim.to_string()),
            ("depth", m.depth.to_string()),
            ("heads_per_block", m.heads_per_block.to_string()),
            ("mlp_ratio", m.mlp_ratio.to_string()),
            ("num_classes", m.num_classes.to_string()),
            ("latent_dim", m.latent_dim.to_string()),
            ("beta", t.beta.to_string()),
            ("base_lr", t.base_lr.to_string()),
            ("weight_decay", t.weight_decay.to_string()),
            ("epochs", t.epochs.to_string()),
            ("warmup_epochs", t.warmup_epochs.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("seed", t.seed.to_string()),
            ("eval_runs", t.eval_runs.to_string()),
            ("bottleneck", t.bottleneck.as_str().to_string()),
            ("augment", t.augment.to_string()),
            ("data_dir", opt_str(&self.data_dir.as_ref().map(|p| p.display()))),
            ("train_limit", opt_str(&self.train_limit)),
            ("val_limit", opt_str(&self.val_limit)),
            ("synthetic_train", self.synthetic_train.to_string()),
            ("synthetic_val", self.synthetic_val.to_string()),
            ("synthetic_seed", self.synthetic_seed.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("checkpoint", opt_str(&self.checkpoint.as_ref().map(|p| p.display()))),
            ("checkpoint_b", opt_str(&self.checkpoint_b.as_ref().map(|p| p.display()))),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("val_runs", self.val_runs.to_string()),
            ("eval_mode", opt_str(&self.eval_mode.map(|m| m.as_str()))),
            ("images", self.images.to_string()),
            ("image_id", self.image_id.to_string()),
            ("mi_images", self.mi_images.to_string()),
            ("draws", self.draws.to_string()),
            ("threshold", self.threshold.to_string()),
            ("dim_threshold", self.dim_threshold.to_string()),
            ("layer", opt_str(&self.layer)),
            ("head", opt_str(&self.head)),
            ("n_values", list_str(&self.n_values)),
            ("samples", self.samples.to_string()),
            ("fraction", self.fraction.to_string()),
            ("select_count", self.select_count.to_string()),
            ("survival_max", self.survival_max.to_string()),
            ("survival_points", self.survival_points.to_string()),
            ("nmi_pairs", self.nmi_pairs.clone()),
            ("betas", list_str(&self.betas)),
        ]
    }

    /// The `key = value` text form; reparsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.pairs()
                .into_iter()
                .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
                .collect(),
        )
    }
}
