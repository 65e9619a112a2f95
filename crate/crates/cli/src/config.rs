//! Run configuration: defaults, `key = value` files and flag overrides.

use std::path::Path;

use serde::Serialize;

use sedkit_core::augment::{ScaleMode, ScaleScheme, TransformId, TransportMode};
use sedkit_core::dataset::{Composition, CorpusSizes};
use sedkit_core::model::{Activation, ModelConfig, PoolingHead};
use sedkit_core::semisup::{LrSchedule, Method, TrainConfig};
use sedkit_core::signal::FeatureConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 16 kHz, 1024/256 STFT, 64 mels, 8 s clips, two conv blocks.
    Desk,
    /// 2048/255 STFT, 128 mels, 10 s clips, seven conv blocks.
    Full,
}

/// Every tunable of a run. Serialized verbatim into each output artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub profile: Profile,
    pub n_classes: usize,
    pub corpus: CorpusSizes,
    pub method: Method,
    pub activation: Activation,
    pub pooling_head: PoolingHead,
    pub channels: Vec<usize>,
    pub recurrent_hidden: usize,
    pub scale_mode: ScaleMode,
    pub global_scale: u8,
    pub transforms: Vec<TransformId>,
    pub views: usize,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub steps_per_epoch: Option<usize>,
    pub batch: Composition,
    pub ema_alpha: f64,
    pub ema_warmup: bool,
    pub inherit_labels: bool,
    pub median_s: f64,
    pub val_every: usize,
    pub checkpoint_every: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            profile: Profile::Desk,
            n_classes: 4,
            corpus: CorpusSizes::default(),
            method: Method::MtCrRda,
            activation: Activation::Glu,
            pooling_head: PoolingHead::Attention,
            channels: vec![8, 16],
            recurrent_hidden: 32,
            scale_mode: ScaleMode::RandomUpperBound,
            global_scale: 5,
            transforms: TransformId::ALL.to_vec(),
            views: 1,
            seed: 1,
            seeds: vec![1, 2, 3],
            epochs: 40,
            steps_per_epoch: None,
            batch: Composition::desk(),
            ema_alpha: 0.999,
            ema_warmup: true,
            inherit_labels: false,
            median_s: 0.45,
            val_every: 5,
            checkpoint_every: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "profile",
    "n_classes",
    "corpus",
    "method",
    "activation",
    "pooling_head",
    "channels",
    "recurrent_hidden",
    "scale_mode",
    "global_scale",
    "transforms",
    "views",
    "seed",
    "seeds",
    "epochs",
    "steps_per_epoch",
    "batch",
    "ema_alpha",
    "ema_warmup",
    "inherit_labels",
    "median_s",
    "val_every",
    "checkpoint_every",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| CliError::Config(format!("{key}: cannot parse `{value}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected a boolean, got `{value}`"))),
    }
}

fn parse_optional(key: &str, value: &str) -> Result<Option<usize>, CliError> {
    match value.trim() {
        "auto" | "none" | "" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let mut c = Self::default();
        c.set_profile(profile);
        c
    }

    fn set_profile(&mut self, profile: Profile) {
        self.profile = profile;
        match profile {
            Profile::Desk => {
                self.channels = vec![8, 16];
                self.batch = Composition::desk();
                self.epochs = 40;
            }
            Profile::Full => {
                self.channels = vec![16, 32, 64, 128, 128, 128, 128];
                self.batch = Composition::full_scale();
                self.epochs = 200;
            }
        }
    }

    /// Sets one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key.trim() {
            "profile" => self.set_profile(match v {
                "desk" => Profile::Desk,
                "full" => Profile::Full,
                _ => return Err(CliError::Config(format!("profile: expected desk or full, got `{v}`"))),
            }),
            "n_classes" => self.n_classes = parse(key, v)?,
            "corpus" => {
                let n: Vec<usize> = parse_list(key, v)?;
                let [s, w, u, val, test] = n[..] else {
                    return Err(CliError::Config("corpus: expected strong,weak,unlabeled,validation,test".into()));
                };
                self.corpus = CorpusSizes { train_strong: s, train_weak: w, train_unlabeled: u, validation: val, test };
            }
            "method" => self.method = v.parse().map_err(|e| CliError::Config(format!("{e}")))?,
            "activation" => self.activation = v.parse().map_err(|e| CliError::Config(format!("{e}")))?,
            "pooling_head" => self.pooling_head = v.parse().map_err(|e| CliError::Config(format!("{e}")))?,
            "channels" => self.channels = parse_list(key, v)?,
            "recurrent_hidden" => self.recurrent_hidden = parse(key, v)?,
            "scale_mode" => {
                self.scale_mode = match v {
                    "fixed" => ScaleMode::Fixed,
                    "random" => ScaleMode::RandomUpperBound,
                    _ => return Err(CliError::Config(format!("scale_mode: expected fixed or random, got `{v}`"))),
                }
            }
            "global_scale" => self.global_scale = parse(key, v)?,
            "transforms" => {
                self.transforms = if v == "all" {
                    TransformId::ALL.to_vec()
                } else {
                    v.split(',')
                        .map(|s| s.trim().parse::<TransformId>().map_err(|e| CliError::Config(format!("transforms: {e}"))))
                        .collect::<Result<_, _>>()?
                }
            }
            "views" => self.views = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "seeds" => self.seeds = parse_list(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "steps_per_epoch" => self.steps_per_epoch = parse_optional(key, v)?,
            "batch" => {
                let n: Vec<usize> = parse_list(key, v)?;
                let [s, w, u] = n[..] else {
                    return Err(CliError::Config("batch: expected strong,weak,unlabeled".into()));
                };
                self.batch = Composition::new(s, w, u);
            }
            "ema_alpha" => self.ema_alpha = parse(key, v)?,
            "ema_warmup" => self.ema_warmup = parse_bool(key, v)?,
            "inherit_labels" => self.inherit_labels = parse_bool(key, v)?,
            "median_s" => self.median_s = parse(key, v)?,
            "val_every" => self.val_every = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse_optional(key, v)?,
            other => return Err(CliError::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // The profile resets dependent defaults, so it is applied before the other keys.
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{}:{}: expected key = value", path.display(), i + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        self.apply_pairs(&pairs)
    }

    pub fn apply_pairs(&mut self, pairs: &[(String, String)]) -> Result<(), CliError> {
        for (k, v) in pairs.iter().filter(|(k, _)| k == "profile") {
            self.set(k, v)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "profile") {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if !(1..=10).contains(&self.global_scale) {
            return bad("global_scale must lie in 1..=10");
        }
        if self.transforms.is_empty() {
            return bad("transforms must not be empty");
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.n_classes == 0 || self.n_classes > 16 {
            return bad("n_classes must lie in 1..=16");
        }
        if self.batch.total() == 0 {
            return bad("batch must contain at least one clip");
        }
        self.model(0.0, 1.0).validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn features(&self) -> FeatureConfig {
        match self.profile {
            Profile::Desk => FeatureConfig::desk(),
            Profile::Full => FeatureConfig::full_scale(),
        }
    }

    pub fn model(&self, input_mean: f64, input_std: f64) -> ModelConfig {
        let features = self.features();
        let pools = match self.profile {
            Profile::Desk => vec![(2, 2); self.channels.len()],
            // Time pooling only in the first two blocks; frequency pooling in every block.
            Profile::Full => (0..self.channels.len()).map(|i| (if i < 2 { 2 } else { 1 }, 2)).collect(),
        };
        ModelConfig {
            n_mels: features.n_mels,
            n_classes: self.n_classes,
            channels: self.channels.clone(),
            pools,
            activation: self.activation,
            recurrent_hidden: self.recurrent_hidden,
            pooling_head: self.pooling_head,
            input_mean,
            input_std,
        }
    }

    pub fn pool_factor(&self) -> usize {
        self.model(0.0, 1.0).pool_factor()
    }

    pub fn transport(&self) -> TransportMode {
        if self.inherit_labels {
            TransportMode::Inherit
        } else {
            TransportMode::Transport
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let mut t = TrainConfig::desk(self.method, seed);
        t.epochs = self.epochs;
        t.lr = LrSchedule::scaled(self.epochs);
        t.rampup_end = 50.0 * self.epochs as f64 / 200.0;
        t.steps_per_epoch = self.steps_per_epoch;
        t.composition = self.batch;
        t.ema_alpha = self.ema_alpha;
        t.ema_warmup = self.ema_warmup;
        t.views_per_clip = self.views;
        t.scale = ScaleScheme { mode: self.scale_mode, global_scale: self.global_scale };
        t.transforms = self.transforms.clone();
        t.transport = self.transport();
        t.median_s = self.median_s;
        t.val_every = self.val_every;
        t.checkpoint_every = self.checkpoint_every;
        t
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
