//! The run configuration and its text format: `key = value` lines grouped
//! under `[section]` headers, `#` comments. The serializer emits a canonical
//! form (fixed section and key order, shortest round-trip floats) so a config
//! embedded in a checkpoint reproduces its bytes exactly.

use crate::error::{Error, Result};
use crate::frontend::{AugmentPolicy, MelConfig};
use crate::model::Architecture;
use crate::multitask::{FusionConfig, LossWeights, Strategy};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub strategy: Strategy,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub momentum: f64,
    pub restart_period: usize,
    pub restart_mult: f64,
    /// Stop once train accuracy on every emitted task reaches this value.
    pub stop_at_train_acc: Option<f64>,
    pub loss_weights: LossWeights,
    pub gradnorm: bool,
    pub gradnorm_alpha: f64,
    pub gradnorm_lr: f64,
    pub fusion: FusionConfig,
    pub pretrain_split: f64,
    pub arch: Architecture,
    pub augment: AugmentPolicy,
    pub mel: MelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            strategy: Strategy::ExtendedMtl,
            seed: 17,
            epochs: 800,
            batch_size: 24,
            lr_max: 0.001,
            lr_min: 1e-5,
            momentum: 0.9,
            restart_period: 100,
            restart_mult: 1.0,
            stop_at_train_acc: None,
            loss_weights: LossWeights::default(),
            gradnorm: false,
            gradnorm_alpha: 1.5,
            gradnorm_lr: 0.025,
            fusion: FusionConfig::default(),
            pretrain_split: 0.25,
            arch: Architecture::default(),
            augment: AugmentPolicy::default(),
            mel: MelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::validation("epochs and batch_size must be >= 1"));
        }
        if !(self.lr_min < self.lr_max) {
            return Err(Error::validation(format!(
                "lr_min {} must be below lr_max {}",
                self.lr_min, self.lr_max
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::validation(format!(
                "momentum {} outside [0,1)",
                self.momentum
            )));
        }
        if self.restart_period == 0 || self.restart_mult < 1.0 {
            return Err(Error::validation(
                "restart_period >= 1 and restart_mult >= 1 required",
            ));
        }
        if let Some(acc) = self.stop_at_train_acc {
            if !(0.0..=1.0).contains(&acc) {
                return Err(Error::validation("stop_at_train_acc must lie in [0,1]"));
            }
        }
        LossWeights::new(self.loss_weights.w3, self.loss_weights.w10)?;
        if self.gradnorm && !self.strategy.emits_abstract() {
            return Err(Error::validation(
                "gradnorm needs a strategy with both task heads",
            ));
        }
        if self.gradnorm && self.strategy == Strategy::Pretrain {
            return Err(Error::validation(
                "gradnorm cannot be combined with the pretrain schedule; its phases fix the weights",
            ));
        }
        if self.gradnorm && (self.gradnorm_alpha <= 0.0 || self.gradnorm_lr <= 0.0) {
            return Err(Error::validation("gradnorm alpha and lr must be positive"));
        }
        if self.fusion.beta < 0.0 {
            return Err(Error::validation("fusion beta must be non-negative"));
        }
        if self.strategy == Strategy::Pretrain {
            crate::multitask::pretrain_schedule(self.epochs, self.pretrain_split)?;
        }
        if self.arch.widths.is_empty() {
            return Err(Error::validation(
                "architecture needs at least one block width",
            ));
        }
        if self.arch.spatial_kernel % 2 == 0 {
            return Err(Error::validation("spatial attention kernel must be odd"));
        }
        self.mel.validate()?;
        Ok(())
    }

    /// Canonical text form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("[train]\n");
        s.push_str(&format!("strategy = {}\n", self.strategy));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("epochs = {}\n", self.epochs));
        s.push_str(&format!("batch_size = {}\n", self.batch_size));
        s.push_str(&format!("lr_max = {:?}\n", self.lr_max));
        s.push_str(&format!("lr_min = {:?}\n", self.lr_min));
        s.push_str(&format!("momentum = {:?}\n", self.momentum));
        s.push_str(&format!("restart_period = {}\n", self.restart_period));
        s.push_str(&format!("restart_mult = {:?}\n", self.restart_mult));
        if let Some(acc) = self.stop_at_train_acc {
            s.push_str(&format!("stop_at_train_acc = {acc:?}\n"));
        }
        s.push_str("[loss]\n");
        s.push_str(&format!("w3 = {:?}\n", self.loss_weights.w3));
        s.push_str(&format!("w10 = {:?}\n", self.loss_weights.w10));
        s.push_str("[gradnorm]\n");
        s.push_str(&format!("enabled = {}\n", self.gradnorm));
        s.push_str(&format!("alpha = {:?}\n", self.gradnorm_alpha));
        s.push_str(&format!("lr = {:?}\n", self.gradnorm_lr));
        s.push_str("[fusion]\n");
        s.push_str(&format!("enabled = {}\n", self.fusion.enabled));
        s.push_str(&format!("beta = {:?}\n", self.fusion.beta));
        s.push_str("[pretrain]\n");
        s.push_str(&format!("split = {:?}\n", self.pretrain_split));
        s.push_str("[arch]\n");
        let widths: Vec<String> = self.arch.widths.iter().map(|w| w.to_string()).collect();
        s.push_str(&format!("widths = {}\n", widths.join(",")));
        s.push_str(&format!(
            "pool = {},{}\n",
            self.arch.pool.0, self.arch.pool.1
        ));
        s.push_str(&format!("cbam_reduction = {}\n", self.arch.cbam_reduction));
        s.push_str(&format!("spatial_kernel = {}\n", self.arch.spatial_kernel));
        s.push_str("[augment]\n");
        s.push_str(&format!("mixup = {}\n", self.augment.mixup));
        s.push_str(&format!("mixup_alpha = {:?}\n", self.augment.mixup_alpha));
        s.push_str(&format!("specaugment = {}\n", self.augment.specaugment));
        s.push_str(&format!("freq_masks = {}\n", self.augment.n_freq_masks));
        s.push_str(&format!("freq_mask_max = {}\n", self.augment.freq_mask_max));
        s.push_str(&format!("time_masks = {}\n", self.augment.n_time_masks));
        s.push_str(&format!("time_mask_max = {}\n", self.augment.time_mask_max));
        s.push_str("[mel]\n");
        s.push_str(&format!("sample_rate = {}\n", self.mel.sample_rate));
        s.push_str(&format!("n_fft = {}\n", self.mel.n_fft));
        s.push_str(&format!("win_length = {}\n", self.mel.win_length));
        s.push_str(&format!("hop_length = {}\n", self.mel.hop_length));
        s.push_str(&format!("n_mels = {}\n", self.mel.n_mels));
        s.push_str(&format!("fmin = {:?}\n", self.mel.fmin));
        s.push_str(&format!("fmax = {:?}\n", self.mel.fmax));
        s.push_str(&format!("power = {:?}\n", self.mel.power));
        s
    }

    /// Parse the text form. Starts from defaults; every `key = value` line
    /// overrides one field. Unknown sections or keys are errors.
    pub fn from_text(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        let mut section = String::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                match section.as_str() {
                    "train" | "loss" | "gradnorm" | "fusion" | "pretrain" | "arch" | "augment"
                    | "mel" => {}
                    other => {
                        return Err(Error::parse(format!(
                            "line {}: unknown section [{other}]",
                            ln + 1
                        )));
                    }
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(format!(
                    "line {}: expected `key = value`, found `{line}`",
                    ln + 1
                ))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(&section, key, value)
                .map_err(|e| Error::parse(format!("line {}: {e}", ln + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path.as_ref())?;
        TrainConfig::from_text(&text)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(value: &str, key: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse::<T>()
                .map_err(|e| Error::parse(format!("{key}: {e}")))
        }
        fn flag(value: &str, key: &str) -> Result<bool> {
            match value {
                "true" => Ok(true),
                "false" => Ok(false),
                other => Err(Error::parse(format!(
                    "{key}: expected true/false, got `{other}`"
                ))),
            }
        }
        fn pair(value: &str, key: &str) -> Result<(usize, usize)> {
            let (a, b) = value
                .split_once(',')
                .ok_or_else(|| Error::parse(format!("{key}: expected `a,b`")))?;
            Ok((num(a.trim(), key)?, num(b.trim(), key)?))
        }
        match (section, key) {
            ("train", "strategy") => self.strategy = value.parse()?,
            ("train", "seed") => self.seed = num(value, key)?,
            ("train", "epochs") => self.epochs = num(value, key)?,
            ("train", "batch_size") => self.batch_size = num(value, key)?,
            ("train", "lr_max") => self.lr_max = num(value, key)?,
            ("train", "lr_min") => self.lr_min = num(value, key)?,
            ("train", "momentum") => self.momentum = num(value, key)?,
            ("train", "restart_period") => self.restart_period = num(value, key)?,
            ("train", "restart_mult") => self.restart_mult = num(value, key)?,
            ("train", "stop_at_train_acc") => {
                self.stop_at_train_acc = if value.is_empty() {
                    None
                } else {
                    Some(num(value, key)?)
                }
            }
            ("loss", "w3") => self.loss_weights.w3 = num(value, key)?,
            ("loss", "w10") => self.loss_weights.w10 = num(value, key)?,
            ("gradnorm", "enabled") => self.gradnorm = flag(value, key)?,
            ("gradnorm", "alpha") => self.gradnorm_alpha = num(value, key)?,
            ("gradnorm", "lr") => self.gradnorm_lr = num(value, key)?,
            ("fusion", "enabled") => self.fusion.enabled = flag(value, key)?,
            ("fusion", "beta") => self.fusion.beta = num(value, key)?,
            ("pretrain", "split") => self.pretrain_split = num(value, key)?,
            ("arch", "widths") => {
                self.arch.widths = value
                    .split(',')
                    .map(|w| num(w.trim(), key))
                    .collect::<Result<Vec<usize>>>()?;
            }
            ("arch", "pool") => self.arch.pool = pair(value, key)?,
            ("arch", "cbam_reduction") => self.arch.cbam_reduction = num(value, key)?,
            ("arch", "spatial_kernel") => self.arch.spatial_kernel = num(value, key)?,
            ("augment", "mixup") => self.augment.mixup = flag(value, key)?,
            ("augment", "mixup_alpha") => self.augment.mixup_alpha = num(value, key)?,
            ("augment", "specaugment") => self.augment.specaugment = flag(value, key)?,
            ("augment", "freq_masks") => self.augment.n_freq_masks = num(value, key)?,
            ("augment", "freq_mask_max") => self.augment.freq_mask_max = num(value, key)?,
            ("augment", "time_masks") => self.augment.n_time_masks = num(value, key)?,
            ("augment", "time_mask_max") => self.augment.time_mask_max = num(value, key)?,
            ("mel", "sample_rate") => self.mel.sample_rate = num(value, key)?,
            ("mel", "n_fft") => self.mel.n_fft = num(value, key)?,
            ("mel", "win_length") => self.mel.win_length = num(value, key)?,
            ("mel", "hop_length") => self.mel.hop_length = num(value, key)?,
            ("mel", "n_mels") => self.mel.n_mels = num(value, key)?,
            ("mel", "fmin") => self.mel.fmin = num(value, key)?,
            ("mel", "fmax") => self.mel.fmax = num(value, key)?,
            ("mel", "power") => self.mel.power = num(value, key)?,
            (sec, k) => {
                return Err(Error::parse(format!(
                    "unknown key `{k}` in section [{sec}]"
                )));
            }
        }
        Ok(())
    }
}
