//! Run configuration: a flat TOML file of typed keys.
//!
//! Every key is optional and falls back to the desk default. Unknown keys are
//! rejected. The resolved configuration, with every default written out, is
//! what manifests record and hash.

use std::path::{Path, PathBuf};

use kscl::data::{AugmentationConfig, DatasetSpec};
use kscl::trainer::{ProbeConfig, TrainConfig};
use kscl::Error;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    pub num_classes: usize,
    pub instances_per_class: usize,
    pub feature_dim: usize,
    pub class_separation: f64,
    /// Binary dataset to train and probe on instead of generating one.
    pub dataset_path: Option<PathBuf>,

    pub k_shots: usize,
    pub noise_sigma: f64,
    pub mask_fraction: f64,
    pub scale_jitter: [f64; 2],
    pub rotation_pairs: usize,

    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub cosine_decay: bool,
    pub weight_decay: f64,
    pub sgd_momentum: f64,
    pub key_momentum: f64,
    pub rho: f64,
    pub rank_epsilon: f64,
    pub temperature: f64,
    pub queue_capacity: usize,
    /// Record wall-clock seconds per epoch. The only nondeterministic output.
    pub timing: bool,

    pub probe_epochs: usize,
    pub probe_lr: f64,
    pub probe_train_fraction: f64,

    pub sweep_k: Vec<usize>,
    pub sweep_rho: Vec<f64>,
    pub sweep_seeds: Vec<u64>,

    /// Input checkpoint for `probe` and `basis-viz`.
    pub checkpoint: Option<PathBuf>,
    pub instance_ids: Vec<u64>,
    /// Augmentation round used to draw the K views in `basis-viz`.
    pub basis_round: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::desk(0);
        let p = ProbeConfig::new(0);
        Self {
            seed: 0,
            num_classes: t.dataset.num_classes,
            instances_per_class: t.dataset.instances_per_class,
            feature_dim: t.dataset.feature_dim,
            class_separation: t.dataset.class_separation,
            dataset_path: None,
            k_shots: t.augmentation.k_shots,
            noise_sigma: t.augmentation.noise_sigma,
            mask_fraction: t.augmentation.mask_fraction,
            scale_jitter: [t.augmentation.scale_jitter.0, t.augmentation.scale_jitter.1],
            rotation_pairs: t.augmentation.rotation_pairs,
            hidden: t.hidden,
            embed_dim: t.embed_dim,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.base_lr,
            cosine_decay: t.cosine_decay,
            weight_decay: t.weight_decay,
            sgd_momentum: t.sgd_momentum,
            key_momentum: t.key_momentum,
            rho: t.rho,
            rank_epsilon: t.rank_epsilon,
            temperature: t.temperature,
            queue_capacity: t.queue_capacity,
            timing: t.record_timing,
            probe_epochs: p.epochs,
            probe_lr: p.lr,
            probe_train_fraction: p.train_fraction,
            sweep_k: vec![1, 3, 5],
            sweep_rho: vec![0.4, 0.9],
            sweep_seeds: vec![0, 1, 2, 3, 4],
            checkpoint: None,
            instance_ids: vec![0],
            basis_round: 0,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig {
            key: "config",
            reason: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidConfig {
            key: "config",
            reason: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    /// Canonical TOML of the resolved configuration.
    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Git-style content hash: SHA-256 of `"blob <len>\0"` followed by the
    /// canonical text.
    pub fn content_hash(&self) -> String {
        let body = self.to_canonical();
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", body.len()).as_bytes());
        h.update(body.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        self.train_config().dataset
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut t = TrainConfig::desk(self.seed);
        t.dataset.num_classes = self.num_classes;
        t.dataset.instances_per_class = self.instances_per_class;
        t.dataset.feature_dim = self.feature_dim;
        t.dataset.class_separation = self.class_separation;
        t.augmentation = AugmentationConfig {
            k_shots: self.k_shots,
            noise_sigma: self.noise_sigma,
            mask_fraction: self.mask_fraction,
            scale_jitter: (self.scale_jitter[0], self.scale_jitter[1]),
            rotation_pairs: self.rotation_pairs,
            seed: t.augmentation.seed,
        };
        t.hidden = self.hidden.clone();
        t.embed_dim = self.embed_dim;
        t.epochs = self.epochs;
        t.batch_size = self.batch_size;
        t.base_lr = self.lr;
        t.cosine_decay = self.cosine_decay;
        t.weight_decay = self.weight_decay;
        t.sgd_momentum = self.sgd_momentum;
        t.key_momentum = self.key_momentum;
        t.rho = self.rho;
        t.rank_epsilon = self.rank_epsilon;
        t.temperature = self.temperature;
        t.queue_capacity = self.queue_capacity;
        t.record_timing = self.timing;
        t
    }

    pub fn probe_config(&self) -> ProbeConfig {
        let mut p = ProbeConfig::new(kscl::rng::derive_seed(self.seed, "probe"));
        p.epochs = self.probe_epochs;
        p.lr = self.probe_lr;
        p.train_fraction = self.probe_train_fraction;
        p
    }

    /// Checks every key, beyond what the trainer itself validates.
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |key, reason: String| Err(Error::InvalidConfig { key, reason });
        if self.num_classes == 0 {
            return bad("num_classes", "must be at least 1".into());
        }
        if self.instances_per_class == 0 {
            return bad("instances_per_class", "must be at least 1".into());
        }
        if self.feature_dim == 0 {
            return bad("feature_dim", "must be at least 1".into());
        }
        if !(self.class_separation > 0.0 && self.class_separation.is_finite()) {
            return bad(
                "class_separation",
                format!("must be positive, got {}", self.class_separation),
            );
        }
        if !(self.probe_train_fraction > 0.0 && self.probe_train_fraction < 1.0) {
            return bad(
                "probe_train_fraction",
                format!("must lie in (0, 1), got {}", self.probe_train_fraction),
            );
        }
        if !(self.probe_lr > 0.0 && self.probe_lr.is_finite()) {
            return bad(
                "probe_lr",
                format!("must be positive, got {}", self.probe_lr),
            );
        }
        if self.sweep_k.contains(&0) {
            return bad("sweep_k", "every K must be at least 1".into());
        }
        if let Some(r) = self.sweep_rho.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return bad(
                "sweep_rho",
                format!("every rho must lie in (0, 1], got {r}"),
            );
        }
        self.train_config().validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_desk_default() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.train_config(), TrainConfig::desk(0));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::parse("K = 3\n").unwrap_err();
        assert!(e.to_string().contains("`K`"), "{e}");
    }

    #[test]
    fn invalid_value_names_key() {
        let c = RunConfig::parse("rho = 1.5\n").unwrap();
        match c.validate() {
            Err(Error::InvalidConfig { key, .. }) => assert_eq!(key, "rho"),
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::parse("epochs = \"ten\"\n").is_err());
    }

    #[test]
    fn canonical_form_round_trips_and_hash_is_stable() {
        let c = RunConfig::parse("seed = 9\nk_shots = 5\n").unwrap();
        let back = RunConfig::parse(&c.to_canonical()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.content_hash(), c.content_hash());
        assert_eq!(c.content_hash().len(), 64);
        assert_ne!(c.content_hash(), RunConfig::default().content_hash());
    }
}
