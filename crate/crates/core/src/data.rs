//! Synthetic clustered dataset and a vector-space augmentation family.
//!
//! Class means sit on a sphere of radius `class_separation`; each instance is
//! its class mean plus unit Gaussian noise. Augmentations apply, in order:
//! random coordinate-plane rotations, a global scale jitter, additive
//! Gaussian noise, and zeroing of a fixed fraction of coordinates.
//!
//! Every view draws from its own stream keyed by `(seed, instance id, draw)`.

use std::io::{Read, Write};

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: u64,
    pub features: Vec<f64>,
    /// Hidden during pretraining; only the linear probe reads it.
    pub latent_class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub instances: Vec<Instance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub num_classes: usize,
    pub instances_per_class: usize,
    pub feature_dim: usize,
    pub class_separation: f64,
    pub seed: u64,
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    for (key, v) in [
        ("num_classes", spec.num_classes),
        ("instances_per_class", spec.instances_per_class),
        ("feature_dim", spec.feature_dim),
    ] {
        if v == 0 {
            return Err(Error::InvalidConfig {
                key,
                reason: "must be at least 1".into(),
            });
        }
    }
    if !(spec.class_separation > 0.0) || !spec.class_separation.is_finite() {
        return Err(Error::InvalidConfig {
            key: "class_separation",
            reason: format!("must be positive, got {}", spec.class_separation),
        });
    }

    let f = spec.feature_dim;
    let mut rng = stream(spec.seed, "class-means", &[]);
    let means: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| {
            let dir: Vec<f64> = (0..f).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            dir.into_iter()
                .map(|x| x / n * spec.class_separation)
                .collect()
        })
        .collect();

    let mut instances = Vec::with_capacity(spec.num_classes * spec.instances_per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..spec.instances_per_class {
            let id = instances.len() as u64;
            let mut rng = stream(spec.seed, "instance", &[id]);
            let features = mean
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + z
                })
                .collect();
            instances.push(Instance {
                id,
                features,
                latent_class: c,
            });
        }
    }
    Ok(Dataset {
        num_classes: spec.num_classes,
        feature_dim: f,
        instances,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub k_shots: usize,
    pub noise_sigma: f64,
    pub mask_fraction: f64,
    pub scale_jitter: (f64, f64),
    pub rotation_pairs: usize,
    pub seed: u64,
}

impl AugmentationConfig {
    /// Every transform disabled.
    pub fn identity(k_shots: usize, seed: u64) -> Self {
        Self {
            k_shots,
            noise_sigma: 0.0,
            mask_fraction: 0.0,
            scale_jitter: (1.0, 1.0),
            rotation_pairs: 0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key, reason: String| Err(Error::InvalidConfig { key, reason });
        if self.k_shots == 0 {
            return bad("k_shots", "must be at least 1".into());
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(
                "noise_sigma",
                format!("must be >= 0, got {}", self.noise_sigma),
            );
        }
        if !(0.0..1.0).contains(&self.mask_fraction) {
            return bad(
                "mask_fraction",
                format!("must lie in [0, 1), got {}", self.mask_fraction),
            );
        }
        let (lo, hi) = self.scale_jitter;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(
                "scale_jitter",
                format!("need 0 < lo <= hi, got [{lo}, {hi}]"),
            );
        }
        Ok(())
    }
}

/// Largest rotation angle, π/8.
pub const MAX_ROTATION: f64 = std::f64::consts::PI / 8.0;

/// One augmented view of `instance`, deterministic in `(seed, id, draw_index)`.
pub fn augment(
    instance: &Instance,
    config: &AugmentationConfig,
    draw_index: u64,
) -> Result<Vec<f64>> {
    config.validate()?;
    let f = instance.features.len();
    let mut x = instance.features.clone();
    let mut rng = stream(config.seed, "augment", &[instance.id, draw_index]);

    if f >= 2 {
        for _ in 0..config.rotation_pairs {
            let i = rng.random_range(0..f);
            let mut j = rng.random_range(0..f - 1);
            if j >= i {
                j += 1;
            }
            let theta = rng.random_range(-MAX_ROTATION..=MAX_ROTATION);
            let (s, c) = theta.sin_cos();
            let (xi, xj) = (x[i], x[j]);
            x[i] = c * xi - s * xj;
            x[j] = s * xi + c * xj;
        }
    }

    let (lo, hi) = config.scale_jitter;
    let scale = if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    };
    if scale != 1.0 {
        x.iter_mut().for_each(|v| *v *= scale);
    }

    if config.noise_sigma > 0.0 {
        for v in x.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += config.noise_sigma * z;
        }
    }

    let masked = (config.mask_fraction * f as f64).floor() as usize;
    if masked > 0 {
        for i in sample(&mut rng, f, masked) {
            x[i] = 0.0;
        }
    }
    Ok(x)
}

/// K key views and one query view of a single instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationBatch {
    pub instance_id: u64,
    pub query_view: Vec<f64>,
    pub key_views: Vec<Vec<f64>>,
}

/// `K + 1` independent draws per instance for training round `round`.
///
/// View `j` of round `r` uses draw index `r·(K+1) + j`; the query is the last.
pub fn make_batch<'a, I>(
    instances: I,
    config: &AugmentationConfig,
    round: u64,
) -> Result<Vec<AugmentationBatch>>
where
    I: IntoIterator<Item = &'a Instance>,
{
    config.validate()?;
    let k = config.k_shots as u64;
    instances
        .into_iter()
        .map(|inst| {
            let base = round * (k + 1);
            let key_views = (0..k)
                .map(|j| augment(inst, config, base + j))
                .collect::<Result<_>>()?;
            let query_view = augment(inst, config, base + k)?;
            Ok(AugmentationBatch {
                instance_id: inst.id,
                query_view,
                key_views,
            })
        })
        .collect()
}

const DATASET_MAGIC: &[u8; 8] = b"KSCLDAT\0";
const DATASET_VERSION: u32 = 1;

impl Dataset {
    /// Binary layout, little endian throughout:
    ///
    /// ```text
    /// magic        8 bytes  "KSCLDAT\0"
    /// version      u32      1
    /// count        u64
    /// feature_dim  u64
    /// num_classes  u64
    /// count × { id u64, label u64, feature_dim × f64 }
    /// ```
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&(self.instances.len() as u64).to_le_bytes())?;
        w.write_all(&(self.feature_dim as u64).to_le_bytes())?;
        w.write_all(&(self.num_classes as u64).to_le_bytes())?;
        for inst in &self.instances {
            w.write_all(&inst.id.to_le_bytes())?;
            w.write_all(&(inst.latent_class as u64).to_le_bytes())?;
            for x in &inst.features {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let corrupt = |m: &str| Error::DatasetCorrupt(m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| corrupt("truncated header"))?;
        if &magic != DATASET_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)
            .map_err(|_| corrupt("truncated header"))?;
        let version = u32::from_le_bytes(b4);
        if version != DATASET_VERSION {
            return Err(Error::DatasetCorrupt(format!(
                "unsupported version {version}"
            )));
        }
        let mut u64_at = |what: &str| -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)
                .map_err(|_| Error::DatasetCorrupt(format!("truncated {what}")))?;
            Ok(u64::from_le_bytes(b))
        };
        let count = u64_at("count")? as usize;
        let feature_dim = u64_at("feature_dim")? as usize;
        let num_classes = u64_at("num_classes")? as usize;
        let mut instances = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let id = u64_at("id")?;
            let label = u64_at("label")? as usize;
            if label >= num_classes {
                return Err(Error::DatasetCorrupt(format!(
                    "label {label} >= {num_classes}"
                )));
            }
            let features = (0..feature_dim)
                .map(|_| u64_at("feature").map(f64::from_bits))
                .collect::<Result<Vec<_>>>()?;
            if !features.iter().all(|x| x.is_finite()) {
                return Err(corrupt("non-finite feature"));
            }
            instances.push(Instance {
                id,
                features,
                latent_class: label,
            });
        }
        let mut tail = [0u8; 1];
        if r.read(&mut tail)? != 0 {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Self {
            num_classes,
            feature_dim,
            instances,
        })
    }

    /// `id,label,f0,f1,…` with a header row; floats use shortest round-trip form.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "id,label")?;
        for j in 0..self.feature_dim {
            write!(w, ",f{j}")?;
        }
        writeln!(w)?;
        for inst in &self.instances {
            write!(w, "{},{}", inst.id, inst.latent_class)?;
            for x in &inst.features {
                write!(w, ",{x:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
