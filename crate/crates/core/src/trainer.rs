//! Pretraining loop, linear-probe evaluation, and K/ρ ablation sweeps.
//!
//! One optimisation step over a minibatch:
//!
//! 1. the key encoder embeds K views per instance and each instance gets its
//!    subspace;
//! 2. the query encoder embeds one more view per instance;
//! 3. each query is scored against its own subspace (the positive) and a
//!    snapshot of the queue taken before this step;
//! 4. the batch-mean loss is backpropagated through the query encoder only;
//! 5. SGD updates the query encoder, the key encoder follows by EMA, and the
//!    batch's subspaces are enqueued.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{generate_dataset, make_batch, AugmentationConfig, Dataset, DatasetSpec};
use crate::encoder::{backward_accumulate, embed, forward, EncoderPair, Mlp, Sgd};
use crate::error::{Error, Result};
use crate::loss::kshot_loss_and_grad;
use crate::queue::SubspaceQueue;
use crate::rng::{derive_seed, stream};
use crate::subspace::{build_subspace, InstanceSubspace, TruncationPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub augmentation: AugmentationConfig,
    /// Hidden widths between the input and the embedding layer.
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub cosine_decay: bool,
    pub weight_decay: f64,
    pub sgd_momentum: f64,
    pub key_momentum: f64,
    pub rho: f64,
    pub rank_epsilon: f64,
    pub temperature: f64,
    pub queue_capacity: usize,
    /// Wall-clock timings are the only non-reproducible output; off makes
    /// reports byte-identical across runs.
    pub record_timing: bool,
}

impl TrainConfig {
    /// Desk-scale defaults: 10 classes × 200 instances in 64 dimensions,
    /// a 64→128→64→32 encoder, K = 3, ρ = 0.4, τ = 0.2, 50 epochs.
    pub fn desk(seed: u64) -> Self {
        let mut c = Self {
            seed,
            dataset: DatasetSpec {
                num_classes: 10,
                instances_per_class: 200,
                feature_dim: 64,
                class_separation: 3.0,
                seed: 0,
            },
            augmentation: AugmentationConfig {
                k_shots: 3,
                noise_sigma: 1.0,
                mask_fraction: 0.125,
                scale_jitter: (0.8, 1.2),
                rotation_pairs: 8,
                seed: 0,
            },
            hidden: vec![128, 64],
            embed_dim: 32,
            epochs: 50,
            batch_size: 64,
            base_lr: 0.03,
            cosine_decay: true,
            weight_decay: 1e-4,
            sgd_momentum: 0.9,
            key_momentum: crate::encoder::DEFAULT_KEY_MOMENTUM,
            rho: 0.4,
            rank_epsilon: crate::subspace::DEFAULT_RANK_EPSILON,
            temperature: crate::loss::DEFAULT_TEMPERATURE,
            queue_capacity: crate::queue::DEFAULT_QUEUE_CAPACITY,
            record_timing: true,
        };
        c.reseed(seed);
        c
    }

    /// Sets the run seed and re-derives every sub-stream seed from it.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.dataset.seed = derive_seed(seed, "dataset");
        self.augmentation.seed = derive_seed(seed, "augment");
    }

    pub fn k_shots(&self) -> usize {
        self.augmentation.k_shots
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.dataset.feature_dim];
        dims.extend(&self.hidden);
        dims.push(self.embed_dim);
        dims
    }

    pub fn policy(&self) -> Result<TruncationPolicy<f64>> {
        TruncationPolicy::new(self.rho, self.rank_epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key, reason: String| Err(Error::InvalidConfig { key, reason });
        self.augmentation.validate()?;
        self.policy()?;
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        if self.embed_dim == 0 || self.hidden.contains(&0) {
            return bad("embed_dim", "layer widths must be positive".into());
        }
        if self.k_shots() > self.embed_dim {
            return bad(
                "k_shots",
                format!(
                    "K = {} exceeds embedding dimension {}",
                    self.k_shots(),
                    self.embed_dim
                ),
            );
        }
        if !(self.base_lr >= 0.0) || !self.base_lr.is_finite() {
            return bad("lr", format!("must be >= 0, got {}", self.base_lr));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return bad(
                "temperature",
                format!("must be positive, got {}", self.temperature),
            );
        }
        if !(0.0..1.0).contains(&self.key_momentum) {
            return bad(
                "key_momentum",
                format!("must lie in [0, 1), got {}", self.key_momentum),
            );
        }
        if !(0.0..1.0).contains(&self.sgd_momentum) {
            return bad(
                "sgd_momentum",
                format!("must lie in [0, 1), got {}", self.sgd_momentum),
            );
        }
        if !(self.weight_decay >= 0.0) {
            return bad(
                "weight_decay",
                format!("must be >= 0, got {}", self.weight_decay),
            );
        }
        Ok(())
    }
}

/// Encoder pair at step 0: seeded query encoder, key encoder copied from it.
pub fn init_encoders(config: &TrainConfig) -> Result<EncoderPair<f64>> {
    let mut rng = stream(config.seed, "init", &[]);
    let query = Mlp::init(&config.layer_dims(), &mut rng)?;
    EncoderPair::new(query, config.key_momentum)
}

/// Instance visiting order for one epoch.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, "shuffle", &[epoch as u64]));
    order
}

/// Learning rate at `step` of `total_steps`, cosine-decayed to zero when enabled.
pub fn learning_rate(config: &TrainConfig, step: usize, total_steps: usize) -> f64 {
    if !config.cosine_decay || total_steps == 0 {
        return config.base_lr;
    }
    let t = step as f64 / total_steps as f64;
    config.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

pub fn steps_per_epoch(config: &TrainConfig, n: usize) -> usize {
    n.div_ceil(config.batch_size)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    /// Positive plus queue negatives.
    pub candidates: usize,
    pub mean_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub steps: Vec<StepRecord>,
    pub epoch_mean_loss: Vec<f64>,
    pub epoch_mean_rank: Vec<f64>,
    /// Mean retained rank over every positive subspace built.
    pub mean_rank: f64,
    pub seconds_per_epoch: Option<Vec<f64>>,
    /// Full key spectra of the final batch, with the rank chosen for each.
    pub last_batch_spectra: Vec<Vec<f64>>,
    pub last_batch_ranks: Vec<usize>,
    pub checkpoint: Option<String>,
}

impl TrainReport {
    pub fn mean_seconds_per_epoch(&self) -> Option<f64> {
        self.seconds_per_epoch
            .as_ref()
            .filter(|s| !s.is_empty())
            .map(|s| s.iter().sum::<f64>() / s.len() as f64)
    }

    /// `step,loss` rows with a header.
    pub fn write_loss_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,loss")?;
        for s in &self.steps {
            writeln!(w, "{},{:?}", s.step, s.loss)?;
        }
        Ok(())
    }
}

pub struct TrainOutcome {
    pub report: TrainReport,
    pub checkpoint: Checkpoint<f64>,
}

/// Generates the configured dataset and pretrains on it.
pub fn pretrain(config: &TrainConfig) -> Result<TrainOutcome> {
    let dataset = generate_dataset(&config.dataset)?;
    pretrain_on(config, &dataset)
}

pub fn pretrain_on(config: &TrainConfig, dataset: &Dataset) -> Result<TrainOutcome> {
    pretrain_with_progress(config, dataset, |_, _| {})
}

/// [`pretrain_on`] calling `on_epoch(epoch, mean_loss)` after every epoch.
pub fn pretrain_with_progress<F>(
    config: &TrainConfig,
    dataset: &Dataset,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, f64),
{
    config.validate()?;
    if dataset.feature_dim != config.dataset.feature_dim {
        return Err(Error::DimensionMismatch {
            context: "dataset features",
            expected: config.dataset.feature_dim,
            got: dataset.feature_dim,
        });
    }
    let n = dataset.instances.len();
    if n == 0 {
        return Err(Error::InvalidConfig {
            key: "dataset",
            reason: "no instances".into(),
        });
    }
    let policy = config.policy()?;
    let mut encoders = init_encoders(config)?;
    let mut optimizer = Sgd::new(&encoders.query, config.sgd_momentum, config.weight_decay)?;
    let mut queue = SubspaceQueue::new(config.queue_capacity);

    let per_epoch = steps_per_epoch(config, n);
    let total_steps = per_epoch * config.epochs;
    let mut steps = Vec::with_capacity(total_steps);
    let mut epoch_mean_loss = Vec::with_capacity(config.epochs);
    let mut epoch_mean_rank = Vec::with_capacity(config.epochs);
    let mut seconds = Vec::with_capacity(config.epochs);
    let mut last_spectra = Vec::new();
    let mut last_ranks = Vec::new();
    let (mut rank_sum, mut rank_count) = (0usize, 0usize);
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let order = epoch_order(config.seed, epoch, n);
        let (mut loss_sum, mut ranks_this_epoch, mut built) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let lr = learning_rate(config, step, total_steps);
            let members = chunk.iter().map(|&i| &dataset.instances[i]);
            let batch = make_batch(members, &config.augmentation, epoch as u64)?;

            let positives = batch
                .iter()
                .map(|b| {
                    let keys = b
                        .key_views
                        .iter()
                        .map(|v| embed(encoders.key(), v))
                        .collect::<Result<Vec<_>>>()?;
                    build_subspace(&keys, &policy, b.instance_id)
                })
                .collect::<Result<Vec<InstanceSubspace<f64>>>>()?;

            let negatives = queue.negatives_snapshot();
            let mut grads = encoders.query.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            let mut candidates: Vec<&InstanceSubspace<f64>> =
                Vec::with_capacity(negatives.len() + 1);
            for (b, positive) in batch.iter().zip(&positives) {
                let (query, cache) = forward(&encoders.query, &b.query_view)?;
                candidates.clear();
                candidates.push(positive);
                candidates.extend(negatives.iter().map(|s| s.as_ref()));
                let out = kshot_loss_and_grad(&query, &candidates, 0, config.temperature)?;
                if !out.loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        step,
                        diagnostic: format!(
                            "instance {} with {} candidates, positive rank {}, loss {}",
                            b.instance_id,
                            candidates.len(),
                            positive.rank(),
                            out.loss
                        ),
                    });
                }
                batch_loss += out.loss * scale;
                backward_accumulate(
                    &encoders.query,
                    &cache,
                    &out.grad_wrt_query,
                    scale,
                    &mut grads,
                )?;
            }

            optimizer.step(&mut encoders.query, &grads, lr)?;
            encoders.momentum_update()?;

            let batch_rank: usize = positives.iter().map(|s| s.rank()).sum();
            rank_sum += batch_rank;
            rank_count += positives.len();
            ranks_this_epoch += batch_rank;
            built += positives.len();
            last_spectra = positives.iter().map(|s| s.spectrum().to_vec()).collect();
            last_ranks = positives.iter().map(|s| s.rank()).collect();

            steps.push(StepRecord {
                step,
                epoch,
                loss: batch_loss,
                candidates: negatives.len() + 1,
                mean_rank: batch_rank as f64 / positives.len() as f64,
            });
            loss_sum += batch_loss;
            queue.enqueue_batch(positives)?;
            step += 1;
        }
        epoch_mean_loss.push(loss_sum / per_epoch as f64);
        epoch_mean_rank.push(ranks_this_epoch as f64 / built as f64);
        seconds.push(started.elapsed().as_secs_f64());
        on_epoch(epoch, loss_sum / per_epoch as f64);
    }

    let report = TrainReport {
        config: config.clone(),
        steps,
        epoch_mean_loss,
        epoch_mean_rank,
        mean_rank: rank_sum as f64 / rank_count.max(1) as f64,
        seconds_per_epoch: config.record_timing.then_some(seconds),
        last_batch_spectra: last_spectra,
        last_batch_ranks: last_ranks,
        checkpoint: None,
    };
    Ok(TrainOutcome {
        report,
        checkpoint: Checkpoint {
            step: step as u64,
            encoders,
            optimizer,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub train_fraction: f64,
    pub seed: u64,
    /// Shuffle labels across instances before training: a chance-level control.
    pub permute_labels: bool,
}

impl ProbeConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            epochs: 300,
            lr: 2.0,
            train_fraction: 0.8,
            seed,
            permute_labels: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Held-out top-1 accuracy.
    pub accuracy: f64,
    pub train_accuracy: f64,
    /// `None` for classes absent from the held-out split.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub n_train: usize,
    pub n_test: usize,
    pub config: ProbeConfig,
}

impl ProbeReport {
    /// Binomial standard deviation of an accuracy `p` over the held-out split.
    pub fn binomial_sd(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.n_test.max(1) as f64).sqrt()
    }
}

/// Softmax regression on frozen embeddings of the un-augmented instances.
pub fn linear_probe(
    encoder: &Mlp<f64>,
    dataset: &Dataset,
    config: &ProbeConfig,
) -> Result<ProbeReport> {
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::InvalidConfig {
            key: "probe_train_fraction",
            reason: format!("must lie in (0, 1), got {}", config.train_fraction),
        });
    }
    if !(config.lr > 0.0) {
        return Err(Error::InvalidConfig {
            key: "probe_lr",
            reason: format!("must be positive, got {}", config.lr),
        });
    }
    let n = dataset.instances.len();
    let c = dataset.num_classes;
    let features = dataset
        .instances
        .iter()
        .map(|inst| embed(encoder, &inst.features).map(|e| e.into_inner()))
        .collect::<Result<Vec<_>>>()?;
    let mut labels: Vec<usize> = dataset.instances.iter().map(|i| i.latent_class).collect();
    if config.permute_labels {
        labels.shuffle(&mut stream(config.seed, "probe-permute", &[]));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(config.seed, "probe-split", &[]));
    let n_train = ((n as f64) * config.train_fraction).round() as usize;
    let n_train = n_train.clamp(1, n.saturating_sub(1).max(1));
    let (train, test) = order.split_at(n_train);

    let d = encoder.output_dim();
    let mut w = vec![vec![0.0; d]; c];
    let mut b = vec![0.0; c];
    let inv = 1.0 / train.len() as f64;
    for _ in 0..config.epochs {
        let mut gw = vec![vec![0.0; d]; c];
        let mut gb = vec![0.0; c];
        for &i in train {
            let p = class_probabilities(&w, &b, &features[i]);
            for k in 0..c {
                let e = p[k] - if labels[i] == k { 1.0 } else { 0.0 };
                gb[k] += e;
                for (g, x) in gw[k].iter_mut().zip(&features[i]) {
                    *g += e * x;
                }
            }
        }
        for k in 0..c {
            b[k] -= config.lr * gb[k] * inv;
            for (wk, g) in w[k].iter_mut().zip(&gw[k]) {
                *wk -= config.lr * g * inv;
            }
        }
    }

    let predict = |i: usize| {
        let p = class_probabilities(&w, &b, &features[i]);
        (0..c)
            .max_by(|&x, &y| p[x].total_cmp(&p[y]).then(y.cmp(&x)))
            .unwrap_or(0)
    };
    let accuracy_on = |idx: &[usize]| {
        idx.iter().filter(|&&i| predict(i) == labels[i]).count() as f64 / idx.len().max(1) as f64
    };
    let mut hits = vec![0usize; c];
    let mut totals = vec![0usize; c];
    for &i in test {
        totals[labels[i]] += 1;
        if predict(i) == labels[i] {
            hits[labels[i]] += 1;
        }
    }
    Ok(ProbeReport {
        accuracy: accuracy_on(test),
        train_accuracy: accuracy_on(train),
        per_class_accuracy: hits
            .iter()
            .zip(&totals)
            .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
            .collect(),
        n_train: train.len(),
        n_test: test.len(),
        config: config.clone(),
    })
}

fn class_probabilities(w: &[Vec<f64>], b: &[f64], x: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = w
        .iter()
        .zip(b)
        .map(|(wk, bk)| wk.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + bk)
        .collect();
    crate::loss::softmax(&logits, 1.0)
}

/// One (K, ρ, seed) cell of an ablation grid. `rho` is `None` for K = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub k_shots: usize,
    pub rho: Option<f64>,
    pub seed: u64,
}

/// Cartesian grid; K = 1 appears once per seed since ρ cannot matter there.
pub fn sweep_grid(ks: &[usize], rhos: &[f64], seeds: &[u64]) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for &k in ks {
        let rho_opts: Vec<Option<f64>> = if k == 1 {
            vec![None]
        } else {
            rhos.iter().copied().map(Some).collect()
        };
        for rho in rho_opts {
            for &seed in seeds {
                cells.push(SweepCell {
                    k_shots: k,
                    rho,
                    seed,
                });
            }
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k_shots: usize,
    pub rho: Option<f64>,
    pub seed: u64,
    pub probe_acc: f64,
    pub mean_rank: f64,
    pub sec_per_epoch: Option<f64>,
}

/// Pretrain and probe every cell. Cells differ from `base` only in K, ρ and seed.
pub fn ablation_sweep(
    base: &TrainConfig,
    probe: &ProbeConfig,
    cells: &[SweepCell],
) -> Result<Vec<SweepRow>> {
    cells
        .iter()
        .map(|cell| {
            let mut config = base.clone();
            config.reseed(cell.seed);
            config.augmentation.k_shots = cell.k_shots;
            config.rho = cell.rho.unwrap_or(1.0);
            let dataset = generate_dataset(&config.dataset)?;
            let outcome = pretrain_on(&config, &dataset)?;
            let mut probe_cfg = probe.clone();
            probe_cfg.seed = derive_seed(cell.seed, "probe");
            let report = linear_probe(&outcome.checkpoint.encoders.query, &dataset, &probe_cfg)?;
            Ok(SweepRow {
                k_shots: cell.k_shots,
                rho: cell.rho,
                seed: cell.seed,
                probe_acc: report.accuracy,
                mean_rank: outcome.report.mean_rank,
                sec_per_epoch: outcome.report.mean_seconds_per_epoch(),
            })
        })
        .collect()
}

/// `K,rho,seed,probe_acc,mean_L,sec_per_epoch`; absent values are written as `NA`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "K,rho,seed,probe_acc,mean_L,sec_per_epoch")?;
    for r in rows {
        let rho = r.rho.map_or("NA".to_string(), |x| format!("{x:?}"));
        let sec = r
            .sec_per_epoch
            .map_or("NA".to_string(), |x| format!("{x:.6}"));
        writeln!(
            w,
            "{},{},{},{:?},{:?},{}",
            r.k_shots, rho, r.seed, r.probe_acc, r.mean_rank, sec
        )?;
    }
    Ok(())
}
