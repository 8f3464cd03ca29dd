//! Pretrains at desk scale and prints per-epoch loss plus probe accuracy.
//!
//! cargo run -p kscl-core --example desk_run -- seed=0 k=3 rho=0.4 epochs=50 queue=1024 noise=0.5

use kscl::data::generate_dataset;
use kscl::trainer::{linear_probe, pretrain_on, ProbeConfig, TrainConfig};

fn main() -> kscl::Result<()> {
    let mut config = TrainConfig::desk(0);
    for arg in std::env::args().skip(1) {
        let (key, value) = arg.split_once('=').expect("expected key=value");
        let num = || value.parse::<f64>().expect("numeric value");
        match key {
            "seed" => config.reseed(num() as u64),
            "k" => config.augmentation.k_shots = num() as usize,
            "rho" => config.rho = num(),
            "epochs" => config.epochs = num() as usize,
            "queue" => config.queue_capacity = num() as usize,
            "noise" => config.augmentation.noise_sigma = num(),
            "mask" => config.augmentation.mask_fraction = num(),
            "rot" => config.augmentation.rotation_pairs = num() as usize,
            "sep" => config.dataset.class_separation = num(),
            "lr" => config.base_lr = num(),
            "m" => config.key_momentum = num(),
            _ => panic!("unknown key {key}"),
        }
    }
    let dataset = generate_dataset(&config.dataset)?;
    let out = pretrain_on(&config, &dataset)?;
    let losses = &out.report.epoch_mean_loss;
    for (e, l) in losses.iter().enumerate() {
        if e % 10 == 0 || e + 1 == losses.len() {
            println!(
                "epoch {e:3} loss {l:.4} rank {:.3}",
                out.report.epoch_mean_rank[e]
            );
        }
    }
    if let Some(s) = out.report.mean_seconds_per_epoch() {
        println!("sec/epoch {s:.3}");
    }
    let mut probe = ProbeConfig::new(config.seed);
    let r = linear_probe(&out.checkpoint.encoders.query, &dataset, &probe)?;
    probe.permute_labels = true;
    let c = linear_probe(&out.checkpoint.encoders.query, &dataset, &probe)?;
    println!(
        "first {:.4} last {:.4} probe {:.4} (train {:.4}) control {:.4}",
        losses[0],
        losses[losses.len() - 1],
        r.accuracy,
        r.train_accuracy,
        c.accuracy
    );
    Ok(())
}
