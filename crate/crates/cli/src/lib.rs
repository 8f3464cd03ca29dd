//! Command implementations behind the `kscl` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use kscl::basis::compose_basis;
use kscl::checkpoint::Checkpoint;
use kscl::data::{generate_dataset, Dataset};
use kscl::selfcheck::{run_selfcheck, Fault, SelfcheckReport};
use kscl::trainer::{
    ablation_sweep, linear_probe, pretrain_with_progress, sweep_grid, write_sweep_csv, ProbeReport,
};
use kscl::Error;
use serde::Serialize;

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GenData,
    Pretrain,
    Probe,
    Sweep,
    BasisViz,
    Selfcheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Pretrain => "pretrain",
            Command::Probe => "probe",
            Command::Sweep => "sweep",
            Command::BasisViz => "basis-viz",
            Command::Selfcheck => "selfcheck",
        }
    }
}

/// Everything a command needs, resolved from flags and the config file.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config_path: Option<PathBuf>,
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub quiet: bool,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub config_path: Option<PathBuf>,
    pub resolved_config: RunConfig,
    pub config_hash: String,
    pub output_dir: PathBuf,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: String,
    pub message: String,
}

impl Failure {
    fn invariant(message: String) -> Self {
        Self {
            code: EXIT_INVARIANT,
            kind: "invariant_violation".into(),
            message,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidConfig { .. } => EXIT_CONFIG,
            e if e.is_numeric() => EXIT_NUMERIC,
            _ => EXIT_OTHER,
        };
        Self {
            code,
            kind: e.code().to_string(),
            message: e.to_string(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        if let Some(k) = e.downcast_ref::<Error>() {
            let mut f = Failure::from(k.clone());
            f.message = format!("{e:#}");
            return f;
        }
        Self {
            code: EXIT_OTHER,
            kind: "io".into(),
            message: format!("{e:#}"),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error[{}]: {}", self.kind, self.message)
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub fn run(inv: &Invocation) -> CmdResult {
    inv.config.validate()?;
    fs::create_dir_all(&inv.out_dir)
        .with_context(|| format!("creating {}", inv.out_dir.display()))?;
    write_manifest(inv)?;
    match inv.command {
        Command::GenData => gen_data(inv),
        Command::Pretrain => pretrain(inv),
        Command::Probe => probe(inv),
        Command::Sweep => sweep(inv),
        Command::BasisViz => basis_viz(inv),
        Command::Selfcheck => selfcheck(inv),
    }
}

pub fn manifest(inv: &Invocation) -> RunManifest {
    RunManifest {
        command: inv.command.name(),
        config_path: inv.config_path.clone(),
        resolved_config: inv.config.clone(),
        config_hash: inv.config.content_hash(),
        output_dir: inv.out_dir.clone(),
    }
}

fn write_manifest(inv: &Invocation) -> CmdResult {
    write_json(&inv.out_dir.join("manifest.json"), &manifest(inv))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).context("serializing JSON")?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn create(path: &Path) -> CmdResult<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn say(inv: &Invocation, msg: impl AsRef<str>) {
    if !inv.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

fn load_dataset(config: &RunConfig) -> CmdResult<Dataset> {
    match &config.dataset_path {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening dataset {}", p.display()))?;
            let d = Dataset::read_binary(std::io::BufReader::new(f))?;
            if d.feature_dim != config.feature_dim {
                return Err(Error::InvalidConfig {
                    key: "feature_dim",
                    reason: format!(
                        "dataset has {} features, config says {}",
                        d.feature_dim, config.feature_dim
                    ),
                }
                .into());
            }
            Ok(d)
        }
        None => Ok(generate_dataset(&config.dataset_spec())?),
    }
}

fn load_checkpoint(config: &RunConfig) -> CmdResult<Checkpoint<f64>> {
    let path = config
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig {
            key: "checkpoint",
            reason: "this command needs a checkpoint path".into(),
        })?;
    Ok(Checkpoint::load(path)?)
}

fn gen_data(inv: &Invocation) -> CmdResult {
    let d = generate_dataset(&inv.config.dataset_spec())?;
    let mut w = create(&inv.out_dir.join("dataset.bin"))?;
    d.write_binary(&mut w)?;
    w.flush().context("writing dataset.bin")?;
    let mut w = create(&inv.out_dir.join("dataset.csv"))?;
    d.write_csv(&mut w)?;
    w.flush().context("writing dataset.csv")?;
    say(
        inv,
        format!(
            "wrote {} instances ({} classes, {} features) to {}",
            d.instances.len(),
            d.num_classes,
            d.feature_dim,
            inv.out_dir.display()
        ),
    );
    Ok(())
}

fn pretrain(inv: &Invocation) -> CmdResult {
    let config = inv.config.train_config();
    let dataset = load_dataset(&inv.config)?;
    let outcome = pretrain_with_progress(&config, &dataset, |epoch, loss| {
        say(
            inv,
            format!("epoch {:>3}/{}  loss {loss:.4}", epoch + 1, config.epochs),
        );
    })?;
    let ckpt = inv.out_dir.join("checkpoint.kscl");
    outcome.checkpoint.save(&ckpt)?;
    let mut report = outcome.report;
    report.checkpoint = Some("checkpoint.kscl".into());
    write_json(&inv.out_dir.join("train_report.json"), &report)?;
    let mut w = create(&inv.out_dir.join("losses.csv"))?;
    report.write_loss_csv(&mut w)?;
    w.flush().context("writing losses.csv")?;
    say(
        inv,
        format!(
            "trained {} steps, mean rank {:.3}; checkpoint {}",
            report.steps.len(),
            report.mean_rank,
            ckpt.display()
        ),
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct ProbeOutput {
    probe: ProbeReport,
    permutation_control: ProbeReport,
    /// (probe − control) in binomial standard deviations of the control.
    margin_sd: f64,
}

fn probe(inv: &Invocation) -> CmdResult {
    let ckpt = load_checkpoint(&inv.config)?;
    let dataset = load_dataset(&inv.config)?;
    let encoder = &ckpt.encoders.query;
    let mut cfg = inv.config.probe_config();
    let probe = linear_probe(encoder, &dataset, &cfg)?;
    cfg.permute_labels = true;
    let control = linear_probe(encoder, &dataset, &cfg)?;
    let chance = 1.0 / dataset.num_classes as f64;
    let margin_sd = (probe.accuracy - control.accuracy) / control.binomial_sd(chance);
    say(
        inv,
        format!(
            "probe accuracy {:.4}, permuted-label control {:.4} ({margin_sd:.1} sd)",
            probe.accuracy, control.accuracy
        ),
    );
    write_json(
        &inv.out_dir.join("probe_report.json"),
        &ProbeOutput {
            probe,
            permutation_control: control,
            margin_sd,
        },
    )
}

fn sweep(inv: &Invocation) -> CmdResult {
    let c = &inv.config;
    let cells = sweep_grid(&c.sweep_k, &c.sweep_rho, &c.sweep_seeds);
    let base = c.train_config();
    let probe = c.probe_config();
    let mut rows = Vec::with_capacity(cells.len());
    for (i, cell) in cells.iter().enumerate() {
        let rho = cell.rho.map_or("-".to_string(), |r| r.to_string());
        say(
            inv,
            format!(
                "cell {}/{}: K={} rho={rho} seed={}",
                i + 1,
                cells.len(),
                cell.k_shots,
                cell.seed
            ),
        );
        let row = ablation_sweep(&base, &probe, std::slice::from_ref(cell))?;
        rows.extend(row);
    }
    let mut w = create(&inv.out_dir.join("sweep.csv"))?;
    write_sweep_csv(&rows, &mut w)?;
    w.flush().context("writing sweep.csv")?;
    write_json(&inv.out_dir.join("sweep.json"), &rows)
}

fn basis_viz(inv: &Invocation) -> CmdResult {
    let c = &inv.config;
    let ckpt = load_checkpoint(c)?;
    let dataset = load_dataset(c)?;
    let train = c.train_config();
    let policy = train.policy()?;
    let mut out = Vec::new();
    for &id in &c.instance_ids {
        let inst = dataset
            .instances
            .iter()
            .find(|i| i.id == id)
            .ok_or_else(|| Error::InvalidConfig {
                key: "instance_ids",
                reason: format!("no instance with id {id}"),
            })?;
        let comp = compose_basis(
            ckpt.encoders.key(),
            inst,
            &train.augmentation,
            &policy,
            c.basis_round,
        )?;
        if !(comp.energy_ratio >= policy.rho - 1e-9) {
            return Err(Failure::invariant(format!(
                "instance {id}: retained weight energy {} is below rho {}",
                comp.energy_ratio, policy.rho
            )));
        }
        say(
            inv,
            format!(
                "instance {id}: {} bases, energy ratio {:.4}",
                comp.components.len(),
                comp.energy_ratio
            ),
        );
        out.push(comp);
    }
    write_json(&inv.out_dir.join("basis.json"), &out)?;
    let mut w = create(&inv.out_dir.join("basis.csv"))?;
    let io = |e: std::io::Error| Failure::from(anyhow::Error::from(e).context("writing basis.csv"));
    writeln!(w, "instance,basis,eigenvalue,kind,index,value").map_err(io)?;
    for comp in &out {
        for b in &comp.components {
            let series = [
                ("weight", &b.weights),
                ("coefficient", &b.coefficients),
                ("synthesized", &b.synthesized),
            ];
            for (kind, values) in series {
                for (j, v) in values.iter().enumerate() {
                    writeln!(
                        w,
                        "{},{},{:?},{kind},{j},{v:?}",
                        comp.instance_id, b.index, b.eigenvalue
                    )
                    .map_err(io)?;
                }
            }
        }
    }
    w.flush().map_err(io)?;
    Ok(())
}

fn selfcheck(inv: &Invocation) -> CmdResult {
    let report: SelfcheckReport = run_selfcheck(inv.fault);
    for s in &report.suites {
        say(
            inv,
            format!(
                "{:<4} {:<14} {:>4} cases  worst {:.2e} (tol {:.0e})  {:.3}s",
                if s.passed { "PASS" } else { "FAIL" },
                s.name,
                s.cases,
                s.worst,
                s.tolerance,
                s.seconds
            ),
        );
    }
    write_json(&inv.out_dir.join("selfcheck.json"), &report)?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure::invariant(format!(
            "violated: {}",
            report.failed_invariants().join(", ")
        )))
    }
}
