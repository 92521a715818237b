use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rfaug::augment::{self, AugmentationPlan, AugmentationPolicy};
use rfaug::classifier::{self, NetConfig};
use rfaug::experiment::{self, ExperimentConfig};
use rfaug::manifest::{self, DatasetManifest};

#[derive(Parser)]
#[command(name = "rfaug", version, about = "Waveform-aware channel augmentation for RF fingerprinting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize Day-1 and Day-2 recordings from an experiment config.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Expand a Day-1 manifest with an augmentation plan.
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Overrides the plan's policy.
        #[arg(long)]
        policy: Option<AugmentationPolicy>,
    },
    /// Train a classifier on one or more manifests; writes model.bin and train_log.csv.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true)]
        manifest: Vec<PathBuf>,
        /// Window stride; defaults to the window length.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Score a trained model on a manifest; writes eval.txt.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Run the full cross-day experiment.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// Export penultimate-layer features of a manifest's windows; writes features.csv.
    Features {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        stride: Option<usize>,
    },
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Augment { .. } => "augment",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Experiment { .. } => "experiment",
            Command::Features { .. } => "features",
        }
    }
}

fn experiment_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seeds = vec![s];
    }
    Ok(cfg)
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_windows(manifest_path: &Path, stride: Option<usize>) -> Result<(DatasetManifest, Vec<rfaug::Example>)> {
    let m = manifest::read_manifest(manifest_path)?;
    let w = m.header.window_len;
    let ex = experiment::load_examples(&m, &manifest::base_dir_of(manifest_path), w, stride.unwrap_or(w))?;
    Ok((m, ex))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { common } => {
            let cfg = experiment_config(&common)?;
            let s = cfg.seeds[0];
            let (d1, d2) = experiment::synth_dataset(&cfg, s, &common.out)?;
            println!(
                "wrote {} day1 and {} day2 recordings under {}",
                d1.records.len(),
                d2.records.len(),
                common.out.display()
            );
        }
        Command::Augment {
            common,
            manifest: manifest_path,
            policy,
        } => {
            let mut plan = match &common.config {
                Some(p) => AugmentationPlan::load(p)?,
                None => AugmentationPlan::default(),
            };
            if let Some(p) = policy {
                plan.policy = p;
            }
            if let Some(s) = common.seed {
                plan.master_seed = s;
            }
            let m = manifest::read_manifest(&manifest_path)?;
            create_out(&common.out)?;
            let out = augment::augment_dataset(&m, &manifest::base_dir_of(&manifest_path), &plan, &common.out)?;
            println!(
                "{}: {} -> {} records, manifest {}",
                plan.policy,
                m.records.len(),
                out.records.len(),
                common.out.join("manifest.csv").display()
            );
        }
        Command::Train {
            common,
            manifest: manifests,
            stride,
        } => {
            let mut cfg = match &common.config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    toml::from_str::<NetConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => NetConfig::default(),
            };
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            let mut examples = Vec::new();
            for path in &manifests {
                let (m, ex) = load_windows(path, stride)?;
                if m.header.window_len != cfg.window_len || m.header.num_transmitters != cfg.num_classes {
                    bail!(
                        "{}: window {} / {} transmitters does not match net config {} / {}",
                        path.display(),
                        m.header.window_len,
                        m.header.num_transmitters,
                        cfg.window_len,
                        cfg.num_classes
                    );
                }
                examples.extend(ex);
            }
            let t0 = Instant::now();
            let model = classifier::train(&examples, &cfg)?;
            create_out(&common.out)?;
            classifier::save_model(&model.network, common.out.join("model.bin"))?;
            let mut log = String::from("epoch,loss,accuracy\n");
            for e in &model.log {
                log.push_str(&format!("{},{:.6},{:.6}\n", e.epoch, e.loss, e.accuracy));
            }
            std::fs::write(common.out.join("train_log.csv"), log)?;
            println!(
                "trained on {} windows in {:.1} s, final train accuracy {:.4}",
                examples.len(),
                t0.elapsed().as_secs_f64(),
                model.log.last().map_or(f64::NAN, |e| e.accuracy)
            );
        }
        Command::Eval {
            common,
            model,
            manifest: manifest_path,
            stride,
        } => {
            let net = classifier::load_model(&model)?;
            let (_, ex) = load_windows(&manifest_path, stride)?;
            let r = classifier::evaluate(&net, &ex)?;
            let mut text = format!("accuracy {:.6} over {} windows\nconfusion (rows true, columns predicted):\n", r.accuracy, ex.len());
            for row in &r.confusion {
                let cells: Vec<String> = row.iter().map(|c| format!("{c:6}")).collect();
                text.push_str(&cells.join(" "));
                text.push('\n');
            }
            create_out(&common.out)?;
            std::fs::write(common.out.join("eval.txt"), &text)?;
            print!("{text}");
        }
        Command::Experiment { common } => {
            let cfg = experiment_config(&common)?;
            let t0 = Instant::now();
            let report = experiment::run_experiment_with_progress(&cfg, &common.out, &mut |msg| {
                eprintln!("[{:7.1} s] {msg}", t0.elapsed().as_secs_f64())
            })?;
            print!("{}", report.table.to_text(&format!("mean over seeds {:?}", cfg.seeds)));
        }
        Command::Features {
            common,
            model,
            manifest: manifest_path,
            stride,
        } => {
            let net = classifier::load_model(&model)?;
            let (_, ex) = load_windows(&manifest_path, stride)?;
            create_out(&common.out)?;
            let path = common.out.join("features.csv");
            classifier::export_features(&net, &ex, &path)?;
            println!("wrote {} rows to {}", ex.len(), path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = cli.command.stage();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{stage}]: {e:#}");
            ExitCode::FAILURE
        }
    }
}
