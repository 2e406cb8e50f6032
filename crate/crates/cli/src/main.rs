//! `hoi`: synthetic data, training, evaluation, inference and heatmaps.
//!
//! Every command resolves its config (defaults, then `--config`, then flags),
//! writes `config.resolved.json` next to its outputs and is a pure function
//! of that config. Failures exit nonzero with one JSON line on stderr:
//! `{"error": <kind>, "message": <text>}`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::builder::BoolishValueParser;
use clap::{Args, Parser, Subcommand};
use hoi_core::model::{load_checkpoint_for, save_checkpoint, Model};
use hoi_core::pipeline::{
    ensure_dir, evaluate_model, export_heatmaps, generate_split, predict_dataset, read_dataset, run_heatmaps, train,
    write_dataset, write_json, ActorBranch, Dataset, RunConfig, Split, CHECKPOINT_FILE, LOSS_LOG, PREDICTIONS_JSON,
    REPORT_JSON, REPORT_TABLE,
};
use hoi_core::supervision::{MaskMode, WoPlacement};
use hoi_core::synth::Subset;
use hoi_core::Error;
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "hoi", version, about = "Actor-conditioned HOI detection on synthetic scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train and test splits under <data>.
    Synth(Common),
    /// Train from scratch on the train split; writes model.ckpt and loss_log.jsonl.
    Train(Common),
    /// Score the checkpoint on the test split; writes <out>/eval/report.{json,txt}.
    Eval(Common),
    /// Write per-scene predictions for a split to <out>/infer/predictions.json.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "test", value_parser = enum_value::<Split>)]
        split: Split,
    },
    /// Export branch heatmaps and the actor mask for one scene and actor.
    Heatmap {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "test", value_parser = enum_value::<Split>)]
        split: Split,
        /// Scene index as stored in the dataset.
        #[arg(long)]
        scene: u64,
        /// Annotated human of the scene to use as the actor.
        #[arg(long, default_value_t = 0)]
        actor: usize,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run config; missing fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sets the synth, init and training seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, env = "HOI_OUT_ROOT", default_value = "runs")]
    out: PathBuf,
    /// Dataset directory [default: <out>/data].
    #[arg(long)]
    data: Option<PathBuf>,
    /// Checkpoint path [default: <out>/model.ckpt].
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// rgbm, rgb or rgb+255.
    #[arg(long, value_parser = enum_value::<MaskMode>)]
    mask_mode: Option<MaskMode>,
    /// fused, train_only or off.
    #[arg(long, value_parser = enum_value::<ActorBranch>)]
    actor_branch: Option<ActorBranch>,
    /// none, actor, object or both.
    #[arg(long, value_parser = enum_value::<WoPlacement>)]
    wo_channel: Option<WoPlacement>,
    /// on or off.
    #[arg(long, value_parser = BoolishValueParser::new())]
    hanning: Option<bool>,
    /// on or off.
    #[arg(long, value_parser = BoolishValueParser::new())]
    scale_weight: Option<bool>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
}

/// Parses a flag value with the type's serde names, so flags and config
/// files spell enum values the same way.
fn enum_value<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        let ab = &mut cfg.ablation;
        ab.mask_mode = self.mask_mode.unwrap_or(ab.mask_mode);
        ab.actor_branch = self.actor_branch.unwrap_or(ab.actor_branch);
        ab.wo_channel = self.wo_channel.unwrap_or(ab.wo_channel);
        ab.hanning = self.hanning.unwrap_or(ab.hanning);
        ab.scale_weight = self.scale_weight.unwrap_or(ab.scale_weight);
        cfg.train.epochs = self.epochs.unwrap_or(cfg.train.epochs);
        cfg.train.lr = self.lr.unwrap_or(cfg.train.lr);
        if self.top_k.is_some() {
            cfg.eval.top_k = self.top_k;
        }
        Ok(cfg.resolved()?)
    }

    fn data_dir(&self) -> PathBuf {
        self.data.clone().unwrap_or_else(|| self.out.join("data"))
    }

    fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join(CHECKPOINT_FILE))
    }

    fn load_model(&self, cfg: &RunConfig) -> Result<Model> {
        let ckpt = load_checkpoint_for(&self.checkpoint_path(), &cfg.model)?;
        Ok(Model::from_checkpoint(ckpt)?)
    }
}

fn subset_counts(ds: &Dataset) -> String {
    let mut counts: BTreeMap<Subset, usize> = Subset::ALL.iter().map(|&s| (s, 0)).collect();
    for scene in &ds.scenes {
        *counts.entry(Subset::of(&scene.annotation)).or_default() += 1;
    }
    let mut line = format!("{}: {} scenes", ds.split.name(), ds.scenes.len());
    for (subset, n) in counts {
        let _ = write!(line, "  {} {n}", subset.name());
    }
    line
}

fn cmd_synth(args: &Common) -> Result<()> {
    let cfg = args.resolve()?;
    let dir = args.data_dir();
    ensure_dir(&dir)?;
    for split in [Split::Train, Split::Test] {
        let ds = generate_split(&cfg.synth, &cfg.data, split)?;
        write_dataset(&dir, &ds)?;
        println!("{}", subset_counts(&ds));
    }
    cfg.write_snapshot(&dir)?;
    Ok(())
}

fn cmd_train(args: &Common) -> Result<()> {
    let cfg = args.resolve()?;
    let ds = read_dataset(&args.data_dir(), Split::Train)?;
    let total = cfg.train.epochs;
    let outcome = train(&cfg, &ds, |s| {
        println!(
            "epoch {}/{total}  examples {}  loss {:.6}  actor {:.6}  object {:.6}",
            s.epoch, s.examples, s.mean_loss, s.mean_actor_loss, s.mean_object_loss
        )
    })?;
    ensure_dir(&args.out)?;
    let mut log = String::new();
    for stats in &outcome.epochs {
        log.push_str(&serde_json::to_string(stats)?);
        log.push('\n');
    }
    let log_path = args.out.join(LOSS_LOG);
    std::fs::write(&log_path, log).map_err(|e| Error::Io {
        path: log_path.clone(),
        source: e,
    })?;
    let ckpt_path = args.checkpoint_path();
    if let Some(parent) = ckpt_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    save_checkpoint(&ckpt_path, &outcome.checkpoint)?;
    cfg.write_snapshot(&args.out)?;
    println!("wrote {}", ckpt_path.display());
    Ok(())
}

fn cmd_eval(args: &Common) -> Result<()> {
    let cfg = args.resolve()?;
    let model = args.load_model(&cfg)?;
    let data = args.data_dir();
    let test = read_dataset(&data, Split::Test)?;
    // The rare split needs training counts; without a train split it is skipped.
    let train_counts = match read_dataset(&data, Split::Train) {
        Ok(train) => hoi_core::eval::class_counts(
            train.scenes.iter().map(|s| &s.annotation),
            cfg.synth.num_verbs,
            cfg.synth.num_categories,
        ),
        Err(Error::MissingArtifact(_)) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let outcome = evaluate_model(&cfg, &model, &test, train_counts)?;
    let dir = args.out.join("eval");
    ensure_dir(&dir)?;
    write_json(&dir.join(REPORT_JSON), &outcome.report)?;
    let table = outcome.report.to_table();
    write_text(&dir.join(REPORT_TABLE), &table)?;
    write_json(&dir.join(PREDICTIONS_JSON), &outcome.predictions)?;
    cfg.write_snapshot(&dir)?;
    print!("{table}");
    Ok(())
}

fn cmd_infer(args: &Common, split: Split) -> Result<()> {
    let cfg = args.resolve()?;
    let model = args.load_model(&cfg)?;
    let ds = read_dataset(&args.data_dir(), split)?;
    let predictions = predict_dataset(&cfg, &model, &ds)?;
    let dir = args.out.join("infer");
    ensure_dir(&dir)?;
    let path = dir.join(PREDICTIONS_JSON);
    write_json(&path, &predictions)?;
    cfg.write_snapshot(&dir)?;
    let n: usize = predictions.iter().map(|p| p.predictions.hoi.len()).sum();
    println!("{} scenes, {n} triplets -> {}", predictions.len(), path.display());
    Ok(())
}

fn cmd_heatmap(args: &Common, split: Split, scene: u64, actor: usize) -> Result<()> {
    let cfg = args.resolve()?;
    let model = args.load_model(&cfg)?;
    let ds = read_dataset(&args.data_dir(), split)?;
    let found = ds.scenes.iter().find(|s| s.index == scene).ok_or_else(|| {
        Error::OutOfRange(format!("scene {scene} is not in the {} split", split.name()))
    })?;
    let maps = run_heatmaps(&cfg, &model, found, actor)?;
    let dir = args.out.join("heatmaps").join(format!("scene_{scene:05}_actor_{actor}"));
    for path in export_heatmaps(&dir, &maps)? {
        println!("{}", path.display());
    }
    cfg.write_snapshot(&dir)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Infer { common, split } => cmd_infer(&common, split),
        Command::Heatmap {
            common,
            split,
            scene,
            actor,
        } => cmd_heatmap(&common, split, scene, actor),
    }
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            eprintln!("{}", error_line("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.chain().find_map(|c| c.downcast_ref::<Error>()).map_or("other", Error::kind);
            eprintln!("{}", error_line(kind, &format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
