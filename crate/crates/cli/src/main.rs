use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use camprompt::classifier::{load_model, train, ClassifierConfig, EntrySource};
use camprompt::dataset::{ingest, load_split, scan_split, DatasetLayout, LabeledImage, Split, DEFAULT_MIN_PIXEL_COUNT};
use camprompt::metrics::{render_table, EvaluationReport};
use camprompt::pipeline::{self, run_batch, RunConfig, RunMode, REPORT_DIR};
use camprompt::segmenter::{
    CommandBackend, FloodFillBackend, GroundTruthBackend, InputMode, MaskStrategy, PromptableSegmenter, SegmenterConfig,
};
use camprompt::synth::{write_dataset, SynthConfig};

#[derive(Parser)]
#[command(name = "camprompt", version, about = "Class-activation point prompts for promptable segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset and print per-split class statistics as JSON.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_PIXEL_COUNT)]
        min_pixels: u64,
    },
    /// Train the multi-label classifier on the train split.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// TOML classifier config; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Pretrained backbone weights (safetensors) to fine-tune from.
        #[arg(long)]
        backbone: Option<PathBuf>,
    },
    /// Classify, localise, prompt and segment a split.
    Run(RunArgs),
    /// Print a comparison table of evaluated runs.
    Report {
        #[arg(long)]
        runs: PathBuf,
        /// Run ids to include; all evaluated runs when omitted.
        #[arg(long = "run")]
        run_ids: Vec<String>,
        /// Emit the reports as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Serve the review API over a runs directory.
    Serve {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Exports are written to `{export_root}/{run_id}`.
        #[arg(long, default_value = "exports")]
        export_root: PathBuf,
    },
    /// Write a run's accepted masks as a trainable dataset.
    Export {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        run: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the synthetic coloured-shapes dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        n_train: usize,
        #[arg(long, default_value_t = 50)]
        n_test: usize,
        #[arg(long, default_value_t = 128)]
        size: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    /// Colour region growing from the prompt pixel.
    FloodFill,
    /// Ground-truth class mask under the prompt (upper bound).
    GroundTruth,
    /// External program speaking the JSON reply protocol.
    Command,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    model: PathBuf,
    /// Parent directory of run directories.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "auto-eval", value_parser = parse::<RunMode>)]
    mode: RunMode,
    #[arg(long, default_value = "original", value_parser = parse::<InputMode>)]
    input: InputMode,
    #[arg(long, default_value = "multi", value_parser = parse::<MaskStrategy>)]
    masks: MaskStrategy,
    #[arg(short = 'k', long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 10.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, value_enum, default_value = "flood-fill")]
    backend: BackendKind,
    /// Flood-fill tolerances, tightest first.
    #[arg(long, value_delimiter = ',', default_value = "40,80,120")]
    tolerances: Vec<u8>,
    #[arg(long, required_if_eq("backend", "command"))]
    backend_cmd: Option<PathBuf>,
    /// Extra argument for the backend program; repeatable.
    #[arg(long = "backend-arg", allow_hyphen_values = true)]
    backend_args: Vec<String>,
    #[arg(long)]
    no_cams: bool,
}

fn parse<T: FromStr<Err = camprompt::Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: camprompt::Error| e.to_string())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = dispatch(Cli::parse().command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest { data, min_pixels } => print_json(&ingest(&data, min_pixels)?),
        Command::Train {
            data,
            config,
            out,
            backbone,
        } => {
            let cfg = match &config {
                Some(path) => load_config(path)?,
                None => ClassifierConfig::default(),
            };
            let layout = DatasetLayout::detect(&data);
            let catalog = layout.load_catalog()?;
            let entries = scan_split(&layout, Split::Train, true)?;
            let source = EntrySource {
                entries: &entries,
                catalog: &catalog,
                min_pixel_count: cfg.min_pixel_count,
            };
            let outcome = train(&source, &catalog, &cfg, backbone.as_deref(), &out)?;
            print_json(&serde_json::json!({
                "model": outcome.dir,
                "fingerprint": outcome.fingerprint.id(),
                "epoch_losses": outcome.epoch_losses,
            }))
        }
        Command::Run(args) => run(args),
        Command::Report { runs, run_ids, json } => report(&runs, &run_ids, json),
        Command::Serve {
            runs,
            port,
            host,
            export_root,
        } => {
            let state = camprompt_server::AppState {
                runs_root: runs,
                export_root,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(camprompt_server::serve(state, SocketAddr::new(host, port)))?;
            Ok(())
        }
        Command::Export { runs, run, out } => {
            let dir = pipeline::run_dir(&runs, &run)?;
            print_json(&pipeline::export(&dir, &out)?)
        }
        Command::Synth {
            out,
            n_train,
            n_test,
            size,
            seed,
        } => {
            write_dataset(&out, &SynthConfig { n_train, n_test, size, seed })?;
            println!("{}", out.display());
            Ok(())
        }
    }
}

fn load_config(path: &Path) -> Result<ClassifierConfig> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    let cfg: ClassifierConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_images(data: &Path, split: Split, mode: RunMode, min_pixels: u64) -> Result<Vec<LabeledImage>> {
    Ok(match mode {
        RunMode::AutoEval => load_split(data, split, min_pixels)?.1,
        // Review runs take whatever images exist; masks are optional.
        RunMode::Review => {
            let layout = DatasetLayout::detect(data);
            let catalog = layout.load_catalog()?;
            scan_split(&layout, split, false)?
                .iter()
                .map(|e| e.load(&catalog, min_pixels))
                .collect::<camprompt::Result<_>>()?
        }
    })
}

fn run(a: RunArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let split: Split = a.split.parse()?;
    let layout = DatasetLayout::detect(&a.data);
    if layout.load_catalog()? != *model.catalog() {
        bail!("{} and model {} use different class catalogs", a.data.display(), a.model.display());
    }
    let images = load_images(&a.data, split, a.mode, model.fingerprint.config.min_pixel_count)?;
    let backend: Box<dyn PromptableSegmenter> = match a.backend {
        BackendKind::FloodFill => Box::new(FloodFillBackend { tolerances: a.tolerances }),
        BackendKind::GroundTruth => {
            let maps = images
                .iter()
                .filter_map(|i| i.gt_mask.clone().map(|m| (i.image_id.clone(), m)))
                .collect();
            Box::new(GroundTruthBackend::new(maps))
        }
        BackendKind::Command => Box::new(CommandBackend {
            program: a.backend_cmd.expect("enforced by clap"),
            args: a.backend_args,
        }),
    };
    let cfg = RunConfig {
        mode: a.mode,
        segmenter: SegmenterConfig {
            input_mode: a.input,
            blur_sigma: a.sigma,
            mask_strategy: a.masks,
            k_proposals: a.k,
        },
        decision_threshold: a.threshold,
        dump_cams: !a.no_cams,
        ..RunConfig::default()
    };
    let outcome = run_batch(
        &images,
        model.catalog(),
        &model.classifier,
        &model.fingerprint.id(),
        backend.as_ref(),
        &cfg,
        &a.out,
    )?;
    let m = &outcome.manifest;
    if m.flagged {
        log::warn!("run {} flagged: {} of {} images failed", m.run_id, m.n_failed, m.images.len());
    }
    print_json(&serde_json::json!({
        "run_id": m.run_id,
        "dir": outcome.dir,
        "setting": m.setting,
        "n_images": m.images.len(),
        "n_failed": m.n_failed,
        "flagged": m.flagged,
        "conservation": m.conservation,
        "mIoU": outcome.report.as_ref().map(|r| r.summary.miou),
    }))
}

fn report(runs: &Path, run_ids: &[String], json: bool) -> Result<()> {
    let ids: Vec<String> = if run_ids.is_empty() {
        pipeline::list_runs(runs)?.into_iter().map(|r| r.run_id).collect()
    } else {
        run_ids.to_vec()
    };
    let mut reports = Vec::new();
    for id in &ids {
        let dir = pipeline::run_dir(runs, id)?.join(REPORT_DIR);
        if dir.is_dir() {
            reports.push(EvaluationReport::read(&dir)?);
        } else if !run_ids.is_empty() {
            bail!("run `{id}` has no evaluation report");
        }
    }
    if reports.is_empty() {
        bail!("no evaluated runs under {}", runs.display());
    }
    if json {
        print_json(&reports)
    } else {
        print!("{}", render_table(&reports));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_smoke_config_is_valid() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml");
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.input_resolution, 64);
        assert_eq!(cfg.backbone.window_size, 1);
        assert_eq!(cfg.augmentation, camprompt::dataset::AugmentationConfig::identity(64));
    }
}
