use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Axis;

use outpaint_core::checkpoint::load_checkpoint;
use outpaint_core::data::{
    composite_paste, load_image, make_masked_input, save_image, DatasetManifest, Mask, Split,
};
use outpaint_core::error::{Error, Result};
use outpaint_core::eval::{evaluate_model, render_report};
use outpaint_core::train::{fit_from, TrainState};
use outpaint_core::TrainConfig;

#[derive(Parser)]
#[command(name = "outpaint", about = "Train, evaluate, and run outpainting models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// TOML config file; defaults apply for any key it omits
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the run seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the model variant (global-only, local, residual)
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model variant on an image directory
    Train {
        #[command(flatten)]
        common: CommonOpts,
        /// Directory of training images
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Override the epoch count
        #[arg(long)]
        epochs: Option<u32>,
        /// Override the batch size
        #[arg(long)]
        batch_size: Option<usize>,
        /// Where checkpoints and history.csv are written
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        /// Resume from this checkpoint instead of initializing fresh
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate checkpoints on an image directory and print a loss table
    Eval {
        #[command(flatten)]
        common: CommonOpts,
        /// Directory of evaluation images
        #[arg(long)]
        data_dir: PathBuf,
        /// Checkpoints to evaluate, one table row each
        #[arg(long, required = true, num_args = 1..)]
        checkpoint: Vec<PathBuf>,
        /// Also write the table to this file
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Outpaint a single image with a trained checkpoint
    Outpaint {
        #[command(flatten)]
        common: CommonOpts,
        /// Input image
        #[arg(long)]
        image: PathBuf,
        /// Trained checkpoint
        #[arg(long)]
        checkpoint: PathBuf,
        /// Keep the ground-truth interior and only generate the band
        #[arg(long)]
        paste: bool,
        /// Output PNG path
        #[arg(long)]
        out: PathBuf,
    },
}

fn build_config(common: &CommonOpts) -> Result<TrainConfig> {
    let mut cfg = match &common.config {
        Some(path) => TrainConfig::from_file(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(v) = &common.variant {
        cfg.variant = v.parse()?;
    }
    Ok(cfg)
}

fn run_train(
    common: &CommonOpts,
    data_dir: Option<PathBuf>,
    epochs: Option<u32>,
    batch_size: Option<usize>,
    checkpoint_dir: Option<PathBuf>,
    resume: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = build_config(common)?;
    if let Some(d) = data_dir {
        cfg.data_dir = Some(d);
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(b) = batch_size {
        cfg.batch_size = b;
    }
    if let Some(c) = checkpoint_dir {
        cfg.checkpoint_dir = c;
    }
    cfg.validate()?;
    let state = match &resume {
        Some(path) => {
            let state = load_checkpoint(path)?;
            eprintln!(
                "resuming {} from epoch {} (step {})",
                state.variant, state.epoch, state.step
            );
            state
        }
        None => TrainState::init(&cfg),
    };
    let (_state, stats) = fit_from(&cfg, state)?;
    for s in &stats {
        println!(
            "epoch {:>3}  loss_g {:.6}  loss_d {:.6}  loss_rec {:.6}  loss_adv {:.6}  lambda_adv {}",
            s.epoch, s.mean_g, s.mean_d, s.mean_rec, s.mean_adv, s.lambda_adv
        );
    }
    println!("final checkpoint: {}", cfg.checkpoint_dir.join("final.ckpt").display());
    Ok(())
}

fn run_eval(
    common: &CommonOpts,
    data_dir: PathBuf,
    checkpoints: Vec<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = build_config(common)?;
    let mask = Mask::band_with_margin(cfg.outer_size, cfg.inner_size, cfg.inward_margin)?;
    let manifest = DatasetManifest::scan(&data_dir, Split::Val)?;
    let mut reports = Vec::new();
    for path in &checkpoints {
        let state = load_checkpoint(path)?;
        let label = if checkpoints.len() > 1 {
            format!(
                "{} ({})",
                state.variant,
                path.file_stem().and_then(|s| s.to_str()).unwrap_or("ckpt")
            )
        } else {
            state.variant.to_string()
        };
        reports.push(evaluate_model(&state.models, &manifest, &mask, &label)?);
    }
    let table = render_report(&reports);
    print!("{table}");
    if let Some(out) = out {
        std::fs::write(&out, &table).map_err(|e| Error::io(&out, e))?;
    }
    Ok(())
}

fn run_outpaint(
    common: &CommonOpts,
    image: PathBuf,
    checkpoint: PathBuf,
    paste: bool,
    out: PathBuf,
) -> Result<()> {
    let cfg = build_config(common)?;
    let mask = Mask::band_with_margin(cfg.outer_size, cfg.inner_size, cfg.inward_margin)?;
    let state = load_checkpoint(&checkpoint)?;
    let gt = load_image(&image, mask.outer)?;
    let masked = make_masked_input(&gt, &mask)?.insert_axis(Axis(0));
    let y = state.models.gen.forward(&masked)?;
    let generated = y.index_axis(Axis(0), 0).to_owned();
    let framed = composite_paste(&generated, &gt, &mask, paste)?;
    save_image(&framed, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train { common, data_dir, epochs, batch_size, checkpoint_dir, resume } => {
            run_train(&common, data_dir, epochs, batch_size, checkpoint_dir, resume)
        }
        Command::Eval { common, data_dir, checkpoint, out } => {
            run_eval(&common, data_dir, checkpoint, out)
        }
        Command::Outpaint { common, image, checkpoint, paste, out } => {
            run_outpaint(&common, image, checkpoint, paste, out)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
