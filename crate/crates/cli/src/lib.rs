// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line front end for `tfa-core`.
//!
//! Every command takes an optional TOML `--config`, lets flags override it,
//! and writes the resolved config as `<command>.toml` into `--out`.
//! Exit codes: 0 success, 2 usage or config, 3 input data, 4 numeric.

pub mod analyze;
pub mod config;
pub mod encode;
pub mod failure;
pub mod io;
pub mod profile;
pub mod synth;
pub mod train;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use failure::{Failure, Outcome, Status};

#[derive(Debug, Parser)]
#[command(name = "tfa", version, about = "Sparse autoencoders and temporal feature analysis for activation sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML config; flags take precedence over its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct InputArgs {
    /// `TFA1` activation file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Expected layer index recorded in the input's sidecar.
    #[arg(long)]
    pub layer: Option<i64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic activation sets.
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: synth::SynthArgs,
    },
    /// U-statistic, autocorrelation and context-projection profiles.
    Profile {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
        /// Also write PPM/SVG heatmaps of the similarity maps.
        #[arg(long = "emit-heatmaps")]
        emit_heatmaps: bool,
    },
    /// Train an SAE or a temporal model.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        args: train::TrainArgs,
    },
    /// Encode a set with a trained model into a `TFAC` code file.
    Encode {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
        /// Model checkpoint.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run an analysis pipeline.
    Analyze {
        which: analyze::Analysis,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Control set for the garden-path battery.
        #[arg(long)]
        control: Option<PathBuf>,
        /// Comma-separated input noise scales.
        #[arg(long, value_delimiter = ',')]
        sigmas: Option<Vec<f64>>,
        /// Cosine-distance threshold for flat clusters.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long = "emit-heatmaps")]
        emit_heatmaps: bool,
    },
}

fn set_input(input: &InputArgs, path: &mut Option<PathBuf>, layer: &mut Option<i64>) {
    config::merge(input.input.clone().map(Some), path);
    if input.layer.is_some() {
        *layer = input.layer;
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Outcome<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let text = e.render().to_string();
            let text = text.trim_end().trim_start_matches("error: ");
            return Err(Failure::new(Status::Usage, anyhow::anyhow!("{text}")));
        }
    };
    match cli.command {
        Command::Synth { common, args } => {
            let cfg = synth::resolve(common.config.as_deref(), common.seed, &args)?;
            let out = config::out_dir(common.out.as_deref())?;
            config::write_resolved(&out, "synth", &cfg)?;
            synth::run(&cfg, &out)
        }
        Command::Profile { common, input, emit_heatmaps } => {
            let mut cfg: profile::ProfileConfig = config::load(common.config.as_deref())?;
            set_input(&input, &mut cfg.input, &mut cfg.layer);
            config::merge(common.seed, &mut cfg.seed);
            cfg.emit_heatmaps |= emit_heatmaps;
            let out = config::out_dir(common.out.as_deref())?;
            config::write_resolved(&out, "profile", &cfg)?;
            profile::run(&cfg, &out)
        }
        Command::Train { common, input, args } => {
            let cfg = train::resolve(common.config.as_deref(), common.seed, input.input.clone(), input.layer, &args)?;
            let out = config::out_dir(common.out.as_deref())?;
            config::write_resolved(&out, "train", &cfg)?;
            train::run(&cfg, args.resume.as_deref(), &out)
        }
        Command::Encode { common, input, model } => {
            let mut cfg: encode::EncodeConfig = config::load(common.config.as_deref())?;
            set_input(&input, &mut cfg.input, &mut cfg.layer);
            config::merge(model.map(Some), &mut cfg.model);
            let out = config::out_dir(common.out.as_deref())?;
            config::write_resolved(&out, "encode", &cfg)?;
            encode::run(&cfg, &out)
        }
        Command::Analyze {
            which,
            common,
            input,
            model,
            control,
            sigmas,
            threshold,
            emit_heatmaps,
        } => {
            let mut cfg: analyze::AnalyzeConfig = config::load(common.config.as_deref())?;
            set_input(&input, &mut cfg.input, &mut cfg.layer);
            config::merge(model.map(Some), &mut cfg.model);
            config::merge(control.map(Some), &mut cfg.control);
            config::merge(common.seed, &mut cfg.seed);
            config::merge(sigmas, &mut cfg.sigmas);
            config::merge(threshold, &mut cfg.threshold);
            cfg.emit_heatmaps |= emit_heatmaps;
            let out = config::out_dir(common.out.as_deref())?;
            config::write_resolved(&out, &format!("analyze-{}", which.name()), &cfg)?;
            analyze::run(which, &cfg, &out)
        }
    }
}
