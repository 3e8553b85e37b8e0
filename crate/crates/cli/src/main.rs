//! `xscope`: prepare, train, enhance, deconvolve, evaluate, report.
//!
//! Exit codes: 0 success, 1 finished with per-item failures, 2 usage or
//! input errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use config::{Overrides, Preset, RunConfig};
use xscope_core::dataset::{Split, SplitOrder};

#[derive(Parser, Debug)]
#[command(name = "xscope", version, about = "Wide-field to confocal image enhancement pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pair, align, augment and split raw LQ/HQ images into a dataset
    Prepare(PrepareArgs),
    /// Train the generator and discriminator on a prepared dataset
    Train(TrainArgs),
    /// Run a trained generator over images
    Enhance(EnhanceArgs),
    /// Richardson-Lucy deconvolution with a per-channel Airy PSF
    Deconvolve(DeconvolveArgs),
    /// Score LQ, generated and deconvolved images against HQ
    Evaluate(EvaluateArgs),
    /// Summary table, significance tests and box plots from metrics.csv
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; flags given here override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every random choice
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the effective configuration as JSON and exit
    #[arg(long)]
    print_config: bool,
}

#[derive(Args, Debug)]
struct PrepareArgs {
    /// Directory of low-quality (wide-field) images
    #[arg(long)]
    lq: PathBuf,
    /// Directory of high-quality (confocal) images
    #[arg(long)]
    hq: PathBuf,
    /// Output dataset directory
    #[arg(long)]
    out: PathBuf,
    /// Side of the square aligned patch, in pixels
    #[arg(long, default_value_t = 256)]
    patch_size: usize,
    /// Augmented copies per aligned pair
    #[arg(long, default_value_t = 3)]
    augment: usize,
    /// Minimum correlation of an aligned pair
    #[arg(long, default_value_t = 0.2)]
    min_correlation: f64,
    /// Split the originals before augmenting, so augmented copies stay in their original's split
    #[arg(long)]
    split_first: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// manifest.json written by `prepare`
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for checkpoints and the training log
    #[arg(long)]
    out: PathBuf,
    /// Training iterations (one discriminator and one generator update each)
    #[arg(long, default_value_t = 500_000)]
    iterations: u64,
    /// Network size
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    preset: Preset,
    /// Adam learning rate for both networks
    #[arg(long, default_value_t = 1e-5)]
    learning_rate: f64,
    /// Iterations between generator checkpoints
    #[arg(long, default_value_t = 10_000)]
    checkpoint_every: u64,
    /// Iterations between validation passes
    #[arg(long, default_value_t = 100)]
    validate_every: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct EnhanceArgs {
    /// Generator checkpoint
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory; files are named `<stem>_generated`
    #[arg(long)]
    out: PathBuf,
    /// Input images
    #[arg(required = true)]
    images: Vec<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct PsfArgs {
    /// Emission wavelength of the red channel, nm
    #[arg(long, default_value_t = 565.0)]
    wavelength_red: f64,
    /// Emission wavelength of the green channel, nm
    #[arg(long, default_value_t = 520.0)]
    wavelength_green: f64,
    /// Emission wavelength of the blue channel, nm
    #[arg(long, default_value_t = 461.0)]
    wavelength_blue: f64,
    /// Objective numerical aperture
    #[arg(long, default_value_t = 1.4)]
    numerical_aperture: f64,
    /// Pixel size in the sample plane, nm
    #[arg(long, default_value_t = 159.0)]
    pixel_size: f64,
    /// Side of the sampled PSF kernel (odd)
    #[arg(long, default_value_t = 65)]
    kernel_size: usize,
    /// Use a one-pixel PSF; deconvolution then returns its input
    #[arg(long)]
    delta_psf: bool,
}

#[derive(Args, Debug)]
struct DeconvolveArgs {
    /// Output directory; files are named `<stem>_deconvolved`
    #[arg(long)]
    out: PathBuf,
    /// Input images
    #[arg(required = true)]
    images: Vec<PathBuf>,
    /// Richardson-Lucy iterations
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    #[command(flatten)]
    psf: PsfArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    Validation,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
            SplitArg::Validation => Split::Validation,
        }
    }
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// manifest.json written by `prepare`
    #[arg(long)]
    manifest: PathBuf,
    /// Generator checkpoint; without it no GEN-vs-HQ rows are produced
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory for metrics.csv
    #[arg(long)]
    out: PathBuf,
    /// Split to evaluate
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    /// Skip the deconvolution baseline
    #[arg(long)]
    no_deconv: bool,
    /// Richardson-Lucy iterations of the baseline
    #[arg(long, default_value_t = 10)]
    deconv_iterations: usize,
    #[command(flatten)]
    psf: PsfArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// metrics.csv written by `evaluate`
    #[arg(long)]
    metrics: PathBuf,
    /// Report directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

/// How a subcommand that ran to the end went.
#[derive(Debug, PartialEq, Eq)]
pub enum Status {
    Done,
    /// Some items failed and were skipped.
    Partial(usize),
}

fn resolve(common: &Common, m: &ArgMatches, apply: impl FnOnce(&Overrides, &mut RunConfig)) -> Result<RunConfig, String> {
    let mut cfg = config::base(common.config.as_deref())?;
    let o = Overrides::new(m);
    o.set("seed", &mut cfg.seed);
    apply(&o, &mut cfg);
    Ok(config::finish(cfg))
}

fn psf_overrides(o: &Overrides, cfg: &mut RunConfig) {
    o.set("wavelength_red", &mut cfg.wavelengths_nm.red);
    o.set("wavelength_green", &mut cfg.wavelengths_nm.green);
    o.set("wavelength_blue", &mut cfg.wavelengths_nm.blue);
    o.set("numerical_aperture", &mut cfg.psf.numerical_aperture);
    o.set("pixel_size", &mut cfg.psf.pixel_size_nm);
    o.set("kernel_size", &mut cfg.psf.kernel_size);
}

fn effective(command: &Command, m: &ArgMatches) -> Result<(RunConfig, bool), String> {
    Ok(match command {
        Command::Prepare(a) => (
            resolve(&a.common, m, |o, c| {
                o.set("patch_size", &mut c.align.patch_size);
                o.set("augment", &mut c.augment.extra_per_sample);
                o.set("min_correlation", &mut c.align.min_correlation);
                if a.split_first {
                    c.order = SplitOrder::SplitThenAugment;
                }
            })?,
            a.common.print_config,
        ),
        Command::Train(a) => (
            resolve(&a.common, m, |o, c| {
                o.set("iterations", &mut c.train.iterations);
                o.set("learning_rate", &mut c.train.adam.learning_rate);
                o.set("checkpoint_every", &mut c.train.checkpoint_every);
                o.set("validate_every", &mut c.train.validate_every);
                if o.given("preset") {
                    a.preset.apply(&mut c.train);
                }
            })?,
            a.common.print_config,
        ),
        Command::Enhance(a) => (resolve(&a.common, m, |_, _| {})?, a.common.print_config),
        Command::Deconvolve(a) => (
            resolve(&a.common, m, |o, c| {
                o.set("iterations", &mut c.deconvolve_iterations);
                psf_overrides(o, c);
            })?,
            a.common.print_config,
        ),
        Command::Evaluate(a) => (
            resolve(&a.common, m, |o, c| {
                o.set("deconv_iterations", &mut c.deconvolve_iterations);
                if o.given("split") {
                    c.split = a.split.into();
                }
                psf_overrides(o, c);
            })?,
            a.common.print_config,
        ),
        Command::Report(a) => (resolve(&a.common, m, |_, _| {})?, a.common.print_config),
    })
}

fn run(command: &Command, cfg: &RunConfig) -> Result<Status, String> {
    match command {
        Command::Prepare(a) => commands::prepare(&a.lq, &a.hq, &a.out, cfg),
        Command::Train(a) => commands::train(&a.manifest, &a.out, cfg),
        Command::Enhance(a) => commands::enhance(&a.checkpoint, &a.images, &a.out),
        Command::Deconvolve(a) => commands::deconvolve(&a.images, &a.out, cfg, a.psf.delta_psf),
        Command::Evaluate(a) => commands::evaluate(
            &a.manifest,
            a.checkpoint.as_deref(),
            &a.out,
            cfg,
            !a.no_deconv,
            a.psf.delta_psf,
        ),
        Command::Report(a) => commands::report(&a.metrics, &a.out),
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let sub = matches.subcommand().map(|(_, m)| m).expect("a subcommand is required");
    let outcome = effective(&cli.command, sub).and_then(|(cfg, print)| {
        if print {
            println!("{}", serde_json::to_string_pretty(&cfg).map_err(|e| e.to_string())?);
            Ok(Status::Done)
        } else {
            run(&cli.command, &cfg)
        }
    });
    match outcome {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::Partial(n)) => {
            eprintln!("xscope: {n} item(s) failed");
            ExitCode::from(1)
        }
        Err(msg) => {
            eprintln!("xscope: {msg}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_of(args: &[&str]) -> RunConfig {
        let m = Cli::command().try_get_matches_from(args).unwrap();
        let cli = Cli::from_arg_matches(&m).unwrap();
        effective(&cli.command, m.subcommand().unwrap().1).unwrap().0
    }

    #[test]
    fn flag_defaults_equal_config_defaults() {
        let d = RunConfig::default();
        for args in [
            &["xscope", "prepare", "--lq", "a", "--hq", "b", "--out", "c"][..],
            &["xscope", "train", "--manifest", "m", "--out", "o"],
            &["xscope", "deconvolve", "--out", "o", "x.tif"],
            &["xscope", "evaluate", "--manifest", "m", "--out", "o"],
        ] {
            assert_eq!(config_of(args), d, "{args:?}");
        }
        let m = Cli::command().try_get_matches_from(["xscope", "evaluate", "--manifest", "m", "--out", "o"]).unwrap();
        let sub = m.subcommand().unwrap().1;
        assert_eq!(Split::from(*sub.get_one::<SplitArg>("split").unwrap()), d.split);
        assert_eq!(*sub.get_one::<usize>("deconv_iterations").unwrap(), d.deconvolve_iterations);
        assert_eq!(*sub.get_one::<f64>("wavelength_red").unwrap(), d.wavelengths_nm.red);
        assert_eq!(*sub.get_one::<f64>("wavelength_green").unwrap(), d.wavelengths_nm.green);
        assert_eq!(*sub.get_one::<f64>("wavelength_blue").unwrap(), d.wavelengths_nm.blue);
        assert_eq!(*sub.get_one::<f64>("numerical_aperture").unwrap(), d.psf.numerical_aperture);
        assert_eq!(*sub.get_one::<f64>("pixel_size").unwrap(), d.psf.pixel_size_nm);
        assert_eq!(*sub.get_one::<usize>("kernel_size").unwrap(), d.psf.kernel_size);
        let t = Cli::command().try_get_matches_from(["xscope", "train", "--manifest", "m", "--out", "o"]).unwrap();
        let t = t.subcommand().unwrap().1;
        assert_eq!(*t.get_one::<f64>("learning_rate").unwrap(), d.train.adam.learning_rate);
        assert_eq!(*t.get_one::<u64>("iterations").unwrap(), d.train.iterations);
        assert_eq!(*t.get_one::<u64>("checkpoint_every").unwrap(), d.train.checkpoint_every);
        assert_eq!(*t.get_one::<u64>("validate_every").unwrap(), d.train.validate_every);
        let p = Cli::command().try_get_matches_from(["xscope", "prepare", "--lq", "a", "--hq", "b", "--out", "c"]).unwrap();
        let p = p.subcommand().unwrap().1;
        assert_eq!(*p.get_one::<usize>("patch_size").unwrap(), d.align.patch_size);
        assert_eq!(*p.get_one::<usize>("augment").unwrap(), d.augment.extra_per_sample);
        assert_eq!(*p.get_one::<f64>("min_correlation").unwrap(), d.align.min_correlation);
    }

    #[test]
    fn preset_replaces_both_networks() {
        let c = config_of(&["xscope", "train", "--manifest", "m", "--out", "o", "--preset", "reduced"]);
        assert_eq!(c.train.generator, xscope_core::gan::GeneratorConfig::reduced());
        assert_eq!(c.train.discriminator, xscope_core::gan::DiscriminatorConfig::reduced());
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
