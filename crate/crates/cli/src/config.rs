//! Run configuration: built-in defaults, overlaid by an optional JSON file,
//! overlaid by flags given on the command line.

use std::path::Path;

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::{Deserialize, Serialize};
use xscope_core::dataset::align::AlignConfig;
use xscope_core::dataset::{AugmentConfig, Split, SplitFractions, SplitOrder};
use xscope_core::gan::{DiscriminatorConfig, GeneratorConfig};
use xscope_core::metrics::SsimOptions;
use xscope_core::psf::PsfParams;
use xscope_core::training::TrainConfig;

/// Emission wavelength per colour channel, in nm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Wavelengths {
    pub red: f64,
    pub green: f64,
    pub blue: f64,
}

impl Default for Wavelengths {
    fn default() -> Self {
        Wavelengths {
            red: 565.0,
            green: 520.0,
            blue: 461.0,
        }
    }
}

impl Wavelengths {
    /// In tensor channel order (R, G, B); a single channel uses green.
    pub fn for_channels(&self, channels: usize) -> Vec<f64> {
        match channels {
            1 => vec![self.green],
            _ => vec![self.red, self.green, self.blue],
        }
    }
}

/// Everything a subcommand may read. `seed` replaces the seeds nested in
/// the other sections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub align: AlignConfig,
    pub augment: AugmentConfig,
    pub fractions: SplitFractions,
    pub order: SplitOrder,
    pub train: TrainConfig,
    pub psf: PsfParams,
    pub wavelengths_nm: Wavelengths,
    pub deconvolve_iterations: usize,
    pub ssim: SsimOptions,
    pub split: Split,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            align: AlignConfig::default(),
            augment: AugmentConfig::default(),
            fractions: SplitFractions::default(),
            order: SplitOrder::default(),
            train: TrainConfig::default(),
            psf: PsfParams::default(),
            wavelengths_nm: Wavelengths::default(),
            deconvolve_iterations: 10,
            ssim: SsimOptions::default(),
            split: Split::Test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Depth-4 generator and 10-block discriminator
    Full,
    /// Depth-2 generator and 2-block discriminator, for CPU-scale runs
    Reduced,
}

impl Preset {
    pub fn apply(self, train: &mut TrainConfig) {
        (train.generator, train.discriminator) = match self {
            Preset::Full => (GeneratorConfig::default(), DiscriminatorConfig::default()),
            Preset::Reduced => (GeneratorConfig::reduced(), DiscriminatorConfig::reduced()),
        };
    }
}

pub fn load_file(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("config {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
}

/// Flag overlay: each setter runs only when its flag was typed.
pub struct Overrides<'a> {
    matches: &'a ArgMatches,
}

impl<'a> Overrides<'a> {
    pub fn new(matches: &'a ArgMatches) -> Self {
        Overrides { matches }
    }

    pub fn given(&self, id: &str) -> bool {
        matches!(self.matches.value_source(id), Some(ValueSource::CommandLine))
    }

    pub fn set<T: Clone + Send + Sync + 'static>(&self, id: &str, target: &mut T) {
        if self.given(id) {
            if let Some(v) = self.matches.get_one::<T>(id) {
                *target = v.clone();
            }
        }
    }
}

/// Defaults, then the file at `path` if any; flags are applied by the caller.
pub fn base(path: Option<&Path>) -> Result<RunConfig, String> {
    match path {
        Some(p) => load_file(p),
        None => Ok(RunConfig::default()),
    }
}

/// Copies the top-level seed into the sections that carry their own.
pub fn finish(mut cfg: RunConfig) -> RunConfig {
    cfg.train.seed = cfg.seed;
    cfg
}
