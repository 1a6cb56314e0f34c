//! Run configuration: JSON file, environment, and flag merging.
//!
//! Precedence, lowest to highest: built-in defaults, the `--config` JSON
//! file, then explicit command-line flags. The merged result is echoed into
//! the run manifest so every run records the configuration it actually used.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use cmt_core::synth::SynthConfig;
use cmt_core::{CmtError, Result, SweepConfig};

/// Name of the environment variable that supplies the data directory when
/// `--data-dir` is absent.
pub const DATA_DIR_ENV: &str = "CMT_DATA_DIR";

/// On-disk configuration: every hyperparameter of a run, JSON-structured.
/// All fields are optional; missing ones keep their defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub sweep: Option<SweepConfig>,
    pub data_dir: Option<PathBuf>,
    pub synthetic: Option<bool>,
    pub synth: Option<SynthConfig>,
    pub synth_train_pool: Option<usize>,
    pub synth_test_pool: Option<usize>,
}

pub fn load_file_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| {
        CmtError::InvalidArgument(format!("cannot read config {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text).map_err(|e| {
        CmtError::InvalidArgument(format!("config {} is not valid: {e}", path.display()))
    })
}

/// Flags shared by every subcommand that touches data or training.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON configuration file; flags given here override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory holding the IDX image/label files
    /// (falls back to $CMT_DATA_DIR).
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,

    /// Generate a deterministic synthetic digit dataset instead of
    /// reading IDX files.
    #[arg(long)]
    pub synthetic: bool,

    /// Synthetic pool sizes, train and test.
    #[arg(long, value_name = "N")]
    pub synth_train_pool: Option<usize>,
    #[arg(long, value_name = "N")]
    pub synth_test_pool: Option<usize>,

    /// Master seed for subsetting, bootstrap, and solver shuffling.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Seeded training subset size.
    #[arg(long, value_name = "N")]
    pub train_subset: Option<usize>,

    /// Seeded test subset size.
    #[arg(long, value_name = "N")]
    pub test_subset: Option<usize>,

    /// Evaluation angles in degrees, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub angles: Option<Vec<f64>>,

    /// Orientation-search candidate angles in degrees, comma-separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub candidates: Option<Vec<f64>>,
}

/// The fully merged configuration a command runs with.
#[derive(Debug, Clone, Serialize)]
pub struct Effective {
    pub sweep: SweepConfig,
    pub data_dir: Option<PathBuf>,
    pub synthetic: bool,
    pub synth: SynthConfig,
    pub synth_train_pool: usize,
    pub synth_test_pool: usize,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<Effective> {
        let file = match &self.config {
            Some(path) => load_file_config(path)?,
            None => FileConfig::default(),
        };
        let mut sweep = file.sweep.unwrap_or_default();
        if let Some(seed) = self.seed {
            sweep.forest.seed = seed;
        }
        if let Some(n) = self.train_subset {
            sweep.train_subset = n;
        }
        if let Some(n) = self.test_subset {
            sweep.test_subset = n;
        }
        if let Some(angles) = &self.angles {
            sweep.angles = angles.clone();
        }
        if let Some(candidates) = &self.candidates {
            sweep.orientation.candidates = candidates.clone();
        }
        let data_dir = self
            .data_dir
            .clone()
            .or(file.data_dir)
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from));
        let synthetic = self.synthetic || file.synthetic.unwrap_or(false);
        let synth_train_pool = self
            .synth_train_pool
            .or(file.synth_train_pool)
            .unwrap_or(6000);
        let synth_test_pool = self
            .synth_test_pool
            .or(file.synth_test_pool)
            .unwrap_or(2500);
        let eff = Effective {
            sweep,
            data_dir,
            synthetic,
            synth: file.synth.unwrap_or_default(),
            synth_train_pool,
            synth_test_pool,
        };
        eff.sweep.validate()?;
        if !eff.synthetic && eff.data_dir.is_none() {
            return Err(CmtError::InvalidArgument(format!(
                "no data source: pass --data-dir, set ${DATA_DIR_ENV}, or use --synthetic"
            )));
        }
        Ok(eff)
    }
}
