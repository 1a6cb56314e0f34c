//! Data source resolution: IDX files on disk or the synthetic corpus.

use std::path::{Path, PathBuf};

use cmt_core::dataset::{load_idx, MnistSet, Split};
use cmt_core::synth::synthetic_set_with;
use cmt_core::{CmtError, Result};

use crate::runcfg::Effective;

const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Finds `name` or `name.gz` under `dir`.
fn find_idx(dir: &Path, name: &str) -> Result<PathBuf> {
    let raw = dir.join(name);
    if raw.is_file() {
        return Ok(raw);
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.is_file() {
        return Ok(gz);
    }
    Err(CmtError::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("missing {name}[.gz] in {}", dir.display()),
    )))
}

fn load_split(dir: &Path, split: Split) -> Result<MnistSet> {
    let (images, labels) = match split {
        Split::Train => (TRAIN_IMAGES, TRAIN_LABELS),
        Split::Test => (TEST_IMAGES, TEST_LABELS),
    };
    load_idx(&find_idx(dir, images)?, &find_idx(dir, labels)?, split)
}

/// Loads the train and test pools named by the effective configuration.
pub fn load_pools(eff: &Effective) -> Result<(MnistSet, MnistSet)> {
    if eff.synthetic {
        let seed = eff.sweep.forest.seed;
        let train = synthetic_set_with(&eff.synth, eff.synth_train_pool, Split::Train, seed);
        let test = synthetic_set_with(&eff.synth, eff.synth_test_pool, Split::Test, seed);
        return Ok((train, test));
    }
    let dir = eff.data_dir.as_deref().expect("resolve() requires a source");
    Ok((load_split(dir, Split::Train)?, load_split(dir, Split::Test)?))
}
