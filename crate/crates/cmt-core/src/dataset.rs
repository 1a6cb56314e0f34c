//! Dataset ingestion and target synthesis.
//!
//! Loads MNIST-style IDX image/label pairs (raw or gzip), computes the
//! silhouette-perimeter regression target, builds one-vs-rest class
//! indicator targets, and assembles rotated evaluation sets whose targets
//! always come from the unrotated images.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, CmtError, Result};
use crate::grid::ImageGrid;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Which half of the corpus a set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// A labeled image set with intensities scaled to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct MnistSet {
    pub images: Vec<ImageGrid>,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl MnistSet {
    pub fn new(images: Vec<ImageGrid>, labels: Vec<u8>, split: Split) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(CmtError::Consistency(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(MnistSet {
            images,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Deterministic desk-scale subset: seeded shuffle, then first `n`
    /// (the whole shuffled set when `n` exceeds the length).
    pub fn seeded_subset(&self, n: usize, seed: u64) -> MnistSet {
        let mut order: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        order.truncate(n.min(self.len()));
        MnistSet {
            images: order.iter().map(|&i| self.images[i].clone()).collect(),
            labels: order.iter().map(|&i| self.labels[i]).collect(),
            split: self.split,
        }
    }

    /// Serializes back to IDX bytes (images, labels). Loading these bytes
    /// reproduces the set; loading-then-serializing reproduces input bytes.
    pub fn to_idx_bytes(&self) -> Result<(Vec<u8>, Vec<u8>)> {
        let (h, w) = match self.images.first() {
            Some(img) => (img.height(), img.width()),
            None => (0, 0),
        };
        let mut images = Vec::with_capacity(16 + self.len() * h * w);
        images.write_u32::<BigEndian>(IMAGE_MAGIC)?;
        images.write_u32::<BigEndian>(self.len() as u32)?;
        images.write_u32::<BigEndian>(h as u32)?;
        images.write_u32::<BigEndian>(w as u32)?;
        for img in &self.images {
            if img.height() != h || img.width() != w {
                return Err(CmtError::Consistency(
                    "images in one set must share a shape".into(),
                ));
            }
            for &v in img.values() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(invalid_argument(format!(
                        "intensity {v} outside [0,1] cannot be written as a byte"
                    )));
                }
                images.push((v * 255.0).round() as u8);
            }
        }
        let mut labels = Vec::with_capacity(8 + self.len());
        labels.write_u32::<BigEndian>(LABEL_MAGIC)?;
        labels.write_u32::<BigEndian>(self.len() as u32)?;
        labels.extend_from_slice(&self.labels);
        Ok((images, labels))
    }

    /// Writes the set as an IDX file pair; paths ending in `.gz` are
    /// gzip-compressed.
    pub fn write_idx(&self, images_path: &Path, labels_path: &Path) -> Result<()> {
        let (images, labels) = self.to_idx_bytes()?;
        write_maybe_gz(images_path, &images)?;
        write_maybe_gz(labels_path, &labels)?;
        Ok(())
    }
}

fn write_maybe_gz(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(bytes)?;
        enc.finish()?;
    } else {
        let mut file = file;
        file.write_all(bytes)?;
    }
    Ok(())
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    // Sniff the gzip magic rather than trusting the extension.
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Loads an IDX image/label file pair (raw or gzip) into an [`MnistSet`].
///
/// Pixel bytes are divided by 255 into `[0, 1]`. The image file must carry
/// magic `0x00000803` (count × rows × cols of unsigned bytes), the label
/// file `0x00000801`.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<MnistSet> {
    let image_bytes = read_maybe_gz(images_path)?;
    let label_bytes = read_maybe_gz(labels_path)?;
    let mut r = &image_bytes[..];
    let magic = r.read_u32::<BigEndian>()?;
    if magic != IMAGE_MAGIC {
        return Err(CmtError::Format(format!(
            "image file {}: magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let count = r.read_u32::<BigEndian>()? as usize;
    let rows = r.read_u32::<BigEndian>()? as usize;
    let cols = r.read_u32::<BigEndian>()? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    r.read_exact(&mut pixels)?;

    let mut r = &label_bytes[..];
    let magic = r.read_u32::<BigEndian>()?;
    if magic != LABEL_MAGIC {
        return Err(CmtError::Format(format!(
            "label file {}: magic {magic:#010x}, expected {LABEL_MAGIC:#010x}",
            labels_path.display()
        )));
    }
    let label_count = r.read_u32::<BigEndian>()? as usize;
    if label_count != count {
        return Err(CmtError::Consistency(format!(
            "{count} images but {label_count} labels"
        )));
    }
    let mut labels = vec![0u8; count];
    r.read_exact(&mut labels)?;

    let images = pixels
        .chunks_exact(rows * cols)
        .map(|chunk| {
            let values = chunk.iter().map(|&b| b as f64 / 255.0).collect();
            ImageGrid::new(rows, cols, values)
        })
        .collect::<Result<Vec<_>>>()?;
    MnistSet::new(images, labels, split)
}

/// Parameters of the perimeter target: binarization threshold τ and
/// output scale α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerimeterConfig {
    pub threshold: f64,
    pub scale: f64,
}

impl Default for PerimeterConfig {
    fn default() -> Self {
        PerimeterConfig {
            threshold: 0.1,
            scale: 0.01,
        }
    }
}

impl PerimeterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(invalid_argument(format!(
                "perimeter threshold must lie strictly in (0,1), got {}",
                self.threshold
            )));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(invalid_argument(format!(
                "perimeter scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }
}

/// Silhouette perimeter of the thresholded mask, scaled by α.
///
/// The mask is `I > τ`; the returned value is α times the number of
/// vertical plus horizontal neighbor disagreements, with positions outside
/// the grid treated as mask value 0 — so silhouette edges touching the
/// image border are counted, and interior holes contribute their own
/// boundary.
pub fn perimeter_target(image: &ImageGrid, cfg: &PerimeterConfig) -> f64 {
    let (h, w) = (image.height(), image.width());
    let mask = |r: i64, c: i64| -> bool {
        if r < 0 || c < 0 || r >= h as i64 || c >= w as i64 {
            false
        } else {
            image.get(r as usize, c as usize) > cfg.threshold
        }
    };
    let mut transitions = 0u64;
    // Vertical neighbors: compare (r-1, c) with (r, c) for r in 0..=H so
    // both the top and bottom borders are crossed; same for horizontal.
    for c in 0..w as i64 {
        for r in 0..=h as i64 {
            if mask(r - 1, c) != mask(r, c) {
                transitions += 1;
            }
        }
    }
    for r in 0..h as i64 {
        for c in 0..=w as i64 {
            if mask(r, c - 1) != mask(r, c) {
                transitions += 1;
            }
        }
    }
    cfg.scale * transitions as f64
}

/// What a dataset's targets encode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Perimeter,
    ClassIndicator(u8),
}

/// Provenance a derived dataset carries along.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub split: Split,
    pub target: TargetKind,
    /// Rotation applied to the inputs (never to the targets).
    pub rotation_degrees: f64,
}

/// Images paired with scalar regression targets.
#[derive(Debug, Clone)]
pub struct RegressionDataset {
    pub inputs: Vec<ImageGrid>,
    pub targets: Vec<f64>,
    pub meta: DatasetMeta,
}

impl RegressionDataset {
    pub fn new(inputs: Vec<ImageGrid>, targets: Vec<f64>, meta: DatasetMeta) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(CmtError::Consistency(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        Ok(RegressionDataset {
            inputs,
            targets,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Perimeter-target dataset over the unrotated images.
pub fn perimeter_dataset(set: &MnistSet, cfg: &PerimeterConfig) -> RegressionDataset {
    let targets = set
        .images
        .iter()
        .map(|img| perimeter_target(img, cfg))
        .collect();
    RegressionDataset {
        inputs: set.images.clone(),
        targets,
        meta: DatasetMeta {
            split: set.split,
            target: TargetKind::Perimeter,
            rotation_degrees: 0.0,
        },
    }
}

/// One-vs-rest indicator targets: 1.0 where `label == class_id`, else 0.0.
pub fn one_vs_rest_targets(set: &MnistSet, class_id: u8) -> Result<RegressionDataset> {
    if class_id > 9 {
        return Err(invalid_argument(format!(
            "class id must be a digit 0-9, got {class_id}"
        )));
    }
    let targets = set
        .labels
        .iter()
        .map(|&l| if l == class_id { 1.0 } else { 0.0 })
        .collect();
    Ok(RegressionDataset {
        inputs: set.images.clone(),
        targets,
        meta: DatasetMeta {
            split: set.split,
            target: TargetKind::ClassIndicator(class_id),
            rotation_degrees: 0.0,
        },
    })
}

/// Rotated evaluation set: inputs are the images rotated by `angle` with
/// fill 0; targets are the perimeters of the *unrotated* images.
pub fn make_rotated_eval(
    set: &MnistSet,
    angle_degrees: f64,
    cfg: &PerimeterConfig,
) -> Result<RegressionDataset> {
    let mut inputs = Vec::with_capacity(set.len());
    let mut targets = Vec::with_capacity(set.len());
    for img in &set.images {
        inputs.push(img.rotate_bilinear(angle_degrees, 0.0)?);
        targets.push(perimeter_target(img, cfg));
    }
    Ok(RegressionDataset {
        inputs,
        targets,
        meta: DatasetMeta {
            split: set.split,
            target: TargetKind::Perimeter,
            rotation_degrees: angle_degrees,
        },
    })
}
