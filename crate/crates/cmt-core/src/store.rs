//! Portable forest files.
//!
//! Binary container, little-endian throughout:
//!
//! ```text
//! magic    4 bytes  "CMTF"
//! version  u32      currently 1
//! height   u32
//! width    u32
//! n_trees  u32
//! meta     u64 length + JSON bytes (config echo + provenance)
//! trees    per tree: u32 preorder node count, then records
//!          tag u8: 0 = leaf, 1 = internal
//!            leaf:     d×f64 weights, f64 intercept, u64 n_train
//!            internal: d×f64 normal, d×f64 midpoint, d×f64 half_width
//!          (children follow in preorder: left subtree, then right)
//! crc      u32 CRC-32 over every preceding byte
//! ```
//!
//! Loading checks, in order: minimum length, magic, version, checksum,
//! then structure. A truncated or bit-flipped file fails the checksum and
//! is rejected whole — no partial forest is ever returned. The JSON export
//! is a lossless textual twin of the same data for diffing and debugging.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{CmtError, Result};
use crate::forest::{Forest, ForestConfig, Provenance};
use crate::solver::LinearModel;
use crate::tree::TreeNode;

const MAGIC: &[u8; 4] = b"CMTF";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    config: ForestConfig,
    provenance: Provenance,
}

fn count_nodes(tree: &TreeNode) -> u32 {
    match tree {
        TreeNode::Leaf { .. } => 1,
        TreeNode::Internal { left, right, .. } => 1 + count_nodes(left) + count_nodes(right),
    }
}

fn write_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        buf.write_f64::<LittleEndian>(*v).expect("vec write");
    }
}

fn write_node(buf: &mut Vec<u8>, node: &TreeNode) {
    match node {
        TreeNode::Leaf { model, n_train } => {
            buf.push(0);
            write_f64s(buf, &model.weights);
            buf.write_f64::<LittleEndian>(model.intercept)
                .expect("vec write");
            buf.write_u64::<LittleEndian>(*n_train as u64)
                .expect("vec write");
        }
        TreeNode::Internal {
            normal,
            midpoint,
            half_width,
            left,
            right,
        } => {
            buf.push(1);
            write_f64s(buf, normal);
            write_f64s(buf, midpoint);
            write_f64s(buf, half_width);
            write_node(buf, left);
            write_node(buf, right);
        }
    }
}

/// Encodes a forest into the container format.
pub fn forest_to_bytes(forest: &Forest) -> Result<Vec<u8>> {
    forest.validate()?;
    let (h, w) = forest.grid_shape();
    let meta = serde_json::to_vec(&Meta {
        config: forest.config().clone(),
        provenance: forest.provenance().clone(),
    })
    .map_err(|e| CmtError::Format(format!("meta encoding failed: {e}")))?;

    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.write_u32::<LittleEndian>(VERSION).expect("vec write");
    buf.write_u32::<LittleEndian>(h as u32).expect("vec write");
    buf.write_u32::<LittleEndian>(w as u32).expect("vec write");
    buf.write_u32::<LittleEndian>(forest.trees().len() as u32)
        .expect("vec write");
    buf.write_u64::<LittleEndian>(meta.len() as u64)
        .expect("vec write");
    buf.extend_from_slice(&meta);
    for tree in forest.trees() {
        buf.write_u32::<LittleEndian>(count_nodes(tree))
            .expect("vec write");
        write_node(&mut buf, tree);
    }
    let crc = crc32fast::hash(&buf);
    buf.write_u32::<LittleEndian>(crc).expect("vec write");
    Ok(buf)
}

fn corrupt(what: &str) -> CmtError {
    CmtError::Corruption(format!("forest file {what}"))
}

fn read_f64s(cur: &mut Cursor<&[u8]>, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    cur.read_f64_into::<LittleEndian>(&mut out)
        .map_err(|_| corrupt("ends inside a coefficient block"))?;
    Ok(out)
}

fn read_node(cur: &mut Cursor<&[u8]>, d: usize, seen: &mut u32) -> Result<TreeNode> {
    *seen += 1;
    let tag = cur
        .read_u8()
        .map_err(|_| corrupt("ends inside a node record"))?;
    match tag {
        0 => {
            let weights = read_f64s(cur, d)?;
            let intercept = cur
                .read_f64::<LittleEndian>()
                .map_err(|_| corrupt("ends inside a leaf record"))?;
            let n_train = cur
                .read_u64::<LittleEndian>()
                .map_err(|_| corrupt("ends inside a leaf record"))?;
            Ok(TreeNode::Leaf {
                model: LinearModel { weights, intercept },
                n_train: n_train as usize,
            })
        }
        1 => {
            let normal = read_f64s(cur, d)?;
            let midpoint = read_f64s(cur, d)?;
            let half_width = read_f64s(cur, d)?;
            let left = read_node(cur, d, seen)?;
            let right = read_node(cur, d, seen)?;
            Ok(TreeNode::Internal {
                normal,
                midpoint,
                half_width,
                left: Box::new(left),
                right: Box::new(right),
            })
        }
        other => Err(corrupt(&format!("has unknown node tag {other}"))),
    }
}

/// Decodes a forest from container bytes, verifying magic, version, and
/// checksum before touching the payload.
pub fn forest_from_bytes(bytes: &[u8]) -> Result<Forest> {
    // Header + CRC is the absolute minimum.
    if bytes.len() < MAGIC.len() + 4 * 4 + 8 + 4 {
        return Err(corrupt("is truncated"));
    }
    if &bytes[..4] != MAGIC {
        return Err(CmtError::Format(format!(
            "not a forest file: magic {:02x?} where {MAGIC:02x?} was expected",
            &bytes[..4]
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("sliced"));
    if version != VERSION {
        return Err(CmtError::Format(format!(
            "forest file has version {version}, this reader supports version {VERSION}"
        )));
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("sliced"));
    if crc32fast::hash(body) != stored {
        return Err(corrupt("fails its checksum"));
    }

    let mut cur = Cursor::new(&body[8..]);
    let h = cur.read_u32::<LittleEndian>().expect("length checked") as usize;
    let w = cur.read_u32::<LittleEndian>().expect("length checked") as usize;
    let n_trees = cur.read_u32::<LittleEndian>().expect("length checked") as usize;
    let meta_len = cur.read_u64::<LittleEndian>().expect("length checked") as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    cur.read_exact(&mut meta_bytes)
        .map_err(|_| corrupt("ends inside the meta block"))?;
    let meta: Meta = serde_json::from_slice(&meta_bytes)
        .map_err(|e| CmtError::Format(format!("meta block is not valid JSON: {e}")))?;

    let d = h * w;
    let mut trees = Vec::with_capacity(n_trees);
    for t in 0..n_trees {
        let declared = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| corrupt("ends before a tree block"))?;
        let mut seen = 0;
        let tree = read_node(&mut cur, d, &mut seen)?;
        if seen != declared {
            return Err(corrupt(&format!(
                "tree {t} declares {declared} nodes but stores {seen}"
            )));
        }
        trees.push(tree);
    }
    if cur.position() != (body.len() - 8) as u64 {
        return Err(corrupt("has trailing bytes after the last tree"));
    }

    let forest = Forest::from_parts(trees, meta.config, (h, w), meta.provenance);
    forest.validate()?;
    Ok(forest)
}

fn with_path(path: &Path, e: std::io::Error) -> CmtError {
    CmtError::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

/// Writes the binary container to `path`.
pub fn save_forest(forest: &Forest, path: &Path) -> Result<()> {
    fs::write(path, forest_to_bytes(forest)?).map_err(|e| with_path(path, e))
}

/// Reads a forest saved by [`save_forest`].
pub fn load_forest(path: &Path) -> Result<Forest> {
    forest_from_bytes(&fs::read(path).map_err(|e| with_path(path, e))?)
}

/// Lossless JSON twin of the container: same trees, config, and provenance,
/// readable by humans and diff tools.
pub fn forest_to_json(forest: &Forest) -> Result<String> {
    forest.validate()?;
    serde_json::to_string_pretty(forest)
        .map_err(|e| CmtError::Format(format!("JSON encoding failed: {e}")))
}

/// Parses [`forest_to_json`] output back into a validated forest.
pub fn forest_from_json(text: &str) -> Result<Forest> {
    let forest: Forest =
        serde_json::from_str(text).map_err(|e| CmtError::Format(format!("invalid JSON: {e}")))?;
    forest.validate()?;
    Ok(forest)
}
