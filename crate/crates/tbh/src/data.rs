//! Dataset ingestion, split handling, normalization, and seeded batching.
//!
//! Labels are never consumed by training; they exist solely for retrieval
//! evaluation. The training path receives bare feature matrices.

use byteorder::{BigEndian, LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub type FeatureMatrix = Array2<f32>;
pub type LabelMatrix = Array2<u8>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train = 0,
    Db = 1,
    Query = 2,
}

impl Split {
    pub fn from_tag(tag: u8) -> Result<Split> {
        match tag {
            0 => Ok(Split::Train),
            1 => Ok(Split::Db),
            2 => Ok(Split::Query),
            other => Err(Error::Format(format!("unknown split tag {other}"))),
        }
    }
}

/// Features plus optional labels and a per-row split assignment.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: FeatureMatrix,
    pub labels: Option<LabelMatrix>,
    pub splits: Vec<Split>,
}

impl Dataset {
    pub fn rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Feature rows of one split, in index order.
    pub fn split_features(&self, split: Split) -> FeatureMatrix {
        self.features.select(Axis(0), &self.indices_of(split))
    }

    pub fn split_labels(&self, split: Split) -> Option<LabelMatrix> {
        self.labels
            .as_ref()
            .map(|l| l.select(Axis(0), &self.indices_of(split)))
    }
}

// ---------------------------------------------------------------------------
// TBHF / TBHL / TBHS file formats (little-endian)
// ---------------------------------------------------------------------------

fn open(path: &Path) -> Result<BufReader<std::fs::File>> {
    Ok(BufReader::new(
        std::fs::File::open(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<std::fs::File>> {
    Ok(BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn read_magic<R: Read>(r: &mut R, expected: &[u8; 4], path: &Path) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| Error::io(path, e))?;
    if &magic != expected {
        return Err(Error::Format(format!(
            "{}: bad magic {:?} at byte 0, expected {:?}",
            path.display(),
            magic,
            expected
        )));
    }
    Ok(())
}

/// Reads a TBHF feature file: magic "TBHF", u32 version=1, u32 N, u32 D,
/// then N*D f32 row-major.
pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let mut r = open(path)?;
    read_magic(&mut r, b"TBHF", path)?;
    let version = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))?;
    if version != 1 {
        return Err(Error::Format(format!(
            "{}: unsupported TBHF version {version}",
            path.display()
        )));
    }
    let n = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    let d = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    if n == 0 || d == 0 {
        return Err(Error::Format(format!(
            "{}: N and D must both be >= 1 (got {n}x{d})",
            path.display()
        )));
    }
    let mut data = vec![0f32; n * d];
    for (i, v) in data.iter_mut().enumerate() {
        *v = r.read_f32::<LittleEndian>().map_err(|e| {
            Error::Format(format!(
                "{}: truncated payload at byte {} ({e})",
                path.display(),
                16 + 4 * i
            ))
        })?;
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "{}: non-finite feature values",
            path.display()
        )));
    }
    Ok(Array2::from_shape_vec((n, d), data).expect("shape matches"))
}

pub fn save_features(path: &Path, features: &FeatureMatrix) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    w.write_all(b"TBHF").map_err(io)?;
    w.write_u32::<LittleEndian>(1).map_err(io)?;
    w.write_u32::<LittleEndian>(features.nrows() as u32).map_err(io)?;
    w.write_u32::<LittleEndian>(features.ncols() as u32).map_err(io)?;
    for &v in features.iter() {
        w.write_f32::<LittleEndian>(v).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a TBHL label file: magic "TBHL", u32 version=1, u32 N, u32 C,
/// then N*C u8 multi-hot.
pub fn load_labels(path: &Path) -> Result<LabelMatrix> {
    let mut r = open(path)?;
    read_magic(&mut r, b"TBHL", path)?;
    let version = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))?;
    if version != 1 {
        return Err(Error::Format(format!(
            "{}: unsupported TBHL version {version}",
            path.display()
        )));
    }
    let n = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    let c = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    let mut data = vec![0u8; n * c];
    r.read_exact(&mut data)
        .map_err(|e| Error::Format(format!("{}: truncated labels ({e})", path.display())))?;
    if data.iter().any(|&v| v > 1) {
        return Err(Error::Format(format!(
            "{}: labels must be 0/1 multi-hot",
            path.display()
        )));
    }
    Ok(Array2::from_shape_vec((n, c), data).expect("shape matches"))
}

pub fn save_labels(path: &Path, labels: &LabelMatrix) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    w.write_all(b"TBHL").map_err(io)?;
    w.write_u32::<LittleEndian>(1).map_err(io)?;
    w.write_u32::<LittleEndian>(labels.nrows() as u32).map_err(io)?;
    w.write_u32::<LittleEndian>(labels.ncols() as u32).map_err(io)?;
    for &v in labels.iter() {
        w.write_u8(v).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a TBHS split file: magic "TBHS", u32 N, then N u8 tags.
pub fn load_splits(path: &Path) -> Result<Vec<Split>> {
    let mut r = open(path)?;
    read_magic(&mut r, b"TBHS", path)?;
    let n = r.read_u32::<LittleEndian>().map_err(|e| Error::io(path, e))? as usize;
    let mut tags = vec![0u8; n];
    r.read_exact(&mut tags)
        .map_err(|e| Error::Format(format!("{}: truncated splits ({e})", path.display())))?;
    tags.into_iter().map(Split::from_tag).collect()
}

pub fn save_splits(path: &Path, splits: &[Split]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    w.write_all(b"TBHS").map_err(io)?;
    w.write_u32::<LittleEndian>(splits.len() as u32).map_err(io)?;
    for &s in splits {
        w.write_u8(s as u8).map_err(io)?;
    }
    w.flush().map_err(io)
}

// ---------------------------------------------------------------------------
// MNIST IDX
// ---------------------------------------------------------------------------

/// Loads the standard IDX pair: pixels scaled to [0,1], labels one-hot with
/// C=10. Every row starts tagged as Train.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut r = open(images_path)?;
    let io = |e| Error::io(images_path, e);
    let magic = r.read_u32::<BigEndian>().map_err(io)?;
    if magic != 0x0000_0803 {
        return Err(Error::Format(format!(
            "{}: bad IDX image magic {magic:#010x}",
            images_path.display()
        )));
    }
    let n = r.read_u32::<BigEndian>().map_err(io)? as usize;
    let rows = r.read_u32::<BigEndian>().map_err(io)? as usize;
    let cols = r.read_u32::<BigEndian>().map_err(io)? as usize;
    let d = rows * cols;
    let mut pixels = vec![0u8; n * d];
    r.read_exact(&mut pixels)
        .map_err(|e| Error::Format(format!("{}: truncated pixels ({e})", images_path.display())))?;
    let features = Array2::from_shape_vec(
        (n, d),
        pixels.into_iter().map(|p| p as f32 / 255.0).collect(),
    )
    .expect("shape matches");

    let mut r = open(labels_path)?;
    let io = |e| Error::io(labels_path, e);
    let magic = r.read_u32::<BigEndian>().map_err(io)?;
    if magic != 0x0000_0801 {
        return Err(Error::Format(format!(
            "{}: bad IDX label magic {magic:#010x}",
            labels_path.display()
        )));
    }
    let n_labels = r.read_u32::<BigEndian>().map_err(io)? as usize;
    if n_labels != n {
        return Err(Error::Format(format!(
            "image/label count mismatch: {n} images vs {n_labels} labels"
        )));
    }
    let mut raw = vec![0u8; n];
    r.read_exact(&mut raw)
        .map_err(|e| Error::Format(format!("{}: truncated labels ({e})", labels_path.display())))?;
    let mut labels = Array2::zeros((n, 10));
    for (i, &digit) in raw.iter().enumerate() {
        if digit > 9 {
            return Err(Error::Format(format!("label byte {digit} out of range")));
        }
        labels[[i, digit as usize]] = 1u8;
    }
    Ok(Dataset {
        features,
        labels: Some(labels),
        splits: vec![Split::Train; n],
    })
}

// ---------------------------------------------------------------------------
// Batching and normalization
// ---------------------------------------------------------------------------

/// Deterministic per-epoch shuffle of `0..n`, driven by (seed, epoch).
pub fn epoch_shuffle(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(1 + epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Full shuffled batches of one split for one epoch; the remainder rows are
/// dropped.
pub fn batches(
    dataset: &Dataset,
    split: Split,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<FeatureMatrix>> {
    let indices = dataset.indices_of(split);
    if indices.len() < batch_size {
        return Err(Error::Config(format!(
            "split has {} rows, smaller than batch size {batch_size}",
            indices.len()
        )));
    }
    let order = epoch_shuffle(indices.len(), seed, epoch);
    Ok(order
        .chunks_exact(batch_size)
        .map(|chunk| {
            let rows: Vec<usize> = chunk.iter().map(|&i| indices[i]).collect();
            dataset.features.select(Axis(0), &rows)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalize {
    None,
    Zscore,
}

impl std::str::FromStr for Normalize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalize::None),
            "zscore" => Ok(Normalize::Zscore),
            other => Err(Error::Config(format!("unknown normalize mode '{other}'"))),
        }
    }
}

/// Z-score statistics computed from the train split only; constant columns
/// pass through unchanged.
pub fn normalize(dataset: &mut Dataset, mode: Normalize) {
    if mode == Normalize::None {
        return;
    }
    let train = dataset.indices_of(Split::Train);
    let n = train.len().max(1) as f32;
    let d = dataset.dim();
    let mut mean = vec![0f32; d];
    let mut var = vec![0f32; d];
    for &i in &train {
        for j in 0..d {
            mean[j] += dataset.features[[i, j]];
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    for &i in &train {
        for j in 0..d {
            let dv = dataset.features[[i, j]] - mean[j];
            var[j] += dv * dv;
        }
    }
    for v in var.iter_mut() {
        *v /= n;
    }
    for j in 0..d {
        let sd = var[j].sqrt();
        if sd > 0.0 {
            for i in 0..dataset.rows() {
                dataset.features[[i, j]] = (dataset.features[[i, j]] - mean[j]) / sd;
            }
        }
    }
}

/// Per-class uniform split assignment: for each class, `train_per_class`
/// rows to Train and `query_per_class` to Query, then up to `db_per_class`
/// to Db; leftover rows keep the Db tag when `db_per_class` is None, and
/// are left as Train otherwise only if unassigned counts run out.
pub fn assign_splits_per_class(
    labels: &LabelMatrix,
    train_per_class: usize,
    db_per_class: usize,
    query_per_class: usize,
    seed: u64,
) -> Result<Vec<Split>> {
    let n = labels.nrows();
    let c = labels.ncols();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(0xD15);
    let mut splits = vec![Split::Db; n];
    for class in 0..c {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[[i, class]] == 1).collect();
        let need = train_per_class + db_per_class + query_per_class;
        if members.len() < need {
            return Err(Error::Config(format!(
                "class {class} has {} rows, needs {need}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (k, &i) in members.iter().enumerate() {
            splits[i] = if k < train_per_class {
                Split::Train
            } else if k < train_per_class + db_per_class {
                Split::Db
            } else if k < need {
                Split::Query
            } else {
                break;
            };
        }
    }
    Ok(splits)
}
