//! Bit-packed code storage and deterministic out-of-sample encoding.

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2, Axis};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::diffcore::Scalar;
use crate::error::{Error, Result};
use crate::model::TbhModel;

/// N codes of M bits each, packed into 64-bit words. Bit j of code i lives
/// at word j/64, position j%64 (LSB-first); padding bits above M are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodeSet {
    count: usize,
    bits: usize,
    words_per_code: usize,
    payload: Vec<u64>,
}

impl PackedCodeSet {
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn words_per_code(&self) -> usize {
        self.words_per_code
    }

    pub fn code_words(&self, i: usize) -> &[u64] {
        &self.payload[i * self.words_per_code..(i + 1) * self.words_per_code]
    }

    /// Popcount XOR distance between code `i` here and code `j` in `other`.
    pub fn hamming(&self, i: usize, other: &PackedCodeSet, j: usize) -> u32 {
        self.code_words(i)
            .iter()
            .zip(other.code_words(j))
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

/// Packs a binary matrix; entries must be exactly 0 or 1.
pub fn pack<F: Scalar>(binary: &Array2<F>) -> Result<PackedCodeSet> {
    let (n, m) = binary.dim();
    let words_per_code = m.div_ceil(64);
    let mut payload = vec![0u64; n * words_per_code];
    for (i, row) in binary.axis_iter(Axis(0)).enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v == F::one() {
                payload[i * words_per_code + j / 64] |= 1u64 << (j % 64);
            } else if v != F::zero() {
                return Err(Error::Format(format!(
                    "non-binary entry {} at ({i}, {j})",
                    v.to_f64()
                )));
            }
        }
    }
    Ok(PackedCodeSet {
        count: n,
        bits: m,
        words_per_code,
        payload,
    })
}

pub fn unpack(codes: &PackedCodeSet) -> Array2<f32> {
    let mut out = Array2::zeros((codes.count, codes.bits));
    for i in 0..codes.count {
        let words = codes.code_words(i);
        for j in 0..codes.bits {
            if words[j / 64] >> (j % 64) & 1 == 1 {
                out[[i, j]] = 1.0;
            }
        }
    }
    out
}

/// Thresholds code probabilities at 0.5; the boundary maps to bit 1.
pub fn threshold_probs<F: Scalar>(probs: &Array2<F>) -> Array2<F> {
    probs.mapv(|p| {
        if p >= F::from_f64(0.5) {
            F::one()
        } else {
            F::zero()
        }
    })
}

/// Deterministic out-of-sample code for one input row: no sampling, the
/// encoder probabilities are thresholded at 0.5.
pub fn encode_query<F: Scalar>(model: &TbhModel<F>, x: &Array1<F>) -> Result<Array1<F>> {
    let batch = x.clone().insert_axis(Axis(0));
    let probs = model.encode_probs(&batch)?;
    Ok(threshold_probs(&probs).index_axis_move(Axis(0), 0))
}

/// Packed codes for every row of `x`.
pub fn encode_dataset<F: Scalar>(model: &TbhModel<F>, x: &Array2<F>) -> Result<PackedCodeSet> {
    let probs = model.encode_probs(x)?;
    pack(&threshold_probs(&probs))
}

/// Writes a TBHB code file: magic, u32 version=1, u32 N, u32 M, payload
/// words little-endian.
pub fn save_codes(path: &Path, codes: &PackedCodeSet) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    w.write_all(b"TBHB").map_err(io)?;
    w.write_u32::<LittleEndian>(1).map_err(io)?;
    w.write_u32::<LittleEndian>(codes.count as u32).map_err(io)?;
    w.write_u32::<LittleEndian>(codes.bits as u32).map_err(io)?;
    for &word in &codes.payload {
        w.write_u64::<LittleEndian>(word).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_codes(path: &Path) -> Result<PackedCodeSet> {
    let mut r = BufReader::new(std::fs::File::open(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != b"TBHB" {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:?}, expected TBHB",
            path.display()
        )));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io)?;
    if version != 1 {
        return Err(Error::Format(format!(
            "{}: unsupported TBHB version {version}",
            path.display()
        )));
    }
    let n = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let m = r.read_u32::<LittleEndian>().map_err(io)? as usize;
    let words_per_code = m.div_ceil(64);
    let mut payload = vec![0u64; n * words_per_code];
    for w in payload.iter_mut() {
        *w = r
            .read_u64::<LittleEndian>()
            .map_err(|e| Error::Format(format!("{}: truncated payload ({e})", path.display())))?;
    }
    let mask = if m % 64 == 0 {
        u64::MAX
    } else {
        (1u64 << (m % 64)) - 1
    };
    for i in 0..n {
        if words_per_code > 0 && payload[i * words_per_code + words_per_code - 1] & !mask != 0 {
            return Err(Error::Format(format!(
                "{}: nonzero padding bits in code {i}",
                path.display()
            )));
        }
    }
    Ok(PackedCodeSet {
        count: n,
        bits: m,
        words_per_code,
        payload,
    })
}
