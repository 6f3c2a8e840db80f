//! Binary weight container: a flat list of named tensors, each either f32
//! row-major or int8 block-sparse, with a trailing CRC32 over all payloads.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic "LPCW" | u32 version | u32 tensor count
//! per tensor:
//!   u16 name length | name bytes (utf-8)
//!   u8 dtype (0 = f32, 1 = q8 block-sparse)
//!   u32 rows | u32 cols | f32 density
//!   payload:
//!     f32: rows·cols · 4 bytes, row-major
//!     q8:  u32 block count | block count × (u16 row, u16 col) | 32·count int8
//! u32 crc32 of all payload bytes, in tensor order
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::kernels::matrix::{BlockSparseMatrix, Q8_SCALE};

pub const MAGIC: [u8; 4] = *b"LPCW";
pub const FORMAT_VERSION: u32 = 1;

const DTYPE_F32: u8 = 0;
const DTYPE_Q8: u8 = 1;
const MAX_DIM: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("i/o error")]
    Io(#[from] io::Error),
    #[error("not a weight file (bad magic)")]
    BadMagic,
    #[error("unsupported weight format version {0}")]
    UnsupportedVersion(u32),
    #[error("weight file truncated")]
    Truncated,
    #[error("payload checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed weight file: {0}")]
    Malformed(String),
}

fn map_eof(e: io::Error) -> WeightError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        WeightError::Truncated
    } else {
        WeightError::Io(e)
    }
}

/// How the quantization toolchain treats a tensor, decided by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuantDesignation {
    /// Sample-rate matrix: hard-quantize, then pack to int8 block-sparse.
    PackQ8,
    /// Sample-rate matrix consumed via precomputed tables: hard-quantize
    /// onto the int8 lattice but keep f32 storage.
    LatticeF32,
    /// Frame-rate weights, biases, scales, embedding: untouched.
    Passthrough,
}

pub fn quant_designation(name: &str) -> QuantDesignation {
    match name {
        "gru_a.recurrent" | "gru_b.input" | "gru_b.recurrent" | "dual_fc.w1" | "dual_fc.w2" => {
            QuantDesignation::PackQ8
        }
        "gru_a.input" => QuantDesignation::LatticeF32,
        _ => QuantDesignation::Passthrough,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    Q8(BlockSparseMatrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Nominal density recorded at generation time (1.0 for dense).
    pub density: f32,
    pub data: TensorData,
}

impl Tensor {
    pub fn f32_data(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            TensorData::Q8(_) => None,
        }
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self.data, TensorData::Q8(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightFile {
    pub version: u32,
    pub tensors: Vec<Tensor>,
}

struct HashingWriter<W: Write> {
    inner: W,
    hasher: crc32fast::Hasher,
}

impl<W: Write> HashingWriter<W> {
    fn payload(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.hasher.update(bytes);
        self.inner.write_all(bytes)
    }
}

struct HashingReader<R: Read> {
    inner: R,
    hasher: crc32fast::Hasher,
}

impl<R: Read> HashingReader<R> {
    fn payload(&mut self, buf: &mut [u8]) -> Result<(), WeightError> {
        self.inner.read_exact(buf).map_err(map_eof)?;
        self.hasher.update(buf);
        Ok(())
    }

    fn header(&mut self, buf: &mut [u8]) -> Result<(), WeightError> {
        self.inner.read_exact(buf).map_err(map_eof)
    }

    fn header_u16(&mut self) -> Result<u16, WeightError> {
        let mut b = [0u8; 2];
        self.header(&mut b)?;
        Ok(u16::from_le_bytes(b))
    }

    fn header_u32(&mut self) -> Result<u32, WeightError> {
        let mut b = [0u8; 4];
        self.header(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn header_f32(&mut self) -> Result<f32, WeightError> {
        let mut b = [0u8; 4];
        self.header(&mut b)?;
        Ok(f32::from_le_bytes(b))
    }
}

impl WeightFile {
    pub fn new(tensors: Vec<Tensor>) -> Self {
        Self {
            version: FORMAT_VERSION,
            tensors,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WeightError> {
        let f = File::create(path)?;
        self.save_to(BufWriter::new(f))
    }

    pub fn save_to(&self, w: impl Write) -> Result<(), WeightError> {
        let mut w = HashingWriter {
            inner: w,
            hasher: crc32fast::Hasher::new(),
        };
        w.inner.write_all(&MAGIC)?;
        w.inner.write_all(&self.version.to_le_bytes())?;
        w.inner
            .write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            if t.name.len() > u16::MAX as usize {
                return Err(WeightError::Malformed(format!(
                    "tensor name too long: {}...",
                    &t.name[..32]
                )));
            }
            w.inner.write_all(&(t.name.len() as u16).to_le_bytes())?;
            w.inner.write_all(t.name.as_bytes())?;
            let dtype = match t.data {
                TensorData::F32(_) => DTYPE_F32,
                TensorData::Q8(_) => DTYPE_Q8,
            };
            w.inner.write_all(&[dtype])?;
            w.inner.write_all(&(t.rows as u32).to_le_bytes())?;
            w.inner.write_all(&(t.cols as u32).to_le_bytes())?;
            w.inner.write_all(&t.density.to_le_bytes())?;
            match &t.data {
                TensorData::F32(v) => {
                    if v.len() != t.rows * t.cols {
                        return Err(WeightError::Malformed(format!(
                            "tensor {}: data length {} != {}x{}",
                            t.name,
                            v.len(),
                            t.rows,
                            t.cols
                        )));
                    }
                    let mut bytes = Vec::with_capacity(v.len() * 4);
                    for x in v {
                        bytes.extend_from_slice(&x.to_le_bytes());
                    }
                    w.payload(&bytes)?;
                }
                TensorData::Q8(m) => {
                    if m.out_rows() != t.rows || m.in_cols() != t.cols {
                        return Err(WeightError::Malformed(format!(
                            "tensor {}: packed shape {}x{} != header {}x{}",
                            t.name,
                            m.out_rows(),
                            m.in_cols(),
                            t.rows,
                            t.cols
                        )));
                    }
                    let mut bytes = Vec::with_capacity(4 + m.num_blocks() * 4 + m.weights().len());
                    bytes.extend_from_slice(&(m.num_blocks() as u32).to_le_bytes());
                    for &(br, bc) in m.blocks() {
                        bytes.extend_from_slice(&br.to_le_bytes());
                        bytes.extend_from_slice(&bc.to_le_bytes());
                    }
                    bytes.extend(m.weights().iter().map(|&x| x as u8));
                    w.payload(&bytes)?;
                }
            }
        }
        let crc = w.hasher.finalize();
        w.inner.write_all(&crc.to_le_bytes())?;
        w.inner.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WeightError> {
        let f = File::open(path)?;
        Self::load_from(BufReader::new(f))
    }

    pub fn load_from(r: impl Read) -> Result<Self, WeightError> {
        let mut r = HashingReader {
            inner: r,
            hasher: crc32fast::Hasher::new(),
        };
        let mut magic = [0u8; 4];
        r.header(&mut magic)?;
        if magic != MAGIC {
            return Err(WeightError::BadMagic);
        }
        let version = r.header_u32()?;
        if version != FORMAT_VERSION {
            return Err(WeightError::UnsupportedVersion(version));
        }
        let count = r.header_u32()? as usize;
        if count > 4096 {
            return Err(WeightError::Malformed(format!(
                "implausible tensor count {count}"
            )));
        }
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.header_u16()? as usize;
            let mut name = vec![0u8; name_len];
            r.header(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| WeightError::Malformed("tensor name is not utf-8".into()))?;
            let mut dtype = [0u8; 1];
            r.header(&mut dtype)?;
            let rows = r.header_u32()? as usize;
            let cols = r.header_u32()? as usize;
            let density = r.header_f32()?;
            if rows == 0 || cols == 0 || rows > MAX_DIM || cols > MAX_DIM {
                return Err(WeightError::Malformed(format!(
                    "tensor {name}: implausible shape {rows}x{cols}"
                )));
            }
            let data = match dtype[0] {
                DTYPE_F32 => {
                    let mut bytes = vec![0u8; rows * cols * 4];
                    r.payload(&mut bytes)?;
                    let v = bytes
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                        .collect();
                    TensorData::F32(v)
                }
                DTYPE_Q8 => {
                    let mut nb = [0u8; 4];
                    r.payload(&mut nb)?;
                    let nblocks = u32::from_le_bytes(nb) as usize;
                    let grid = rows.div_ceil(8) * cols.div_ceil(4);
                    if nblocks > grid {
                        return Err(WeightError::Malformed(format!(
                            "tensor {name}: {nblocks} blocks exceed the {grid}-block grid"
                        )));
                    }
                    let mut coord = vec![0u8; nblocks * 4];
                    r.payload(&mut coord)?;
                    let blocks: Vec<(u16, u16)> = coord
                        .chunks_exact(4)
                        .map(|c| {
                            (
                                u16::from_le_bytes([c[0], c[1]]),
                                u16::from_le_bytes([c[2], c[3]]),
                            )
                        })
                        .collect();
                    let mut wbytes = vec![0u8; nblocks * 32];
                    r.payload(&mut wbytes)?;
                    let weights: Vec<i8> = wbytes.iter().map(|&b| b as i8).collect();
                    let m = BlockSparseMatrix::from_parts(rows, cols, blocks, weights, Q8_SCALE)
                        .map_err(|e| WeightError::Malformed(format!("tensor {name}: {e}")))?;
                    TensorData::Q8(m)
                }
                other => {
                    return Err(WeightError::Malformed(format!(
                        "tensor {name}: unknown dtype tag {other}"
                    )))
                }
            };
            tensors.push(Tensor {
                name,
                rows,
                cols,
                density,
                data,
            });
        }
        let stored = r.header_u32()?;
        let computed = r.hasher.finalize();
        if stored != computed {
            return Err(WeightError::Checksum { stored, computed });
        }
        Ok(WeightFile { version, tensors })
    }
}
