//! Dense float and 8×4 block-sparse int8 matrix-vector products.
//!
//! The sparse format is the memory-bandwidth optimization at the heart of
//! the engine: weights are stored as nonzero 8-row × 4-column blocks of
//! signed bytes at a fixed power-of-two scale, so a GEMV streams 32 bytes
//! per block instead of 128 float bytes, and block coordinates are sorted
//! row-major so traversal is cache-linear. Activations stay in f32; only
//! weights are quantized.

use thiserror::Error;

/// Fixed weight scale: dequantized weight = int8 · 1/128 ∈ ]-1, 1[.
pub const Q8_SCALE: f32 = 1.0 / 128.0;

/// Rows per sparse block.
pub const BLOCK_ROWS: usize = 8;
/// Columns per sparse block.
pub const BLOCK_COLS: usize = 4;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("entry ({row},{col}) = {value} is not an int8 multiple of the scale {scale}")]
    NotQuantized {
        row: usize,
        col: usize,
        value: f32,
        scale: f32,
    },
    #[error("matrix data is not finite at index {0}")]
    NotFinite(usize),
    #[error("invalid block structure: {0}")]
    BadBlocks(String),
}

/// Row-major float matrix; the reference path for all sparse kernels.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, KernelError> {
        if data.len() != rows * cols {
            return Err(KernelError::ShapeMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(KernelError::NotFinite(i));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// Columns [c0, c1) as a new matrix.
    pub fn col_slice(&self, c0: usize, c1: usize) -> DenseMatrix {
        assert!(c0 <= c1 && c1 <= self.cols);
        let mut data = Vec::with_capacity(self.rows * (c1 - c0));
        for r in 0..self.rows {
            data.extend_from_slice(&self.data[r * self.cols + c0..r * self.cols + c1]);
        }
        DenseMatrix {
            rows: self.rows,
            cols: c1 - c0,
            data,
        }
    }

    pub fn gemv_into(&self, x: &[f32], y: &mut [f32]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (r, out) in y.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0f32;
            for (w, v) in row.iter().zip(x.iter()) {
                acc += w * v;
            }
            *out = acc;
        }
    }
}

/// `y = M·x` on the float reference path.
pub fn dense_gemv(m: &DenseMatrix, x: &[f32]) -> Result<Vec<f32>, KernelError> {
    if x.len() != m.cols {
        return Err(KernelError::ShapeMismatch(format!(
            "gemv: matrix has {} cols, vector has {}",
            m.cols,
            x.len()
        )));
    }
    let mut y = vec![0.0; m.rows];
    m.gemv_into(x, &mut y);
    Ok(y)
}

/// Block-sparse matrix of 8×4 int8 blocks at a fixed power-of-two scale.
///
/// `rows`/`cols` are padded up to multiples of 8 and 4; `out_rows` /
/// `in_cols` keep the logical shape so products strip the padding.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSparseMatrix {
    out_rows: usize,
    in_cols: usize,
    rows: usize,
    cols: usize,
    blocks: Vec<(u16, u16)>,
    weights: Vec<i8>,
    scale: f32,
    /// CSR-style index: blocks of block-row `br` live in
    /// `blocks[row_ptr[br]..row_ptr[br+1]]`.
    row_ptr: Vec<u32>,
}

impl BlockSparseMatrix {
    pub fn from_parts(
        out_rows: usize,
        in_cols: usize,
        blocks: Vec<(u16, u16)>,
        weights: Vec<i8>,
        scale: f32,
    ) -> Result<Self, KernelError> {
        if out_rows == 0 || in_cols == 0 {
            return Err(KernelError::ShapeMismatch(
                "matrix dimensions must be positive".into(),
            ));
        }
        let rows = out_rows.div_ceil(BLOCK_ROWS) * BLOCK_ROWS;
        let cols = in_cols.div_ceil(BLOCK_COLS) * BLOCK_COLS;
        if weights.len() != blocks.len() * BLOCK_ROWS * BLOCK_COLS {
            return Err(KernelError::BadBlocks(format!(
                "{} blocks need {} weights, got {}",
                blocks.len(),
                blocks.len() * BLOCK_ROWS * BLOCK_COLS,
                weights.len()
            )));
        }
        if weights.iter().any(|&w| w == i8::MIN) {
            return Err(KernelError::BadBlocks(
                "int8 weights must lie in [-127, 127]".into(),
            ));
        }
        let n_block_rows = rows / BLOCK_ROWS;
        let n_block_cols = cols / BLOCK_COLS;
        for pair in blocks.windows(2) {
            if pair[1] <= pair[0] {
                return Err(KernelError::BadBlocks(format!(
                    "blocks not strictly sorted row-major at {:?}",
                    pair[1]
                )));
            }
        }
        if let Some(&(br, bc)) = blocks
            .iter()
            .find(|&&(br, bc)| br as usize >= n_block_rows || bc as usize >= n_block_cols)
        {
            return Err(KernelError::BadBlocks(format!(
                "block ({br},{bc}) outside {n_block_rows}x{n_block_cols} grid"
            )));
        }
        let mut row_ptr = vec![0u32; n_block_rows + 1];
        for &(br, _) in &blocks {
            row_ptr[br as usize + 1] += 1;
        }
        for i in 0..n_block_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            out_rows,
            in_cols,
            rows,
            cols,
            blocks,
            weights,
            scale,
            row_ptr,
        })
    }

    pub fn out_rows(&self) -> usize {
        self.out_rows
    }

    pub fn in_cols(&self) -> usize {
        self.in_cols
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn blocks(&self) -> &[(u16, u16)] {
        &self.blocks
    }

    pub fn weights(&self) -> &[i8] {
        &self.weights
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Multiply-adds one GEMV performs: 32 per stored block.
    pub fn macs_per_gemv(&self) -> usize {
        self.blocks.len() * BLOCK_ROWS * BLOCK_COLS
    }

    pub fn gemv_into(&self, x: &[f32], y: &mut [f32]) {
        debug_assert_eq!(x.len(), self.in_cols);
        debug_assert_eq!(y.len(), self.out_rows);
        let n_block_rows = self.rows / BLOCK_ROWS;
        for br in 0..n_block_rows {
            let mut acc = [0.0f32; BLOCK_ROWS];
            let b0 = self.row_ptr[br] as usize;
            let b1 = self.row_ptr[br + 1] as usize;
            for bi in b0..b1 {
                let c0 = self.blocks[bi].1 as usize * BLOCK_COLS;
                let w = &self.weights[bi * 32..bi * 32 + 32];
                if c0 + BLOCK_COLS <= x.len() {
                    let x0 = x[c0];
                    let x1 = x[c0 + 1];
                    let x2 = x[c0 + 2];
                    let x3 = x[c0 + 3];
                    for (r, a) in acc.iter_mut().enumerate() {
                        let wr = &w[r * 4..r * 4 + 4];
                        *a += wr[0] as f32 * x0
                            + wr[1] as f32 * x1
                            + wr[2] as f32 * x2
                            + wr[3] as f32 * x3;
                    }
                } else {
                    // final partial block column: padded x entries are zero
                    for c in 0..BLOCK_COLS {
                        let xv = x.get(c0 + c).copied().unwrap_or(0.0);
                        for (r, a) in acc.iter_mut().enumerate() {
                            *a += w[r * 4 + c] as f32 * xv;
                        }
                    }
                }
            }
            let base = br * BLOCK_ROWS;
            for (r, a) in acc.iter().enumerate() {
                if base + r < self.out_rows {
                    y[base + r] = a * self.scale;
                }
            }
        }
    }

    /// Dot product of one logical row with `x`, for on-demand output rows.
    pub fn row_dot(&self, row: usize, x: &[f32]) -> f32 {
        debug_assert!(row < self.out_rows);
        debug_assert_eq!(x.len(), self.in_cols);
        let br = row / BLOCK_ROWS;
        let lane = (row % BLOCK_ROWS) * 4;
        let mut acc = 0.0f32;
        let b0 = self.row_ptr[br] as usize;
        let b1 = self.row_ptr[br + 1] as usize;
        for bi in b0..b1 {
            let c0 = self.blocks[bi].1 as usize * BLOCK_COLS;
            let w = &self.weights[bi * 32 + lane..bi * 32 + lane + 4];
            if c0 + BLOCK_COLS <= x.len() {
                acc += w[0] as f32 * x[c0]
                    + w[1] as f32 * x[c0 + 1]
                    + w[2] as f32 * x[c0 + 2]
                    + w[3] as f32 * x[c0 + 3];
            } else {
                for c in 0..BLOCK_COLS {
                    acc += w[c] as f32 * x.get(c0 + c).copied().unwrap_or(0.0);
                }
            }
        }
        acc * self.scale
    }

    /// Splits columns at `col` (must be block-aligned) into left and right
    /// matrices; used to separate per-sample from per-frame input halves.
    pub fn split_cols(&self, col: usize) -> Result<(Self, Self), KernelError> {
        if col % BLOCK_COLS != 0 || col > self.in_cols {
            return Err(KernelError::ShapeMismatch(format!(
                "split at {col} not aligned to {BLOCK_COLS} or out of range"
            )));
        }
        let bsplit = (col / BLOCK_COLS) as u16;
        let mut lb = Vec::new();
        let mut lw = Vec::new();
        let mut rb = Vec::new();
        let mut rw = Vec::new();
        for (i, &(br, bc)) in self.blocks.iter().enumerate() {
            let w = &self.weights[i * 32..i * 32 + 32];
            if bc < bsplit {
                lb.push((br, bc));
                lw.extend_from_slice(w);
            } else {
                rb.push((br, bc - bsplit));
                rw.extend_from_slice(w);
            }
        }
        let left = Self::from_parts(self.out_rows, col, lb, lw, self.scale)?;
        let right = Self::from_parts(self.out_rows, self.in_cols - col, rb, rw, self.scale)?;
        Ok((left, right))
    }
}

/// `y = dequant(M)·x` without materializing the dequantized matrix.
pub fn sparse_q8_gemv(m: &BlockSparseMatrix, x: &[f32]) -> Result<Vec<f32>, KernelError> {
    if x.len() != m.in_cols {
        return Err(KernelError::ShapeMismatch(format!(
            "gemv: matrix has {} cols, vector has {}",
            m.in_cols,
            x.len()
        )));
    }
    let mut y = vec![0.0; m.out_rows];
    m.gemv_into(x, &mut y);
    Ok(y)
}

/// Packs an already-quantized float matrix (all entries int8 multiples of
/// [`Q8_SCALE`]) into block-sparse form, dropping all-zero blocks.
pub fn pack_block_sparse(m: &DenseMatrix) -> Result<BlockSparseMatrix, KernelError> {
    pack_block_sparse_with_scale(m, Q8_SCALE)
}

/// [`pack_block_sparse`] with a caller-chosen scale.
pub fn pack_block_sparse_with_scale(
    m: &DenseMatrix,
    scale: f32,
) -> Result<BlockSparseMatrix, KernelError> {
    let n_block_rows = m.rows.div_ceil(BLOCK_ROWS);
    let n_block_cols = m.cols.div_ceil(BLOCK_COLS);
    let mut blocks = Vec::new();
    let mut weights = Vec::new();
    let mut buf = [0i8; BLOCK_ROWS * BLOCK_COLS];
    for br in 0..n_block_rows {
        for bc in 0..n_block_cols {
            let mut any = false;
            for r in 0..BLOCK_ROWS {
                for c in 0..BLOCK_COLS {
                    let (row, col) = (br * BLOCK_ROWS + r, bc * BLOCK_COLS + c);
                    let v = if row < m.rows && col < m.cols {
                        m.get(row, col)
                    } else {
                        0.0
                    };
                    let t = v / scale;
                    if t != t.round() || t.abs() > 127.0 {
                        return Err(KernelError::NotQuantized {
                            row,
                            col,
                            value: v,
                            scale,
                        });
                    }
                    let q = t as i8;
                    any |= q != 0;
                    buf[r * BLOCK_COLS + c] = q;
                }
            }
            if any {
                blocks.push((br as u16, bc as u16));
                weights.extend_from_slice(&buf);
            }
        }
    }
    BlockSparseMatrix::from_parts(m.rows, m.cols, blocks, weights, scale)
}

/// Inverse of [`pack_block_sparse`]; exact, since int8·2⁻ⁿ is exact in f32.
pub fn unpack_block_sparse(m: &BlockSparseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.out_rows, m.in_cols);
    for (i, &(br, bc)) in m.blocks.iter().enumerate() {
        let w = &m.weights[i * 32..i * 32 + 32];
        for r in 0..BLOCK_ROWS {
            for c in 0..BLOCK_COLS {
                let row = br as usize * BLOCK_ROWS + r;
                let col = bc as usize * BLOCK_COLS + c;
                if row < m.out_rows && col < m.in_cols {
                    out.data[row * m.in_cols + col] = w[r * BLOCK_COLS + c] as f32 * m.scale;
                }
            }
        }
    }
    out
}
