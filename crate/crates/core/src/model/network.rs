//! Sample-rate network pieces: the GRU step shared by both recurrent
//! units, the dual fully-connected output layer evaluated one tree node at
//! a time, and the precomputed per-index input contributions that remove
//! the input matrices from the per-sample loop.

use crate::dsp::MuLawIndex;
use crate::kernels::activations::{sigmoid_approx, tanh_approx};
use crate::kernels::matrix::{BlockSparseMatrix, DenseMatrix};
use crate::sampling::{NodeLogitProvider, TreeNodeId};

use super::ModelError;

/// A weight matrix on either the float or the quantized path.
#[derive(Clone, Debug)]
pub enum GateMatrix {
    Dense(DenseMatrix),
    Sparse(BlockSparseMatrix),
}

impl GateMatrix {
    pub fn rows(&self) -> usize {
        match self {
            GateMatrix::Dense(m) => m.rows(),
            GateMatrix::Sparse(m) => m.out_rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            GateMatrix::Dense(m) => m.cols(),
            GateMatrix::Sparse(m) => m.in_cols(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, GateMatrix::Sparse(_))
    }

    pub fn gemv_into(&self, x: &[f32], y: &mut [f32]) {
        match self {
            GateMatrix::Dense(m) => m.gemv_into(x, y),
            GateMatrix::Sparse(m) => m.gemv_into(x, y),
        }
    }

    pub fn row_dot(&self, row: usize, x: &[f32]) -> f32 {
        match self {
            GateMatrix::Dense(m) => m.row(row).iter().zip(x.iter()).map(|(w, v)| w * v).sum(),
            GateMatrix::Sparse(m) => m.row_dot(row, x),
        }
    }

    /// Multiply-adds one full product costs on this representation.
    pub fn macs_per_gemv(&self) -> usize {
        match self {
            GateMatrix::Dense(m) => m.rows() * m.cols(),
            GateMatrix::Sparse(m) => m.macs_per_gemv(),
        }
    }
}

/// One GRU update with the reset gate applied to the precomputed recurrent
/// candidate product. `gate_inputs` carries the full input-side
/// contribution (input matrix product plus input bias) in gate order
/// [update, reset, candidate]; the recurrent bias is added to the
/// recurrent product before gating so saturation behaves identically on
/// the float and quantized paths.
pub(crate) fn gru_step_into(
    h: &mut [f32],
    gate_inputs: &[f32],
    recurrent: &GateMatrix,
    bias_recurrent: &[f32],
    scratch: &mut [f32],
) {
    let n = h.len();
    debug_assert_eq!(gate_inputs.len(), 3 * n);
    debug_assert_eq!(bias_recurrent.len(), 3 * n);
    debug_assert_eq!(scratch.len(), 3 * n);
    recurrent.gemv_into(h, scratch);
    for (rc, b) in scratch.iter_mut().zip(bias_recurrent.iter()) {
        *rc += b;
    }
    for i in 0..n {
        let u = sigmoid_approx((gate_inputs[i] + scratch[i]) as f64) as f32;
        let r = sigmoid_approx((gate_inputs[n + i] + scratch[n + i]) as f64) as f32;
        let c = tanh_approx((gate_inputs[2 * n + i] + r * scratch[2 * n + i]) as f64) as f32;
        h[i] = u * h[i] + (1.0 - u) * c;
    }
}

/// Checked single GRU step returning the new state.
pub fn gru_step(
    h: &[f32],
    gate_inputs: &[f32],
    recurrent: &GateMatrix,
    bias_recurrent: &[f32],
) -> Result<Vec<f32>, ModelError> {
    let n = h.len();
    if gate_inputs.len() != 3 * n
        || bias_recurrent.len() != 3 * n
        || recurrent.rows() != 3 * n
        || recurrent.cols() != n
    {
        return Err(ModelError::Shape(format!(
            "gru_step: state {n}, gate inputs {}, recurrent {}x{}, bias {}",
            gate_inputs.len(),
            recurrent.rows(),
            recurrent.cols(),
            bias_recurrent.len()
        )));
    }
    let mut out = h.to_vec();
    let mut scratch = vec![0.0f32; 3 * n];
    gru_step_into(
        &mut out,
        gate_inputs,
        recurrent,
        bias_recurrent,
        &mut scratch,
    );
    Ok(out)
}

/// Output layer: two gated-tanh projections whose sum at row `node-1` is
/// that tree node's branch logit. Rows are evaluated on demand — one node
/// costs exactly 2 tanh evaluations and 2 row dot products.
#[derive(Clone, Debug)]
pub struct DualFc {
    pub w1: GateMatrix,
    pub b1: Vec<f32>,
    pub a1: Vec<f32>,
    pub w2: GateMatrix,
    pub b2: Vec<f32>,
    pub a2: Vec<f32>,
}

impl DualFc {
    pub fn node_logit(&self, h_b: &[f32], node: TreeNodeId) -> f64 {
        debug_assert!(node.is_internal());
        let row = node.0 as usize - 1;
        let t1 = tanh_approx((self.w1.row_dot(row, h_b) + self.b1[row]) as f64);
        let t2 = tanh_approx((self.w2.row_dot(row, h_b) + self.b2[row]) as f64);
        self.a1[row] as f64 * t1 + self.a2[row] as f64 * t2
    }
}

/// One tree node's branch logit from the second GRU state.
pub fn dual_fc_node_logit(fc: &DualFc, h_b: &[f32], node: TreeNodeId) -> f64 {
    fc.node_logit(h_b, node)
}

/// Logit provider over one fixed GRU state; counts node and tanh
/// evaluations for the O(log Q) accounting.
pub struct DualFcProvider<'a> {
    fc: &'a DualFc,
    h_b: &'a [f32],
    nodes: usize,
}

impl<'a> DualFcProvider<'a> {
    pub fn new(fc: &'a DualFc, h_b: &'a [f32]) -> Self {
        Self { fc, h_b, nodes: 0 }
    }

    /// Two tanh evaluations per node logit.
    pub fn tanh_evals(&self) -> usize {
        self.nodes * 2
    }
}

impl NodeLogitProvider for DualFcProvider<'_> {
    fn node_logit(&mut self, node: TreeNodeId) -> f64 {
        self.nodes += 1;
        self.fc.node_logit(self.h_b, node)
    }

    fn nodes_evaluated(&self) -> usize {
        self.nodes
    }
}

/// Per-index input contributions to the main GRU's gates.
///
/// The three per-sample inputs (previous signal, prediction, previous
/// excitation) are μ-law indices run through a shared embedding, so each
/// input matrix slice times each possible embedding row is precomputed
/// once; the per-sample work drops to three table-row additions. The
/// conditioning contribution `g_f` changes once per frame and includes the
/// input bias.
#[derive(Clone, Debug)]
pub struct PrecomputedInputs {
    stride: usize,
    table_s: Vec<f32>,
    table_p: Vec<f32>,
    table_e: Vec<f32>,
    pub g_f: Vec<f32>,
}

impl PrecomputedInputs {
    pub fn row_s(&self, i: MuLawIndex) -> &[f32] {
        &self.table_s[i as usize * self.stride..(i as usize + 1) * self.stride]
    }

    pub fn row_p(&self, i: MuLawIndex) -> &[f32] {
        &self.table_p[i as usize * self.stride..(i as usize + 1) * self.stride]
    }

    pub fn row_e(&self, i: MuLawIndex) -> &[f32] {
        &self.table_e[i as usize * self.stride..(i as usize + 1) * self.stride]
    }

    /// Refreshes the per-frame conditioning contribution:
    /// `g_f = W[:, 3E..3E+C]·f + bias_input`.
    pub fn update_frame(&mut self, gru_a_input: &DenseMatrix, bias_input: &[f32], f: &[f32]) {
        let c0 = gru_a_input.cols() - f.len();
        for (j, g) in self.g_f.iter_mut().enumerate() {
            let row = gru_a_input.row(j);
            let mut acc = bias_input[j] as f64;
            for (w, v) in row[c0..].iter().zip(f.iter()) {
                acc += *w as f64 * *v as f64;
            }
            *g = acc as f32;
        }
    }

    /// Assembles the gate input vector for one sample into `out`.
    pub fn gate_inputs_into(&self, s: MuLawIndex, p: MuLawIndex, e: MuLawIndex, out: &mut [f32]) {
        let (rs, rp, re) = (self.row_s(s), self.row_p(p), self.row_e(e));
        for j in 0..self.stride {
            out[j] = rs[j] + rp[j] + re[j] + self.g_f[j];
        }
    }
}

/// Builds the three 256-row contribution tables from the embedding and the
/// main GRU input matrix (columns: three embedding slots, then the
/// conditioning slot).
pub fn precompute_input_contributions(
    embed: &DenseMatrix,
    gru_a_input: &DenseMatrix,
    embed_dim: usize,
) -> PrecomputedInputs {
    let stride = gru_a_input.rows();
    let mut tables = [
        vec![0.0f32; 256 * stride],
        vec![0.0f32; 256 * stride],
        vec![0.0f32; 256 * stride],
    ];
    for idx in 0..256usize {
        let emb = embed.row(idx);
        for (slot, table) in tables.iter_mut().enumerate() {
            let c0 = slot * embed_dim;
            let dst = &mut table[idx * stride..(idx + 1) * stride];
            for (j, d) in dst.iter_mut().enumerate() {
                let row = gru_a_input.row(j);
                let mut acc = 0.0f64;
                for (w, v) in row[c0..c0 + embed_dim].iter().zip(emb.iter()) {
                    acc += *w as f64 * *v as f64;
                }
                *d = acc as f32;
            }
        }
    }
    let [table_s, table_p, table_e] = tables;
    PrecomputedInputs {
        stride,
        table_s,
        table_p,
        table_e,
        g_f: vec![0.0f32; stride],
    }
}
