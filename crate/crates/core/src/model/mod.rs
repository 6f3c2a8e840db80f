//! The vocoder model: configuration and presets, weight-file loading with
//! full shape/storage validation, the frame-rate and sample-rate networks,
//! the synthesis loop, and feature/audio file I/O.

pub mod audio;
pub mod config;
pub mod features;
pub mod frame_rate;
pub mod generate;
pub mod network;
pub mod synth;
pub mod weights;

pub use config::{ModelConfig, FEATURE_DIM, TREE_NODES};
pub use features::{read_features, synthetic_features, write_features, FeatureFrame};
pub use weights::{
    quant_designation, QuantDesignation, Tensor, TensorData, WeightError, WeightFile,
};

use thiserror::Error;

use crate::kernels::matrix::{unpack_block_sparse, BlockSparseMatrix, DenseMatrix, KernelError};
use crate::sampling::TREE_LEVELS;
use frame_rate::FrameRateNet;
use network::{DualFc, GateMatrix};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("i/o error")]
    Io(#[from] std::io::Error),
    #[error("audio i/o error")]
    Audio(#[from] hound::Error),
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("unexpected tensor {0}")]
    UnexpectedTensor(String),
    #[error("tensor {tensor}: shape {found_rows}x{found_cols}, expected {rows}x{cols}")]
    TensorShape {
        tensor: String,
        rows: usize,
        cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
    #[error("tensor {tensor}: stored as {found}, expected {expected}")]
    Storage {
        tensor: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("tensor {tensor}: {detail}")]
    DensitySplit { tensor: String, detail: String },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("bad feature data: {0}")]
    BadFeatures(String),
}

/// Main GRU: input side is consumed through precomputed tables, so the
/// input matrix stays dense f32 regardless of quantization.
#[derive(Clone, Debug)]
pub struct GruA {
    pub input: DenseMatrix,
    pub bias_input: Vec<f32>,
    pub recurrent: GateMatrix,
    pub bias_recurrent: Vec<f32>,
}

/// Second GRU: its input is concat(h_a, f); the two column halves are kept
/// separate so the conditioning half runs once per frame instead of once
/// per sample.
#[derive(Clone, Debug)]
pub struct GruB {
    pub input_h: GateMatrix,
    pub input_f: GateMatrix,
    pub bias_input: Vec<f32>,
    pub recurrent: GateMatrix,
    pub bias_recurrent: Vec<f32>,
}

impl GruB {
    /// Per-frame gate contribution `input_f·f + bias_input`.
    pub fn frame_contribution(&self, f: &[f32]) -> Vec<f32> {
        let mut g = vec![0.0f32; self.input_f.rows()];
        self.input_f.gemv_into(f, &mut g);
        for (gv, b) in g.iter_mut().zip(self.bias_input.iter()) {
            *gv += b;
        }
        g
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub frame_rate: FrameRateNet,
    pub embed: DenseMatrix,
    pub gru_a: GruA,
    pub gru_b: GruB,
    pub dual_fc: DualFc,
}

fn expect<'a>(wf: &'a WeightFile, name: &str) -> Result<&'a Tensor, ModelError> {
    wf.tensor(name)
        .ok_or_else(|| ModelError::MissingTensor(name.into()))
}

fn f32_vec(t: &Tensor) -> Result<Vec<f32>, ModelError> {
    t.f32_data()
        .map(<[f32]>::to_vec)
        .ok_or_else(|| ModelError::Storage {
            tensor: t.name.clone(),
            expected: "f32",
            found: "q8",
        })
}

fn dense(t: &Tensor) -> Result<DenseMatrix, ModelError> {
    Ok(DenseMatrix::new(t.rows, t.cols, f32_vec(t)?)?)
}

fn gate(t: &Tensor) -> Result<GateMatrix, ModelError> {
    Ok(match &t.data {
        TensorData::F32(_) => GateMatrix::Dense(dense(t)?),
        TensorData::Q8(m) => GateMatrix::Sparse(m.clone()),
    })
}

/// Checks a sparse gate matrix's populated-block fractions against the
/// documented per-gate split (2d for the candidate/state gate, d/2 for
/// update and reset). Metadata validation only — the split is never
/// re-derived from the weights.
fn check_density_split(name: &str, m: &BlockSparseMatrix, density: f64) -> Result<(), ModelError> {
    let gate_block_rows = m.out_rows() / 3 / 8;
    let n_block_cols = m.in_cols().div_ceil(4);
    let grid = (gate_block_rows * n_block_cols) as f64;
    let expected = [density / 2.0, density / 2.0, (2.0 * density).min(1.0)];
    let gate_names = ["update", "reset", "candidate"];
    let mut counts = [0usize; 3];
    for &(br, _) in m.blocks() {
        counts[(br as usize / gate_block_rows).min(2)] += 1;
    }
    for g in 0..3 {
        let actual = counts[g] as f64 / grid;
        let tol = (0.2 * expected[g]).max(0.05);
        if (actual - expected[g]).abs() > tol {
            return Err(ModelError::DensitySplit {
                tensor: name.into(),
                detail: format!(
                    "{} gate populated fraction {actual:.3} inconsistent with \
                     stated density {density} (expected {:.3} ± {tol:.3})",
                    gate_names[g], expected[g]
                ),
            });
        }
    }
    Ok(())
}

fn derive_name(n_a: usize, n_b: usize, d_a: f64, d_b: f64, embed: usize, cond: usize) -> String {
    for p in ModelConfig::preset_names() {
        let c = ModelConfig::preset(p).unwrap();
        if c.n_a == n_a
            && c.n_b == n_b
            && (c.d_a - d_a).abs() < 1e-6
            && (c.d_b - d_b).abs() < 1e-6
            && c.embed_dim == embed
            && c.cond_dim == cond
        {
            return p.to_owned();
        }
    }
    format!("custom-{n_a}x{n_b}")
}

impl Model {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ModelError> {
        Self::from_weight_file(&WeightFile::load(path)?)
    }

    /// Builds a model from a loaded weight file, inferring the geometry
    /// from tensor shapes and validating every tensor against it.
    pub fn from_weight_file(wf: &WeightFile) -> Result<Self, ModelError> {
        let rec_a = expect(wf, "gru_a.recurrent")?;
        let rec_b = expect(wf, "gru_b.recurrent")?;
        let in_b = expect(wf, "gru_b.input")?;
        let embed_t = expect(wf, "embed.weight")?;
        let conv1 = expect(wf, "frame_rate.conv1.weight")?;
        let quantized = rec_a.is_quantized();
        let config = ModelConfig {
            name: derive_name(
                rec_a.cols,
                rec_b.cols,
                rec_a.density as f64,
                in_b.density as f64,
                embed_t.cols,
                conv1.rows,
            ),
            n_a: rec_a.cols,
            n_b: rec_b.cols,
            d_a: rec_a.density as f64,
            d_b: in_b.density as f64,
            quantized,
            embed_dim: embed_t.cols,
            cond_dim: conv1.rows,
            lpc_order: crate::dsp::LPC_ORDER,
            frame_size: 160,
        };
        config.validate().map_err(ModelError::BadConfig)?;

        // every expected tensor, exact shape; nothing extra
        let shapes = config.tensor_shapes();
        for (name, rows, cols) in &shapes {
            let t = expect(wf, name)?;
            if t.rows != *rows || t.cols != *cols {
                return Err(ModelError::TensorShape {
                    tensor: name.clone(),
                    rows: *rows,
                    cols: *cols,
                    found_rows: t.rows,
                    found_cols: t.cols,
                });
            }
        }
        for t in &wf.tensors {
            if !shapes.iter().any(|(n, _, _)| n == &t.name) {
                return Err(ModelError::UnexpectedTensor(t.name.clone()));
            }
        }

        // storage consistency: q8 only where the toolchain packs, and the
        // packed set is all-or-nothing
        for t in &wf.tensors {
            let packable = quant_designation(&t.name) == QuantDesignation::PackQ8;
            if t.is_quantized() && !packable {
                return Err(ModelError::Storage {
                    tensor: t.name.clone(),
                    expected: "f32",
                    found: "q8",
                });
            }
            if packable && t.is_quantized() != quantized {
                return Err(ModelError::Storage {
                    tensor: t.name.clone(),
                    expected: if quantized { "q8" } else { "f32" },
                    found: if t.is_quantized() { "q8" } else { "f32" },
                });
            }
        }
        if quantized {
            for (name, d) in [("gru_a.recurrent", config.d_a), ("gru_b.input", config.d_b)] {
                if d < 1.0 {
                    if let TensorData::Q8(m) = &wf.tensor(name).unwrap().data {
                        check_density_split(name, m, d)?;
                    }
                }
            }
        }

        let frame_rate = FrameRateNet::new(
            dense(expect(wf, "frame_rate.conv1.weight")?)?,
            f32_vec(expect(wf, "frame_rate.conv1.bias")?)?,
            dense(expect(wf, "frame_rate.conv2.weight")?)?,
            f32_vec(expect(wf, "frame_rate.conv2.bias")?)?,
            dense(expect(wf, "frame_rate.dense1.weight")?)?,
            f32_vec(expect(wf, "frame_rate.dense1.bias")?)?,
            dense(expect(wf, "frame_rate.dense2.weight")?)?,
            f32_vec(expect(wf, "frame_rate.dense2.bias")?)?,
        )?;
        let gru_a = GruA {
            input: dense(expect(wf, "gru_a.input")?)?,
            bias_input: f32_vec(expect(wf, "gru_a.bias_input")?)?,
            recurrent: gate(rec_a)?,
            bias_recurrent: f32_vec(expect(wf, "gru_a.bias_recurrent")?)?,
        };
        let (input_h, input_f) = match &in_b.data {
            TensorData::F32(_) => {
                let full = dense(in_b)?;
                let h = full.col_slice(0, config.n_a);
                let f = full.col_slice(config.n_a, full.cols());
                (GateMatrix::Dense(h), GateMatrix::Dense(f))
            }
            TensorData::Q8(m) => {
                let (h, f) = m.split_cols(config.n_a)?;
                (GateMatrix::Sparse(h), GateMatrix::Sparse(f))
            }
        };
        let gru_b = GruB {
            input_h,
            input_f,
            bias_input: f32_vec(expect(wf, "gru_b.bias_input")?)?,
            recurrent: gate(rec_b)?,
            bias_recurrent: f32_vec(expect(wf, "gru_b.bias_recurrent")?)?,
        };
        let dual_fc = DualFc {
            w1: gate(expect(wf, "dual_fc.w1")?)?,
            b1: f32_vec(expect(wf, "dual_fc.b1")?)?,
            a1: f32_vec(expect(wf, "dual_fc.a1")?)?,
            w2: gate(expect(wf, "dual_fc.w2")?)?,
            b2: f32_vec(expect(wf, "dual_fc.b2")?)?,
            a2: f32_vec(expect(wf, "dual_fc.a2")?)?,
        };
        Ok(Model {
            config,
            frame_rate,
            embed: dense(embed_t)?,
            gru_a,
            gru_b,
            dual_fc,
        })
    }

    pub fn is_quantized(&self) -> bool {
        self.config.quantized
    }

    /// Float twin of a quantized model: every packed matrix is expanded
    /// back to dense f32 (numerically identical values, dense kernels).
    pub fn dequantized(&self) -> Self {
        let undo = |g: &GateMatrix| match g {
            GateMatrix::Dense(m) => GateMatrix::Dense(m.clone()),
            GateMatrix::Sparse(m) => GateMatrix::Dense(unpack_block_sparse(m)),
        };
        let mut out = self.clone();
        out.config.quantized = false;
        out.gru_a.recurrent = undo(&self.gru_a.recurrent);
        out.gru_b.input_h = undo(&self.gru_b.input_h);
        out.gru_b.input_f = undo(&self.gru_b.input_f);
        out.gru_b.recurrent = undo(&self.gru_b.recurrent);
        out.dual_fc.w1 = undo(&self.dual_fc.w1);
        out.dual_fc.w2 = undo(&self.dual_fc.w2);
        out
    }

    /// Multiply-add count one emitted sample touches: the two recurrent
    /// products, the per-sample half of the second GRU's input product,
    /// and 2·levels dual-FC rows plus their output scales.
    pub fn weights_per_sample(&self) -> usize {
        let levels = TREE_LEVELS as usize;
        self.gru_a.recurrent.macs_per_gemv()
            + self.gru_b.input_h.macs_per_gemv()
            + self.gru_b.recurrent.macs_per_gemv()
            + 2 * levels * self.config.n_b
            + 2 * levels
    }

    /// Output-layer tanh evaluations per sample: 2 per tree level.
    pub fn tanh_per_sample(&self) -> usize {
        2 * TREE_LEVELS as usize
    }
}

/// Loads and validates a weight file from disk.
pub fn load_model(path: impl AsRef<std::path::Path>) -> Result<Model, ModelError> {
    Model::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use generate::gen_weight_file;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            name: "tiny".into(),
            n_a: 16,
            n_b: 8,
            d_a: 1.0,
            d_b: 1.0,
            quantized: false,
            embed_dim: 8,
            cond_dim: 8,
            lpc_order: 16,
            frame_size: 160,
        }
    }

    #[test]
    fn p384_preset_file_loads_with_expected_geometry() {
        let cfg = ModelConfig::preset("P384").unwrap();
        let wf = gen_weight_file(&cfg, 1).unwrap();
        let m = Model::from_weight_file(&wf).unwrap();
        assert_eq!(m.config.n_a, 384);
        assert_eq!(m.config.n_b, 32);
        assert_eq!(m.config.name, "P384");
        assert!(!m.config.quantized, "freshly generated weights are float");
        assert_eq!(m.embed.rows(), 256);
        assert_eq!(m.gru_b.input_h.cols(), 384);
        assert_eq!(m.gru_b.input_f.cols(), 128);
    }

    #[test]
    fn missing_tensor_is_named() {
        let mut wf = gen_weight_file(&tiny_config(), 2).unwrap();
        wf.tensors.retain(|t| t.name != "gru_b.bias_input");
        match Model::from_weight_file(&wf) {
            Err(ModelError::MissingTensor(n)) => assert_eq!(n, "gru_b.bias_input"),
            other => panic!("expected MissingTensor, got {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_is_named() {
        let mut wf = gen_weight_file(&tiny_config(), 3).unwrap();
        let t = wf.tensor_mut("dual_fc.b2").unwrap();
        t.rows = 254;
        if let TensorData::F32(v) = &mut t.data {
            v.pop();
        }
        match Model::from_weight_file(&wf) {
            Err(ModelError::TensorShape { tensor, .. }) => assert_eq!(tensor, "dual_fc.b2"),
            other => panic!("expected TensorShape, got {other:?}"),
        }
    }

    #[test]
    fn extra_tensor_is_rejected() {
        let mut wf = gen_weight_file(&tiny_config(), 4).unwrap();
        wf.tensors.push(Tensor {
            name: "debug.scratch".into(),
            rows: 2,
            cols: 2,
            density: 1.0,
            data: TensorData::F32(vec![0.0; 4]),
        });
        assert!(matches!(
            Model::from_weight_file(&wf),
            Err(ModelError::UnexpectedTensor(n)) if n == "debug.scratch"
        ));
    }

    #[test]
    fn weights_per_sample_on_dense_tiny_model() {
        let m = Model::from_weight_file(&gen_weight_file(&tiny_config(), 5).unwrap()).unwrap();
        // dense: 48·16 + 24·16 + 24·8 + 16·8 + 16
        assert_eq!(m.weights_per_sample(), 768 + 384 + 192 + 128 + 16);
        assert_eq!(m.tanh_per_sample(), 16);
    }

    #[test]
    fn custom_geometry_gets_custom_name() {
        let mut cfg = tiny_config();
        cfg.n_a = 24;
        let wf = gen_weight_file(&cfg, 6).unwrap();
        let m = Model::from_weight_file(&wf).unwrap();
        assert_eq!(m.config.name, "custom-24x8");
    }

    #[test]
    fn b_preset_name_derived_from_geometry() {
        let cfg = ModelConfig::preset("B192").unwrap();
        let wf = gen_weight_file(&cfg, 7).unwrap();
        let m = Model::from_weight_file(&wf).unwrap();
        assert_eq!(m.config.name, "B192");
    }
}
