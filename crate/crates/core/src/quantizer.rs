//! Weight quantization toolchain: the periodic regularization loss that
//! pulls weights toward the int8 lattice, its analytic gradient (both
//! exposed for an external trainer), and the progressive hard-quantization
//! sweep that snaps weights in place and packs the sample-rate matrices
//! into int8 block-sparse form.

use thiserror::Error;

use crate::kernels::matrix::{pack_block_sparse, DenseMatrix, KernelError, Q8_SCALE};
use crate::model::weights::{quant_designation, QuantDesignation, Tensor, TensorData, WeightFile};

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_EPSILON: f64 = 0.001;
pub const DEFAULT_Q: f64 = 1.0 / 128.0;
/// Schedule points a full quantization sweep evaluates by default.
pub const DEFAULT_SCHEDULE_STEPS: usize = 10;

#[derive(Debug, Error)]
pub enum QuantizerError {
    #[error("invalid quantizer parameters: {0}")]
    BadConfig(String),
    #[error(
        "weight at index {index} is {value}; quantization requires magnitudes strictly below 1"
    )]
    OutOfRange { index: usize, value: f64 },
    #[error("tensor {tensor}: {detail}")]
    Tensor { tensor: String, detail: String },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Clone, Copy, Debug)]
pub struct QuantizerConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub q: f64,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            epsilon: DEFAULT_EPSILON,
            q: DEFAULT_Q,
        }
    }
}

impl QuantizerConfig {
    pub fn validate(&self) -> Result<(), QuantizerError> {
        if !(self.alpha > 0.0) || !(self.epsilon > 0.0) || !(self.q > 0.0) {
            return Err(QuantizerError::BadConfig(format!(
                "alpha {}, epsilon {}, q {} must all be positive",
                self.alpha, self.epsilon, self.q
            )));
        }
        Ok(())
    }
}

/// Linear ramp: ζ is 0 up to `start_progress`, rises linearly, and holds
/// exactly ½ from `end_progress` on.
#[derive(Clone, Copy, Debug)]
pub struct ZetaSchedule {
    pub start_progress: f64,
    pub end_progress: f64,
}

impl Default for ZetaSchedule {
    fn default() -> Self {
        Self {
            start_progress: 0.0,
            end_progress: 1.0,
        }
    }
}

impl ZetaSchedule {
    pub fn validate(&self) -> Result<(), QuantizerError> {
        let ok = (0.0..=1.0).contains(&self.start_progress)
            && (0.0..=1.0).contains(&self.end_progress)
            && self.start_progress < self.end_progress;
        if !ok {
            return Err(QuantizerError::BadConfig(format!(
                "schedule [{}, {}] must satisfy 0 ≤ start < end ≤ 1",
                self.start_progress, self.end_progress
            )));
        }
        Ok(())
    }

    pub fn zeta(&self, progress: f64) -> f64 {
        if progress <= self.start_progress {
            0.0
        } else if progress >= self.end_progress {
            0.5
        } else {
            0.5 * (progress - self.start_progress) / (self.end_progress - self.start_progress)
        }
    }
}

/// Signed distance from `w` to its nearest lattice point, in lattice
/// units; ties round to even. Computing the trigonometry on this folded
/// argument keeps the loss exactly periodic and the gradient exactly zero
/// on the lattice.
fn lattice_frac(w: f64, q: f64) -> f64 {
    let t = w / q;
    t - t.round_ties_even()
}

/// Regularization loss α·(1 + ε − cos(2πw/q))^¼: minimized exactly on the
/// lattice, maximal halfway between points, q-periodic.
pub fn quant_reg_loss(w: f64, cfg: &QuantizerConfig) -> f64 {
    let u = 2.0 * std::f64::consts::PI * lattice_frac(w, cfg.q);
    cfg.alpha * (1.0 + cfg.epsilon - u.cos()).powf(0.25)
}

/// Analytic d/dw of [`quant_reg_loss`]:
/// (α/4)·(1 + ε − cos u)^(−3/4)·sin(u)·(2π/q) with u = 2πw/q.
pub fn quant_reg_grad(w: f64, cfg: &QuantizerConfig) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let u = two_pi * lattice_frac(w, cfg.q);
    cfg.alpha / 4.0 * (1.0 + cfg.epsilon - u.cos()).powf(-0.75) * u.sin() * (two_pi / cfg.q)
}

/// One hard-quantization pass: every weight strictly closer than `zeta`
/// lattice units to its nearest lattice point snaps onto it; the rest pass
/// through untouched. Idempotent for fixed `zeta`. Weights with magnitude
/// ≥ 1 violate the quantizer's open-interval domain and are rejected.
pub fn hard_quantize_step(
    weights: &[f32],
    zeta: f64,
    cfg: &QuantizerConfig,
) -> Result<Vec<f32>, QuantizerError> {
    cfg.validate()?;
    if !(0.0..=0.5).contains(&zeta) {
        return Err(QuantizerError::BadConfig(format!(
            "zeta {zeta} outside [0, 1/2]"
        )));
    }
    let mut out = Vec::with_capacity(weights.len());
    for (index, &wf) in weights.iter().enumerate() {
        let w = wf as f64;
        if !(w.abs() < 1.0) {
            return Err(QuantizerError::OutOfRange { index, value: w });
        }
        let t = w / cfg.q;
        let snapped = t.round_ties_even();
        if (t - snapped).abs() < zeta {
            out.push((snapped * cfg.q) as f32);
        } else {
            out.push(wf);
        }
    }
    Ok(out)
}

fn wrap(tensor: &str, e: QuantizerError) -> QuantizerError {
    QuantizerError::Tensor {
        tensor: tensor.to_owned(),
        detail: e.to_string(),
    }
}

/// Full quantization sweep over a float weight file. Sample-rate tensors
/// run the ζ schedule to ½ and finish fully on the lattice (the final step
/// also snaps exact midpoints, which round to even); the matrices the
/// engine multiplies per sample are then packed to int8 block-sparse,
/// while the table-folded input matrix keeps f32 storage. Frame-rate
/// tensors, biases, scales and the embedding pass through bit-identical.
pub fn quantize_model(
    wf: &WeightFile,
    schedule: &ZetaSchedule,
    cfg: &QuantizerConfig,
    steps: usize,
) -> Result<WeightFile, QuantizerError> {
    cfg.validate()?;
    schedule.validate()?;
    if steps == 0 {
        return Err(QuantizerError::BadConfig("schedule needs ≥ 1 step".into()));
    }
    // packed storage is int8 at scale 1/128, so the lattice spacing must
    // be a whole number of storage steps
    let ratio = cfg.q / Q8_SCALE as f64;
    if ratio < 1.0 || (ratio - ratio.round()).abs() > 1e-9 {
        return Err(QuantizerError::BadConfig(format!(
            "q = {} is not a positive multiple of the int8 storage scale {}",
            cfg.q, Q8_SCALE
        )));
    }
    let mut tensors = Vec::with_capacity(wf.tensors.len());
    for t in &wf.tensors {
        let designation = quant_designation(&t.name);
        if designation == QuantDesignation::Passthrough {
            tensors.push(t.clone());
            continue;
        }
        let Some(v) = t.f32_data() else {
            return Err(QuantizerError::Tensor {
                tensor: t.name.clone(),
                detail: "already quantized; expected f32 storage".into(),
            });
        };
        let mut w = v.to_vec();
        for i in 0..=steps {
            let zeta = schedule.zeta(i as f64 / steps as f64);
            w = hard_quantize_step(&w, zeta, cfg).map_err(|e| wrap(&t.name, e))?;
        }
        // ζ = ½ leaves exact midpoints untouched (strict inequality); the
        // sweep's contract is a fully quantized tensor, so snap them too
        for x in w.iter_mut() {
            *x = (((*x as f64) / cfg.q).round_ties_even() * cfg.q) as f32;
        }
        let data = match designation {
            QuantDesignation::LatticeF32 => TensorData::F32(w),
            QuantDesignation::PackQ8 => {
                let dm =
                    DenseMatrix::new(t.rows, t.cols, w).map_err(|e| wrap(&t.name, e.into()))?;
                TensorData::Q8(pack_block_sparse(&dm).map_err(|e| wrap(&t.name, e.into()))?)
            }
            QuantDesignation::Passthrough => unreachable!(),
        };
        tensors.push(Tensor {
            name: t.name.clone(),
            rows: t.rows,
            cols: t.cols,
            density: t.density,
            data,
        });
    }
    Ok(WeightFile::new(tensors))
}
