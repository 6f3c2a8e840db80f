//! Deterministic pseudo-random weight files for benchmarks, pipeline
//! tests, and the quantization toolchain. Values mimic trained-network
//! statistics (bounded, centred, sparse where the preset says so) but
//! carry no learned content; output quality is noise by construction.

use rand::rngs::StdRng;
use rand::seq::index::sample as index_sample;
use rand::{Rng as _, SeedableRng as _};

use super::config::ModelConfig;
use super::weights::{Tensor, TensorData, WeightFile};
use super::ModelError;

fn value_range(name: &str) -> (f32, f32) {
    if name == "dual_fc.a1" || name == "dual_fc.a2" {
        (0.5, 1.5)
    } else if name.contains("bias") || name == "dual_fc.b1" || name == "dual_fc.b2" {
        (-0.1, 0.1)
    } else if name.starts_with("frame_rate.") {
        (-0.3, 0.3)
    } else {
        (-0.5, 0.5)
    }
}

/// Sparse-by-zeros gate matrix data honouring the documented per-gate
/// split (2d candidate, d/2 update and reset) with an exact 8×4 block
/// count per gate and per column region, so derived cost metrics are
/// deterministic, not merely expected values.
fn sparse_gate_data(
    rng: &mut StdRng,
    rows: usize,
    cols: usize,
    regions: &[usize],
    density: f64,
    amp: f32,
) -> Result<Vec<f32>, ModelError> {
    let n = rows / 3;
    let gate_block_rows = n / 8;
    let fracs = [density / 2.0, density / 2.0, (2.0 * density).min(1.0)];
    let mut data = vec![0.0f32; rows * cols];
    for (g, frac) in fracs.iter().enumerate() {
        let mut col0 = 0usize;
        for &region in regions {
            if region % 4 != 0 {
                return Err(ModelError::BadConfig(format!(
                    "column region {region} not divisible by the block width"
                )));
            }
            let bc = region / 4;
            let cells = gate_block_rows * bc;
            let want = (frac * cells as f64).round() as usize;
            for i in index_sample(rng, cells, want) {
                let (br, b_c) = (i / bc, i % bc);
                for r in 0..8 {
                    let row = (g * n + br * 8 + r) * cols + col0 + b_c * 4;
                    for c in 0..4 {
                        data[row + c] = rng.gen_range(-amp..amp);
                    }
                }
            }
            col0 += region;
        }
    }
    Ok(data)
}

/// Generates a full float weight file for a geometry. The result is
/// everything the synthesizer needs; quantized presets additionally go
/// through the quantization toolchain afterwards.
pub fn gen_weight_file(cfg: &ModelConfig, seed: u64) -> Result<WeightFile, ModelError> {
    cfg.validate().map_err(ModelError::BadConfig)?;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut tensors = Vec::new();
    for (name, rows, cols) in cfg.tensor_shapes() {
        let (lo, hi) = value_range(&name);
        let (data, density) = match name.as_str() {
            "gru_a.recurrent" if cfg.d_a < 1.0 => (
                sparse_gate_data(&mut rng, rows, cols, &[cols], cfg.d_a, hi)?,
                cfg.d_a as f32,
            ),
            "gru_b.input" if cfg.d_b < 1.0 => (
                sparse_gate_data(&mut rng, rows, cols, &[cfg.n_a, cfg.cond_dim], cfg.d_b, hi)?,
                cfg.d_b as f32,
            ),
            _ => (
                (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect(),
                1.0,
            ),
        };
        tensors.push(Tensor {
            name,
            rows,
            cols,
            density,
            data: TensorData::F32(data),
        });
    }
    Ok(WeightFile::new(tensors))
}
