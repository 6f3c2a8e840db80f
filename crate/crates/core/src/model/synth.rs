//! The autoregressive synthesis loop: per frame, refresh the conditioning
//! contributions; per sample, predict, run both GRUs, sample the
//! excitation from the tree, and reconstruct the signal.

use std::time::Instant;

use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dsp::{
    lpc_predict, mulaw_decode, mulaw_encode, Deemphasis, LpcCoeffs, MuLawIndex, LPC_ORDER,
};
use crate::sampling::{
    build_inv_sigmoid_table, tree_sample, InvSigmoidTable, NodeLogitProvider as _,
    DEFAULT_TABLE_SIZE, DEFAULT_XI,
};

use super::network::{
    gru_step_into, precompute_input_contributions, DualFcProvider, PrecomputedInputs,
};
use super::{FeatureFrame, Model, ModelError};

/// Pre-emphasis coefficient baked into the signal model; de-emphasis with
/// the same value reconstructs the output.
pub const PREEMPHASIS: f64 = 0.85;

/// Signal history entries are clamped here; random (untrained) predictors
/// can be locally expansive, and an unbounded history would overflow long
/// before the bounded excitation could pull it back.
const HISTORY_CLAMP: f64 = 32.0;

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub preemphasis: f64,
    pub xi: f64,
    pub table_size: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            preemphasis: PREEMPHASIS,
            xi: DEFAULT_XI,
            table_size: DEFAULT_TABLE_SIZE,
        }
    }
}

/// Per-stream state. History is most-recent-first in the pre-emphasized
/// signal domain; 128 is the zero μ-law code.
#[derive(Clone, Debug)]
pub struct SynthState {
    pub h_a: Vec<f32>,
    pub h_b: Vec<f32>,
    pub sig_history: [f64; LPC_ORDER],
    pub last_exc: MuLawIndex,
}

impl SynthState {
    pub fn new(n_a: usize, n_b: usize) -> Self {
        Self {
            h_a: vec![0.0; n_a],
            h_b: vec![0.0; n_b],
            sig_history: [0.0; LPC_ORDER],
            last_exc: 128,
        }
    }
}

/// Everything about the current frame the per-sample loop needs: the
/// predictor and the conditioning contribution to the second GRU's gates.
pub struct FrameContext {
    pub lpc: LpcCoeffs,
    pub g_bf: Vec<f32>,
}

/// Reused per-sample buffers plus evaluation counters.
pub struct Scratch {
    gin_a: Vec<f32>,
    rc_a: Vec<f32>,
    gin_b: Vec<f32>,
    rc_b: Vec<f32>,
    pub nodes_evaluated: usize,
    pub tanh_evaluated: usize,
}

impl Scratch {
    pub fn new(n_a: usize, n_b: usize) -> Self {
        Self {
            gin_a: vec![0.0; 3 * n_a],
            rc_a: vec![0.0; 3 * n_a],
            gin_b: vec![0.0; 3 * n_b],
            rc_b: vec![0.0; 3 * n_b],
            nodes_evaluated: 0,
            tanh_evaluated: 0,
        }
    }
}

/// One sample: predict from history, form the main GRU's gate inputs from
/// the three precomputed table rows plus the frame contribution, step both
/// GRUs, sample the excitation, and emit `s_t = p_t + e_t`.
pub fn sample_rate_step(
    model: &Model,
    state: &mut SynthState,
    frame: &FrameContext,
    pre: &PrecomputedInputs,
    table: &InvSigmoidTable,
    rng: &mut ChaCha8Rng,
    scratch: &mut Scratch,
) -> (MuLawIndex, f64) {
    let p_t = lpc_predict(&state.sig_history, &frame.lpc);
    let idx_s = mulaw_encode(state.sig_history[0]);
    let idx_p = mulaw_encode(p_t);
    pre.gate_inputs_into(idx_s, idx_p, state.last_exc, &mut scratch.gin_a);
    gru_step_into(
        &mut state.h_a,
        &scratch.gin_a,
        &model.gru_a.recurrent,
        &model.gru_a.bias_recurrent,
        &mut scratch.rc_a,
    );
    model
        .gru_b
        .input_h
        .gemv_into(&state.h_a, &mut scratch.gin_b);
    for (g, c) in scratch.gin_b.iter_mut().zip(frame.g_bf.iter()) {
        *g += c;
    }
    gru_step_into(
        &mut state.h_b,
        &scratch.gin_b,
        &model.gru_b.recurrent,
        &model.gru_b.bias_recurrent,
        &mut scratch.rc_b,
    );
    let mut provider = DualFcProvider::new(&model.dual_fc, &state.h_b);
    let exc = tree_sample(&mut provider, table, rng);
    scratch.nodes_evaluated += provider.nodes_evaluated();
    scratch.tanh_evaluated += provider.tanh_evals();

    let s_t = p_t + mulaw_decode(exc);
    state.sig_history.rotate_right(1);
    state.sig_history[0] = s_t.clamp(-HISTORY_CLAMP, HISTORY_CLAMP);
    state.last_exc = exc;
    (exc, s_t)
}

/// Counters and timing for one synthesis run.
#[derive(Clone, Debug, Serialize)]
pub struct RunStats {
    pub samples: usize,
    pub wall_seconds: f64,
    /// Seconds of audio produced per second of compute.
    pub real_time_factor: f64,
    /// Measured output-layer tanh evaluations per sample.
    pub tanh_per_sample: f64,
    /// Multiply-add count per sample on the recurrent path.
    pub weights_per_sample: usize,
}

/// Runs the full pipeline over a feature sequence and returns unit-range
/// de-emphasized samples, `frame_size` per frame.
pub fn synthesize(
    model: &Model,
    frames: &[FeatureFrame],
    cfg: &SynthConfig,
    seed: u64,
) -> Result<(Vec<f64>, RunStats), ModelError> {
    if frames.is_empty() {
        return Err(ModelError::BadFeatures("no feature frames".into()));
    }
    if !(0.0..1.0).contains(&cfg.preemphasis) {
        return Err(ModelError::BadConfig(format!(
            "preemphasis {} outside [0, 1)",
            cfg.preemphasis
        )));
    }
    for f in frames {
        if !f.lpc_coeffs().is_finite() {
            return Err(ModelError::BadFeatures("non-finite predictor".into()));
        }
    }
    let table = build_inv_sigmoid_table(cfg.xi, cfg.table_size)
        .map_err(|e| ModelError::BadConfig(e.to_string()))?;

    let start = Instant::now();
    let conds = model.frame_rate.forward(frames);
    let mut pre =
        precompute_input_contributions(&model.embed, &model.gru_a.input, model.config.embed_dim);
    let n_a = model.config.n_a;
    let n_b = model.config.n_b;
    let mut state = SynthState::new(n_a, n_b);
    let mut scratch = Scratch::new(n_a, n_b);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deemph = Deemphasis::new(cfg.preemphasis);
    let mut out = Vec::with_capacity(frames.len() * model.config.frame_size);
    for (feat, cond) in frames.iter().zip(conds.iter()) {
        pre.update_frame(&model.gru_a.input, &model.gru_a.bias_input, cond);
        let frame = FrameContext {
            lpc: feat.lpc_coeffs(),
            g_bf: model.gru_b.frame_contribution(cond),
        };
        for _ in 0..model.config.frame_size {
            let (_, s_t) = sample_rate_step(
                model,
                &mut state,
                &frame,
                &pre,
                &table,
                &mut rng,
                &mut scratch,
            );
            out.push(deemph.step(s_t).clamp(-1.0, 1.0));
        }
    }
    let wall = start.elapsed().as_secs_f64().max(1e-9);
    let samples = out.len();
    let stats = RunStats {
        samples,
        wall_seconds: wall,
        real_time_factor: samples as f64 / crate::model::audio::SAMPLE_RATE as f64 / wall,
        tanh_per_sample: scratch.tanh_evaluated as f64 / samples as f64,
        weights_per_sample: model.weights_per_sample(),
    };
    Ok((out, stats))
}
