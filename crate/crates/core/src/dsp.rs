//! Signal-domain primitives: mu-law companding, pre-/de-emphasis, and the
//! order-16 linear predictor.
//!
//! The network models only the excitation (prediction residual) in the
//! mu-law domain of the pre-emphasized signal; everything in this module is
//! the deterministic plumbing around that excitation.

/// Companding constant of the mu=255 law.
pub const MU: f64 = 255.0;

/// Linear prediction order. Carried in the feature file, fixed by the model.
pub const LPC_ORDER: usize = 16;

const LN_256: f64 = 5.545177444479562; // ln(1 + MU)

/// Mu-law code for a signal amplitude in [-1, 1].
///
/// Codes are offset-128: index 128 is zero amplitude, 255 is +1.0, 1 is
/// -1.0. Index 0 is never produced by [`mulaw_encode`]; it decodes as the
/// continuation of the companding curve (slightly below -1) so that
/// [`mulaw_decode`] stays strictly monotone over all 256 codes.
pub type MuLawIndex = u8;

/// Encode an amplitude to its nearest mu-law code.
///
/// Input is clamped to [-1, 1]; the result is always in 1..=255.
pub fn mulaw_encode(x: f64) -> MuLawIndex {
    let x = x.clamp(-1.0, 1.0);
    let companded = 127.0 * (1.0 + MU * x.abs()).ln() / LN_256;
    let index = 128.0 + (companded * x.signum()).round();
    index.clamp(0.0, 255.0) as u8
}

/// Decode a mu-law code to the amplitude at its code center.
///
/// Exact inverse of the [`mulaw_encode`] companding curve;
/// `mulaw_decode(128) == 0.0` and `mulaw_decode(255) == 1.0`.
pub fn mulaw_decode(index: MuLawIndex) -> f64 {
    let delta = index as f64 - 128.0;
    let mag = ((MU + 1.0).powf(delta.abs() / 127.0) - 1.0) / MU;
    mag * delta.signum()
}

/// First-order high-pass `y[t] = x[t] - coeff * x[t-1]`, with `x[-1] = 0`.
pub fn preemphasis(signal: &[f64], coeff: f64) -> Vec<f64> {
    let mut prev = 0.0;
    signal
        .iter()
        .map(|&x| {
            let y = x - coeff * prev;
            prev = x;
            y
        })
        .collect()
}

/// Inverse of [`preemphasis`]: `y[t] = x[t] + coeff * y[t-1]`.
///
/// No clamping here; the synthesis output stage clamps to [-1, 1] once,
/// just before PCM conversion.
pub fn deemphasis(signal: &[f64], coeff: f64) -> Vec<f64> {
    let mut filter = Deemphasis::new(coeff);
    signal.iter().map(|&x| filter.step(x)).collect()
}

/// Streaming de-emphasis state for sample-at-a-time synthesis.
#[derive(Clone, Debug)]
pub struct Deemphasis {
    coeff: f64,
    mem: f64,
}

impl Deemphasis {
    pub fn new(coeff: f64) -> Self {
        Self { coeff, mem: 0.0 }
    }

    pub fn step(&mut self, x: f64) -> f64 {
        self.mem = x + self.coeff * self.mem;
        self.mem
    }
}

/// The 16 prediction coefficients of one frame, ordered lag 1..=16.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LpcCoeffs(pub [f64; LPC_ORDER]);

impl LpcCoeffs {
    pub fn zero() -> Self {
        Self([0.0; LPC_ORDER])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|a| a.is_finite())
    }
}

/// Linear prediction `p[t] = sum_k a[k] * s[t-k]`.
///
/// `history` is ordered most-recent-first: `history[0]` is `s[t-1]`.
pub fn lpc_predict(history: &[f64; LPC_ORDER], coeffs: &LpcCoeffs) -> f64 {
    let mut acc = 0.0;
    for (s, a) in history.iter().zip(coeffs.0.iter()) {
        acc += a * s;
    }
    acc
}
