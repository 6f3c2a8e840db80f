//! Conditioning features: one 36-float vector per 10 ms frame.
//!
//! File format: raw little-endian f32, 36 per frame, frames concatenated,
//! no header. Layout per frame: 18 cepstra, pitch period, pitch
//! correlation, 16 prediction coefficients.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng as _, SeedableRng as _};

use super::config::FEATURE_DIM;
use super::ModelError;
use crate::dsp::{LpcCoeffs, LPC_ORDER};

pub const CEPSTRUM_DIM: usize = 18;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFrame {
    pub cepstrum: [f32; CEPSTRUM_DIM],
    pub pitch_period: f32,
    pub pitch_corr: f32,
    pub lpc: [f32; LPC_ORDER],
}

impl FeatureFrame {
    pub fn from_slice(v: &[f32]) -> Result<Self, ModelError> {
        if v.len() != FEATURE_DIM {
            return Err(ModelError::BadFeatures(format!(
                "frame has {} values, expected {FEATURE_DIM}",
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::BadFeatures("non-finite feature value".into()));
        }
        let mut f = FeatureFrame {
            cepstrum: [0.0; CEPSTRUM_DIM],
            pitch_period: v[18],
            pitch_corr: v[19],
            lpc: [0.0; LPC_ORDER],
        };
        f.cepstrum.copy_from_slice(&v[..CEPSTRUM_DIM]);
        f.lpc.copy_from_slice(&v[20..36]);
        Ok(f)
    }

    pub fn to_vec(&self) -> Vec<f32> {
        let mut v = Vec::with_capacity(FEATURE_DIM);
        v.extend_from_slice(&self.cepstrum);
        v.push(self.pitch_period);
        v.push(self.pitch_corr);
        v.extend_from_slice(&self.lpc);
        v
    }

    pub fn lpc_coeffs(&self) -> LpcCoeffs {
        let mut a = [0.0f64; LPC_ORDER];
        for (dst, src) in a.iter_mut().zip(self.lpc.iter()) {
            *dst = *src as f64;
        }
        LpcCoeffs(a)
    }
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<FeatureFrame>, ModelError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.is_empty() || bytes.len() % (FEATURE_DIM * 4) != 0 {
        return Err(ModelError::BadFeatures(format!(
            "file length {} is not a positive multiple of {} bytes per frame",
            bytes.len(),
            FEATURE_DIM * 4
        )));
    }
    let floats: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    floats
        .chunks_exact(FEATURE_DIM)
        .map(FeatureFrame::from_slice)
        .collect()
}

pub fn write_features(path: impl AsRef<Path>, frames: &[FeatureFrame]) -> Result<(), ModelError> {
    let mut w = BufWriter::new(File::create(path)?);
    for fr in frames {
        for x in fr.to_vec() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Converts reflection coefficients (all |k| < 1) to direct-form
/// prediction coefficients for `p_t = Σ a_k·s_{t-k}`; the resulting
/// predictor is guaranteed stable.
pub fn reflection_to_lpc(ks: &[f64; LPC_ORDER]) -> [f64; LPC_ORDER] {
    // step-up recursion on A(z) = 1 + Σ â_i z^{-i}
    let mut a = [0.0f64; LPC_ORDER];
    for (m, &k) in ks.iter().enumerate() {
        let mut next = a;
        next[m] = k;
        for i in 0..m {
            next[i] = a[i] + k * a[m - 1 - i];
        }
        a = next;
    }
    // predictor coefficients negate the polynomial tail
    a.map(|x| -x)
}

/// Deterministic synthetic features for benchmarks and pipeline tests:
/// smoothly varying cepstra and a stable random predictor per frame.
/// Quality is irrelevant; boundedness and determinism are the contract.
pub fn synthetic_features(frames: usize, seed: u64) -> Vec<FeatureFrame> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut cep = [0.0f32; CEPSTRUM_DIM];
    let mut ks = [0.0f64; LPC_ORDER];
    for k in ks.iter_mut() {
        *k = rng.gen_range(-0.5..0.5);
    }
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        for c in cep.iter_mut() {
            *c = 0.9 * *c + rng.gen_range(-0.08..0.08);
        }
        // drift the reflection coefficients inside a stability margin
        for k in ks.iter_mut() {
            *k = (*k + rng.gen_range(-0.05..0.05)).clamp(-0.65, 0.65);
        }
        let lpc64 = reflection_to_lpc(&ks);
        let mut lpc = [0.0f32; LPC_ORDER];
        for (dst, src) in lpc.iter_mut().zip(lpc64.iter()) {
            *dst = *src as f32;
        }
        out.push(FeatureFrame {
            cepstrum: cep,
            pitch_period: 40.0 + 20.0 * ((t as f32 * 0.1).sin() + 1.0),
            pitch_corr: rng.gen_range(0.2..0.8),
            lpc,
        });
    }
    out
}
