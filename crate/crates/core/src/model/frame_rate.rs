//! Frame-rate conditioning network: two kernel-3 convolutions over the
//! frame sequence (edge frames replicated) followed by two dense layers,
//! tanh throughout. Runs once per 10 ms frame, so it stays on the plain
//! float path.

use crate::kernels::activations::tanh_approx;
use crate::kernels::matrix::DenseMatrix;

use super::features::FeatureFrame;
use super::ModelError;

#[derive(Clone, Debug)]
pub struct FrameRateNet {
    pub conv1_w: DenseMatrix,
    pub conv1_b: Vec<f32>,
    pub conv2_w: DenseMatrix,
    pub conv2_b: Vec<f32>,
    pub dense1_w: DenseMatrix,
    pub dense1_b: Vec<f32>,
    pub dense2_w: DenseMatrix,
    pub dense2_b: Vec<f32>,
}

fn dense_tanh(w: &DenseMatrix, b: &[f32], x: &[f32]) -> Vec<f32> {
    (0..w.rows())
        .map(|j| {
            let mut acc = b[j] as f64;
            for (wv, xv) in w.row(j).iter().zip(x.iter()) {
                acc += *wv as f64 * *xv as f64;
            }
            tanh_approx(acc) as f32
        })
        .collect()
}

/// Kernel-3 convolution over a frame sequence; out-of-range neighbours are
/// replicated edge frames. Each output frame is one dense-tanh over the
/// concatenated [prev, current, next] frames.
fn conv3(w: &DenseMatrix, b: &[f32], seq: &[Vec<f32>]) -> Vec<Vec<f32>> {
    let last = seq.len() - 1;
    (0..seq.len())
        .map(|t| {
            let prev = &seq[t.saturating_sub(1)];
            let next = &seq[if t < last { t + 1 } else { last }];
            let mut x = Vec::with_capacity(3 * seq[t].len());
            x.extend_from_slice(prev);
            x.extend_from_slice(&seq[t]);
            x.extend_from_slice(next);
            dense_tanh(w, b, &x)
        })
        .collect()
}

impl FrameRateNet {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        conv1_w: DenseMatrix,
        conv1_b: Vec<f32>,
        conv2_w: DenseMatrix,
        conv2_b: Vec<f32>,
        dense1_w: DenseMatrix,
        dense1_b: Vec<f32>,
        dense2_w: DenseMatrix,
        dense2_b: Vec<f32>,
    ) -> Result<Self, ModelError> {
        let cond = conv1_w.rows();
        let checks = [
            ("frame_rate.conv1", conv1_w.rows(), conv1_b.len()),
            ("frame_rate.conv2", conv2_w.rows(), conv2_b.len()),
            ("frame_rate.dense1", dense1_w.rows(), dense1_b.len()),
            ("frame_rate.dense2", dense2_w.rows(), dense2_b.len()),
        ];
        for (name, rows, blen) in checks {
            if rows != cond || blen != cond {
                return Err(ModelError::Shape(format!(
                    "{name}: {rows} rows / {blen} bias entries, expected {cond}"
                )));
            }
        }
        if conv1_w.cols() % 3 != 0
            || conv2_w.cols() != 3 * cond
            || dense1_w.cols() != cond
            || dense2_w.cols() != cond
        {
            return Err(ModelError::Shape(
                "frame_rate: column counts inconsistent with kernel-3 convs".into(),
            ));
        }
        Ok(Self {
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            dense1_w,
            dense1_b,
            dense2_w,
            dense2_b,
        })
    }

    pub fn cond_dim(&self) -> usize {
        self.conv1_w.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.conv1_w.cols() / 3
    }

    /// One conditioning vector per input frame.
    pub fn forward(&self, frames: &[FeatureFrame]) -> Vec<Vec<f32>> {
        let rows: Vec<Vec<f32>> = frames.iter().map(|f| f.to_vec()).collect();
        self.forward_rows(&rows)
    }

    pub(crate) fn forward_rows(&self, rows: &[Vec<f32>]) -> Vec<Vec<f32>> {
        if rows.is_empty() {
            return Vec::new();
        }
        let c1 = conv3(&self.conv1_w, &self.conv1_b, rows);
        let c2 = conv3(&self.conv2_w, &self.conv2_b, &c1);
        c2.iter()
            .map(|h| {
                let d1 = dense_tanh(&self.dense1_w, &self.dense1_b, h);
                dense_tanh(&self.dense2_w, &self.dense2_b, &d1)
            })
            .collect()
    }
}
