//! Model geometry and the named preset table.

use serde::{Deserialize, Serialize};

/// Feature vector width: 18 cepstra + pitch period + pitch correlation +
/// 16 prediction coefficients.
pub const FEATURE_DIM: usize = 36;

/// Internal tree nodes / dual FC output rows for the 256-way excitation.
pub const TREE_NODES: usize = 255;

/// Geometry and mode of one vocoder instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    /// Main GRU width.
    pub n_a: usize,
    /// Second GRU width.
    pub n_b: usize,
    /// Nominal density of the main GRU recurrent matrix.
    pub d_a: f64,
    /// Nominal density of the second GRU input matrix.
    pub d_b: f64,
    /// Whether sample-rate matrices are int8 block-sparse.
    pub quantized: bool,
    pub embed_dim: usize,
    pub cond_dim: usize,
    pub lpc_order: usize,
    /// Samples per 10 ms frame.
    pub frame_size: usize,
}

impl ModelConfig {
    fn base(name: &str, n_a: usize, d_a: f64, n_b: usize, d_b: f64, quantized: bool) -> Self {
        Self {
            name: name.to_owned(),
            n_a,
            n_b,
            d_a,
            d_b,
            quantized,
            embed_dim: 128,
            cond_dim: 128,
            lpc_order: 16,
            frame_size: 160,
        }
    }

    /// Named presets: the quantized sparse P-models and their dense float
    /// baselines.
    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "P192" => Self::base("P192", 192, 0.25, 32, 0.5, true),
            "P384" => Self::base("P384", 384, 0.1, 32, 0.5, true),
            "P640" => Self::base("P640", 640, 0.15, 32, 0.5, true),
            "B192" => Self::base("B192", 192, 1.0, 16, 1.0, false),
            "B384" => Self::base("B384", 384, 1.0, 16, 1.0, false),
            "B640" => Self::base("B640", 640, 1.0, 16, 1.0, false),
            _ => return None,
        })
    }

    pub fn preset_names() -> [&'static str; 6] {
        ["P192", "P384", "P640", "B192", "B384", "B640"]
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_a == 0 || self.n_b == 0 {
            return Err("GRU sizes must be positive".into());
        }
        if self.n_a % 8 != 0 || self.n_b % 8 != 0 {
            return Err("GRU sizes must be multiples of the 8-row block height".into());
        }
        if !(0.0..=1.0).contains(&self.d_a) || self.d_a == 0.0 {
            return Err(format!("d_a = {} outside (0, 1]", self.d_a));
        }
        if !(0.0..=1.0).contains(&self.d_b) || self.d_b == 0.0 {
            return Err(format!("d_b = {} outside (0, 1]", self.d_b));
        }
        if self.lpc_order != crate::dsp::LPC_ORDER {
            return Err(format!("lpc_order must be {}", crate::dsp::LPC_ORDER));
        }
        if self.frame_size == 0 {
            return Err("frame_size must be positive".into());
        }
        Ok(())
    }

    /// Expected (name, rows, cols) of every tensor in a weight file for
    /// this geometry; vectors are stored as single-column tensors.
    pub fn tensor_shapes(&self) -> Vec<(String, usize, usize)> {
        let (na3, nb3) = (3 * self.n_a, 3 * self.n_b);
        let e = self.embed_dim;
        let c = self.cond_dim;
        let mut v: Vec<(String, usize, usize)> = Vec::new();
        let mut push = |name: &str, r: usize, cl: usize| v.push((name.to_owned(), r, cl));
        push("frame_rate.conv1.weight", c, 3 * FEATURE_DIM);
        push("frame_rate.conv1.bias", c, 1);
        push("frame_rate.conv2.weight", c, 3 * c);
        push("frame_rate.conv2.bias", c, 1);
        push("frame_rate.dense1.weight", c, c);
        push("frame_rate.dense1.bias", c, 1);
        push("frame_rate.dense2.weight", c, c);
        push("frame_rate.dense2.bias", c, 1);
        push("embed.weight", 256, e);
        push("gru_a.input", na3, 3 * e + c);
        push("gru_a.bias_input", na3, 1);
        push("gru_a.recurrent", na3, self.n_a);
        push("gru_a.bias_recurrent", na3, 1);
        push("gru_b.input", nb3, self.n_a + c);
        push("gru_b.bias_input", nb3, 1);
        push("gru_b.recurrent", nb3, self.n_b);
        push("gru_b.bias_recurrent", nb3, 1);
        push("dual_fc.w1", TREE_NODES, self.n_b);
        push("dual_fc.b1", TREE_NODES, 1);
        push("dual_fc.a1", TREE_NODES, 1);
        push("dual_fc.w2", TREE_NODES, self.n_b);
        push("dual_fc.b2", TREE_NODES, 1);
        push("dual_fc.a2", TREE_NODES, 1);
        v
    }
}
