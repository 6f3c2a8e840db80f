//! Embedded invariant suite behind the `selftest` CLI command, plus the
//! statistics helpers it shares with the test suites.

use rand::rngs::StdRng;
use rand::{Rng as _, SeedableRng as _};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::kernels::activations::ActivationCoeffs;
use crate::kernels::matrix::{
    dense_gemv, pack_block_sparse, unpack_block_sparse, DenseMatrix, Q8_SCALE,
};
use crate::quantizer::{hard_quantize_step, QuantizerConfig};
use crate::sampling::{
    build_inv_sigmoid_table, tree_pdf_from_logits, tree_sample, tree_sample_levels, ArrayLogits,
    NodeLogitProvider as _, TREE_LEVELS,
};

/// Pearson chi-square goodness-of-fit p-value of `observed` counts against
/// `expected` counts (same length, expected all positive).
pub fn chi_square_pvalue(observed: &[u64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    let mut stat = 0.0f64;
    for (&o, &e) in observed.iter().zip(expected.iter()) {
        debug_assert!(e > 0.0);
        let d = o as f64 - e;
        stat += d * d / e;
    }
    let dof = (observed.len() - 1) as f64;
    let dist = ChiSquared::new(dof).expect("dof > 0");
    1.0 - dist.cdf(stat)
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

/// Max activation error against the libm references on a coarse grid. The
/// tanh bound is the documented accuracy figure at its stated precision (one
/// significant figure); a corrupted coefficient set fails immediately.
fn check_activation_error(coeffs: &ActivationCoeffs) -> CheckResult {
    let mut max_t = 0.0f64;
    let mut max_s = 0.0f64;
    let mut x = -10.0f64;
    while x <= 10.0 {
        max_t = max_t.max((coeffs.tanh(x) - x.tanh()).abs());
        let s = 1.0 / (1.0 + (-2.0 * x).exp());
        max_s = max_s.max((coeffs.sigmoid(2.0 * x) - s).abs());
        x += 1e-3;
    }
    check(
        "activation-error-bound",
        max_t <= 6.5e-5 && max_s <= 3.25e-5,
        format!("max tanh err {max_t:.4e} (bound 6.5e-5), sigmoid {max_s:.4e}"),
    )
}

/// The sigmoid must be the algebraically rescaled tanh, and both must
/// saturate exactly.
fn check_sigmoid_identity(coeffs: &ActivationCoeffs) -> CheckResult {
    let mut worst = 0.0f64;
    let mut x = -10.0f64;
    while x <= 10.0 {
        worst = worst.max((coeffs.sigmoid(x) - (0.5 + 0.5 * coeffs.tanh(x / 2.0))).abs());
        x += 1e-3;
    }
    let saturates = coeffs.tanh(8.0) == 1.0
        && coeffs.tanh(-8.0) == -1.0
        && coeffs.sigmoid(20.0) == 1.0
        && coeffs.sigmoid(-20.0) == 0.0;
    check(
        "sigmoid-identity",
        worst <= 1e-12 && saturates,
        format!("max identity gap {worst:.3e}, exact saturation: {saturates}"),
    )
}

/// Unbiased tree sampling reproduces a non-uniform target pdf (χ² test at
/// xi = 0 so no probability is clipped).
fn check_sampler_chi_square() -> CheckResult {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut pdf = [0.0f64; 256];
    for p in pdf.iter_mut() {
        *p = 0.2 + rng.gen_range(0.0..1.0);
    }
    let total: f64 = pdf.iter().sum();
    for p in pdf.iter_mut() {
        *p /= total;
    }
    let logits = crate::sampling::tree_logits_from_pdf(&pdf);
    let round = tree_pdf_from_logits(&logits);
    let table = build_inv_sigmoid_table(0.0, 65_536).expect("table");
    let mut provider = ArrayLogits::new(&logits);
    let mut counts = [0u64; 256];
    let draws = 200_000usize;
    let mut crng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..draws {
        counts[tree_sample(&mut provider, &table, &mut crng) as usize] += 1;
    }
    let expected: Vec<f64> = round.iter().map(|p| p * draws as f64).collect();
    let p = chi_square_pvalue(&counts, &expected);
    check(
        "sampler-chi-square",
        p > 0.001,
        format!("p = {p:.4} over {draws} draws, 256 bins"),
    )
}

/// Sampling one value evaluates exactly log2(Q) node logits.
fn check_logit_evaluation_count() -> CheckResult {
    let logits = [0.3f64; 255];
    let table = build_inv_sigmoid_table(0.025, 1024).expect("table");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut provider = ArrayLogits::new(&logits);
    tree_sample(&mut provider, &table, &mut rng);
    let full = provider.nodes_evaluated();
    let mut provider = ArrayLogits::new(&logits);
    tree_sample_levels(&mut provider, &table, &mut rng, 3);
    let small = provider.nodes_evaluated();
    check(
        "logit-evaluation-count",
        full == TREE_LEVELS as usize && small == 3,
        format!("256-way: {full} (want {TREE_LEVELS}), 8-way: {small} (want 3)"),
    )
}

/// Block-sparse packing round-trips and its product matches the dense
/// dequantized oracle.
fn check_pack_roundtrip() -> CheckResult {
    let mut rng = StdRng::seed_from_u64(42);
    let (rows, cols) = (64usize, 48usize);
    let mut data = vec![0.0f32; rows * cols];
    for bi in 0..rows / 8 {
        for bj in 0..cols / 4 {
            if rng.gen_bool(0.3) {
                for r in 0..8 {
                    for c in 0..4 {
                        data[(bi * 8 + r) * cols + bj * 4 + c] =
                            rng.gen_range(-127i32..=127) as f32 * Q8_SCALE;
                    }
                }
            }
        }
    }
    let dense = DenseMatrix::new(rows, cols, data).expect("dense");
    let packed = pack_block_sparse(&dense).expect("pack");
    let back = unpack_block_sparse(&packed);
    let roundtrip = back.data() == dense.data();
    let x: Vec<f32> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let want = dense_gemv(&dense, &x).expect("gemv");
    let mut got = vec![0.0f32; rows];
    packed.gemv_into(&x, &mut got);
    let gap = want
        .iter()
        .zip(got.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    check(
        "pack-roundtrip",
        roundtrip && gap <= 1e-5,
        format!("bit round-trip: {roundtrip}, max gemv gap {gap:.2e}"),
    )
}

/// A full hard-quantization sweep leaves every weight on the lattice and
/// never moves one further than half a step.
fn check_quantizer_lattice() -> CheckResult {
    let cfg = QuantizerConfig::default();
    let mut rng = StdRng::seed_from_u64(9);
    let w: Vec<f32> = (0..4096).map(|_| rng.gen_range(-0.99..0.99)).collect();
    let out = match hard_quantize_step(&w, 0.5, &cfg) {
        Ok(v) => v,
        Err(e) => return check("quantizer-lattice", false, e.to_string()),
    };
    let mut on_lattice = 0usize;
    let mut max_move = 0.0f64;
    for (a, b) in out.iter().zip(w.iter()) {
        let t = *a as f64 / cfg.q;
        if t == t.round() {
            on_lattice += 1;
        }
        max_move = max_move.max((*a as f64 - *b as f64).abs());
    }
    // strict-< capture can skip exact midpoints; everything else must snap
    let fraction = on_lattice as f64 / w.len() as f64;
    check(
        "quantizer-lattice",
        fraction >= 0.999 && max_move <= cfg.q / 2.0 + 1e-12,
        format!(
            "{on_lattice}/{} on lattice, max move {max_move:.2e}",
            w.len()
        ),
    )
}

/// The full embedded suite. `coeffs` is injectable so a deliberately
/// corrupted set (CLI test hook) demonstrably fails.
pub fn run_selftest(coeffs: &ActivationCoeffs) -> Vec<CheckResult> {
    vec![
        check_activation_error(coeffs),
        check_sigmoid_identity(coeffs),
        check_sampler_chi_square(),
        check_logit_evaluation_count(),
        check_pack_roundtrip(),
        check_quantizer_lattice(),
    ]
}
