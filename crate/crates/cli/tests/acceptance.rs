//! Release gate: the ten advertised properties of the engine, each checked
//! end-to-end at its stated tolerance. Run with `--nocapture` to see one
//! `[PASS]` line per criterion; a failure panics with a `[FAIL]` line.

use std::process::Command;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng as _, SeedableRng as _};
use rand_chacha::ChaCha8Rng;

use shoestring::kernels::activations::{sigmoid_approx, tanh_approx};
use shoestring::kernels::matrix::{
    dense_gemv, pack_block_sparse, sparse_q8_gemv, unpack_block_sparse, DenseMatrix, Q8_SCALE,
};
use shoestring::model::generate::gen_weight_file;
use shoestring::model::synth::{synthesize, SynthConfig};
use shoestring::model::{
    quant_designation, synthetic_features, write_features, Model, ModelConfig, QuantDesignation,
    TensorData,
};
use shoestring::quantizer::{
    quant_reg_grad, quant_reg_loss, quantize_model, QuantizerConfig, ZetaSchedule,
    DEFAULT_SCHEDULE_STEPS,
};
use shoestring::sampling::{
    build_inv_sigmoid_table, tree_logits_from_pdf, tree_pdf_from_logits, tree_sample,
    tree_sample_levels, ArrayLogits, NodeLogitProvider as _, TREE_LEVELS,
};
use shoestring::selftest::chi_square_pvalue;

fn pass(line: &str) {
    println!("[PASS] {line}");
}

fn quantized_preset(name: &str, seed: u64) -> Model {
    let cfg = ModelConfig::preset(name).expect("preset");
    let wf = gen_weight_file(&cfg, seed).expect("generate");
    let q = quantize_model(
        &wf,
        &ZetaSchedule::default(),
        &QuantizerConfig::default(),
        DEFAULT_SCHEDULE_STEPS,
    )
    .expect("quantize");
    Model::from_weight_file(&q).expect("load")
}

/// 1. Activation accuracy: the rational tanh's maximum error against the
/// libm reference over [-10, 10] (grid 1e-4, exact division) equals the
/// advertised 6e-5 figure, which is stated to one significant figure; the
/// gate is the matching band [5.5e-5, 6.5e-5]. The scan itself must take
/// under a second.
#[test]
fn c01_activation_accuracy() {
    let start = Instant::now();
    let mut max_err = 0.0f64;
    for i in 0..=200_000 {
        let x = -10.0 + 1e-4 * i as f64;
        max_err = max_err.max((tanh_approx(x) - x.tanh()).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(
        (5.5e-5..=6.5e-5).contains(&max_err),
        "[FAIL] 01 activation-accuracy: max error {max_err:.4e} outside [5.5e-5, 6.5e-5]"
    );
    assert!(
        secs < 1.0,
        "[FAIL] 01 activation-accuracy: scan took {secs:.2}s (limit 1s)"
    );
    pass(&format!(
        "01 activation-accuracy: max |tanh~ - tanh| = {max_err:.4e} on [-10,10] \
         (advertised 6e-5 to 1 s.f.; band [5.5e-5, 6.5e-5]), scan {secs:.3}s"
    ));
}

/// 2. Sigmoid identity: the sigmoid is the rescaled tanh to within 1e-12
/// on the same grid, and both saturate exactly.
#[test]
fn c02_sigmoid_identity() {
    let mut worst = 0.0f64;
    for i in 0..=200_000 {
        let x = -10.0 + 1e-4 * i as f64;
        worst = worst.max((sigmoid_approx(x) - (0.5 + 0.5 * tanh_approx(0.5 * x))).abs());
    }
    assert!(
        worst <= 1e-12,
        "[FAIL] 02 sigmoid-identity: max gap {worst:.3e} > 1e-12"
    );
    let saturated = tanh_approx(8.0) == 1.0
        && tanh_approx(-8.0) == -1.0
        && tanh_approx(1e6) == 1.0
        && sigmoid_approx(20.0) == 1.0
        && sigmoid_approx(-20.0) == 0.0
        && sigmoid_approx(1e6) == 1.0;
    assert!(
        saturated,
        "[FAIL] 02 sigmoid-identity: saturation not exact"
    );
    pass(&format!(
        "02 sigmoid-identity: max |sigmoid~(x) - (1/2 + 1/2 tanh~(x/2))| = {worst:.1e} \
         (limit 1e-12), exact 0/1/±1 saturation"
    ));
}

/// 3. Sampler equivalence: pdf -> tree logits -> pdf round-trips within
/// 1e-6 for 50 random distributions, and one million unclipped draws from
/// one of them pass a chi-square test at p > 0.001. Whole check < 30 s.
#[test]
fn c03_sampler_equivalence() {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(303);
    let mut worst = 0.0f64;
    let mut last_pdf = [0.0f64; 256];
    for _ in 0..50 {
        let mut pdf = [0.0f64; 256];
        for p in pdf.iter_mut() {
            *p = rng.gen_range(1e-4..1.0);
        }
        let total: f64 = pdf.iter().sum();
        for p in pdf.iter_mut() {
            *p /= total;
        }
        let logits = tree_logits_from_pdf(&pdf);
        let back = tree_pdf_from_logits(&logits);
        for (a, b) in pdf.iter().zip(back.iter()) {
            worst = worst.max((a - b).abs());
        }
        last_pdf = pdf;
    }
    assert!(
        worst <= 1e-6,
        "[FAIL] 03 sampler-equivalence: round-trip error {worst:.2e} > 1e-6"
    );

    let logits = tree_logits_from_pdf(&last_pdf);
    let table = build_inv_sigmoid_table(0.0, 65_536).unwrap();
    let mut provider = ArrayLogits::new(&logits);
    let mut crng = ChaCha8Rng::seed_from_u64(17);
    let draws = 1_000_000usize;
    let mut counts = [0u64; 256];
    for _ in 0..draws {
        counts[tree_sample(&mut provider, &table, &mut crng) as usize] += 1;
    }
    let expected: Vec<f64> = last_pdf.iter().map(|p| p * draws as f64).collect();
    let p = chi_square_pvalue(&counts, &expected);
    let secs = start.elapsed().as_secs_f64();
    assert!(
        p > 0.001,
        "[FAIL] 03 sampler-equivalence: chi-square p = {p:.5} <= 0.001"
    );
    assert!(
        secs < 30.0,
        "[FAIL] 03 sampler-equivalence: took {secs:.1}s (limit 30s)"
    );
    pass(&format!(
        "03 sampler-equivalence: 50 pdf round-trips within {worst:.1e} (limit 1e-6), \
         chi-square p = {p:.3} over 1e6 draws (need > 0.001), {secs:.1}s"
    ));
}

/// 4. Logarithmic sampling cost: drawing from 256 values evaluates exactly
/// 8 node logits, and from 8 values exactly 3.
#[test]
fn c04_log_q_evaluations() {
    let logits = [0.1f64; 255];
    let table = build_inv_sigmoid_table(0.025, 1024).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);

    let mut provider = ArrayLogits::new(&logits);
    tree_sample(&mut provider, &table, &mut rng);
    let full = provider.nodes_evaluated();

    let mut provider = ArrayLogits::new(&logits);
    tree_sample_levels(&mut provider, &table, &mut rng, 3);
    let eight_way = provider.nodes_evaluated();

    assert!(
        full == TREE_LEVELS as usize && eight_way == 3,
        "[FAIL] 04 log-q-evaluations: got {full} for Q=256 (want 8) and {eight_way} for Q=8 (want 3)"
    );
    pass(&format!(
        "04 log-q-evaluations: exactly {full} logits per draw at Q=256, {eight_way} at Q=8"
    ));
}

/// 5. Probability biasing: with the sampling floor at 0.025, a leaf whose
/// every branch sigmoid sits below the floor is never drawn.
#[test]
fn c05_biasing_blocks_rare_leaf() {
    let mut rng = StdRng::seed_from_u64(5);
    let mut logits = [0.0f64; 255];
    for l in logits.iter_mut() {
        *l = rng.gen_range(-1.0..1.0);
    }
    // leaf 255 is the all-right path; give each node on it sigma(y) = 0.01
    let weak = (0.01f64 / 0.99).ln();
    let mut node = 1usize;
    for _ in 0..8 {
        logits[node - 1] = weak;
        node = 2 * node + 1;
    }
    let table = build_inv_sigmoid_table(0.025, 1024).unwrap();
    let mut provider = ArrayLogits::new(&logits);
    let mut crng = ChaCha8Rng::seed_from_u64(55);
    let draws = 1_000_000usize;
    let mut hits = 0usize;
    for _ in 0..draws {
        if tree_sample(&mut provider, &table, &mut crng) == 255 {
            hits += 1;
        }
    }
    assert!(
        hits == 0,
        "[FAIL] 05 biasing: sub-floor leaf drawn {hits} times in {draws}"
    );
    pass(&format!(
        "05 biasing: leaf with all branch sigmoids at 0.01 < xi=0.025 drawn 0 times in {draws} draws"
    ));
}

/// 6. Quantization: a full schedule sweep puts 100% of the sample-rate
/// weights on the lattice, and the analytic regularizer gradient matches
/// central finite differences within 1e-4 relative at 10^4 random points.
#[test]
fn c06_quantization() {
    let cfg = ModelConfig::preset("P384").unwrap();
    let wf = gen_weight_file(&cfg, 606).unwrap();
    let qcfg = QuantizerConfig::default();
    let quant = quantize_model(&wf, &ZetaSchedule::default(), &qcfg, DEFAULT_SCHEDULE_STEPS)
        .expect("quantize");
    let mut scanned = 0usize;
    let mut off = 0usize;
    for t in &quant.tensors {
        if quant_designation(&t.name) == QuantDesignation::Passthrough {
            continue;
        }
        let values: Vec<f32> = match &t.data {
            TensorData::F32(v) => v.clone(),
            TensorData::Q8(m) => unpack_block_sparse(m).data().to_vec(),
        };
        for x in values {
            let units = x as f64 / qcfg.q;
            scanned += 1;
            if units != units.round() {
                off += 1;
            }
        }
    }
    assert!(
        off == 0,
        "[FAIL] 06 quantization: {off}/{scanned} sample-rate weights off the lattice"
    );

    let h = 1e-7 * qcfg.q;
    let mut rng = StdRng::seed_from_u64(66);
    let mut checked = 0usize;
    let mut worst_rel = 0.0f64;
    while checked < 10_000 {
        let w: f64 = rng.gen_range(-0.99..0.99);
        // the gradient is zero at lattice points and midpoints; relative
        // comparison is meaningless within 1e-6 q of those
        let half_units = w / (qcfg.q / 2.0);
        if (half_units - half_units.round()).abs() * (qcfg.q / 2.0) < 1e-6 * qcfg.q {
            continue;
        }
        let analytic = quant_reg_grad(w, &qcfg);
        let fd = (quant_reg_loss(w + h, &qcfg) - quant_reg_loss(w - h, &qcfg)) / (2.0 * h);
        let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs());
        assert!(
            rel < 1e-4,
            "[FAIL] 06 quantization: gradient mismatch at w={w}: analytic {analytic}, fd {fd}, rel {rel:.2e}"
        );
        worst_rel = worst_rel.max(rel);
        checked += 1;
    }
    pass(&format!(
        "06 quantization: {scanned}/{scanned} sample-rate weights on the q-lattice after sweep, \
         gradient vs finite differences worst rel {worst_rel:.2e} over 10^4 points (limit 1e-4)"
    ));
}

/// 7. Kernel equivalence: the int8 block-sparse product matches the dense
/// dequantized oracle within 1e-5 absolute for unit-norm inputs across 100
/// random shapes and densities.
#[test]
fn c07_kernel_equivalence() {
    let mut rng = StdRng::seed_from_u64(707);
    let mut worst = 0.0f32;
    for case in 0..100 {
        let rows = 8 * rng.gen_range(1..=32);
        let cols = 4 * rng.gen_range(1..=160);
        let density = rng.gen_range(0.05..1.0f64);
        let mut data = vec![0.0f32; rows * cols];
        for br in 0..rows / 8 {
            for bc in 0..cols / 4 {
                if rng.gen_bool(density) {
                    for r in 0..8 {
                        for c in 0..4 {
                            data[(br * 8 + r) * cols + bc * 4 + c] =
                                rng.gen_range(-127i32..=127) as f32 * Q8_SCALE;
                        }
                    }
                }
            }
        }
        let dense = DenseMatrix::new(rows, cols, data).unwrap();
        let sparse = pack_block_sparse(&dense).unwrap();
        let mut x: Vec<f32> = (0..cols).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let norm = x.iter().map(|v| v * v).sum::<f32>().sqrt().max(1e-9);
        for v in x.iter_mut() {
            *v /= norm;
        }
        let want = dense_gemv(&dense, &x).unwrap();
        let got = sparse_q8_gemv(&sparse, &x).unwrap();
        for (i, (a, b)) in want.iter().zip(got.iter()).enumerate() {
            let gap = (a - b).abs();
            worst = worst.max(gap);
            assert!(
                gap <= 1e-5,
                "[FAIL] 07 kernel-equivalence: case {case} ({rows}x{cols}, density {density:.2}) \
                 row {i}: dense {a}, sparse {b}, gap {gap:.2e}"
            );
        }
    }
    pass(&format!(
        "07 kernel-equivalence: sparse int8 vs dense oracle within {worst:.2e} \
         (limit 1e-5) across 100 random shapes/densities, unit-norm inputs"
    ));
}

/// 8. Pipeline determinism: two synth invocations of the real binary with
/// the same seed produce byte-identical WAV files.
#[test]
fn c08_pipeline_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ModelConfig::preset("P192").unwrap();
    let wf = gen_weight_file(&cfg, 808).unwrap();
    let quant = quantize_model(
        &wf,
        &ZetaSchedule::default(),
        &QuantizerConfig::default(),
        DEFAULT_SCHEDULE_STEPS,
    )
    .unwrap();
    let weights = dir.path().join("m.lpcw");
    quant.save(&weights).unwrap();
    let feats = dir.path().join("f.f32");
    write_features(&feats, &synthetic_features(25, 88)).unwrap();

    let mut bytes = Vec::new();
    for name in ["one.wav", "two.wav"] {
        let wav = dir.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_shoestring"))
            .args([
                "synth",
                "--features",
                feats.to_str().unwrap(),
                "--weights",
                weights.to_str().unwrap(),
                "--out",
                wav.to_str().unwrap(),
                "--seed",
                "1234",
            ])
            .output()
            .expect("spawn");
        assert!(
            out.status.success(),
            "[FAIL] 08 pipeline-determinism: synth failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        bytes.push(std::fs::read(&wav).unwrap());
    }
    assert!(
        bytes[0] == bytes[1],
        "[FAIL] 08 pipeline-determinism: same-seed WAVs differ"
    );
    pass(&format!(
        "08 pipeline-determinism: two seed-1234 synth runs byte-identical ({} bytes)",
        bytes[0].len()
    ));
}

/// 9. Model accounting: per-sample weight usage of the three quantized
/// presets lands within ±20% of the advertised 40k / 66k / 219k.
#[test]
fn c09_model_accounting() {
    let mut report = Vec::new();
    for (preset, target) in [("P192", 40_000.0), ("P384", 66_000.0), ("P640", 219_000.0)] {
        let model = quantized_preset(preset, 909);
        let frames = synthetic_features(2, 9);
        let (_, stats) = synthesize(&model, &frames, &SynthConfig::default(), 9).unwrap();
        let wps = stats.weights_per_sample as f64;
        let rel = (wps - target) / target;
        assert!(
            rel.abs() <= 0.20,
            "[FAIL] 09 model-accounting: {preset} uses {wps} weights/sample, \
             {:+.1}% from {target} (band ±20%)",
            100.0 * rel
        );
        report.push(format!("{preset} {wps} ({:+.1}%)", 100.0 * rel));
    }
    pass(&format!(
        "09 model-accounting: weights/sample {} vs 40k/66k/219k (band ±20%)",
        report.join(", ")
    ));
}

/// 10. Performance floor: through the real binary, quantized P384 delivers
/// at least 1.5x the float throughput, and quantized P192 synthesizes
/// faster than real time (compute seconds per audio second < 1).
#[test]
fn c10_performance_floor() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for preset in ["P384", "P192"] {
        let cfg = ModelConfig::preset(preset).unwrap();
        let wf = gen_weight_file(&cfg, 1010).unwrap();
        let path = dir.path().join(format!("{preset}.lpcw"));
        wf.save(&path).unwrap();
        paths.push(path);
    }

    let out = Command::new(env!("CARGO_BIN_EXE_shoestring"))
        .args([
            "bench",
            "--weights",
            paths[0].to_str().unwrap(),
            "--seconds",
            "1",
        ])
        .output()
        .expect("spawn");
    assert!(
        out.status.success(),
        "[FAIL] 10 performance-floor: bench failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let lines: Vec<serde_json::Value> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let speedup = lines
        .iter()
        .find_map(|l| l["speedup_quantized_over_float"].as_f64())
        .expect("speedup line");
    assert!(
        speedup >= 1.5,
        "[FAIL] 10 performance-floor: quantized/float speedup {speedup:.2} < 1.5 for P384"
    );

    let out = Command::new(env!("CARGO_BIN_EXE_shoestring"))
        .args([
            "bench",
            "--weights",
            paths[1].to_str().unwrap(),
            "--seconds",
            "1",
            "--mode",
            "quantized",
        ])
        .output()
        .expect("spawn");
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stdout).lines().next().unwrap()).unwrap();
    let pct = report["percent_of_core"].as_f64().unwrap();
    assert!(
        pct < 100.0,
        "[FAIL] 10 performance-floor: P192 quantized needs {pct:.1}% of a core (need < 100)"
    );
    pass(&format!(
        "10 performance-floor: P384 quantized/float speedup {speedup:.2}x (need >= 1.5), \
         P192 quantized at {pct:.1}% of core i.e. {:.2}x real time (need < 100%)",
        100.0 / pct
    ));
}
