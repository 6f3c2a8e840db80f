//! Vocoder command line: synthesis, quantization, benchmarking, self-test,
//! and synthetic weight generation.
//!
//! Machine-readable reports go to standard output as JSON lines; human
//! summaries go to standard error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use shoestring::kernels::activations::ActivationCoeffs;
use shoestring::model::audio::{write_wav, SAMPLE_RATE};
use shoestring::model::generate::gen_weight_file;
use shoestring::model::synth::{synthesize, SynthConfig};
use shoestring::model::{
    quant_designation, read_features, synthetic_features, Model, ModelConfig, QuantDesignation,
    WeightFile,
};
use shoestring::quantizer::{
    quantize_model, QuantizerConfig, ZetaSchedule, DEFAULT_Q, DEFAULT_SCHEDULE_STEPS,
};
use shoestring::sampling::DEFAULT_XI;
use shoestring::selftest::run_selftest;

#[derive(Parser)]
#[command(
    name = "shoestring",
    about = "Efficient neural vocoder: synthesis, quantization, and benchmarks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a WAV file from a feature file and a weight file.
    Synth {
        /// Feature file: raw little-endian f32, 36 per frame.
        #[arg(long)]
        features: PathBuf,
        /// Weight file (float or quantized).
        #[arg(long)]
        weights: PathBuf,
        /// Output WAV path (16-bit mono, 16 kHz).
        #[arg(long)]
        out: PathBuf,
        /// Sampling RNG seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Probability floor for the excitation sampler, in [0, 0.5).
        #[arg(long, default_value_t = DEFAULT_XI)]
        xi: f64,
    },
    /// Quantize a float weight file onto the int8 lattice.
    Quantize {
        /// Input float weight file.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output quantized weight file.
        #[arg(long)]
        out: PathBuf,
        /// Lattice spacing; must be a positive integer multiple of 1/128.
        #[arg(long, default_value_t = DEFAULT_Q)]
        q: f64,
    },
    /// Benchmark synthesis throughput on synthetic features.
    Bench {
        /// Weight file; float and quantized variants are derived as needed.
        #[arg(long)]
        weights: PathBuf,
        /// Seconds of audio to synthesize per timed run.
        #[arg(long)]
        seconds: f64,
        /// Run only one mode; default runs both and reports the speedup.
        #[arg(long, value_enum)]
        mode: Option<BenchMode>,
    },
    /// Run the embedded invariant suite; exit 0 iff every check passes.
    Selftest {
        /// Deliberately corrupt the activation coefficients (test hook).
        #[arg(long, hide = true)]
        corrupt_activations: bool,
    },
    /// Generate a random weight file for a named preset.
    GenWeights {
        /// Preset name: P192, P384, P640, B192, B384, or B640.
        #[arg(long)]
        preset: String,
        /// Output weight file path.
        #[arg(long)]
        out: PathBuf,
        /// Generator seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BenchMode {
    Quantized,
    Float,
}

impl BenchMode {
    fn name(self) -> &'static str {
        match self {
            BenchMode::Quantized => "quantized",
            BenchMode::Float => "float",
        }
    }
}

#[derive(Serialize)]
struct BenchReport<'a> {
    model: &'a str,
    mode: &'static str,
    samples: usize,
    wall_seconds: f64,
    /// Seconds of audio produced per second of compute.
    real_time_factor: f64,
    /// Share of one core needed for real time; < 100 means faster than
    /// real time.
    percent_of_core: f64,
    tanh_per_sample: f64,
    weights_per_sample: usize,
}

fn main() -> ExitCode {
    check_thread_env();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth {
            features,
            weights,
            out,
            seed,
            xi,
        } => cmd_synth(&features, &weights, &out, seed, xi),
        Command::Quantize { input, out, q } => cmd_quantize(&input, &out, q),
        Command::Bench {
            weights,
            seconds,
            mode,
        } => cmd_bench(&weights, seconds, mode),
        Command::Selftest {
            corrupt_activations,
        } => cmd_selftest(corrupt_activations),
        Command::GenWeights { preset, out, seed } => cmd_gen_weights(&preset, &out, seed),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// `SHOESTRING_THREADS` is reserved for a future parallel build; every
/// command currently runs single-threaded and values other than 1 only
/// earn a warning.
fn check_thread_env() {
    if let Ok(v) = std::env::var("SHOESTRING_THREADS") {
        if v.trim() != "1" {
            eprintln!("warning: SHOESTRING_THREADS={v} ignored; running single-threaded");
        }
    }
}

fn emit_json(value: &impl Serialize) -> Result<()> {
    println!(
        "{}",
        serde_json::to_string(value).context("serializing report")?
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<Model> {
    Model::load(path).with_context(|| format!("loading weights from {}", path.display()))
}

fn cmd_synth(features: &Path, weights: &Path, out: &Path, seed: u64, xi: f64) -> Result<ExitCode> {
    let frames = read_features(features)
        .with_context(|| format!("reading features from {}", features.display()))?;
    let model = load_model(weights)?;
    let cfg = SynthConfig {
        xi,
        ..SynthConfig::default()
    };
    let (samples, stats) = synthesize(&model, &frames, &cfg, seed)
        .with_context(|| format!("synthesizing with {}", weights.display()))?;
    write_wav(out, &samples).with_context(|| format!("writing {}", out.display()))?;
    emit_json(&stats)?;
    eprintln!(
        "{}: {} frames -> {} samples ({:.2}s audio) in {:.2}s, {:.2}x real time -> {}",
        model.config.name,
        frames.len(),
        stats.samples,
        stats.samples as f64 / SAMPLE_RATE as f64,
        stats.wall_seconds,
        stats.real_time_factor,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct QuantizeReport<'a> {
    input: &'a str,
    output: &'a str,
    q: f64,
    packed: usize,
    lattice: usize,
    passthrough: usize,
}

fn cmd_quantize(input: &Path, out: &Path, q: f64) -> Result<ExitCode> {
    let wf = WeightFile::load(input)
        .with_context(|| format!("loading weights from {}", input.display()))?;
    let cfg = QuantizerConfig {
        q,
        ..QuantizerConfig::default()
    };
    let quantized = quantize_model(&wf, &ZetaSchedule::default(), &cfg, DEFAULT_SCHEDULE_STEPS)
        .with_context(|| format!("quantizing {}", input.display()))?;
    quantized
        .save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    let mut counts = [0usize; 3];
    for t in &quantized.tensors {
        let i = match quant_designation(&t.name) {
            QuantDesignation::PackQ8 => 0,
            QuantDesignation::LatticeF32 => 1,
            QuantDesignation::Passthrough => 2,
        };
        counts[i] += 1;
    }
    emit_json(&QuantizeReport {
        input: &input.display().to_string(),
        output: &out.display().to_string(),
        q,
        packed: counts[0],
        lattice: counts[1],
        passthrough: counts[2],
    })?;
    eprintln!(
        "quantized {} -> {} (q = {q}): {} tensors packed to int8, {} on-lattice f32, {} untouched",
        input.display(),
        out.display(),
        counts[0],
        counts[1],
        counts[2]
    );
    Ok(ExitCode::SUCCESS)
}

/// Returns float and quantized variants of the loaded model as requested,
/// deriving the missing one so both modes time the identical architecture.
fn model_for_mode(base: &Model, wf: &WeightFile, mode: BenchMode) -> Result<Model> {
    match (mode, base.is_quantized()) {
        (BenchMode::Quantized, true) | (BenchMode::Float, false) => Ok(base.clone()),
        (BenchMode::Float, true) => Ok(base.dequantized()),
        (BenchMode::Quantized, false) => {
            let q = quantize_model(
                wf,
                &ZetaSchedule::default(),
                &QuantizerConfig::default(),
                DEFAULT_SCHEDULE_STEPS,
            )
            .context("quantizing float weights for the quantized benchmark mode")?;
            Model::from_weight_file(&q).context("loading quantized variant")
        }
    }
}

fn cmd_bench(weights: &Path, seconds: f64, mode: Option<BenchMode>) -> Result<ExitCode> {
    if !(seconds > 0.0) {
        bail!("--seconds must be positive, got {seconds}");
    }
    let wf = WeightFile::load(weights)
        .with_context(|| format!("loading weights from {}", weights.display()))?;
    let base = Model::from_weight_file(&wf)
        .with_context(|| format!("loading weights from {}", weights.display()))?;
    let frames_needed =
        ((seconds * SAMPLE_RATE as f64) / base.config.frame_size as f64).ceil() as usize;
    let frames = synthetic_features(frames_needed.max(1), 42);
    let cfg = SynthConfig::default();

    let modes: Vec<BenchMode> = match mode {
        Some(m) => vec![m],
        None => vec![BenchMode::Float, BenchMode::Quantized],
    };
    let mut rtf = [0.0f64; 2];
    for &m in &modes {
        let model = model_for_mode(&base, &wf, m)?;
        // untimed warmup over a few frames so page faults and lazy init
        // don't land in the measured run
        let warm = frames.len().min(3);
        let _ = synthesize(&model, &frames[..warm], &cfg, 1)?;
        let (_, stats) = synthesize(&model, &frames, &cfg, 1)?;
        rtf[m as usize] = stats.real_time_factor;
        let report = BenchReport {
            model: &model.config.name,
            mode: m.name(),
            samples: stats.samples,
            wall_seconds: stats.wall_seconds,
            real_time_factor: stats.real_time_factor,
            percent_of_core: 100.0 / stats.real_time_factor,
            tanh_per_sample: stats.tanh_per_sample,
            weights_per_sample: stats.weights_per_sample,
        };
        emit_json(&report)?;
        eprintln!(
            "{} [{}]: {} samples in {:.3}s -> {:.2}x real time ({:.1}% of core), {} weights/sample",
            report.model,
            report.mode,
            report.samples,
            report.wall_seconds,
            report.real_time_factor,
            report.percent_of_core,
            report.weights_per_sample
        );
    }
    if mode.is_none() {
        let speedup = rtf[BenchMode::Quantized as usize] / rtf[BenchMode::Float as usize];
        #[derive(Serialize)]
        struct Speedup {
            speedup_quantized_over_float: f64,
        }
        emit_json(&Speedup {
            speedup_quantized_over_float: speedup,
        })?;
        eprintln!("quantized/float speedup: {speedup:.2}x");
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct CheckLine<'a> {
    check: &'a str,
    passed: bool,
    detail: &'a str,
}

fn cmd_selftest(corrupt_activations: bool) -> Result<ExitCode> {
    let mut coeffs = ActivationCoeffs::DEFAULT;
    if corrupt_activations {
        coeffs.n0 *= 1.01;
        eprintln!("warning: running with deliberately corrupted activation coefficients");
    }
    let results = run_selftest(&coeffs);
    let mut all_ok = true;
    for r in &results {
        emit_json(&CheckLine {
            check: r.name,
            passed: r.passed,
            detail: &r.detail,
        })?;
        eprintln!(
            "[{}] {} - {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
        all_ok &= r.passed;
    }
    eprintln!(
        "selftest: {}/{} checks passed",
        results.iter().filter(|r| r.passed).count(),
        results.len()
    );
    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

#[derive(Serialize)]
struct GenReport<'a> {
    preset: &'a str,
    out: &'a str,
    seed: u64,
    tensors: usize,
}

fn cmd_gen_weights(preset: &str, out: &Path, seed: u64) -> Result<ExitCode> {
    let cfg = ModelConfig::preset(preset).ok_or_else(|| {
        anyhow!(
            "unknown preset {preset}; available: {}",
            ModelConfig::preset_names().join(", ")
        )
    })?;
    let wf = gen_weight_file(&cfg, seed).context("generating weights")?;
    wf.save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    emit_json(&GenReport {
        preset,
        out: &out.display().to_string(),
        seed,
        tensors: wf.tensors.len(),
    })?;
    eprintln!(
        "generated {} ({} tensors, float) -> {}",
        preset,
        wf.tensors.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}
