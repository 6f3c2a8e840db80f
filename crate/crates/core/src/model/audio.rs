//! 16-bit mono WAV output at the 16 kHz synthesis rate.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::ModelError;

pub const SAMPLE_RATE: u32 = 16_000;

fn spec() -> WavSpec {
    WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    }
}

/// Writes unit-range samples as 16-bit PCM; values are clamped to [-1, 1]
/// and rounded, so the mapping (and the file bytes) are deterministic.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64]) -> Result<(), ModelError> {
    let mut w = WavWriter::create(path, spec())?;
    for &s in samples {
        w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
    }
    w.finalize()?;
    Ok(())
}

/// Reads a WAV file produced by [`write_wav`], validating the format.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Vec<i16>, ModelError> {
    let mut r = WavReader::open(path)?;
    if r.spec() != spec() {
        return Err(ModelError::BadConfig(format!(
            "expected 16-bit mono {SAMPLE_RATE} Hz wav, found {:?}",
            r.spec()
        )));
    }
    r.samples::<i16>()
        .map(|s| s.map_err(ModelError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn roundtrip_and_clamp() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("t.wav");
        let samples = [0.0, 0.5, -0.5, 1.0, -1.0, 1.5, -2.0, 1.0 / 32767.0];
        write_wav(&p, &samples).unwrap();
        let got = read_wav(&p).unwrap();
        assert_eq!(got, vec![0, 16384, -16384, 32767, -32767, 32767, -32767, 1]);
    }

    #[test]
    fn identical_samples_give_identical_bytes() {
        let dir = tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.wav"), dir.path().join("b.wav"));
        let samples: Vec<f64> = (0..1600).map(|i| (i as f64 * 0.01).sin() * 0.8).collect();
        write_wav(&p1, &samples).unwrap();
        write_wav(&p2, &samples).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn rejects_foreign_format() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad.wav");
        let other = WavSpec {
            channels: 2,
            sample_rate: 44_100,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, other).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(read_wav(&p).is_err());
    }
}
