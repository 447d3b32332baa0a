//! Minimal RIFF/WAVE reader and writer for PCM 16-bit mono 16 kHz files.

use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const REQUIRED_SAMPLE_RATE: u32 = 16000;

fn u16_at(b: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([b[off], b[off + 1]])
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Read a PCM-16 mono 16 kHz WAV, scaling samples to [-1, 1] by 1/32768.
pub fn read_wav(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    if bytes.len() < 44 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Data(format!(
            "{}: not a RIFF/WAVE file",
            path.display()
        )));
    }
    // walk chunks to find fmt and data
    let mut pos = 12usize;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<(usize, usize)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(&bytes, pos + 4) as usize;
        let body = pos + 8;
        if body + size > bytes.len() {
            return Err(Error::Data(format!(
                "{}: truncated chunk {:?}",
                path.display(),
                String::from_utf8_lossy(id)
            )));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Data(format!("{}: short fmt chunk", path.display())));
                }
                fmt = Some((
                    u16_at(&bytes, body),
                    u16_at(&bytes, body + 2),
                    u32_at(&bytes, body + 4),
                    u16_at(&bytes, body + 14),
                ));
            }
            b"data" => data = Some((body, size)),
            _ => {}
        }
        pos = body + size + (size & 1);
    }
    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| Error::Data(format!("{}: missing fmt chunk", path.display())))?;
    if format != 1 || bits != 16 {
        return Err(Error::Data(format!(
            "{}: expected PCM 16-bit, got format {format} with {bits} bits",
            path.display()
        )));
    }
    if channels != 1 {
        return Err(Error::Data(format!(
            "{}: expected mono, got {channels} channels",
            path.display()
        )));
    }
    if rate != REQUIRED_SAMPLE_RATE {
        return Err(Error::Data(format!(
            "{}: expected {REQUIRED_SAMPLE_RATE} Hz, got {rate}",
            path.display()
        )));
    }
    let (off, size) =
        data.ok_or_else(|| Error::Data(format!("{}: missing data chunk", path.display())))?;
    let n = size / 2;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let v = i16::from_le_bytes([bytes[off + 2 * i], bytes[off + 2 * i + 1]]);
        samples.push(v as f64 / 32768.0);
    }
    Ok(samples)
}

/// Write samples in [-1, 1] as PCM-16 mono 16 kHz (clamped, rounded to
/// nearest).
pub fn write_wav(path: &Path, samples: &[f64]) -> Result<()> {
    let n = samples.len();
    let data_size = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&REQUIRED_SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(REQUIRED_SAMPLE_RATE * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for &s in samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::Data(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(&out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn temp_path(name: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("rawspoof_wavtest_{}_{name}", std::process::id()))
    }

    #[test]
    fn sample_scaling_is_over_32768() {
        let p = temp_path("scale.wav");
        write_wav(&p, &[0.5, -0.25, 0.0]).unwrap();
        let got = read_wav(&p).unwrap();
        assert_eq!(got[0], 16384.0 / 32768.0);
        assert_eq!(got[1], -8192.0 / 32768.0);
        assert_eq!(got[2], 0.0);
        std::fs::remove_file(&p).ok();
    }

    #[test]
    fn round_trip_on_random_pcm_grid_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let samples: Vec<f64> = (0..500)
            .map(|_| rng.random_range(-32768i32..=32767) as f64 / 32768.0)
            .collect();
        let p = temp_path("roundtrip.wav");
        write_wav(&p, &samples).unwrap();
        let got = read_wav(&p).unwrap();
        assert_eq!(got, samples);
        std::fs::remove_file(&p).ok();
    }

    #[test]
    fn stereo_file_is_rejected() {
        let p = temp_path("stereo.wav");
        // hand-build a 2-channel header
        let mut out: Vec<u8> = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&40u32.to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&2u16.to_le_bytes()); // stereo
        out.extend_from_slice(&16000u32.to_le_bytes());
        out.extend_from_slice(&64000u32.to_le_bytes());
        out.extend_from_slice(&4u16.to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&4u32.to_le_bytes());
        out.extend_from_slice(&[0, 0, 0, 0]);
        std::fs::write(&p, &out).unwrap();
        let err = read_wav(&p).unwrap_err().to_string();
        assert!(err.contains("mono"), "{err}");
        std::fs::remove_file(&p).ok();
    }

    #[test]
    fn wrong_rate_is_rejected_with_the_rate_named() {
        let p = temp_path("rate.wav");
        let mut out: Vec<u8> = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&40u32.to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&8000u32.to_le_bytes());
        out.extend_from_slice(&16000u32.to_le_bytes());
        out.extend_from_slice(&2u16.to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&[0, 0]);
        std::fs::write(&p, &out).unwrap();
        let err = read_wav(&p).unwrap_err().to_string();
        assert!(err.contains("8000"), "{err}");
        std::fs::remove_file(&p).ok();
    }
}
