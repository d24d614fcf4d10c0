//! PCM 16-bit mono WAV at 16 kHz, the only encoding the toolkit reads or writes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::frontend::Waveform;

pub const SAMPLE_RATE: u32 = 16_000;

/// Decodes a WAV file image. Every rejected header field is named in the error.
pub fn parse_wav(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < 12 {
        return Err(Error::Wav(format!(
            "file is {} bytes, shorter than the 12-byte RIFF header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(Error::Wav(format!(
            "missing RIFF tag (found {:?})",
            String::from_utf8_lossy(&bytes[0..4])
        )));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(Error::Wav(format!(
            "missing WAVE form type (found {:?})",
            String::from_utf8_lossy(&bytes[8..12])
        )));
    }

    let mut pos = 12;
    let mut format_seen = false;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body.checked_add(size).filter(|&e| e <= bytes.len());
        match id {
            b"fmt " => {
                let end = end.ok_or_else(|| {
                    Error::Wav(format!("fmt chunk declares {size} bytes but the file ends early"))
                })?;
                check_format(&bytes[body..end])?;
                format_seen = true;
            }
            b"data" => {
                if !format_seen {
                    return Err(Error::Wav("data chunk appears before the fmt chunk".into()));
                }
                let end = end.ok_or_else(|| {
                    Error::Wav(format!(
                        "data chunk declares {size} bytes but only {} remain",
                        bytes.len() - body
                    ))
                })?;
                if !size.is_multiple_of(2) {
                    return Err(Error::Wav(format!(
                        "data chunk size {size} is not a whole number of 16-bit samples"
                    )));
                }
                let samples = bytes[body..end]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                    .collect();
                return Ok(Waveform::new(samples, SAMPLE_RATE));
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body + size + (size & 1);
    }
    if format_seen {
        Err(Error::Wav("no data chunk".into()))
    } else {
        Err(Error::Wav("no fmt chunk".into()))
    }
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

fn check_format(fmt: &[u8]) -> Result<()> {
    if fmt.len() < 16 {
        return Err(Error::Wav(format!(
            "fmt chunk is {} bytes, expected at least 16",
            fmt.len()
        )));
    }
    let audio_format = u16_at(fmt, 0);
    let channels = u16_at(fmt, 2);
    let rate = u32_at(fmt, 4);
    let byte_rate = u32_at(fmt, 8);
    let block_align = u16_at(fmt, 12);
    let bits = u16_at(fmt, 14);
    if audio_format != 1 {
        return Err(Error::Wav(format!(
            "audio format {audio_format} is not PCM (1)"
        )));
    }
    if channels != 1 {
        return Err(Error::Wav(format!("{channels} channels, expected mono")));
    }
    if rate != SAMPLE_RATE {
        return Err(Error::Wav(format!(
            "sample rate {rate} Hz, expected {SAMPLE_RATE} Hz"
        )));
    }
    if bits != 16 {
        return Err(Error::Wav(format!("{bits} bits per sample, expected 16")));
    }
    if block_align != 2 {
        return Err(Error::Wav(format!("block align {block_align}, expected 2")));
    }
    if byte_rate != SAMPLE_RATE * 2 {
        return Err(Error::Wav(format!(
            "byte rate {byte_rate}, expected {}",
            SAMPLE_RATE * 2
        )));
    }
    Ok(())
}

/// Encodes samples as PCM16, clamping to `[-1, 1)`.
pub fn encode_wav(w: &Waveform) -> Result<Vec<u8>> {
    if w.sample_rate != SAMPLE_RATE {
        return Err(Error::Wav(format!(
            "cannot write sample rate {} Hz, only {SAMPLE_RATE} Hz",
            w.sample_rate
        )));
    }
    let data_len = w.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &w.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    Ok(out)
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_wav(&bytes).map_err(|e| match e {
        Error::Wav(msg) => Error::Wav(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    std::fs::write(path, encode_wav(w)?).map_err(|e| Error::io(path, e))
}

/// Rounds samples to the PCM16 grid, so that writing and reading back is lossless.
pub fn quantize(samples: &mut [f64]) {
    for s in samples {
        *s = (*s * 32768.0).round().clamp(-32768.0, 32767.0) / 32768.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> Vec<u8> {
        encode_wav(&Waveform::new(vec![0.0, 0.5, -0.5], SAMPLE_RATE)).unwrap()
    }

    fn expect_err(bytes: &[u8], needle: &str) {
        match parse_wav(bytes) {
            Err(Error::Wav(msg)) => assert!(msg.contains(needle), "{msg:?} lacks {needle:?}"),
            other => panic!("expected wav error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_exact_on_the_grid() {
        let mut s: Vec<f64> = (0..100).map(|i| ((i as f64) * 0.37).sin() * 0.9).collect();
        quantize(&mut s);
        let w = Waveform::new(s, SAMPLE_RATE);
        assert_eq!(parse_wav(&encode_wav(&w).unwrap()).unwrap(), w);
    }

    #[test]
    fn rejects_bad_headers() {
        let good = header();
        expect_err(&good[..8], "shorter than");
        let mut b = good.clone();
        b[0..4].copy_from_slice(b"RIFX");
        expect_err(&b, "RIFF");
        let mut b = good.clone();
        b[8..12].copy_from_slice(b"AVI ");
        expect_err(&b, "WAVE");
        let mut b = good.clone();
        b[20] = 3;
        expect_err(&b, "not PCM");
        let mut b = good.clone();
        b[22] = 2;
        expect_err(&b, "channels");
        let mut b = good.clone();
        b[24..28].copy_from_slice(&44_100u32.to_le_bytes());
        expect_err(&b, "sample rate 44100");
        let mut b = good.clone();
        b[34] = 8;
        expect_err(&b, "8 bits");
        let mut b = good.clone();
        b[40..44].copy_from_slice(&1000u32.to_le_bytes());
        expect_err(&b, "only 6 remain");
        expect_err(&good[..36], "no data chunk");
    }

    #[test]
    fn skips_unknown_chunks() {
        let good = header();
        let mut b = good[..36].to_vec();
        b.extend_from_slice(b"LIST");
        b.extend_from_slice(&3u32.to_le_bytes());
        b.extend_from_slice(&[1, 2, 3, 0]);
        b.extend_from_slice(&good[36..]);
        assert_eq!(parse_wav(&b).unwrap().samples.len(), 3);
    }
}
