//! Minimal RIFF/WAV reader and writer: 16-bit signed PCM, mono only.

use crate::error::{Error, Result};
use crate::signal::Waveform;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let mut hdr = [0u8; 12];
    r.read_exact(&mut hdr)
        .map_err(|_| Error::format("truncated WAV header"))?;
    if &hdr[0..4] != b"RIFF" || &hdr[8..12] != b"WAVE" {
        return Err(Error::format("not a RIFF/WAVE file"));
    }

    let mut sample_rate = 0u32;
    let mut channels = 0u16;
    let mut bits = 0u16;
    let mut have_fmt = false;
    let mut data: Option<Vec<u8>> = None;

    loop {
        let mut chunk_hdr = [0u8; 8];
        match r.read_exact(&mut chunk_hdr) {
            Ok(()) => {}
            Err(_) => break,
        }
        let id = &chunk_hdr[0..4];
        let size = u32::from_le_bytes([chunk_hdr[4], chunk_hdr[5], chunk_hdr[6], chunk_hdr[7]])
            as usize;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::format("fmt chunk too small"));
                }
                let mut fmt = vec![0u8; size];
                r.read_exact(&mut fmt)
                    .map_err(|_| Error::format("truncated fmt chunk"))?;
                let audio_format = u16::from_le_bytes([fmt[0], fmt[1]]);
                channels = u16::from_le_bytes([fmt[2], fmt[3]]);
                sample_rate = u32::from_le_bytes([fmt[4], fmt[5], fmt[6], fmt[7]]);
                bits = u16::from_le_bytes([fmt[14], fmt[15]]);
                if audio_format != 1 {
                    return Err(Error::format(format!(
                        "unsupported encoding {audio_format}, want PCM"
                    )));
                }
                have_fmt = true;
            }
            b"data" => {
                let mut payload = vec![0u8; size];
                r.read_exact(&mut payload)
                    .map_err(|_| Error::format("truncated data chunk"))?;
                data = Some(payload);
            }
            _ => {
                // skip unknown chunk (pad byte included when size is odd)
                let skip = size + (size & 1);
                let mut sink = vec![0u8; skip];
                r.read_exact(&mut sink)
                    .map_err(|_| Error::format("truncated chunk"))?;
                continue;
            }
        }
        if size & 1 == 1 {
            let mut pad = [0u8; 1];
            let _ = r.read_exact(&mut pad);
        }
    }

    if !have_fmt {
        return Err(Error::format("missing fmt chunk"));
    }
    if channels != 1 {
        return Err(Error::format(format!("expected mono, got {channels} channels")));
    }
    if bits != 16 {
        return Err(Error::format(format!("expected 16-bit PCM, got {bits}-bit")));
    }
    let data = data.ok_or_else(|| Error::format("missing data chunk"))?;
    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
        .collect();
    Waveform::new(samples, sample_rate)
}

pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("wav.tmp");
    {
        let mut out = BufWriter::new(File::create(&tmp)?);
        let n = w.samples.len();
        let data_size = (n * 2) as u32;
        out.write_all(b"RIFF")?;
        out.write_all(&(36 + data_size).to_le_bytes())?;
        out.write_all(b"WAVE")?;
        out.write_all(b"fmt ")?;
        out.write_all(&16u32.to_le_bytes())?;
        out.write_all(&1u16.to_le_bytes())?; // PCM
        out.write_all(&1u16.to_le_bytes())?; // mono
        out.write_all(&w.sample_rate.to_le_bytes())?;
        out.write_all(&(w.sample_rate * 2).to_le_bytes())?; // byte rate
        out.write_all(&2u16.to_le_bytes())?; // block align
        out.write_all(&16u16.to_le_bytes())?;
        out.write_all(b"data")?;
        out.write_all(&data_size.to_le_bytes())?;
        for &s in &w.samples {
            let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
            out.write_all(&q.to_le_bytes())?;
        }
        out.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
