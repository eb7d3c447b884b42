//! Mono WAV I/O. Files are written as 32-bit IEEE float; reading also accepts
//! integer PCM, scaled to [-1, 1).

use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::signal::AudioBuffer;

/// Encodes `buffer` as a float32 mono RIFF/WAVE byte stream.
pub fn encode_wav(buffer: &AudioBuffer) -> std::result::Result<Vec<u8>, hound::Error> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut bytes = Cursor::new(Vec::new());
    {
        let mut writer = WavWriter::new(&mut bytes, spec)?;
        for &s in buffer.samples() {
            writer.write_sample(s as f32)?;
        }
        writer.finalize()?;
    }
    Ok(bytes.into_inner())
}

pub fn wav_write(buffer: &AudioBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_wav(buffer).map_err(|source| Error::Wav {
        path: path.to_path_buf(),
        source,
    })?;
    write_atomic(path, &bytes)
}

pub fn wav_read(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let reader = WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedWav {
            path: path.to_path_buf(),
            detail: format!("{} channels, expected mono", spec.channels),
        });
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?
        }
        (format, bits) => {
            return Err(Error::UnsupportedWav {
                path: path.to_path_buf(),
                detail: format!("{format:?} with {bits} bits per sample"),
            })
        }
    };
    AudioBuffer::new(samples, spec.sample_rate)
}
