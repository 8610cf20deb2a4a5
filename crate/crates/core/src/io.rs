//! File formats: WAV audio, RFC-4180 CSV tables, binary PGM and grayscale
//! PNG images, plus dry-signal path resolution.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Environment variable holding a `:`-separated dry-signal search path.
pub const DATA_ENV: &str = "SHMVDR_DATA";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        source: hound::Error,
    },
    #[error("{path}: sample rate {found} Hz, expected {expected} Hz")]
    SampleRate {
        path: PathBuf,
        found: f64,
        expected: f64,
    },
    #[error("{0}: no samples")]
    Empty(PathBuf),
    #[error("dry signal {0} not found in working directory or ${DATA_ENV}")]
    NotFound(PathBuf),
    #[error("png encoding: {0}")]
    Png(#[from] png::EncodingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Search order: the path itself, then each `extra` directory, then each
/// entry of `$SHMVDR_DATA`.
pub fn resolve_data_path(path: &Path, extra: &[PathBuf]) -> Result<PathBuf, IoError> {
    if path.is_absolute() || path.exists() {
        return if path.exists() {
            Ok(path.to_owned())
        } else {
            Err(IoError::NotFound(path.to_owned()))
        };
    }
    let env_dirs: Vec<PathBuf> = std::env::var_os(DATA_ENV)
        .map(|v| std::env::split_paths(&v).collect())
        .unwrap_or_default();
    extra
        .iter()
        .chain(env_dirs.iter())
        .map(|d| d.join(path))
        .find(|p| p.exists())
        .ok_or_else(|| IoError::NotFound(path.to_owned()))
}

/// Reads a WAV file and averages its channels. Integer formats are scaled to
/// `[-1, 1)`.
pub fn read_wav_mono(path: &Path) -> Result<(Vec<f64>, f64), IoError> {
    let wrap = |source| IoError::Wav {
        path: path.to_owned(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wrap)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wrap)?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(wrap)?
        }
    };
    let mono = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok((mono, spec.sample_rate as f64))
}

/// Writes channels as interleaved 32-bit float WAV.
pub fn write_wav(path: &Path, channels: &[Vec<f64>], sample_rate: f64) -> Result<(), IoError> {
    let wrap = |source| IoError::Wav {
        path: path.to_owned(),
        source,
    };
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate: sample_rate.round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wrap)?;
    let len = channels.iter().map(Vec::len).max().unwrap_or(0);
    for n in 0..len {
        for ch in channels {
            w.write_sample(ch.get(n).copied().unwrap_or(0.0) as f32)
                .map_err(wrap)?;
        }
    }
    w.finalize().map_err(wrap)
}

/// Minimal RFC-4180 CSV writer: CRLF line endings, fields quoted when they
/// contain a comma, quote or line break.
pub struct CsvWriter<W: Write> {
    out: W,
}

impl CsvWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self, IoError> {
        Ok(Self {
            out: BufWriter::new(File::create(path)?),
        })
    }
}

impl<W: Write> CsvWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> Result<(), IoError> {
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.out.write_all(b",")?;
            }
            let f = f.as_ref();
            if f.contains([',', '"', '\n', '\r']) {
                write!(self.out, "\"{}\"", f.replace('"', "\"\""))?;
            } else {
                self.out.write_all(f.as_bytes())?;
            }
        }
        self.out.write_all(b"\r\n")?;
        Ok(())
    }

    pub fn into_inner(mut self) -> Result<W, IoError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Formats a value for CSV output with fixed precision so repeated runs
/// produce byte-identical files.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.6}")
    }
}

/// An 8-bit grayscale image in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Maps `values` (row-major, `width × height`) linearly onto 0..=255 over
    /// `[lo, hi]`, clamping outside. Non-finite values map to 0.
    pub fn from_values(width: usize, height: usize, values: &[f64], lo: f64, hi: f64) -> Self {
        assert_eq!(values.len(), width * height);
        let pixels = values
            .iter()
            .map(|&v| {
                if !v.is_finite() {
                    0
                } else {
                    let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
                    (t * 255.0).round() as u8
                }
            })
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<(), IoError> {
        std::fs::write(path, self.pgm_bytes())?;
        Ok(())
    }

    /// Grayscale PNG, upscaled by an integer factor for viewing.
    pub fn write_png(&self, path: &Path, upscale: usize) -> Result<(), IoError> {
        let s = upscale.max(1);
        let (w, h) = (self.width * s, self.height * s);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                data.push(self.pixels[(y / s) * self.width + x / s]);
            }
        }
        let file = BufWriter::new(File::create(path)?);
        let mut enc = png::Encoder::new(file, w as u32, h as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&data)?;
        writer.finish()?;
        Ok(())
    }
}
