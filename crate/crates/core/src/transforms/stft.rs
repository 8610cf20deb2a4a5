use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::TransformError;
use crate::scene::MultiChannel;

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Complex STFT data indexed `(frame, bin, channel)`, channel fastest.
///
/// Only bins `bin_offset .. bin_offset + bins` are stored; the rest of the
/// one-sided spectrum is implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TfTensor {
    pub frames: usize,
    pub bins: usize,
    pub bin_offset: usize,
    pub channels: usize,
    pub frame_size: usize,
    pub hop: usize,
    pub sample_rate: f64,
    pub data: Vec<Complex64>,
}

impl TfTensor {
    pub fn zeros_like(other: &TfTensor) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); other.data.len()],
            ..other.clone()
        }
    }

    fn offset(&self, t: usize, b: usize) -> usize {
        (t * self.bins + b) * self.channels
    }

    /// All channels at frame `t`, stored-bin position `b`.
    pub fn at(&self, t: usize, b: usize) -> &[Complex64] {
        let o = self.offset(t, b);
        &self.data[o..o + self.channels]
    }

    pub fn at_mut(&mut self, t: usize, b: usize) -> &mut [Complex64] {
        let o = self.offset(t, b);
        &mut self.data[o..o + self.channels]
    }

    /// Stored-bin position of STFT bin `index`, if present.
    pub fn position_of(&self, index: usize) -> Option<usize> {
        (index >= self.bin_offset && index < self.bin_offset + self.bins).then(|| index - self.bin_offset)
    }

    /// Element-wise sum of tensors of identical shape.
    pub fn sum(parts: &[&TfTensor]) -> TfTensor {
        let mut out = TfTensor::zeros_like(parts[0]);
        for p in parts {
            assert_eq!(p.data.len(), out.data.len());
            out.data.iter_mut().zip(&p.data).for_each(|(a, b)| *a += b);
        }
        out
    }
}

/// Windowed forward STFT of every channel with a periodic Hann window,
/// keeping only `bins` (defaults to the full one-sided spectrum).
pub fn stft(
    signal: &MultiChannel,
    frame_size: usize,
    hop: usize,
    sample_rate: f64,
    bins: Option<Range<usize>>,
) -> Result<TfTensor, TransformError> {
    let len = signal.first().map_or(0, Vec::len);
    if signal.iter().any(|c| c.len() != len) {
        return Err(TransformError::RaggedChannels);
    }
    if len < frame_size {
        return Err(TransformError::SignalTooShort { len, frame_size });
    }
    let half = frame_size / 2 + 1;
    let range = bins.unwrap_or(0..half);
    let range = range.start.min(half)..range.end.min(half);
    let frames = 1 + (len - frame_size) / hop;
    let channels = signal.len();
    let nb = range.len();
    let window = hann_periodic(frame_size);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame_size);

    // spectra[q][t][b]
    let spectra: Vec<Vec<Vec<Complex64>>> = signal
        .par_iter()
        .map(|ch| {
            let mut buf = vec![Complex64::new(0.0, 0.0); frame_size];
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            (0..frames)
                .map(|t| {
                    let start = t * hop;
                    for (i, z) in buf.iter_mut().enumerate() {
                        *z = Complex64::new(ch[start + i] * window[i], 0.0);
                    }
                    fft.process_with_scratch(&mut buf, &mut scratch);
                    buf[range.clone()].to_vec()
                })
                .collect()
        })
        .collect();

    let mut data = vec![Complex64::new(0.0, 0.0); frames * nb * channels];
    for (q, per_ch) in spectra.iter().enumerate() {
        for (t, spec) in per_ch.iter().enumerate() {
            for (b, &z) in spec.iter().enumerate() {
                data[(t * nb + b) * channels + q] = z;
            }
        }
    }
    Ok(TfTensor {
        frames,
        bins: nb,
        bin_offset: range.start,
        channels,
        frame_size,
        hop,
        sample_rate,
        data,
    })
}

/// One-frame tensor holding the `frame_size`-point DFT of each impulse
/// response at `bins`. Responses longer than a frame are folded (circular
/// aliasing), matching what one STFT frame can represent.
pub fn frequency_response(irs: &[Vec<f64>], frame_size: usize, sample_rate: f64, bins: Range<usize>) -> TfTensor {
    let half = frame_size / 2 + 1;
    let range = bins.start.min(half)..bins.end.min(half);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame_size);
    let channels = irs.len();
    let nb = range.len();
    let mut data = vec![Complex64::new(0.0, 0.0); nb * channels];
    for (q, ir) in irs.iter().enumerate() {
        let mut buf = vec![Complex64::new(0.0, 0.0); frame_size];
        for (i, &v) in ir.iter().enumerate() {
            buf[i % frame_size] += v;
        }
        fft.process(&mut buf);
        for (b, k) in range.clone().enumerate() {
            data[b * channels + q] = buf[k];
        }
    }
    TfTensor {
        frames: 1,
        bins: nb,
        bin_offset: range.start,
        channels,
        frame_size,
        hop: frame_size,
        sample_rate,
        data,
    }
}

/// Weighted overlap-add inverse of [`stft`]. Bins not stored in the tensor
/// are treated as zero. Output length is `(frames - 1) · hop + frame_size`.
pub fn istft(tensor: &TfTensor) -> MultiChannel {
    let n = tensor.frame_size;
    let len = (tensor.frames.saturating_sub(1)) * tensor.hop + n;
    let window = hann_periodic(n);
    let mut norm = vec![0.0; len];
    for t in 0..tensor.frames {
        for i in 0..n {
            norm[t * tensor.hop + i] += window[i] * window[i];
        }
    }
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    (0..tensor.channels)
        .into_par_iter()
        .map(|q| {
            let mut out = vec![0.0; len];
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            for t in 0..tensor.frames {
                buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                for b in 0..tensor.bins {
                    let k = tensor.bin_offset + b;
                    let z = tensor.at(t, b)[q];
                    buf[k] = z;
                    if k != 0 && 2 * k != n {
                        buf[n - k] = z.conj();
                    }
                }
                ifft.process(&mut buf);
                let start = t * tensor.hop;
                for i in 0..n {
                    out[start + i] += window[i] * buf[i].re / n as f64;
                }
            }
            out.iter_mut()
                .zip(&norm)
                .for_each(|(y, &w)| *y = if w > 1e-12 { *y / w } else { 0.0 });
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::white_noise;

    #[test]
    fn roundtrip_interior() {
        let n = 1024;
        let hop = 256;
        let x: MultiChannel = (0..3).map(|s| white_noise(10 * n, s)).collect();
        let tf = stft(&x, n, hop, 16000.0, None).unwrap();
        let y = istft(&tf);
        let mut err = 0.0;
        let mut energy = 0.0;
        for (a, b) in x.iter().zip(&y) {
            for i in n..(y[0].len() - n) {
                err += (a[i] - b[i]).powi(2);
                energy += a[i] * a[i];
            }
        }
        assert!((err / energy).sqrt() < 1e-10);
    }

    #[test]
    fn hann_is_cola_at_quarter_hop() {
        let w = hann_periodic(64);
        for i in 0..16 {
            let s: f64 = (0..4).map(|j| w[i + 16 * j]).sum();
            assert!((s - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bin_centred_tone_concentrates() {
        let n = 512;
        let bin = 37;
        let x: Vec<f64> = (0..4 * n)
            .map(|i| (2.0 * PI * bin as f64 * i as f64 / n as f64 + 0.3).cos())
            .collect();
        let tf = stft(&vec![x], n, n / 4, 16000.0, None).unwrap();
        for t in 0..tf.frames {
            let total: f64 = (0..tf.bins).map(|b| tf.at(t, b)[0].norm_sqr()).sum();
            let near: f64 = (bin - 1..=bin + 1).map(|b| tf.at(t, b)[0].norm_sqr()).sum();
            assert!(near / total >= 0.99);
        }
    }

    #[test]
    fn zero_signal_and_short_signal() {
        let tf = stft(&vec![vec![0.0; 2048]], 1024, 256, 16000.0, None).unwrap();
        assert!(tf.data.iter().all(|z| z.norm() == 0.0));
        assert_eq!(
            stft(&vec![vec![0.0; 100]], 1024, 256, 16000.0, None),
            Err(TransformError::SignalTooShort {
                len: 100,
                frame_size: 1024
            })
        );
    }

    #[test]
    fn band_limited_storage_matches_full() {
        let x = vec![white_noise(4096, 3)];
        let full = stft(&x, 1024, 256, 16000.0, None).unwrap();
        let part = stft(&x, 1024, 256, 16000.0, Some(100..200)).unwrap();
        assert_eq!(part.bins, 100);
        for t in 0..full.frames {
            assert_eq!(part.at(t, 5), full.at(t, 105));
        }
        assert_eq!(part.position_of(150), Some(50));
        assert_eq!(part.position_of(200), None);
    }

    #[test]
    fn frequency_response_of_delay() {
        let n = 64;
        let tf = frequency_response(&[vec![0.0, 0.0, 0.0, 1.0]], n, 16000.0, 0..n / 2 + 1);
        for b in 0..tf.bins {
            let want = Complex64::from_polar(1.0, -2.0 * PI * (3 * b) as f64 / n as f64);
            assert!((tf.at(0, b)[0] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn parseval_within_one_percent() {
        // band-limited noise: sum of tones inside the spectrum
        let n = 1024;
        let hop = 256;
        let len = 256 * n;
        let x: Vec<f64> = (0..len)
            .map(|i| {
                (1..20)
                    .map(|h| (2.0 * PI * (h as f64 * 7.3) * i as f64 / n as f64 + h as f64).sin())
                    .sum()
            })
            .collect();
        let tf = stft(&vec![x.clone()], n, hop, 16000.0, None).unwrap();
        let w = hann_periodic(n);
        let wsq: f64 = w.iter().map(|v| v * v).sum();
        // one-sided spectrum: double every bin except DC and Nyquist
        let mut tf_energy = 0.0;
        for t in 0..tf.frames {
            for b in 0..tf.bins {
                let f = if b == 0 || b == n / 2 { 1.0 } else { 2.0 };
                tf_energy += f * tf.at(t, b)[0].norm_sqr();
            }
        }
        tf_energy *= hop as f64 / (n as f64 * wsq);
        let covered = (tf.frames - 1) * hop + n;
        let time_energy: f64 = x[..covered].iter().map(|v| v * v).sum();
        assert!((tf_energy / time_energy - 1.0).abs() < 0.01);
    }
}
