//! Dry source material and single-channel signal utilities.
//!
//! The synthetic sources stand in for a speech recording and a recorded
//! washer-dryer noise. They are generated procedurally and deterministically
//! from a seed so that every experiment is reproducible without shipping
//! audio corpora.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

pub fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

pub fn scale_to_power(x: &mut [f64], power: f64) {
    let p = mean_power(x);
    if p > 0.0 {
        let g = (power / p).sqrt();
        x.iter_mut().for_each(|v| *v *= g);
    }
}

/// White Gaussian noise with unit variance.
pub fn white_noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

struct Vowel {
    formants: [(f64, f64); 3],
}

const VOWELS: [Vowel; 6] = [
    Vowel { formants: [(730.0, 90.0), (1090.0, 110.0), (2440.0, 170.0)] },
    Vowel { formants: [(270.0, 60.0), (2290.0, 100.0), (3010.0, 200.0)] },
    Vowel { formants: [(300.0, 60.0), (870.0, 90.0), (2240.0, 170.0)] },
    Vowel { formants: [(530.0, 80.0), (1840.0, 100.0), (2480.0, 160.0)] },
    Vowel { formants: [(570.0, 80.0), (840.0, 90.0), (2410.0, 160.0)] },
    Vowel { formants: [(440.0, 70.0), (1020.0, 100.0), (2240.0, 160.0)] },
];

fn formant_gain(freq: f64, vowel: &Vowel) -> f64 {
    let mut g = 0.0;
    for (i, &(centre, bw)) in vowel.formants.iter().enumerate() {
        let rel = (freq - centre) / bw;
        g += (0.6_f64).powi(i as i32) / (1.0 + rel * rel);
    }
    // glottal roll-off
    g / (1.0 + freq / 500.0)
}

/// Speech-like babble: voiced syllables with a drifting pitch and vowel
/// formants, occasional fricative bursts, and pauses between words.
pub fn synthetic_speech(len: usize, sample_rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; len];
    let nyquist_guard = 0.45 * sample_rate;
    let mut pos = 0usize;
    let base_pitch = rng.random_range(100.0..180.0);
    while pos < len {
        let syllables = rng.random_range(1..=4);
        for _ in 0..syllables {
            let dur = (rng.random_range(0.12..0.30) * sample_rate) as usize;
            let vowel = &VOWELS[rng.random_range(0..VOWELS.len())];
            let f0_start = base_pitch * rng.random_range(0.8..1.25);
            let f0_end = f0_start * rng.random_range(0.85..1.15);
            let level = rng.random_range(0.4..1.0);
            let mut phase = 0.0;
            for i in 0..dur {
                let n = pos + i;
                if n >= len {
                    break;
                }
                let frac = i as f64 / dur as f64;
                let f0 = f0_start + (f0_end - f0_start) * frac;
                phase += 2.0 * PI * f0 / sample_rate;
                let env = (PI * frac).sin().powf(0.7) * level;
                let mut s = 0.0;
                let mut h = 1;
                while (h as f64) * f0 < nyquist_guard && h <= 40 {
                    let hf = h as f64 * f0;
                    s += formant_gain(hf, vowel) * (h as f64 * phase).sin();
                    h += 1;
                }
                out[n] += env * s;
            }
            pos += dur;
            if rng.random_bool(0.3) {
                // fricative: high-passed noise burst
                let fdur = (rng.random_range(0.04..0.10) * sample_rate) as usize;
                let mut prev = 0.0;
                for i in 0..fdur {
                    let n = pos + i;
                    if n >= len {
                        break;
                    }
                    let w: f64 = rng.sample(StandardNormal);
                    let hp = w - prev;
                    prev = w;
                    let env = (PI * i as f64 / fdur as f64).sin();
                    out[n] += 0.05 * env * hp;
                }
                pos += fdur;
            }
        }
        pos += (rng.random_range(0.08..0.35) * sample_rate) as usize;
    }
    scale_to_power(&mut out, 0.01);
    out
}

/// Stationary appliance-like noise: low-passed broadband rumble, a motor hum
/// with harmonics and a faint high-frequency hiss.
pub fn synthetic_washer(len: usize, sample_rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lp1 = 0.0;
    let mut lp2 = 0.0;
    let a1 = (-2.0 * PI * 400.0 / sample_rate).exp();
    let a2 = (-2.0 * PI * 2500.0 / sample_rate).exp();
    let hum = 2.0 * PI * 100.0 / sample_rate;
    let harmonics: Vec<(f64, f64)> = (1..=12)
        .map(|h| (0.3 / h as f64, rng.random_range(0.0..2.0 * PI)))
        .collect();
    let mut out = Vec::with_capacity(len);
    for n in 0..len {
        let w: f64 = rng.sample(StandardNormal);
        lp1 = a1 * lp1 + (1.0 - a1) * w;
        lp2 = a2 * lp2 + (1.0 - a2) * w;
        let mut tone = 0.0;
        for (h, &(amp, ph)) in harmonics.iter().enumerate() {
            tone += amp * ((h + 1) as f64 * hum * n as f64 + ph).sin();
        }
        out.push(3.0 * lp1 + 0.6 * lp2 + 0.05 * w + 0.02 * tone);
    }
    scale_to_power(&mut out, 0.01);
    out
}

/// Linear convolution of `signal` with each impulse response, truncated to
/// `out_len` samples. The signal spectrum is computed once and shared.
pub fn fft_convolve_many(signal: &[f64], irs: &[Vec<f64>], out_len: usize) -> Vec<Vec<f64>> {
    let max_ir = irs.iter().map(Vec::len).max().unwrap_or(0);
    if signal.is_empty() || max_ir == 0 {
        return vec![vec![0.0; out_len]; irs.len()];
    }
    let size = (signal.len() + max_ir - 1).max(out_len).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut sig: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    sig.resize(size, Complex64::new(0.0, 0.0));
    fwd.process(&mut sig);
    let norm = 1.0 / size as f64;
    irs.iter()
        .map(|ir| {
            let mut buf: Vec<Complex64> = ir.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            buf.resize(size, Complex64::new(0.0, 0.0));
            fwd.process(&mut buf);
            buf.iter_mut().zip(&sig).for_each(|(b, s)| *b *= s * norm);
            inv.process(&mut buf);
            buf.iter().take(out_len).map(|z| z.re).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convolution_matches_direct_sum() {
        let x = white_noise(300, 1);
        let h = vec![white_noise(40, 2), vec![0.0, 0.0, 1.0]];
        let out = fft_convolve_many(&x, &h, 339);
        for (ir, y) in h.iter().zip(&out) {
            for n in 0..339 {
                let mut want = 0.0;
                for (k, &hk) in ir.iter().enumerate() {
                    if n >= k && n - k < x.len() {
                        want += hk * x[n - k];
                    }
                }
                assert!((y[n] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sources_are_deterministic_and_scaled() {
        let a = synthetic_speech(16000, 16000.0, 4);
        let b = synthetic_speech(16000, 16000.0, 4);
        assert_eq!(a, b);
        assert!((mean_power(&a) - 0.01).abs() < 1e-12);
        let w = synthetic_washer(16000, 16000.0, 4);
        assert!((mean_power(&w) - 0.01).abs() < 1e-12);
        assert_ne!(synthetic_speech(16000, 16000.0, 5), a);
    }

    #[test]
    fn speech_has_pauses() {
        let s = synthetic_speech(160_000, 16000.0, 9);
        let block = 1600;
        let energies: Vec<f64> = s.chunks(block).map(mean_power).collect();
        let peak = energies.iter().copied().fold(0.0, f64::max);
        assert!(energies.iter().any(|&e| e < 1e-3 * peak));
    }
}
