//! Time-frequency and spherical-harmonic analysis/synthesis.

mod container;
mod sht;
mod stft;

pub use container::{read_sh_tensor, write_sh_tensor, ContainerError};
pub use sht::{
    encoding_matrix, isht_pressure, sht, synthesis_matrix, ShTensor, ShtBank, ShtOperator, SphericalPoint,
    ILL_CONDITIONED, BESSEL_ZERO_THRESHOLD,
};
pub use stft::{frequency_response, hann_periodic, istft, stft, TfTensor};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::specfun::{max_order, wavenumber};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("signal of {len} samples is shorter than one frame ({frame_size})")]
    SignalTooShort { len: usize, frame_size: usize },
    #[error("channels have unequal lengths")]
    RaggedChannels,
    #[error("order {order} needs {needed} coefficients but only {mics} microphones are available")]
    TooFewMics {
        order: u32,
        needed: usize,
        mics: usize,
    },
    #[error("SHT is ill-conditioned at k = {k:.4} (condition number {condition:.3e})")]
    IllConditioned { k: f64, condition: f64 },
    #[error("point at r = {r} lies outside the sweet area of radius {radius}")]
    OutsideSweetArea { r: f64, radius: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// One STFT bin inside the processing band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandBin {
    /// STFT bin index.
    pub index: usize,
    pub freq: f64,
    /// Wavenumber `2πf/c`.
    pub k: f64,
    /// Truncation order `ceil(k r_a)`.
    pub order: u32,
}

/// The STFT bins processed in the SH domain and their truncation orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPlan {
    pub f_low: f64,
    pub f_high: f64,
    pub frame_size: usize,
    pub sample_rate: f64,
    pub c: f64,
    pub radius: f64,
    pub bins: Vec<BandBin>,
}

impl BandPlan {
    /// Every bin whose centre frequency lies in `[f_low, f_high]`.
    pub fn new(f_low: f64, f_high: f64, frame_size: usize, sample_rate: f64, c: f64, radius: f64) -> Self {
        let df = sample_rate / frame_size as f64;
        let first = (f_low / df).ceil().max(1.0) as usize;
        let last = ((f_high / df).floor() as usize).min(frame_size / 2);
        let bins = (first..=last)
            .map(|index| {
                let freq = index as f64 * df;
                let k = wavenumber(freq, c);
                BandBin {
                    index,
                    freq,
                    k,
                    order: max_order(k, radius),
                }
            })
            .collect();
        Self {
            f_low,
            f_high,
            frame_size,
            sample_rate,
            c,
            radius,
            bins,
        }
    }

    /// Telephone band 300–3400 Hz.
    pub fn telephone(frame_size: usize, sample_rate: f64, c: f64, radius: f64) -> Self {
        Self::new(300.0, 3400.0, frame_size, sample_rate, c, radius)
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn max_order(&self) -> u32 {
        self.bins.iter().map(|b| b.order).max().unwrap_or(0)
    }

    /// STFT bin range covered by the plan.
    pub fn bin_range(&self) -> std::ops::Range<usize> {
        match (self.bins.first(), self.bins.last()) {
            (Some(a), Some(b)) => a.index..b.index + 1,
            _ => 0..0,
        }
    }

    /// Position in the plan of the bin nearest to `freq`.
    pub fn nearest(&self, freq: f64) -> Option<usize> {
        self.bins
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.freq - freq).abs().total_cmp(&(b.1.freq - freq).abs()))
            .map(|(i, _)| i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn telephone_band_orders() {
        let plan = BandPlan::telephone(16384, 16000.0, 343.0, 0.042);
        assert!(plan.bins.first().unwrap().freq >= 300.0);
        assert!(plan.bins.last().unwrap().freq <= 3400.0);
        assert_eq!(plan.max_order(), 3);
        assert_eq!(plan.bins.first().unwrap().order, 1);
        for b in &plan.bins {
            assert_eq!(b.order, (b.k * 0.042).ceil() as u32);
        }
        let i = plan.nearest(1500.0).unwrap();
        assert!((plan.bins[i].freq - 1500.0).abs() < 1.0);
    }
}
