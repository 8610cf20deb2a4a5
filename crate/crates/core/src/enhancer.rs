//! Multi-output MVDR enhancement in the spherical harmonic domain.
//!
//! Per frequency bin the enhancer holds
//! * the interference-plus-noise PSD matrix `R_{v+u}` of the SH coefficients,
//! * the relative harmonic coefficients `h = d / d_00` of the desired field,
//!
//! and builds one distortionless beamformer per output coefficient. Output
//! coefficient `(n, m)` preserves the desired field's `h_nm`-scaled order-0
//! component while minimizing interference and sensor-noise power.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{mvdr_multi_output, BeamformerBank, CVector, HermitianPsd, LinalgError};
use crate::transforms::ShTensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnhanceError {
    #[error("PSD estimation needs at least one frame")]
    NoFrames,
    #[error("desired field has no order-0 energy at this bin")]
    ZeroReference,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Relative harmonic coefficients of the desired field at one bin,
/// normalized so that `h[0] == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReHc {
    pub bin: usize,
    pub h: CVector,
}

/// Sample PSD `(1/T) Σ_t x(t) x(t)ᴴ`.
pub fn estimate_psd<'a, I>(frames: I) -> Result<HermitianPsd, EnhanceError>
where
    I: IntoIterator<Item = &'a [Complex64]>,
{
    let mut iter = frames.into_iter().peekable();
    let dim = iter.peek().ok_or(EnhanceError::NoFrames)?.len();
    let mut acc = HermitianPsd::zeros(dim);
    let mut count = 0usize;
    for f in iter {
        if f.len() != dim {
            return Err(EnhanceError::DimensionMismatch {
                expected: dim,
                got: f.len(),
            });
        }
        acc.add_outer(&CVector::from_column_slice(f), 1.0);
        count += 1;
    }
    Ok(acc.scale(1.0 / count as f64))
}

/// Per-bin sample PSDs of an SH tensor over the chosen frames.
pub fn estimate_psd_per_bin(tensor: &ShTensor, frames: &[usize]) -> Result<Vec<HermitianPsd>, EnhanceError> {
    (0..tensor.bins())
        .into_par_iter()
        .map(|b| estimate_psd(frames.iter().map(|&t| tensor.coeffs(t, b))))
        .collect()
}

/// Rank-one interference PSD `σ_s² g gᴴ` per bin from the SH coefficients `g`
/// of the interference transfer functions and the interference source PSD.
pub fn oracle_interference_psd(transfer_sh: &[CVector], source_psd: &[f64]) -> Vec<HermitianPsd> {
    transfer_sh
        .iter()
        .zip(source_psd)
        .map(|(g, &s)| {
            let mut r = HermitianPsd::zeros(g.len());
            if s > 0.0 {
                r.add_outer(g, s);
            }
            r
        })
        .collect()
}

/// SH-domain PSD matrices for every bin of the band.
#[derive(Debug, Clone)]
pub struct PsdSet {
    pub interference: Vec<HermitianPsd>,
    pub noise: Vec<HermitianPsd>,
    pub interference_plus_noise: Vec<HermitianPsd>,
    /// Estimated from a desired-only segment.
    pub desired_plus_noise: Vec<HermitianPsd>,
}

impl PsdSet {
    pub fn new(
        interference: Vec<HermitianPsd>,
        noise: Vec<HermitianPsd>,
        desired_plus_noise: Vec<HermitianPsd>,
    ) -> Result<Self, EnhanceError> {
        let interference_plus_noise = interference
            .iter()
            .zip(&noise)
            .map(|(v, u)| v.add(u))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            interference,
            noise,
            interference_plus_noise,
            desired_plus_noise,
        })
    }
}

/// First column of `R̂_{d+u}` normalized by its first entry.
pub fn estimate_rehc(r_desired: &HermitianPsd, bin: usize) -> Result<ReHc, EnhanceError> {
    let m = r_desired.matrix();
    let reference = m[(0, 0)].re;
    if !(reference > 1e-14 * r_desired.trace()) {
        return Err(EnhanceError::ZeroReference);
    }
    let mut h: CVector = m.column(0).unscale(reference);
    h[0] = Complex64::new(1.0, 0.0);
    Ok(ReHc { bin, h })
}

/// Why a bin fell back to pass-through weights.
#[derive(Debug, Clone, PartialEq)]
pub enum BankFlag {
    ZeroReference,
    Degenerate(LinalgError),
}

impl BankFlag {
    pub fn reason(&self) -> String {
        match self {
            BankFlag::ZeroReference => "rehc-zero-reference".into(),
            BankFlag::Degenerate(e) => format!("degenerate-constraint: {e}"),
        }
    }
}

/// A bin's beamformer bank, or pass-through weights with the reason.
#[derive(Debug, Clone)]
pub struct BinBank {
    pub bank: BeamformerBank,
    pub flag: Option<BankFlag>,
}

/// Builds every bin's bank once; banks are frame-invariant.
pub fn build_banks(
    interference_plus_noise: &[HermitianPsd],
    rehcs: &[Result<ReHc, EnhanceError>],
    loading: f64,
) -> Vec<BinBank> {
    interference_plus_noise
        .par_iter()
        .zip(rehcs.par_iter())
        .map(|(r, rehc)| match rehc {
            Ok(rehc) => match mvdr_multi_output(r, &rehc.h, loading) {
                Ok(bank) => BinBank { bank, flag: None },
                Err(e) => BinBank {
                    bank: BeamformerBank::passthrough(r.dim()),
                    flag: Some(BankFlag::Degenerate(e)),
                },
            },
            Err(_) => BinBank {
                bank: BeamformerBank::passthrough(r.dim()),
                flag: Some(BankFlag::ZeroReference),
            },
        })
        .collect()
}

/// `d̂(t, k) = W(k)ᴴ x̃(t, k)` for every frame and bin.
pub fn apply_banks(banks: &[BinBank], x: &ShTensor) -> ShTensor {
    assert_eq!(banks.len(), x.bins());
    let mut out = ShTensor::zeros(&x.plan, x.frames);
    let frames = x.frames;
    out.bin_blocks_mut()
        .into_par_iter()
        .enumerate()
        .for_each(|(b, block)| {
            let l = x.coeff_len(b);
            for t in 0..frames {
                let y = banks[b].bank.apply(&x.coeff_vector(t, b));
                block[t * l..(t + 1) * l].copy_from_slice(y.as_slice());
            }
        });
    out
}

/// Estimates the desired SH coefficients from the mixture.
pub fn enhance(
    x: &ShTensor,
    psd: &PsdSet,
    rehcs: &[Result<ReHc, EnhanceError>],
    loading: f64,
) -> (ShTensor, Vec<BinBank>) {
    let banks = build_banks(&psd.interference_plus_noise, rehcs, loading);
    (apply_banks(&banks, x), banks)
}
