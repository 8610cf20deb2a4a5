//! Beamforming-and-projection baseline.
//!
//! Stage 1 steers a single-output MVDR beamformer at the desired source's
//! direction of arrival. Stage 2 estimates the desired source's transfer
//! functions by least squares against the beamformer output, averaged over a
//! window of neighbouring bins. Stage 3 projects the beamformer output back
//! onto the microphones. The projected signals are then transformed to the SH
//! domain for comparison with the proposed method.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{mvdr_single_output, CVector, HermitianPsd, LinalgError};
use crate::scene::{sub, ArrayGeometry, Direction, Position};
use crate::transforms::{BandPlan, ShTensor, ShtBank, TfTensor, TransformError};

/// Half-width of the frequency smoothing window (9 bins in total).
pub const SMOOTHING_RADIUS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("beamformer output has no energy in the smoothing window")]
    ZeroBeamOutput,
    #[error("tensor does not store band bin {0}")]
    MissingBin(usize),
    #[error("expected {expected} per-bin entries, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Far-field steering vector `a_q = exp(i k ŝ·r_q)` for a source in direction
/// `doa`, with `r_q` relative to the array centre.
pub fn steering_from_doa(doa: Direction, geometry: &ArrayGeometry, k: f64) -> CVector {
    let u = doa.unit_vector();
    CVector::from_iterator(
        geometry.len(),
        (0..geometry.len()).map(|q| {
            let r = geometry.relative_position(q);
            Complex64::from_polar(1.0, k * (u[0] * r[0] + u[1] * r[1] + u[2] * r[2]))
        }),
    )
}

/// Direction of `source` seen from the array centre.
pub fn doa_from_positions(array_center: &Position, source: &Position) -> Direction {
    Direction::from_vector(&sub(source, array_center))
}

/// Bin positions `[lo, hi)` of the clipped smoothing window around `b`.
pub fn smoothing_window(b: usize, bins: usize) -> std::ops::Range<usize> {
    b.saturating_sub(SMOOTHING_RADIUS)..(b + SMOOTHING_RADIUS + 1).min(bins)
}

/// Frozen baseline filters for every band bin.
#[derive(Debug, Clone)]
pub struct BaselineFilters {
    /// Stage-1 beamformer per bin.
    pub w: Vec<CVector>,
    /// Stage-2 transfer-function estimate per bin.
    pub atf: Vec<CVector>,
    /// Bins where a stage failed, with the reason.
    pub flags: Vec<(usize, String)>,
}

/// Positions in `tf` of every plan bin.
fn positions(tf: &TfTensor, plan: &BandPlan) -> Result<Vec<usize>, BaselineError> {
    plan.bins
        .iter()
        .map(|b| tf.position_of(b.index).ok_or(BaselineError::MissingBin(b.index)))
        .collect()
}

/// Stage 1 for every bin. A bin whose MVDR fails falls back to the
/// delay-and-sum beamformer `a / Q`, which is also distortionless.
pub fn stage_one(
    r_vu: &[HermitianPsd],
    steering: &[CVector],
    loading: f64,
) -> (Vec<CVector>, Vec<(usize, String)>) {
    let results: Vec<Result<CVector, LinalgError>> = r_vu
        .par_iter()
        .zip(steering.par_iter())
        .map(|(r, a)| mvdr_single_output(r, a, loading))
        .collect();
    let mut flags = Vec::new();
    let w = results
        .into_iter()
        .zip(steering)
        .enumerate()
        .map(|(b, (res, a))| match res {
            Ok(w) => w,
            Err(e) => {
                flags.push((b, format!("baseline-mvdr: {e}")));
                a.unscale(a.norm_squared())
            }
        })
        .collect();
    (w, flags)
}

/// Beamformer output `ŝ(t, b) = w(b)ᴴ x(t, b)`, indexed `[b][t]`.
pub fn beam_output(x: &TfTensor, plan: &BandPlan, w: &[CVector]) -> Result<Vec<Vec<Complex64>>, BaselineError> {
    let pos = positions(x, plan)?;
    if w.len() != plan.len() {
        return Err(BaselineError::DimensionMismatch {
            expected: plan.len(),
            got: w.len(),
        });
    }
    Ok(pos
        .par_iter()
        .zip(w.par_iter())
        .map(|(&p, w)| {
            (0..x.frames)
                .map(|t| w.iter().zip(x.at(t, p)).map(|(wi, xi)| wi.conj() * xi).sum())
                .collect()
        })
        .collect())
}

/// Stage 2: least-squares transfer functions
/// `ĥ(b) = Σ_{b'∈W(b)} Σ_t x(t,b') ŝ*(t,b') / Σ_{b'∈W(b)} Σ_t |ŝ(t,b')|²`.
pub fn estimate_atf(
    x: &TfTensor,
    plan: &BandPlan,
    s_hat: &[Vec<Complex64>],
) -> Result<Vec<Result<CVector, BaselineError>>, BaselineError> {
    let pos = positions(x, plan)?;
    let q = x.channels;
    // per-bin cross terms and energies, then windowed sums
    let cross: Vec<(CVector, f64)> = pos
        .par_iter()
        .zip(s_hat.par_iter())
        .map(|(&p, s)| {
            let mut num = CVector::zeros(q);
            let mut den = 0.0;
            for (t, st) in s.iter().enumerate() {
                for (n, xv) in num.iter_mut().zip(x.at(t, p)) {
                    *n += xv * st.conj();
                }
                den += st.norm_sqr();
            }
            (num, den)
        })
        .collect();
    let scale: f64 = cross.iter().map(|c| c.1).fold(0.0, f64::max);
    Ok((0..plan.len())
        .map(|b| {
            let mut num = CVector::zeros(q);
            let mut den = 0.0;
            for (n, d) in &cross[smoothing_window(b, plan.len())] {
                num += n;
                den += d;
            }
            if !(den > 1e-300 && den > 1e-14 * scale) {
                return Err(BaselineError::ZeroBeamOutput);
            }
            Ok(num.unscale(den))
        })
        .collect())
}

/// Runs stages 1 and 2 on the mixture and freezes the filters.
pub fn baseline_filters(
    x: &TfTensor,
    plan: &BandPlan,
    r_vu: &[HermitianPsd],
    steering: &[CVector],
    loading: f64,
) -> Result<BaselineFilters, BaselineError> {
    for len in [r_vu.len(), steering.len()] {
        if len != plan.len() {
            return Err(BaselineError::DimensionMismatch {
                expected: plan.len(),
                got: len,
            });
        }
    }
    let (w, mut flags) = stage_one(r_vu, steering, loading);
    let s_hat = beam_output(x, plan, &w)?;
    let atf = estimate_atf(x, plan, &s_hat)?
        .into_iter()
        .enumerate()
        .map(|(b, h)| {
            h.unwrap_or_else(|e| {
                flags.push((b, format!("baseline-atf: {e}")));
                CVector::zeros(x.channels)
            })
        })
        .collect();
    flags.sort_by_key(|f| f.0);
    Ok(BaselineFilters { w, atf, flags })
}

/// Stage 3 with frozen filters: `d̂(t, b) = ĥ(b) · w(b)ᴴ x(t, b)`. The output
/// stores exactly the plan bins.
pub fn apply_filters(filters: &BaselineFilters, x: &TfTensor, plan: &BandPlan) -> Result<TfTensor, BaselineError> {
    let pos = positions(x, plan)?;
    let s_hat = beam_output(x, plan, &filters.w)?;
    let mut out = TfTensor {
        frames: x.frames,
        bins: plan.len(),
        bin_offset: plan.bin_range().start,
        channels: x.channels,
        frame_size: x.frame_size,
        hop: x.hop,
        sample_rate: x.sample_rate,
        data: vec![Complex64::new(0.0, 0.0); x.frames * plan.len() * x.channels],
    };
    debug_assert!(pos.windows(2).all(|w| w[1] == w[0] + 1));
    for (b, s) in s_hat.iter().enumerate() {
        for (t, st) in s.iter().enumerate() {
            for (o, h) in out.at_mut(t, b).iter_mut().zip(filters.atf[b].iter()) {
                *o = h * st;
            }
        }
    }
    Ok(out)
}

/// Full baseline on a mixture: estimated desired microphone signals plus the
/// frozen filters for component-wise residuals.
pub fn baseline_enhance(
    x: &TfTensor,
    plan: &BandPlan,
    r_vu: &[HermitianPsd],
    steering: &[CVector],
    loading: f64,
) -> Result<(TfTensor, BaselineFilters), BaselineError> {
    let filters = baseline_filters(x, plan, r_vu, steering, loading)?;
    Ok((apply_filters(&filters, x, plan)?, filters))
}

/// SH coefficients of the baseline's microphone-domain output.
pub fn baseline_to_sh(d_mic: &TfTensor, bank: &ShtBank) -> Result<ShTensor, TransformError> {
    bank.transform(d_mic)
}

/// TF-domain oracle interference-plus-noise PSD
/// `σ_s² g gᴴ + σ_u² Σw² I` per bin.
pub fn oracle_tf_psd(atf: &TfTensor, source_psd: &[f64], noise_psd: f64) -> Vec<HermitianPsd> {
    (0..atf.bins)
        .map(|b| {
            let g = CVector::from_column_slice(atf.at(0, b));
            let mut r = HermitianPsd::identity(atf.channels).scale(noise_psd);
            if source_psd[b] > 0.0 {
                r.add_outer(&g, source_psd[b]);
            }
            r
        })
        .collect()
}
