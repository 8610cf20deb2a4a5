use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BandPlan, TfTensor, TransformError};
use crate::linalg::{CMatrix, CVector};
use crate::scene::ArrayGeometry;
use crate::specfun::{coeff_count, sph_bessel_j, sph_harmonic, SHIndex};

/// `|j_n(k r_a)|` below this marks a Bessel zero.
pub const BESSEL_ZERO_THRESHOLD: f64 = 1e-4;
/// Condition number above which a bin is rejected.
pub const ILL_CONDITIONED: f64 = 1e6;
/// Tikhonov weight relative to `‖E‖²` at Bessel-zero bins.
const TIKHONOV: f64 = 1e-8;

/// Point in array-centred spherical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalPoint {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl SphericalPoint {
    pub fn from_cartesian(p: [f64; 3]) -> Self {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let theta = if r > 0.0 { (p[2] / r).clamp(-1.0, 1.0).acos() } else { 0.0 };
        Self {
            r,
            theta,
            phi: p[1].atan2(p[0]),
        }
    }
}

/// `E[q, nm] = j_n(k r_q) Y_nm(θ_q, φ_q)`.
pub fn encoding_matrix(geometry: &ArrayGeometry, k: f64, order: u32) -> CMatrix {
    let idx: Vec<SHIndex> = SHIndex::up_to(order).collect();
    let radial: Vec<f64> = (0..=order).map(|n| sph_bessel_j(n, k * geometry.radius)).collect();
    CMatrix::from_fn(geometry.len(), idx.len(), |q, c| {
        let d = geometry.mics[q];
        sph_harmonic(idx[c], d.theta, d.phi) * radial[idx[c].n as usize]
    })
}

/// Least-squares spherical harmonic transform at one wavenumber, with the
/// radial terms folded into the system matrix.
#[derive(Debug, Clone)]
pub struct ShtOperator {
    pub k: f64,
    pub order: u32,
    /// `L × Q` solution operator.
    pinv: CMatrix,
    /// Condition number of the (possibly regularized) system.
    pub condition: f64,
    /// True when a Bessel zero forced Tikhonov regularization.
    pub regularized: bool,
}

impl ShtOperator {
    pub fn new(geometry: &ArrayGeometry, k: f64, order: u32) -> Result<Self, TransformError> {
        let needed = coeff_count(order);
        if needed > geometry.len() {
            return Err(TransformError::TooFewMics {
                order,
                needed,
                mics: geometry.len(),
            });
        }
        let e = encoding_matrix(geometry, k, order);
        let regularized =
            (0..=order).any(|n| sph_bessel_j(n, k * geometry.radius).abs() < BESSEL_ZERO_THRESHOLD);
        let svd = e.svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let sv = &svd.singular_values;
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        let lambda = if regularized { TIKHONOV * smax * smax } else { 0.0 };
        let condition = if smin + lambda <= 0.0 {
            f64::INFINITY
        } else {
            ((smax * smax + lambda) / (smin * smin + lambda)).sqrt()
        };
        if condition > ILL_CONDITIONED || !condition.is_finite() {
            return Err(TransformError::IllConditioned { k, condition });
        }
        // (EᴴE + λI)⁻¹Eᴴ = V diag(σ / (σ² + λ)) Uᴴ
        let gains = sv.map(|s| s / (s * s + lambda));
        let mut v_scaled = v_t.adjoint();
        for (c, g) in gains.iter().enumerate() {
            v_scaled.column_mut(c).scale_mut(*g);
        }
        let pinv = v_scaled * u.adjoint();
        Ok(Self {
            k,
            order,
            pinv,
            condition,
            regularized,
        })
    }

    pub fn len(&self) -> usize {
        self.pinv.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.pinv.nrows() == 0
    }

    pub fn apply(&self, pressures: &[Complex64]) -> CVector {
        &self.pinv * CVector::from_column_slice(pressures)
    }

    pub fn operator(&self) -> &CMatrix {
        &self.pinv
    }
}

/// SH coefficients of one frame of microphone pressures.
pub fn sht(
    mic_frame: &[Complex64],
    geometry: &ArrayGeometry,
    k: f64,
    order: u32,
) -> Result<CVector, TransformError> {
    if mic_frame.len() != geometry.len() {
        return Err(TransformError::DimensionMismatch {
            expected: geometry.len(),
            got: mic_frame.len(),
        });
    }
    Ok(ShtOperator::new(geometry, k, order)?.apply(mic_frame))
}

/// Pressure `Σ c_nm j_n(kr) Y_nm(θ, φ)` at each point. Points must lie within
/// `sweet_radius` of the array centre.
pub fn isht_pressure(
    coeffs: &[Complex64],
    k: f64,
    points: &[SphericalPoint],
    sweet_radius: f64,
) -> Result<Vec<Complex64>, TransformError> {
    let order = (coeffs.len() as f64).sqrt().round() as u32 - 1;
    if coeff_count(order) != coeffs.len() {
        return Err(TransformError::DimensionMismatch {
            expected: coeff_count(order),
            got: coeffs.len(),
        });
    }
    points
        .iter()
        .map(|p| {
            if p.r > sweet_radius * (1.0 + 1e-9) {
                return Err(TransformError::OutsideSweetArea {
                    r: p.r,
                    radius: sweet_radius,
                });
            }
            let radial: Vec<f64> = (0..=order).map(|n| sph_bessel_j(n, k * p.r)).collect();
            Ok(SHIndex::up_to(order)
                .zip(coeffs)
                .filter(|(idx, _)| radial[idx.n as usize] != 0.0)
                .map(|(idx, c)| c * sph_harmonic(idx, p.theta, p.phi) * radial[idx.n as usize])
                .sum())
        })
        .collect()
}

/// Synthesis matrix `P[p, nm] = j_n(k r_p) Y_nm(θ_p, φ_p)` so that pressures are
/// `P c`; reused across frames of the same bin.
pub fn synthesis_matrix(k: f64, order: u32, points: &[SphericalPoint]) -> CMatrix {
    let idx: Vec<SHIndex> = SHIndex::up_to(order).collect();
    CMatrix::from_fn(points.len(), idx.len(), |p, c| {
        let pt = points[p];
        sph_harmonic(idx[c], pt.theta, pt.phi) * sph_bessel_j(idx[c].n, k * pt.r)
    })
}

/// SH coefficients indexed `(bin, frame, nm)` with a per-bin order.
#[derive(Debug, Clone, PartialEq)]
pub struct ShTensor {
    pub frames: usize,
    pub plan: BandPlan,
    offsets: Vec<usize>,
    data: Vec<Complex64>,
}

impl ShTensor {
    pub fn zeros(plan: &BandPlan, frames: usize) -> Self {
        let mut offsets = Vec::with_capacity(plan.len() + 1);
        let mut total = 0;
        for b in &plan.bins {
            offsets.push(total);
            total += frames * coeff_count(b.order);
        }
        offsets.push(total);
        Self {
            frames,
            plan: plan.clone(),
            offsets,
            data: vec![Complex64::new(0.0, 0.0); total],
        }
    }

    pub(crate) fn from_parts(plan: BandPlan, frames: usize, data: Vec<Complex64>) -> Option<Self> {
        let mut out = Self::zeros(&plan, frames);
        (out.data.len() == data.len()).then(|| {
            out.data = data;
            out
        })
    }

    pub fn bins(&self) -> usize {
        self.plan.len()
    }

    pub fn coeff_len(&self, b: usize) -> usize {
        coeff_count(self.plan.bins[b].order)
    }

    pub fn coeffs(&self, t: usize, b: usize) -> &[Complex64] {
        let l = self.coeff_len(b);
        let o = self.offsets[b] + t * l;
        &self.data[o..o + l]
    }

    pub fn coeffs_mut(&mut self, t: usize, b: usize) -> &mut [Complex64] {
        let l = self.coeff_len(b);
        let o = self.offsets[b] + t * l;
        &mut self.data[o..o + l]
    }

    pub fn coeff_vector(&self, t: usize, b: usize) -> CVector {
        CVector::from_column_slice(self.coeffs(t, b))
    }

    /// All frames of bin `b`, frame-major.
    pub fn bin_block(&self, b: usize) -> &[Complex64] {
        &self.data[self.offsets[b]..self.offsets[b + 1]]
    }

    pub(crate) fn bin_blocks_mut(&mut self) -> Vec<&mut [Complex64]> {
        let mut out = Vec::with_capacity(self.plan.len());
        let mut rest = self.data.as_mut_slice();
        for w in self.offsets.windows(2) {
            let (head, tail) = rest.split_at_mut(w[1] - w[0]);
            out.push(head);
            rest = tail;
        }
        out
    }

    pub fn raw(&self) -> &[Complex64] {
        &self.data
    }

    /// Element-wise sum of tensors with the same plan and frame count.
    pub fn sum(parts: &[&ShTensor]) -> ShTensor {
        let mut out = ShTensor::zeros(&parts[0].plan, parts[0].frames);
        for p in parts {
            assert_eq!(p.data.len(), out.data.len());
            out.data.iter_mut().zip(&p.data).for_each(|(a, b)| *a += b);
        }
        out
    }
}

/// Per-bin SHT operators for a band plan. Bins whose operator cannot be built
/// hold the error and are transformed to zeros.
#[derive(Debug, Clone)]
pub struct ShtBank {
    pub plan: BandPlan,
    pub operators: Vec<Result<ShtOperator, TransformError>>,
}

impl ShtBank {
    pub fn new(geometry: &ArrayGeometry, plan: &BandPlan) -> Self {
        let operators = plan
            .bins
            .par_iter()
            .map(|b| ShtOperator::new(geometry, b.k, b.order))
            .collect();
        Self {
            plan: plan.clone(),
            operators,
        }
    }

    /// Bins that are either unusable or were regularized.
    pub fn flagged(&self) -> Vec<(usize, String)> {
        self.operators
            .iter()
            .enumerate()
            .filter_map(|(b, op)| match op {
                Err(e) => Some((b, format!("sht-ill-conditioned: {e}"))),
                Ok(op) if op.regularized => Some((b, "bessel-zero-regularized".to_string())),
                Ok(_) => None,
            })
            .collect()
    }

    /// Transforms every frame of every plan bin. The tensor must store all
    /// plan bins.
    pub fn transform(&self, tf: &TfTensor) -> Result<ShTensor, TransformError> {
        let positions: Vec<usize> = self
            .plan
            .bins
            .iter()
            .map(|b| {
                tf.position_of(b.index).ok_or(TransformError::DimensionMismatch {
                    expected: b.index,
                    got: tf.bin_offset,
                })
            })
            .collect::<Result<_, _>>()?;
        let mut out = ShTensor::zeros(&self.plan, tf.frames);
        out.bin_blocks_mut()
            .into_par_iter()
            .enumerate()
            .for_each(|(b, block)| {
                let Ok(op) = &self.operators[b] else { return };
                let l = op.len();
                for t in 0..tf.frames {
                    let c = op.apply(tf.at(t, positions[b]));
                    block[t * l..(t + 1) * l].copy_from_slice(c.as_slice());
                }
            });
        Ok(out)
    }
}
