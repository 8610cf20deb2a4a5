//! Hermitian linear algebra shared by the SH-domain enhancer and the
//! TF-domain baseline: diagonally loaded solves and closed-form MVDR/LCMV
//! beamformers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Diagonal loading applied when a scenario does not override it, relative to
/// the mean diagonal of the matrix being inverted.
pub const DEFAULT_LOADING: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("loaded matrix is numerically singular and cannot be factorized")]
    NotFactorizable,
    #[error("degenerate distortionless constraint (quadratic form {quad:e})")]
    DegenerateConstraint { quad: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not Hermitian (relative asymmetry {0:e})")]
    NotHermitian(f64),
}

/// A Hermitian positive-semidefinite matrix such as a PSD (covariance) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianPsd(CMatrix);

impl HermitianPsd {
    pub fn zeros(dim: usize) -> Self {
        Self(CMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim))
    }

    /// Rank-one matrix `v vᴴ`.
    pub fn outer(v: &CVector) -> Self {
        Self(v * v.adjoint())
    }

    /// Wraps `m` after checking conjugate symmetry to `1e-12` relative. The
    /// stored matrix is the exact Hermitian part of `m`.
    pub fn from_matrix(m: CMatrix) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let asym = (&m - m.adjoint()).norm();
        let scale = m.norm().max(f64::MIN_POSITIVE);
        if asym > 1e-12 * scale {
            return Err(LinalgError::NotHermitian(asym / scale));
        }
        Ok(Self::hermitian_part(m))
    }

    /// Symmetrizes without checking.
    pub(crate) fn hermitian_part(m: CMatrix) -> Self {
        Self((&m + m.adjoint()).scale(0.5))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|z| z.re).sum()
    }

    /// Adds `weight · v vᴴ` in place.
    pub fn add_outer(&mut self, v: &CVector, weight: f64) {
        let n = self.dim();
        for j in 0..n {
            let vj = v[j].conj() * weight;
            for i in 0..n {
                self.0[(i, j)] += v[i] * vj;
            }
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale(s))
    }

    pub fn add(&self, other: &HermitianPsd) -> Result<Self, LinalgError> {
        if self.dim() != other.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(Self(&self.0 + &other.0))
    }

    /// Real quadratic form `wᴴ A w`.
    pub fn quad_form(&self, w: &CVector) -> f64 {
        w.dotc(&(&self.0 * w)).re
    }

    /// Smallest eigenvalue, used to check semidefiniteness.
    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.0)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Positive semidefinite to `-1e-10 · trace / dim`.
    pub fn is_psd(&self) -> bool {
        let tol = 1e-10 * self.trace().abs() / self.dim().max(1) as f64;
        self.min_eigenvalue() >= -tol
    }
}

/// Eigenvalues of a Hermitian matrix through the real symmetric embedding
/// `[[Re, -Im], [Im, Re]]`, whose spectrum is that of `m` with every value
/// doubled.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let n = m.nrows();
    let mut big = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            big[(i, j)] = z.re;
            big[(i + n, j + n)] = z.re;
            big[(i, j + n)] = -z.im;
            big[(i + n, j)] = z.im;
        }
    }
    let mut ev: Vec<f64> = big.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev.into_iter().step_by(2).collect()
}

/// 2-norm condition number through singular values.
pub fn condition_number(m: &CMatrix) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn loaded_cholesky(a: &HermitianPsd, loading: f64) -> Result<Cholesky<Complex64, Dyn>, LinalgError> {
    let dim = a.dim();
    let mut m = a.matrix().clone();
    if loading > 0.0 && dim > 0 {
        let delta = loading * a.trace() / dim as f64;
        for i in 0..dim {
            m[(i, i)] += delta;
        }
    }
    let chol = Cholesky::new(m).ok_or(LinalgError::NotFactorizable)?;
    // Cholesky::new accepts tiny positive pivots; reject those that cannot
    // carry a meaningful solve.
    let diag = chol.l_dirty().diagonal();
    let max = diag.iter().map(|z| z.re).fold(0.0, f64::max);
    let min = diag.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || min < 1e-8 * max || !min.is_finite() {
        return Err(LinalgError::NotFactorizable);
    }
    Ok(chol)
}

/// Solves `(A + loading · trace(A)/dim · I) X = B` through a Cholesky factor.
pub fn loaded_hermitian_solve(
    a: &HermitianPsd,
    b: &CMatrix,
    loading: f64,
) -> Result<CMatrix, LinalgError> {
    if b.nrows() != a.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.dim(),
            got: b.nrows(),
        });
    }
    let chol = loaded_cholesky(a, loading)?;
    Ok(chol.solve(b))
}

/// `L` beamformers stored as the columns of an `L × L` matrix; column `i`
/// produces output coefficient `i` as `wᵢᴴ x`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerBank {
    weights: CMatrix,
}

impl BeamformerBank {
    pub fn passthrough(len: usize) -> Self {
        Self {
            weights: CMatrix::identity(len, len),
        }
    }

    pub fn from_weights(weights: CMatrix) -> Self {
        Self { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.ncols() == 0
    }

    pub fn weights(&self) -> &CMatrix {
        &self.weights
    }

    pub fn column(&self, i: usize) -> CVector {
        self.weights.column(i).into_owned()
    }

    /// All outputs at once: `Wᴴ x`.
    pub fn apply(&self, x: &CVector) -> CVector {
        self.weights.ad_mul(x)
    }
}

/// Multi-output MVDR: for every coefficient `(n, m)` minimizes `wᴴ R w`
/// subject to `wᴴ h = h_nm`.
///
/// The stacked cost over all outputs has block-diagonal noise and constraint
/// matrices with identical blocks, so it separates into one small problem per
/// output. Every column is the same direction `R⁻¹h / (hᴴR⁻¹h)` scaled by
/// `conj(h_nm)`.
pub fn mvdr_multi_output(
    r: &HermitianPsd,
    h: &CVector,
    loading: f64,
) -> Result<BeamformerBank, LinalgError> {
    let (direction, _) = distortionless_direction(r, h, loading)?;
    let len = h.len();
    let mut w = CMatrix::zeros(len, len);
    for (col, target) in h.iter().enumerate() {
        w.set_column(col, &direction.map(|z| z * target.conj()));
    }
    Ok(BeamformerBank { weights: w })
}

/// Single-output MVDR `w = R⁻¹a / (aᴴR⁻¹a)`, so that `wᴴa = 1`.
pub fn mvdr_single_output(
    r: &HermitianPsd,
    steering: &CVector,
    loading: f64,
) -> Result<CVector, LinalgError> {
    distortionless_direction(r, steering, loading).map(|(w, _)| w)
}

/// Returns `R⁻¹h / (hᴴR⁻¹h)` and the quadratic form `hᴴR⁻¹h`.
fn distortionless_direction(
    r: &HermitianPsd,
    h: &CVector,
    loading: f64,
) -> Result<(CVector, f64), LinalgError> {
    if h.len() != r.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: r.dim(),
            got: h.len(),
        });
    }
    let chol = loaded_cholesky(r, loading)?;
    let rinv_h = chol.solve(h);
    let quad = h.dotc(&rinv_h).re;
    // ‖R⁻¹‖₂ ≤ ‖L⁻¹‖_F² for R = L Lᴴ
    let inv_norm = chol
        .l()
        .solve_lower_triangular(&CMatrix::identity(h.len(), h.len()))
        .map(|li| li.norm_squared())
        .unwrap_or(f64::INFINITY);
    let h_sq = h.norm_squared();
    if !(quad > 1e-14 * h_sq * inv_norm) || !quad.is_finite() {
        return Err(LinalgError::DegenerateConstraint { quad });
    }
    Ok((rinv_h.unscale(quad), quad))
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_cmatrix(&mut rng, 4, 2);
        let x = loaded_hermitian_solve(&HermitianPsd::identity(4), &b, 0.0).unwrap();
        assert!(rel_err(&x, &b) < 1e-15);
    }

    #[test]
    fn diagonal_solve() {
        let a = HermitianPsd::identity(2).scale(2.0);
        let x = loaded_hermitian_solve(&a, &CMatrix::identity(2, 2), 0.0).unwrap();
        assert!(rel_err(&x, &CMatrix::identity(2, 2).scale(0.5)) < 1e-15);
    }

    #[test]
    fn loaded_solve_matches_refined_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            // rank-deficient PSD made solvable by loading
            let g = random_cmatrix(&mut rng, 8, 5);
            let a = HermitianPsd::hermitian_part(&g * g.adjoint());
            let b = random_cmatrix(&mut rng, 8, 3);
            let loading = 1e-6;
            let x = loaded_hermitian_solve(&a, &b, loading).unwrap();
            let mut loaded = a.matrix().clone();
            let delta = loading * a.trace() / 8.0;
            for i in 0..8 {
                loaded[(i, i)] += delta;
            }
            let oracle = refined_lu_solve(&loaded, &b);
            assert!(rel_err(&x, &oracle) <= 1e-8, "{}", rel_err(&x, &oracle));
        }
    }

    #[test]
    fn singular_without_loading_fails() {
        let v = CVector::from_element(3, Complex64::new(1.0, 0.5));
        let a = HermitianPsd::outer(&v);
        let b = CMatrix::identity(3, 3);
        assert_eq!(
            loaded_hermitian_solve(&a, &b, 0.0),
            Err(LinalgError::NotFactorizable)
        );
        assert_eq!(
            loaded_hermitian_solve(&HermitianPsd::zeros(3), &b, 1e-3),
            Err(LinalgError::NotFactorizable)
        );
        assert!(loaded_hermitian_solve(&a, &b, 1e-3).is_ok());
    }

    #[test]
    fn from_matrix_rejects_asymmetry() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = Complex64::new(0.0, 1.0);
        assert!(matches!(
            HermitianPsd::from_matrix(m),
            Err(LinalgError::NotHermitian(_))
        ));
    }

    #[test]
    fn multi_output_identity_first_unit() {
        let mut h = CVector::zeros(4);
        h[0] = Complex64::new(1.0, 0.0);
        let bank = mvdr_multi_output(&HermitianPsd::identity(4), &h, 0.0).unwrap();
        let mut want = CMatrix::zeros(4, 4);
        want[(0, 0)] = Complex64::new(1.0, 0.0);
        assert!((bank.weights() - want).norm() < 1e-15);
    }

    #[test]
    fn multi_output_identity_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut h = random_cvector(&mut rng, 9);
        h[0] = Complex64::new(1.0, 0.0);
        let bank = mvdr_multi_output(&HermitianPsd::identity(9), &h, 0.0).unwrap();
        let hn = h.norm_squared();
        for (col, target) in h.iter().enumerate() {
            let want = h.map(|z| z * target.conj() / hn);
            assert!((bank.column(col) - want).norm() < 1e-13);
            let resp = bank.column(col).dotc(&h);
            assert!((resp - target).norm() < 1e-13);
        }
    }

    #[test]
    fn multi_output_matches_stacked_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &len in &[4usize, 9, 16] {
            for _ in 0..5 {
                let r = random_pd(&mut rng, len);
                let mut h = random_cvector(&mut rng, len);
                h[0] = Complex64::new(1.0, 0.0);
                let bank = mvdr_multi_output(&r, &h, 0.0).unwrap();
                let oracle = stacked_kkt_solution(r.matrix(), &h);
                assert!(rel_err(bank.weights(), &oracle) < 1e-8);
            }
        }
    }

    #[test]
    fn multi_output_is_first_order_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = random_pd(&mut rng, 9);
        let mut h = random_cvector(&mut rng, 9);
        h[0] = Complex64::new(1.0, 0.0);
        let bank = mvdr_multi_output(&r, &h, 0.0).unwrap();
        for col in 0..9 {
            let w = bank.column(col);
            let base = r.quad_form(&w);
            for _ in 0..20 {
                // project a random perturbation onto the constraint null space
                let d = random_cvector(&mut rng, 9);
                let d = &d - h.scale(1.0 / h.norm_squared()) * h.dotc(&d);
                assert!(d.dotc(&h).norm() < 1e-12);
                let moved = &w + d.scale(1e-3);
                assert!(r.quad_form(&moved) >= base - 1e-10);
            }
        }
    }

    #[test]
    fn single_output_identity_and_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_cvector(&mut rng, 8);
        let w = mvdr_single_output(&HermitianPsd::identity(8), &a, 0.0).unwrap();
        assert!((&w - a.unscale(a.norm_squared())).norm() < 1e-14);
        let r = random_pd(&mut rng, 8);
        let w = mvdr_single_output(&r, &a, 0.0).unwrap();
        assert!((w.dotc(&a) - Complex64::new(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn single_output_matches_lagrangian_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let r = random_pd(&mut rng, 8);
            let a = random_cvector(&mut rng, 8);
            let w = mvdr_single_output(&r, &a, 0.0).unwrap();
            // [R  -a; aᴴ 0] [w; λ] = [0; 1]
            let mut kkt = CMatrix::zeros(9, 9);
            kkt.view_mut((0, 0), (8, 8)).copy_from(r.matrix());
            for i in 0..8 {
                kkt[(i, 8)] = -a[i];
                kkt[(8, i)] = a[i].conj();
            }
            let mut rhs = CMatrix::zeros(9, 1);
            rhs[(8, 0)] = Complex64::new(1.0, 0.0);
            let sol = refined_lu_solve(&kkt, &rhs);
            let oracle = CVector::from_fn(8, |i, _| sol[(i, 0)]);
            assert!((&w - &oracle).norm() / oracle.norm() < 1e-8);
        }
    }

    #[test]
    fn zero_constraint_is_degenerate() {
        let h = CVector::zeros(4);
        assert!(matches!(
            mvdr_multi_output(&HermitianPsd::identity(4), &h, 0.0),
            Err(LinalgError::DegenerateConstraint { .. })
        ));
    }

    #[test]
    fn eigenvalues_of_outer_product() {
        let v = CVector::from_vec(vec![
            Complex64::new(1.0, 1.0),
            Complex64::new(0.0, 2.0),
            Complex64::new(-1.0, 0.0),
        ]);
        let ev = hermitian_eigenvalues(HermitianPsd::outer(&v).matrix());
        assert!((ev[2] - v.norm_squared()).abs() < 1e-12);
        assert!(ev[0].abs() < 1e-12 && ev[1].abs() < 1e-12);
        assert!(HermitianPsd::outer(&v).is_psd());
    }
}
