//! Spherical Bessel functions of the first kind, complex spherical harmonics
//! and the wavenumber-dependent truncation order.
//!
//! Harmonics are orthonormal over the unit sphere and carry the
//! Condon–Shortley phase, so that `conj(Y_{n,m}) = (-1)^m Y_{n,-m}`. The polar
//! angle `theta` is measured from the +z axis (`0 ..= π`), the azimuth `phi`
//! from +x towards +y.

use std::f64::consts::PI;

use num_complex::Complex64;

/// A spherical-harmonic order/mode pair `(n, m)` with `|m| <= n`.
///
/// Coefficient vectors are laid out as `(0,0), (1,-1), (1,0), (1,1), (2,-2), …`
/// so the flat position of `(n, m)` is `n² + n + m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SHIndex {
    pub n: u32,
    pub m: i32,
}

impl SHIndex {
    /// Returns `None` when `|m| > n`.
    pub fn new(n: u32, m: i32) -> Option<Self> {
        (m.unsigned_abs() <= n).then_some(Self { n, m })
    }

    pub fn flat(self) -> usize {
        let n = self.n as i64;
        (n * n + n + self.m as i64) as usize
    }

    pub fn from_flat(idx: usize) -> Self {
        let n = (idx as f64).sqrt().floor() as u32;
        // guard against rounding of the square root
        let n = if ((n + 1) * (n + 1)) as usize <= idx {
            n + 1
        } else if (n * n) as usize > idx {
            n - 1
        } else {
            n
        };
        let m = idx as i64 - (n as i64 * n as i64 + n as i64);
        Self { n, m: m as i32 }
    }

    /// All indices up to and including order `order`, in flat order.
    pub fn up_to(order: u32) -> impl Iterator<Item = SHIndex> {
        (0..=order).flat_map(|n| (-(n as i32)..=n as i32).map(move |m| SHIndex { n, m }))
    }
}

/// Number of coefficients `(N+1)²` for truncation order `N`.
pub fn coeff_count(order: u32) -> usize {
    ((order + 1) * (order + 1)) as usize
}

/// Spherical Bessel function of the first kind `j_n(x)` for `x >= 0`.
pub fn sph_bessel_j(n: u32, x: f64) -> f64 {
    debug_assert!(x >= 0.0 && x.is_finite());
    if x < 0.1 * (n as f64 + 1.0) {
        return bessel_series(n, x);
    }
    match n {
        0 => x.sin() / x,
        1 => x.sin() / (x * x) - x.cos() / x,
        2 => (3.0 / (x * x) - 1.0) * x.sin() / x - 3.0 * x.cos() / (x * x),
        _ => bessel_downward(n, x),
    }
}

/// Power series about zero; converges fast for `x` well below `n + 1`.
fn bessel_series(n: u32, x: f64) -> f64 {
    let mut lead = 1.0;
    for i in 0..n {
        lead *= x / (2 * i + 3) as f64;
    }
    // lead = x^n / (2n+1)!!
    let half_sq = -0.5 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= half_sq / (k as f64 * (2 * n + 2 * k + 1) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    lead * sum
}

/// Miller's backward recurrence normalised against the closed forms of
/// `j_0` or `j_1`, whichever is further from a zero.
fn bessel_downward(n: u32, x: f64) -> f64 {
    let start = n.max(x.ceil() as u32) + 30 + (x.sqrt() * 4.0) as u32;
    let mut upper = 0.0_f64;
    let mut current = 1e-300_f64;
    let mut wanted = 0.0;
    let mut at_one = 0.0;
    for order in (0..start).rev() {
        // j_{l-1} = (2l+1)/x · j_l − j_{l+1}
        let lower = (2 * order + 3) as f64 / x * current - upper;
        upper = current;
        current = lower;
        if current.abs() > 1e250 {
            current *= 1e-250;
            upper *= 1e-250;
            wanted *= 1e-250;
            at_one *= 1e-250;
        }
        if order == n {
            wanted = current;
        }
        if order == 1 {
            at_one = current;
        }
    }
    // `current` now holds the unnormalised j_0, `at_one` the unnormalised j_1.
    let j0 = x.sin() / x;
    let j1 = x.sin() / (x * x) - x.cos() / x;
    if j0.abs() >= j1.abs() {
        wanted * (j0 / current)
    } else {
        wanted * (j1 / at_one)
    }
}

/// Orthonormal complex spherical harmonic `Y_{nm}(theta, phi)` with the
/// Condon–Shortley phase.
pub fn sph_harmonic(idx: SHIndex, theta: f64, phi: f64) -> Complex64 {
    let m_abs = idx.m.unsigned_abs();
    let p = normalized_legendre(idx.n, m_abs, theta.cos());
    let y = Complex64::from_polar(p, m_abs as f64 * phi);
    if idx.m >= 0 {
        y
    } else if m_abs.is_multiple_of(2) {
        y.conj()
    } else {
        -y.conj()
    }
}

/// Fully normalised associated Legendre function including the
/// `sqrt((2n+1)/4π · (n-m)!/(n+m)!)` factor and Condon–Shortley phase.
fn normalized_legendre(n: u32, m: u32, x: f64) -> f64 {
    debug_assert!(m <= n);
    let s = (1.0 - x * x).max(0.0).sqrt();
    // P̄_m^m
    let mut pmm = (1.0 / (4.0 * PI)).sqrt();
    for i in 1..=m {
        pmm *= -((2 * i + 1) as f64 / (2 * i) as f64).sqrt() * s;
    }
    if n == m {
        return pmm;
    }
    let mut pm1 = x * ((2 * m + 3) as f64).sqrt() * pmm;
    if n == m + 1 {
        return pm1;
    }
    let mut pm2 = pmm;
    for l in (m + 2)..=n {
        let l_f = l as f64;
        let m_f = m as f64;
        let a = ((4.0 * l_f * l_f - 1.0) / (l_f * l_f - m_f * m_f)).sqrt();
        let b = (((l_f - 1.0).powi(2) - m_f * m_f) / (4.0 * (l_f - 1.0).powi(2) - 1.0)).sqrt();
        let next = a * (x * pm1 - b * pm2);
        pm2 = pm1;
        pm1 = next;
    }
    pm1
}

/// Truncation order `ceil(k · r_a)` for wavenumber `k` and array radius `r_a`.
pub fn max_order(k: f64, radius: f64) -> u32 {
    debug_assert!(k > 0.0 && radius > 0.0);
    (k * radius).ceil() as u32
}

/// Wavenumber `2πf/c`.
pub fn wavenumber(freq_hz: f64, c: f64) -> f64 {
    2.0 * PI * freq_hz / c
}
