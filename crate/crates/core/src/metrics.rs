//! Sound-field evaluation at observation points inside the sweet area.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::CMatrix;
use crate::transforms::{synthesis_matrix, ShTensor, SphericalPoint};

/// dB values are clamped to `[-DB_CLAMP, DB_CLAMP]`.
pub const DB_CLAMP: f64 = 120.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("reference pressure is zero")]
    ZeroReference,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// `10 log10(num / den)` clamped to ±120 dB; `0/0` is 0 dB.
pub fn ratio_db(num: f64, den: f64) -> f64 {
    if num == 0.0 && den == 0.0 {
        return 0.0;
    }
    (10.0 * (num / den).log10()).clamp(-DB_CLAMP, DB_CLAMP)
}

/// Normalized squared error `|d − d̂|² / |d|²` in dB.
pub fn pointwise_error(d: Complex64, d_hat: Complex64) -> Result<f64, MetricError> {
    let den = d.norm_sqr();
    if den == 0.0 {
        return Err(MetricError::ZeroReference);
    }
    Ok(ratio_db((d - d_hat).norm_sqr(), den))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionMetrics {
    pub error_db: f64,
    pub sdr_db: f64,
    pub nr_db: f64,
}

fn sq_dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

fn sq_norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Region-averaged estimation error, speech-distortion ratio and noise
/// reduction over one set of observation points:
/// * `Error = ‖d − d̂‖² / ‖d‖²`
/// * `SDR = ‖d‖² / ‖d_res − d‖²`
/// * `NR = ‖v‖² / ‖v_res + u_res‖²`
pub fn region_metrics(
    true_d: &[Complex64],
    est_d: &[Complex64],
    true_v: &[Complex64],
    res_d: &[Complex64],
    res_v: &[Complex64],
    res_u: &[Complex64],
) -> Result<RegionMetrics, MetricError> {
    let n = true_d.len();
    for len in [est_d.len(), true_v.len(), res_d.len(), res_v.len(), res_u.len()] {
        if len != n {
            return Err(MetricError::DimensionMismatch { expected: n, got: len });
        }
    }
    let d2 = sq_norm(true_d);
    if d2 == 0.0 {
        return Err(MetricError::ZeroReference);
    }
    let residual_noise: f64 = res_v.iter().zip(res_u).map(|(v, u)| (v + u).norm_sqr()).sum();
    Ok(RegionMetrics {
        error_db: ratio_db(sq_dist(true_d, est_d), d2),
        sdr_db: ratio_db(d2, sq_dist(res_d, true_d)),
        nr_db: ratio_db(sq_norm(true_v), residual_noise),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    Sphere107,
    Plane441,
    Custom,
}

/// Field points in array-centred coordinates. `inside[i]` is false for points
/// beyond the sweet area; those are never evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub kind: ObservationKind,
    pub radius: f64,
    pub points: Vec<SphericalPoint>,
    pub inside: Vec<bool>,
}

impl ObservationSet {
    pub fn custom(points: Vec<SphericalPoint>, radius: f64) -> Self {
        let inside = points.iter().map(|p| p.r <= radius * (1.0 + 1e-12)).collect();
        Self {
            kind: ObservationKind::Custom,
            radius,
            points,
            inside,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points inside the sweet area.
    pub fn inside_points(&self) -> Vec<SphericalPoint> {
        self.points
            .iter()
            .zip(&self.inside)
            .filter(|(_, &i)| i)
            .map(|(p, _)| *p)
            .collect()
    }
}

/// Fibonacci spiral of `n` points on the sphere of radius `r`.
pub fn fibonacci_sphere(n: usize, r: f64) -> Vec<SphericalPoint> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            SphericalPoint {
                r,
                theta: z.clamp(-1.0, 1.0).acos(),
                phi: (golden * i as f64).rem_euclid(2.0 * PI),
            }
        })
        .collect()
}

/// Side length of the planar grid.
pub const PLANE_SIDE: usize = 21;

pub fn observation_points(kind: ObservationKind, r_s: f64) -> ObservationSet {
    match kind {
        ObservationKind::Sphere107 => ObservationSet {
            kind,
            radius: r_s,
            points: fibonacci_sphere(107, r_s),
            inside: vec![true; 107],
        },
        ObservationKind::Plane441 => {
            let step = 2.0 * r_s / (PLANE_SIDE - 1) as f64;
            // row-major, y from top (+r_s) to bottom, x from left to right
            let points: Vec<SphericalPoint> = (0..PLANE_SIDE)
                .flat_map(|row| {
                    (0..PLANE_SIDE).map(move |col| {
                        let half = (PLANE_SIDE / 2) as f64;
                        let x = (col as f64 - half) * step;
                        let y = (half - row as f64) * step;
                        SphericalPoint::from_cartesian([x, y, 0.0])
                    })
                })
                .collect();
            ObservationSet {
                inside: points.iter().map(|p| p.r <= r_s * (1.0 + 1e-12)).collect(),
                kind,
                radius: r_s,
                points,
            }
        }
        ObservationKind::Custom => ObservationSet::custom(Vec::new(), r_s),
    }
}

/// Per-bin synthesis matrices for the in-sweet-area points of `obs`.
pub struct FieldSampler {
    matrices: Vec<CMatrix>,
}

impl FieldSampler {
    pub fn new(tensor: &ShTensor, obs: &ObservationSet) -> Self {
        let pts = obs.inside_points();
        let matrices = tensor
            .plan
            .bins
            .par_iter()
            .map(|b| synthesis_matrix(b.k, b.order, &pts))
            .collect();
        Self { matrices }
    }

    /// Pressures at the in-sweet-area points for frame `t`, bin `b`.
    pub fn pressures(&self, tensor: &ShTensor, t: usize, b: usize) -> Vec<Complex64> {
        (&self.matrices[b] * tensor.coeff_vector(t, b)).as_slice().to_vec()
    }
}

/// SH tensors needed to evaluate one method. Residuals are the frozen
/// filters applied to each true component separately.
pub struct MethodFields<'a> {
    pub true_d: &'a ShTensor,
    pub true_v: &'a ShTensor,
    pub res_d: &'a ShTensor,
    pub res_v: &'a ShTensor,
    pub res_u: &'a ShTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub frame: usize,
    /// Position in the band plan.
    pub bin: usize,
    pub freq: f64,
    pub metrics: RegionMetrics,
}

/// Per-(frame, bin) metrics with flagged bins excluded from the aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    /// Band-plan positions excluded from aggregates, with reason codes.
    pub flagged: Vec<(usize, String)>,
    pub aggregate: RegionMetrics,
}

impl MetricReport {
    /// Mean of each dB metric over frames at every band bin; `None` for
    /// flagged bins.
    pub fn per_bin(&self, bins: usize) -> Vec<Option<RegionMetrics>> {
        let mut acc = vec![(0.0, 0.0, 0.0, 0usize); bins];
        let excluded = self.excluded(bins);
        for r in &self.rows {
            let a = &mut acc[r.bin];
            a.0 += r.metrics.error_db;
            a.1 += r.metrics.sdr_db;
            a.2 += r.metrics.nr_db;
            a.3 += 1;
        }
        acc.into_iter()
            .enumerate()
            .map(|(b, (e, s, n, c))| {
                (c > 0 && !excluded[b]).then(|| RegionMetrics {
                    error_db: e / c as f64,
                    sdr_db: s / c as f64,
                    nr_db: n / c as f64,
                })
            })
            .collect()
    }

    fn excluded(&self, bins: usize) -> Vec<bool> {
        let mut out = vec![false; bins];
        for (b, _) in &self.flagged {
            out[*b] = true;
        }
        out
    }
}

/// Mean of each dB metric over rows whose bin is not flagged.
pub fn aggregate(rows: &[MetricRow], flagged: &[(usize, String)]) -> RegionMetrics {
    let mut sum = (0.0, 0.0, 0.0);
    let mut count = 0usize;
    for r in rows.iter().filter(|r| !flagged.iter().any(|f| f.0 == r.bin)) {
        sum.0 += r.metrics.error_db;
        sum.1 += r.metrics.sdr_db;
        sum.2 += r.metrics.nr_db;
        count += 1;
    }
    let c = count.max(1) as f64;
    RegionMetrics {
        error_db: sum.0 / c,
        sdr_db: sum.1 / c,
        nr_db: sum.2 / c,
    }
}

/// Evaluates one method at `frames` over every band bin. Bins whose true
/// desired field vanishes on the observation set are flagged.
pub fn evaluate(
    fields: &MethodFields,
    obs: &ObservationSet,
    frames: &[usize],
    mut flagged: Vec<(usize, String)>,
) -> MetricReport {
    let sampler = FieldSampler::new(fields.true_d, obs);
    let plan = &fields.true_d.plan;
    let per_bin: Vec<Vec<Result<MetricRow, MetricError>>> = (0..plan.len())
        .into_par_iter()
        .map(|b| {
            frames
                .iter()
                .map(|&t| {
                    let p = |x: &ShTensor| sampler.pressures(x, t, b);
                    let d = p(fields.true_d);
                    let res_d = p(fields.res_d);
                    let res_v = p(fields.res_v);
                    let res_u = p(fields.res_u);
                    let est: Vec<Complex64> = res_d
                        .iter()
                        .zip(&res_v)
                        .zip(&res_u)
                        .map(|((a, b), c)| a + b + c)
                        .collect();
                    region_metrics(&d, &est, &p(fields.true_v), &res_d, &res_v, &res_u).map(|metrics| MetricRow {
                        frame: t,
                        bin: b,
                        freq: plan.bins[b].freq,
                        metrics,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for (b, results) in per_bin.into_iter().enumerate() {
        let mut zero = false;
        for r in results {
            match r {
                Ok(row) => rows.push(row),
                Err(_) => zero = true,
            }
        }
        if zero && !flagged.iter().any(|f| f.0 == b) {
            flagged.push((b, "zero-desired-field".into()));
        }
    }
    flagged.sort_by_key(|f| f.0);
    flagged.dedup_by_key(|f| f.0);
    let aggregate = aggregate(&rows, &flagged);
    MetricReport {
        rows,
        flagged,
        aggregate,
    }
}

/// The `count` frames with the highest desired-field energy, ascending.
pub fn select_frames(desired: &ShTensor, count: usize) -> Vec<usize> {
    let mut energy: Vec<(usize, f64)> = (0..desired.frames)
        .map(|t| {
            let e = (0..desired.bins())
                .map(|b| desired.coeffs(t, b).iter().map(|z| z.norm_sqr()).sum::<f64>())
                .sum();
            (t, e)
        })
        .collect();
    energy.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut out: Vec<usize> = energy.into_iter().take(count).map(|e| e.0).collect();
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pointwise_examples() {
        let d = c(0.3, -1.2);
        assert_eq!(pointwise_error(d, d), Ok(-120.0));
        assert!(pointwise_error(d, c(0.0, 0.0)).unwrap().abs() < 1e-12);
        assert!(pointwise_error(d, 2.0 * d).unwrap().abs() < 1e-12);
        assert_eq!(pointwise_error(c(0.0, 0.0), d), Err(MetricError::ZeroReference));
    }

    #[test]
    fn region_examples() {
        let d = vec![c(1.0, 0.5), c(-0.2, 0.1), c(0.0, 2.0)];
        let v = vec![c(0.1, 0.0), c(0.4, 0.4), c(-1.0, 0.0)];
        let zero = vec![c(0.0, 0.0); 3];
        let m = region_metrics(&d, &d, &v, &d, &zero, &zero).unwrap();
        assert_eq!(m.error_db, -120.0);
        assert_eq!(m.sdr_db, 120.0);
        assert_eq!(m.nr_db, 120.0);
        let m = region_metrics(&d, &d, &v, &d, &v, &zero).unwrap();
        assert_eq!(m.nr_db, 0.0);
        assert!(matches!(
            region_metrics(&d, &d[..2], &v, &d, &v, &zero),
            Err(MetricError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn region_matches_per_point_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut v = || -> Vec<Complex64> { (0..5).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect() };
        let (d, dh, vv, rd, rv, ru) = (v(), v(), v(), v(), v(), v());
        let m = region_metrics(&d, &dh, &vv, &rd, &rv, &ru).unwrap();
        let mut e = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..5 {
            e.0 += (d[i].re - dh[i].re).powi(2) + (d[i].im - dh[i].im).powi(2);
            e.1 += d[i].re * d[i].re + d[i].im * d[i].im;
            e.2 += (rd[i].re - d[i].re).powi(2) + (rd[i].im - d[i].im).powi(2);
            e.3 += vv[i].re * vv[i].re + vv[i].im * vv[i].im;
            e.4 += (rv[i].re + ru[i].re).powi(2) + (rv[i].im + ru[i].im).powi(2);
        }
        assert!((m.error_db - 10.0 * (e.0 / e.1).log10()).abs() < 1e-12);
        assert!((m.sdr_db - 10.0 * (e.1 / e.2).log10()).abs() < 1e-12);
        assert!((m.nr_db - 10.0 * (e.3 / e.4).log10()).abs() < 1e-12);
    }

    #[test]
    fn sdr_is_negated_error_when_residual_is_estimate() {
        let d = vec![c(1.0, 0.0), c(0.5, -0.5)];
        let dh = vec![c(0.9, 0.1), c(0.4, -0.3)];
        let z = vec![c(0.0, 0.0); 2];
        let m = region_metrics(&d, &dh, &z, &dh, &z, &z).unwrap();
        assert!((m.sdr_db + m.error_db).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn global_phase_invariance(seed in any::<u64>(), phase in -3.2f64..3.2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v = || -> Vec<Complex64> { (0..7).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect() };
            let fields = [v(), v(), v(), v(), v(), v()];
            let rot = Complex64::from_polar(1.0, phase);
            let rotated: Vec<Vec<Complex64>> = fields.iter().map(|f| f.iter().map(|z| z * rot).collect()).collect();
            let a = region_metrics(&fields[0], &fields[1], &fields[2], &fields[3], &fields[4], &fields[5]).unwrap();
            let b = region_metrics(&rotated[0], &rotated[1], &rotated[2], &rotated[3], &rotated[4], &rotated[5]).unwrap();
            prop_assert!((a.error_db - b.error_db).abs() < 1e-9);
            prop_assert!((a.sdr_db - b.sdr_db).abs() < 1e-9);
            prop_assert!((a.nr_db - b.nr_db).abs() < 1e-9);
        }
    }

    #[test]
    fn observation_counts() {
        let s = observation_points(ObservationKind::Sphere107, 0.042);
        assert_eq!(s.len(), 107);
        assert!(s.points.iter().all(|p| (p.r - 0.042).abs() < 1e-15));
        let p = observation_points(ObservationKind::Plane441, 0.042);
        assert_eq!(p.len(), 441);
        assert_eq!(PLANE_SIDE * PLANE_SIDE, 441);
        // corners are outside, centre and axis ends inside
        assert!(!p.inside[0] && !p.inside[440]);
        assert!(p.inside[220] && p.inside[10] && p.inside[210]);
        assert!(p.points[220].r == 0.0);
        assert_eq!(p.inside.iter().filter(|&&i| i).count(), p.inside_points().len());
    }

    #[test]
    fn sphere107_spacing_near_ideal_packing() {
        let pts = observation_points(ObservationKind::Sphere107, 1.0).points;
        let unit: Vec<[f64; 3]> = pts
            .iter()
            .map(|p| [p.theta.sin() * p.phi.cos(), p.theta.sin() * p.phi.sin(), p.theta.cos()])
            .collect();
        let mut min = f64::INFINITY;
        for i in 0..unit.len() {
            for j in i + 1..unit.len() {
                let dot: f64 = (0..3).map(|k| unit[i][k] * unit[j][k]).sum();
                min = min.min(dot.clamp(-1.0, 1.0).acos());
            }
        }
        // hexagonal packing: each point owns 4π/N steradians
        let ideal = (8.0 * PI / (3f64.sqrt() * 107.0)).sqrt();
        assert!((min / ideal - 1.0).abs() <= 0.25, "min {min} ideal {ideal}");
    }

    #[test]
    fn frame_selection_prefers_energy() {
        let plan = crate::transforms::BandPlan::new(300.0, 320.0, 1024, 16000.0, 343.0, 0.042);
        let mut t = ShTensor::zeros(&plan, 5);
        for (f, e) in [(0, 1.0), (1, 5.0), (2, 0.5), (3, 3.0), (4, 5.0)] {
            t.coeffs_mut(f, 0)[0] = c(e, 0.0);
        }
        assert_eq!(select_frames(&t, 3), vec![1, 3, 4]);
        assert_eq!(select_frames(&t, 10), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn excluding_flagged_bins_does_not_raise_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let rows: Vec<MetricRow> = (0..20)
                .map(|i| MetricRow {
                    frame: 0,
                    bin: i,
                    freq: 0.0,
                    metrics: RegionMetrics {
                        error_db: -30.0 * rng.random::<f64>(),
                        sdr_db: 0.0,
                        nr_db: 0.0,
                    },
                })
                .collect();
            // a Bessel-zero bin carries a large error
            let mut bad = rows.clone();
            bad[7].metrics.error_db = 10.0;
            let all = aggregate(&bad, &[]);
            let excl = aggregate(&bad, &[(7, "bessel-zero-regularized".into())]);
            assert!(excl.error_db <= all.error_db);
        }
    }
}
