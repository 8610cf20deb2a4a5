//! End-to-end experiments: scene simulation, analysis, both enhancement
//! methods and evaluation.

use std::f64::consts::PI;
use std::path::PathBuf;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{self, doa_from_positions, steering_from_doa, BaselineError};
use crate::enhancer::{self, estimate_psd_per_bin, estimate_rehc, EnhanceError, PsdSet};
use crate::linalg::{CVector, DEFAULT_LOADING};
use crate::metrics::{self, MethodFields, MetricReport, ObservationKind, ObservationSet};
use crate::scene::{
    self, dry_signal, interference_gain, noise_variance, sensor_noise, ArrayGeometry, ComponentSignals, SceneConfig,
    SceneError, SceneRirs, SignalSource,
};
use crate::signals::{fft_convolve_many, mean_power, scale_to_power};
use crate::transforms::{
    frequency_response, hann_periodic, istft, stft, BandPlan, ShTensor, ShtBank, TfTensor, TransformError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Enhance(#[from] EnhanceError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Multi-output MVDR with ReHCs estimated from a desired-only speech
    /// segment.
    Proposed,
    /// Same, with ReHCs estimated from a white-noise segment.
    ProposedAccurateRehc,
    Baseline,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::ProposedAccurateRehc => "proposed-accurate-rehc",
            Method::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodSelection {
    Proposed,
    ProposedAccurateRehc,
    Baseline,
    /// Proposed and baseline.
    Both,
    All,
}

impl MethodSelection {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodSelection::Proposed => vec![Method::Proposed],
            MethodSelection::ProposedAccurateRehc => vec![Method::ProposedAccurateRehc],
            MethodSelection::Baseline => vec![Method::Baseline],
            MethodSelection::Both => vec![Method::Proposed, Method::Baseline],
            MethodSelection::All => vec![Method::Proposed, Method::ProposedAccurateRehc, Method::Baseline],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    T60(Vec<f64>),
    Snr(Vec<f64>),
}

impl Sweep {
    pub fn values(&self) -> &[f64] {
        match self {
            Sweep::T60(v) | Sweep::Snr(v) => v,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Sweep::T60(_) => "t60_s",
            Sweep::Snr(_) => "snr_db",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub f_low: f64,
    pub f_high: f64,
}

impl Default for BandSpec {
    fn default() -> Self {
        Self {
            f_low: 300.0,
            f_high: 3400.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameSelection {
    /// Frames with the highest desired-field energy in the band.
    HighestDesiredEnergy,
    /// The first frames of the mixture.
    First,
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scene: SceneConfig,
    #[serde(default = "default_method")]
    pub method: MethodSelection,
    #[serde(default)]
    pub band: BandSpec,
    #[serde(default = "default_frame_size")]
    pub frame_size: usize,
    #[serde(default = "default_hop")]
    pub hop: usize,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default = "default_metric_frames")]
    pub frames_for_metrics: usize,
    #[serde(default = "default_frame_selection")]
    pub frame_selection: FrameSelection,
    /// Length of the desired-only segment used to estimate ReHCs.
    #[serde(default = "default_estimation")]
    pub estimation_duration_s: f64,
    /// Diagonal loading relative to the mean diagonal of each PSD matrix.
    #[serde(default = "default_loading")]
    pub loading: f64,
    #[serde(default = "default_observation")]
    pub observation: ObservationKind,
    /// Custom observation points (array-centred, metres) for
    /// `observation: custom`.
    #[serde(default)]
    pub custom_points: Vec<[f64; 3]>,
    /// Sweet-area radius; defaults to the array radius.
    #[serde(default)]
    pub sweet_radius: Option<f64>,
    /// Extra directories searched for dry-signal files.
    #[serde(default)]
    pub data_dirs: Vec<PathBuf>,
}

fn default_method() -> MethodSelection {
    MethodSelection::Both
}
fn default_frame_size() -> usize {
    16384
}
fn default_hop() -> usize {
    4096
}
fn default_metric_frames() -> usize {
    15
}
fn default_frame_selection() -> FrameSelection {
    FrameSelection::HighestDesiredEnergy
}
fn default_estimation() -> f64 {
    3.0
}
fn default_loading() -> f64 {
    DEFAULT_LOADING
}
fn default_observation() -> ObservationKind {
    ObservationKind::Sphere107
}

impl ExperimentSpec {
    /// The reference two-source scene with proposed and baseline methods.
    pub fn paper_default() -> Self {
        Self {
            scene: SceneConfig::paper_default(),
            method: default_method(),
            band: BandSpec::default(),
            frame_size: default_frame_size(),
            hop: default_hop(),
            sweep: None,
            frames_for_metrics: default_metric_frames(),
            frame_selection: default_frame_selection(),
            estimation_duration_s: default_estimation(),
            loading: default_loading(),
            observation: default_observation(),
            custom_points: Vec::new(),
            sweet_radius: None,
            data_dirs: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Invalid(m.into()));
        if self.frame_size < 2 || self.hop == 0 || self.hop > self.frame_size {
            return bad("need frame_size ≥ 2 and 0 < hop ≤ frame_size");
        }
        if !(self.band.f_low > 0.0 && self.band.f_high > self.band.f_low) {
            return bad("band needs 0 < f_low < f_high");
        }
        if self.band.f_high > self.scene.sample_rate / 2.0 {
            return bad("band exceeds the Nyquist frequency");
        }
        if self.frames_for_metrics == 0 {
            return bad("frames_for_metrics must be positive");
        }
        if !(self.estimation_duration_s > 0.0) {
            return bad("estimation_duration_s must be positive");
        }
        if !(self.loading >= 0.0) || !self.loading.is_finite() {
            return bad("loading must be finite and non-negative");
        }
        if let Some(r) = self.sweet_radius {
            if !(r > 0.0) {
                return bad("sweet_radius must be positive");
            }
        }
        if let Some(s) = &self.sweep {
            if s.values().is_empty() {
                return bad("sweep needs at least one value");
            }
            if s.values().iter().any(|v| !v.is_finite()) {
                return bad("sweep values must be finite");
            }
        }
        if self.observation == ObservationKind::Custom && self.custom_points.is_empty() {
            return bad("observation `custom` needs custom_points");
        }
        let geometry = self.scene.array.resolve()?;
        for scene in self.scenes() {
            scene.validate(&geometry)?;
            let len = scene.samples();
            if len < self.frame_size || (self.estimation_duration_s * scene.sample_rate) < self.frame_size as f64 {
                return bad("signals must be at least one frame long");
            }
        }
        Ok(())
    }

    /// One scene per sweep value, or the base scene.
    pub fn scenes(&self) -> Vec<SceneConfig> {
        match &self.sweep {
            None => vec![self.scene.clone()],
            Some(Sweep::T60(v)) => v
                .iter()
                .map(|&t60| {
                    let mut s = self.scene.clone();
                    s.room.t60 = t60;
                    s
                })
                .collect(),
            Some(Sweep::Snr(v)) => v
                .iter()
                .map(|&snr| {
                    let mut s = self.scene.clone();
                    s.snr_db = snr;
                    s
                })
                .collect(),
        }
    }

    pub fn plan(&self, scene: &SceneConfig, geometry: &ArrayGeometry) -> BandPlan {
        BandPlan::new(
            self.band.f_low,
            self.band.f_high,
            self.frame_size,
            scene.sample_rate,
            scene.room.c,
            geometry.radius,
        )
    }

    pub fn observation_set(&self, geometry: &ArrayGeometry) -> ObservationSet {
        let r_s = self.sweet_radius.unwrap_or(geometry.radius);
        match self.observation {
            ObservationKind::Custom => ObservationSet::custom(
                self.custom_points
                    .iter()
                    .map(|&p| crate::transforms::SphericalPoint::from_cartesian(p))
                    .collect(),
                r_s,
            ),
            kind => metrics::observation_points(kind, r_s),
        }
    }
}

/// RNG streams of the dry sources.
const MIXTURE_STREAM: u64 = 0;
const ESTIMATION_STREAM: u64 = 1;
/// Sensor-noise stream base of the estimation segment.
const ESTIMATION_NOISE_BASE: u64 = 1 << 16;

/// SH components of the three fields of one recording.
#[derive(Debug, Clone)]
pub struct ShComponents {
    pub desired: ShTensor,
    pub interference: ShTensor,
    pub noise: ShTensor,
}

impl ShComponents {
    pub fn mixture(&self) -> ShTensor {
        ShTensor::sum(&[&self.desired, &self.interference, &self.noise])
    }
}

#[derive(Debug, Clone)]
pub struct TfComponents {
    pub desired: TfTensor,
    pub interference: TfTensor,
    pub noise: TfTensor,
}

impl TfComponents {
    pub fn mixture(&self) -> TfTensor {
        TfTensor::sum(&[&self.desired, &self.interference, &self.noise])
    }
}

/// A simulated scene analysed into the TF and SH domains, shared by every
/// method.
pub struct Prepared {
    pub spec: ExperimentSpec,
    pub scene: SceneConfig,
    pub geometry: ArrayGeometry,
    pub plan: BandPlan,
    pub sht: ShtBank,
    pub rirs: SceneRirs,
    pub signals: ComponentSignals,
    pub tf: TfComponents,
    pub sh: ShComponents,
    /// Interference source PSD per band bin (windowed STFT scaling).
    pub interference_psd: Vec<f64>,
    /// Interference transfer functions at the band bins.
    pub interference_atf: TfTensor,
    pub noise_variance: f64,
    pub dry_desired: Vec<f64>,
}

impl Prepared {
    /// Simulates and analyses `scene`, reusing `rirs` when given.
    pub fn new(spec: &ExperimentSpec, scene: &SceneConfig, rirs: Option<SceneRirs>) -> Result<Self, PipelineError> {
        let geometry = scene.array.resolve()?;
        scene.validate(&geometry)?;
        let plan = spec.plan(scene, &geometry);
        if plan.is_empty() {
            return Err(PipelineError::Invalid("band contains no STFT bins".into()));
        }
        let rirs = match rirs {
            Some(r) => r,
            None => SceneRirs::simulate(scene, &geometry)?,
        };
        let len = scene.samples();
        let fs = scene.sample_rate;
        let dry_desired = dry_signal(&scene.desired.signal, len, fs, scene.seed, MIXTURE_STREAM, &spec.data_dirs)?;
        let dry_interference = dry_signal(
            &scene.interference.signal,
            len,
            fs,
            scene.seed.wrapping_add(1),
            MIXTURE_STREAM,
            &spec.data_dirs,
        )?;
        let signals = scene::synthesize_with_rirs(scene, &rirs, &dry_desired, &dry_interference)?;
        let sigma_u = noise_variance(&signals.desired, scene.ssnr_db);

        let range = plan.bin_range();
        let analyse = |x: &Vec<Vec<f64>>| stft(x, spec.frame_size, spec.hop, fs, Some(range.clone()));
        let tf = TfComponents {
            desired: analyse(&signals.desired)?,
            interference: analyse(&signals.interference)?,
            noise: analyse(&signals.noise)?,
        };
        let sht = ShtBank::new(&geometry, &plan);
        let sh = ShComponents {
            desired: sht.transform(&tf.desired)?,
            interference: sht.transform(&tf.interference)?,
            noise: sht.transform(&tf.noise)?,
        };

        let gain = interference_gain(&dry_desired, &dry_interference, scene.snr_db);
        let scaled: Vec<f64> = dry_interference.iter().map(|v| v * gain).collect();
        let interference_psd = source_psd(&scaled, spec.frame_size, spec.hop, fs, range.clone())?;
        let interference_atf = frequency_response(&rirs.interference, spec.frame_size, fs, range);

        Ok(Self {
            spec: spec.clone(),
            scene: scene.clone(),
            geometry,
            plan,
            sht,
            rirs,
            signals,
            tf,
            sh,
            interference_psd,
            interference_atf,
            noise_variance: sigma_u,
            dry_desired,
        })
    }

    /// SH tensor of a desired-only recording (plus sensor noise) used to
    /// estimate ReHCs. `accurate` replaces the dry desired signal by white
    /// noise of equal power.
    pub fn estimation_segment(&self, accurate: bool) -> Result<ShTensor, PipelineError> {
        let fs = self.scene.sample_rate;
        let len = (self.spec.estimation_duration_s * fs).round() as usize;
        let source = if accurate {
            SignalSource::WhiteNoise
        } else {
            self.scene.desired.signal.clone()
        };
        let mut dry = dry_signal(&source, len, fs, self.scene.seed, ESTIMATION_STREAM, &self.spec.data_dirs)?;
        if accurate {
            scale_to_power(&mut dry, mean_power(&self.dry_desired));
        }
        let mut mics = fft_convolve_many(&dry, &self.rirs.desired, len);
        let noise = sensor_noise(
            mics.len(),
            len,
            self.noise_variance,
            self.scene.seed,
            ESTIMATION_NOISE_BASE,
        );
        for (m, u) in mics.iter_mut().zip(&noise) {
            m.iter_mut().zip(u).for_each(|(a, b)| *a += b);
        }
        let tf = stft(&mics, self.spec.frame_size, self.spec.hop, fs, Some(self.plan.bin_range()))?;
        Ok(self.sht.transform(&tf)?)
    }

    /// SH-domain interference and noise PSDs with the desired-only estimate.
    pub fn sh_psds(&self, estimation: &ShTensor) -> Result<PsdSet, PipelineError> {
        let g = self.sht.transform(&self.interference_atf)?;
        let g: Vec<CVector> = (0..g.bins()).map(|b| g.coeff_vector(0, b)).collect();
        let interference = enhancer::oracle_interference_psd(&g, &self.interference_psd);
        let all: Vec<usize> = (0..self.sh.noise.frames).collect();
        let noise = estimate_psd_per_bin(&self.sh.noise, &all)?;
        let est_frames: Vec<usize> = (0..estimation.frames).collect();
        let desired = estimate_psd_per_bin(estimation, &est_frames)?;
        Ok(PsdSet::new(interference, noise, desired)?)
    }

    /// Frames used for metrics.
    pub fn metric_frames(&self) -> Vec<usize> {
        let n = self.spec.frames_for_metrics.min(self.sh.desired.frames);
        match self.spec.frame_selection {
            FrameSelection::HighestDesiredEnergy => metrics::select_frames(&self.sh.desired, n),
            FrameSelection::First => (0..n).collect(),
        }
    }

    /// Bins whose SHT is unusable or regularized.
    pub fn sht_flags(&self) -> Vec<(usize, String)> {
        self.sht.flagged()
    }

    pub fn run_method(&self, method: Method) -> Result<MethodOutput, PipelineError> {
        match method {
            Method::Proposed => self.run_proposed(false),
            Method::ProposedAccurateRehc => self.run_proposed(true),
            Method::Baseline => self.run_baseline(),
        }
    }

    fn run_proposed(&self, accurate: bool) -> Result<MethodOutput, PipelineError> {
        let method = if accurate {
            Method::ProposedAccurateRehc
        } else {
            Method::Proposed
        };
        let estimation = self.estimation_segment(accurate)?;
        let psd = self.sh_psds(&estimation)?;
        let rehcs: Vec<_> = psd
            .desired_plus_noise
            .iter()
            .enumerate()
            .map(|(b, r)| estimate_rehc(r, b))
            .collect();
        let banks = enhancer::build_banks(&psd.interference_plus_noise, &rehcs, self.spec.loading);
        let mut flags = self.sht_flags();
        for (b, bank) in banks.iter().enumerate() {
            if let Some(f) = &bank.flag {
                flags.push((b, f.reason()));
            }
        }
        flags.sort_by_key(|f| f.0);
        let conditions = psd
            .interference_plus_noise
            .iter()
            .map(|r| crate::linalg::condition_number(r.matrix()))
            .collect();
        Ok(MethodOutput {
            method,
            res_d: enhancer::apply_banks(&banks, &self.sh.desired),
            res_v: enhancer::apply_banks(&banks, &self.sh.interference),
            res_u: enhancer::apply_banks(&banks, &self.sh.noise),
            flags,
            psd_condition: conditions,
        })
    }

    fn run_baseline(&self) -> Result<MethodOutput, PipelineError> {
        let doa = doa_from_positions(&self.geometry.center, &self.scene.desired.position);
        let steering: Vec<CVector> = self
            .plan
            .bins
            .iter()
            .map(|b| steering_from_doa(doa, &self.geometry, b.k))
            .collect();
        let wsq: f64 = hann_periodic(self.spec.frame_size).iter().map(|w| w * w).sum();
        let r_vu = baseline::oracle_tf_psd(&self.interference_atf, &self.interference_psd, self.noise_variance * wsq);
        let mixture = self.tf.mixture();
        let filters = baseline::baseline_filters(&mixture, &self.plan, &r_vu, &steering, self.spec.loading)?;
        drop(mixture);
        let to_sh = |x: &TfTensor| -> Result<ShTensor, PipelineError> {
            let d = baseline::apply_filters(&filters, x, &self.plan)?;
            Ok(baseline::baseline_to_sh(&d, &self.sht)?)
        };
        let mut flags = self.sht_flags();
        flags.extend(filters.flags.iter().cloned());
        flags.sort_by_key(|f| f.0);
        let conditions = r_vu
            .par_iter()
            .map(|r| crate::linalg::condition_number(r.matrix()))
            .collect();
        Ok(MethodOutput {
            method: Method::Baseline,
            res_d: to_sh(&self.tf.desired)?,
            res_v: to_sh(&self.tf.interference)?,
            res_u: to_sh(&self.tf.noise)?,
            flags,
            psd_condition: conditions,
        })
    }

    pub fn evaluate(&self, output: &MethodOutput, obs: &ObservationSet, frames: &[usize]) -> MetricReport {
        metrics::evaluate(
            &MethodFields {
                true_d: &self.sh.desired,
                true_v: &self.sh.interference,
                res_d: &output.res_d,
                res_v: &output.res_v,
                res_u: &output.res_u,
            },
            obs,
            frames,
            output.flags.clone(),
        )
    }
}

/// Mean over frames of `|STFT|²` of a single signal at `bins`.
pub fn source_psd(
    signal: &[f64],
    frame_size: usize,
    hop: usize,
    sample_rate: f64,
    bins: std::ops::Range<usize>,
) -> Result<Vec<f64>, TransformError> {
    let tf = stft(&vec![signal.to_vec()], frame_size, hop, sample_rate, Some(bins))?;
    Ok((0..tf.bins)
        .map(|b| (0..tf.frames).map(|t| tf.at(t, b)[0].norm_sqr()).sum::<f64>() / tf.frames as f64)
        .collect())
}

/// A method's filters applied to each true SH component separately. By
/// linearity the estimate is the sum of the three.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub method: Method,
    pub res_d: ShTensor,
    pub res_v: ShTensor,
    pub res_u: ShTensor,
    /// Band-plan positions with reason codes.
    pub flags: Vec<(usize, String)>,
    /// Condition number of the interference-plus-noise PSD per bin.
    pub psd_condition: Vec<f64>,
}

impl MethodOutput {
    pub fn estimate(&self) -> ShTensor {
        ShTensor::sum(&[&self.res_d, &self.res_v, &self.res_u])
    }
}

/// Omnidirectional pressure at the array centre, resynthesized to the time
/// domain from the band-limited order-0 coefficients.
pub fn centre_signal(sh: &ShTensor, hop: usize) -> Vec<f64> {
    let plan = &sh.plan;
    let y00 = 1.0 / (4.0 * PI).sqrt();
    let mut tf = TfTensor {
        frames: sh.frames,
        bins: plan.len(),
        bin_offset: plan.bin_range().start,
        channels: 1,
        frame_size: plan.frame_size,
        hop,
        sample_rate: plan.sample_rate,
        data: vec![Complex64::new(0.0, 0.0); sh.frames * plan.len()],
    };
    for b in 0..plan.len() {
        for t in 0..sh.frames {
            tf.at_mut(t, b)[0] = sh.coeffs(t, b)[0] * y00;
        }
    }
    istft(&tf).remove(0)
}

/// Metrics of every requested method on one scene.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub scene: SceneConfig,
    pub frames: Vec<usize>,
    pub reports: Vec<(Method, MetricReport)>,
}

impl ScenarioResult {
    pub fn report(&self, method: Method) -> Option<&MetricReport> {
        self.reports.iter().find(|r| r.0 == method).map(|r| &r.1)
    }
}

/// Runs `methods` on a prepared scene.
pub fn evaluate_methods(
    prepared: &Prepared,
    methods: &[Method],
) -> Result<(ScenarioResult, Vec<MethodOutput>), PipelineError> {
    let obs = prepared.spec.observation_set(&prepared.geometry);
    let frames = prepared.metric_frames();
    let mut reports = Vec::new();
    let mut outputs = Vec::new();
    for &m in methods {
        let out = prepared.run_method(m)?;
        reports.push((m, prepared.evaluate(&out, &obs, &frames)));
        outputs.push(out);
    }
    Ok((
        ScenarioResult {
            scene: prepared.scene.clone(),
            frames,
            reports,
        },
        outputs,
    ))
}

/// Runs every scene of `spec` (one per sweep value). RIRs are shared between
/// scenes that differ only in SNR.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ScenarioResult>, PipelineError> {
    spec.validate()?;
    let methods = spec.method.methods();
    let mut cached: Option<(f64, SceneRirs)> = None;
    let mut out = Vec::new();
    for scene in spec.scenes() {
        let rirs = cached.take().filter(|(t60, _)| *t60 == scene.room.t60).map(|c| c.1);
        let prepared = Prepared::new(spec, &scene, rirs)?;
        let (result, _) = evaluate_methods(&prepared, &methods)?;
        cached = Some((scene.room.t60, prepared.rirs));
        out.push(result);
    }
    Ok(out)
}

/// Pressures on the 21 × 21 plane at one frame and bin for the six panels of
/// the field comparison: mixture, true desired, proposed estimate and error,
/// baseline estimate and error. Points outside the sweet area are `None`.
#[derive(Debug, Clone)]
pub struct PlaneFields {
    pub bin: usize,
    pub freq: f64,
    pub frame: usize,
    pub obs: ObservationSet,
    pub mixture: Vec<Option<Complex64>>,
    pub desired: Vec<Option<Complex64>>,
    pub proposed: Vec<Option<Complex64>>,
    pub baseline: Vec<Option<Complex64>>,
}

impl PlaneFields {
    /// Pointwise error (dB) of an estimate; `None` outside the sweet area.
    pub fn error_db(&self, estimate: &[Option<Complex64>]) -> Vec<Option<f64>> {
        self.desired
            .iter()
            .zip(estimate)
            .map(|(d, e)| match (d, e) {
                (Some(d), Some(e)) => metrics::pointwise_error(*d, *e).ok(),
                _ => None,
            })
            .collect()
    }

    /// Mean of the pointwise errors over in-disc points.
    pub fn mean_error_db(&self, estimate: &[Option<Complex64>]) -> f64 {
        let e: Vec<f64> = self.error_db(estimate).into_iter().flatten().collect();
        e.iter().sum::<f64>() / e.len().max(1) as f64
    }
}

/// Samples the field comparison at the bin nearest `freq`, at the frame where
/// the desired field is strongest in that bin.
pub fn plane_fields(
    prepared: &Prepared,
    proposed: &MethodOutput,
    baseline: &MethodOutput,
    freq: f64,
) -> Result<PlaneFields, PipelineError> {
    let bin = prepared
        .plan
        .nearest(freq)
        .ok_or_else(|| PipelineError::Invalid("empty band".into()))?;
    let desired = &prepared.sh.desired;
    let energy = |t: usize| desired.coeffs(t, bin).iter().map(|z| z.norm_sqr()).sum::<f64>();
    let frame = (0..desired.frames)
        .max_by(|&a, &b| energy(a).total_cmp(&energy(b)).then(b.cmp(&a)))
        .unwrap_or(0);
    let r_s = prepared.spec.sweet_radius.unwrap_or(prepared.geometry.radius);
    let obs = metrics::observation_points(ObservationKind::Plane441, r_s);
    let sampler = metrics::FieldSampler::new(&prepared.sh.desired, &obs);
    let scatter = |x: &ShTensor| -> Vec<Option<Complex64>> {
        let mut inner = sampler.pressures(x, frame, bin).into_iter();
        obs.inside.iter().map(|&i| if i { inner.next() } else { None }).collect()
    };
    Ok(PlaneFields {
        bin,
        freq: prepared.plan.bins[bin].freq,
        frame,
        mixture: scatter(&prepared.sh.mixture()),
        desired: scatter(&prepared.sh.desired),
        proposed: scatter(&proposed.estimate()),
        baseline: scatter(&baseline.estimate()),
        obs,
    })
}
