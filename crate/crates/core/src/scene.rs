//! Reverberant scene simulation: shoebox room, two point sources and an open
//! spherical microphone array, with image-source room impulse responses.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signals::{self, fft_convolve_many, mean_power};

pub type Position = [f64; 3];

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("empty signal: {0}")]
    EmptySignal(&'static str),
    #[error("signal contains non-finite samples: {0}")]
    NonFinite(&'static str),
    #[error("geometry csv {path}: line {line}: {msg}")]
    GeometryCsv {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Below this reverberation time the room is simulated as anechoic.
pub const ANECHOIC_T60: f64 = 0.01;

/// Extra RIR length beyond the reverberation time, in seconds.
const RIR_TAIL: f64 = 0.1;

/// Width of the windowed-sinc fractional delay kernel, in samples.
const SINC_TAPS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// Room dimensions `(Lx, Ly, Lz)` in metres.
    pub dims: Position,
    /// Reverberation time in seconds.
    pub t60: f64,
    /// Speed of sound in m/s.
    #[serde(default = "default_c")]
    pub c: f64,
}

fn default_c() -> f64 {
    343.0
}

impl RoomSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.dims.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(SceneError::InvalidGeometry(format!(
                "room dimensions must be positive, got {:?}",
                self.dims
            )));
        }
        if !(self.t60 >= 0.0) || !self.t60.is_finite() {
            return Err(SceneError::InvalidGeometry(format!("t60 must be >= 0, got {}", self.t60)));
        }
        if !(self.c > 0.0) {
            return Err(SceneError::InvalidGeometry(format!("speed of sound must be > 0, got {}", self.c)));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Position) -> bool {
        p.iter().zip(&self.dims).all(|(&x, &l)| x > 0.0 && x < l)
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dims;
        2.0 * (x * y + x * z + y * z)
    }

    /// Uniform wall reflection coefficient from Sabine's formula. Zero when
    /// the room is anechoic or the requested t60 needs absorption above one.
    pub fn reflection_coefficient(&self) -> f64 {
        if self.t60 < ANECHOIC_T60 {
            return 0.0;
        }
        let alpha = 24.0 * 10f64.ln() * self.volume() / (self.c * self.surface() * self.t60);
        if alpha >= 1.0 {
            0.0
        } else {
            (1.0 - alpha).sqrt()
        }
    }

    /// Number of RIR samples simulated at `sample_rate`.
    pub fn rir_len(&self, sample_rate: f64) -> usize {
        ((self.t60.max(0.0) + RIR_TAIL) * sample_rate).ceil() as usize
    }
}

/// Microphone direction on the array sphere: `theta` is the polar angle from
/// +z, `phi` the azimuth, both in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub theta: f64,
    pub phi: f64,
}

impl Direction {
    pub fn unit_vector(&self) -> Position {
        [
            self.theta.sin() * self.phi.cos(),
            self.theta.sin() * self.phi.sin(),
            self.theta.cos(),
        ]
    }

    pub fn from_vector(v: &Position) -> Self {
        let r = norm(v);
        Self {
            theta: (v[2] / r).clamp(-1.0, 1.0).acos(),
            phi: v[1].atan2(v[0]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub center: Position,
    pub radius: f64,
    pub mics: Vec<Direction>,
}

// em32 Eigenmike capsule directions (polar angle, azimuth) in degrees, as
// listed in the mh acoustics em32 release notes / user manual, table of
// capsule positions. Radius 4.2 cm.
const EM32_DEGREES: [(f64, f64); 32] = [
    (69.0, 0.0),
    (90.0, 32.0),
    (111.0, 0.0),
    (90.0, 328.0),
    (32.0, 0.0),
    (55.0, 45.0),
    (90.0, 69.0),
    (125.0, 45.0),
    (148.0, 0.0),
    (125.0, 315.0),
    (90.0, 291.0),
    (55.0, 315.0),
    (21.0, 91.0),
    (58.0, 90.0),
    (121.0, 90.0),
    (159.0, 89.0),
    (69.0, 180.0),
    (90.0, 212.0),
    (111.0, 180.0),
    (90.0, 148.0),
    (32.0, 180.0),
    (55.0, 225.0),
    (90.0, 249.0),
    (125.0, 225.0),
    (148.0, 180.0),
    (125.0, 135.0),
    (90.0, 111.0),
    (55.0, 135.0),
    (21.0, 269.0),
    (58.0, 270.0),
    (122.0, 270.0),
    (159.0, 271.0),
];

pub const EM32_RADIUS: f64 = 0.042;

/// The 32 em32 capsule directions at radius 4.2 cm, centred at the origin.
pub fn em32_geometry() -> ArrayGeometry {
    ArrayGeometry {
        center: [0.0; 3],
        radius: EM32_RADIUS,
        mics: EM32_DEGREES
            .iter()
            .map(|&(t, p)| Direction {
                theta: t.to_radians(),
                phi: p.to_radians(),
            })
            .collect(),
    }
}

impl ArrayGeometry {
    pub fn len(&self) -> usize {
        self.mics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mics.is_empty()
    }

    pub fn with_center(mut self, center: Position) -> Self {
        self.center = center;
        self
    }

    /// Mic position relative to the array centre.
    pub fn relative_position(&self, q: usize) -> Position {
        let u = self.mics[q].unit_vector();
        [u[0] * self.radius, u[1] * self.radius, u[2] * self.radius]
    }

    /// Mic position in room coordinates.
    pub fn absolute_position(&self, q: usize) -> Position {
        let r = self.relative_position(q);
        [
            r[0] + self.center[0],
            r[1] + self.center[1],
            r[2] + self.center[2],
        ]
    }

    /// Reads `(theta_deg, phi_deg)` rows. Blank lines, `#` comments and a
    /// non-numeric header row are skipped.
    pub fn from_csv(path: &Path, center: Position, radius: f64) -> Result<Self, SceneError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text, center, radius).map_err(|(line, msg)| SceneError::GeometryCsv {
            path: path.to_owned(),
            line,
            msg,
        })
    }

    fn parse_csv(text: &str, center: Position, radius: f64) -> Result<Self, (usize, String)> {
        let mut mics = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 {
                return Err((i + 1, format!("expected 2 fields, found {}", fields.len())));
            }
            let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(v) => {
                    if !(0.0..=180.0).contains(&v[0]) {
                        return Err((i + 1, format!("theta {} outside [0, 180]", v[0])));
                    }
                    mics.push(Direction {
                        theta: v[0].to_radians(),
                        phi: v[1].to_radians(),
                    })
                }
                Err(_) if mics.is_empty() && i == first_content_line(text) => continue,
                Err(e) => return Err((i + 1, e.to_string())),
            }
        }
        if mics.is_empty() {
            return Err((0, "no microphone rows".into()));
        }
        Ok(Self {
            center,
            radius,
            mics,
        })
    }
}

fn first_content_line(text: &str) -> usize {
    text.lines()
        .position(|l| !l.trim().is_empty() && !l.trim().starts_with('#'))
        .unwrap_or(0)
}

pub(crate) fn norm(v: &Position) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn sub(a: &Position, b: &Position) -> Position {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Per-axis image contributions: coordinate offset of the image relative to
/// the receiver and the number of wall reflections along that axis.
fn axis_images(src: f64, mic: f64, len: f64, reach: f64) -> Vec<(f64, i32)> {
    let span = (reach / (2.0 * len)).ceil() as i64 + 1;
    let mut out = Vec::new();
    for m in -span..=span {
        for q in 0..=1i64 {
            let offset = (1 - 2 * q) as f64 * src - mic + 2.0 * m as f64 * len;
            if offset.abs() <= reach {
                let reflections = ((m - q).abs() + m.abs()) as i32;
                out.push((offset, reflections));
            }
        }
    }
    out
}

/// Image-source room impulse response from `src` to an omnidirectional
/// receiver at `mic`, `len` samples long.
pub fn simulate_rir_len(
    room: &RoomSpec,
    src: &Position,
    mic: &Position,
    sample_rate: f64,
    len: usize,
) -> Result<Vec<f64>, SceneError> {
    room.validate()?;
    if !room.contains(src) {
        return Err(SceneError::InvalidGeometry(format!("source {src:?} outside room")));
    }
    if !room.contains(mic) {
        return Err(SceneError::InvalidGeometry(format!("receiver {mic:?} outside room")));
    }
    if norm(&sub(src, mic)) < 1e-9 {
        return Err(SceneError::InvalidGeometry("source coincides with receiver".into()));
    }
    let beta = room.reflection_coefficient();
    let half = SINC_TAPS as f64 / 2.0;
    let reach = (len as f64 + half) * room.c / sample_rate;
    let samples_per_metre = sample_rate / room.c;
    let mut rir = vec![0.0; len];

    let anechoic = beta == 0.0;
    let (xs, ys, zs) = if anechoic {
        (
            vec![(src[0] - mic[0], 0)],
            vec![(src[1] - mic[1], 0)],
            vec![(src[2] - mic[2], 0)],
        )
    } else {
        (
            axis_images(src[0], mic[0], room.dims[0], reach),
            axis_images(src[1], mic[1], room.dims[1], reach),
            axis_images(src[2], mic[2], room.dims[2], reach),
        )
    };
    let reach_sq = reach * reach;
    for &(dx, rx) in &xs {
        for &(dy, ry) in &ys {
            let dxy = dx * dx + dy * dy;
            if dxy > reach_sq {
                continue;
            }
            for &(dz, rz) in &zs {
                let dist_sq = dxy + dz * dz;
                if dist_sq > reach_sq {
                    continue;
                }
                let dist = dist_sq.sqrt();
                let gain = if anechoic { 1.0 } else { beta.powi(rx + ry + rz) };
                let amp = gain / (4.0 * PI * dist);
                if amp < 1e-12 {
                    continue;
                }
                add_fractional_impulse(&mut rir, dist * samples_per_metre, amp);
            }
        }
    }
    Ok(rir)
}

/// [`simulate_rir_len`] with the default length of `t60 + 0.1 s`.
pub fn simulate_rir(
    room: &RoomSpec,
    src: &Position,
    mic: &Position,
    sample_rate: f64,
) -> Result<Vec<f64>, SceneError> {
    simulate_rir_len(room, src, mic, sample_rate, room.rir_len(sample_rate))
}

/// Adds a Hann-windowed sinc centred at fractional sample `delay`.
fn add_fractional_impulse(buf: &mut [f64], delay: f64, amp: f64) {
    let half = (SINC_TAPS / 2) as i64;
    let base = delay.floor() as i64;
    let frac = delay - base as f64;
    for n in -half + 1..=half {
        let idx = base + n;
        if idx < 0 || idx as usize >= buf.len() {
            continue;
        }
        let t = n as f64 - frac;
        let window = 0.5 * (1.0 + (PI * t / half as f64).cos());
        let sinc = if t.abs() < 1e-12 { 1.0 } else { (PI * t).sin() / (PI * t) };
        buf[idx as usize] += amp * window * sinc;
    }
}

/// RIRs from `src` to every microphone of `array`, computed in parallel.
pub fn array_rirs(
    room: &RoomSpec,
    src: &Position,
    array: &ArrayGeometry,
    sample_rate: f64,
) -> Result<Vec<Vec<f64>>, SceneError> {
    (0..array.len())
        .into_par_iter()
        .map(|q| simulate_rir(room, src, &array.absolute_position(q), sample_rate))
        .collect()
}

/// Where a dry source signal comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalSource {
    /// Procedural speech-like babble.
    SyntheticSpeech,
    /// Procedural stationary appliance noise.
    SyntheticWasher,
    /// Unit-variance white Gaussian noise.
    WhiteNoise,
    /// Mono WAV file; relative paths are resolved against the data search
    /// path.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub position: Position,
    pub signal: SignalSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrayLayout {
    Em32,
    /// CSV of `(theta_deg, phi_deg)` rows.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub center: Position,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_layout")]
    pub layout: ArrayLayout,
}

fn default_radius() -> f64 {
    EM32_RADIUS
}

fn default_layout() -> ArrayLayout {
    ArrayLayout::Em32
}

impl ArraySpec {
    pub fn resolve(&self) -> Result<ArrayGeometry, SceneError> {
        match &self.layout {
            ArrayLayout::Em32 => Ok(ArrayGeometry {
                radius: self.radius,
                ..em32_geometry()
            }
            .with_center(self.center)),
            ArrayLayout::Csv { path } => ArrayGeometry::from_csv(path, self.center, self.radius),
        }
    }
}

/// Declarative scene description. `ssnr_db` may be `null` in JSON for a
/// noise-free array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub room: RoomSpec,
    pub desired: SourceSpec,
    pub interference: SourceSpec,
    pub array: ArraySpec,
    pub snr_db: f64,
    pub ssnr_db: Option<f64>,
    pub seed: u64,
    #[serde(default = "default_fs")]
    pub sample_rate: f64,
    /// Length of the mixture segment in seconds.
    #[serde(default = "default_duration")]
    pub duration_s: f64,
}

fn default_fs() -> f64 {
    16000.0
}

fn default_duration() -> f64 {
    10.0
}

impl SceneConfig {
    /// Room, sources and array of the reference two-source setup.
    pub fn paper_default() -> Self {
        Self {
            room: RoomSpec {
                dims: [5.0, 6.0, 4.0],
                t60: 0.2,
                c: 343.0,
            },
            desired: SourceSpec {
                position: [4.60, 4.05, 1.70],
                signal: SignalSource::SyntheticSpeech,
            },
            interference: SourceSpec {
                position: [1.60, 1.05, 1.20],
                signal: SignalSource::SyntheticWasher,
            },
            array: ArraySpec {
                center: [1.60, 4.05, 1.70],
                radius: EM32_RADIUS,
                layout: ArrayLayout::Em32,
            },
            snr_db: 0.0,
            ssnr_db: Some(35.0),
            seed: 1,
            sample_rate: 16000.0,
            duration_s: 10.0,
        }
    }

    pub fn samples(&self) -> usize {
        (self.duration_s * self.sample_rate).round() as usize
    }

    pub fn validate(&self, array: &ArrayGeometry) -> Result<(), SceneError> {
        self.room.validate()?;
        if !(self.sample_rate > 0.0) {
            return Err(SceneError::InvalidGeometry("sample_rate must be > 0".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(SceneError::InvalidGeometry("snr_db must be finite".into()));
        }
        for (name, src) in [("desired", &self.desired), ("interference", &self.interference)] {
            if !self.room.contains(&src.position) {
                return Err(SceneError::InvalidGeometry(format!("{name} source outside room")));
            }
            if norm(&sub(&src.position, &array.center)) <= array.radius {
                return Err(SceneError::InvalidGeometry(format!(
                    "{name} source inside the array sphere"
                )));
            }
        }
        for q in 0..array.len() {
            if !self.room.contains(&array.absolute_position(q)) {
                return Err(SceneError::InvalidGeometry(format!("microphone {q} outside room")));
            }
        }
        Ok(())
    }
}

/// Multichannel time signal, one `Vec` per channel.
pub type MultiChannel = Vec<Vec<f64>>;

/// Microphone signals split by origin: desired field, interference field and
/// sensor noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSignals {
    pub desired: MultiChannel,
    pub interference: MultiChannel,
    pub noise: MultiChannel,
}

impl ComponentSignals {
    pub fn mixture(&self) -> MultiChannel {
        self.desired
            .iter()
            .zip(&self.interference)
            .zip(&self.noise)
            .map(|((d, v), u)| {
                d.iter()
                    .zip(v)
                    .zip(u)
                    .map(|((a, b), c)| a + b + c)
                    .collect()
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.desired.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// RNG stream ids; every (component, microphone) pair draws from its own
/// ChaCha stream so results do not depend on evaluation order.
const NOISE_STREAM: u64 = 1 << 32;

/// Independent white Gaussian sensor noise with variance `variance` per
/// microphone, deterministic in `(seed, stream_base + q)`.
pub fn sensor_noise(channels: usize, len: usize, variance: f64, seed: u64, stream_base: u64) -> MultiChannel {
    let sd = variance.sqrt();
    (0..channels)
        .into_par_iter()
        .map(|q| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(NOISE_STREAM + stream_base + q as u64);
            (0..len)
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

/// Everything needed to regenerate component signals for a scene.
#[derive(Debug, Clone)]
pub struct SceneRirs {
    pub desired: Vec<Vec<f64>>,
    pub interference: Vec<Vec<f64>>,
}

impl SceneRirs {
    pub fn simulate(scene: &SceneConfig, array: &ArrayGeometry) -> Result<Self, SceneError> {
        scene.validate(array)?;
        Ok(Self {
            desired: array_rirs(&scene.room, &scene.desired.position, array, scene.sample_rate)?,
            interference: array_rirs(&scene.room, &scene.interference.position, array, scene.sample_rate)?,
        })
    }
}

fn check_signal(x: &[f64], name: &'static str) -> Result<(), SceneError> {
    if x.is_empty() {
        return Err(SceneError::EmptySignal(name));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SceneError::NonFinite(name));
    }
    Ok(())
}

/// Gain applied to the dry interference so that the dry-signal power ratio
/// equals `snr_db`. Zero when the interference is silent.
pub fn interference_gain(dry_desired: &[f64], dry_interference: &[f64], snr_db: f64) -> f64 {
    let pd = mean_power(dry_desired);
    let pv = mean_power(dry_interference);
    if pv == 0.0 {
        0.0
    } else {
        (pd / pv / 10f64.powf(snr_db / 10.0)).sqrt()
    }
}

/// Sensor-noise variance giving `ssnr_db` against the mean per-mic desired
/// power.
pub fn noise_variance(desired: &MultiChannel, ssnr_db: Option<f64>) -> f64 {
    match ssnr_db {
        None => 0.0,
        Some(s) if s.is_infinite() && s > 0.0 => 0.0,
        Some(s) => {
            let p = desired.iter().map(|c| mean_power(c)).sum::<f64>() / desired.len().max(1) as f64;
            p / 10f64.powf(s / 10.0)
        }
    }
}

/// Convolves the dry sources with precomputed RIRs and adds sensor noise.
/// Output length equals the desired dry signal's length.
pub fn synthesize_with_rirs(
    scene: &SceneConfig,
    rirs: &SceneRirs,
    dry_desired: &[f64],
    dry_interference: &[f64],
) -> Result<ComponentSignals, SceneError> {
    check_signal(dry_desired, "desired")?;
    check_signal(dry_interference, "interference")?;
    let len = dry_desired.len();
    let desired = fft_convolve_many(dry_desired, &rirs.desired, len);
    let gain = interference_gain(dry_desired, dry_interference, scene.snr_db);
    let scaled: Vec<f64> = dry_interference.iter().map(|v| v * gain).collect();
    let interference = fft_convolve_many(&scaled, &rirs.interference, len);
    let variance = noise_variance(&desired, scene.ssnr_db);
    let noise = sensor_noise(desired.len(), len, variance, scene.seed, 0);
    Ok(ComponentSignals {
        desired,
        interference,
        noise,
    })
}

/// Simulates RIRs for `scene` and synthesizes component-separated signals.
pub fn synthesize(
    scene: &SceneConfig,
    array: &ArrayGeometry,
    dry_desired: &[f64],
    dry_interference: &[f64],
) -> Result<ComponentSignals, SceneError> {
    check_signal(dry_desired, "desired")?;
    check_signal(dry_interference, "interference")?;
    let rirs = SceneRirs::simulate(scene, array)?;
    synthesize_with_rirs(scene, &rirs, dry_desired, dry_interference)
}

/// Loads or generates a dry source of `len` samples. `stream` separates
/// independent realisations of the same procedural source.
pub fn dry_signal(
    source: &SignalSource,
    len: usize,
    sample_rate: f64,
    seed: u64,
    stream: u64,
    search: &[PathBuf],
) -> Result<Vec<f64>, crate::io::IoError> {
    let sub_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream);
    Ok(match source {
        SignalSource::SyntheticSpeech => signals::synthetic_speech(len, sample_rate, sub_seed),
        SignalSource::SyntheticWasher => signals::synthetic_washer(len, sample_rate, sub_seed),
        SignalSource::WhiteNoise => signals::white_noise(len, sub_seed),
        SignalSource::File { path } => {
            let resolved = crate::io::resolve_data_path(path, search)?;
            let (mut x, fs) = crate::io::read_wav_mono(&resolved)?;
            if (fs - sample_rate).abs() > 0.5 {
                return Err(crate::io::IoError::SampleRate {
                    path: resolved,
                    found: fs,
                    expected: sample_rate,
                });
            }
            if x.is_empty() {
                return Err(crate::io::IoError::Empty(resolved));
            }
            // loop short material, then skip ahead per stream so the
            // estimation segment does not replay the mixture segment
            let offset = (stream as usize * len) % x.len();
            x.rotate_left(offset);
            x.iter().copied().cycle().take(len).collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fs() -> f64 {
        16000.0
    }

    #[test]
    fn em32_table() {
        let g = em32_geometry();
        assert_eq!(g.len(), 32);
        assert_eq!(g.radius, 0.042);
        for q in 0..32 {
            assert!((norm(&g.relative_position(q)) - 0.042).abs() < 1e-15);
        }
    }

    #[test]
    fn anechoic_direct_path() {
        let room = RoomSpec {
            dims: [10.0, 10.0, 10.0],
            t60: 0.0,
            c: 343.0,
        };
        let src = [2.0, 5.0, 5.0];
        let mic = [5.0, 5.0, 5.0];
        let rir = simulate_rir(&room, &src, &mic, fs()).unwrap();
        let delay = 3.0 / 343.0 * fs();
        // the windowed-sinc kernel sums to the amplitude (DC gain ≈ 1)
        let total: f64 = rir.iter().sum();
        assert!((total - 1.0 / (4.0 * PI * 3.0)).abs() < 1e-3 / (4.0 * PI * 3.0));
        let peak = rir
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, delay.round() as usize);
        // nothing outside the interpolation kernel
        for (n, v) in rir.iter().enumerate() {
            if (n as f64 - delay).abs() > 33.0 {
                assert_eq!(*v, 0.0);
            }
        }
    }

    fn schroeder_db(rir: &[f64]) -> Vec<f64> {
        let mut acc = 0.0;
        let mut curve: Vec<f64> = rir
            .iter()
            .rev()
            .map(|v| {
                acc += v * v;
                acc
            })
            .collect();
        curve.reverse();
        let total = curve[0];
        curve.iter().map(|e| 10.0 * (e / total).log10()).collect()
    }

    #[test]
    fn schroeder_decay_matches_t60() {
        let room = RoomSpec {
            dims: [5.0, 6.0, 4.0],
            t60: 0.2,
            c: 343.0,
        };
        let src = [4.6, 4.05, 1.7];
        let mic = [1.6, 4.05, 1.7];
        // simulate longer than the default so the -60 dB point is not
        // biased by truncation
        let rir = simulate_rir_len(&room, &src, &mic, fs(), (0.5 * fs()) as usize).unwrap();
        let curve = schroeder_db(&rir);
        let direct = (norm(&sub(&src, &mic)) / 343.0 * fs()) as usize;
        let hit = curve.iter().position(|&db| db <= -60.0).unwrap();
        let t = (hit - direct) as f64 / fs();
        assert!((t - 0.2).abs() <= 0.04, "decay time {t}");
        // monotone after the direct sound
        for w in curve[direct..].windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn mirror_symmetric_pairs_share_rir() {
        let room = RoomSpec {
            dims: [5.0, 6.0, 4.0],
            t60: 0.3,
            c: 343.0,
        };
        let src = [1.2, 2.0, 1.5];
        let mic = [2.0, 3.5, 2.2];
        let mirror = |p: Position| [5.0 - p[0], p[1], p[2]];
        let a = simulate_rir(&room, &src, &mic, fs()).unwrap();
        let b = simulate_rir(&room, &mirror(src), &mirror(mic), fs()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_room_is_rejected() {
        let room = RoomSpec {
            dims: [5.0, 6.0, 4.0],
            t60: 0.2,
            c: 343.0,
        };
        assert!(matches!(
            simulate_rir(&room, &[6.0, 1.0, 1.0], &[1.0, 1.0, 1.0], fs()),
            Err(SceneError::InvalidGeometry(_))
        ));
    }

    fn small_scene() -> SceneConfig {
        let mut s = SceneConfig::paper_default();
        s.room.t60 = 0.1;
        s
    }

    #[test]
    fn silent_interference_noise_free_mixture_is_desired() {
        let mut scene = small_scene();
        scene.ssnr_db = None;
        let array = scene.array.resolve().unwrap();
        let d = signals::synthetic_speech(8000, fs(), 1);
        let v = vec![0.0; 8000];
        let c = synthesize(&scene, &array, &d, &v).unwrap();
        assert_eq!(c.mixture(), c.desired);
    }

    #[test]
    fn ssnr_is_met_and_seed_only_changes_noise() {
        let scene = small_scene();
        let array = scene.array.resolve().unwrap();
        let rirs = SceneRirs::simulate(&scene, &array).unwrap();
        let d = signals::synthetic_speech(160_000, fs(), 1);
        let v = signals::synthetic_washer(160_000, fs(), 2);
        let a = synthesize_with_rirs(&scene, &rirs, &d, &v).unwrap();
        let pd: f64 = a.desired.iter().map(|c| mean_power(c)).sum::<f64>() / 32.0;
        let pu: f64 = a.noise.iter().map(|c| mean_power(c)).sum::<f64>() / 32.0;
        let measured = 10.0 * (pd / pu).log10();
        assert!((measured - 35.0).abs() < 0.1, "ssnr {measured}");

        let b = synthesize_with_rirs(&scene, &rirs, &d, &v).unwrap();
        assert_eq!(a, b);
        let mut other = scene.clone();
        other.seed = 2;
        let c = synthesize_with_rirs(&other, &rirs, &d, &v).unwrap();
        assert_eq!(a.desired, c.desired);
        assert_eq!(a.interference, c.interference);
        assert_ne!(a.noise, c.noise);
    }

    #[test]
    fn superposition() {
        let scene = small_scene();
        let array = scene.array.resolve().unwrap();
        let rirs = SceneRirs::simulate(&scene, &array).unwrap();
        let d = signals::synthetic_speech(20_000, fs(), 3);
        let v = signals::synthetic_washer(20_000, fs(), 4);
        let both = synthesize_with_rirs(&scene, &rirs, &d, &v).unwrap();
        let gain = interference_gain(&d, &v, scene.snr_db);
        // feed the interference pre-scaled with 0 dB bookkeeping disabled
        let only_v: Vec<f64> = v.iter().map(|x| x * gain).collect();
        let conv_d = fft_convolve_many(&d, &rirs.desired, d.len());
        let conv_v = fft_convolve_many(&only_v, &rirs.interference, v.len());
        let mix = both.mixture();
        for q in 0..32 {
            for n in 0..d.len() {
                let lhs = mix[q][n];
                let rhs = conv_d[q][n] + conv_v[q][n] + both.noise[q][n];
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_signal_rejected() {
        let scene = small_scene();
        let array = scene.array.resolve().unwrap();
        assert!(matches!(
            synthesize(&scene, &array, &[], &[1.0]),
            Err(SceneError::EmptySignal("desired"))
        ));
    }

    #[test]
    fn csv_geometry() {
        let text = "theta_deg,phi_deg\n90,0\n90,90\n# comment\n\n0,0\n";
        let g = ArrayGeometry::parse_csv(text, [1.0, 1.0, 1.0], 0.05).unwrap();
        assert_eq!(g.len(), 3);
        assert!((g.absolute_position(1)[1] - 1.05).abs() < 1e-12);
        let bad = "90,0\n90\n";
        assert_eq!(ArrayGeometry::parse_csv(bad, [0.0; 3], 0.05).unwrap_err().0, 2);
    }

    #[test]
    fn config_json_roundtrip() {
        let s = SceneConfig::paper_default();
        let text = serde_json::to_string_pretty(&s).unwrap();
        let back: SceneConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn sources_inside_array_sphere_rejected() {
        let mut s = SceneConfig::paper_default();
        s.desired.position = [1.61, 4.05, 1.70];
        let array = s.array.resolve().unwrap();
        assert!(s.validate(&array).is_err());
    }
}
