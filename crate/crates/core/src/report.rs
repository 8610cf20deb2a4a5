//! Experiment artifacts: CSV tables, heatmaps, audio and the run manifest.
//!
//! Every file is written through an [`ArtifactLog`], which records its
//! SHA-256 so that the manifest pins the exact outputs of a run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::io::{fmt_f64, write_wav, CsvWriter, GrayImage, IoError};
use crate::metrics::{MetricReport, RegionMetrics, PLANE_SIDE};
use crate::pipeline::{
    centre_signal, evaluate_methods, plane_fields, ExperimentSpec, Method, MethodSelection, PipelineError,
    PlaneFields, Prepared, ScenarioResult, Sweep,
};
use crate::scene::SceneRirs;
use crate::transforms::{read_sh_tensor, write_sh_tensor, BandPlan, ContainerError, ShTensor};

/// Error-map colour scale in dB.
pub const ERROR_SCALE_DB: (f64, f64) = (-40.0, 0.0);
/// Frequency of the field-comparison panels.
pub const FIELD_FREQ_HZ: f64 = 1500.0;
const PNG_UPSCALE: usize = 12;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Missing(String),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the canonical JSON form of a spec.
pub fn config_hash(spec: &ExperimentSpec) -> String {
    sha256_hex(&serde_json::to_vec(spec).expect("spec serializes"))
}

/// Writes files below a root directory and remembers their hashes.
pub struct ArtifactLog {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl ArtifactLog {
    pub fn new(root: &Path) -> Result<Self, ReportError> {
        std::fs::create_dir_all(root).map_err(|source| ReportError::File {
            path: root.to_owned(),
            source,
        })?;
        Ok(Self {
            root: root.to_owned(),
            files: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn prepare(&self, rel: &str) -> Result<PathBuf, ReportError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| ReportError::File {
                path: parent.to_owned(),
                source,
            })?;
        }
        Ok(path)
    }

    fn record(&mut self, rel: &str, path: &Path) -> Result<(), ReportError> {
        let bytes = std::fs::read(path).map_err(|source| ReportError::File {
            path: path.to_owned(),
            source,
        })?;
        self.files.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn csv(&mut self, rel: &str, rows: &[Vec<String>]) -> Result<(), ReportError> {
        let path = self.prepare(rel)?;
        let mut w = CsvWriter::create(&path)?;
        for r in rows {
            w.row(r)?;
        }
        w.into_inner()?;
        self.record(rel, &path)
    }

    pub fn wav(&mut self, rel: &str, channels: &[Vec<f64>], sample_rate: f64) -> Result<(), ReportError> {
        let path = self.prepare(rel)?;
        write_wav(&path, channels, sample_rate)?;
        self.record(rel, &path)
    }

    /// Writes `<stem>.pgm` and `<stem>.png`.
    pub fn image(&mut self, stem: &str, image: &GrayImage) -> Result<(), ReportError> {
        let pgm = format!("{stem}.pgm");
        let path = self.prepare(&pgm)?;
        image.write_pgm(&path)?;
        self.record(&pgm, &path)?;
        let png = format!("{stem}.png");
        let path = self.prepare(&png)?;
        image.write_png(&path, PNG_UPSCALE)?;
        self.record(&png, &path)
    }

    pub fn sh_tensor(&mut self, rel: &str, tensor: &ShTensor, meta: serde_json::Value) -> Result<(), ReportError> {
        let path = self.prepare(rel)?;
        let file = std::fs::File::create(&path).map_err(|source| ReportError::File {
            path: path.clone(),
            source,
        })?;
        write_sh_tensor(std::io::BufWriter::new(file), tensor, meta)?;
        self.record(rel, &path)
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    /// Writes `manifest.json` (not itself listed in `outputs`).
    pub fn finish(self, mut manifest: Manifest) -> Result<Manifest, ReportError> {
        manifest.outputs = self.files;
        let path = self.root.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|source| ReportError::File { path, source })?;
        Ok(manifest)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagEntry {
    pub method: String,
    /// STFT bin index.
    pub bin: usize,
    pub freq_hz: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub label: String,
    pub t60_s: f64,
    pub snr_db: f64,
    pub metric_frames: Vec<usize>,
    pub flags: Vec<FlagEntry>,
}

/// Everything needed to regenerate and verify a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub versions: BTreeMap<String, String>,
    pub config_hash: String,
    pub seed: u64,
    pub frame_selection: String,
    pub observation: String,
    pub spec: ExperimentSpec,
    pub scenarios: Vec<ScenarioManifest>,
    /// Relative path → SHA-256 of every file written.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, spec: &ExperimentSpec) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("shmvdr".to_string(), env!("CARGO_PKG_VERSION").to_string());
        Self {
            command: command.to_string(),
            versions,
            config_hash: config_hash(spec),
            seed: spec.scene.seed,
            frame_selection: format!("{:?} ({} frames)", spec.frame_selection, spec.frames_for_metrics),
            observation: format!("{:?}", spec.observation),
            spec: spec.clone(),
            scenarios: Vec::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn add_scenario(&mut self, label: &str, result: &ScenarioResult, plan: &BandPlan) {
        let mut flags = Vec::new();
        for (m, report) in &result.reports {
            for (b, reason) in &report.flagged {
                flags.push(FlagEntry {
                    method: m.name().to_string(),
                    bin: plan.bins[*b].index,
                    freq_hz: plan.bins[*b].freq,
                    reason: reason.clone(),
                });
            }
        }
        self.scenarios.push(ScenarioManifest {
            label: label.to_string(),
            t60_s: result.scene.room.t60,
            snr_db: result.scene.snr_db,
            metric_frames: result.frames.clone(),
            flags,
        });
    }
}

fn metric_cells(m: &RegionMetrics) -> [String; 3] {
    [fmt_f64(m.error_db), fmt_f64(m.sdr_db), fmt_f64(m.nr_db)]
}

/// One row per (frame, bin) plus a per-method aggregate row.
pub fn metric_rows(label: &str, method: Method, report: &MetricReport, plan: &BandPlan) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![
                label.to_string(),
                method.name().to_string(),
                r.frame.to_string(),
                plan.bins[r.bin].index.to_string(),
                fmt_f64(r.freq),
            ];
            row.extend(metric_cells(&r.metrics));
            row.push(
                report
                    .flagged
                    .iter()
                    .find(|f| f.0 == r.bin)
                    .map_or(String::new(), |f| f.1.clone()),
            );
            row
        })
        .collect();
    let mut agg = vec![
        label.to_string(),
        method.name().to_string(),
        "all".into(),
        "all".into(),
        String::new(),
    ];
    agg.extend(metric_cells(&report.aggregate));
    agg.push(String::new());
    rows.push(agg);
    rows
}

pub fn metric_header() -> Vec<String> {
    ["scenario", "method", "frame", "bin", "freq_hz", "error_db", "sdr_db", "nr_db", "flag"]
        .map(String::from)
        .to_vec()
}

/// Table layout: one row per method, three metric columns per scenario.
pub fn table_rows(labels: &[String], results: &[ScenarioResult], methods: &[Method]) -> Vec<Vec<String>> {
    let mut header = vec!["method".to_string()];
    for l in labels {
        for m in ["error_db", "sdr_db", "nr_db"] {
            header.push(format!("{l} {m}"));
        }
    }
    let mut rows = vec![header];
    for &m in methods {
        let mut row = vec![m.name().to_string()];
        for r in results {
            match r.report(m) {
                Some(rep) => row.extend(metric_cells(&rep.aggregate)),
                None => row.extend(["", "", ""].map(String::from)),
            }
        }
        rows.push(row);
    }
    rows
}

/// Per-bin curves (metrics averaged over frames) for every method.
pub fn curve_rows(result: &ScenarioResult, plan: &BandPlan) -> Vec<Vec<String>> {
    let mut header = vec!["bin".to_string(), "freq_hz".to_string()];
    for (m, _) in &result.reports {
        for k in ["error_db", "sdr_db", "nr_db"] {
            header.push(format!("{} {k}", m.name()));
        }
    }
    let curves: Vec<Vec<Option<RegionMetrics>>> = result.reports.iter().map(|r| r.1.per_bin(plan.len())).collect();
    let mut rows = vec![header];
    for (b, bin) in plan.bins.iter().enumerate() {
        let mut row = vec![bin.index.to_string(), fmt_f64(bin.freq)];
        for c in &curves {
            match &c[b] {
                Some(m) => row.extend(metric_cells(m)),
                None => row.extend(["", "", ""].map(String::from)),
            }
        }
        rows.push(row);
    }
    rows
}

fn panel(values: &[Option<f64>], lo: f64, hi: f64) -> GrayImage {
    let v: Vec<f64> = values.iter().map(|x| x.unwrap_or(f64::NAN)).collect();
    GrayImage::from_values(PLANE_SIDE, PLANE_SIDE, &v, lo, hi)
}

/// Names of the six field-comparison panels, in display order.
pub const FIELD_PANELS: [&str; 6] = [
    "a_mixture",
    "b_desired",
    "c_proposed_estimate",
    "d_proposed_error",
    "e_baseline_estimate",
    "f_baseline_error",
];

/// Writes the six panels as PGM + PNG and their values as CSV. Field panels
/// show the real part on a symmetric scale set by the true desired field;
/// error panels use a fixed dB scale. Pixels outside the sweet area are 0.
pub fn write_plane_fields(log: &mut ArtifactLog, dir: &str, fields: &PlaneFields) -> Result<(), ReportError> {
    let peak = fields
        .desired
        .iter()
        .chain(&fields.mixture)
        .flatten()
        .map(|z| z.re.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let real = |f: &[Option<Complex64>]| -> Vec<Option<f64>> { f.iter().map(|z| z.map(|z| z.re)).collect() };
    let err_p = fields.error_db(&fields.proposed);
    let err_b = fields.error_db(&fields.baseline);
    let values = [
        real(&fields.mixture),
        real(&fields.desired),
        real(&fields.proposed),
        err_p.clone(),
        real(&fields.baseline),
        err_b.clone(),
    ];
    for (i, (name, v)) in FIELD_PANELS.iter().zip(&values).enumerate() {
        let image = if i == 3 || i == 5 {
            panel(v, ERROR_SCALE_DB.0, ERROR_SCALE_DB.1)
        } else {
            panel(v, -peak, peak)
        };
        log.image(&format!("{dir}/{name}"), &image)?;
    }
    let mut rows = vec![["x_m", "y_m", "inside"]
        .iter()
        .map(|s| s.to_string())
        .chain(FIELD_PANELS.iter().map(|s| s.to_string()))
        .collect::<Vec<_>>()];
    for (i, p) in fields.obs.points.iter().enumerate() {
        let (x, y) = (p.r * p.theta.sin() * p.phi.cos(), p.r * p.theta.sin() * p.phi.sin());
        let mut row = vec![fmt_f64(x), fmt_f64(y), fields.obs.inside[i].to_string()];
        row.extend(values.iter().map(|v| v[i].map_or(String::new(), fmt_f64)));
        rows.push(row);
    }
    log.csv(&format!("{dir}/plane_fields.csv"), &rows)?;
    log.csv(
        &format!("{dir}/summary.csv"),
        &[
            vec!["quantity".into(), "value".into()],
            vec!["freq_hz".into(), fmt_f64(fields.freq)],
            vec!["frame".into(), fields.frame.to_string()],
            vec!["proposed_mean_error_db".into(), fmt_f64(fields.mean_error_db(&fields.proposed))],
            vec!["baseline_mean_error_db".into(), fmt_f64(fields.mean_error_db(&fields.baseline))],
        ],
    )
}

/// Label of scenario `i` of `spec`.
pub fn scenario_label(spec: &ExperimentSpec, i: usize) -> String {
    match &spec.sweep {
        None => "base".into(),
        Some(s) => format!("{}={}", s.label(), s.values()[i]),
    }
}

/// Runs an experiment and writes metrics, tables, curves, audio, field
/// panels (when both proposed and baseline run) and the manifest.
pub fn run_to_dir(spec: &ExperimentSpec, out: &Path, command: &str) -> Result<(Manifest, Vec<ScenarioResult>), ReportError> {
    spec.validate()?;
    let mut log = ArtifactLog::new(out)?;
    let mut manifest = Manifest::new(command, spec);
    let methods = spec.method.methods();
    let scenes = spec.scenes();
    let mut labels = Vec::new();
    let mut results = Vec::new();
    let mut metric_table = vec![metric_header()];
    let mut diagnostics = vec![["scenario", "method", "bin", "freq_hz", "order", "sht_condition", "psd_condition", "flag"]
        .map(String::from)
        .to_vec()];
    let mut cached: Option<(f64, SceneRirs)> = None;
    for (i, scene) in scenes.iter().enumerate() {
        let label = scenario_label(spec, i);
        let rirs = cached.take().filter(|(t, _)| *t == scene.room.t60).map(|c| c.1);
        let prepared = Prepared::new(spec, scene, rirs)?;
        let (result, outputs) = evaluate_methods(&prepared, &methods)?;
        for (m, rep) in &result.reports {
            metric_table.extend(metric_rows(&label, *m, rep, &prepared.plan));
        }
        for o in &outputs {
            for (b, bin) in prepared.plan.bins.iter().enumerate() {
                let sht_cond = prepared.sht.operators[b].as_ref().map_or(f64::INFINITY, |op| op.condition);
                let flag = o.flags.iter().filter(|f| f.0 == b).map(|f| f.1.as_str()).collect::<Vec<_>>().join("; ");
                diagnostics.push(vec![
                    label.clone(),
                    o.method.name().into(),
                    bin.index.to_string(),
                    fmt_f64(bin.freq),
                    bin.order.to_string(),
                    fmt_f64(sht_cond),
                    fmt_f64(o.psd_condition[b]),
                    flag,
                ]);
            }
        }
        let dir = format!("scenarios/{}", label.replace('=', "_"));
        log.csv(&format!("{dir}/curves.csv"), &curve_rows(&result, &prepared.plan))?;
        let fs = scene.sample_rate;
        let hop = spec.hop;
        log.wav(&format!("{dir}/audio/mixture_centre.wav"), &[centre_signal(&prepared.sh.mixture(), hop)], fs)?;
        log.wav(&format!("{dir}/audio/desired_centre.wav"), &[centre_signal(&prepared.sh.desired, hop)], fs)?;
        for o in &outputs {
            log.wav(
                &format!("{dir}/audio/{}_centre.wav", o.method.name()),
                &[centre_signal(&o.estimate(), hop)],
                fs,
            )?;
        }
        let find = |m: Method| outputs.iter().find(|o| o.method == m);
        if let (Some(p), Some(b)) = (find(Method::Proposed), find(Method::Baseline)) {
            let fields = plane_fields(&prepared, p, b, FIELD_FREQ_HZ)?;
            write_plane_fields(&mut log, &format!("{dir}/fields"), &fields)?;
        }
        manifest.add_scenario(&label, &result, &prepared.plan);
        cached = Some((scene.room.t60, prepared.rirs));
        labels.push(label);
        results.push(result);
    }
    log.csv("metrics.csv", &metric_table)?;
    log.csv("diagnostics.csv", &diagnostics)?;
    log.csv("table.csv", &table_rows(&labels, &results, &methods))?;
    let manifest = log.finish(manifest)?;
    Ok((manifest, results))
}

/// Reference tables and figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig2,
    Fig3,
    Table1,
    Table2,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Table1 => "table1",
            Figure::Table2 => "table2",
        }
    }

    /// Preset experiment behind each artifact.
    pub fn spec(self) -> ExperimentSpec {
        let mut spec = ExperimentSpec::paper_default();
        match self {
            Figure::Fig2 => spec.method = MethodSelection::Both,
            Figure::Fig3 => spec.method = MethodSelection::All,
            Figure::Table1 => spec.sweep = Some(Sweep::T60(vec![0.0, 0.2, 0.4])),
            Figure::Table2 => spec.sweep = Some(Sweep::Snr(vec![5.0, 0.0, -5.0])),
        }
        spec
    }
}

/// Runs `spec` (usually [`Figure::spec`]) and writes the artifact in its
/// reference layout next to the full run outputs.
pub fn reproduce(figure: Figure, spec: &ExperimentSpec, out: &Path) -> Result<Manifest, ReportError> {
    let command = format!("reproduce {}", figure.name());
    match figure {
        Figure::Fig2 => {
            spec.validate()?;
            let mut log = ArtifactLog::new(out)?;
            let mut manifest = Manifest::new(&command, spec);
            let prepared = Prepared::new(spec, &spec.scene, None)?;
            let (result, outputs) = evaluate_methods(&prepared, &[Method::Proposed, Method::Baseline])?;
            let fields = plane_fields(&prepared, &outputs[0], &outputs[1], FIELD_FREQ_HZ)?;
            write_plane_fields(&mut log, "fig2", &fields)?;
            manifest.add_scenario("base", &result, &prepared.plan);
            log.finish(manifest)
        }
        Figure::Fig3 => {
            let (manifest, results) = run_to_dir(spec, out, &command)?;
            let plan = spec.plan(&spec.scene, &spec.scene.array.resolve().map_err(PipelineError::from)?);
            let mut log = ArtifactLog::new(out)?;
            log.csv("fig3.csv", &curve_rows(&results[0], &plan))?;
            finish_with(log, manifest)
        }
        Figure::Table1 | Figure::Table2 => {
            let (manifest, results) = run_to_dir(spec, out, &command)?;
            let labels: Vec<String> = (0..results.len()).map(|i| scenario_label(spec, i)).collect();
            let mut log = ArtifactLog::new(out)?;
            log.csv(
                &format!("{}.csv", figure.name()),
                &table_rows(&labels, &results, &[Method::Proposed, Method::Baseline]),
            )?;
            finish_with(log, manifest)
        }
    }
}

/// Adds the files of `log` to an existing manifest and rewrites it.
fn finish_with(log: ArtifactLog, mut manifest: Manifest) -> Result<Manifest, ReportError> {
    let extra = log.files().clone();
    let outputs = std::mem::take(&mut manifest.outputs);
    let mut merged = ArtifactLog {
        root: log.root.clone(),
        files: outputs,
    };
    merged.files.extend(extra);
    merged.finish(manifest)
}

/// Simulation stage: component SH tensors and microphone audio.
pub fn simulate_to_dir(spec: &ExperimentSpec, out: &Path) -> Result<Manifest, ReportError> {
    spec.validate()?;
    let mut log = ArtifactLog::new(out)?;
    let manifest = Manifest::new("simulate", spec);
    let prepared = Prepared::new(spec, &spec.scene, None)?;
    let fs = spec.scene.sample_rate;
    log.wav("audio/mixture.wav", &prepared.signals.mixture(), fs)?;
    log.wav("audio/desired.wav", &prepared.signals.desired, fs)?;
    log.wav("audio/interference.wav", &prepared.signals.interference, fs)?;
    log.wav("audio/noise.wav", &prepared.signals.noise, fs)?;
    let meta = |c: &str| serde_json::json!({"component": c, "config_hash": config_hash(spec)});
    log.sh_tensor("sh/desired.shtc", &prepared.sh.desired, meta("desired"))?;
    log.sh_tensor("sh/interference.shtc", &prepared.sh.interference, meta("interference"))?;
    log.sh_tensor("sh/noise.shtc", &prepared.sh.noise, meta("noise"))?;
    log.finish(manifest)
}

/// Enhancement stage: per-method residual tensors (each true component
/// through the frozen filters) and estimate audio.
pub fn enhance_to_dir(spec: &ExperimentSpec, out: &Path) -> Result<Manifest, ReportError> {
    spec.validate()?;
    let mut log = ArtifactLog::new(out)?;
    let mut manifest = Manifest::new("enhance", spec);
    let prepared = Prepared::new(spec, &spec.scene, None)?;
    let meta = |m: Method, c: &str| {
        serde_json::json!({"method": m.name(), "component": c, "config_hash": config_hash(spec)})
    };
    let mut flags = Vec::new();
    for m in spec.method.methods() {
        let o = prepared.run_method(m)?;
        let dir = format!("enhanced/{}", m.name());
        log.sh_tensor(&format!("{dir}/res_desired.shtc"), &o.res_d, meta(m, "desired"))?;
        log.sh_tensor(&format!("{dir}/res_interference.shtc"), &o.res_v, meta(m, "interference"))?;
        log.sh_tensor(&format!("{dir}/res_noise.shtc"), &o.res_u, meta(m, "noise"))?;
        log.wav(&format!("{dir}/estimate_centre.wav"), &[centre_signal(&o.estimate(), spec.hop)], spec.scene.sample_rate)?;
        for (b, reason) in &o.flags {
            flags.push(FlagEntry {
                method: m.name().into(),
                bin: prepared.plan.bins[*b].index,
                freq_hz: prepared.plan.bins[*b].freq,
                reason: reason.clone(),
            });
        }
    }
    manifest.scenarios.push(ScenarioManifest {
        label: "base".into(),
        t60_s: spec.scene.room.t60,
        snr_db: spec.scene.snr_db,
        metric_frames: prepared.metric_frames(),
        flags,
    });
    log.finish(manifest)
}

fn load(path: &Path) -> Result<ShTensor, ReportError> {
    let file = std::fs::File::open(path).map_err(|source| ReportError::File {
        path: path.to_owned(),
        source,
    })?;
    Ok(read_sh_tensor(std::io::BufReader::new(file))?.0)
}

/// Evaluation stage: reads the cached true components from `sim_dir` and the
/// residuals from `enh_dir`, then writes metrics.
pub fn evaluate_dirs(spec: &ExperimentSpec, sim_dir: &Path, enh_dir: &Path, out: &Path) -> Result<Manifest, ReportError> {
    let mut log = ArtifactLog::new(out)?;
    let mut manifest = Manifest::new("evaluate", spec);
    let true_d = load(&sim_dir.join("sh/desired.shtc"))?;
    let true_v = load(&sim_dir.join("sh/interference.shtc"))?;
    let geometry = spec.scene.array.resolve().map_err(PipelineError::from)?;
    let obs = spec.observation_set(&geometry);
    let n = spec.frames_for_metrics.min(true_d.frames);
    let frames = match spec.frame_selection {
        crate::pipeline::FrameSelection::HighestDesiredEnergy => crate::metrics::select_frames(&true_d, n),
        crate::pipeline::FrameSelection::First => (0..n).collect(),
    };
    let enh_manifest: Option<Manifest> = std::fs::read(enh_dir.join("manifest.json"))
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok());
    let mut table = vec![metric_header()];
    let mut reports = Vec::new();
    for m in spec.method.methods() {
        let dir = enh_dir.join("enhanced").join(m.name());
        if !dir.exists() {
            return Err(ReportError::Missing(format!("no enhanced outputs for {} in {}", m.name(), enh_dir.display())));
        }
        let res_d = load(&dir.join("res_desired.shtc"))?;
        let res_v = load(&dir.join("res_interference.shtc"))?;
        let res_u = load(&dir.join("res_noise.shtc"))?;
        let flags: Vec<(usize, String)> = enh_manifest
            .iter()
            .flat_map(|mf| mf.scenarios.iter().flat_map(|s| s.flags.iter()))
            .filter(|f| f.method == m.name())
            .filter_map(|f| true_d.plan.bins.iter().position(|b| b.index == f.bin).map(|b| (b, f.reason.clone())))
            .collect();
        let report = crate::metrics::evaluate(
            &crate::metrics::MethodFields {
                true_d: &true_d,
                true_v: &true_v,
                res_d: &res_d,
                res_v: &res_v,
                res_u: &res_u,
            },
            &obs,
            &frames,
            flags,
        );
        table.extend(metric_rows("base", m, &report, &true_d.plan));
        reports.push((m, report));
    }
    let result = ScenarioResult {
        scene: spec.scene.clone(),
        frames,
        reports,
    };
    log.csv("metrics.csv", &table)?;
    log.csv("curves.csv", &curve_rows(&result, &true_d.plan))?;
    manifest.add_scenario("base", &result, &true_d.plan);
    log.finish(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn config_hash_tracks_the_spec() {
        let a = ExperimentSpec::paper_default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.scene.seed += 1;
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn manifest_lists_written_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = ArtifactLog::new(dir.path()).unwrap();
        log.csv("x/a.csv", &[vec!["1".into(), "2".into()]]).unwrap();
        let m = log.finish(Manifest::new("test", &ExperimentSpec::paper_default())).unwrap();
        assert_eq!(m.outputs["x/a.csv"], sha256_hex(b"1,2\r\n"));
        let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        let back: Manifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn scenario_labels() {
        let mut spec = ExperimentSpec::paper_default();
        assert_eq!(scenario_label(&spec, 0), "base");
        spec.sweep = Some(Sweep::Snr(vec![5.0, -5.0]));
        assert_eq!(scenario_label(&spec, 1), "snr_db=-5");
    }
}
