use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use shmvdr::pipeline::{ExperimentSpec, MethodSelection, Sweep};
use shmvdr::report::{self, Figure, Manifest};

#[derive(Parser)]
#[command(name = "shmvdr", version, about = "Multi-output MVDR enhancement of spherical-harmonic sound fields")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scene: microphone audio and component SH tensors.
    Simulate(Common),
    /// Enhance a scene: per-method residual tensors and estimate audio.
    Enhance(Common),
    /// Compute metrics from simulate and enhance outputs.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Output directory of `simulate`.
        #[arg(long)]
        sim: PathBuf,
        /// Output directory of `enhance`.
        #[arg(long)]
        enh: PathBuf,
    },
    /// Simulate, enhance and evaluate in one pass, including sweeps.
    Run(Common),
    /// Regenerate a reference table or figure.
    Reproduce {
        #[arg(value_enum)]
        target: Target,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Fig2,
    Fig3,
    Table1,
    Table2,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Proposed,
    ProposedAccurateRehc,
    Baseline,
    Both,
    All,
}

impl From<MethodArg> for MethodSelection {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Proposed => MethodSelection::Proposed,
            MethodArg::ProposedAccurateRehc => MethodSelection::ProposedAccurateRehc,
            MethodArg::Baseline => MethodSelection::Baseline,
            MethodArg::Both => MethodSelection::Both,
            MethodArg::All => MethodSelection::All,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    PaperDefault,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment config.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Comma-separated reverberation times in seconds.
    #[arg(long, value_delimiter = ',', conflicts_with = "sweep_snr", allow_hyphen_values = true)]
    sweep_t60: Option<Vec<f64>>,
    /// Comma-separated SNRs in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    sweep_snr: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn load_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

impl Common {
    fn spec(&self) -> Result<ExperimentSpec> {
        let mut spec = match (&self.config, self.preset) {
            (Some(path), _) => load_config(path)?,
            (None, Some(Preset::PaperDefault)) | (None, None) => ExperimentSpec::paper_default(),
        };
        if let Some(m) = self.method {
            spec.method = m.into();
        }
        if let Some(v) = &self.sweep_t60 {
            spec.sweep = Some(Sweep::T60(v.clone()));
        }
        if let Some(v) = &self.sweep_snr {
            spec.sweep = Some(Sweep::Snr(v.clone()));
        }
        if let Some(s) = self.seed {
            spec.scene.seed = s;
        }
        spec.validate().context("invalid experiment")?;
        Ok(spec)
    }
}

fn summary(m: &Manifest, out: &Path) {
    println!("wrote {} files to {}", m.outputs.len() + 1, out.display());
    println!("config hash {}", m.config_hash);
    for s in &m.scenarios {
        for f in &s.flags {
            eprintln!("warning: {} {} bin {} ({:.1} Hz): {}", s.label, f.method, f.bin, f.freq_hz, f.reason);
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Simulate(c) => {
            let m = report::simulate_to_dir(&c.spec()?, &c.out)?;
            summary(&m, &c.out);
        }
        Command::Enhance(c) => {
            let m = report::enhance_to_dir(&c.spec()?, &c.out)?;
            summary(&m, &c.out);
        }
        Command::Evaluate { common, sim, enh } => {
            let m = report::evaluate_dirs(&common.spec()?, &sim, &enh, &common.out)?;
            summary(&m, &common.out);
        }
        Command::Run(c) => {
            let (m, results) = report::run_to_dir(&c.spec()?, &c.out, "run")?;
            for (s, r) in m.scenarios.iter().zip(&results) {
                for (method, rep) in &r.reports {
                    let a = &rep.aggregate;
                    println!(
                        "{:<12} {:<24} error {:>8.2} dB  sdr {:>7.2} dB  nr {:>7.2} dB",
                        s.label,
                        method.name(),
                        a.error_db,
                        a.sdr_db,
                        a.nr_db
                    );
                }
            }
            summary(&m, &c.out);
        }
        Command::Reproduce { target, seed, out } => {
            let figure = match target {
                Target::Fig2 => Figure::Fig2,
                Target::Fig3 => Figure::Fig3,
                Target::Table1 => Figure::Table1,
                Target::Table2 => Figure::Table2,
            };
            let mut spec = figure.spec();
            if let Some(s) = seed {
                spec.scene.seed = s;
            }
            let m = report::reproduce(figure, &spec, &out)?;
            summary(&m, &out);
        }
    }
    Ok(())
}
