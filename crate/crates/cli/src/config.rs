//! Pipeline configuration: TOML file plus flag overrides.
//!
//! ```toml
//! [input]
//! preset = "crossing"      # or path = "run.tvfr"
//! seed = 7
//! snapshots = 4096
//! links = 16
//!
//! [region]
//! time = 128
//! freq = 128
//!
//! [tapers]
//! time = 2
//! freq = 2
//!
//! [threshold]
//! guard_db = 5.0
//! noise_delay_floor_us = 2.0
//!
//! [output]
//! dir = "out"
//! kf = 3
//!
//! [coherence]
//! level = 0.5
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vlsf_core::PresetName;

use crate::error::{CliError, Result};

pub const DEFAULT_SNAPSHOTS: usize = 4096;
pub const DEFAULT_LINKS: usize = 16;
pub const DEFAULT_OUT: &str = "vlsf-out";

/// Flags shared by every subcommand. Anything set here overrides the
/// config file.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// TOML config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// TVFR container to analyse
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Synthetic scenario instead of an input file
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Snapshots to synthesize for a preset
    #[arg(long)]
    pub snapshots: Option<usize>,
    /// Links to synthesize for a preset
    #[arg(long)]
    pub links: Option<usize>,
    /// Stationarity region length M in snapshots
    #[arg(long)]
    pub region_time: Option<usize>,
    /// Stationarity region width N in frequency bins
    #[arg(long)]
    pub region_freq: Option<usize>,
    /// DPSS tapers along time (I)
    #[arg(long)]
    pub tapers_time: Option<usize>,
    /// DPSS tapers along frequency (J)
    #[arg(long)]
    pub tapers_freq: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub guard_db: Option<f64>,
    #[arg(long)]
    pub noise_delay_floor_us: Option<f64>,
    /// Restrict pooled statistics to one frequency region (1-based)
    #[arg(long)]
    pub kf: Option<usize>,
    /// Correlation level for coherence bandwidth and time
    #[arg(long)]
    pub level: Option<f64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    input: InputSection,
    #[serde(default)]
    region: PairSection,
    #[serde(default)]
    tapers: PairSection,
    #[serde(default)]
    threshold: ThresholdSection,
    #[serde(default)]
    output: OutputSection,
    #[serde(default)]
    coherence: CoherenceSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputSection {
    path: Option<PathBuf>,
    preset: Option<String>,
    seed: Option<u64>,
    snapshots: Option<usize>,
    links: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairSection {
    time: Option<usize>,
    freq: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdSection {
    guard_db: Option<f64>,
    noise_delay_floor_us: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
    kf: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoherenceSection {
    level: Option<f64>,
}

/// Where the time-variant frequency response comes from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Source {
    File {
        path: PathBuf,
    },
    Preset {
        name: String,
        seed: u64,
        snapshots: usize,
        links: usize,
    },
}

/// Fully resolved settings. Everything except the output directory enters
/// the config digest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub source: Source,
    pub region_time: usize,
    pub region_freq: usize,
    pub tapers_time: usize,
    pub tapers_freq: usize,
    pub guard_db: f64,
    pub noise_delay_floor_us: f64,
    pub kf: Option<usize>,
    pub level: f64,
    #[serde(skip)]
    pub out: PathBuf,
}

fn read_file_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::InputNotFound(path.to_path_buf()),
        _ => CliError::Io(e),
    })?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl PipelineConfig {
    /// Merges flags over the config file over defaults and validates the
    /// result. `needs_source` is false for commands that can run without
    /// channel data.
    pub fn resolve(args: &PipelineArgs, needs_source: bool) -> Result<Self> {
        let file = match &args.config {
            Some(p) => read_file_config(p)?,
            None => FileConfig::default(),
        };
        let input = args.input.clone().or(file.input.path);
        let preset = args.preset.clone().or(file.input.preset);
        let seed = args.seed.or(file.input.seed).unwrap_or(0);
        let snapshots = args.snapshots.or(file.input.snapshots).unwrap_or(DEFAULT_SNAPSHOTS);
        let links = args.links.or(file.input.links).unwrap_or(DEFAULT_LINKS);
        let source = match (input, preset) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give either an input file or a preset, not both".into()))
            }
            (Some(path), None) => Source::File { path },
            (None, Some(name)) => {
                let name: PresetName = name
                    .parse()
                    .map_err(|e: vlsf_core::Error| CliError::Config(e.to_string()))?;
                Source::Preset {
                    name: name.as_str().to_string(),
                    seed,
                    snapshots,
                    links,
                }
            }
            (None, None) if needs_source => {
                return Err(CliError::Config("no input file or preset given".into()))
            }
            (None, None) => Source::File { path: PathBuf::new() },
        };
        let cfg = PipelineConfig {
            source,
            region_time: args.region_time.or(file.region.time).unwrap_or(128),
            region_freq: args.region_freq.or(file.region.freq).unwrap_or(128),
            tapers_time: args.tapers_time.or(file.tapers.time).unwrap_or(2),
            tapers_freq: args.tapers_freq.or(file.tapers.freq).unwrap_or(2),
            guard_db: args.guard_db.or(file.threshold.guard_db).unwrap_or(5.0),
            noise_delay_floor_us: args
                .noise_delay_floor_us
                .or(file.threshold.noise_delay_floor_us)
                .unwrap_or(2.0),
            kf: args.kf.or(file.output.kf),
            level: args.level.or(file.coherence.level).unwrap_or(0.5),
            out: args
                .out
                .clone()
                .or(file.output.dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        for (name, len, tapers) in [
            ("time", self.region_time, self.tapers_time),
            ("frequency", self.region_freq, self.tapers_freq),
        ] {
            if len < 2 || len % 2 != 0 {
                return bad(format!("{name} region extent {len} must be even and at least 2"));
            }
            if tapers < 1 || 2 * tapers >= len {
                return bad(format!("{tapers} {name} tapers need 1 <= I < extent/2 ({len})"));
            }
        }
        if !self.guard_db.is_finite() {
            return bad("guard must be a finite dB value".into());
        }
        if !(self.noise_delay_floor_us.is_finite() && self.noise_delay_floor_us >= 0.0) {
            return bad("noise delay floor must be non-negative".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("coherence level {} outside (0, 1)", self.level));
        }
        if self.kf == Some(0) {
            return bad("frequency regions are numbered from 1".into());
        }
        if let Source::Preset { snapshots, links, .. } = &self.source {
            if *links == 0 {
                return bad("at least one link is needed".into());
            }
            if *snapshots < 2 * self.region_time {
                return bad(format!(
                    "{snapshots} snapshots hold no interior region of {} snapshots",
                    self.region_time
                ));
            }
        }
        Ok(())
    }

    pub fn noise_delay_floor(&self) -> f64 {
        self.noise_delay_floor_us * 1e-6
    }

    /// Canonical JSON of the settings, without the output directory.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
