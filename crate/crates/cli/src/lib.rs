//! Command-line pipeline around `vlsf-core`: synthesize or load channels,
//! estimate local scattering functions, and export spreads, mixture fits
//! and coherence figures as CSV/JSON with a digest manifest.

pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use vlsf_core::container::{encode_lsf, encode_tvfr};
use vlsf_core::{coherence, LsfDump, RegionSpec};

use crate::config::{PipelineArgs, PipelineConfig, Source};
use crate::error::{CliError, CoreResultExt, Result, Stage};
use crate::output::Artifacts;
use crate::pipeline::{
    analyse, estimate, fit_record, load_channel, lsf_summary, parse_samples, pooled_coherence,
    pooled_samples, threshold_csv, GridSummary,
};

#[derive(Debug, Parser)]
#[command(name = "vlsf", version, about = "Local scattering function analysis of vehicular channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a preset channel into a TVFR container
    Synth(PipelineArgs),
    /// Per-link and combined LSF
    Estimate(PipelineArgs),
    /// PDP, DSD and RMS spreads per region
    Spreads(PipelineArgs),
    /// Truncated mixture fits of pooled spreads, or of a sample file
    Fit(FitArgs),
    /// Coherence bandwidth and time
    Coherence(CoherenceArgs),
    /// Full pipeline with every artifact and a manifest
    Report(PipelineArgs),
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Fit these values (one per line) instead of running the pipeline
    #[arg(long)]
    pub samples: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CoherenceArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, requires = "sigma_nu_hz")]
    pub sigma_tau_ns: Option<f64>,
    #[arg(long, requires = "sigma_tau_ns")]
    pub sigma_nu_hz: Option<f64>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(&PipelineConfig::resolve(&a, true)?),
        Command::Estimate(a) => estimate_cmd(&PipelineConfig::resolve(&a, true)?),
        Command::Spreads(a) => spreads_cmd(&PipelineConfig::resolve(&a, true)?),
        Command::Fit(a) => fit_cmd(&a),
        Command::Coherence(a) => coherence_cmd(&a),
        Command::Report(a) => report(&PipelineConfig::resolve(&a, true)?),
    }
}

fn grid_json(out: &mut Artifacts, tvfr: &vlsf_core::TimeVariantFrequencyResponse, cfg: &PipelineConfig) {
    let region = RegionSpec::new(cfg.region_time, cfg.region_freq);
    out.add_json("grid.json", &GridSummary::new(tvfr.grid(), &region));
}

fn finish(out: Artifacts, command: &str, cfg: &PipelineConfig) -> Result<()> {
    out.write(&cfg.out, command, cfg)?;
    for name in out.names() {
        println!("{}", cfg.out.join(name).display());
    }
    Ok(())
}

fn synth(cfg: &PipelineConfig) -> Result<()> {
    if !matches!(cfg.source, Source::Preset { .. }) {
        return Err(CliError::Config("synth needs --preset".into()));
    }
    let tvfr = load_channel(cfg)?;
    let mut out = Artifacts::default();
    out.add("channel.tvfr", encode_tvfr(&tvfr).at(Stage::Numeric)?);
    grid_json(&mut out, &tvfr, cfg);
    finish(out, "synth", cfg)
}

fn estimate_cmd(cfg: &PipelineConfig) -> Result<()> {
    let tvfr = load_channel(cfg)?;
    let (per_link, combined) = estimate(&tvfr, cfg)?;
    let mut out = Artifacts::default();
    grid_json(&mut out, &tvfr, cfg);
    out.add("lsf_summary.csv", lsf_summary(&per_link, &combined));
    out.add("lsf_combined.lsf", encode_lsf(&LsfDump::from_lsf(&combined)).at(Stage::Numeric)?);
    finish(out, "estimate", cfg)
}

fn spreads_cmd(cfg: &PipelineConfig) -> Result<()> {
    let tvfr = load_channel(cfg)?;
    let a = analyse(&tvfr, cfg)?;
    let mut out = Artifacts::default();
    grid_json(&mut out, &tvfr, cfg);
    out.add("threshold.csv", threshold_csv(&a.threshold, a.spreads.regions_freq));
    out.add("pdp.csv", a.pdp.to_csv());
    out.add("dsd.csv", a.dsd.to_csv());
    out.add("spreads.csv", a.spreads.to_csv(cfg.kf));
    finish(out, "spreads", cfg)
}

fn fit_cmd(args: &FitArgs) -> Result<()> {
    let Some(path) = &args.samples else {
        let cfg = PipelineConfig::resolve(&args.pipeline, true)?;
        let tvfr = load_channel(&cfg)?;
        let a = analyse(&tvfr, &cfg)?;
        let mut out = Artifacts::default();
        add_fits(&mut out, &a.spreads, &cfg)?;
        return finish(out, "fit", &cfg);
    };
    let cfg = PipelineConfig::resolve(&args.pipeline, false)?;
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::InputNotFound(path.clone()),
        _ => CliError::Io(e),
    })?;
    let samples = parse_samples(&text)?;
    let record = fit_record("samples", "as-given", &samples)?;
    let mut out = Artifacts::default();
    out.add("fit_cdf.csv", record.fit.cdf_csv(&samples));
    out.add_json("fit.json", &record);
    finish(out, "fit", &cfg)
}

fn add_fits(out: &mut Artifacts, spreads: &vlsf_core::SpreadSeries, cfg: &PipelineConfig) -> Result<()> {
    let (delay, doppler) = pooled_samples(spreads, cfg.kf);
    let d = fit_record("rms_delay_spread", "ns", &delay)?;
    let n = fit_record("rms_doppler_spread", "Hz", &doppler)?;
    out.add_json("fit_delay.json", &d);
    out.add("cdf_delay.csv", d.fit.cdf_csv(&delay));
    out.add_json("fit_doppler.json", &n);
    out.add("cdf_doppler.csv", n.fit.cdf_csv(&doppler));
    Ok(())
}

fn coherence_cmd(args: &CoherenceArgs) -> Result<()> {
    if let (Some(tau), Some(nu)) = (args.sigma_tau_ns, args.sigma_nu_hz) {
        let cfg = PipelineConfig::resolve(&args.pipeline, false)?;
        let report = coherence(tau * 1e-9, nu, cfg.level).at(Stage::Config)?;
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        return Ok(());
    }
    let cfg = PipelineConfig::resolve(&args.pipeline, true)?;
    let tvfr = load_channel(&cfg)?;
    let a = analyse(&tvfr, &cfg)?;
    let report = pooled_coherence(&a.spreads, &cfg)?;
    let mut out = Artifacts::default();
    out.add_json("coherence.json", &report);
    finish(out, "coherence", &cfg)
}

fn report(cfg: &PipelineConfig) -> Result<()> {
    let tvfr = load_channel(cfg)?;
    let a = analyse(&tvfr, cfg)?;
    let mut out = Artifacts::default();
    grid_json(&mut out, &tvfr, cfg);
    out.add("lsf_summary.csv", lsf_summary(&a.per_link, &a.combined));
    out.add("threshold.csv", threshold_csv(&a.threshold, a.spreads.regions_freq));
    out.add("pdp.csv", a.pdp.to_csv());
    out.add("dsd.csv", a.dsd.to_csv());
    out.add("spreads.csv", a.spreads.to_csv(cfg.kf));
    add_fits(&mut out, &a.spreads, cfg)?;
    out.add_json("coherence.json", &pooled_coherence(&a.spreads, cfg)?);
    finish(out, "report", cfg)
}
