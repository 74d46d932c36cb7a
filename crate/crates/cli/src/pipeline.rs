//! Channel loading and the estimation chain shared by the subcommands.

use std::fmt::Write as _;

use serde::Serialize;
use vlsf_core::{
    build_taper_set, coherence, combine_links, dsd, estimate_all_links, fit_mixture, pdp,
    preset, read_container, rms_spreads, synthesize, threshold_lsf, CoherenceReport, GridParams,
    LocalScatteringFunction, MarginalProfile, MixtureFit, PresetName, RegionSpec, SpreadSeries,
    ThresholdConfig, ThresholdReport, TimeVariantFrequencyResponse,
};

use crate::config::{PipelineConfig, Source};
use crate::error::{CliError, CoreResultExt, Result, Stage};

/// Synthesizes the configured preset or reads the input container.
pub fn load_channel(cfg: &PipelineConfig) -> Result<TimeVariantFrequencyResponse> {
    match &cfg.source {
        Source::File { path } => {
            read_container(path).map_err(|e| CliError::from_core(e, Stage::Input, Some(path)))
        }
        Source::Preset {
            name,
            seed,
            snapshots,
            links,
        } => {
            let name: PresetName = name.parse().at(Stage::Config)?;
            let grid = GridParams {
                num_links: *links,
                ..GridParams::reference(*snapshots).at(Stage::Config)?
            };
            let paths = preset(name, &grid, *seed).at(Stage::Config)?;
            synthesize(&paths, &grid, name.noise_power(), *seed).at(Stage::Config)
        }
    }
}

/// Everything from per-link LSFs down to spreads.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub per_link: Vec<LocalScatteringFunction>,
    pub combined: LocalScatteringFunction,
    pub thresholded: LocalScatteringFunction,
    pub threshold: ThresholdReport,
    pub pdp: MarginalProfile,
    pub dsd: MarginalProfile,
    pub spreads: SpreadSeries,
}

/// Per-link LSFs and their link average.
pub fn estimate(
    tvfr: &TimeVariantFrequencyResponse,
    cfg: &PipelineConfig,
) -> Result<(Vec<LocalScatteringFunction>, LocalScatteringFunction)> {
    let region = RegionSpec::new(cfg.region_time, cfg.region_freq);
    region.validate(tvfr.grid()).at(Stage::Config)?;
    let kf_total = region.regions_freq(tvfr.grid());
    if let Some(kf) = cfg.kf {
        if kf > kf_total {
            return Err(CliError::Config(format!(
                "frequency region {kf} out of range 1..={kf_total}"
            )));
        }
    }
    let tapers =
        build_taper_set(cfg.region_time, cfg.region_freq, cfg.tapers_time, cfg.tapers_freq)
            .at(Stage::Config)?;
    let per_link = estimate_all_links(tvfr, region, &tapers).at(Stage::Config)?;
    let combined = combine_links(&per_link).at(Stage::Numeric)?;
    Ok((per_link, combined))
}

pub fn analyse(tvfr: &TimeVariantFrequencyResponse, cfg: &PipelineConfig) -> Result<Analysis> {
    let (per_link, combined) = estimate(tvfr, cfg)?;
    let threshold_cfg = ThresholdConfig {
        guard_db: cfg.guard_db,
        noise_delay_floor: cfg.noise_delay_floor(),
        ..ThresholdConfig::default()
    };
    let (thresholded, threshold) = threshold_lsf(&combined, &threshold_cfg).at(Stage::Config)?;
    let pdp = pdp(&thresholded);
    let dsd = dsd(&thresholded);
    let spreads = rms_spreads(&pdp, &dsd).at(Stage::Numeric)?;
    Ok(Analysis {
        per_link,
        combined,
        thresholded,
        threshold,
        pdp,
        dsd,
        spreads,
    })
}

/// Pooled spread samples in table units: nanoseconds and hertz.
pub fn pooled_samples(spreads: &SpreadSeries, kf: Option<usize>) -> (Vec<f64>, Vec<f64>) {
    let delay = spreads.delay_samples(kf).into_iter().map(|s| s * 1e9).collect();
    (delay, spreads.doppler_samples(kf))
}

#[derive(Debug, Clone, Serialize)]
pub struct FitRecord {
    pub metric: String,
    pub unit: String,
    #[serde(flatten)]
    pub fit: MixtureFit,
}

pub fn fit_record(metric: &str, unit: &str, samples: &[f64]) -> Result<FitRecord> {
    // positivity and sample count are properties of the data
    let fit = fit_mixture(samples).at(Stage::Numeric)?;
    Ok(FitRecord {
        metric: metric.into(),
        unit: unit.into(),
        fit,
    })
}

/// Coherence from the pooled maximum spreads.
pub fn pooled_coherence(spreads: &SpreadSeries, cfg: &PipelineConfig) -> Result<CoherenceReport> {
    let max = |v: Vec<f64>| v.into_iter().fold(f64::NAN, f64::max);
    let tau = max(spreads.delay_samples(cfg.kf));
    let nu = max(spreads.doppler_samples(cfg.kf));
    if tau.is_nan() || nu.is_nan() {
        return Err(CliError::Numeric("every region was masked by the threshold".into()));
    }
    coherence(tau, nu, cfg.level).at(Stage::Numeric)
}

/// One row per link (and `combined`) and region: total power and the
/// location of the strongest cell.
pub fn lsf_summary(per_link: &[LocalScatteringFunction], combined: &LocalScatteringFunction) -> String {
    let mut out = String::from("link,k_t,k_f,total_power,peak_n,peak_p,peak_delay_s,peak_doppler_hz,peak_power\n");
    let labelled = per_link
        .iter()
        .enumerate()
        .map(|(i, l)| ((i + 1).to_string(), l))
        .chain(std::iter::once(("combined".to_string(), combined)));
    for (label, lsf) in labelled {
        let m = lsf.region().time_len;
        for kt in 1..=lsf.regions_time() {
            for kf in 1..=lsf.regions_freq() {
                let block = lsf.region_values(kt, kf);
                let total: f64 = block.iter().sum();
                let (idx, peak) = block
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
                let n = idx / m;
                let p = (idx % m) as isize - (m / 2) as isize;
                let _ = writeln!(
                    out,
                    "{label},{kt},{kf},{total:e},{n},{p},{:e},{:e},{peak:e}",
                    n as f64 * lsf.delay_scale(),
                    p as f64 * lsf.doppler_scale()
                );
            }
        }
    }
    out
}

/// Per-region noise floor and threshold.
pub fn threshold_csv(report: &ThresholdReport, regions_freq: usize) -> String {
    let mut out = String::from("k_t,k_f,noise_floor,threshold\n");
    for (r, (f, t)) in report.noise_floor.iter().zip(&report.threshold).enumerate() {
        let _ = writeln!(out, "{},{},{f:e},{t:e}", r / regions_freq + 1, r % regions_freq + 1);
    }
    out
}

/// Grid-derived constants of a run.
#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub links: usize,
    pub snapshots: usize,
    pub freq_bins: usize,
    pub snapshot_interval_s: f64,
    pub freq_bin_hz: f64,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub delay_bin_s: f64,
    pub doppler_bin_hz: f64,
    pub region_duration_s: f64,
    pub region_bandwidth_hz: f64,
    pub regions_time: usize,
    pub regions_freq: usize,
    pub max_delay_s: f64,
    pub max_doppler_hz: f64,
}

impl GridSummary {
    pub fn new(grid: &GridParams, region: &RegionSpec) -> Self {
        GridSummary {
            links: grid.num_links,
            snapshots: grid.num_snapshots,
            freq_bins: grid.num_freq_bins,
            snapshot_interval_s: grid.snapshot_interval,
            freq_bin_hz: grid.freq_bin,
            bandwidth_hz: grid.bandwidth,
            carrier_hz: grid.carrier,
            delay_bin_s: region.delay_scale(grid),
            doppler_bin_hz: region.doppler_scale(grid),
            region_duration_s: region.duration(grid),
            region_bandwidth_hz: region.bandwidth(grid),
            regions_time: region.regions_time(grid),
            regions_freq: region.regions_freq(grid),
            max_delay_s: grid.max_delay(),
            max_doppler_hz: grid.max_doppler(),
        }
    }
}

/// Reads a sample file: one value per line, first comma-separated column,
/// blank lines and `#` comments skipped, one optional header line.
pub fn parse_samples(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.split(',').next().unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if out.is_empty() && i == 0 => continue,
            Err(_) => return Err(CliError::Input(format!("line {}: '{field}' is not a number", i + 1))),
        }
    }
    Ok(out)
}
