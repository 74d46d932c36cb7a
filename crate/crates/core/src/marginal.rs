//! Delay and Doppler marginals of the LSF, and the noise-power threshold.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsf::LocalScatteringFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginalKind {
    Delay,
    Doppler,
}

/// PDP or DSD per region, laid out `[k_t][k_f][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalProfile {
    kind: MarginalKind,
    regions_time: usize,
    regions_freq: usize,
    bins: usize,
    bin_scale: f64,
    values: Vec<f64>,
}

impl MarginalProfile {
    /// Wraps precomputed marginal values.
    pub fn from_values(
        kind: MarginalKind,
        regions_time: usize,
        regions_freq: usize,
        bins: usize,
        bin_scale: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != regions_time * regions_freq * bins {
            return Err(Error::domain("marginal value count does not match its shape"));
        }
        if kind == MarginalKind::Doppler && !bins.is_multiple_of(2) {
            return Err(Error::domain("Doppler marginals need an even bin count"));
        }
        if !(bin_scale.is_finite() && bin_scale > 0.0) {
            return Err(Error::domain("bin scale must be positive"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain("marginal values must be finite and non-negative"));
        }
        Ok(Self {
            kind,
            regions_time,
            regions_freq,
            bins,
            bin_scale,
            values,
        })
    }

    pub fn kind(&self) -> MarginalKind {
        self.kind
    }

    pub fn regions_time(&self) -> usize {
        self.regions_time
    }

    pub fn regions_freq(&self) -> usize {
        self.regions_freq
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// `tau_s` in seconds for delay profiles, `nu_s` in Hz for Doppler.
    pub fn bin_scale(&self) -> f64 {
        self.bin_scale
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Profile of region at flat index `r` (`(k_t - 1) K_f + (k_f - 1)`).
    pub fn region_by_index(&self, r: usize) -> &[f64] {
        &self.values[r * self.bins..(r + 1) * self.bins]
    }

    pub fn region_values(&self, k_t: usize, k_f: usize) -> &[f64] {
        self.region_by_index((k_t - 1) * self.regions_freq + (k_f - 1))
    }

    /// Signed bin index: `n` for delay, `p = idx - M/2` for Doppler.
    pub fn bin_index(&self, idx: usize) -> isize {
        match self.kind {
            MarginalKind::Delay => idx as isize,
            MarginalKind::Doppler => idx as isize - (self.bins / 2) as isize,
        }
    }

    /// Physical bin position in seconds or Hz.
    pub fn bin_value(&self, idx: usize) -> f64 {
        self.bin_index(idx) as f64 * self.bin_scale
    }

    /// CSV with one row per `(k_t, k_f, bin)`.
    pub fn to_csv(&self) -> String {
        let unit = match self.kind {
            MarginalKind::Delay => "delay_s",
            MarginalKind::Doppler => "doppler_hz",
        };
        let mut out = format!("k_t,k_f,bin,{unit},power\n");
        for kt in 1..=self.regions_time {
            for kf in 1..=self.regions_freq {
                for (idx, v) in self.region_values(kt, kf).iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{kt},{kf},{},{:e},{:e}",
                        self.bin_index(idx),
                        self.bin_value(idx),
                        v
                    );
                }
            }
        }
        out
    }
}

/// Power delay profile: `(1/M) sum_p C[k_t, k_f; n, p]`.
pub fn pdp(lsf: &LocalScatteringFunction) -> MarginalProfile {
    let m = lsf.region().time_len;
    let n = lsf.region().freq_len;
    let inv = 1.0 / m as f64;
    let mut values = Vec::with_capacity(lsf.region_count() * n);
    for r in 0..lsf.region_count() {
        let block = lsf.region_by_index(r);
        values.extend(block.chunks_exact(m).map(|row| row.iter().sum::<f64>() * inv));
    }
    MarginalProfile {
        kind: MarginalKind::Delay,
        regions_time: lsf.regions_time(),
        regions_freq: lsf.regions_freq(),
        bins: n,
        bin_scale: lsf.delay_scale(),
        values,
    }
}

/// Doppler power spectral density: `(1/N) sum_n C[k_t, k_f; n, p]`.
pub fn dsd(lsf: &LocalScatteringFunction) -> MarginalProfile {
    let m = lsf.region().time_len;
    let n = lsf.region().freq_len;
    let inv = 1.0 / n as f64;
    let mut values = Vec::with_capacity(lsf.region_count() * m);
    for r in 0..lsf.region_count() {
        let block = lsf.region_by_index(r);
        let mut acc = vec![0.0; m];
        for row in block.chunks_exact(m) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        values.extend(acc.into_iter().map(|v| v * inv));
    }
    MarginalProfile {
        kind: MarginalKind::Doppler,
        regions_time: lsf.regions_time(),
        regions_freq: lsf.regions_freq(),
        bins: m,
        bin_scale: lsf.doppler_scale(),
        values,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FloorStatistic {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    /// Threshold above the noise floor, dB.
    pub guard_db: f64,
    /// Cells with delay strictly beyond this value (seconds) form the noise
    /// reference.
    pub noise_delay_floor: f64,
    pub statistic: FloorStatistic,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            guard_db: 5.0,
            noise_delay_floor: 2e-6,
            statistic: FloorStatistic::Mean,
        }
    }
}

/// Per-region floors and thresholds from [`threshold_lsf`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub noise_floor: Vec<f64>,
    pub threshold: Vec<f64>,
    pub bins_retained: usize,
}

/// First delay bin whose delay exceeds `noise_delay_floor`.
pub fn first_noise_bin(lsf: &LocalScatteringFunction, noise_delay_floor: f64) -> Option<usize> {
    let tau = lsf.delay_scale();
    (0..lsf.region().freq_len).find(|&n| n as f64 * tau > noise_delay_floor)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Zeroes every cell below `floor * 10^(guard_db/10)`, with the floor taken
/// per region from the cells beyond the noise delay.
pub fn threshold_lsf(
    lsf: &LocalScatteringFunction,
    config: &ThresholdConfig,
) -> Result<(LocalScatteringFunction, ThresholdReport)> {
    if !config.guard_db.is_finite() {
        return Err(Error::Config("guard must be a finite dB value".into()));
    }
    let start = first_noise_bin(lsf, config.noise_delay_floor).ok_or_else(|| {
        Error::Config(format!(
            "no delay bins beyond {} s (max delay {} s)",
            config.noise_delay_floor,
            (lsf.region().freq_len - 1) as f64 * lsf.delay_scale()
        ))
    })?;
    let m = lsf.region().time_len;
    let gain = 10f64.powf(config.guard_db / 10.0);
    let mut out = lsf.clone();
    let cells = m * lsf.region().freq_len;
    let mut floors = Vec::with_capacity(lsf.region_count());
    let mut thresholds = Vec::with_capacity(lsf.region_count());
    let mut retained = 0;
    for block in out.values_mut().chunks_exact_mut(cells) {
        let tail = &block[start * m..];
        let floor = match config.statistic {
            FloorStatistic::Mean => tail.iter().sum::<f64>() / tail.len() as f64,
            FloorStatistic::Median => median(&mut tail.to_vec()),
        };
        let threshold = floor * gain;
        for v in block.iter_mut() {
            if *v < threshold {
                *v = 0.0;
            } else if *v > 0.0 {
                retained += 1;
            }
        }
        floors.push(floor);
        thresholds.push(threshold);
    }
    Ok((
        out,
        ThresholdReport {
            noise_floor: floors,
            threshold: thresholds,
            bins_retained: retained,
        },
    ))
}
