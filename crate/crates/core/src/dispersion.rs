//! RMS delay and Doppler spreads per region, and coherence bounds.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginal::{MarginalKind, MarginalProfile};

/// Time-frequency-varying spreads laid out `[k_t][k_f]`. Masked regions had
/// no power left after thresholding and hold `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadSeries {
    pub regions_time: usize,
    pub regions_freq: usize,
    /// RMS delay spread, seconds.
    pub sigma_tau: Vec<f64>,
    /// RMS Doppler spread, Hz.
    pub sigma_nu: Vec<f64>,
    pub masked: Vec<bool>,
}

impl SpreadSeries {
    fn index(&self, k_t: usize, k_f: usize) -> usize {
        (k_t - 1) * self.regions_freq + (k_f - 1)
    }

    pub fn delay_spread(&self, k_t: usize, k_f: usize) -> Option<f64> {
        let i = self.index(k_t, k_f);
        (!self.masked[i]).then(|| self.sigma_tau[i])
    }

    pub fn doppler_spread(&self, k_t: usize, k_f: usize) -> Option<f64> {
        let i = self.index(k_t, k_f);
        (!self.masked[i]).then(|| self.sigma_nu[i])
    }

    /// Unmasked delay spreads, optionally restricted to one frequency region.
    pub fn delay_samples(&self, k_f: Option<usize>) -> Vec<f64> {
        self.collect(&self.sigma_tau, k_f)
    }

    pub fn doppler_samples(&self, k_f: Option<usize>) -> Vec<f64> {
        self.collect(&self.sigma_nu, k_f)
    }

    fn collect(&self, values: &[f64], k_f: Option<usize>) -> Vec<f64> {
        (0..values.len())
            .filter(|&i| !self.masked[i])
            .filter(|&i| k_f.is_none_or(|kf| i % self.regions_freq == kf - 1))
            .map(|i| values[i])
            .collect()
    }

    /// CSV rows `(k_t, k_f, sigma_tau_s, sigma_nu_hz, masked)`; masked
    /// spreads are left empty.
    pub fn to_csv(&self, k_f: Option<usize>) -> String {
        let mut out = String::from("k_t,k_f,sigma_tau_s,sigma_nu_hz,masked\n");
        for kt in 1..=self.regions_time {
            for kf in 1..=self.regions_freq {
                if k_f.is_some_and(|sel| sel != kf) {
                    continue;
                }
                let i = self.index(kt, kf);
                if self.masked[i] {
                    let _ = writeln!(out, "{kt},{kf},,,true");
                } else {
                    let _ = writeln!(
                        out,
                        "{kt},{kf},{:e},{:e},false",
                        self.sigma_tau[i], self.sigma_nu[i]
                    );
                }
            }
        }
        out
    }
}

/// Square root of the second central moment of `powers` at `positions`.
/// `None` when the total power is zero.
pub fn rms_spread(positions: impl Iterator<Item = f64> + Clone, powers: &[f64]) -> Option<f64> {
    let total: f64 = powers.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mean = positions
        .clone()
        .zip(powers)
        .map(|(x, p)| x * p)
        .sum::<f64>()
        / total;
    let var = positions
        .zip(powers)
        .map(|(x, p)| (x - mean) * (x - mean) * p)
        .sum::<f64>()
        / total;
    Some(var.max(0.0).sqrt())
}

/// RMS delay spread from a PDP and RMS Doppler spread from a DSD.
pub fn rms_spreads(pdp: &MarginalProfile, dsd: &MarginalProfile) -> Result<SpreadSeries> {
    if pdp.kind() != MarginalKind::Delay || dsd.kind() != MarginalKind::Doppler {
        return Err(Error::domain("expected a delay profile and a Doppler profile"));
    }
    if pdp.regions_time() != dsd.regions_time() || pdp.regions_freq() != dsd.regions_freq() {
        return Err(Error::domain("PDP and DSD region grids differ"));
    }
    let regions = pdp.regions_time() * pdp.regions_freq();
    let mut sigma_tau = Vec::with_capacity(regions);
    let mut sigma_nu = Vec::with_capacity(regions);
    let mut masked = Vec::with_capacity(regions);
    let tau_s = pdp.bin_scale();
    let nu_s = dsd.bin_scale();
    let half = (dsd.bins() / 2) as f64;
    for r in 0..regions {
        let st = rms_spread(
            (0..pdp.bins()).map(|n| n as f64 * tau_s),
            pdp.region_by_index(r),
        );
        let sn = rms_spread(
            (0..dsd.bins()).map(|i| (i as f64 - half) * nu_s),
            dsd.region_by_index(r),
        );
        match (st, sn) {
            (Some(t), Some(n)) => {
                sigma_tau.push(t);
                sigma_nu.push(n);
                masked.push(false);
            }
            _ => {
                sigma_tau.push(f64::NAN);
                sigma_nu.push(f64::NAN);
                masked.push(true);
            }
        }
    }
    Ok(SpreadSeries {
        regions_time: pdp.regions_time(),
        regions_freq: pdp.regions_freq(),
        sigma_tau,
        sigma_nu,
        masked,
    })
}

/// Coherence bandwidth and time at correlation level `level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    /// Hz
    pub bandwidth: f64,
    /// seconds
    pub time: f64,
    pub level: f64,
    pub sigma_tau_ref: f64,
    pub sigma_nu_ref: f64,
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("coherence level {level} outside (0, 1)")));
    }
    Ok(())
}

fn check_spread(sigma: f64) -> Result<()> {
    if sigma == 0.0 {
        return Err(Error::UndefinedCoherence);
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::domain(format!("spread {sigma} must be positive and finite")));
    }
    Ok(())
}

/// `arccos(k) / (2 pi sigma_tau)`, Hz.
pub fn coherence_bandwidth(sigma_tau: f64, level: f64) -> Result<f64> {
    check_level(level)?;
    check_spread(sigma_tau)?;
    Ok(level.acos() / (2.0 * PI * sigma_tau))
}

/// `arccos(k) / (2 pi sigma_nu)`, seconds.
pub fn coherence_time(sigma_nu: f64, level: f64) -> Result<f64> {
    check_level(level)?;
    check_spread(sigma_nu)?;
    Ok(level.acos() / (2.0 * PI * sigma_nu))
}

pub fn coherence(sigma_tau_ref: f64, sigma_nu_ref: f64, level: f64) -> Result<CoherenceReport> {
    Ok(CoherenceReport {
        bandwidth: coherence_bandwidth(sigma_tau_ref, level)?,
        time: coherence_time(sigma_nu_ref, level)?,
        level,
        sigma_tau_ref,
        sigma_nu_ref,
    })
}
