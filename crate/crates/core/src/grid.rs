//! Measurement grid and the sampled time-variant frequency response.
//!
//! Samples are stored at 32-bit precision, which is exactly what the TVFR
//! container holds on disk. All processing widens them to `f64` first.

use num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Snapshot repetition time of the reference sounder setup, seconds.
pub const DEFAULT_SNAPSHOT_INTERVAL: f64 = 307.2e-6;
/// Measured bandwidth, Hz.
pub const DEFAULT_BANDWIDTH: f64 = 240e6;
/// Frequency bins across the measured bandwidth.
pub const DEFAULT_FREQ_BINS: usize = 769;
/// 4x4 MIMO.
pub const DEFAULT_LINKS: usize = 16;
pub const DEFAULT_CARRIER: f64 = 5.6e9;

const FREQ_BIN_REL_TOL: f64 = 1e-12;

/// Sampling grid of a time-variant frequency response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    /// Snapshot interval `t_s`, seconds.
    pub snapshot_interval: f64,
    /// Frequency bin spacing `f_s = B / Q`, Hz.
    pub freq_bin: f64,
    /// Total bandwidth `B`, Hz.
    pub bandwidth: f64,
    pub num_snapshots: usize,
    pub num_freq_bins: usize,
    pub num_links: usize,
    pub carrier: f64,
}

impl GridParams {
    /// Builds a grid, deriving the frequency bin spacing from `B / Q`.
    pub fn new(
        snapshot_interval: f64,
        bandwidth: f64,
        num_snapshots: usize,
        num_freq_bins: usize,
        num_links: usize,
        carrier: f64,
    ) -> Result<Self> {
        if num_freq_bins == 0 {
            return Err(Error::domain("number of frequency bins must be at least 1"));
        }
        Self::with_freq_bin(
            snapshot_interval,
            bandwidth / num_freq_bins as f64,
            bandwidth,
            num_snapshots,
            num_freq_bins,
            num_links,
            carrier,
        )
    }

    /// Builds a grid from explicit values, checking `f_s * Q = B`.
    pub fn with_freq_bin(
        snapshot_interval: f64,
        freq_bin: f64,
        bandwidth: f64,
        num_snapshots: usize,
        num_freq_bins: usize,
        num_links: usize,
        carrier: f64,
    ) -> Result<Self> {
        let grid = GridParams {
            snapshot_interval,
            freq_bin,
            bandwidth,
            num_snapshots,
            num_freq_bins,
            num_links,
            carrier,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Reference sounder grid with `num_snapshots` snapshots.
    pub fn reference(num_snapshots: usize) -> Result<Self> {
        Self::new(
            DEFAULT_SNAPSHOT_INTERVAL,
            DEFAULT_BANDWIDTH,
            num_snapshots,
            DEFAULT_FREQ_BINS,
            DEFAULT_LINKS,
            DEFAULT_CARRIER,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.snapshot_interval) {
            return Err(Error::domain("snapshot interval must be positive"));
        }
        if !positive(self.freq_bin) {
            return Err(Error::domain("frequency bin spacing must be positive"));
        }
        if !positive(self.bandwidth) {
            return Err(Error::domain("bandwidth must be positive"));
        }
        if !self.carrier.is_finite() {
            return Err(Error::domain("carrier frequency must be finite"));
        }
        if self.num_snapshots == 0 || self.num_freq_bins == 0 || self.num_links == 0 {
            return Err(Error::domain(
                "snapshot, frequency bin and link counts must be at least 1",
            ));
        }
        let implied = self.freq_bin * self.num_freq_bins as f64;
        if ((implied - self.bandwidth) / self.bandwidth).abs() > FREQ_BIN_REL_TOL {
            return Err(Error::domain(format!(
                "frequency bin {} Hz times {} bins does not equal bandwidth {} Hz",
                self.freq_bin, self.num_freq_bins, self.bandwidth
            )));
        }
        Ok(())
    }

    /// Largest Doppler shift representable without aliasing, `1 / (2 t_s)`.
    pub fn max_doppler(&self) -> f64 {
        0.5 / self.snapshot_interval
    }

    /// Largest delay representable on the frequency grid, `1 / f_s`.
    pub fn max_delay(&self) -> f64 {
        1.0 / self.freq_bin
    }

    pub fn duration(&self) -> f64 {
        self.num_snapshots as f64 * self.snapshot_interval
    }

    pub fn sample_count(&self) -> usize {
        self.num_links * self.num_snapshots * self.num_freq_bins
    }
}

/// Maps a TX/RX antenna pair of the 4x4 array to its link index `1..=16`.
pub fn link_index(n_tx: usize, n_rx: usize) -> Result<usize> {
    if !(1..=4).contains(&n_tx) || !(1..=4).contains(&n_rx) {
        return Err(Error::domain(format!(
            "antenna indices must lie in 1..=4, got tx={n_tx} rx={n_rx}"
        )));
    }
    Ok(4 * (n_tx - 1) + (5 - n_rx))
}

/// Sampled `H_l[m, q]` over all links, snapshots and frequency bins.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVariantFrequencyResponse {
    grid: GridParams,
    samples: Vec<Complex32>,
}

impl TimeVariantFrequencyResponse {
    /// Wraps `samples` laid out link-major, then snapshot, then frequency bin.
    pub fn new(grid: GridParams, samples: Vec<Complex32>) -> Result<Self> {
        grid.validate()?;
        if samples.len() != grid.sample_count() {
            return Err(Error::domain(format!(
                "expected {} samples for {}x{}x{} grid, got {}",
                grid.sample_count(),
                grid.num_links,
                grid.num_snapshots,
                grid.num_freq_bins,
                samples.len()
            )));
        }
        if let Some(i) = samples
            .iter()
            .position(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(Error::domain(format!("non-finite sample at flat index {i}")));
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: GridParams) -> Result<Self> {
        grid.validate()?;
        let n = grid.sample_count();
        Ok(Self {
            grid,
            samples: vec![Complex32::new(0.0, 0.0); n],
        })
    }

    pub fn grid(&self) -> &GridParams {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex32] {
        &self.samples
    }

    /// Samples of one link (1-based), `S * Q` values in snapshot-major order.
    pub fn link(&self, link: usize) -> Result<&[Complex32]> {
        if link == 0 || link > self.grid.num_links {
            return Err(Error::domain(format!(
                "link index {link} outside 1..={}",
                self.grid.num_links
            )));
        }
        let per_link = self.grid.num_snapshots * self.grid.num_freq_bins;
        let start = (link - 1) * per_link;
        Ok(&self.samples[start..start + per_link])
    }

    /// Sample `H_link[m, q]` widened to double precision.
    pub fn get(&self, link: usize, m: usize, q: usize) -> Complex64 {
        let g = &self.grid;
        let c = self.samples[((link - 1) * g.num_snapshots + m) * g.num_freq_bins + q];
        Complex64::new(c.re as f64, c.im as f64)
    }

    pub fn into_parts(self) -> (GridParams, Vec<Complex32>) {
        (self.grid, self.samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn link_index_examples() {
        assert_eq!(link_index(1, 4).unwrap(), 1);
        assert_eq!(link_index(4, 1).unwrap(), 16);
        assert_eq!(link_index(2, 3).unwrap(), 6);
    }

    #[test]
    fn link_index_is_bijective() {
        let mut seen = [false; 17];
        for tx in 1..=4 {
            for rx in 1..=4 {
                let l = link_index(tx, rx).unwrap();
                assert!((1..=16).contains(&l));
                assert!(!seen[l], "duplicate link {l}");
                seen[l] = true;
            }
        }
        assert!(seen[1..].iter().all(|&s| s));
    }

    #[test]
    fn link_index_out_of_range() {
        assert!(matches!(link_index(0, 1), Err(Error::Domain(_))));
        assert!(matches!(link_index(1, 5), Err(Error::Domain(_))));
    }

    #[test]
    fn reference_grid_frequency_resolution() {
        let g = GridParams::reference(32500).unwrap();
        assert!((g.freq_bin - 312_093.628).abs() < 1e-2);
        assert!((g.max_doppler() - 1627.6).abs() < 0.1);
        assert_eq!(g.num_links, 16);
    }

    #[test]
    fn inconsistent_freq_bin_rejected() {
        let err = GridParams::with_freq_bin(1e-3, 1.0e3, 1.0e6, 4, 999, 1, 0.0);
        assert!(err.is_err());
        assert!(GridParams::with_freq_bin(1e-3, 1.0e3, 1.0e6, 4, 1000, 1, 0.0).is_ok());
    }

    #[test]
    fn degenerate_grids_rejected() {
        assert!(GridParams::new(0.0, 1e6, 4, 4, 1, 0.0).is_err());
        assert!(GridParams::new(1e-3, 1e6, 0, 4, 1, 0.0).is_err());
        assert!(GridParams::new(1e-3, 1e6, 4, 4, 0, 0.0).is_err());
        assert!(GridParams::new(1e-3, -1e6, 4, 4, 1, 0.0).is_err());
    }

    #[test]
    fn shape_and_finiteness_checked() {
        let g = GridParams::new(1e-3, 8e6, 4, 8, 1, 0.0).unwrap();
        assert!(TimeVariantFrequencyResponse::new(g, vec![Complex32::new(0.0, 0.0); 31]).is_err());
        let mut s = vec![Complex32::new(0.0, 0.0); 32];
        s[7].im = f32::NAN;
        assert!(TimeVariantFrequencyResponse::new(g, s).is_err());
    }
}
