//! Multitaper estimate of the local scattering function.
//!
//! The response is tiled into consecutive `M x N` stationarity regions
//! centred at `(k_t M, k_f N)`. Each region is multiplied by every taper of
//! the set, transformed to delay-Doppler and the squared magnitudes are
//! averaged over tapers.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridParams, TimeVariantFrequencyResponse};
use crate::taper::TaperSet;

/// Extent of a stationarity region in snapshots (`M`) and bins (`N`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub time_len: usize,
    pub freq_len: usize,
}

impl RegionSpec {
    pub const DEFAULT: RegionSpec = RegionSpec {
        time_len: 128,
        freq_len: 128,
    };

    pub fn new(time_len: usize, freq_len: usize) -> Self {
        RegionSpec { time_len, freq_len }
    }

    /// Checks evenness and that the region fits in the grid.
    pub fn validate(&self, grid: &GridParams) -> Result<()> {
        if self.time_len < 2 || self.freq_len < 2 {
            return Err(Error::domain("region extents must be at least 2"));
        }
        if !self.time_len.is_multiple_of(2) || !self.freq_len.is_multiple_of(2) {
            return Err(Error::domain(format!(
                "region extents must be even, got {}x{}",
                self.time_len, self.freq_len
            )));
        }
        if self.time_len > grid.num_snapshots || self.freq_len > grid.num_freq_bins {
            return Err(Error::domain(format!(
                "region {}x{} larger than data {}x{}",
                self.time_len, self.freq_len, grid.num_snapshots, grid.num_freq_bins
            )));
        }
        Ok(())
    }

    /// Delay bin `tau_s = Q / (B N)`, seconds.
    pub fn delay_scale(&self, grid: &GridParams) -> f64 {
        grid.num_freq_bins as f64 / (grid.bandwidth * self.freq_len as f64)
    }

    /// Doppler bin `nu_s = 1 / (t_s M)`, Hz.
    pub fn doppler_scale(&self, grid: &GridParams) -> f64 {
        1.0 / (grid.snapshot_interval * self.time_len as f64)
    }

    /// Number of time regions `floor(S/M - 1)`.
    pub fn regions_time(&self, grid: &GridParams) -> usize {
        (grid.num_snapshots / self.time_len).saturating_sub(1)
    }

    /// Number of frequency regions `floor(Q/N - 1)`.
    pub fn regions_freq(&self, grid: &GridParams) -> usize {
        (grid.num_freq_bins / self.freq_len).saturating_sub(1)
    }

    /// Region duration `M t_s`, seconds.
    pub fn duration(&self, grid: &GridParams) -> f64 {
        self.time_len as f64 * grid.snapshot_interval
    }

    /// Region bandwidth `N f_s`, Hz.
    pub fn bandwidth(&self, grid: &GridParams) -> f64 {
        self.freq_len as f64 * grid.freq_bin
    }
}

/// Non-negative LSF values laid out `[k_t][k_f][n][p]`, `p` ascending from
/// `-M/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalScatteringFunction {
    grid: GridParams,
    region: RegionSpec,
    regions_time: usize,
    regions_freq: usize,
    values: Vec<f64>,
}

impl LocalScatteringFunction {
    /// Wraps precomputed values. The number of regions follows from the
    /// grid and region extents.
    pub fn from_values(grid: GridParams, region: RegionSpec, values: Vec<f64>) -> Result<Self> {
        region.validate(&grid)?;
        let kt = region.regions_time(&grid);
        let kf = region.regions_freq(&grid);
        let expected = kt * kf * region.time_len * region.freq_len;
        if values.len() != expected {
            return Err(Error::domain(format!(
                "expected {expected} LSF values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::domain(format!(
                "LSF value at flat index {i} is negative or non-finite"
            )));
        }
        Ok(Self {
            grid,
            region,
            regions_time: kt,
            regions_freq: kf,
            values,
        })
    }

    pub fn grid(&self) -> &GridParams {
        &self.grid
    }

    pub fn region(&self) -> &RegionSpec {
        &self.region
    }

    /// `K_t`
    pub fn regions_time(&self) -> usize {
        self.regions_time
    }

    /// `K_f`
    pub fn regions_freq(&self) -> usize {
        self.regions_freq
    }

    pub fn region_count(&self) -> usize {
        self.regions_time * self.regions_freq
    }

    pub fn delay_scale(&self) -> f64 {
        self.region.delay_scale(&self.grid)
    }

    pub fn doppler_scale(&self) -> f64 {
        self.region.doppler_scale(&self.grid)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn cells(&self) -> usize {
        self.region.time_len * self.region.freq_len
    }

    /// Flat region index of 1-based `(k_t, k_f)`.
    pub fn region_index(&self, k_t: usize, k_f: usize) -> usize {
        assert!(
            (1..=self.regions_time).contains(&k_t) && (1..=self.regions_freq).contains(&k_f),
            "region ({k_t}, {k_f}) out of range"
        );
        (k_t - 1) * self.regions_freq + (k_f - 1)
    }

    /// The `N x M` block of region `(k_t, k_f)`, indexed `[n][p + M/2]`.
    pub fn region_values(&self, k_t: usize, k_f: usize) -> &[f64] {
        self.region_by_index(self.region_index(k_t, k_f))
    }

    pub fn region_by_index(&self, r: usize) -> &[f64] {
        let c = self.cells();
        &self.values[r * c..(r + 1) * c]
    }

    /// `C[k_t, k_f; n, p]` with signed Doppler index `p`.
    pub fn get(&self, k_t: usize, k_f: usize, n: usize, p: isize) -> f64 {
        let m = self.region.time_len;
        let idx = (p + (m / 2) as isize) as usize;
        self.region_values(k_t, k_f)[n * m + idx]
    }
}

struct TransformPlan {
    time: Arc<dyn Fft<f64>>,
    freq: Arc<dyn Fft<f64>>,
}

impl TransformPlan {
    fn new(m: usize, n: usize) -> Self {
        let mut planner = FftPlanner::new();
        TransformPlan {
            time: planner.plan_fft_forward(m),
            freq: planner.plan_fft_inverse(n),
        }
    }
}

fn check_inputs(
    grid: &GridParams,
    region: &RegionSpec,
    tapers: &TaperSet,
) -> Result<()> {
    region.validate(grid)?;
    if tapers.time_len() != region.time_len || tapers.freq_len() != region.freq_len {
        return Err(Error::domain(format!(
            "taper support {}x{} does not match region {}x{}",
            tapers.time_len(),
            tapers.freq_len(),
            region.time_len,
            region.freq_len
        )));
    }
    if grid.num_snapshots < 2 * region.time_len || grid.num_freq_bins < 2 * region.freq_len {
        return Err(Error::domain(format!(
            "data {}x{} holds no interior {}x{} region",
            grid.num_snapshots, grid.num_freq_bins, region.time_len, region.freq_len
        )));
    }
    Ok(())
}

/// Estimates the LSF of one region.
///
/// The sum over `m'` with `exp(-j 2 pi p m'/M)` is a forward DFT and the sum
/// over `q'` with `exp(+j 2 pi n q'/N)` an unnormalized inverse DFT. Shifting
/// the relative indices to `0..M`, `0..N` only multiplies the transform by
/// `(-1)^(p+n)`, which the squared magnitude discards.
fn estimate_region(
    link: &[num_complex::Complex32],
    grid: &GridParams,
    region: &RegionSpec,
    tapers: &TaperSet,
    plan: &TransformPlan,
    k_t: usize,
    k_f: usize,
) -> Vec<f64> {
    let m = region.time_len;
    let n = region.freq_len;
    let q_total = grid.num_freq_bins;
    let t0 = k_t * m - m / 2;
    let f0 = k_f * n - n / 2;

    let mut block = Vec::with_capacity(m * n);
    for a in 0..m {
        let row = &link[(t0 + a) * q_total + f0..(t0 + a) * q_total + f0 + n];
        block.extend(row.iter().map(|c| Complex64::new(c.re as f64, c.im as f64)));
    }

    let mut out = vec![0.0; m * n];
    let mut work = vec![Complex64::new(0.0, 0.0); m * n];
    let mut transposed = vec![Complex64::new(0.0, 0.0); m * n];
    let scratch_len = plan
        .time
        .get_inplace_scratch_len()
        .max(plan.freq.get_inplace_scratch_len());
    let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];

    for g in tapers.windows() {
        for ((w, h), gv) in work.iter_mut().zip(&block).zip(g) {
            *w = h * gv;
        }
        // frequency axis -> delay, one row per snapshot
        for row in work.chunks_exact_mut(n) {
            plan.freq.process_with_scratch(row, &mut scratch);
        }
        for a in 0..m {
            for b in 0..n {
                transposed[b * m + a] = work[a * n + b];
            }
        }
        // time axis -> Doppler, one row per delay bin
        for (d, row) in transposed.chunks_exact_mut(m).enumerate() {
            plan.time.process_with_scratch(row, &mut scratch);
            let dst = &mut out[d * m..(d + 1) * m];
            for (k, v) in row.iter().enumerate() {
                dst[(k + m / 2) % m] += v.norm_sqr();
            }
        }
    }
    let inv = 1.0 / tapers.count() as f64;
    for v in &mut out {
        *v *= inv;
    }
    out
}

/// Multitaper LSF of link `link` (1-based) over all interior regions.
///
/// Regions are evaluated in parallel; the output does not depend on the
/// schedule.
pub fn estimate_lsf(
    tvfr: &TimeVariantFrequencyResponse,
    link: usize,
    region: RegionSpec,
    tapers: &TaperSet,
) -> Result<LocalScatteringFunction> {
    let grid = *tvfr.grid();
    check_inputs(&grid, &region, tapers)?;
    let samples = tvfr.link(link)?;
    let plan = TransformPlan::new(region.time_len, region.freq_len);
    let kt = region.regions_time(&grid);
    let kf = region.regions_freq(&grid);

    let blocks: Vec<Vec<f64>> = (0..kt * kf)
        .into_par_iter()
        .map(|r| estimate_region(samples, &grid, &region, tapers, &plan, r / kf + 1, r % kf + 1))
        .collect();
    let values = blocks.concat();
    Ok(LocalScatteringFunction {
        grid,
        region,
        regions_time: kt,
        regions_freq: kf,
        values,
    })
}

/// LSF of every link, in link order.
pub fn estimate_all_links(
    tvfr: &TimeVariantFrequencyResponse,
    region: RegionSpec,
    tapers: &TaperSet,
) -> Result<Vec<LocalScatteringFunction>> {
    (1..=tvfr.grid().num_links)
        .into_par_iter()
        .map(|l| estimate_lsf(tvfr, l, region, tapers))
        .collect()
}

/// Elementwise mean over per-link LSFs.
pub fn combine_links(lsfs: &[LocalScatteringFunction]) -> Result<LocalScatteringFunction> {
    let first = lsfs
        .first()
        .ok_or_else(|| Error::domain("no LSFs to combine"))?;
    for (i, other) in lsfs.iter().enumerate().skip(1) {
        if other.grid != first.grid
            || other.region != first.region
            || other.values.len() != first.values.len()
        {
            return Err(Error::domain(format!(
                "LSF {i} differs in grid, region or shape from LSF 0"
            )));
        }
    }
    let inv = 1.0 / lsfs.len() as f64;
    let mut values = vec![0.0; first.values.len()];
    for lsf in lsfs {
        for (acc, v) in values.iter_mut().zip(&lsf.values) {
            *acc += v;
        }
    }
    for v in &mut values {
        *v *= inv;
    }
    Ok(LocalScatteringFunction {
        values,
        ..first.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taper::build_taper_set;
    use num_complex::Complex32;

    fn grid(s: usize, q: usize) -> GridParams {
        GridParams::new(1e-3, q as f64 * 1e4, s, q, 1, 0.0).unwrap()
    }

    #[test]
    fn zero_input_gives_zero_lsf() {
        let g = grid(32, 32);
        let tvfr = TimeVariantFrequencyResponse::zeros(g).unwrap();
        let tapers = build_taper_set(8, 8, 2, 2).unwrap();
        let lsf = estimate_lsf(&tvfr, 1, RegionSpec::new(8, 8), &tapers).unwrap();
        assert_eq!(lsf.regions_time(), 3);
        assert_eq!(lsf.regions_freq(), 3);
        assert!(lsf.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn region_count_formula() {
        let g = grid(1000, 300);
        let r = RegionSpec::new(128, 64);
        assert_eq!(r.regions_time(&g), 6);
        assert_eq!(r.regions_freq(&g), 3);
    }

    #[test]
    fn rejects_mismatch_and_oversize() {
        let g = grid(32, 32);
        let tvfr = TimeVariantFrequencyResponse::zeros(g).unwrap();
        let tapers = build_taper_set(8, 8, 2, 2).unwrap();
        assert!(estimate_lsf(&tvfr, 1, RegionSpec::new(8, 16), &tapers).is_err());
        let big = build_taper_set(32, 32, 2, 2).unwrap();
        assert!(estimate_lsf(&tvfr, 1, RegionSpec::new(32, 32), &big).is_err());
        assert!(estimate_lsf(&tvfr, 2, RegionSpec::new(8, 8), &tapers).is_err());
        assert!(RegionSpec::new(7, 8).validate(&g).is_err());
    }

    #[test]
    fn combine_identical_and_zero() {
        let g = grid(32, 32);
        let r = RegionSpec::new(8, 8);
        let n = 9 * 64;
        let a = LocalScatteringFunction::from_values(
            g,
            r,
            (0..n).map(|i| (i % 7) as f64 * 0.25).collect(),
        )
        .unwrap();
        let z = LocalScatteringFunction::from_values(g, r, vec![0.0; n]).unwrap();
        let same = combine_links(&[a.clone(), a.clone(), a.clone()]).unwrap();
        assert_eq!(same.values(), a.values());
        let half = combine_links(&[a.clone(), z]).unwrap();
        for (h, v) in half.values().iter().zip(a.values()) {
            assert_eq!(*h, v / 2.0);
        }
    }

    #[test]
    fn combine_rejects_shape_mismatch() {
        let r = RegionSpec::new(8, 8);
        let a = LocalScatteringFunction::from_values(grid(32, 32), r, vec![0.0; 9 * 64]).unwrap();
        let b = LocalScatteringFunction::from_values(grid(24, 32), r, vec![0.0; 6 * 64]).unwrap();
        assert!(combine_links(&[a, b]).is_err());
        assert!(combine_links(&[]).is_err());
    }

    #[test]
    fn from_values_rejects_negative() {
        let mut v = vec![0.0; 9 * 64];
        v[3] = -1e-3;
        assert!(LocalScatteringFunction::from_values(grid(32, 32), RegionSpec::new(8, 8), v).is_err());
    }

    #[test]
    fn on_grid_path_lands_on_its_bin() {
        let (m, n) = (16usize, 16usize);
        let g = grid(4 * m, 3 * n);
        let (tau_bin, nu_bin) = (3.0, -5.0);
        let mut samples = Vec::new();
        for mi in 0..g.num_snapshots {
            for qi in 0..g.num_freq_bins {
                let ph = 2.0
                    * std::f64::consts::PI
                    * (nu_bin * mi as f64 / m as f64 - tau_bin * qi as f64 / n as f64);
                samples.push(Complex32::new(ph.cos() as f32, ph.sin() as f32));
            }
        }
        let tvfr = TimeVariantFrequencyResponse::new(g, samples).unwrap();
        let tapers = build_taper_set(m, n, 2, 2).unwrap();
        let lsf = estimate_lsf(&tvfr, 1, RegionSpec::new(m, n), &tapers).unwrap();
        for kt in 1..=lsf.regions_time() {
            for kf in 1..=lsf.regions_freq() {
                let block = lsf.region_values(kt, kf);
                let (idx, _) = block
                    .iter()
                    .enumerate()
                    .fold((0, -1.0), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
                assert_eq!(idx / m, 3);
                assert_eq!(idx % m, (-5 + (m / 2) as isize) as usize);
            }
        }
    }
}
