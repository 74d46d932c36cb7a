//! Synthetic time-variant frequency responses with known multipath content.
//!
//! Each path contributes `a exp(j2π(ν(t) t − τ(t) f_s q))` at snapshot time
//! `t = m t_s` while alive. The phase uses the instantaneous Doppler rather
//! than its integral, so presets keep Doppler constant within each
//! stationarity region. Every link sees the same paths; links differ only
//! in their noise.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridParams, TimeVariantFrequencyResponse};

/// Piecewise-linear function of time. Two knots at the same time form a
/// step; the value at the step time is the later knot's.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    knots: Vec<(f64, f64)>,
}

impl Trajectory {
    pub fn constant(value: f64) -> Self {
        Trajectory {
            knots: vec![(0.0, value)],
        }
    }

    /// Knots `(time, value)` with non-decreasing times.
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::domain("trajectory needs at least one knot"));
        }
        if knots.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::domain("trajectory knots must be finite"));
        }
        if knots.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::domain("trajectory knot times must be non-decreasing"));
        }
        Ok(Trajectory { knots })
    }

    /// Piecewise-constant: `values[0]` before `steps[0]`, `values[i]` from
    /// `steps[i-1]` on.
    pub fn staircase(steps: &[f64], values: &[f64]) -> Result<Self> {
        if values.len() != steps.len() + 1 {
            return Err(Error::domain("staircase needs one more value than steps"));
        }
        if steps.is_empty() {
            return Trajectory::new(vec![(0.0, values[0])]);
        }
        let mut knots = Vec::with_capacity(2 * steps.len());
        for (i, &t) in steps.iter().enumerate() {
            knots.push((t, values[i]));
            knots.push((t, values[i + 1]));
        }
        Trajectory::new(knots)
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.knots.partition_point(|&(tk, _)| tk <= t);
        if k == 0 {
            return self.knots[0].1;
        }
        if k == self.knots.len() {
            return self.knots[k - 1].1;
        }
        let (t0, v0) = self.knots[k - 1];
        let (t1, v1) = self.knots[k];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    fn range(&self) -> (f64, f64) {
        self.knots
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// One propagation path, alive on `[birth, death)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub amplitude: Complex64,
    /// seconds
    pub delay: Trajectory,
    /// Hz
    pub doppler: Trajectory,
    pub birth: f64,
    pub death: f64,
}

impl PathSpec {
    /// Always-alive path with constant delay and Doppler.
    pub fn fixed(amplitude: Complex64, delay: f64, doppler: f64) -> Self {
        PathSpec {
            amplitude,
            delay: Trajectory::constant(delay),
            doppler: Trajectory::constant(doppler),
            birth: 0.0,
            death: f64::INFINITY,
        }
    }

    pub fn alive(&self, t: f64) -> bool {
        self.birth <= t && t < self.death
    }

    /// Checks `0 <= τ < 1/f_s` and `|ν| < 1/(2 t_s)`. Both trajectories are
    /// piecewise linear, so checking the knots covers every time.
    pub fn validate(&self, grid: &GridParams) -> Result<()> {
        if !(self.amplitude.re.is_finite() && self.amplitude.im.is_finite()) {
            return Err(Error::domain("path amplitude must be finite"));
        }
        if self.birth.is_nan() || self.death.is_nan() || self.death < self.birth {
            return Err(Error::domain("path birth must not follow its death"));
        }
        let (tau_lo, tau_hi) = self.delay.range();
        if tau_lo < 0.0 || tau_hi >= grid.max_delay() {
            return Err(Error::domain(format!(
                "path delay range [{tau_lo}, {tau_hi}] s outside [0, {})",
                grid.max_delay()
            )));
        }
        let (nu_lo, nu_hi) = self.doppler.range();
        if nu_lo.abs().max(nu_hi.abs()) >= grid.max_doppler() {
            return Err(Error::domain(format!(
                "path Doppler range [{nu_lo}, {nu_hi}] Hz exceeds ±{}",
                grid.max_doppler()
            )));
        }
        Ok(())
    }
}

/// `exp(j 2π x)` with the integer part of `x` removed first.
fn cis_cycles(x: f64) -> Complex64 {
    let (s, c) = (2.0 * PI * (x - x.round())).sin_cos();
    Complex64::new(c, s)
}

/// Noise stream for one snapshot of one link.
fn noise_rng(seed: u64, link: usize, snapshot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((link as u64) << 32) | snapshot as u64);
    rng
}

/// Evaluates the path model on `grid` and adds circularly-symmetric white
/// Gaussian noise with `E|n|² = noise_power`. Deterministic in `seed`.
pub fn synthesize(
    paths: &[PathSpec],
    grid: &GridParams,
    noise_power: f64,
    seed: u64,
) -> Result<TimeVariantFrequencyResponse> {
    grid.validate()?;
    if !(noise_power.is_finite() && noise_power >= 0.0) {
        return Err(Error::domain(format!("noise power {noise_power} must be non-negative")));
    }
    for p in paths {
        p.validate(grid)?;
    }
    let s = grid.num_snapshots;
    let q_len = grid.num_freq_bins;
    let t_s = grid.snapshot_interval;
    let f_s = grid.freq_bin;

    let clean: Vec<Vec<Complex64>> = (0..s)
        .into_par_iter()
        .map(|m| {
            let t = m as f64 * t_s;
            let mut row = vec![Complex64::new(0.0, 0.0); q_len];
            for p in paths.iter().filter(|p| p.alive(t)) {
                let a = p.amplitude * cis_cycles(p.doppler.eval(t) * t);
                let tau = p.delay.eval(t);
                for (q, h) in row.iter_mut().enumerate() {
                    *h += a * cis_cycles(-tau * f_s * q as f64);
                }
            }
            row
        })
        .collect();

    let scale = (noise_power / 2.0).sqrt();
    let mut samples = vec![Complex32::new(0.0, 0.0); grid.sample_count()];
    samples
        .par_chunks_mut(q_len)
        .enumerate()
        .for_each(|(row, out)| {
            let link = row / s + 1;
            let m = row % s;
            if noise_power > 0.0 {
                let mut rng = noise_rng(seed, link, m);
                for (o, h) in out.iter_mut().zip(&clean[m]) {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    let v = h + Complex64::new(re, im) * scale;
                    *o = Complex32::new(v.re as f32, v.im as f32);
                }
            } else {
                for (o, h) in out.iter_mut().zip(&clean[m]) {
                    *o = Complex32::new(h.re as f32, h.im as f32);
                }
            }
        });
    TimeVariantFrequencyResponse::new(*grid, samples)
}

/// Region length (snapshots) the presets align their Doppler steps to.
pub const PRESET_REGION: usize = 128;
/// Noise power of every preset, relative to a unit-power dominant path.
pub const PRESET_NOISE_POWER: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetName {
    Crossing,
    ConvoyObstructed,
    TunnelLike,
    TwoPathStatic,
}

impl PresetName {
    pub const ALL: [PresetName; 4] = [
        PresetName::Crossing,
        PresetName::ConvoyObstructed,
        PresetName::TunnelLike,
        PresetName::TwoPathStatic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PresetName::Crossing => "crossing",
            PresetName::ConvoyObstructed => "convoy-obstructed",
            PresetName::TunnelLike => "tunnel-like",
            PresetName::TwoPathStatic => "two-path-static",
        }
    }

    pub fn noise_power(&self) -> f64 {
        PRESET_NOISE_POWER
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::domain(format!("unknown preset '{s}'")))
    }
}

/// Delays of the static validation pair, seconds. Kept clear of zero so the
/// delay mainlobe does not wrap to the end of the delay axis.
pub const TWO_PATH_DELAYS: [f64; 2] = [250e-9, 350e-9];

/// The static validation pair with power `split` on the earlier path and
/// `1 - split` on the later one.
pub fn two_path_static(split: f64) -> Result<Vec<PathSpec>> {
    if !(0.0..=1.0).contains(&split) {
        return Err(Error::domain(format!("power split {split} outside [0, 1]")));
    }
    Ok(vec![
        PathSpec::fixed(Complex64::new(split.sqrt(), 0.0), TWO_PATH_DELAYS[0], 0.0),
        PathSpec::fixed(Complex64::new((1.0 - split).sqrt(), 0.0), TWO_PATH_DELAYS[1], 0.0),
    ])
}

/// Snapshot index where region `k` (1-based) starts.
fn region_start(k: usize) -> usize {
    k * PRESET_REGION - PRESET_REGION / 2
}

fn db(x: f64) -> f64 {
    10f64.powf(x / 20.0)
}

fn random_phase<R: Rng>(rng: &mut R, magnitude: f64) -> Complex64 {
    Complex64::from_polar(magnitude, 2.0 * PI * rng.random::<f64>())
}

/// Path list for a named preset. Randomized parts (reflector counts,
/// delays, phases) are drawn from `seed` on a stream separate from noise.
pub fn preset(name: PresetName, grid: &GridParams, seed: u64) -> Result<Vec<PathSpec>> {
    grid.validate()?;
    let paths = match name {
        PresetName::TwoPathStatic => two_path_static(0.5)?,
        other => {
            let regions = (grid.num_snapshots / PRESET_REGION).saturating_sub(1);
            if regions < 3 {
                return Err(Error::domain(format!(
                    "preset '{other}' needs at least {} snapshots",
                    4 * PRESET_REGION
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u64::MAX);
            let t_s = grid.snapshot_interval;
            match other {
                PresetName::Crossing => crossing(regions, t_s, &mut rng)?,
                PresetName::ConvoyObstructed => convoy(regions, t_s, &mut rng)?,
                PresetName::TunnelLike => tunnel(&mut rng),
                PresetName::TwoPathStatic => unreachable!(),
            }
        }
    };
    for p in &paths {
        p.validate(grid)?;
    }
    Ok(paths)
}

/// LOS whose Doppler climbs to about 300 Hz mid-run and returns to 0, then
/// reflectors appearing one region apart once the peak has passed.
fn crossing(regions: usize, t_s: f64, rng: &mut ChaCha8Rng) -> Result<Vec<PathSpec>> {
    let steps: Vec<f64> = (2..=regions).map(|k| region_start(k) as f64 * t_s).collect();
    // snapped to the Doppler bins of a preset-sized region
    let bin = 1.0 / (t_s * PRESET_REGION as f64);
    let values: Vec<f64> = (1..=regions)
        .map(|k| {
            let nu = 300.0 * (PI * (k - 1) as f64 / (regions - 1) as f64).sin();
            (nu / bin).round() * bin
        })
        .collect();
    let mut paths = vec![PathSpec {
        amplitude: Complex64::new(1.0, 0.0),
        delay: Trajectory::constant(150e-9),
        doppler: Trajectory::staircase(&steps, &values)?,
        birth: 0.0,
        death: f64::INFINITY,
    }];
    let peak = regions.div_ceil(2);
    let count = rng.random_range(3..=8);
    for j in 0..count {
        let delay = rng.random_range(300e-9..1.5e-6);
        let doppler = -(400.0 + 130.0 * j as f64 + rng.random_range(0.0..50.0));
        let power_db = rng.random_range(-9.0..-7.0);
        let mut path = PathSpec::fixed(random_phase(rng, db(power_db)), delay, doppler);
        path.birth = region_start(peak + 1 + j) as f64 * t_s;
        paths.push(path);
    }
    Ok(paths)
}

/// 0 Hz LOS shadowed by 15 dB over the middle third, a 0 Hz reflection off
/// the vehicle ahead, and short-lived weak oncoming paths.
fn convoy(regions: usize, t_s: f64, rng: &mut ChaCha8Rng) -> Result<Vec<PathSpec>> {
    let start = region_start(regions / 3 + 1) as f64 * t_s;
    let end = region_start(2 * regions / 3 + 1) as f64 * t_s;
    let los = |amp: f64, birth: f64, death: f64| PathSpec {
        amplitude: Complex64::new(amp, 0.0),
        delay: Trajectory::constant(100e-9),
        doppler: Trajectory::constant(0.0),
        birth,
        death,
    };
    let mut paths = vec![
        los(1.0, 0.0, start),
        los(db(-15.0), start, end),
        los(1.0, end, f64::INFINITY),
        PathSpec::fixed(random_phase(rng, db(-10.0)), 250e-9, 0.0),
    ];
    let count = rng.random_range(2..=4);
    for _ in 0..count {
        let first = rng.random_range(1..=regions);
        let span = rng.random_range(3..=8);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let mut path = PathSpec::fixed(
            random_phase(rng, db(-25.0)),
            rng.random_range(200e-9..1.2e-6),
            sign * rng.random_range(600.0..1200.0),
        );
        path.birth = region_start(first) as f64 * t_s;
        path.death = region_start(first + span) as f64 * t_s;
        paths.push(path);
    }
    Ok(paths)
}

/// Short LOS followed by many scatterers whose power decays slowly with
/// delay up to 1.8 µs, all with small Dopplers.
fn tunnel(rng: &mut ChaCha8Rng) -> Vec<PathSpec> {
    let mut paths = vec![PathSpec::fixed(Complex64::new(1.0, 0.0), 50e-9, 0.0)];
    for _ in 0..40 {
        let delay: f64 = rng.random_range(100e-9..1.8e-6);
        let power = 0.08 * (-delay / 800e-9).exp();
        let doppler = rng.random_range(-100.0..100.0);
        paths.push(PathSpec::fixed(random_phase(rng, power.sqrt()), delay, doppler));
    }
    paths
}
