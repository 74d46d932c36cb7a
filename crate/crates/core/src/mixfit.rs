//! Truncated bi-modal Gaussian mixture for spread statistics.
//!
//! The density on `(0, z_max)` is
//!
//! ```text
//! f(z) = [w N(z; mu1, s1) + (1 - w) N(z; mu2, s2)] / alpha
//! alpha = F'(z_max) - F'(0)
//! ```
//!
//! with `F'` the untruncated mixture CDF, so the truncated CDF is
//! `(F'(z) - F'(0)) / alpha`. Fitting is maximum likelihood by EM, treating
//! the mass cut off by the truncation as missing data; a single-component
//! model replaces the mixture when BIC prefers it or one component
//! collapses.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};

/// Upper-tail probability of the standard normal.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Standard normal CDF, `1 - Q(x)`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn normal_pdf(z: f64, mu: f64, sigma: f64) -> f64 {
    std_normal_pdf((z - mu) / sigma) / sigma
}

/// Probability mass of `N(mu, sigma)` on `(lo, hi)`, computed on the side
/// of the distribution that avoids cancellation.
fn interval_mass(mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    if a > 0.0 {
        q_function(a) - q_function(b)
    } else {
        normal_cdf(b) - normal_cdf(a)
    }
}

/// Fitted (or specified) truncated mixture plus its goodness of fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    pub w: f64,
    pub mu1: f64,
    pub sigma1: f64,
    /// Absent for single-component fits (`w = 1`).
    pub mu2: Option<f64>,
    pub sigma2: Option<f64>,
    pub z_max: f64,
    pub alpha: f64,
    /// KS statistic against the samples the model was fitted to.
    pub gof: Option<f64>,
    pub n_samples: usize,
}

impl MixtureFit {
    /// Builds a model, computing `alpha` and canonicalizing `mu1 <= mu2`.
    pub fn new(
        w: f64,
        mu1: f64,
        sigma1: f64,
        second: Option<(f64, f64)>,
        z_max: f64,
    ) -> Result<Self> {
        let mut fit = MixtureFit {
            w,
            mu1,
            sigma1,
            mu2: second.map(|s| s.0),
            sigma2: second.map(|s| s.1),
            z_max,
            alpha: 1.0,
            gof: None,
            n_samples: 0,
        };
        if second.is_none() && w != 1.0 {
            return Err(Error::domain("a single-component model needs w = 1"));
        }
        fit.canonicalize();
        fit.alpha = fit.components().map(|(wk, m, s)| wk * interval_mass(m, s, 0.0, z_max)).sum();
        fit.validate()?;
        Ok(fit)
    }

    fn canonicalize(&mut self) {
        if let (Some(mu2), Some(s2)) = (self.mu2, self.sigma2) {
            if mu2 < self.mu1 {
                self.mu2 = Some(self.mu1);
                self.sigma2 = Some(self.sigma1);
                self.mu1 = mu2;
                self.sigma1 = s2;
                self.w = 1.0 - self.w;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.w, self.mu1, self.sigma1, self.z_max, self.alpha]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::domain("mixture parameters must be finite"));
        }
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::domain(format!("weight {} outside [0, 1]", self.w)));
        }
        if self.sigma1 <= 0.0 {
            return Err(Error::domain("sigma1 must be positive"));
        }
        match (self.mu2, self.sigma2) {
            (Some(m), Some(s)) => {
                if !(m.is_finite() && s.is_finite() && s > 0.0) {
                    return Err(Error::domain("second component must have finite mean and positive sigma"));
                }
                if m < self.mu1 {
                    return Err(Error::domain("components must be ordered mu1 <= mu2"));
                }
            }
            (None, None) => {
                if self.w != 1.0 {
                    return Err(Error::domain("a single-component model needs w = 1"));
                }
            }
            _ => return Err(Error::domain("mu2 and sigma2 must be both present or both absent")),
        }
        if self.z_max <= 0.0 {
            return Err(Error::domain("z_max must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "truncation leaves mass {} on (0, z_max)",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn is_single(&self) -> bool {
        self.mu2.is_none()
    }

    /// `(weight, mean, sigma)` of each present component.
    pub fn components(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let first = std::iter::once((self.w, self.mu1, self.sigma1));
        let second = self
            .mu2
            .zip(self.sigma2)
            .map(|(m, s)| (1.0 - self.w, m, s));
        first.chain(second)
    }

    /// Mixture CDF without truncation.
    pub fn untruncated_cdf(&self, z: f64) -> f64 {
        self.components()
            .map(|(w, m, s)| w * (1.0 - q_function((z - m) / s)))
            .sum()
    }

    /// Truncated density; zero outside `(0, z_max)`.
    pub fn pdf(&self, z: f64) -> f64 {
        if z <= 0.0 || z >= self.z_max {
            return 0.0;
        }
        self.components()
            .map(|(w, m, s)| w * normal_pdf(z, m, s))
            .sum::<f64>()
            / self.alpha
    }

    /// Truncated CDF, clamped to 0 below the support and 1 above it.
    pub fn cdf(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        if z >= self.z_max {
            return 1.0;
        }
        let mass: f64 = self
            .components()
            .map(|(w, m, s)| w * interval_mass(m, s, 0.0, z))
            .sum();
        (mass / self.alpha).clamp(0.0, 1.0)
    }

    /// Draws `n` samples by rejection from the truncated mixture.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let first = Normal::new(self.mu1, self.sigma1).expect("validated sigma");
        let second = self
            .mu2
            .zip(self.sigma2)
            .map(|(m, s)| Normal::new(m, s).expect("validated sigma"));
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let pick_first = second.is_none() || rng.random::<f64>() < self.w;
            let z = match (&second, pick_first) {
                (Some(d), false) => d.sample(rng),
                _ => first.sample(rng),
            };
            if z > 0.0 && z < self.z_max {
                out.push(z);
            }
        }
        out
    }

    /// Rows `(z, empirical CDF, model CDF)` at each sorted sample.
    pub fn cdf_csv(&self, samples: &[f64]) -> String {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut out = String::from("z,empirical_cdf,model_cdf\n");
        for (i, z) in sorted.iter().enumerate() {
            let _ = writeln!(out, "{z:e},{:e},{:e}", (i + 1) as f64 / n, self.cdf(*z));
        }
        out
    }
}

pub fn mixture_pdf(fit: &MixtureFit, z: f64) -> Result<f64> {
    fit.validate()?;
    Ok(fit.pdf(z))
}

pub fn mixture_cdf(fit: &MixtureFit, z: f64) -> Result<f64> {
    fit.validate()?;
    Ok(fit.cdf(z))
}

/// KS distance between the empirical CDF of `samples` and the model CDF,
/// using both one-sided limits of the step function at every sample.
pub fn ks_gof(samples: &[f64], fit: &MixtureFit) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let f = fit.cdf(z);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Stop when the mean log-likelihood per sample improves by less.
    pub tolerance: f64,
    /// Sigma floor as a fraction of the sample range.
    pub sigma_floor: f64,
    /// Components holding a smaller share of the sample responsibility
    /// count as collapsed.
    pub min_weight: f64,
    pub min_samples: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 500,
            tolerance: 1e-8,
            sigma_floor: 1e-6,
            min_weight: 1e-3,
            min_samples: 100,
        }
    }
}

/// Mixture component during fitting. `share` is its share of the truncated
/// density, `w P / alpha`, where `P` is its own mass on the support.
#[derive(Debug, Clone, Copy)]
struct Component {
    share: f64,
    mu: f64,
    sigma: f64,
}

impl Component {
    fn ln_mass(&self, z_max: f64) -> f64 {
        ln_std_interval_mass(-self.mu / self.sigma, (z_max - self.mu) / self.sigma)
    }
}

struct EmOutcome {
    comps: Vec<Component>,
    log_likelihood: f64,
    collapsed: bool,
}

fn ln_std_normal_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * PI).ln()
}

/// `ln Q(x)`, usable far beyond the point where `Q` underflows.
fn ln_q(x: f64) -> f64 {
    if x < 20.0 {
        return q_function(x).ln();
    }
    // Mills ratio Q/phi = 1/(x + 1/(x + 2/(x + 3/(x + ...))))
    let mut tail = 0.0;
    for k in (1..=40).rev() {
        tail = k as f64 / (x + tail);
    }
    ln_std_normal_pdf(x) - (x + tail).ln()
}

/// Log of the standard normal mass on `(a, b)`.
fn ln_std_interval_mass(a: f64, b: f64) -> f64 {
    if !(b > a) {
        return f64::NEG_INFINITY;
    }
    if a >= 0.0 {
        let (la, lb) = (ln_q(a), ln_q(b));
        la + (-(lb - la).exp()).ln_1p()
    } else if b <= 0.0 {
        ln_std_interval_mass(-b, -a)
    } else {
        (1.0 - q_function(-a) - q_function(b)).ln()
    }
}

/// Gauss-Legendre nodes and weights on `(-1, 1)`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // P_n(x) and its derivative by the three-term recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

const NARROW_INTERVAL: f64 = 1.0;
const QUADRATURE_NODES: usize = 32;

/// Moments of the standard normal restricted to `(a, b)`, about a centre
/// `c`: returns `c` and `E[(z - c)^k]` for `k = 1..4`. Narrow intervals use
/// quadrature about the midpoint, since the closed-form moments cancel
/// catastrophically there.
fn truncated_std_moments(a: f64, b: f64) -> Option<(f64, [f64; 4])> {
    if !(b > a) {
        return None;
    }
    if b - a <= NARROW_INTERVAL {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        // weights relative to phi(c)
        let nodes: Vec<(f64, f64)> = gauss_legendre(QUADRATURE_NODES)
            .into_iter()
            .map(|(x, w)| {
                let y = h * x;
                (y, w * (-c * y - 0.5 * y * y).exp())
            })
            .collect();
        let mass: f64 = nodes.iter().map(|(_, w)| w).sum();
        let mut m = [0.0; 4];
        for (k, mk) in m.iter_mut().enumerate() {
            *mk = nodes.iter().map(|(y, w)| w * y.powi(k as i32 + 1)).sum::<f64>() / mass;
        }
        return m.iter().all(|v| v.is_finite()).then_some((c, m));
    }
    let ln_p = ln_std_interval_mass(a, b);
    if !ln_p.is_finite() {
        return None;
    }
    let ra = (ln_std_normal_pdf(a) - ln_p).exp();
    let rb = (ln_std_normal_pdf(b) - ln_p).exp();
    // J_k = E[z^k] = (k - 1) J_{k-2} + a^{k-1} phi(a)/P - b^{k-1} phi(b)/P
    let mut j = [1.0, ra - rb, 0.0, 0.0, 0.0];
    for k in 2..=4 {
        j[k] = (k - 1) as f64 * j[k - 2] + a.powi(k as i32 - 1) * ra - b.powi(k as i32 - 1) * rb;
    }
    let m = [j[1], j[2], j[3], j[4]];
    m.iter().all(|v| v.is_finite()).then_some((0.0, m))
}

/// Weighted mean log-density of a normal truncated to `(0, z_max)`, up to
/// a constant, for data with weighted mean `mean` and variance `var`.
fn truncated_objective(mean: f64, var: f64, mu: f64, sigma: f64, z_max: f64) -> f64 {
    let ln_mass = ln_std_interval_mass(-mu / sigma, (z_max - mu) / sigma);
    -(var + (mean - mu) * (mean - mu)) / (2.0 * sigma * sigma) - sigma.ln() - ln_mass
}

/// Bounds on a component, as multiples of `z_max`. Within `(0, z_max)` a
/// wider or more distant normal is indistinguishable from a linear or
/// exponential ramp, and the likelihood of such data has no interior
/// maximum.
const MAX_SIGMA: f64 = 10.0;
const MAX_MU: f64 = 100.0;

/// Weighted maximum-likelihood normal truncated to `(0, z_max)`, within the
/// bounds above.
///
/// The truncated normal is an exponential family, so its log-likelihood is
/// concave in the natural parameters. Newton steps are taken in the
/// natural parameters of the standardized variable `(x - mu) / sigma`,
/// which keeps the Fisher matrix well conditioned for narrow components.
fn fit_truncated_normal(
    mean: f64,
    var: f64,
    mut mu: f64,
    mut sigma: f64,
    z_max: f64,
) -> Option<(f64, f64)> {
    let mut f = truncated_objective(mean, var, mu, sigma, z_max);
    // the untruncated estimate is often far closer for narrow components
    if var > 0.0 {
        let f0 = truncated_objective(mean, var, mean, var.sqrt(), z_max);
        if f0.is_finite() && !(f0 <= f) {
            (mu, sigma, f) = (mean, var.sqrt(), f0);
        }
    }
    if !f.is_finite() {
        return None;
    }
    for _ in 0..200 {
        let (c, m) = truncated_std_moments(-mu / sigma, (z_max - mu) / sigma)?;
        // sufficient statistics (y, y^2) with y = (x - mu) / sigma - c
        let d1 = (mean - mu) / sigma - c;
        let d2 = var / (sigma * sigma) + d1 * d1;
        let g = [d1 - m[0], d2 - m[1]];
        let c11 = m[1] - m[0] * m[0];
        let c12 = m[2] - m[0] * m[1];
        let c22 = m[3] - m[1] * m[1];
        let det = c11 * c22 - c12 * c12;
        let step = if det > 0.0 && c11 > 0.0 {
            [(c22 * g[0] - c12 * g[1]) / det, (c11 * g[1] - c12 * g[0]) / det]
        } else {
            g
        };
        // back to natural parameters of the standardized variable
        let step = [step[0] - 2.0 * c * step[1], step[1]];
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let theta1 = t * step[0];
            let theta2 = -0.5 + t * step[1];
            if theta2 < 0.0 {
                let s2 = -0.5 / theta2;
                let cand_mu = mu + sigma * theta1 * s2;
                let cand_sigma = sigma * s2.sqrt();
                let inside = cand_sigma <= MAX_SIGMA * z_max && cand_mu.abs() <= MAX_MU * z_max;
                if inside {
                    let cand_f = truncated_objective(mean, var, cand_mu, cand_sigma, z_max);
                    if cand_f.is_finite() && cand_f >= f {
                        accepted = Some((cand_mu, cand_sigma, cand_f));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        let Some((new_mu, new_sigma, new_f)) = accepted else {
            break;
        };
        let moved = ((new_mu - mu) / sigma).abs() + (new_sigma / sigma - 1.0).abs();
        let gain = new_f - f;
        (mu, sigma, f) = (new_mu, new_sigma, new_f);
        if moved < 1e-13 || gain <= 1e-15 * f.abs().max(1.0) {
            break;
        }
    }
    Some((mu, sigma))
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Mean truncated log-likelihood; fills per-sample responsibilities.
fn e_step(xs: &[f64], comps: &[Component], z_max: f64, resp: &mut [f64]) -> f64 {
    let k = comps.len();
    let base: Vec<f64> = comps
        .iter()
        .map(|c| c.share.ln() - c.ln_mass(z_max) - c.sigma.ln() - 0.5 * (2.0 * PI).ln())
        .collect();
    let mut terms = vec![0.0; k];
    let mut total = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        for (j, c) in comps.iter().enumerate() {
            let u = (x - c.mu) / c.sigma;
            terms[j] = base[j] - 0.5 * u * u;
        }
        let lse = log_sum_exp(&terms);
        for j in 0..k {
            resp[i * k + j] = (terms[j] - lse).exp();
        }
        total += lse;
    }
    total / xs.len() as f64
}

/// EM on the truncated mixture viewed as a mixture of truncated normals:
/// shares are the mean responsibilities and each component is a weighted
/// truncated-normal fit.
fn run_em(xs: &[f64], init: Vec<Component>, z_max: f64, floor: f64, cfg: &FitConfig) -> EmOutcome {
    let n = xs.len() as f64;
    let k = init.len();
    let mut comps = init;
    let mut resp = vec![0.0; xs.len() * k];
    let mut ll = e_step(xs, &comps, z_max, &mut resp);
    let mut collapsed = false;
    'outer: for _ in 0..cfg.max_iterations {
        let mut next = Vec::with_capacity(k);
        for (j, c) in comps.iter().enumerate() {
            let r = |i: usize| resp[i * k + j];
            let total: f64 = (0..xs.len()).map(r).sum();
            let share = total / n;
            if k > 1 && share < cfg.min_weight {
                collapsed = true;
                break 'outer;
            }
            let mean = xs.iter().enumerate().map(|(i, x)| r(i) * x).sum::<f64>() / total;
            let var = xs
                .iter()
                .enumerate()
                .map(|(i, x)| r(i) * (x - mean) * (x - mean))
                .sum::<f64>()
                / total;
            let fitted = fit_truncated_normal(mean, var, c.mu, c.sigma, z_max);
            let Some((mu, sigma)) = fitted.filter(|&(_, s)| s > floor) else {
                collapsed = true;
                break 'outer;
            };
            next.push(Component { share, mu, sigma });
        }
        comps = next;
        let new_ll = e_step(xs, &comps, z_max, &mut resp);
        let gain = new_ll - ll;
        ll = new_ll;
        if !ll.is_finite() {
            collapsed = true;
            break;
        }
        if gain < cfg.tolerance {
            break;
        }
    }
    EmOutcome {
        comps,
        log_likelihood: ll,
        collapsed,
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fits the truncated bi-modal model with default settings.
pub fn fit_mixture(samples: &[f64]) -> Result<MixtureFit> {
    fit_mixture_with(samples, &FitConfig::default())
}

pub fn fit_mixture_with(samples: &[f64], cfg: &FitConfig) -> Result<MixtureFit> {
    if samples.len() < cfg.min_samples {
        return Err(Error::domain(format!(
            "need at least {} samples, got {}",
            cfg.min_samples,
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::domain(format!("samples must be positive and finite, found {bad}")));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let lo = xs[0];
    let z_max = xs[xs.len() - 1];
    if z_max == lo {
        return Err(Error::SinglePoint(lo));
    }
    // fit on samples scaled to (0, 1] so seconds and Hz condition alike
    let us: Vec<f64> = xs.iter().map(|x| x / z_max).collect();
    let n = us.len() as f64;
    let mean = us.iter().sum::<f64>() / n;
    let std = (us.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    let floor = cfg.sigma_floor * (1.0 - lo / z_max);
    let component = |share, mu, sigma| Component { share, mu, sigma };

    let single = run_em(&us, vec![component(1.0, mean, std)], 1.0, floor, cfg);
    let init = vec![
        component(0.5, quantile(&us, 0.25), std),
        component(0.5, quantile(&us, 0.75), std),
    ];
    let pair = run_em(&us, init, 1.0, floor, cfg);
    // BIC with 2 and 5 free parameters, on total log-likelihoods. A single
    // normal has no maximum when the samples are flatter than uniform, in
    // which case only the pair is available.
    let bic_single = 2.0 * n.ln() - 2.0 * n * single.log_likelihood;
    let bic_pair = 5.0 * n.ln() - 2.0 * n * pair.log_likelihood;
    let use_pair = match (single.collapsed, pair.collapsed) {
        (true, true) => return Err(Error::Numeric("no truncated normal fit converged".into())),
        (true, false) => true,
        (false, true) => false,
        (false, false) => bic_pair < bic_single,
    };
    let mut fit = if use_pair {
        let (a, b) = (pair.comps[0], pair.comps[1]);
        // w / (1 - w) = (share_a / P_a) / (share_b / P_b)
        let log_odds = a.share.ln() - a.ln_mass(1.0) - b.share.ln() + b.ln_mass(1.0);
        MixtureFit::new(
            1.0 / (1.0 + (-log_odds).exp()),
            a.mu * z_max,
            a.sigma * z_max,
            Some((b.mu * z_max, b.sigma * z_max)),
            z_max,
        )?
    } else {
        let c = single.comps[0];
        MixtureFit::new(1.0, c.mu * z_max, c.sigma * z_max, None, z_max)?
    };
    fit.n_samples = xs.len();
    fit.gof = Some(ks_gof(&xs, &fit));
    Ok(fit)
}
