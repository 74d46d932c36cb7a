//! Discrete prolate spheroidal sequences and separable 2-D taper sets.
//!
//! The sequences are the leading eigenvectors of the sinc-kernel Toeplitz
//! matrix with bandlimit `W = order / length`. That matrix is badly
//! conditioned for long sequences, so the eigenvectors are taken from the
//! symmetric tridiagonal matrix that commutes with it: eigenvalues by Sturm
//! bisection, eigenvectors by inverse iteration. The sinc kernel is then only
//! used for the concentration ratios.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const INVERSE_ITERATIONS: usize = 3;
const SIGN_TOL: f64 = 1e-10;

/// One family of Slepian sequences of a given length and bandlimit.
#[derive(Debug, Clone, PartialEq)]
pub struct DpssFamily {
    length: usize,
    order: usize,
    sequences: Vec<Vec<f64>>,
    concentrations: Vec<f64>,
}

impl DpssFamily {
    pub fn length(&self) -> usize {
        self.length
    }

    /// Number of sequences, which is also the half-bandwidth numerator.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Normalized half-bandwidth `order / length`.
    pub fn half_bandwidth(&self) -> f64 {
        self.order as f64 / self.length as f64
    }

    pub fn sequences(&self) -> &[Vec<f64>] {
        &self.sequences
    }

    pub fn sequence(&self, i: usize) -> &[f64] {
        &self.sequences[i]
    }

    /// Energy concentrations `lambda_i` in `[-W, W]`, descending.
    pub fn concentrations(&self) -> &[f64] {
        &self.concentrations
    }
}

/// Sinc kernel `sin(2 pi W k) / (pi k)` for lags `0..len`, with the
/// removable singularity at `k = 0` replaced by `2W`.
pub fn sinc_kernel(len: usize, half_bandwidth: f64) -> Vec<f64> {
    (0..len)
        .map(|k| {
            if k == 0 {
                2.0 * half_bandwidth
            } else {
                let k = k as f64;
                (2.0 * PI * half_bandwidth * k).sin() / (PI * k)
            }
        })
        .collect()
}

/// Rayleigh quotient of `seq` against the sinc Toeplitz matrix.
pub fn concentration(seq: &[f64], half_bandwidth: f64) -> f64 {
    let n = seq.len();
    let kernel = sinc_kernel(n, half_bandwidth);
    let mut total = 0.0;
    for (l, &ul) in seq.iter().enumerate() {
        let mut row = 0.0;
        for (m, &um) in seq.iter().enumerate() {
            row += kernel[l.abs_diff(m)] * um;
        }
        total += ul * row;
    }
    let norm: f64 = seq.iter().map(|v| v * v).sum();
    total / norm
}

struct Tridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl Tridiagonal {
    fn commuting(length: usize, half_bandwidth: f64) -> Self {
        let n = length as f64;
        let c = (2.0 * PI * half_bandwidth).cos();
        let diag = (0..length)
            .map(|i| {
                let h = (n - 1.0 - 2.0 * i as f64) / 2.0;
                h * h * c
            })
            .collect();
        let off = (1..length)
            .map(|i| i as f64 * (n - i as f64) / 2.0)
            .collect();
        Tridiagonal { diag, off }
    }

    fn len(&self) -> usize {
        self.diag.len()
    }

    /// Number of eigenvalues strictly below `x`.
    fn count_below(&self, x: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt();
        let mut count = 0;
        let mut q = self.diag[0] - x;
        for i in 0..self.len() {
            if i > 0 {
                let e = self.off[i - 1];
                q = self.diag[i] - x - e * e / q;
            }
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `j`-th smallest eigenvalue (0-based) by bisection.
    fn eigenvalue(&self, j: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let pad = 1e-9 * (hi - lo).abs().max(1.0);
        lo -= pad;
        hi += pad;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Solves `(T - shift I) x = rhs` by Gaussian elimination with partial
    /// pivoting. Zero pivots are nudged to keep inverse iteration going.
    fn solve_shifted(&self, shift: f64, rhs: &mut [f64]) {
        let n = self.len();
        if n == 1 {
            let p = self.diag[0] - shift;
            rhs[0] /= if p == 0.0 { f64::EPSILON } else { p };
            return;
        }
        let scale = self.diag.iter().chain(&self.off).fold(0.0f64, |a, v| a.max(v.abs()));
        let nudge = f64::EPSILON * scale.max(1.0);
        // Row i holds a[i] on the diagonal and b[i], c[i] on the next two
        // superdiagonals (c appears from pivoting).
        let mut a: Vec<f64> = self.diag.iter().map(|d| d - shift).collect();
        let mut b: Vec<f64> = self.off.clone();
        b.push(0.0);
        let mut c = vec![0.0; n];
        let mut lower: Vec<f64> = self.off.clone();
        for i in 0..n - 1 {
            if lower[i].abs() > a[i].abs() {
                // swap rows i and i+1
                let (ai, bi, ci) = (a[i], b[i], c[i]);
                a[i] = lower[i];
                b[i] = a[i + 1];
                c[i] = b[i + 1];
                let l = ai / a[i];
                a[i + 1] = bi - l * b[i];
                b[i + 1] = ci - l * c[i];
                rhs.swap(i, i + 1);
                rhs[i + 1] -= l * rhs[i];
                lower[i] = l;
            } else {
                if a[i] == 0.0 {
                    a[i] = nudge;
                }
                let l = lower[i] / a[i];
                a[i + 1] -= l * b[i];
                b[i + 1] -= l * c[i];
                rhs[i + 1] -= l * rhs[i];
                lower[i] = l;
            }
        }
        if a[n - 1] == 0.0 {
            a[n - 1] = nudge;
        }
        rhs[n - 1] /= a[n - 1];
        rhs[n - 2] = (rhs[n - 2] - b[n - 2] * rhs[n - 1]) / a[n - 2];
        for i in (0..n.saturating_sub(2)).rev() {
            rhs[i] = (rhs[i] - b[i] * rhs[i + 1] - c[i] * rhs[i + 2]) / a[i];
        }
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
}

/// Flips `v` so that its sum is non-negative; sequences whose sum vanishes
/// get their first non-negligible element positive.
fn apply_sign_convention(v: &mut [f64]) {
    let sum: f64 = v.iter().sum();
    let scale = (v.len() as f64).sqrt();
    let flip = if sum.abs() > SIGN_TOL * scale {
        sum < 0.0
    } else {
        v.iter()
            .find(|x| x.abs() > SIGN_TOL)
            .map(|&x| x < 0.0)
            .unwrap_or(false)
    };
    if flip {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Computes the `order` leading DPSS of `length` samples with bandlimit
/// `order / length`.
pub fn compute_dpss(length: usize, order: usize) -> Result<DpssFamily> {
    if order < 1 || 2 * order >= length {
        return Err(Error::domain(format!(
            "DPSS order {order} must satisfy 1 <= order < length/2 (length {length})"
        )));
    }
    let w = order as f64 / length as f64;
    let tri = Tridiagonal::commuting(length, w);
    let mut sequences: Vec<Vec<f64>> = Vec::with_capacity(order);
    for k in 0..order {
        let lambda = tri.eigenvalue(length - 1 - k);
        let mut v: Vec<f64> = (0..length)
            .map(|i| 1.0 + ((i * 7919 + 13) % 101) as f64 / 101.0)
            .collect();
        for _ in 0..INVERSE_ITERATIONS {
            tri.solve_shifted(lambda, &mut v);
            normalize(&mut v);
        }
        for prev in &sequences {
            let dot: f64 = prev.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (x, p) in v.iter_mut().zip(prev) {
                *x -= dot * p;
            }
        }
        normalize(&mut v);
        apply_sign_convention(&mut v);
        sequences.push(v);
    }
    let concentrations = sequences.iter().map(|s| concentration(s, w)).collect();
    Ok(DpssFamily {
        length,
        order,
        sequences,
        concentrations,
    })
}

/// `I * J` separable 2-D windows on an `M x N` time-frequency support.
#[derive(Debug, Clone, PartialEq)]
pub struct TaperSet {
    time: DpssFamily,
    freq: DpssFamily,
    windows: Vec<Vec<f64>>,
}

impl TaperSet {
    pub fn time_family(&self) -> &DpssFamily {
        &self.time
    }

    pub fn freq_family(&self) -> &DpssFamily {
        &self.freq
    }

    /// Region extent in snapshots (`M`).
    pub fn time_len(&self) -> usize {
        self.time.length
    }

    /// Region extent in frequency bins (`N`).
    pub fn freq_len(&self) -> usize {
        self.freq.length
    }

    pub fn count(&self) -> usize {
        self.windows.len()
    }

    /// Window `w` as an `M x N` row-major array indexed
    /// `[m' + M/2][q' + N/2]`.
    pub fn window(&self, w: usize) -> &[f64] {
        &self.windows[w]
    }

    pub fn windows(&self) -> &[Vec<f64>] {
        &self.windows
    }

    /// `G_w[m', q']` with signed relative offsets.
    pub fn value(&self, w: usize, m_rel: isize, q_rel: isize) -> f64 {
        let m = self.time_len();
        let n = self.freq_len();
        let a = (m_rel + (m / 2) as isize) as usize;
        let b = (q_rel + (n / 2) as isize) as usize;
        self.windows[w][a * n + b]
    }
}

/// Builds the separable set `G_w[m', q'] = u_i[m' + M/2] * v_j[q' + N/2]`
/// with `w = i J + j`.
pub fn build_taper_set(
    time_len: usize,
    freq_len: usize,
    time_order: usize,
    freq_order: usize,
) -> Result<TaperSet> {
    let time = compute_dpss(time_len, time_order)?;
    let freq = compute_dpss(freq_len, freq_order)?;
    let mut windows = Vec::with_capacity(time_order * freq_order);
    for u in time.sequences() {
        for v in freq.sequences() {
            let mut g = Vec::with_capacity(time_len * freq_len);
            for &ua in u {
                g.extend(v.iter().map(|&vb| ua * vb));
            }
            windows.push(g);
        }
    }
    Ok(TaperSet {
        time,
        freq,
        windows,
    })
}
