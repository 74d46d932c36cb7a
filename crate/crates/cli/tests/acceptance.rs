//! Acceptance suite. One PASS/FAIL line per criterion; exits non-zero if any
//! criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlsf_cli::config::{PipelineArgs, PipelineConfig};
use vlsf_cli::pipeline::{analyse, load_channel, Analysis, GridSummary};
use vlsf_core::synth::{two_path_static, PRESET_NOISE_POWER};
use vlsf_core::{
    build_taper_set, coherence, compute_dpss, dsd, estimate_lsf, fit_mixture, pdp, preset,
    synthesize, threshold_lsf, GridParams, LocalScatteringFunction, MixtureFit, PathSpec,
    PresetName, RegionSpec, ThresholdConfig, TimeVariantFrequencyResponse,
};

/// Seed for every randomized check, fixed before any result was seen.
const SEED: u64 = 42;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion(id: u32, title: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let pass = o.pass && in_time;
    println!(
        "criterion {id:>2} {}: {title} | {} | {:.2}s (limit {}s{})",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { ", exceeded" }
    );
    pass
}

fn config(preset_name: &str) -> PipelineConfig {
    PipelineConfig::resolve(
        &PipelineArgs {
            preset: Some(preset_name.into()),
            seed: Some(SEED),
            ..Default::default()
        },
        true,
    )
    .unwrap()
}

fn grid_constants() -> Outcome {
    let grid = GridParams::reference(4096).unwrap();
    let region = RegionSpec::DEFAULT;
    let s = GridSummary::new(&grid, &region);
    let exact_tau = 769.0 / (240e6 * 128.0);
    let checks = [
        (s.delay_bin_s * 1e9 - 25.0).abs() <= 0.1,
        (s.delay_bin_s - exact_tau).abs() <= 1e-12 * exact_tau,
        (s.doppler_bin_hz - 25.43).abs() <= 0.01,
        (s.freq_bin_hz / 1e3 - 312.09).abs() <= 0.01,
        (s.region_duration_s * 1e3 - 39.32).abs() <= 0.005,
        (s.region_bandwidth_hz / 1e6 - 39.95).abs() <= 0.005,
    ];
    outcome(
        checks.iter().all(|&c| c),
        format!(
            "tau_s {:.4} ns, nu_s {:.4} Hz, f_s {:.4} kHz, region {:.4} ms x {:.4} MHz",
            s.delay_bin_s * 1e9,
            s.doppler_bin_hz,
            s.freq_bin_hz / 1e3,
            s.region_duration_s * 1e3,
            s.region_bandwidth_hz / 1e6
        ),
    )
}

/// Scenario maxima and coherence figures: (name, max sigma_tau ns,
/// B_coh kHz, max sigma_nu Hz, T_coh us).
const SCENARIOS: [(&str, f64, f64, f64, f64); 10] = [
    ("street crossing suburban with traffic", 255.77, 651.62, 352.93, 472.23),
    ("street crossing suburban without traffic", 808.23, 206.21, 684.03, 243.65),
    ("street crossing urban single lane", 925.66, 180.05, 933.70, 178.50),
    ("street crossing urban multiple lane", 926.66, 179.86, 822.75, 202.57),
    ("general LOS obstruction highway", 674.95, 246.93, 684.83, 243.37),
    ("merging lanes rural", 254.45, 655.02, 402.61, 413.97),
    ("traffic congestion slow traffic", 924.79, 180.22, 849.91, 196.10),
    ("traffic congestion approaching traffic jam", 677.20, 246.11, 511.78, 325.66),
    ("in-tunnel", 244.75, 680.98, 492.56, 338.37),
    ("on-bridge", 951.07, 175.24, 895.48, 186.12),
];

fn coherence_table() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_row = "";
    for (name, tau, b, nu, t) in SCENARIOS {
        let r = coherence(tau * 1e-9, nu, 0.5).unwrap();
        let eb = (r.bandwidth / (b * 1e3) - 1.0).abs();
        let et = (r.time / (t * 1e-6) - 1.0).abs();
        if eb.max(et) > worst {
            worst = eb.max(et);
            worst_row = name;
        }
    }
    outcome(
        worst <= 5e-3,
        format!("10 rows, worst relative error {worst:.2e} ({worst_row}); tol 5e-3"),
    )
}

fn dense_dpss(length: usize, order: usize) -> Vec<Vec<f64>> {
    let w = order as f64 / length as f64;
    let a = DMatrix::from_fn(length, length, |l, m| {
        if l == m {
            2.0 * w
        } else {
            let k = l as f64 - m as f64;
            (2.0 * PI * w * k).sin() / (PI * k)
        }
    });
    let eig = SymmetricEigen::new(a);
    let mut idx: Vec<usize> = (0..length).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    idx[..order]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect()
}

fn dpss_correctness() -> Outcome {
    let mut worst_diff: f64 = 0.0;
    let mut worst_orth: f64 = 0.0;
    for length in [8usize, 32, 64, 128, 256] {
        for order in 1..=3 {
            let fam = compute_dpss(length, order).unwrap();
            let oracle = dense_dpss(length, order);
            for (k, v) in oracle.iter().enumerate() {
                let s = fam.sequence(k);
                let plus = s.iter().zip(v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let minus = s.iter().zip(v).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
                worst_diff = worst_diff.max(plus.min(minus));
            }
            for i in 0..order {
                for j in 0..order {
                    let dot: f64 = fam.sequence(i).iter().zip(fam.sequence(j)).map(|(a, b)| a * b).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    worst_orth = worst_orth.max((dot - want).abs());
                }
            }
        }
    }
    outcome(
        worst_diff <= 1e-8 && worst_orth <= 1e-10,
        format!("max elementwise diff {worst_diff:.2e} (tol 1e-8), orthonormality residual {worst_orth:.2e} (tol 1e-10)"),
    )
}

fn random_tvfr(links: usize, s: usize, q: usize, seed: u64) -> TimeVariantFrequencyResponse {
    let grid = GridParams::new(307.2e-6, 240e6 * q as f64 / 769.0, s, q, links, 5.6e9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..links * s * q)
        .map(|_| Complex32::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    TimeVariantFrequencyResponse::new(grid, samples).unwrap()
}

fn lsf_oracle() -> Outcome {
    let (m, n) = (8usize, 8usize);
    let tvfr = random_tvfr(2, 2 * m, 2 * n, SEED);
    let tapers = build_taper_set(m, n, 2, 2).unwrap();
    let mut worst: f64 = 0.0;
    let mut worst_parseval: f64 = 0.0;
    for link in 1..=2 {
        let lsf = estimate_lsf(&tvfr, link, RegionSpec::new(m, n), &tapers).unwrap();
        let mut energy = 0.0;
        for nd in 0..n {
            for p in -(m as isize / 2)..(m as isize / 2) {
                let mut acc = 0.0;
                for w in 0..tapers.count() {
                    let mut sum = Complex64::new(0.0, 0.0);
                    for mr in -(m as isize / 2)..(m as isize / 2) {
                        for qr in -(n as isize / 2)..(n as isize / 2) {
                            let h = tvfr.get(link, (m as isize + mr) as usize, (n as isize + qr) as usize);
                            let phase = -2.0
                                * PI
                                * (p as f64 * mr as f64 / m as f64 - nd as f64 * qr as f64 / n as f64);
                            sum += h * tapers.value(w, mr, qr) * Complex64::from_polar(1.0, phase);
                            if nd == 0 && p == 0 {
                                energy += (h * tapers.value(w, mr, qr)).norm_sqr();
                            }
                        }
                    }
                    acc += sum.norm_sqr();
                }
                let want = acc / tapers.count() as f64;
                worst = worst.max((lsf.get(1, 1, nd, p) - want).abs() / want);
            }
        }
        let total: f64 = lsf.region_values(1, 1).iter().sum();
        let parseval = (m * n) as f64 * energy / tapers.count() as f64;
        worst_parseval = worst_parseval.max((total / parseval - 1.0).abs());
    }
    outcome(
        worst <= 1e-9 && worst_parseval <= 1e-9,
        format!("max relative error {worst:.2e} (tol 1e-9), Parseval residual {worst_parseval:.2e} (tol 1e-9)"),
    )
}

fn single_path() -> Outcome {
    let grid = GridParams {
        num_links: 1,
        ..GridParams::reference(512).unwrap()
    };
    let region = RegionSpec::DEFAULT;
    let path = PathSpec::fixed(
        Complex64::new(1.0, 0.0),
        10.0 * region.delay_scale(&grid),
        20.0 * region.doppler_scale(&grid),
    );
    let tvfr = synthesize(&[path], &grid, 0.0, SEED).unwrap();
    let tapers = build_taper_set(128, 128, 2, 2).unwrap();
    let lsf = estimate_lsf(&tvfr, 1, region, &tapers).unwrap();
    let mut argmax_ok = true;
    let mut min_share: f64 = 1.0;
    for kt in 1..=lsf.regions_time() {
        for kf in 1..=lsf.regions_freq() {
            let block = lsf.region_values(kt, kf);
            let idx = (0..block.len()).max_by(|&a, &b| block[a].total_cmp(&block[b])).unwrap();
            argmax_ok &= idx / 128 == 10 && idx % 128 == 64 + 20;
            let total: f64 = block.iter().sum();
            let near: f64 = (8..=12)
                .flat_map(|n| (18..=22).map(move |p| (n, p)))
                .map(|(n, p)| lsf.get(kt, kf, n, p))
                .sum();
            min_share = min_share.min(near / total);
        }
    }
    outcome(
        argmax_ok && min_share >= 0.9,
        format!(
            "argmax at (10, 20) in all {} regions: {argmax_ok}; min energy within +-2 bins {:.4} (need >= 0.9)",
            lsf.region_count(),
            min_share
        ),
    )
}

fn spread_range(a: &Analysis) -> ((f64, f64), f64) {
    let taus = a.spreads.delay_samples(None);
    let nus = a.spreads.doppler_samples(None);
    let lo = taus.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = taus.iter().copied().fold(0.0, f64::max);
    ((lo, hi), nus.iter().copied().fold(0.0, f64::max))
}

fn spread_closed_forms() -> Outcome {
    let cfg = config("two-path-static");
    let equal = analyse(&load_channel(&cfg).unwrap(), &cfg).unwrap();
    let grid = GridParams::reference(4096).unwrap();
    let split = synthesize(&two_path_static(0.9).unwrap(), &grid, PRESET_NOISE_POWER, SEED).unwrap();
    let split = analyse(&split, &cfg).unwrap();
    let ((e_lo, e_hi), e_nu) = spread_range(&equal);
    let ((s_lo, s_hi), s_nu) = spread_range(&split);
    let within = |lo: f64, hi: f64, want: f64| lo >= 0.98 * want && hi <= 1.02 * want;
    let nu_bin = RegionSpec::DEFAULT.doppler_scale(&grid);
    let pass = within(e_lo, e_hi, 50e-9) && within(s_lo, s_hi, 30e-9) && e_nu <= nu_bin && s_nu <= nu_bin;
    outcome(
        pass,
        format!(
            "equal split sigma_tau {:.2}..{:.2} ns (want 50 +-2%), max sigma_nu {:.2} Hz (want <= {:.2}); \
             0.9/0.1 split sigma_tau {:.2}..{:.2} ns (want 30 +-2%), max sigma_nu {:.2} Hz",
            e_lo * 1e9,
            e_hi * 1e9,
            e_nu,
            nu_bin,
            s_lo * 1e9,
            s_hi * 1e9,
            s_nu
        ),
    )
}

fn marginal_consistency() -> Outcome {
    let grid = GridParams::new(1e-3, 48.0 / 25e-9 / 16.0, 40, 48, 1, 0.0).unwrap();
    let region = RegionSpec::new(8, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    let mut idempotent = true;
    let cfg = ThresholdConfig {
        noise_delay_floor: 200e-9,
        ..ThresholdConfig::default()
    };
    for _ in 0..200 {
        let count = 4 * 2 * 8 * 16;
        let values = (0..count).map(|_| rng.random::<f64>().powi(4) * 1e3).collect();
        let lsf = LocalScatteringFunction::from_values(grid, region, values).unwrap();
        let (p, d) = (pdp(&lsf), dsd(&lsf));
        for r in 0..lsf.region_count() {
            let a = p.region_by_index(r).iter().sum::<f64>() / 16.0;
            let b = d.region_by_index(r).iter().sum::<f64>() / 8.0;
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()));
        }
        let (once, _) = threshold_lsf(&lsf, &cfg).unwrap();
        let (twice, _) = threshold_lsf(&once, &cfg).unwrap();
        idempotent &= once.values() == twice.values();
    }
    outcome(
        worst <= 1e-12 && idempotent,
        format!("200 random LSFs: max relative marginal mismatch {worst:.2e} (tol 1e-12), threshold idempotent: {idempotent}"),
    )
}

fn tunnel_delay_model() -> MixtureFit {
    MixtureFit::new(0.95, 75.11, 23.99, Some((109.77, 43.44)), 244.75).unwrap()
}

fn mixture_recovery() -> Outcome {
    let truth = tunnel_delay_model();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let samples = truth.sample(50_000, &mut rng);
    let fit = fit_mixture(&samples).unwrap();
    let (mu2, gof) = (fit.mu2.unwrap_or(f64::NAN), fit.gof.unwrap_or(f64::NAN));
    let e1 = (fit.mu1 / truth.mu1 - 1.0).abs();
    let e2 = (mu2 / truth.mu2.unwrap() - 1.0).abs();
    let ew = (fit.w - truth.w).abs();
    let pair_ok = e1 <= 0.05 && e2 <= 0.05 && ew <= 0.05 && gof <= 0.11;

    let single = MixtureFit::new(1.0, 50.24, 24.81, None, 926.66).unwrap();
    let single_samples = single.sample(50_000, &mut rng);
    let single_fit = fit_mixture(&single_samples).unwrap();
    let single_ok = single_fit.w == 1.0 && single_fit.mu2.is_none();
    outcome(
        pair_ok && single_ok,
        format!(
            "w {:.4} (|dw| {ew:.4} <= 0.05), mu1 {:.2} ({:.2}% <= 5%), mu2 {:.2} ({:.2}% <= 5%), GoF {gof:.4} <= 0.11; \
             single-Gaussian samples fit w = {} with second component {}",
            fit.w,
            fit.mu1,
            100.0 * e1,
            mu2,
            100.0 * e2,
            single_fit.w,
            if single_fit.mu2.is_none() { "absent" } else { "present" }
        ),
    )
}

/// Additional draws of the mixture recovery check, reported but not scored.
fn mixture_monte_carlo(draws: u64) {
    let truth = tunnel_delay_model();
    let mut pass = 0;
    let mut mu2s = Vec::new();
    for seed in 1000..1000 + draws {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fit = fit_mixture(&truth.sample(50_000, &mut rng)).unwrap();
        let mu2 = fit.mu2.unwrap_or(f64::NAN);
        mu2s.push(mu2);
        let ok = (fit.mu1 / truth.mu1 - 1.0).abs() <= 0.05
            && (mu2 / truth.mu2.unwrap() - 1.0).abs() <= 0.05
            && (fit.w - truth.w).abs() <= 0.05
            && fit.gof.unwrap_or(1.0) <= 0.11;
        pass += ok as usize;
    }
    let lo = mu2s.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mu2s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "info: mixture recovery over {draws} further draws: {pass}/{draws} within all tolerances; fitted mu2 range {lo:.1}..{hi:.1}"
    );
}

/// DSD summed over frequency regions, per time region.
fn pooled_dsd(a: &Analysis) -> Vec<Vec<f64>> {
    let bins = a.dsd.bins();
    (1..=a.dsd.regions_time())
        .map(|kt| {
            let mut acc = vec![0.0; bins];
            for kf in 1..=a.dsd.regions_freq() {
                for (x, v) in acc.iter_mut().zip(a.dsd.region_values(kt, kf)) {
                    *x += v;
                }
            }
            acc
        })
        .collect()
}

fn scenario_structure() -> Outcome {
    // convoy: strongest Doppler bin at 0 Hz in every region
    let cfg = config("convoy-obstructed");
    let convoy = analyse(&load_channel(&cfg).unwrap(), &cfg).unwrap();
    let mut convoy_ok = true;
    for kt in 1..=convoy.dsd.regions_time() {
        for kf in 1..=convoy.dsd.regions_freq() {
            let d = convoy.dsd.region_values(kt, kf);
            let idx = (0..d.len()).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
            convoy_ok &= convoy.dsd.bin_index(idx) == 0;
        }
    }

    // crossing: peak Doppler trace rises toward 300 Hz and falls again
    let cfg = config("crossing");
    let tvfr = load_channel(&cfg).unwrap();
    let crossing = analyse(&tvfr, &cfg).unwrap();
    let bin = crossing.dsd.bin_scale();
    let trace: Vec<f64> = pooled_dsd(&crossing)
        .iter()
        .map(|d| {
            let idx = (0..d.len()).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
            crossing.dsd.bin_value(idx)
        })
        .collect();
    let top = trace.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first_top = trace.iter().position(|&v| v == top).unwrap();
    let last_top = trace.iter().rposition(|&v| v == top).unwrap();
    let rises = trace[..=first_top].windows(2).all(|w| w[1] >= w[0] - bin);
    let falls = trace[last_top..].windows(2).all(|w| w[1] <= w[0] + bin);
    let ends_low = trace[0] < 100.0 && trace[trace.len() - 1] < 100.0;
    let peak_ok = (275.0..=325.0).contains(&top);

    // RMS Doppler spread over the window in which reflectors appear
    let paths = preset(PresetName::Crossing, tvfr.grid(), SEED).unwrap();
    let region_len = RegionSpec::DEFAULT.duration(tvfr.grid());
    let births: Vec<usize> = paths
        .iter()
        .filter(|p| p.birth > 0.0)
        .map(|p| (p.birth / region_len + 0.5).round() as usize)
        .collect();
    let (first_birth, last_birth) = (*births.iter().min().unwrap(), *births.iter().max().unwrap());
    let mean_nu = |kt: usize| {
        let v: Vec<f64> = (1..=crossing.spreads.regions_freq)
            .filter_map(|kf| crossing.spreads.doppler_spread(kt, kf))
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let window: Vec<f64> = (first_birth - 1..=last_birth).map(mean_nu).collect();
    let spread_rises = window.windows(2).all(|w| w[1] >= w[0]);

    let pass = convoy_ok && peak_ok && rises && falls && ends_low && spread_rises;
    outcome(
        pass,
        format!(
            "convoy dominant bin 0 Hz everywhere: {convoy_ok}; crossing peak trace max {top:.1} Hz (275..325), \
             rises {rises}, falls {falls}, ends below 100 Hz {ends_low}; trace [{}] Hz; \
             sigma_nu over regions {}..{} [{}] Hz non-decreasing: {spread_rises}",
            trace.iter().map(|v| format!("{v:.0}")).collect::<Vec<_>>().join(" "),
            first_birth - 1,
            last_birth,
            window.iter().map(|v| format!("{v:.0}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn report_run(dir: &Path, threads: &str) -> bool {
    Command::new(env!("CARGO_BIN_EXE_vlsf"))
        .args(["report", "--preset", "crossing", "--seed", "42", "--out"])
        .arg(dir)
        .env("RAYON_NUM_THREADS", threads)
        .stdout(Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let runs = [("a", "4"), ("b", "4"), ("c", "1")];
    let mut ok = true;
    for (name, threads) in runs {
        ok &= report_run(&root.path().join(name), threads);
    }
    if !ok {
        return outcome(false, "a report run failed".into());
    }
    let a = dir_contents(&root.path().join("a"));
    let b = dir_contents(&root.path().join("b"));
    let c = dir_contents(&root.path().join("c"));
    let bytes: usize = a.iter().map(|f| f.1.len()).sum();
    outcome(
        a == b && a == c,
        format!(
            "{} files, {bytes} bytes; 4-thread runs identical: {}; 4- vs 1-thread identical: {}",
            a.len(),
            a == b,
            a == c
        ),
    )
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        criterion(1, "grid constants", secs(1), grid_constants),
        criterion(2, "coherence table", secs(1), coherence_table),
        criterion(3, "DPSS against dense eigendecomposition", secs(10), dpss_correctness),
        criterion(4, "LSF against direct sums", secs(5), lsf_oracle),
        criterion(5, "single-path localization", secs(30), single_path),
        criterion(6, "two-path spread closed forms", secs(60), spread_closed_forms),
        criterion(7, "marginal consistency", secs(5), marginal_consistency),
        criterion(8, "mixture recovery", secs(30), mixture_recovery),
        criterion(9, "scenario structure", secs(120), scenario_structure),
        criterion(10, "report determinism", secs(300), determinism),
    ];
    mixture_monte_carlo(10);
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
