//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Run everything with `cargo test --test acceptance`, or a subset by number:
//! `cargo test --test acceptance -- 1 3 5`. Criteria 6 to 8 train models on
//! the full 20-span link and take several minutes each on one core.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nlc_core::cdc::{apply_fir, apply_fir_fde, cdc_exact, CdcFilter, FdeConfig};
use nlc_core::channel::{launch_waveform, ssfm_propagate, transmit_link, LaunchConfig, LinkParams};
use nlc_core::complexity::{analytic_count, optimal_fft_size, LinearDomain, MulCounter};
use nlc_core::dataset::{simulate_frames, SystemConfig};
use nlc_core::experiment::{ExperimentConfig, PowerData, Scheme};
use nlc_core::metrics::{ber_from_q2, q2_from_ber};
use nlc_core::model::{dbp_baseline, pa_activation, EqualizerModel, Mode, Nonlinear};
use nlc_core::perturbation::{
    coefficient, compute_field, compute_row0, truncate_row, FieldSetup, QuadratureConfig, TimeIntegral,
};
use nlc_core::signal::rng::SeedStream;
use nlc_core::signal::{fft_in_place, max_abs_diff, ComplexSignal, SymbolFrame};
use nlc_core::training::{evaluate, frame_loss, frame_loss_grad, train, InitMode, TrainConfig};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

/// Collects named sub-checks into one criterion outcome.
#[derive(Default)]
struct Checks {
    failed: Vec<String>,
    lines: Vec<String>,
}

impl Checks {
    fn check(&mut self, name: &str, ok: bool, value: String) {
        let line = format!("{name} {value}");
        if !ok {
            self.failed.push(line.clone());
        }
        self.lines.push(line);
    }

    fn outcome(self, started: Instant, budget_s: f64) -> Outcome {
        let secs = started.elapsed().as_secs_f64();
        let in_time = secs <= budget_s;
        let mut detail = self.lines.join("; ");
        detail.push_str(&format!("; {secs:.1} s (budget {budget_s:.0} s)"));
        Outcome::new(self.failed.is_empty() && in_time, detail)
    }
}

fn random_samples(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = SeedStream::new(seed).rng(0u16, 0);
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect()
}

fn random_filter(half_len: usize, rate: f64, seed: u64) -> CdcFilter {
    let mut rng = SeedStream::new(seed).rng(0u16, 1);
    let half = (0..=half_len)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    CdcFilter::new(half, 80.0, rate).unwrap()
}

fn oracles() -> Outcome {
    let t = Instant::now();
    let mut c = Checks::default();

    // FFT against the O(N²) transform.
    let x = random_samples(256, 1);
    let mut fx = x.clone();
    fft_in_place(&mut fx).unwrap();
    let n = x.len();
    let dft: Vec<Complex64> = (0..n)
        .map(|k| {
            (0..n)
                .map(|j| x[j] * Complex64::from_polar(1.0, -2.0 * PI * ((j * k) % n) as f64 / n as f64))
                .sum()
        })
        .collect();
    let e = max_abs_diff(&fx, &dft);
    c.check("fft", e <= 1e-10, format!("{e:.1e}"));

    // Nonlinear phase only: u·exp(jγ|u|²z).
    let s = ComplexSignal::new(random_samples(256, 2).iter().map(|v| v * 0.1).collect(), 64e9).unwrap();
    let spm_link = LinkParams {
        alpha: 0.0,
        beta2: 0.0,
        gamma: 40.0,
        ..LinkParams::default()
    };
    let out = ssfm_propagate(&s, &spm_link, 80.0, 10).unwrap();
    let want: Vec<Complex64> = s
        .samples()
        .iter()
        .map(|u| u * Complex64::from_polar(1.0, 40.0 * u.norm_sqr() * 80.0))
        .collect();
    let e = max_abs_diff(out.samples(), &want);
    c.check("spm", e <= 1e-10, format!("{e:.1e}"));

    // Dispersed Gaussian pulse.
    let (n, t0, z) = (2048usize, 20.0f64, 80.0);
    let tp = |i: usize| i as f64 - (n / 2) as f64;
    let pulse: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new((-tp(i) * tp(i) / (2.0 * t0 * t0)).exp(), 0.0))
        .collect();
    let disp_link = LinkParams {
        alpha: 0.0,
        gamma: 0.0,
        ..LinkParams::default()
    };
    let out = ssfm_propagate(&ComplexSignal::new(pulse, 1e12).unwrap(), &disp_link, z, 4).unwrap();
    let b = Complex64::new(t0 * t0, -disp_link.beta2 * z);
    let want: Vec<Complex64> = (0..n)
        .map(|i| t0 / b.sqrt() * (-(tp(i) * tp(i)) / (2.0 * b)).exp())
        .collect();
    let e = max_abs_diff(out.samples(), &want);
    c.check("gaussian", e <= 1e-8, format!("{e:.1e}"));

    // Exact compensation undoes lossy linear propagation.
    let lin_link = LinkParams {
        gamma: 0.0,
        ..LinkParams::default()
    };
    let s = ComplexSignal::new(random_samples(1024, 3), 64e9).unwrap();
    let back = cdc_exact(&ssfm_propagate(&s, &lin_link, 160.0, 2).unwrap(), 160.0, &lin_link).unwrap();
    let e = max_abs_diff(back.samples(), s.samples());
    c.check("cdc_roundtrip", e <= 1e-10, format!("{e:.1e}"));

    // Symmetric FIR against the dense circulant matrix.
    let s = ComplexSignal::new(random_samples(256, 4), 64e9).unwrap();
    let f = random_filter(8, 64e9, 5);
    let taps = f.full_taps();
    let v = f.half_len() as isize;
    let n = s.len() as isize;
    let dense: Vec<Complex64> = (0..n)
        .map(|i| {
            (-v..=v)
                .map(|j| taps[(j + v) as usize] * s.samples()[(i - j).rem_euclid(n) as usize])
                .sum()
        })
        .collect();
    let e = max_abs_diff(apply_fir(&s, &f).unwrap().samples(), &dense);
    c.check("fir", e <= 1e-12, format!("{e:.1e}"));

    // Overlap-and-add equals circular time-domain filtering.
    let s = ComplexSignal::new(random_samples(2048, 6), 64e9).unwrap();
    let f = random_filter(38, 64e9, 7);
    let tde = apply_fir(&s, &f).unwrap();
    let fde = apply_fir_fde(&s, &f, &FdeConfig::new(256)).unwrap();
    let e = max_abs_diff(tde.samples(), fde.samples());
    c.check("fde", e <= 1e-9, format!("{e:.1e}"));

    // SPM + IXPM phase against the explicit triplet sum over m = 0 or k = 0.
    let x: Vec<Complex64> = random_samples(64, 8);
    let c0 = [0.2, 0.07, -0.03, 0.011];
    let kmax = c0.len() as isize - 1;
    let n = x.len() as isize;
    let at = |i: isize| x[i.rem_euclid(n) as usize];
    let brute: Vec<Complex64> = (0..n)
        .map(|i| {
            let mut delta = Complex64::new(0.0, 0.0);
            for m in -kmax..=kmax {
                for k in -kmax..=kmax {
                    if m == 0 || k == 0 {
                        delta += c0[(m + k).unsigned_abs()] * at(i + k) * at(i + m + k).conj() * at(i + m);
                    }
                }
            }
            at(i) * Complex64::from_polar(1.0, -(delta / at(i)).re)
        })
        .collect();
    let half: Vec<f64> = c0
        .iter()
        .enumerate()
        .map(|(k, v)| if k == 0 { *v } else { 2.0 * v })
        .collect();
    let e = max_abs_diff(&pa_activation(&x, &half), &brute);
    c.check("pa_activation", e <= 1e-10, format!("{e:.1e}"));

    // Q² ↔ BER.
    let e = (0..=40)
        .map(|i| 3.0 + 0.5 * i as f64)
        .map(|q| (q2_from_ber(ber_from_q2(q)).unwrap() - q).abs())
        .fold(0.0, f64::max);
    c.check("q2", e <= 1e-9, format!("{e:.1e} dB"));

    c.outcome(t, 60.0)
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let mut cfg = ExperimentConfig::default();
    cfg.link.n_spans = 2;
    cfg.link.steps_per_span = 8;
    cfg.system.frame_len = 128;
    let launch = LaunchConfig::new(3.0).unwrap();
    let frame = &simulate_frames(&cfg.link, &cfg.system, &launch, 9, 1).unwrap()[0];
    let mut model = cfg.build_model(Mode::PaLdbp, 1, launch.watts(), 1.0).unwrap();

    // Distinct values per step so every parameter has its own gradient.
    let mut rng = SeedStream::new(10).rng(0u16, 0);
    let class = class_of(&model);
    let p: Vec<f64> = model
        .params()
        .iter()
        .zip(&class)
        .map(|(v, &k)| match k {
            2 => v * (1.0 + 0.2 * rng.random_range(-1.0..1.0)),
            _ => v + 1e-3 * rng.random_range(-1.0..1.0),
        })
        .collect();
    model.set_params(&p).unwrap();

    let sps = cfg.system.rx_sps;
    let (_, g) = frame_loss_grad(&model, frame, sps).unwrap();
    let gmax = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let h = 1e-6;
    let mut worst = [0.0f64; 3];
    for i in 0..p.len() {
        let mut m = model.clone();
        let mut q = p.clone();
        q[i] += h;
        m.set_params(&q).unwrap();
        let lp = frame_loss(&m, frame, sps).unwrap();
        q[i] -= 2.0 * h;
        m.set_params(&q).unwrap();
        let lm = frame_loss(&m, frame, sps).unwrap();
        let fd = (lp - lm) / (2.0 * h);
        let rel = (fd - g[i]).abs() / g[i].abs().max(1e-3 * gmax);
        worst[class[i]] = worst[class[i]].max(rel);
    }
    let mut c = Checks::default();
    for (name, w) in ["filter_re", "filter_im", "c0"].iter().zip(worst) {
        c.check(name, w < 1e-5, format!("{w:.1e}"));
    }
    c.check("params", true, format!("{} over {} steps", p.len(), model.n_steps()));
    c.outcome(t, 60.0)
}

/// 0 = real filter part, 1 = imaginary filter part, 2 = c0 tap.
fn class_of(model: &EqualizerModel) -> Vec<usize> {
    let mut out = Vec::new();
    for s in &model.steps {
        for _ in &s.filter.half_taps {
            out.push(0);
            out.push(1);
        }
        if let Nonlinear::C0HalfTaps(c0) = &s.nl {
            out.extend(std::iter::repeat_n(2, c0.len()));
        }
    }
    out
}

fn exact_inverse() -> Outcome {
    let t = Instant::now();
    let link = LinkParams {
        n_spans: 4,
        steps_per_span: 20,
        ase: false,
        ..LinkParams::default()
    };
    let system = SystemConfig::default();
    let pulse = system.pulse().unwrap();
    let frame = SymbolFrame::random(11, 1024).unwrap();
    let launch = LaunchConfig::new(4.0).unwrap();
    let tx = launch_waveform(&frame, &launch, &pulse, system.symbol_rate).unwrap();
    let rx = transmit_link(&frame, &link, &launch, &pulse, system.symbol_rate, 12).unwrap();
    let back = dbp_baseline(&rx, &link, link.steps_per_span, 1.0).unwrap();
    let e = max_abs_diff(back.samples(), tx.samples());
    let drift = max_abs_diff(rx.samples(), tx.samples());
    let mut c = Checks::default();
    c.check("max_error", e <= 1e-6, format!("{e:.1e} √W"));
    c.check("rel_error", true, format!("{:.1e}", e / tx.mean_power().sqrt()));
    c.check("uncompensated", drift > 1e3 * e, format!("{drift:.1e} √W"));
    c.outcome(t, 60.0)
}

fn perturbation() -> Outcome {
    let t = Instant::now();
    let mut c = Checks::default();
    let setup = FieldSetup::new(&LinkParams::default(), 1, 32e9, 2);

    let f = compute_field(&setup, 4, &QuadratureConfig::default()).unwrap();
    let c00 = f.get(0, 0).norm();
    let mut sym = 0.0f64;
    let mut imag = 0.0f64;
    for m in -4..=4i64 {
        for k in -4..=4i64 {
            sym = sym.max((f.get(m, k) - f.get(k, m)).norm() / c00);
        }
        imag = imag.max(f.get(0, m).im.abs() / c00);
    }
    c.check("symmetry", sym <= 1e-8, format!("{sym:.1e}"));
    c.check("row0_real", imag <= 1e-8, format!("{imag:.1e}"));

    let h = setup.pulse.t0_ps / 2.0;
    let run = |h: f64, m: i64, k: i64| {
        let cfg = QuadratureConfig {
            time: TimeIntegral::Trapezoid { h_ps: h },
            z_rel_tol: 1e-9,
        };
        coefficient(&setup, m, k, &cfg).unwrap().0
    };
    let quad = [(0, 0), (0, 3), (1, 2), (-2, 4)]
        .iter()
        .map(|&(m, k)| (run(h, m, k) - run(h / 2.0, m, k)).norm() / c00)
        .fold(0.0, f64::max);
    c.check("quadrature", quad <= 1e-6, format!("{quad:.1e}"));

    let row = compute_row0(&setup, 64, &QuadratureConfig::default()).unwrap();
    let taps = truncate_row(&row, setup.span_km, -20.0).unwrap().len();
    c.check("taps_1span", (9..=13).contains(&taps), format!("{taps}"));
    c.outcome(t, 600.0)
}

fn complexity() -> Outcome {
    let t = Instant::now();
    let mut c = Checks::default();
    let lens = [37usize, 51, 95, 251];
    let sizes: Vec<usize> = lens
        .iter()
        .map(|&n| optimal_fft_size(n, 128, 8192).unwrap().0)
        .collect();
    c.check("fft_sizes", sizes == [256, 512, 1024, 2048], format!("{sizes:?}"));

    let mut cfg = ExperimentConfig::default();
    let x = ComplexSignal::new(random_samples(2048, 13), cfg.system.rx_rate()).unwrap();
    let mut mismatches = 0;
    let mut runs = 0;
    for (&s, &n_cd) in [1usize, 2, 4, 10].iter().zip(&lens) {
        cfg.model.filter_len = Some(n_cd);
        for mode in [Mode::Ldbp, Mode::PaLdbp] {
            let m = cfg.build_model(mode, s, 1e-3, 1.0).unwrap();
            let mut counter = MulCounter::default();
            m.forward_counted(&x, &mut counter).unwrap();
            let r = analytic_count(&m, LinearDomain::Tde);
            let n = x.len() as f64;
            let same = counter.linear as f64 == r.linear * n
                && counter.nonlinear_base as f64 == r.nonlinear_base * n
                && counter.nonlinear_pa as f64 == r.nonlinear_pa * n;
            runs += 1;
            if !same {
                mismatches += 1;
            }
        }
    }
    c.check(
        "counts",
        mismatches == 0,
        format!("{}/{runs} models agree", runs - mismatches),
    );
    c.outcome(t, 60.0)
}

/// Settings shared by the training criteria.
fn reduced_scale(overrides: &[&str]) -> ExperimentConfig {
    let mut all = vec!["link.steps_per_span=50"];
    all.extend_from_slice(overrides);
    let owned: Vec<String> = all.iter().map(|s| s.to_string()).collect();
    ExperimentConfig::from_sources(None, &owned).unwrap()
}

/// Launch power (integer dBm) maximizing `score`, found by evaluating
/// `start` and then stepping 1 dB outward while the best point sits on the
/// edge of what has been evaluated and inside `[lo, hi]`.
fn peak_power(start: &[i32], lo: i32, hi: i32, mut score: impl FnMut(i32) -> f64) -> (i32, f64) {
    let mut seen: BTreeMap<i32, f64> = start.iter().map(|&p| (p, score(p))).collect();
    loop {
        let (&best, _) = seen.iter().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        let (&first, _) = seen.first_key_value().unwrap();
        let (&last, _) = seen.last_key_value().unwrap();
        let next = if best == first && best > lo {
            best - 1
        } else if best == last && best < hi {
            best + 1
        } else {
            return (best, seen[&best]);
        };
        seen.insert(next, score(next));
    }
}

fn reduced_scale_performance() -> Outcome {
    let t = Instant::now();
    let cfg = reduced_scale(&["n_train=80", "n_val=16", "n_test=32", "train.epochs=30"]);
    let (lo, hi) = (-6, 3);
    let mut cache: BTreeMap<i32, PowerData> = BTreeMap::new();
    let mut data = |p: i32| -> PowerData {
        cache
            .entry(p)
            .or_insert_with(|| cfg.datasets(p as f64).unwrap())
            .clone()
    };

    let cdo_peak = peak_power(&[-3, -2, -1], lo, hi, |p| {
        let q = cfg.evaluate_cdo(&data(p).test).unwrap().q2_db;
        eprintln!("  cdo {p:+} dBm: {q:.2} dB");
        q
    });

    let mut peaks = Vec::new();
    for s in [1usize, 2, 4] {
        for scheme in [Scheme::Ldbp, Scheme::PaLdbp] {
            let best = peak_power(&[-1, 0], lo, hi, |p| {
                let q = cfg.run_scheme(scheme, s, &data(p)).unwrap().test.q2_db;
                eprintln!("  {scheme} S={s} {p:+} dBm: {q:.2} dB");
                q
            });
            peaks.push((scheme, s, best));
        }
    }
    let peak = |scheme: Scheme, s: usize| {
        peaks
            .iter()
            .find(|(a, b, _)| *a == scheme && *b == s)
            .map(|(_, _, p)| p.1)
            .unwrap()
    };
    let at: Vec<String> = peaks.iter().map(|(a, b, p)| format!("{a} S={b} {} dBm", p.0)).collect();

    let mut c = Checks::default();
    c.check("cdo_peak", true, format!("{:.2} dB at {} dBm", cdo_peak.1, cdo_peak.0));
    let gain1 = peak(Scheme::PaLdbp, 1) - cdo_peak.1;
    c.check("(a) pa_s1_over_cdo", gain1 >= 2.0, format!("{gain1:+.2} dB"));
    let mut gains = Vec::new();
    for s in [1usize, 2, 4] {
        let d = peak(Scheme::PaLdbp, s) - peak(Scheme::Ldbp, s);
        c.check(&format!("(b) pa_over_ldbp_s{s}"), d >= 0.3, format!("{d:+.2} dB"));
        gains.push(peak(Scheme::PaLdbp, s) - cdo_peak.1);
    }
    let monotone = gains.windows(2).all(|w| w[0] > w[1]);
    let shown: Vec<String> = gains.iter().map(|g| format!("{g:+.2}")).collect();
    c.check("(c) pa_gain_by_s", monotone, format!("[{}] dB", shown.join(", ")));
    c.check("optimal_powers", true, format!("[{}]", at.join(", ")));
    c.outcome(t, 4.0 * 3600.0)
}

fn pruning() -> Outcome {
    let t = Instant::now();
    let mut cfg = reduced_scale(&[
        "n_train=80",
        "n_val=16",
        "n_test=32",
        "train.epochs=30",
        "model.c0_len=41",
        "pruning.finetune_epochs=2",
    ]);
    let d = cfg.datasets(-2.0).unwrap();
    let r = cfg.run_scheme(Scheme::PaLdbp, 10, &d).unwrap();
    let mut m = r.model.unwrap();
    let q41 = r.test.q2_db;
    cfg.pruning.c0_len = Some(31);
    let q31 = cfg.run_prune(&mut m, &d).unwrap().last().unwrap().q2_db;
    cfg.pruning.c0_len = Some(11);
    let q11 = cfg.run_prune(&mut m, &d).unwrap().last().unwrap().q2_db;

    let mut c = Checks::default();
    c.check("q2_41", true, format!("{q41:.2} dB"));
    c.check("41_to_31", (q31 - q41).abs() < 0.2, format!("{:+.3} dB", q31 - q41));
    c.check("31_to_11", q31 - q11 <= 0.5, format!("{:+.3} dB", q11 - q31));
    c.outcome(t, 3600.0)
}

fn initialization() -> Outcome {
    let t = Instant::now();
    let cfg = reduced_scale(&["n_train=40", "n_val=8", "n_test=1", "train.epochs=20"]);
    let d = cfg.datasets(0.0).unwrap();
    let power_w = LaunchConfig::new(0.0).unwrap().watts();
    let sps = cfg.system.rx_sps;
    let mut c = Checks::default();
    for s in [2usize, 4] {
        let mut base = cfg.build_model(Mode::PaLdbp, s, power_w, 1.0).unwrap();
        let (factor, _) = cfg
            .select_eta(|f| {
                let mut m = base.clone();
                m.scale_nonlinear(f);
                evaluate(&m, &d.val, sps)
            })
            .unwrap();
        base.scale_nonlinear(factor);

        let mut m = base.clone();
        let analytic = train(&mut m, &d.train, &d.val, &cfg.train)
            .unwrap()
            .epochs_to_fraction(0.95);
        let random: Vec<usize> = (0..5u64)
            .map(|k| {
                let tc = TrainConfig {
                    init_mode: InitMode::RandomGaussian,
                    seed: 100 + k,
                    ..cfg.train.clone()
                };
                let mut m = base.clone();
                train(&mut m, &d.train, &d.val, &tc).unwrap().epochs_to_fraction(0.95)
            })
            .collect();
        let mean = random.iter().sum::<usize>() as f64 / random.len() as f64;
        c.check(
            &format!("s{s}"),
            (analytic as f64) < mean,
            format!("analytic {analytic} vs random {random:?} (mean {mean:.1}) epochs"),
        );
    }
    c.outcome(t, 3600.0)
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        (1, "oracle suite", oracles),
        (2, "gradient check", gradients),
        (3, "exact-inverse DBP", exact_inverse),
        (4, "perturbation coefficients", perturbation),
        (5, "complexity", complexity),
        (6, "reduced-scale performance", reduced_scale_performance),
        (7, "pruning trend", pruning),
        (8, "initialization study", initialization),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut all_pass = true;
    for (n, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let outcome = run();
        all_pass &= outcome.pass;
        println!(
            "{} criterion {n} ({name}): {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
