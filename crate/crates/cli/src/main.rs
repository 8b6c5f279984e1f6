//! `nlc`: command-line harness for the nonlinearity compensation lab.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O
//! or file-format error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlc_core::experiment::{
    complexity_csv, complexity_rows, design_csv, peak_q2, prune_csv, sweep_csv, Artifact, CoefficientFile,
    ExperimentConfig, FilterFile, PowerData, Scheme, SweepRow,
};
use nlc_core::model::EqualizerModel;
use nlc_core::training::{evaluate, TrainRecord};
use nlc_core::{Error, VERSION};

#[derive(Parser, Debug)]
#[command(name = "nlc", version = VERSION, about = "Fiber nonlinearity compensation lab")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration field, e.g. `--set link.n_spans=4`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Seed for data, initialization and shuffling (replaces the configured seeds).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "NLC_THREADS", default_value_t = 0, global = true)]
    threads: usize,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate training and test datasets for every launch power.
    Simulate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Design FIR filters and perturbation coefficients.
    Design {
        #[arg(long)]
        out: PathBuf,
        /// Spans per step to design for (defaults to the configured value).
        #[arg(long, value_delimiter = ',')]
        spans: Vec<usize>,
    },
    /// Train a model on a simulated dataset.
    Train {
        /// Directory written by `nlc simulate`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        power: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained model or a baseline on the test frames.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        /// Trained model file; omit to evaluate `--scheme`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Baseline to evaluate without a model (cdo or dbp).
        #[arg(long, default_value = "cdo")]
        scheme: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate, train and evaluate a power × scheme grid in memory.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "cdo,dbp,ldbp,pa-ldbp")]
        schemes: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        spans: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multiplications per sample of a model (or of the configured design).
    Complexity {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Progressively prune a trained model with fine-tuning.
    Prune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        power: f64,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Config { .. } | Error::InvalidArgument(_) | Error::InvalidThreshold(_)) => 2,
        Some(
            Error::NumericOverflow { .. }
            | Error::Accuracy { .. }
            | Error::NonFiniteGradient { .. }
            | Error::Diverged { .. }
            | Error::Aliasing(_)
            | Error::LengthMismatch { .. },
        ) => 3,
        Some(Error::Io(_) | Error::Json(_) | Error::Format(_)) => 4,
        None if e.downcast_ref::<std::io::Error>().is_some() => 4,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if cli.global.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.threads)
            .build_global()
        {
            log::warn!("thread pool already configured: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(g: &Global) -> anyhow::Result<ExperimentConfig> {
    let mut overrides = g.overrides.clone();
    if let Some(seed) = g.seed {
        overrides.push(format!("seeds.train={seed}"));
        overrides.push(format!("seeds.test={}", seed.wrapping_add(1)));
        overrides.push(format!("train.seed={seed}"));
    }
    Ok(ExperimentConfig::load(g.config.as_deref(), &overrides)?)
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
    }
    std::fs::write(path, contents).map_err(Error::from)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    write(path, &serde_json::to_string_pretty(value).map_err(Error::from)?)
}

fn read_model(path: &Path) -> anyhow::Result<Artifact<EqualizerModel>> {
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} is missing; run `nlc train` first", path.display()),
        ))
        .into());
    }
    let text = std::fs::read_to_string(path).map_err(Error::from)?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli.global)?;
    let digest = cfg.digest();
    match cli.command {
        Command::Simulate { out } => {
            let files = cfg.simulate_to(&out)?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Design { out, spans } => {
            let spans = if spans.is_empty() {
                vec![cfg.model.spans_per_step]
            } else {
                spans
            };
            let rows = cfg.design_summary(&spans)?;
            for &s in &spans {
                let fir = cfg.design_filter(s)?;
                write_json(
                    &out.join(format!("filter_s{s}.json")),
                    &Artifact::new(
                        FilterFile {
                            design_mu_km: fir.filter.design_mu_km,
                            rate_hz: fir.filter.design_rate,
                            half_taps: fir.filter.half_taps.clone(),
                            residual: fir.residual,
                        },
                        &digest,
                    ),
                )?;
                let c0 = cfg.design_c0(s)?;
                write_json(
                    &out.join(format!("c0_s{s}.json")),
                    &Artifact::new(
                        CoefficientFile {
                            span_km: c0.span_km,
                            chi_db: c0.chi_db,
                            taps: c0.taps,
                        },
                        &digest,
                    ),
                )?;
            }
            let csv = design_csv(&rows, &digest);
            write(&out.join("design.csv"), &csv)?;
            print!("{csv}");
        }
        Command::Train { data, power, out } => {
            let d = cfg.load_power(&data, power)?;
            let scheme = match cfg.model.mode {
                nlc_core::model::Mode::Ldbp => Scheme::Ldbp,
                nlc_core::model::Mode::PaLdbp => Scheme::PaLdbp,
            };
            let r = cfg.run_scheme(scheme, cfg.model.spans_per_step, &d)?;
            let model = r.model.expect("learned scheme");
            let record = r.record.expect("learned scheme");
            write_json(&out.join("model.json"), &Artifact::new(model, &digest))?;
            write(&out.join("train_record.csv"), &record_csv(&record, &digest))?;
            write_json(
                &out.join("manifest.json"),
                &serde_json::json!({
                    "version": VERSION,
                    "config_digest": digest,
                    "data_digest": cfg.data_digest(),
                    "config": cfg,
                    "power_dbm": power,
                    "nonlinear_scale": r.eta,
                    "wall_time_s": record.wall_time_s,
                    "test": r.test,
                }),
            )?;
            println!(
                "{} S={} P={} dBm: Q2 {} dB, effective SNR {:.3} dB",
                scheme,
                cfg.model.spans_per_step,
                power,
                r.test.q2_display(),
                r.test.eff_snr_db.unwrap_or(f64::NAN)
            );
        }
        Command::Evaluate {
            data,
            model,
            scheme,
            out,
        } => {
            let mut rows = Vec::new();
            for &p in &cfg.launch_powers_dbm {
                let d = cfg.load_power(&data, p)?;
                let (scheme, spans, report) = match &model {
                    Some(path) => {
                        let m = read_model(path)?.body;
                        let s = match m.mode {
                            nlc_core::model::Mode::Ldbp => Scheme::Ldbp,
                            nlc_core::model::Mode::PaLdbp => Scheme::PaLdbp,
                        };
                        (s, m.spans_per_step, evaluate(&m, &d.test, cfg.system.rx_sps)?)
                    }
                    None => {
                        let s: Scheme = scheme.parse()?;
                        (s, 1, evaluate_baseline(&cfg, s, &d)?)
                    }
                };
                rows.push(SweepRow {
                    power_dbm: p,
                    scheme,
                    spans_per_step: spans,
                    q2_db: report.q2_db,
                    q2_lower_bound: report.q2_lower_bound,
                    eff_snr_db: report.eff_snr_db,
                });
            }
            let csv = sweep_csv(&rows, &digest);
            match out {
                Some(path) => write(&path, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Sweep { schemes, spans, out } => {
            let schemes: Vec<Scheme> = schemes.iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
            let spans = if spans.is_empty() {
                vec![cfg.model.spans_per_step]
            } else {
                spans
            };
            let mut rows = Vec::new();
            let mut cx = Vec::new();
            for &p in &cfg.launch_powers_dbm {
                let d = cfg.datasets(p)?;
                let cdo = cfg.evaluate_cdo(&d.test)?;
                for &scheme in &schemes {
                    let grid: &[usize] = if scheme.mode().is_some() { &spans } else { &[1] };
                    for &s in grid {
                        let r = cfg.run_scheme(scheme, s, &d)?;
                        log::info!("P={p} {scheme} S={s}: Q2 {}", r.test.q2_display());
                        if let Some(m) = &r.model {
                            cx.extend(complexity_rows(&cfg, scheme, m, Some(r.test.q2_db - cdo.q2_db)));
                        }
                        rows.push(SweepRow::from_result(&r));
                    }
                }
            }
            write(&out.join("sweep.csv"), &sweep_csv(&rows, &digest))?;
            write(&out.join("complexity.csv"), &complexity_csv(&cx, &digest))?;
            for &scheme in &schemes {
                let grid: &[usize] = if scheme.mode().is_some() { &spans } else { &[1] };
                for &s in grid {
                    if let Some((p, q)) = peak_q2(&rows, scheme, s) {
                        println!("peak {scheme} S={s}: {q:.3} dB at {p} dBm");
                    }
                }
            }
        }
        Command::Complexity { model, out } => {
            let (scheme, m) = match model {
                Some(path) => {
                    let m = read_model(&path)?.body;
                    let s = match m.mode {
                        nlc_core::model::Mode::Ldbp => Scheme::Ldbp,
                        nlc_core::model::Mode::PaLdbp => Scheme::PaLdbp,
                    };
                    (s, m)
                }
                None => {
                    let m = cfg.build_model(cfg.model.mode, cfg.model.spans_per_step, 1e-3, 1.0)?;
                    let s = match m.mode {
                        nlc_core::model::Mode::Ldbp => Scheme::Ldbp,
                        nlc_core::model::Mode::PaLdbp => Scheme::PaLdbp,
                    };
                    (s, m)
                }
            };
            let csv = complexity_csv(&complexity_rows(&cfg, scheme, &m, None), &digest);
            match out {
                Some(path) => write(&path, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Prune {
            data,
            power,
            model,
            out,
        } => {
            let d = cfg.load_power(&data, power)?;
            let mut m = read_model(&model)?.body;
            let stages = cfg.run_prune(&mut m, &d)?;
            write_json(&out.join("model.json"), &Artifact::new(m, &digest))?;
            let csv = prune_csv(&stages, &digest);
            write(&out.join("prune.csv"), &csv)?;
            print!("{csv}");
        }
    }
    Ok(())
}

fn evaluate_baseline(
    cfg: &ExperimentConfig,
    scheme: Scheme,
    d: &PowerData,
) -> anyhow::Result<nlc_core::metrics::MetricsReport> {
    Ok(match scheme {
        Scheme::Cdo => cfg.evaluate_cdo(&d.test)?,
        Scheme::Dbp => {
            let (zeta, _) = cfg.select_eta(|z| cfg.evaluate_dbp(&d.val, z))?;
            cfg.evaluate_dbp(&d.test, zeta)?
        }
        other => {
            return Err(Error::Config {
                path: "--scheme".into(),
                message: format!("{other} needs a trained model; pass --model"),
            }
            .into())
        }
    })
}

fn record_csv(record: &TrainRecord, digest: &str) -> String {
    let mut s = nlc_core::experiment::provenance_line(digest);
    s.push_str(&record.to_csv());
    s
}
