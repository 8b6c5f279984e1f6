//! Experiment configuration and the end-to-end pipelines behind the CLI.
//!
//! One flat JSON document configures a run. `--set key=value` overrides are
//! applied to the parsed JSON tree before it is deserialized, so a dotted
//! key addresses exactly the field it names and every validation error
//! carries that path.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cdc::{cd_compensate, design_fir_ls, FirDesign};
use crate::channel::{LaunchConfig, LinkParams};
use crate::complexity::{analytic_count, optimal_fft_size, LinearDomain};
use crate::dataset::{digest_hex, simulate_frames, Dataset, FrameRecord, SystemConfig};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::{dbp_baseline, EqualizerModel, Mode, NonlinearInit};
use crate::perturbation::{compute_row0, truncate_row, FieldSetup, PerturbationVector, QuadratureConfig};
use crate::signal::ComplexSignal;
use crate::training::{
    downsample, evaluate, evaluate_with, prune, train, PruneStage, PruneTargets, TrainConfig, TrainRecord,
};

/// Equalization schemes compared in sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Chromatic-dispersion compensation only.
    Cdo,
    /// Conventional DBP with exact linear steps.
    Dbp,
    Ldbp,
    PaLdbp,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Cdo => "cdo",
            Scheme::Dbp => "dbp",
            Scheme::Ldbp => "ldbp",
            Scheme::PaLdbp => "pa-ldbp",
        }
    }

    pub fn mode(&self) -> Option<Mode> {
        match self {
            Scheme::Ldbp => Some(Mode::Ldbp),
            Scheme::PaLdbp => Some(Mode::PaLdbp),
            _ => None,
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cdo" | "cdc" | "cd-only" => Ok(Scheme::Cdo),
            "dbp" => Ok(Scheme::Dbp),
            "ldbp" => Ok(Scheme::Ldbp),
            "pa-ldbp" | "pa" => Ok(Scheme::PaLdbp),
            other => Err(Error::invalid(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: Mode,
    pub spans_per_step: usize,
    /// FIR length per step; `None` uses `72·S + 5` (77/149/293/725 for 1/2/4/10).
    pub filter_len: Option<usize>,
    /// c0 length per step; `None` uses the truncation window.
    pub c0_len: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mode: Mode::PaLdbp,
            spans_per_step: 1,
            filter_len: None,
            c0_len: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    /// Truncation threshold in dB.
    pub chi_db: f64,
    pub z_rel_tol: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            chi_db: -20.0,
            z_rel_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruningConfig {
    pub filter_len: Option<usize>,
    pub c0_len: Option<usize>,
    /// Fine-tuning epochs after each pruning stage.
    pub finetune_epochs: usize,
    /// Adam step size while fine-tuning. Each stage restarts the optimizer,
    /// so a step size below the training one avoids knocking a converged
    /// model away from its optimum.
    pub finetune_learning_rate: f64,
}

impl Default for PruningConfig {
    fn default() -> Self {
        PruningConfig {
            filter_len: None,
            c0_len: None,
            finetune_epochs: 5,
            finetune_learning_rate: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub train: u64,
    pub test: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { train: 1, test: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub link: LinkParams,
    pub system: SystemConfig,
    pub launch_powers_dbm: Vec<f64>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub perturbation: PerturbationConfig,
    pub pruning: PruningConfig,
    /// Candidate η (LDBP), c0 scale (PA-LDBP) and ζ (DBP) values, chosen on
    /// the validation frames.
    pub eta_grid: Vec<f64>,
    pub dbp_steps_per_span: usize,
    pub seeds: Seeds,
    /// Frames simulated for training; the last `n_val` are held out.
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// FFT sizes searched for frequency-domain inference.
    pub fft_min: usize,
    pub fft_max: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            link: LinkParams::default(),
            system: SystemConfig::default(),
            launch_powers_dbm: vec![-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0],
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            perturbation: PerturbationConfig::default(),
            pruning: PruningConfig::default(),
            eta_grid: (3..=12).map(|i| i as f64 / 10.0).collect(),
            dbp_steps_per_span: 1,
            seeds: Seeds::default(),
            n_train: 256,
            n_val: 32,
            n_test: 64,
            fft_min: 128,
            fft_max: 8192,
        }
    }
}

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

/// Sets `key` (dotted path) in a JSON tree. The raw value is parsed as JSON
/// when possible and kept as a string otherwise.
pub fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(key, "empty path component"));
    }
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        let here = parts[..=i].join(".");
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| config_err(&here, "cannot set a field inside a non-object value"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

/// Parses `key=value` into its two halves.
pub fn split_override(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .ok_or_else(|| config_err(s, "override must look like key=value"))
}

impl ExperimentConfig {
    /// Builds a config from an optional JSON text and `key=value` overrides
    /// (overrides win over the file, the file over defaults).
    pub fn from_sources(json: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut root = match json {
            Some(text) => serde_json::from_str::<Value>(text).map_err(|e| config_err("<file>", e.to_string()))?,
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            let (k, v) = split_override(o)?;
            apply_override(&mut root, k, v)?;
        }
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(root).map_err(|e| {
            let path = e.path().to_string();
            config_err(&path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p)?),
            None => None,
        };
        Self::from_sources(text.as_deref(), overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.link.validate().map_err(|e| match e {
            Error::InvalidArgument(m) => config_err("link", m),
            other => other,
        })?;
        self.system.validate()?;
        self.train.validate()?;
        if self.launch_powers_dbm.is_empty() {
            return Err(config_err("launch_powers_dbm", "need at least one launch power"));
        }
        if let Some(p) = self.launch_powers_dbm.iter().find(|p| !p.is_finite()) {
            return Err(config_err("launch_powers_dbm", format!("non-finite power {p}")));
        }
        let s = self.model.spans_per_step;
        if s == 0 || !self.link.n_spans.is_multiple_of(s) {
            return Err(config_err(
                "model.spans_per_step",
                format!("must divide the span count {}", self.link.n_spans),
            ));
        }
        for (path, len) in [
            ("model.filter_len", self.model.filter_len),
            ("model.c0_len", self.model.c0_len),
            ("pruning.filter_len", self.pruning.filter_len),
            ("pruning.c0_len", self.pruning.c0_len),
        ] {
            if let Some(l) = len {
                if l == 0 || l % 2 == 0 {
                    return Err(config_err(path, format!("must be odd and >= 1, got {l}")));
                }
                if l > self.system.frame_len {
                    return Err(config_err(path, format!("{l} exceeds the frame length")));
                }
            }
        }
        if let Some(l) = self.model.filter_len {
            if l < 3 {
                return Err(config_err("model.filter_len", "must be at least 3"));
            }
        }
        if self.perturbation.chi_db > 0.0 || !self.perturbation.chi_db.is_finite() {
            return Err(config_err("perturbation.chi_db", "must be <= 0 dB"));
        }
        if self.eta_grid.is_empty() {
            return Err(config_err("eta_grid", "need at least one candidate"));
        }
        if !(self.pruning.finetune_learning_rate > 0.0) {
            return Err(config_err("pruning.finetune_learning_rate", "must be > 0"));
        }
        if self.dbp_steps_per_span == 0 {
            return Err(config_err("dbp_steps_per_span", "must be >= 1"));
        }
        if self.n_val >= self.n_train {
            return Err(config_err("n_val", "must be smaller than n_train"));
        }
        if self.n_test == 0 {
            return Err(config_err("n_test", "must be >= 1"));
        }
        if self.train.rx_sps != self.system.rx_sps {
            return Err(config_err("train.rx_sps", "must equal system.rx_sps"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        digest_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn filter_len(&self, spans_per_step: usize) -> usize {
        self.model.filter_len.unwrap_or(72 * spans_per_step + 5)
    }

    /// Digest of the settings that determine the simulated frames.
    pub fn data_digest(&self) -> String {
        let v = serde_json::json!({
            "link": self.link,
            "system": self.system,
            "seeds": self.seeds,
            "n_train": self.n_train,
            "n_test": self.n_test,
        });
        digest_hex(v.to_string().as_bytes())
    }

    /// Simulates and writes the training and test files of every launch
    /// power into `dir`.
    pub fn simulate_to(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let digest = self.data_digest();
        let mut written = Vec::new();
        for &p in &self.launch_powers_dbm {
            for (split, seed, n) in [
                ("train", self.seeds.train, self.n_train),
                ("test", self.seeds.test, self.n_test),
            ] {
                let ds = Dataset::generate(&self.link, &self.system, p, seed, n, &digest)?;
                let path = dataset_path(dir, split, p);
                ds.save(&path)?;
                written.push(path);
            }
        }
        Ok(written)
    }

    /// Reads the files written by [`Self::simulate_to`] for one power.
    pub fn load_power(&self, dir: &Path, power_dbm: f64) -> Result<PowerData> {
        let read = |split: &str| -> Result<Dataset> {
            let path = dataset_path(dir, split, power_dbm);
            if !path.exists() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("{} is missing; run `nlc simulate` first", path.display()),
                )));
            }
            let ds = Dataset::load(&path)?;
            if ds.header.config_digest != self.data_digest() {
                log::warn!("{} was simulated with different link/system settings", path.display());
            }
            Ok(ds)
        };
        let mut train = read("train")?.frames;
        if train.len() <= self.n_val {
            return Err(config_err(
                "n_val",
                "not smaller than the number of training frames on disk",
            ));
        }
        let val = train.split_off(train.len() - self.n_val);
        Ok(PowerData {
            power_dbm,
            train,
            val,
            test: read("test")?.frames,
        })
    }

    /// Training, validation and test frames at one launch power. The same
    /// seeds are used at every power.
    pub fn datasets(&self, power_dbm: f64) -> Result<PowerData> {
        let launch = LaunchConfig::new(power_dbm)?;
        let mut train = simulate_frames(&self.link, &self.system, &launch, self.seeds.train, self.n_train)?;
        let val = train.split_off(self.n_train - self.n_val);
        let test = simulate_frames(&self.link, &self.system, &launch, self.seeds.test, self.n_test)?;
        Ok(PowerData {
            power_dbm,
            train,
            val,
            test,
        })
    }

    /// Least-squares FIR for steps of `spans_per_step` spans.
    pub fn design_filter(&self, spans_per_step: usize) -> Result<FirDesign> {
        design_fir_ls(
            spans_per_step as f64 * self.link.span_km,
            &self.link,
            self.filter_len(spans_per_step),
            self.system.rx_rate(),
            self.system.band_hz(),
        )
    }

    /// c0 for steps of `spans_per_step` spans, truncated at `chi_db` or
    /// cut/extended to `model.c0_len`.
    pub fn design_c0(&self, spans_per_step: usize) -> Result<PerturbationVector> {
        let setup = FieldSetup::new(&self.link, spans_per_step, self.system.symbol_rate, self.system.rx_sps);
        let cfg = QuadratureConfig {
            z_rel_tol: self.perturbation.z_rel_tol,
            ..QuadratureConfig::default()
        };
        let mut k_max = 16 * spans_per_step + 8;
        if let Some(l) = self.model.c0_len {
            k_max = k_max.max(l / 2);
        }
        loop {
            let row = compute_row0(&setup, k_max, &cfg)?;
            let mut v = truncate_row(&row, setup.span_km * setup.n_spans as f64, self.perturbation.chi_db)?;
            if v.clipped && self.model.c0_len.is_none() && k_max < self.system.frame_len / 2 {
                k_max *= 2;
                continue;
            }
            if let Some(l) = self.model.c0_len {
                let half: Vec<f64> = (0..=l / 2)
                    .map(|k| if k == 0 { row[0] } else { 2.0 * row[k] })
                    .collect();
                v.taps = half.iter().rev().chain(&half[1..]).copied().collect();
                v.clipped = false;
            }
            return Ok(v);
        }
    }

    /// Analytically initialized model at `power_w`.
    pub fn build_model(&self, mode: Mode, spans_per_step: usize, power_w: f64, eta: f64) -> Result<EqualizerModel> {
        let filter = self.design_filter(spans_per_step)?.filter;
        let init = match mode {
            Mode::Ldbp => NonlinearInit::Eta(eta),
            Mode::PaLdbp => NonlinearInit::C0(self.design_c0(spans_per_step)?.half_taps()),
        };
        EqualizerModel::assemble(&self.link, spans_per_step, filter, init, power_w)
    }

    /// Metrics of CD-only compensation over the whole link.
    pub fn evaluate_cdo(&self, frames: &[FrameRecord]) -> Result<MetricsReport> {
        let total = self.link.total_km();
        let rate = self.system.rx_rate();
        let sps = self.system.rx_sps;
        evaluate_with(frames, |f| {
            let x = ComplexSignal::new(f.samples.clone(), rate)?;
            let z = cd_compensate(&x, total, &self.link)?;
            Ok(downsample(z.samples(), f.symbol_scale(), sps))
        })
    }

    /// Metrics of conventional DBP with nonlinear weight `zeta`.
    pub fn evaluate_dbp(&self, frames: &[FrameRecord], zeta: f64) -> Result<MetricsReport> {
        let rate = self.system.rx_rate();
        let sps = self.system.rx_sps;
        evaluate_with(frames, |f| {
            let mut x = ComplexSignal::new(f.samples.clone(), rate)?;
            x.scale(f.norm_factor);
            let z = dbp_baseline(&x, &self.link, self.dbp_steps_per_span, zeta)?;
            Ok(downsample(z.samples(), 1.0 / f.launch_w.sqrt(), sps))
        })
    }

    /// Best entry of `eta_grid` by validation Q² (effective SNR breaks ties).
    pub fn select_eta<F>(&self, mut score: F) -> Result<(f64, MetricsReport)>
    where
        F: FnMut(f64) -> Result<MetricsReport>,
    {
        let mut best: Option<(f64, MetricsReport)> = None;
        for &eta in &self.eta_grid {
            let r = score(eta)?;
            let better = match &best {
                None => true,
                Some((_, b)) => {
                    (r.q2_db, r.eff_snr_db.unwrap_or(f64::NEG_INFINITY))
                        > (b.q2_db, b.eff_snr_db.unwrap_or(f64::NEG_INFINITY))
                }
            };
            if better {
                best = Some((eta, r));
            }
        }
        best.ok_or_else(|| config_err("eta_grid", "empty"))
    }

    /// Runs one scheme at one launch power: chooses η, the c0 scale or ζ on
    /// the validation frames, trains learned models and evaluates on the
    /// test frames.
    pub fn run_scheme(&self, scheme: Scheme, spans_per_step: usize, data: &PowerData) -> Result<SchemeResult> {
        let power_w = LaunchConfig::new(data.power_dbm)?.watts();
        let sps = self.system.rx_sps;
        let (eta, model, record) = match scheme {
            Scheme::Cdo => (None, None, None),
            Scheme::Dbp => {
                let (zeta, _) = self.select_eta(|z| self.evaluate_dbp(&data.val, z))?;
                (Some(zeta), None, None)
            }
            Scheme::Ldbp | Scheme::PaLdbp => {
                let mode = scheme.mode().expect("learned scheme");
                let base = self.build_model(mode, spans_per_step, power_w, 1.0)?;
                let (factor, _) = self.select_eta(|f| {
                    let mut m = base.clone();
                    m.scale_nonlinear(f);
                    evaluate(&m, &data.val, sps)
                })?;
                let mut model = base;
                model.scale_nonlinear(factor);
                let record = train(&mut model, &data.train, &data.val, &self.train)?;
                (Some(factor), Some(model), Some(record))
            }
        };
        let test = match (scheme, &model) {
            (Scheme::Cdo, _) => self.evaluate_cdo(&data.test)?,
            (Scheme::Dbp, _) => self.evaluate_dbp(&data.test, eta.expect("zeta chosen"))?,
            (_, Some(m)) => evaluate(m, &data.test, sps)?,
            _ => unreachable!("learned schemes carry a model"),
        };
        Ok(SchemeResult {
            scheme,
            spans_per_step,
            power_dbm: data.power_dbm,
            eta,
            test,
            model,
            record,
        })
    }

    /// Progressive pruning of a trained model on `data`.
    pub fn run_prune(&self, model: &mut EqualizerModel, data: &PowerData) -> Result<Vec<PruneStage>> {
        let cfg = TrainConfig {
            epochs: self.pruning.finetune_epochs,
            learning_rate: self.pruning.finetune_learning_rate,
            ..self.train.clone()
        };
        let targets = PruneTargets {
            filter_len: self.pruning.filter_len,
            c0_len: self.pruning.c0_len,
        };
        prune(model, targets, &cfg, &data.train, &data.test)
    }

    /// Filter and c0 lengths of the designed initializations per spans-per-step.
    pub fn design_summary(&self, spans: &[usize]) -> Result<Vec<DesignRow>> {
        spans
            .iter()
            .map(|&s| {
                let fir = self.design_filter(s)?;
                let c0 = self.design_c0(s)?;
                Ok(DesignRow {
                    spans_per_step: s,
                    filter_len: fir.filter.len(),
                    fir_residual: fir.residual,
                    c0_len: c0.len(),
                    c0_center: c0.taps[c0.len() / 2],
                    optimal_fft: optimal_fft_size(fir.filter.len(), self.fft_min, self.fft_max).map(|x| x.0),
                })
            })
            .collect()
    }
}

/// `<dir>/<split>_<power>dBm.nlcd`.
pub fn dataset_path(dir: &Path, split: &str, power_dbm: f64) -> std::path::PathBuf {
    dir.join(format!("{split}_{power_dbm}dBm.nlcd"))
}

/// Frames of one launch power.
#[derive(Debug, Clone)]
pub struct PowerData {
    pub power_dbm: f64,
    pub train: Vec<FrameRecord>,
    pub val: Vec<FrameRecord>,
    pub test: Vec<FrameRecord>,
}

#[derive(Debug, Clone)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub spans_per_step: usize,
    pub power_dbm: f64,
    /// Chosen η (LDBP), c0 scale (PA-LDBP) or ζ (DBP).
    pub eta: Option<f64>,
    pub test: MetricsReport,
    pub model: Option<EqualizerModel>,
    pub record: Option<TrainRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub spans_per_step: usize,
    pub filter_len: usize,
    pub fir_residual: f64,
    pub c0_len: usize,
    pub c0_center: f64,
    pub optimal_fft: Option<usize>,
}

/// Header comment carried by every CSV output.
pub fn provenance_line(digest: &str) -> String {
    format!("# version={} config_digest={}\n", crate::VERSION, digest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub power_dbm: f64,
    pub scheme: Scheme,
    pub spans_per_step: usize,
    pub q2_db: f64,
    pub q2_lower_bound: bool,
    pub eff_snr_db: Option<f64>,
}

impl SweepRow {
    pub fn from_result(r: &SchemeResult) -> Self {
        SweepRow {
            power_dbm: r.power_dbm,
            scheme: r.scheme,
            spans_per_step: r.spans_per_step,
            q2_db: r.test.q2_db,
            q2_lower_bound: r.test.q2_lower_bound,
            eff_snr_db: r.test.eff_snr_db,
        }
    }
}

pub fn sweep_csv(rows: &[SweepRow], digest: &str) -> String {
    let mut s = provenance_line(digest);
    s.push_str("power_dbm,scheme,spans_per_step,q2_db,eff_snr_db\n");
    for r in rows {
        let q2 = if r.q2_lower_bound {
            format!(">{:.4}", r.q2_db)
        } else {
            format!("{:.4}", r.q2_db)
        };
        let snr = r.eff_snr_db.map(|v| format!("{v:.4}")).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.power_dbm, r.scheme, r.spans_per_step, q2, snr
        ));
    }
    s
}

/// Best Q² of `scheme` at `spans_per_step` over all powers.
pub fn peak_q2(rows: &[SweepRow], scheme: Scheme, spans_per_step: usize) -> Option<(f64, f64)> {
    rows.iter()
        .filter(|r| r.scheme == scheme && (r.spans_per_step == spans_per_step || scheme == Scheme::Cdo))
        .map(|r| (r.power_dbm, r.q2_db))
        .fold(None, |acc: Option<(f64, f64)>, x| match acc {
            Some(a) if a.1 >= x.1 => Some(a),
            _ => Some(x),
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub scheme: Scheme,
    pub spans_per_step: usize,
    pub domain: LinearDomain,
    pub mults_per_sample: f64,
    pub q2_gain_db: Option<f64>,
}

/// Multiplications per sample of `model` in the time domain and at the
/// cost-optimal FFT size, with an optional Q² gain attached.
pub fn complexity_rows(
    cfg: &ExperimentConfig,
    scheme: Scheme,
    model: &EqualizerModel,
    q2_gain_db: Option<f64>,
) -> Vec<ComplexityRow> {
    let mut rows = vec![ComplexityRow {
        scheme,
        spans_per_step: model.spans_per_step,
        domain: LinearDomain::Tde,
        mults_per_sample: analytic_count(model, LinearDomain::Tde).total,
        q2_gain_db,
    }];
    if let Some((n, _)) = optimal_fft_size(model.max_filter_len(), cfg.fft_min, cfg.fft_max) {
        let d = LinearDomain::Fde { fft_size: n };
        rows.push(ComplexityRow {
            scheme,
            spans_per_step: model.spans_per_step,
            domain: d,
            mults_per_sample: analytic_count(model, d).total,
            q2_gain_db,
        });
    }
    rows
}

pub fn complexity_csv(rows: &[ComplexityRow], digest: &str) -> String {
    let mut s = provenance_line(digest);
    s.push_str("scheme,spans_per_step,domain,fft_size,mults_per_sample,q2_gain_db\n");
    for r in rows {
        let (d, n) = match r.domain {
            LinearDomain::Tde => ("tde", String::new()),
            LinearDomain::Fde { fft_size } => ("fde", fft_size.to_string()),
        };
        let g = r.q2_gain_db.map(|v| format!("{v:.4}")).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{:.4},{}\n",
            r.scheme, r.spans_per_step, d, n, r.mults_per_sample, g
        ));
    }
    s
}

pub fn design_csv(rows: &[DesignRow], digest: &str) -> String {
    let mut s = provenance_line(digest);
    s.push_str("spans_per_step,filter_len,fir_residual,c0_len,c0_center,optimal_fft\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{:.6e},{},{:.6e},{}\n",
            r.spans_per_step,
            r.filter_len,
            r.fir_residual,
            r.c0_len,
            r.c0_center,
            r.optimal_fft.map(|n| n.to_string()).unwrap_or_default()
        ));
    }
    s
}

pub fn prune_csv(stages: &[PruneStage], digest: &str) -> String {
    let mut s = provenance_line(digest);
    s.push_str("filter_len,c0_len,q2_db,eff_snr_db\n");
    for st in stages {
        let snr = st.eff_snr_db.map(|v| format!("{v:.4}")).unwrap_or_default();
        s.push_str(&format!("{},{},{:.4},{}\n", st.filter_len, st.c0_len, st.q2_db, snr));
    }
    s
}

/// JSON envelope adding provenance to any serializable artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub version: String,
    pub config_digest: String,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Artifact<T> {
    pub fn new(body: T, digest: &str) -> Self {
        Artifact {
            version: crate::VERSION.into(),
            config_digest: digest.into(),
            body,
        }
    }
}

/// Filter file body: `{design_mu_km, rate_hz, half_taps: [[re, im], …]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterFile {
    pub design_mu_km: f64,
    pub rate_hz: f64,
    pub half_taps: Vec<Complex64>,
    pub residual: f64,
}

/// Coefficient file body: `{span_km, chi_db, taps}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientFile {
    pub span_km: f64,
    pub chi_db: f64,
    pub taps: Vec<f64>,
}
