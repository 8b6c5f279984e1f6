//! Equalizer networks: conventional DBP, LDBP and PA-LDBP.
//!
//! A learned model is a chain of steps, each a symmetric FIR filter followed
//! by a pointwise phase rotation `y_n·exp(-jφ_n)`. LDBP uses
//! `φ_n = η·γ·L_eff·P·|y_n|²`; PA-LDBP uses the windowed form
//! `φ_n = Σ_k c_|k|·|y_{n+k}|²` over real, symmetric taps.
//!
//! Models run on unit-power receiver samples. The launch power `P` is folded
//! into the nonlinear parameters when a model is assembled
//! ([`EqualizerModel::power_scale_w`] records the value), so PA taps are
//! stored in radians per unit of normalized power.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cdc::{apply_fir, apply_fir_counted, apply_fir_fde, cdc_exact, circular_fir, CdcFilter, FdeConfig};
use crate::channel::{effective_length, LinkParams};
use crate::complexity::{LinearDomain, MulCounter};
use crate::error::{Error, Result};
use crate::signal::ComplexSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Ldbp,
    PaLdbp,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Ldbp => "ldbp",
            Mode::PaLdbp => "pa-ldbp",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ldbp" => Ok(Mode::Ldbp),
            "pa-ldbp" | "pa" => Ok(Mode::PaLdbp),
            other => Err(Error::invalid(format!("unknown model mode '{other}'"))),
        }
    }
}

/// Nonlinear part of a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinear {
    /// Fixed LDBP gain η.
    Eta(f64),
    /// Half of the symmetric PA vector: `[c_0, c_1, …, c_K]`, power folded in.
    C0HalfTaps(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    #[serde(flatten)]
    pub filter: CdcFilter,
    pub nl: Nonlinear,
    pub mu_km: f64,
    pub gamma: f64,
    /// Accumulated effective length of the spans in this step (km).
    pub l_eff: f64,
}

impl StepParams {
    /// Full c0 length `2K+1`; 1 for LDBP steps.
    pub fn c0_len(&self) -> usize {
        match &self.nl {
            Nonlinear::Eta(_) => 1,
            Nonlinear::C0HalfTaps(c) => 2 * c.len() - 1,
        }
    }

    /// Phase per unit of normalized power on the center sample.
    fn ldbp_gain(&self, power_w: f64) -> f64 {
        match &self.nl {
            Nonlinear::Eta(eta) => eta * self.gamma * self.l_eff * power_w,
            Nonlinear::C0HalfTaps(c) => c[0],
        }
    }
}

/// Which taps survive pruning, over the half-tap extent at assembly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneMask {
    pub filter: Vec<bool>,
    pub c0: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualizerModel {
    pub mode: Mode,
    pub spans_per_step: usize,
    pub steps: Vec<StepParams>,
    /// Sample rate the filters were designed for (Hz).
    pub sample_rate: f64,
    /// Launch power (W) folded into the nonlinear parameters.
    pub power_scale_w: f64,
    pub pruning_masks: Vec<PruneMask>,
}

/// Per-step initialization of the nonlinear part, in physical units.
#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearInit {
    Eta(f64),
    /// PA half taps in rad/W (`[C_00, 2C_01, …]`).
    C0(Vec<f64>),
}

impl EqualizerModel {
    /// Replicates one filter and one nonlinear init over every step of the link.
    pub fn assemble(
        link: &LinkParams,
        spans_per_step: usize,
        filter: CdcFilter,
        init: NonlinearInit,
        power_w: f64,
    ) -> Result<Self> {
        if spans_per_step == 0 || !link.n_spans.is_multiple_of(spans_per_step) {
            return Err(Error::invalid(format!(
                "spans per step {spans_per_step} must divide the span count {}",
                link.n_spans
            )));
        }
        if !(power_w > 0.0 && power_w.is_finite()) {
            return Err(Error::invalid("assembly power must be positive"));
        }
        let n_steps = link.n_spans / spans_per_step;
        let mu_km = spans_per_step as f64 * link.span_km;
        let l_eff = spans_per_step as f64 * effective_length(link.alpha, link.span_km);
        let (mode, nl) = match init {
            NonlinearInit::Eta(eta) => (Mode::Ldbp, Nonlinear::Eta(eta)),
            NonlinearInit::C0(c) => {
                if c.is_empty() {
                    return Err(Error::invalid("c0 needs at least the center tap"));
                }
                (
                    Mode::PaLdbp,
                    Nonlinear::C0HalfTaps(c.iter().map(|v| v * power_w).collect()),
                )
            }
        };
        let mask = PruneMask {
            filter: vec![true; filter.half_taps.len()],
            c0: match &nl {
                Nonlinear::Eta(_) => vec![true],
                Nonlinear::C0HalfTaps(c) => vec![true; c.len()],
            },
        };
        let sample_rate = filter.design_rate;
        let step = StepParams {
            filter,
            nl,
            mu_km,
            gamma: link.gamma,
            l_eff,
        };
        Ok(EqualizerModel {
            mode,
            spans_per_step,
            steps: vec![step; n_steps],
            sample_rate,
            power_scale_w: power_w,
            pruning_masks: vec![mask; n_steps],
        })
    }

    /// Multiplies every nonlinear parameter (η or c0 taps) by `factor`.
    pub fn scale_nonlinear(&mut self, factor: f64) {
        for step in &mut self.steps {
            match &mut step.nl {
                Nonlinear::Eta(e) => *e *= factor,
                Nonlinear::C0HalfTaps(c) => c.iter_mut().for_each(|v| *v *= factor),
            }
        }
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// Largest full filter length over the steps.
    pub fn max_filter_len(&self) -> usize {
        self.steps.iter().map(|s| s.filter.len()).max().unwrap_or(0)
    }

    pub fn max_c0_len(&self) -> usize {
        self.steps.iter().map(|s| s.c0_len()).max().unwrap_or(0)
    }

    /// Number of trainable reals: filter half taps (re, im) and PA half taps.
    pub fn n_params(&self) -> usize {
        self.steps
            .iter()
            .map(|s| {
                2 * s.filter.half_taps.len()
                    + match &s.nl {
                        Nonlinear::Eta(_) => 0,
                        Nonlinear::C0HalfTaps(c) => c.len(),
                    }
            })
            .sum()
    }

    /// Flattened trainable parameters, step by step: `re h_0, im h_0, …, c_0, …`.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for s in &self.steps {
            for h in &s.filter.half_taps {
                out.push(h.re);
                out.push(h.im);
            }
            if let Nonlinear::C0HalfTaps(c) = &s.nl {
                out.extend_from_slice(c);
            }
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::LengthMismatch {
                expected: self.n_params(),
                actual: p.len(),
            });
        }
        let mut i = 0;
        for s in &mut self.steps {
            for h in &mut s.filter.half_taps {
                *h = Complex64::new(p[i], p[i + 1]);
                i += 2;
            }
            if let Nonlinear::C0HalfTaps(c) = &mut s.nl {
                let k = c.len();
                c.copy_from_slice(&p[i..i + k]);
                i += k;
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &ComplexSignal) -> Result<()> {
        let rel = (x.sample_rate() - self.sample_rate).abs() / self.sample_rate;
        if rel > 1e-9 {
            return Err(Error::invalid(format!(
                "input rate {} Hz differs from model rate {} Hz",
                x.sample_rate(),
                self.sample_rate
            )));
        }
        for s in &self.steps {
            if let Nonlinear::C0HalfTaps(c) = &s.nl {
                if 2 * c.len() - 1 > x.len() {
                    return Err(Error::invalid("c0 longer than the frame"));
                }
            }
        }
        Ok(())
    }

    fn activation(&self, step: &StepParams, y: &[Complex64], counter: Option<&mut MulCounter>) -> Vec<Complex64> {
        let n = y.len() as u64;
        match &step.nl {
            Nonlinear::Eta(_) => {
                if let Some(c) = counter {
                    c.nonlinear_base += 7 * n;
                }
                ldbp_activation(y, step.ldbp_gain(self.power_scale_w))
            }
            Nonlinear::C0HalfTaps(c0) => {
                if let Some(c) = counter {
                    c.nonlinear_base += 7 * n;
                    c.nonlinear_pa += 4 * c0.len() as u64 * n;
                }
                pa_activation(y, c0)
            }
        }
    }

    /// Runs every step on `x` (unit-power samples at the model rate).
    pub fn forward(&self, x: &ComplexSignal) -> Result<ComplexSignal> {
        self.forward_in(x, LinearDomain::Tde)
    }

    /// Forward pass with the linear steps evaluated in the given domain.
    pub fn forward_in(&self, x: &ComplexSignal, domain: LinearDomain) -> Result<ComplexSignal> {
        self.check_input(x)?;
        let mut u = x.clone();
        for (i, step) in self.steps.iter().enumerate() {
            let y = match domain {
                LinearDomain::Tde => apply_fir(&u, &step.filter)?,
                LinearDomain::Fde { fft_size } => apply_fir_fde(&u, &step.filter, &FdeConfig::new(fft_size))?,
            };
            u = y.with_samples(self.activation(step, y.samples(), None))?;
            u.check_finite(i + 1, "equalizer step")?;
        }
        Ok(u)
    }

    /// [`forward`](Self::forward) while tallying the real multiplications
    /// actually performed.
    pub fn forward_counted(&self, x: &ComplexSignal, counter: &mut MulCounter) -> Result<ComplexSignal> {
        self.check_input(x)?;
        let mut u = x.clone();
        for step in &self.steps {
            let y = apply_fir_counted(&u, &step.filter, counter)?;
            u = y.with_samples(self.activation(step, y.samples(), Some(counter)))?;
        }
        Ok(u)
    }

    /// Forward pass keeping every intermediate needed for reverse mode.
    pub fn forward_trace(&self, x: &[Complex64]) -> Trace {
        let mut steps = Vec::with_capacity(self.steps.len());
        let mut u = x.to_vec();
        for step in &self.steps {
            let y = circular_fir(&u, &step.filter.half_taps);
            let p: Vec<f64> = y.iter().map(|v| v.norm_sqr()).collect();
            let phi = match &step.nl {
                Nonlinear::Eta(_) => {
                    let g = step.ldbp_gain(self.power_scale_w);
                    p.iter().map(|v| g * v).collect()
                }
                Nonlinear::C0HalfTaps(c0) => correlate_real(&p, c0),
            };
            let out: Vec<Complex64> = y
                .iter()
                .zip(&phi)
                .map(|(v, f)| v * Complex64::from_polar(1.0, -f))
                .collect();
            steps.push(StepTrace { input: u, y, p, phi });
            u = out;
        }
        Trace { steps, output: u }
    }
}

/// Intermediates of one step.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub input: Vec<Complex64>,
    pub y: Vec<Complex64>,
    pub p: Vec<f64>,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub steps: Vec<StepTrace>,
    pub output: Vec<Complex64>,
}

/// `φ_n = Σ_{|k|≤K} c_|k|·p_{n+k}` with circular indexing.
pub(crate) fn correlate_real(p: &[f64], half: &[f64]) -> Vec<f64> {
    let n = p.len();
    (0..n)
        .map(|i| {
            let mut acc = half[0] * p[i];
            for (k, c) in half.iter().enumerate().skip(1) {
                if *c != 0.0 {
                    acc += c * (p[(i + n - k % n) % n] + p[(i + k) % n]);
                }
            }
            acc
        })
        .collect()
}

/// LDBP activation `y_n·exp(-j·g·|y_n|²)`.
pub fn ldbp_activation(y: &[Complex64], gain: f64) -> Vec<Complex64> {
    y.iter()
        .map(|v| v * Complex64::from_polar(1.0, -gain * v.norm_sqr()))
        .collect()
}

/// PA activation: `x_n·exp(-jφ_n)` with `φ` the circular correlation of
/// `|x|²` with the symmetric vector whose half is `c0_half`.
pub fn pa_activation(x_cd: &[Complex64], c0_half: &[f64]) -> Vec<Complex64> {
    if c0_half.is_empty() {
        return x_cd.to_vec();
    }
    let p: Vec<f64> = x_cd.iter().map(|v| v.norm_sqr()).collect();
    let phi = correlate_real(&p, c0_half);
    x_cd.iter()
        .zip(&phi)
        .map(|(v, f)| v * Complex64::from_polar(1.0, -f))
        .collect()
}

/// LDBP forward pass; errors if the model is not an LDBP model.
pub fn ldbp_forward(x: &ComplexSignal, model: &EqualizerModel) -> Result<ComplexSignal> {
    if model.mode != Mode::Ldbp {
        return Err(Error::invalid("ldbp_forward needs an LDBP model"));
    }
    model.forward(x)
}

/// PA-LDBP forward pass; errors if the model is not a PA-LDBP model.
pub fn pa_ldbp_forward(x: &ComplexSignal, model: &EqualizerModel) -> Result<ComplexSignal> {
    if model.mode != Mode::PaLdbp {
        return Err(Error::invalid("pa_ldbp_forward needs a PA-LDBP model"));
    }
    model.forward(x)
}

/// Conventional DBP on a field in physical units (√W).
///
/// Spans are undone last to first: the amplifier gain is divided out, then
/// each of `steps_per_span` steps applies the exact linear step and the
/// phase `exp(-jζγL_eff(μ)|x|²)`. With ζ = 1 and the forward step count this
/// inverts the noiseless channel.
pub fn dbp_baseline(x: &ComplexSignal, link: &LinkParams, steps_per_span: usize, zeta: f64) -> Result<ComplexSignal> {
    if steps_per_span == 0 {
        return Err(Error::invalid("DBP needs at least one step per span"));
    }
    let mu = link.span_km / steps_per_span as f64;
    let nl = zeta * link.gamma * effective_length(link.alpha, mu);
    let inv_gain = 10f64.powf(-link.edfa_gain_db / 20.0);
    let mut u = x.clone();
    for span in 0..link.n_spans {
        u.scale(inv_gain);
        for step in 0..steps_per_span {
            u = cdc_exact(&u, mu, link)?;
            if nl != 0.0 {
                let rotated = ldbp_activation(u.samples(), nl);
                u = u.with_samples(rotated)?;
            }
            u.check_finite(span * steps_per_span + step + 1, "dbp step")?;
        }
    }
    Ok(u)
}
