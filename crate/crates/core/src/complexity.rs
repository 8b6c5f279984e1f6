//! Real-multiplication counts per sample.
//!
//! Counting rules: a complex multiply is 4 real multiplies; symmetric taps
//! are folded so a tap pair costs one multiply; `|x|²` costs 2, the scalar
//! nonlinear gain 1 and the phase rotation 4; `exp` comes from a lookup
//! table and is free. Perturbation taps are charged 4 per folded pair, the
//! published accounting for the extra nonlinear term.

use serde::{Deserialize, Serialize};

use crate::model::{EqualizerModel, Mode};

/// Tally of real multiplications, split the way the reports break them down.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MulCounter {
    pub linear: u64,
    pub nonlinear_base: u64,
    pub nonlinear_pa: u64,
}

impl MulCounter {
    pub fn total(&self) -> u64 {
        self.linear + self.nonlinear_base + self.nonlinear_pa
    }
}

/// `4·ceil(N_CD/2)`.
pub fn complexity_tde_linear(n_cd: usize) -> u64 {
    4 * n_cd.div_ceil(2) as u64
}

/// 7 for LDBP; PA-LDBP adds `4·ceil(N_PB/2)`.
pub fn complexity_nonlinear(mode: Mode, n_pb: usize) -> u64 {
    match mode {
        Mode::Ldbp => 7,
        Mode::PaLdbp => 7 + 4 * n_pb.div_ceil(2) as u64,
    }
}

/// `4·[2·N_FFT·log2(N_FFT) + N_FFT] / (N_FFT - N_CD)`.
pub fn complexity_fde_linear(n_fft: usize, n_cd: usize) -> Option<f64> {
    if !n_fft.is_power_of_two() || n_fft <= n_cd {
        return None;
    }
    let n = n_fft as f64;
    Some(4.0 * (2.0 * n * n.log2() + n) / (n - n_cd as f64))
}

/// The power-of-two FFT size in `[min, max]` minimizing the FDE cost.
pub fn optimal_fft_size(n_cd: usize, min: usize, max: usize) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    let mut n = min.next_power_of_two();
    while n <= max {
        if let Some(c) = complexity_fde_linear(n, n_cd) {
            if best.is_none_or(|(_, b)| c < b) {
                best = Some((n, c));
            }
        }
        n *= 2;
    }
    best
}

/// How the linear steps are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearDomain {
    Tde,
    Fde { fft_size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepComplexity {
    pub linear: f64,
    pub nonlinear_base: f64,
    pub nonlinear_pa: f64,
}

impl StepComplexity {
    pub fn total(&self) -> f64 {
        self.linear + self.nonlinear_base + self.nonlinear_pa
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub domain: LinearDomain,
    pub steps: Vec<StepComplexity>,
    pub linear: f64,
    pub nonlinear_base: f64,
    pub nonlinear_pa: f64,
    pub total: f64,
}

/// Analytic multiplications per sample of a model, summed over its steps.
pub fn analytic_count(model: &EqualizerModel, domain: LinearDomain) -> ComplexityReport {
    let steps: Vec<StepComplexity> = model
        .steps
        .iter()
        .map(|s| {
            let n_cd = s.filter.len();
            let linear = match domain {
                LinearDomain::Tde => complexity_tde_linear(n_cd) as f64,
                LinearDomain::Fde { fft_size } => complexity_fde_linear(fft_size, n_cd).unwrap_or(f64::INFINITY),
            };
            let base = complexity_nonlinear(Mode::Ldbp, 0) as f64;
            let pa = match model.mode {
                Mode::Ldbp => 0.0,
                Mode::PaLdbp => (complexity_nonlinear(Mode::PaLdbp, s.c0_len()) - 7) as f64,
            };
            StepComplexity {
                linear,
                nonlinear_base: base,
                nonlinear_pa: pa,
            }
        })
        .collect();
    let linear = steps.iter().map(|s| s.linear).sum();
    let nonlinear_base = steps.iter().map(|s| s.nonlinear_base).sum();
    let nonlinear_pa = steps.iter().map(|s| s.nonlinear_pa).sum();
    ComplexityReport {
        domain,
        total: steps.iter().map(|s| s.total()).sum(),
        steps,
        linear,
        nonlinear_base,
        nonlinear_pa,
    }
}
