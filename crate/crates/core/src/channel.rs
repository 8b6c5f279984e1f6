//! Multi-span fiber link: SSFM propagation of the scalar NLSE, lumped EDFA
//! gain with ASE noise, the transmitter and the coherent receiver front-end.
//!
//! Units: distance in km, time in ps inside the propagation kernels
//! (`β2` in ps²/km, `ω` converted from rad/s), power in W, `γ` in 1/W/km.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::rng::{Purpose, SeedStream};
use crate::signal::{fft_in_place, ifft_in_place, resample, rrc_shape, ComplexSignal, PulseShape, SymbolFrame};

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// dB/km → 1/km (power attenuation).
pub fn alpha_from_db(db_per_km: f64) -> f64 {
    db_per_km / (10.0 * std::f64::consts::E.log10())
}

/// Dispersion parameter D (ps/nm/km) at `wavelength_nm` → β2 (ps²/km).
pub fn beta2_from_dispersion(d_ps_nm_km: f64, wavelength_nm: f64) -> f64 {
    let c_nm_per_ps = SPEED_OF_LIGHT * 1e9 / 1e12;
    -d_ps_nm_km * wavelength_nm * wavelength_nm / (2.0 * std::f64::consts::PI * c_nm_per_ps)
}

/// Effective nonlinear length `(1 - e^{-αμ})/α` in km (μ when α = 0).
pub fn effective_length(alpha: f64, mu_km: f64) -> f64 {
    if alpha == 0.0 {
        mu_km
    } else {
        -(-alpha * mu_km).exp_m1() / alpha
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkParams {
    /// Power attenuation, 1/km.
    pub alpha: f64,
    /// Group-velocity dispersion, ps²/km.
    pub beta2: f64,
    /// Nonlinear coefficient, 1/W/km.
    pub gamma: f64,
    pub span_km: f64,
    pub n_spans: usize,
    pub steps_per_span: usize,
    pub edfa_gain_db: f64,
    pub edfa_nf_db: f64,
    pub wavelength_nm: f64,
    /// Adds ASE at every amplifier when true.
    pub ase: bool,
}

impl Default for LinkParams {
    /// 20 × 80 km SSMF, 0.2 dB/km, 17 ps/nm/km, 1.3 /W/km, EDFA 16 dB / NF 5 dB,
    /// 100 SSFM steps per span.
    fn default() -> Self {
        let alpha_db = 0.2;
        let span_km = 80.0;
        LinkParams {
            alpha: alpha_from_db(alpha_db),
            beta2: beta2_from_dispersion(17.0, 1550.12),
            gamma: 1.3,
            span_km,
            n_spans: 20,
            steps_per_span: 100,
            edfa_gain_db: alpha_db * span_km,
            edfa_nf_db: 5.0,
            wavelength_nm: 1550.12,
            ase: true,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| {
            Err(Error::Config {
                path: format!("link.{path}"),
                message,
            })
        };
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha", format!("must be >= 0, got {}", self.alpha));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma", format!("must be >= 0, got {}", self.gamma));
        }
        if !self.beta2.is_finite() {
            return bad("beta2", "must be finite".into());
        }
        if !(self.span_km > 0.0) {
            return bad("span_km", format!("must be > 0, got {}", self.span_km));
        }
        if self.steps_per_span == 0 {
            return bad("steps_per_span", "must be >= 1".into());
        }
        if !(self.edfa_gain_db >= 0.0) {
            return bad("edfa_gain_db", format!("must be >= 0, got {}", self.edfa_gain_db));
        }
        if !(self.wavelength_nm > 0.0) {
            return bad("wavelength_nm", "must be > 0".into());
        }
        Ok(())
    }

    /// Span loss in dB, `α·L` expressed in decibels.
    pub fn span_loss_db(&self) -> f64 {
        self.alpha * self.span_km * 10.0 * std::f64::consts::E.log10()
    }

    pub fn total_km(&self) -> f64 {
        self.span_km * self.n_spans as f64
    }

    /// Linear power gain of one amplifier.
    pub fn edfa_gain(&self) -> f64 {
        10f64.powf(self.edfa_gain_db / 10.0)
    }

    pub fn photon_energy(&self) -> f64 {
        PLANCK * SPEED_OF_LIGHT / (self.wavelength_nm * 1e-9)
    }

    /// ASE power (W) added by one amplifier over the full bandwidth `sample_rate`:
    /// `n_sp·hν·(G-1)·f_s` with `n_sp = NF/2 · G/(G-1)`.
    pub fn ase_power(&self, sample_rate: f64) -> f64 {
        if !self.ase {
            return 0.0;
        }
        let nf = 10f64.powf(self.edfa_nf_db / 10.0);
        let g = self.edfa_gain();
        // n_sp (G-1) simplifies to NF·G/2, which stays finite at G = 1.
        nf / 2.0 * g * self.photon_energy() * sample_rate
    }

    /// The same fiber with every coefficient negated, used to run SSFM backwards.
    pub fn reversed(&self) -> LinkParams {
        LinkParams {
            alpha: -self.alpha,
            beta2: -self.beta2,
            gamma: -self.gamma,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaunchConfig {
    pub power_dbm: f64,
}

impl LaunchConfig {
    pub fn new(power_dbm: f64) -> Result<Self> {
        if !power_dbm.is_finite() {
            return Err(Error::invalid("launch power must be finite"));
        }
        Ok(LaunchConfig { power_dbm })
    }

    /// Launch power in W.
    pub fn watts(&self) -> f64 {
        1e-3 * 10f64.powf(self.power_dbm / 10.0)
    }
}

/// Per-bin linear propagation factor `exp(-(α/2)μ + j(β2/2)ω²μ)`.
///
/// With the forward DFT kernel `e^{-jωt}`, `∂²/∂t²` maps to `-ω²`, so this
/// is the exact solution of the linear part of the NLSE and the inverse of
/// the compensation operator in [`crate::cdc::cdc_exact`].
pub(crate) fn linear_operator(omega: &[f64], alpha: f64, beta2: f64, mu_km: f64) -> Vec<Complex64> {
    let amp = (-0.5 * alpha * mu_km).exp();
    omega
        .iter()
        .map(|w| {
            let w_ps = w * 1e-12;
            Complex64::from_polar(amp, 0.5 * beta2 * w_ps * w_ps * mu_km)
        })
        .collect()
}

/// Split-step Fourier propagation over `distance_km` in `steps` equal steps.
///
/// Each step applies the nonlinear phase `exp(jγ|u|² L_eff(μ))` to the field
/// at the start of the step, then the linear operator over `μ` in the
/// frequency domain. Noiseless and deterministic. Negative coefficients are
/// accepted so the same routine runs the fiber backwards.
pub fn ssfm_propagate(
    signal: &ComplexSignal,
    link: &LinkParams,
    distance_km: f64,
    steps: usize,
) -> Result<ComplexSignal> {
    if steps == 0 {
        return Err(Error::invalid("ssfm needs at least one step"));
    }
    signal.check_finite(0, "ssfm input")?;
    let mu = distance_km / steps as f64;
    let lin = linear_operator(&signal.angular_frequencies(), link.alpha, link.beta2, mu);
    let nl = link.gamma * effective_length(link.alpha, mu);
    let mut buf = signal.samples().to_vec();
    for step in 0..steps {
        if nl != 0.0 {
            for u in buf.iter_mut() {
                *u *= Complex64::from_polar(1.0, nl * u.norm_sqr());
            }
        }
        fft_in_place(&mut buf)?;
        for (u, h) in buf.iter_mut().zip(&lin) {
            *u *= h;
        }
        ifft_in_place(&mut buf)?;
        if buf.iter().any(|u| !(u.re.is_finite() && u.im.is_finite())) {
            return Err(Error::NumericOverflow {
                step: step + 1,
                context: "ssfm step".into(),
            });
        }
    }
    Ok(ComplexSignal::from_parts(buf, signal.sample_rate()))
}

/// Backward SSFM: undoes [`ssfm_propagate`] step by step (linear inverse,
/// then nonlinear inverse), recovering the input to rounding when the
/// distance and step count match.
pub fn ssfm_reverse(
    signal: &ComplexSignal,
    link: &LinkParams,
    distance_km: f64,
    steps: usize,
) -> Result<ComplexSignal> {
    if steps == 0 {
        return Err(Error::invalid("ssfm needs at least one step"));
    }
    let mu = distance_km / steps as f64;
    let rev = link.reversed();
    let lin = linear_operator(&signal.angular_frequencies(), rev.alpha, rev.beta2, mu);
    let nl = -link.gamma * effective_length(link.alpha, mu);
    let mut buf = signal.samples().to_vec();
    for step in 0..steps {
        fft_in_place(&mut buf)?;
        for (u, h) in buf.iter_mut().zip(&lin) {
            *u *= h;
        }
        ifft_in_place(&mut buf)?;
        if nl != 0.0 {
            for u in buf.iter_mut() {
                *u *= Complex64::from_polar(1.0, nl * u.norm_sqr());
            }
        }
        if buf.iter().any(|u| !(u.re.is_finite() && u.im.is_finite())) {
            return Err(Error::NumericOverflow {
                step: step + 1,
                context: "reverse ssfm step".into(),
            });
        }
    }
    Ok(ComplexSignal::from_parts(buf, signal.sample_rate()))
}

/// Lumped amplifier: field gain `10^(G_dB/20)` plus circular white Gaussian
/// ASE of total power [`LinkParams::ase_power`], drawn from `seed`.
pub fn edfa_amplify(signal: &ComplexSignal, link: &LinkParams, seed: u64) -> Result<ComplexSignal> {
    if link.edfa_gain_db < 0.0 {
        return Err(Error::invalid("EDFA gain must be >= 0 dB"));
    }
    let g = 10f64.powf(link.edfa_gain_db / 20.0);
    let sigma2 = link.ase_power(signal.sample_rate());
    let mut out = signal.clone();
    out.scale(g);
    if sigma2 > 0.0 {
        let sd = (sigma2 / 2.0).sqrt();
        let mut rng = SeedStream::new(seed).rng(Purpose::Noise, 0);
        for u in out.samples_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *u += Complex64::new(re * sd, im * sd);
        }
    }
    Ok(out)
}

/// Shapes, scales to the launch power and propagates through every span
/// (SSFM, then EDFA). The returned waveform is at the channel rate.
pub fn transmit_link(
    frame: &SymbolFrame,
    link: &LinkParams,
    launch: &LaunchConfig,
    pulse: &PulseShape,
    symbol_rate: f64,
    seed: u64,
) -> Result<ComplexSignal> {
    link.validate()?;
    let mut u = launch_waveform(frame, launch, pulse, symbol_rate)?;
    let seeds = SeedStream::new(seed);
    for span in 0..link.n_spans {
        u = ssfm_propagate(&u, link, link.span_km, link.steps_per_span)?;
        u = edfa_amplify(&u, link, seeds.child(span as u64).seed())?;
    }
    Ok(u)
}

/// The field launched into the first span: mean power equals the launch power.
pub fn launch_waveform(
    frame: &SymbolFrame,
    launch: &LaunchConfig,
    pulse: &PulseShape,
    symbol_rate: f64,
) -> Result<ComplexSignal> {
    let mut u = rrc_shape(frame, pulse, symbol_rate)?;
    u.scale((launch.watts() * pulse.samples_per_symbol as f64).sqrt());
    Ok(u)
}

/// Receiver output: unit-power samples plus the factor that was divided out.
#[derive(Debug, Clone, PartialEq)]
pub struct RxFrame {
    pub signal: ComplexSignal,
    /// `sqrt` of the mean power before normalization (field units, √W).
    pub norm_factor: f64,
}

impl RxFrame {
    /// Mean power (W) of the received field before normalization.
    pub fn power_scale(&self) -> f64 {
        self.norm_factor * self.norm_factor
    }

    pub fn denormalized(&self) -> ComplexSignal {
        let mut s = self.signal.clone();
        s.scale(self.norm_factor);
        s
    }
}

/// Matched RRC filter (unit in-band gain), ideal low-pass resampling to
/// `rx_sps` samples per symbol, and normalization to unit mean power.
///
/// `pulse` is the transmitter's pulse at the channel oversampling. Symbol
/// `n` lands on output sample `n·rx_sps`.
pub fn receiver_frontend(
    signal: &ComplexSignal,
    pulse: &PulseShape,
    symbol_rate: f64,
    rx_sps: usize,
) -> Result<RxFrame> {
    let gain = 1.0 / (pulse.samples_per_symbol as f64).sqrt();
    let filtered = pulse.filter(signal, gain)?;
    let mut out = resample(&filtered, symbol_rate * rx_sps as f64)?;
    let factor = out.mean_power().sqrt();
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::invalid("received frame has no power"));
    }
    out.scale(1.0 / factor);
    Ok(RxFrame {
        signal: out,
        norm_factor: factor,
    })
}
