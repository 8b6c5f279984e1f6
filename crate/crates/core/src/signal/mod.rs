//! Complex baseband waveforms and the primitives shared by every stage of
//! the link: FFT, QAM mapping, pulse shaping, resampling and seeded RNG.

mod fft;
pub mod pulse;
pub mod qam;
mod resample;
pub mod rng;

pub use fft::{fft, fft_in_place, ifft, ifft_in_place};
pub use pulse::{rrc_shape, PulseShape};
pub use qam::{qam64_demap, qam64_map, SymbolFrame};
pub use resample::resample;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniformly sampled complex baseband waveform.
///
/// Frames are treated as periodic everywhere in this crate: every
/// convolution is circular and every spectral operator acts on the DFT grid
/// of the whole frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSignal {
    samples: Vec<Complex64>,
    sample_rate: f64,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("signal must contain at least one sample"));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        Ok(ComplexSignal { samples, sample_rate })
    }

    /// Builds a signal whose invariants the caller has already established.
    pub(crate) fn from_parts(samples: Vec<Complex64>, sample_rate: f64) -> Self {
        debug_assert!(!samples.is_empty() && sample_rate > 0.0);
        ComplexSignal { samples, sample_rate }
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); len], sample_rate)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Same sample rate, new samples.
    pub fn with_samples(&self, samples: Vec<Complex64>) -> Result<Self> {
        Self::new(samples, self.sample_rate)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    pub fn mean_power(&self) -> f64 {
        self.energy() / self.len() as f64
    }

    pub fn scale(&mut self, factor: f64) {
        for s in &mut self.samples {
            *s *= factor;
        }
    }

    /// Angular frequency grid (rad/s) of this signal's DFT.
    pub fn angular_frequencies(&self) -> Vec<f64> {
        angular_frequency_grid(self.len(), self.sample_rate)
    }

    pub(crate) fn check_finite(&self, step: usize, context: &str) -> Result<()> {
        if self.samples.iter().all(|s| s.re.is_finite() && s.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::NumericOverflow {
                step,
                context: context.to_string(),
            })
        }
    }
}

/// DFT angular frequencies `ω_i = 2π f_i` in rad/s for a length-`n` frame.
///
/// With one-based index `i`, `f_i = f_s (i-1)/N` for `i < N/2` and
/// `f_i = f_s (i-1-N)/N` otherwise. Both branches give the same bin modulo
/// `f_s`; only the choice of alias differs from the usual FFT layout for
/// the bin just below Nyquist.
pub fn angular_frequency_grid(n: usize, sample_rate: f64) -> Vec<f64> {
    let nf = n as f64;
    (1..=n)
        .map(|i| {
            let f = if (i as f64) < nf / 2.0 {
                sample_rate * (i - 1) as f64 / nf
            } else {
                sample_rate * ((i - 1) as f64 - nf) / nf
            };
            2.0 * std::f64::consts::PI * f
        })
        .collect()
}

/// Maximum absolute sample-wise difference of two equal-length sequences.
pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len(), "max_abs_diff on unequal lengths");
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
