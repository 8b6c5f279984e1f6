//! Bit-error counting, the Q² factor and effective SNR.

use serde::{Deserialize, Serialize};
use statrs::function::erf;

use crate::error::{Error, Result};

/// `erfc⁻¹(y)` for `y ∈ (0, 2)`.
///
/// Starts from statrs' rational approximation and polishes with Newton
/// steps on `erfc(x) - y` (derivative `-2/√π·e^{-x²}`), which brings the
/// result to within a few ulp of the root.
pub fn erfc_inv(y: f64) -> f64 {
    if !(y > 0.0 && y < 2.0) {
        return if y == 0.0 {
            f64::INFINITY
        } else if y == 2.0 {
            f64::NEG_INFINITY
        } else {
            f64::NAN
        };
    }
    let mut x = erf::erfc_inv(y);
    for _ in 0..3 {
        let f = erf::erfc(x) - y;
        let df = -2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp();
        if df == 0.0 {
            break;
        }
        let dx = f / df;
        x -= dx;
        if dx.abs() <= 1e-16 * x.abs().max(1e-300) {
            break;
        }
    }
    x
}

/// `Q² = 20·log10(√10·erfc⁻¹(8·BER/9))` in dB. `None` when BER = 0 or the
/// argument leaves `(0, 2)`.
pub fn q2_from_ber(ber: f64) -> Option<f64> {
    let arg = 8.0 * ber / 9.0;
    if !(arg > 0.0 && arg < 2.0) {
        return None;
    }
    Some(20.0 * (10f64.sqrt() * erfc_inv(arg)).log10())
}

/// Inverse of [`q2_from_ber`].
pub fn ber_from_q2(q2_db: f64) -> f64 {
    9.0 / 8.0 * erf::erfc(10f64.powf(q2_db / 20.0) / 10f64.sqrt())
}

/// `10·log10(1/MSE)`.
pub fn effective_snr_db(mse: f64) -> f64 {
    -10.0 * mse.log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ber: f64,
    /// Q² in dB; with zero errors, the bound `q2_from_ber(1/bits_counted)`.
    pub q2_db: f64,
    /// True when no errors were seen and `q2_db` is only a lower bound.
    pub q2_lower_bound: bool,
    pub eff_snr_db: Option<f64>,
    pub bits_counted: u64,
    pub bit_errors: u64,
}

impl MetricsReport {
    pub fn from_counts(bit_errors: u64, bits_counted: u64) -> Result<Self> {
        if bits_counted == 0 {
            return Err(Error::invalid("no bits counted"));
        }
        let ber = bit_errors as f64 / bits_counted as f64;
        let (q2_db, lower) = match q2_from_ber(ber) {
            Some(q) => (q, false),
            None if bit_errors == 0 => (q2_from_ber(1.0 / bits_counted as f64).unwrap_or(f64::INFINITY), true),
            // 8·BER/9 >= 2 only when nearly every bit is wrong.
            None => (f64::NEG_INFINITY, false),
        };
        Ok(MetricsReport {
            ber,
            q2_db,
            q2_lower_bound: lower,
            eff_snr_db: None,
            bits_counted,
            bit_errors,
        })
    }

    pub fn with_eff_snr(mut self, mse: f64) -> Self {
        self.eff_snr_db = Some(effective_snr_db(mse));
        self
    }

    /// Q² rendered for reports: `> x` for a lower bound.
    pub fn q2_display(&self) -> String {
        if self.q2_lower_bound {
            format!(">{:.2}", self.q2_db)
        } else {
            format!("{:.2}", self.q2_db)
        }
    }
}

/// Exact Hamming count between decided and reference bits.
pub fn count_bit_errors(decided: &[u8], reference: &[u8]) -> Result<MetricsReport> {
    if decided.len() != reference.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            actual: decided.len(),
        });
    }
    let errors = decided
        .iter()
        .zip(reference)
        .filter(|(a, b)| (*a & 1) != (*b & 1))
        .count() as u64;
    MetricsReport::from_counts(errors, reference.len() as u64)
}
