use num_complex::Complex64;

use super::{fft_in_place, ifft_in_place, ComplexSignal};
use crate::error::{Error, Result};

/// Fraction of signal energy allowed in the bins a downsample discards.
const ALIAS_TOLERANCE: f64 = 1e-10;

/// Ideal (FFT-domain) resampling of a periodic frame.
///
/// The new length must be an integer. Upsampling zero-pads the spectrum,
/// splitting an even-length Nyquist bin evenly between the two new edge
/// bins; downsampling keeps the bins that fit and folds the two bins that
/// land on the new Nyquist frequency together, which undoes the split. Any
/// other energy outside the new band is an [`Error::Aliasing`].
pub fn resample(signal: &ComplexSignal, new_rate: f64) -> Result<ComplexSignal> {
    let old_rate = signal.sample_rate();
    if !(new_rate > 0.0 && new_rate.is_finite()) {
        return Err(Error::invalid(format!("bad target rate {new_rate}")));
    }
    if new_rate == old_rate {
        return Ok(signal.clone());
    }
    let n = signal.len();
    let exact = n as f64 * new_rate / old_rate;
    let m = exact.round() as usize;
    if m == 0 || (exact - m as f64).abs() > 1e-9 * exact {
        return Err(Error::invalid(format!(
            "rate ratio {new_rate}/{old_rate} does not give an integer length from {n} samples"
        )));
    }

    let mut spec = signal.samples().to_vec();
    fft_in_place(&mut spec)?;
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    // Signed bin index k in (-n/2, n/2]; positive bins map to k, negative to m+k.
    let signed = |i: usize, len: usize| -> isize {
        if i <= len / 2 {
            i as isize
        } else {
            i as isize - len as isize
        }
    };

    if m > n {
        for (i, v) in spec.iter().enumerate() {
            let k = signed(i, n);
            if n.is_multiple_of(2) && k == (n / 2) as isize {
                out[n / 2] += v * 0.5;
                out[m - n / 2] += v * 0.5;
            } else {
                out[k.rem_euclid(m as isize) as usize] += v;
            }
        }
    } else {
        let total: f64 = spec.iter().map(|v| v.norm_sqr()).sum();
        let mut dropped = 0.0;
        for (i, v) in spec.iter().enumerate() {
            let k = signed(i, n);
            let fits = if m.is_multiple_of(2) {
                k.unsigned_abs() <= m / 2
            } else {
                k.unsigned_abs() <= (m - 1) / 2
            };
            if fits {
                out[k.rem_euclid(m as isize) as usize] += v;
            } else {
                dropped += v.norm_sqr();
            }
        }
        if total > 0.0 && dropped / total > ALIAS_TOLERANCE {
            return Err(Error::Aliasing(format!(
                "{:.3e} of the energy lies above the new Nyquist frequency {} Hz",
                dropped / total,
                new_rate / 2.0
            )));
        }
    }
    let scale = m as f64 / n as f64;
    for v in &mut out {
        *v *= scale;
    }
    ifft_in_place(&mut out)?;
    ComplexSignal::new(out, new_rate)
}
