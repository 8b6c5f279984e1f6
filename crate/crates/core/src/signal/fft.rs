//! FFT wrappers over `rustfft` with a fixed scaling convention.
//!
//! The forward transform is unscaled, `X_k = Σ x_n e^{-j2πkn/N}`; the inverse
//! carries the full `1/N`. Any length is supported directly (no padding), so
//! `ifft(fft(x)) == x` up to rounding and Parseval reads `Σ|x|² = Σ|X|²/N`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::ComplexSignal;
use crate::error::{Error, Result};

struct PlanCache {
    planner: FftPlanner<f64>,
    forward: HashMap<usize, Arc<dyn Fft<f64>>>,
    inverse: HashMap<usize, Arc<dyn Fft<f64>>>,
}

thread_local! {
    static PLANS: RefCell<PlanCache> = RefCell::new(PlanCache {
        planner: FftPlanner::new(),
        forward: HashMap::new(),
        inverse: HashMap::new(),
    });
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let mut cache = cell.borrow_mut();
        let PlanCache {
            planner,
            forward,
            inverse: inv,
        } = &mut *cache;
        if inverse {
            inv.entry(len).or_insert_with(|| planner.plan_fft_inverse(len)).clone()
        } else {
            forward
                .entry(len)
                .or_insert_with(|| planner.plan_fft_forward(len))
                .clone()
        }
    })
}

/// Unscaled forward DFT in place.
pub fn fft_in_place(buf: &mut [Complex64]) -> Result<()> {
    if buf.is_empty() {
        return Err(Error::invalid("fft of zero-length input"));
    }
    plan(buf.len(), false).process(buf);
    Ok(())
}

/// Inverse DFT in place, scaled by `1/N`.
pub fn ifft_in_place(buf: &mut [Complex64]) -> Result<()> {
    if buf.is_empty() {
        return Err(Error::invalid("ifft of zero-length input"));
    }
    plan(buf.len(), true).process(buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
    Ok(())
}

/// Spectrum of `signal`. The sample rate is carried through unchanged so the
/// result can be paired with [`ComplexSignal::angular_frequencies`].
pub fn fft(signal: &ComplexSignal) -> Result<ComplexSignal> {
    let mut buf = signal.samples().to_vec();
    fft_in_place(&mut buf)?;
    Ok(ComplexSignal::from_parts(buf, signal.sample_rate()))
}

pub fn ifft(spectrum: &ComplexSignal) -> Result<ComplexSignal> {
    let mut buf = spectrum.samples().to_vec();
    ifft_in_place(&mut buf)?;
    Ok(ComplexSignal::from_parts(buf, spectrum.sample_rate()))
}
