//! Root-raised-cosine pulse shaping on periodic frames.
//!
//! The taps are the frame-periodic RRC: the inverse DFT of the RRC
//! amplitude spectrum sampled on the frame's own frequency grid. Cascading
//! two of them gives a raised cosine whose replicas fold to a constant on
//! that grid, so transmit plus matched filter is ISI-free to rounding. A
//! `span_symbols` shorter than the frame truncates the kernel to
//! `±span/2` symbols.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{fft_in_place, ifft_in_place, ComplexSignal, SymbolFrame};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    pub roll_off: f64,
    /// Tap extent in symbols. Values at or above the frame length select the
    /// exact periodic pulse.
    pub span_symbols: usize,
    pub samples_per_symbol: usize,
}

impl PulseShape {
    pub fn new(roll_off: f64, span_symbols: usize, samples_per_symbol: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&roll_off) {
            return Err(Error::invalid(format!("roll-off {roll_off} outside [0, 1]")));
        }
        if samples_per_symbol < 2 {
            return Err(Error::invalid("need at least 2 samples per symbol"));
        }
        if span_symbols == 0 {
            return Err(Error::invalid("pulse span must be at least one symbol"));
        }
        Ok(PulseShape {
            roll_off,
            span_symbols,
            samples_per_symbol,
        })
    }

    /// RRC amplitude response at normalized frequency `f·T` (unit peak).
    pub fn amplitude(&self, ft: f64) -> f64 {
        let a = ft.abs();
        let b = self.roll_off;
        let lo = (1.0 - b) / 2.0;
        let hi = (1.0 + b) / 2.0;
        if a <= lo {
            1.0
        } else if a >= hi {
            0.0
        } else {
            (std::f64::consts::PI / (2.0 * b) * (a - lo)).cos()
        }
    }

    /// Frame-periodic RRC kernel for `n_symbols` symbols, indexed circularly
    /// (`kernel[k] == kernel[N-k]`), before truncation and normalization.
    fn periodic_kernel(&self, n_symbols: usize) -> Vec<f64> {
        let n = n_symbols * self.samples_per_symbol;
        let sps = self.samples_per_symbol as f64;
        // Bin i sits at f·T = sps·i/N (nearest alias).
        let spec: Vec<f64> = (0..n)
            .map(|i| {
                let i = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
                self.amplitude(sps * i / n as f64)
            })
            .collect();
        let mut buf: Vec<Complex64> = spec.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        ifft_in_place(&mut buf).expect("non-empty");
        // Real and even up to rounding; symmetrize exactly.
        let mut kernel: Vec<f64> = buf.iter().map(|c| c.re).collect();
        for k in 1..=(n - 1) / 2 {
            let v = 0.5 * (kernel[k] + kernel[n - k]);
            kernel[k] = v;
            kernel[n - k] = v;
        }
        kernel
    }

    /// Centered, symmetric, unit-energy taps for a frame of `n_symbols`.
    ///
    /// Odd length. For an exact periodic pulse of even frame length the two
    /// end taps both sit on the frame's half-period and carry half its value
    /// each, so wrapping the taps onto the frame reproduces the kernel.
    pub fn taps(&self, n_symbols: usize) -> Vec<f64> {
        let n = n_symbols * self.samples_per_symbol;
        let kernel = self.periodic_kernel(n_symbols);
        let half_len = if self.span_symbols >= n_symbols {
            n / 2
        } else {
            self.span_symbols * self.samples_per_symbol / 2
        };
        let mut taps: Vec<f64> = (0..=2 * half_len)
            .map(|i| {
                let k = i as isize - half_len as isize;
                kernel[k.rem_euclid(n as isize) as usize]
            })
            .collect();
        if self.span_symbols >= n_symbols && n.is_multiple_of(2) {
            let last = taps.len() - 1;
            taps[0] *= 0.5;
            taps[last] *= 0.5;
        }
        let energy: f64 = taps.iter().map(|t| t * t).sum();
        let scale = 1.0 / energy.sqrt();
        for t in &mut taps {
            *t *= scale;
        }
        // Exact mirror after scaling.
        let len = taps.len();
        for i in 0..len / 2 {
            taps[len - 1 - i] = taps[i];
        }
        taps
    }

    /// DFT of the taps wrapped onto an `n_symbols` frame (real, even).
    pub fn kernel_spectrum(&self, n_symbols: usize) -> Vec<Complex64> {
        let n = n_symbols * self.samples_per_symbol;
        let taps = self.taps(n_symbols);
        let half = (taps.len() / 2) as isize;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (i, &t) in taps.iter().enumerate() {
            let k = (i as isize - half).rem_euclid(n as isize) as usize;
            buf[k] += t;
        }
        fft_in_place(&mut buf).expect("non-empty");
        buf
    }

    /// Circular filtering of a waveform with the (optionally scaled) taps.
    pub fn filter(&self, signal: &ComplexSignal, gain: f64) -> Result<ComplexSignal> {
        let n = signal.len();
        if !n.is_multiple_of(self.samples_per_symbol) {
            return Err(Error::invalid(format!(
                "frame length {n} is not a multiple of {} samples/symbol",
                self.samples_per_symbol
            )));
        }
        let h = self.kernel_spectrum(n / self.samples_per_symbol);
        let mut buf = signal.samples().to_vec();
        fft_in_place(&mut buf)?;
        for (b, hk) in buf.iter_mut().zip(&h) {
            *b *= hk * gain;
        }
        ifft_in_place(&mut buf)?;
        Ok(ComplexSignal::from_parts(buf, signal.sample_rate()))
    }
}

/// Upsamples the symbols and circularly convolves them with the RRC taps.
///
/// The symbol at index `n` is centered on sample `n·sps`. No launch-power
/// scaling is applied; with unit-power symbols the mean waveform power is
/// `1/sps`.
pub fn rrc_shape(frame: &SymbolFrame, pulse: &PulseShape, symbol_rate: f64) -> Result<ComplexSignal> {
    if frame.is_empty() {
        return Err(Error::invalid("cannot shape an empty frame"));
    }
    let sps = pulse.samples_per_symbol;
    let mut up = vec![Complex64::new(0.0, 0.0); frame.len() * sps];
    for (i, s) in frame.symbols.iter().enumerate() {
        up[i * sps] = *s;
    }
    let up = ComplexSignal::new(up, symbol_rate * sps as f64)?;
    pulse.filter(&up, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::max_abs_diff;

    #[test]
    fn taps_symmetric_unit_energy() {
        for span in [8usize, 64, 1000] {
            let p = PulseShape::new(0.1, span, 4).unwrap();
            let taps = p.taps(64);
            assert_eq!(taps.len() % 2, 1);
            let n = taps.len();
            for k in 0..n {
                assert_eq!(taps[k], taps[n - 1 - k]);
            }
            let e: f64 = taps.iter().map(|t| t * t).sum();
            assert!((e - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_response_is_the_taps() {
        let p = PulseShape::new(0.1, 1000, 4).unwrap();
        let n_sym = 32;
        let mut frame = SymbolFrame {
            symbols: vec![Complex64::new(0.0, 0.0); n_sym],
            bits: vec![],
            seed: 0,
        };
        frame.symbols[0] = Complex64::new(1.0, 0.0);
        let out = rrc_shape(&frame, &p, 1.0).unwrap();
        let taps = p.taps(n_sym);
        let n = out.len();
        let half = taps.len() / 2;
        let mut want = vec![Complex64::new(0.0, 0.0); n];
        for (i, t) in taps.iter().enumerate() {
            want[(i + n - half) % n] += t;
        }
        assert!(max_abs_diff(out.samples(), &want) < 1e-14);
    }

    #[test]
    fn matched_filter_recovers_symbols() {
        let p = PulseShape::new(0.1, 4096, 8).unwrap();
        let frame = SymbolFrame::random(3, 256).unwrap();
        let tx = rrc_shape(&frame, &p, 32e9).unwrap();
        let rx = p.filter(&tx, 1.0).unwrap();
        let got: Vec<Complex64> = rx.samples().iter().step_by(8).copied().collect();
        let err = max_abs_diff(&got, &frame.symbols);
        assert!(err < 1e-6, "isi {err}");
    }

    #[test]
    fn zero_frame_gives_zero_waveform() {
        let p = PulseShape::new(0.1, 64, 2).unwrap();
        let frame = SymbolFrame {
            symbols: vec![Complex64::new(0.0, 0.0); 16],
            bits: vec![],
            seed: 0,
        };
        let out = rrc_shape(&frame, &p, 1.0).unwrap();
        assert!(out.samples().iter().all(|s| s.norm() == 0.0));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(PulseShape::new(1.5, 8, 2).is_err());
        assert!(PulseShape::new(0.1, 8, 1).is_err());
    }
}
