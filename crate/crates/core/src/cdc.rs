//! Chromatic-dispersion compensation.
//!
//! Three routes to the same linear step: the exact frequency-domain operator,
//! a least-squares symmetric FIR applied as a circular convolution (TDE), and
//! the same FIR applied block-wise by overlap-and-add (FDE).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::LinkParams;
use crate::complexity::MulCounter;
use crate::error::{Error, Result};
use crate::signal::{fft_in_place, ifft_in_place, ComplexSignal};

/// Symmetric complex FIR `h_{-V..V}` stored as the half `h_0..h_V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdcFilter {
    pub half_taps: Vec<Complex64>,
    pub design_mu_km: f64,
    #[serde(rename = "rate_hz")]
    pub design_rate: f64,
}

impl CdcFilter {
    pub fn new(half_taps: Vec<Complex64>, design_mu_km: f64, design_rate: f64) -> Result<Self> {
        if half_taps.is_empty() {
            return Err(Error::invalid("filter needs at least the center tap"));
        }
        Ok(CdcFilter {
            half_taps,
            design_mu_km,
            design_rate,
        })
    }

    pub fn identity(rate: f64) -> Self {
        CdcFilter {
            half_taps: vec![Complex64::new(1.0, 0.0)],
            design_mu_km: 0.0,
            design_rate: rate,
        }
    }

    /// Full length `2V+1`.
    pub fn len(&self) -> usize {
        2 * self.half_taps.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn half_len(&self) -> usize {
        self.half_taps.len() - 1
    }

    /// `[h_V, …, h_1, h_0, h_1, …, h_V]`.
    pub fn full_taps(&self) -> Vec<Complex64> {
        let v = self.half_len();
        (0..self.len())
            .map(|i| self.half_taps[(i as isize - v as isize).unsigned_abs()])
            .collect()
    }

    /// Frequency response at angular frequency `omega` (rad/s).
    pub fn response(&self, omega: f64) -> Complex64 {
        let ts = 1.0 / self.design_rate;
        self.half_taps
            .iter()
            .enumerate()
            .map(|(v, h)| {
                if v == 0 {
                    *h
                } else {
                    h * (2.0 * (omega * v as f64 * ts).cos())
                }
            })
            .sum()
    }

    /// Keeps the center tap and the first `half_len` tap pairs.
    pub fn truncated(&self, half_len: usize) -> CdcFilter {
        let keep = (half_len + 1).min(self.half_taps.len());
        CdcFilter {
            half_taps: self.half_taps[..keep].to_vec(),
            ..self.clone()
        }
    }
}

/// Per-bin compensation factor `exp((α/2)μ)·exp(-j(β2/2)ω²μ)`.
pub fn compensation_operator(omega: &[f64], alpha: f64, beta2: f64, mu_km: f64) -> Vec<Complex64> {
    let amp = (0.5 * alpha * mu_km).exp();
    omega
        .iter()
        .map(|w| {
            let w_ps = w * 1e-12;
            Complex64::from_polar(amp, -0.5 * beta2 * w_ps * w_ps * mu_km)
        })
        .collect()
}

/// The exact DBP linear step over `mu_km`: spectrum times
/// `exp(-j(β2/2)ω²μ)` and gain `exp((α/2)μ)`.
pub fn cdc_exact(signal: &ComplexSignal, mu_km: f64, link: &LinkParams) -> Result<ComplexSignal> {
    let op = compensation_operator(&signal.angular_frequencies(), link.alpha, link.beta2, mu_km);
    let mut buf = signal.samples().to_vec();
    fft_in_place(&mut buf)?;
    for (b, h) in buf.iter_mut().zip(&op) {
        *b *= h;
    }
    ifft_in_place(&mut buf)?;
    signal.with_samples(buf)
}

/// Dispersion-only compensation over `mu_km` (unit gain), i.e. CD
/// compensation of an amplified link whose loss is already undone.
pub fn cd_compensate(signal: &ComplexSignal, mu_km: f64, link: &LinkParams) -> Result<ComplexSignal> {
    let lossless = LinkParams {
        alpha: 0.0,
        ..link.clone()
    };
    cdc_exact(signal, mu_km, &lossless)
}

/// Least-squares design outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct FirDesign {
    pub filter: CdcFilter,
    /// RMS in-band deviation of the response from the target.
    pub residual: f64,
    /// Tikhonov weight used when the system was ill-conditioned.
    pub regularization: Option<f64>,
    pub condition: f64,
}

/// Condition number above which the LS solve is regularized.
const MAX_CONDITION: f64 = 1e8;

/// Net amplitude of back-propagating over `mu_km`: fiber gain `exp((α/2)μ)`
/// with the gain of the amplifiers passed on the way divided out. Exactly
/// one for whole-span steps when the amplifiers compensate the span loss.
pub fn step_gain(link: &LinkParams, mu_km: f64) -> f64 {
    let spans = mu_km / link.span_km;
    let log_gain = 0.5 * link.alpha * mu_km - spans * link.edfa_gain_db / 20.0 * std::f64::consts::LN_10;
    log_gain.exp()
}

/// Symmetric FIR of odd length `target_len` approximating the linear step
/// `step_gain · exp(-j(β2/2)ω²μ)` in the least-squares sense on a dense
/// frequency grid covering `±band_hz`. The response outside the band is
/// unconstrained.
pub fn design_fir_ls(mu_km: f64, link: &LinkParams, target_len: usize, rate: f64, band_hz: f64) -> Result<FirDesign> {
    if target_len < 3 || target_len.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "FIR length must be odd and >= 3, got {target_len}"
        )));
    }
    if !(band_hz > 0.0 && band_hz <= rate / 2.0) {
        return Err(Error::invalid(format!(
            "design band {band_hz} Hz must lie in (0, rate/2]"
        )));
    }
    let v_max = (target_len - 1) / 2;
    let cols = v_max + 1;
    let k = (16 * target_len).max(2048);
    let gain = step_gain(link, mu_km);
    let ts = 1.0 / rate;
    let two_pi = 2.0 * std::f64::consts::PI;
    let omegas: Vec<f64> = (0..k)
        .map(|i| two_pi * band_hz * (-1.0 + 2.0 * (i as f64 + 0.5) / k as f64))
        .collect();

    let a = DMatrix::from_fn(k, cols, |r, c| {
        if c == 0 {
            1.0
        } else {
            2.0 * (omegas[r] * c as f64 * ts).cos()
        }
    });
    let target: Vec<Complex64> = omegas
        .iter()
        .map(|w| {
            let w_ps = w * 1e-12;
            Complex64::from_polar(gain, -0.5 * link.beta2 * w_ps * w_ps * mu_km)
        })
        .collect();
    let d_re = DVector::from_iterator(k, target.iter().map(|t| t.re));
    let d_im = DVector::from_iterator(k, target.iter().map(|t| t.im));

    let svd = a.clone().svd(false, false);
    let sv = &svd.singular_values;
    let s_max = sv.max();
    let s_min = sv.min();
    let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    let lambda = if condition > MAX_CONDITION {
        let l = (s_max / MAX_CONDITION).powi(2);
        log::debug!("FIR design (len {target_len}, mu {mu_km} km): condition {condition:.2e}, Tikhonov weight {l:.2e}");
        Some(l)
    } else {
        None
    };
    // Solve min |A h - d|² + λ|h|² by Householder QR on the stacked system
    // [A; √λ I], which stays accurate where the SVD factors do not.
    let (sys, rows) = match lambda {
        Some(l) => {
            let mut m = DMatrix::zeros(k + cols, cols);
            m.rows_mut(0, k).copy_from(&a);
            for i in 0..cols {
                m[(k + i, i)] = l.sqrt();
            }
            (m, k + cols)
        }
        None => (a, k),
    };
    let qr = sys.qr();
    let q = qr.q();
    let r = qr.r();
    let solve = |d: &DVector<f64>| -> DVector<f64> {
        let mut rhs = DVector::zeros(rows);
        rhs.rows_mut(0, k).copy_from(d);
        let qtd = q.transpose() * rhs;
        r.solve_upper_triangular(&qtd).unwrap_or_else(|| DVector::zeros(cols))
    };
    let h_re = solve(&d_re);
    let h_im = solve(&d_im);
    let half_taps: Vec<Complex64> = (0..cols).map(|i| Complex64::new(h_re[i], h_im[i])).collect();
    let filter = CdcFilter::new(half_taps, mu_km, rate)?;
    let residual = (omegas
        .iter()
        .zip(&target)
        .map(|(w, t)| (filter.response(*w) - t).norm_sqr())
        .sum::<f64>()
        / k as f64)
        .sqrt();
    Ok(FirDesign {
        filter,
        residual,
        regularization: lambda,
        condition,
    })
}

fn check_fits(signal: &ComplexSignal, filter: &CdcFilter) -> Result<()> {
    if filter.len() > signal.len() {
        return Err(Error::invalid(format!(
            "filter length {} exceeds frame length {}",
            filter.len(),
            signal.len()
        )));
    }
    Ok(())
}

/// Circular convolution `y_n = Σ_v h_v x_{n-v}` over the frame, i.e. the
/// product with the circulant matrix whose rows are shifted copies of the taps.
pub fn apply_fir(signal: &ComplexSignal, filter: &CdcFilter) -> Result<ComplexSignal> {
    check_fits(signal, filter)?;
    let out = circular_fir(signal.samples(), &filter.half_taps);
    signal.with_samples(out)
}

/// Symmetric circular FIR on raw samples using the folded form
/// `h_0 x_n + Σ_{v≥1} h_v (x_{n-v} + x_{n+v})`.
pub(crate) fn circular_fir(x: &[Complex64], half: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let v_max = half.len() - 1;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    if v_max < n / 2 {
        // Interior samples without wrap-around.
        for (i, o) in out.iter_mut().enumerate().take(n - v_max).skip(v_max) {
            let mut acc = half[0] * x[i];
            for v in 1..=v_max {
                acc += half[v] * (x[i - v] + x[i + v]);
            }
            *o = acc;
        }
        for i in (0..v_max).chain(n - v_max..n) {
            out[i] = wrapped_tap_sum(x, half, i);
        }
    } else {
        for (i, o) in out.iter_mut().enumerate() {
            *o = wrapped_tap_sum(x, half, i);
        }
    }
    out
}

fn wrapped_tap_sum(x: &[Complex64], half: &[Complex64], i: usize) -> Complex64 {
    let n = x.len();
    let mut acc = half[0] * x[i];
    for (v, h) in half.iter().enumerate().skip(1) {
        acc += h * (x[(i + n - v % n) % n] + x[(i + v) % n]);
    }
    acc
}

/// [`apply_fir`] that also tallies real multiplications: one complex
/// multiply (4 real) per center tap and per folded tap pair.
pub fn apply_fir_counted(
    signal: &ComplexSignal,
    filter: &CdcFilter,
    counter: &mut MulCounter,
) -> Result<ComplexSignal> {
    let out = apply_fir(signal, filter)?;
    counter.linear += 4 * filter.half_taps.len() as u64 * signal.len() as u64;
    Ok(out)
}

/// Overlap-and-add block size for frequency-domain equalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdeConfig {
    pub fft_size: usize,
}

impl FdeConfig {
    pub fn new(fft_size: usize) -> Self {
        FdeConfig { fft_size }
    }

    /// New samples consumed per block: `N_FFT - N_CD + 1`.
    pub fn block_advance(&self, n_cd: usize) -> usize {
        self.fft_size + 1 - n_cd
    }

    pub fn validate(&self, n_cd: usize) -> Result<()> {
        if !self.fft_size.is_power_of_two() {
            return Err(Error::invalid(format!(
                "FFT size {} is not a power of two",
                self.fft_size
            )));
        }
        if self.fft_size <= n_cd {
            return Err(Error::invalid(format!(
                "FFT size {} must exceed the filter length {n_cd}",
                self.fft_size
            )));
        }
        Ok(())
    }
}

/// The circular convolution of [`apply_fir`] computed by overlap-and-add:
/// blocks of `N_FFT - N_CD + 1` samples are convolved in the frequency
/// domain, tails are added into the next block and the tail past the end of
/// the frame wraps onto its start.
pub fn apply_fir_fde(signal: &ComplexSignal, filter: &CdcFilter, cfg: &FdeConfig) -> Result<ComplexSignal> {
    let n_cd = filter.len();
    cfg.validate(n_cd)?;
    check_fits(signal, filter)?;
    let n = signal.len();
    let nfft = cfg.fft_size;
    let advance = cfg.block_advance(n_cd);
    let v = filter.half_len();

    // Causal copy h'[i] = h_{i-V}.
    let mut hspec = vec![Complex64::new(0.0, 0.0); nfft];
    for (i, t) in filter.full_taps().into_iter().enumerate() {
        hspec[i] = t;
    }
    fft_in_place(&mut hspec)?;

    let x = signal.samples();
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    let mut block = vec![Complex64::new(0.0, 0.0); nfft];
    let mut start = 0;
    while start < n {
        let len = advance.min(n - start);
        block.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        block[..len].copy_from_slice(&x[start..start + len]);
        fft_in_place(&mut block)?;
        for (b, h) in block.iter_mut().zip(&hspec) {
            *b *= h;
        }
        ifft_in_place(&mut block)?;
        // Linear-convolution output of this block, delayed by V, wrapped.
        for (j, b) in block.iter().take(len + n_cd - 1).enumerate() {
            let idx = (start + j + n - v % n) % n;
            acc[idx] += b;
        }
        start += len;
    }
    signal.with_samples(acc)
}
