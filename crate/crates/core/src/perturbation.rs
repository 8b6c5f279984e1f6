//! First-order perturbation coefficients
//!
//! `C_{m,k} = (1/T_s) ∫ γ f(z) ∫ g*(z,t) g(z,t-mT_s) g(z,t-kT_s) g*(z,t-(m+k)T_s) dt dz`
//!
//! for a Gaussian pulse `g(0,t) = A·exp(-t²/2T_0²)` of energy `T_s`, where
//! `T_s` is the receiver sample period. The pulse disperses as
//! `g(z,t) = A·T_0/√b · exp(-t²/2b)` with `b = T_0² - jβ2z`, and the power
//! profile restarts at every amplifier: `f(z) = exp(-α (z mod L_span))`.
//!
//! The time integral of four Gaussians has the closed form
//! `√(2π/p)·exp(q²/2p - r/2)`; a trapezoid rule on a truncated window is
//! kept as the reference evaluator. The `z` integral is adaptive Simpson,
//! one span at a time.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::LinkParams;
use crate::error::{Error, Result};

/// Half-power width of the roll-off 0.1 RRC pulse in symbol periods.
pub const RRC_HALF_POWER_WIDTH: f64 = 0.85992;

/// Gaussian pulse model; widths in ps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPulse {
    pub t0_ps: f64,
    /// Pulse energy in ps; equal to the sample period so one unit-amplitude
    /// sample carries unit power.
    pub energy_ps: f64,
}

impl GaussianPulse {
    /// Amplitude 1/e full width `2√2·T_0` set to the RRC half-power width.
    pub fn matched_to_rrc(symbol_rate: f64, samples_per_symbol: usize) -> Self {
        let t_ps = 1e12 / symbol_rate;
        GaussianPulse {
            t0_ps: RRC_HALF_POWER_WIDTH * t_ps / (2.0 * std::f64::consts::SQRT_2),
            energy_ps: t_ps / samples_per_symbol as f64,
        }
    }

    /// `A²` such that `∫|g|² dt = energy`.
    fn amp2(&self) -> f64 {
        self.energy_ps / (std::f64::consts::PI.sqrt() * self.t0_ps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeIntegral {
    ClosedForm,
    /// Trapezoid rule with step `h_ps` on a window wide enough for the most
    /// dispersed pulse.
    Trapezoid {
        h_ps: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub time: TimeIntegral,
    /// Relative tolerance of the adaptive `z` integral.
    pub z_rel_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            time: TimeIntegral::ClosedForm,
            z_rel_tol: 1e-10,
        }
    }
}

/// Geometry shared by every cell of a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSetup {
    pub alpha: f64,
    pub beta2: f64,
    pub gamma: f64,
    pub span_km: f64,
    pub n_spans: usize,
    pub pulse: GaussianPulse,
    /// Shift between neighboring taps (ps).
    pub sample_period_ps: f64,
}

impl FieldSetup {
    /// Coefficients for `n_spans` spans of `link`, sampled at `samples_per_symbol`.
    pub fn new(link: &LinkParams, n_spans: usize, symbol_rate: f64, samples_per_symbol: usize) -> Self {
        FieldSetup {
            alpha: link.alpha,
            beta2: link.beta2,
            gamma: link.gamma,
            span_km: link.span_km,
            n_spans,
            pulse: GaussianPulse::matched_to_rrc(symbol_rate, samples_per_symbol),
            sample_period_ps: 1e12 / (symbol_rate * samples_per_symbol as f64),
        }
    }

    fn shifts(&self, m: i64, k: i64) -> [(f64, bool); 4] {
        // (delay, conjugated)
        let ts = self.sample_period_ps;
        [
            (0.0, true),
            (m as f64 * ts, false),
            (k as f64 * ts, false),
            ((m + k) as f64 * ts, true),
        ]
    }

    /// Inner time integral at distance `z` by the closed form.
    fn time_integral_closed(&self, m: i64, k: i64, z: f64) -> Complex64 {
        let t0 = self.pulse.t0_ps;
        let b = Complex64::new(t0 * t0, -self.beta2 * z);
        let inv_b = 1.0 / b;
        let mut p = Complex64::new(0.0, 0.0);
        let mut q = Complex64::new(0.0, 0.0);
        let mut r = Complex64::new(0.0, 0.0);
        for (tau, conj) in self.shifts(m, k) {
            let w = if conj { inv_b.conj() } else { inv_b };
            p += w;
            q += w * tau;
            r += w * tau * tau;
        }
        let a2 = self.pulse.amp2();
        let pref = a2 * a2 * t0.powi(4) / b.norm_sqr();
        let gauss = (2.0 * std::f64::consts::PI / p).sqrt() * (q * q / (2.0 * p) - r / 2.0).exp();
        pref * gauss
    }

    /// Inner time integral by the trapezoid rule.
    fn time_integral_trapezoid(&self, m: i64, k: i64, z: f64, h: f64) -> Complex64 {
        let t0 = self.pulse.t0_ps;
        let b = Complex64::new(t0 * t0, -self.beta2 * z);
        let amp = self.pulse.amp2().sqrt() * t0 / b.sqrt();
        let g = |t: f64, conj: bool| {
            let v = amp * (-(t * t) / (2.0 * b)).exp();
            if conj {
                v.conj()
            } else {
                v
            }
        };
        let shifts = self.shifts(m, k);
        let lo = shifts.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        let hi = shifts.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        // |g(z,t)|² has standard deviation |b|/(√2·T0); twelve of them on each
        // side leave a negligible tail.
        let half = 12.0 * b.norm() / (std::f64::consts::SQRT_2 * t0) + 4.0 * self.sample_period_ps;
        let n = ((hi - lo + 2.0 * half) / h).ceil() as usize;
        let start = lo - half;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..=n {
            let t = start + i as f64 * h;
            let mut v = Complex64::new(1.0, 0.0);
            for (tau, conj) in shifts {
                v *= g(t - tau, conj);
            }
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += v * w;
        }
        acc * h
    }

    fn power_profile(&self, z_in_span: f64) -> f64 {
        (-self.alpha * z_in_span).exp()
    }
}

/// Complex adaptive Simpson on `[a, b]`, returning the value and an error estimate.
fn adaptive_simpson<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64, abs_tol: f64) -> (Complex64, f64) {
    fn simpson(fa: Complex64, fm: Complex64, fb: Complex64, a: f64, b: f64) -> Complex64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> Complex64>(
        f: &F,
        a: f64,
        b: f64,
        fa: Complex64,
        fm: Complex64,
        fb: Complex64,
        whole: Complex64,
        tol: f64,
        depth: u32,
    ) -> (Complex64, f64) {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let diff = left + right - whole;
        if depth == 0 || diff.norm() <= 15.0 * tol {
            return (left + right + diff / 15.0, diff.norm() / 15.0);
        }
        let (l, el) = rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1);
        let (r, er) = rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
        (l + r, el + er)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    rec(f, a, b, fa, fm, fb, whole, abs_tol, 40)
}

/// One coefficient `C_{m,k}` (1/W) and its quadrature error estimate.
pub fn coefficient(setup: &FieldSetup, m: i64, k: i64, cfg: &QuadratureConfig) -> Result<(Complex64, f64)> {
    if setup.gamma == 0.0 {
        return Ok((Complex64::new(0.0, 0.0), 0.0));
    }
    let inner = |z: f64| match cfg.time {
        TimeIntegral::ClosedForm => setup.time_integral_closed(m, k, z),
        TimeIntegral::Trapezoid { h_ps } => setup.time_integral_trapezoid(m, k, z, h_ps),
    };
    let l = setup.span_km;
    let mut total = Complex64::new(0.0, 0.0);
    let mut err = 0.0;
    for span in 0..setup.n_spans {
        let z0 = span as f64 * l;
        let f = |zs: f64| inner(z0 + zs) * setup.power_profile(zs);
        // Scale the absolute tolerance by a coarse magnitude of this span.
        let coarse = (f(0.0).norm() + f(0.5 * l).norm() + f(l).norm()) * l / 3.0;
        let tol = cfg.z_rel_tol * coarse.max(1e-300);
        let (v, e) = adaptive_simpson(&f, 0.0, l, tol);
        total += v;
        err += e;
    }
    let scale = setup.gamma / setup.sample_period_ps;
    let value = total * scale;
    let err = err * scale;
    let bound = 100.0 * cfg.z_rel_tol * value.norm().max(1e-300);
    if !(err <= bound || value.norm() < 1e-300) {
        return Err(Error::Accuracy {
            estimate: err,
            tolerance: bound,
            context: format!("C[{m},{k}]"),
        });
    }
    Ok((value, err))
}

/// `C_{m,k}` over `m, k ∈ [-M, M]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationField {
    pub m_max: usize,
    /// Row-major over `m`, then `k`, each from `-M` to `M`.
    pub coeffs: Vec<Complex64>,
    pub setup: FieldSetup,
    /// Largest quadrature error estimate over the grid.
    pub max_error: f64,
}

impl PerturbationField {
    fn width(&self) -> usize {
        2 * self.m_max + 1
    }

    pub fn get(&self, m: i64, k: i64) -> Complex64 {
        let w = self.width();
        let mm = self.m_max as i64;
        assert!(m.abs() <= mm && k.abs() <= mm, "index ({m},{k}) outside ±{mm}");
        self.coeffs[(m + mm) as usize * w + (k + mm) as usize]
    }

    pub fn span_km(&self) -> f64 {
        self.setup.span_km * self.setup.n_spans as f64
    }

    /// `20·log10|C_{m,k}/C_{0,0}|`.
    pub fn level_db(&self, m: i64, k: i64) -> f64 {
        20.0 * (self.get(m, k).norm() / self.get(0, 0).norm()).log10()
    }
}

pub fn compute_field(setup: &FieldSetup, m_max: usize, cfg: &QuadratureConfig) -> Result<PerturbationField> {
    if m_max == 0 {
        return Err(Error::invalid("field needs M >= 1"));
    }
    if !(setup.pulse.t0_ps > 0.0) {
        return Err(Error::invalid("pulse width must be positive"));
    }
    let mm = m_max as i64;
    let cells: Vec<(i64, i64)> = (-mm..=mm).flat_map(|m| (-mm..=mm).map(move |k| (m, k))).collect();
    let results: Result<Vec<(Complex64, f64)>> =
        cells.par_iter().map(|&(m, k)| coefficient(setup, m, k, cfg)).collect();
    let results = results?;
    let max_error = results.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(PerturbationField {
        m_max,
        coeffs: results.into_iter().map(|r| r.0).collect(),
        setup: *setup,
        max_error,
    })
}

/// The `m = 0` row only, `C_{0,k}` for `k = 0..=k_max` (the row is symmetric).
pub fn compute_row0(setup: &FieldSetup, k_max: usize, cfg: &QuadratureConfig) -> Result<Vec<f64>> {
    (0..=k_max as i64)
        .into_par_iter()
        .map(|k| coefficient(setup, 0, k, cfg).map(|(c, _)| c.re))
        .collect()
}

/// Truncated SPM/IXPM vector `[…, 2C_{0,k}, …, C_{0,0}, …, 2C_{0,k}, …]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationVector {
    pub span_km: f64,
    pub chi_db: f64,
    /// Full symmetric taps in 1/W (odd length).
    pub taps: Vec<f64>,
    /// True once a launch power has been multiplied into the taps.
    #[serde(default)]
    pub power_folded: bool,
    /// True when the window reached the edge of the computed row.
    #[serde(default)]
    pub clipped: bool,
}

impl PerturbationVector {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// `[C_00, 2C_01, …, 2C_0K]`.
    pub fn half_taps(&self) -> Vec<f64> {
        self.taps[self.taps.len() / 2..].to_vec()
    }
}

/// Keeps the contiguous window of `k` around 0 whose level stays at or above
/// `chi_db`, applied to the row `C_{0,0}, C_{0,1}, …`.
pub fn truncate_row(row0: &[f64], span_km: f64, chi_db: f64) -> Result<PerturbationVector> {
    if !(chi_db <= 0.0) {
        return Err(Error::InvalidThreshold(format!(
            "truncation threshold must be <= 0 dB, got {chi_db}"
        )));
    }
    let c00 = *row0
        .first()
        .ok_or_else(|| Error::InvalidThreshold("empty coefficient row".into()))?;
    if c00 == 0.0 {
        return Err(Error::InvalidThreshold("C_00 is zero".into()));
    }
    let mut k_keep = 0;
    for (k, c) in row0.iter().enumerate().skip(1) {
        if 20.0 * (c.abs() / c00.abs()).log10() >= chi_db {
            k_keep = k;
        } else {
            break;
        }
    }
    let clipped = k_keep + 1 == row0.len() && row0.len() > 1;
    if clipped {
        log::warn!("c0 window reached the computed extent k = {k_keep}; increase M");
    }
    let half: Vec<f64> = (0..=k_keep)
        .map(|k| if k == 0 { row0[0] } else { 2.0 * row0[k] })
        .collect();
    let mut taps: Vec<f64> = half[1..].iter().rev().copied().collect();
    taps.extend_from_slice(&half);
    Ok(PerturbationVector {
        span_km,
        chi_db,
        taps,
        power_folded: false,
        clipped,
    })
}

pub fn truncate(field: &PerturbationField, chi_db: f64) -> Result<PerturbationVector> {
    let row: Vec<f64> = (0..=field.m_max as i64).map(|k| field.get(0, k).re).collect();
    truncate_row(&row, field.span_km(), chi_db)
}

/// Cells `(m, k)` with level at or above `threshold_db`.
pub fn region(field: &PerturbationField, threshold_db: f64) -> Vec<(i64, i64)> {
    let mm = field.m_max as i64;
    (-mm..=mm)
        .flat_map(|m| (-mm..=mm).map(move |k| (m, k)))
        .filter(|&(m, k)| field.level_db(m, k) >= threshold_db)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContourRow {
    pub threshold_db: f64,
    pub m: i64,
    pub k: i64,
}

/// Boundary cells of each threshold's region: inside cells with a
/// 4-neighbor outside the region or on the grid edge.
pub fn export_contours(field: &PerturbationField, thresholds_db: &[f64]) -> Result<Vec<ContourRow>> {
    if thresholds_db.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("contour thresholds must be sorted"));
    }
    let mm = field.m_max as i64;
    let mut rows = Vec::new();
    for &th in thresholds_db {
        let inside = |m: i64, k: i64| m.abs() <= mm && k.abs() <= mm && field.level_db(m, k) >= th;
        for (m, k) in region(field, th) {
            let edge = [(m - 1, k), (m + 1, k), (m, k - 1), (m, k + 1)]
                .iter()
                .any(|&(a, b)| !inside(a, b));
            if edge {
                rows.push(ContourRow { threshold_db: th, m, k });
            }
        }
    }
    Ok(rows)
}

pub fn contours_csv(rows: &[ContourRow]) -> String {
    let mut s = String::from("threshold_db,m,k\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.threshold_db, r.m, r.k));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n_spans: usize) -> FieldSetup {
        FieldSetup::new(&LinkParams::default(), n_spans, 32e9, 2)
    }

    #[test]
    fn gaussian_width_matches_rrc_half_power() {
        // Half-power width of the RRC pulse from its periodic kernel at 64 sps.
        let pulse = crate::signal::PulseShape::new(0.1, 64, 64).unwrap();
        let taps = pulse.taps(64);
        let c = taps.len() / 2;
        let peak = taps[c] * taps[c];
        let mut i = c;
        while taps[i] * taps[i] > 0.5 * peak {
            i += 1;
        }
        // Linear interpolation of the half-power crossing.
        let (a, b) = (taps[i - 1] * taps[i - 1], taps[i] * taps[i]);
        let x = (i - 1 - c) as f64 + (a - 0.5 * peak) / (a - b);
        let fwhm = 2.0 * x / 64.0;
        assert!((fwhm - RRC_HALF_POWER_WIDTH).abs() < 2e-3, "fwhm {fwhm}");
    }

    #[test]
    fn closed_form_matches_trapezoid() {
        let s = setup(1);
        let h = s.pulse.t0_ps / 8.0;
        for &(m, k) in &[(0, 0), (0, 3), (1, 2), (-2, 5)] {
            for &z in &[0.0, 10.0, 80.0] {
                let a = s.time_integral_closed(m, k, z);
                let b = s.time_integral_trapezoid(m, k, z, h);
                let scale = s.time_integral_closed(0, 0, z).norm();
                assert!((a - b).norm() / scale < 1e-10, "({m},{k}) z={z}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn baseline_and_closed_form_coefficients_agree() {
        let s = setup(1);
        let cf = QuadratureConfig::default();
        let tr = QuadratureConfig {
            time: TimeIntegral::Trapezoid {
                h_ps: s.pulse.t0_ps / 4.0,
            },
            z_rel_tol: 1e-9,
        };
        for &(m, k) in &[(0, 0), (0, 2), (1, 1)] {
            let a = coefficient(&s, m, k, &cf).unwrap().0;
            let b = coefficient(&s, m, k, &tr).unwrap().0;
            assert!((a - b).norm() / a.norm() < 1e-6, "({m},{k})");
        }
    }

    #[test]
    fn center_coefficient_is_self_consistent() {
        let s = setup(1);
        let run = |tol: f64, h: f64| {
            let cfg = QuadratureConfig {
                time: TimeIntegral::Trapezoid { h_ps: h },
                z_rel_tol: tol,
            };
            coefficient(&s, 0, 0, &cfg).unwrap().0.re
        };
        let h = s.pulse.t0_ps / 2.0;
        let coarse = run(1e-8, h);
        let fine = run(1e-9, h / 2.0);
        assert!(((coarse - fine) / fine).abs() < 1e-6);
        assert!(coarse > 0.0);
    }

    #[test]
    fn zero_gamma_gives_zero_field() {
        let mut s = setup(1);
        s.gamma = 0.0;
        let f = compute_field(&s, 2, &QuadratureConfig::default()).unwrap();
        assert!(f.coeffs.iter().all(|c| *c == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn symmetry_and_realness() {
        let f = compute_field(&setup(1), 4, &QuadratureConfig::default()).unwrap();
        let c00 = f.get(0, 0).norm();
        for m in -4..=4i64 {
            for k in -4..=4i64 {
                let d = (f.get(m, k) - f.get(k, m)).norm() / c00;
                assert!(d < 1e-8, "({m},{k})");
            }
            let row = f.get(0, m);
            assert!(row.im.abs() / c00 < 1e-8);
            assert!(row.re > 0.0);
            assert!(f.get(m, 0).re > 0.0);
        }
        assert!(((f.get(1, 2) - f.get(2, 1)).norm() / f.get(1, 2).norm()) < 1e-8);
    }

    #[test]
    fn linear_in_gamma() {
        let a = setup(1);
        let mut b = a;
        b.gamma *= 2.0;
        let cfg = QuadratureConfig::default();
        for &(m, k) in &[(0, 0), (1, 3)] {
            let ca = coefficient(&a, m, k, &cfg).unwrap().0;
            let cb = coefficient(&b, m, k, &cfg).unwrap().0;
            assert!((cb - 2.0 * ca).norm() <= 1e-12 * cb.norm());
        }
    }

    #[test]
    fn strong_loss_concentrates_near_input() {
        // With large α the result approaches γ/α times the z = 0 integrand.
        let mut s = setup(1);
        s.alpha = 50.0;
        let c = coefficient(&s, 0, 1, &QuadratureConfig::default()).unwrap().0.re;
        let lumped = s.gamma / s.alpha * s.time_integral_closed(0, 1, 0.0).re / s.sample_period_ps;
        assert!(((c - lumped) / lumped).abs() < 1e-2);
    }

    #[test]
    fn truncation_lengths() {
        let cfg = QuadratureConfig::default();
        let mut lengths = Vec::new();
        for spans in [1usize, 2, 4, 10] {
            let row = compute_row0(&setup(spans), 80, &cfg).unwrap();
            let v = truncate_row(&row, 80.0 * spans as f64, -20.0).unwrap();
            assert!(!v.clipped);
            lengths.push(v.len());
        }
        assert!((9..=13).contains(&lengths[0]), "{lengths:?}");
        assert!(lengths.windows(2).all(|w| w[0] < w[1]), "{lengths:?}");
    }

    #[test]
    fn truncation_edges() {
        let row = compute_row0(&setup(1), 10, &QuadratureConfig::default()).unwrap();
        let single = truncate_row(&row, 80.0, 0.0).unwrap();
        assert_eq!(single.taps, vec![row[0]]);
        assert!(matches!(truncate_row(&row, 80.0, 1.0), Err(Error::InvalidThreshold(_))));
        let v = truncate_row(&row, 80.0, -20.0).unwrap();
        let n = v.len();
        assert_eq!(n % 2, 1);
        for i in 0..n {
            assert_eq!(v.taps[i], v.taps[n - 1 - i]);
        }
        assert_eq!(v.taps[n / 2], row[0]);
        assert_eq!(v.taps[n / 2 + 1], 2.0 * row[1]);
    }

    #[test]
    fn contour_regions_nest_and_grow() {
        let cfg = QuadratureConfig::default();
        let f1 = compute_field(&setup(1), 8, &cfg).unwrap();
        let inner = region(&f1, -5.0);
        let outer = region(&f1, -25.0);
        assert!(inner.iter().all(|c| outer.contains(c)));
        assert!(outer.len() > inner.len());

        let all = export_contours(&f1, &[-1000.0]).unwrap();
        assert_eq!(all.len(), 4 * 16);
        assert!(export_contours(&f1, &[-5.0, -25.0]).is_err());

        let f2 = compute_field(&setup(2), 8, &cfg).unwrap();
        assert!(region(&f2, -15.0).len() > region(&f1, -15.0).len());
    }
}
