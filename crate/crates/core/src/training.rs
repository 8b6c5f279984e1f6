//! Supervised training of LDBP / PA-LDBP models.
//!
//! The loss of a frame is the MSE between the reference symbols and the
//! equalized symbols, taken at the even samples and rotated by the
//! data-aided phase `θ = arg Σ s_n·conj(ŝ_n)`. Gradients are propagated by
//! hand through the three operations of a step (circular FIR, `|·|²` and
//! the phase rotation). For a real loss `L` of a complex variable `w` the
//! gradient is stored as `∂L/∂Re w + j·∂L/∂Im w`, i.e. `2·∂L/∂w̄`, which is
//! the steepest-ascent direction in the complex plane. The rotation `θ` is
//! held fixed during differentiation; since it minimizes the loss, its own
//! derivative contributes nothing.

use std::time::Instant;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdc::circular_fir;
use crate::dataset::FrameRecord;
use crate::error::{Error, Result};
use crate::metrics::{effective_snr_db, MetricsReport};
use crate::model::{correlate_real, EqualizerModel, Nonlinear, Trace};
use crate::signal::qam64_demap;
use crate::signal::rng::{Purpose, SeedStream};
use crate::signal::ComplexSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    Analytic,
    RandomGaussian,
}

/// Which parameters a random initialization replaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RandomScope {
    /// Only the nonlinear (c0) taps; filters keep their designed values.
    Nonlinear,
    /// Filters and c0 taps.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub init_mode: InitMode,
    /// Standard deviation of random-Gaussian taps, relative to a
    /// unit-energy filter (and to the analytic center tap for c0).
    pub random_std: f64,
    pub random_scope: RandomScope,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Samples per symbol of the model input.
    pub rx_sps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 50,
            seed: 1,
            init_mode: InitMode::Analytic,
            random_std: 1.0,
            random_scope: RandomScope::Nonlinear,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            rx_sps: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| {
            Err(Error::Config {
                path: format!("train.{path}"),
                message,
            })
        };
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate", format!("must be > 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1".into());
        }
        if self.rx_sps == 0 {
            return bad("rx_sps", "must be >= 1".into());
        }
        Ok(())
    }
}

/// Outcome of [`phase_derotate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Derotated {
    pub symbols: Vec<Complex64>,
    pub theta: f64,
    /// True when `Σ s·conj(ŝ)` vanished and no rotation was applied.
    pub fallback: bool,
}

/// Rotates `s_hat` by `θ = arg Σ s_n·conj(ŝ_n)`, the least-squares phase.
pub fn phase_derotate(s_hat: &[Complex64], s: &[Complex64]) -> Result<Derotated> {
    if s_hat.len() != s.len() {
        return Err(Error::LengthMismatch {
            expected: s.len(),
            actual: s_hat.len(),
        });
    }
    let corr: Complex64 = s.iter().zip(s_hat).map(|(a, b)| a * b.conj()).sum();
    if corr.norm() == 0.0 || !corr.norm().is_finite() {
        return Ok(Derotated {
            symbols: s_hat.to_vec(),
            theta: 0.0,
            fallback: true,
        });
    }
    let theta = corr.arg();
    let rot = Complex64::from_polar(1.0, theta);
    Ok(Derotated {
        symbols: s_hat.iter().map(|v| v * rot).collect(),
        theta,
        fallback: false,
    })
}

/// `Σ|s_n - ŝ_n|² / N`.
pub fn mse_loss(s_hat: &[Complex64], s: &[Complex64]) -> Result<f64> {
    if s_hat.len() != s.len() {
        return Err(Error::LengthMismatch {
            expected: s.len(),
            actual: s_hat.len(),
        });
    }
    if s.is_empty() {
        return Err(Error::invalid("mse of empty sequences"));
    }
    Ok(s.iter().zip(s_hat).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / s.len() as f64)
}

/// Symbol-spaced samples `scale·z_{sps·n}`.
pub fn downsample(z: &[Complex64], scale: f64, sps: usize) -> Vec<Complex64> {
    z.iter().step_by(sps).map(|v| v * scale).collect()
}

/// Loss of one frame given the model output, and `∂L/∂z` in the stored convention.
fn output_loss_grad(z: &[Complex64], frame: &FrameRecord, sps: usize) -> Result<(f64, Vec<Complex64>)> {
    let scale = frame.symbol_scale();
    let s_hat = downsample(z, scale, sps);
    let rot = phase_derotate(&s_hat, &frame.symbols)?;
    let loss = mse_loss(&rot.symbols, &frame.symbols)?;
    let c = Complex64::from_polar(scale, rot.theta);
    let n = frame.symbols.len() as f64;
    let mut g = vec![Complex64::new(0.0, 0.0); z.len()];
    for (i, s) in frame.symbols.iter().enumerate() {
        let zi = z[i * sps];
        g[i * sps] = c.conj() * (c * zi - s) * (2.0 / n);
    }
    Ok((loss, g))
}

/// Loss of one frame without gradients.
pub fn frame_loss(model: &EqualizerModel, frame: &FrameRecord, sps: usize) -> Result<f64> {
    let x = ComplexSignal::new(frame.samples.clone(), model.sample_rate)?;
    let z = model.forward(&x)?;
    let s_hat = downsample(z.samples(), frame.symbol_scale(), sps);
    let rot = phase_derotate(&s_hat, &frame.symbols)?;
    mse_loss(&rot.symbols, &frame.symbols)
}

/// Reverse pass: gradient of the loss with respect to [`EqualizerModel::params`],
/// given the recorded trace and `g_out = ∂L/∂Re z + j·∂L/∂Im z`.
pub fn backward(model: &EqualizerModel, trace: &Trace, g_out: &[Complex64]) -> Result<Vec<f64>> {
    if g_out.len() != trace.output.len() {
        return Err(Error::LengthMismatch {
            expected: trace.output.len(),
            actual: g_out.len(),
        });
    }
    let n = g_out.len();
    let mut g = g_out.to_vec();
    let mut per_step: Vec<Vec<f64>> = vec![Vec::new(); model.steps.len()];
    for (si, (step, st)) in model.steps.iter().zip(&trace.steps).enumerate().rev() {
        // Rotation u = y·e^{-jφ}.
        let mut g_phi = vec![0.0; n];
        let mut g_y = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            let rot = Complex64::from_polar(1.0, -st.phi[i]);
            let u = st.y[i] * rot;
            g_phi[i] = (g[i].conj() * Complex64::new(0.0, -1.0) * u).re;
            g_y[i] = g[i] * rot.conj();
        }
        // φ from p = |y|².
        let mut grads_c0 = Vec::new();
        let g_p: Vec<f64> = match &step.nl {
            Nonlinear::Eta(eta) => {
                let gain = eta * step.gamma * step.l_eff * model.power_scale_w;
                g_phi.iter().map(|v| gain * v).collect()
            }
            Nonlinear::C0HalfTaps(c0) => {
                for k in 0..c0.len() {
                    let mut acc = 0.0;
                    for (i, g) in g_phi.iter().enumerate() {
                        acc += g * if k == 0 {
                            st.p[i]
                        } else {
                            st.p[(i + n - k % n) % n] + st.p[(i + k) % n]
                        };
                    }
                    grads_c0.push(acc);
                }
                correlate_real(&g_phi, c0)
            }
        };
        for i in 0..n {
            g_y[i] += 2.0 * st.y[i] * g_p[i];
        }
        // Circular FIR y = h ⊛ x.
        let half = &step.filter.half_taps;
        let x = &st.input;
        let mut grads = Vec::with_capacity(2 * half.len() + grads_c0.len());
        for v in 0..half.len() {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..n {
                acc += g_y[i] * x[(i + n - v % n) % n].conj();
                if v > 0 {
                    acc += g_y[i] * x[(i + v) % n].conj();
                }
            }
            grads.push(acc.re);
            grads.push(acc.im);
        }
        grads.extend(grads_c0);
        if let Some(bad) = grads.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                step: si + 1,
                param: bad,
            });
        }
        per_step[si] = grads;
        let conj_half: Vec<Complex64> = half.iter().map(|h| h.conj()).collect();
        g = circular_fir(&g_y, &conj_half);
    }
    Ok(per_step.concat())
}

/// Loss and gradient of one frame.
pub fn frame_loss_grad(model: &EqualizerModel, frame: &FrameRecord, sps: usize) -> Result<(f64, Vec<f64>)> {
    let trace = model.forward_trace(&frame.samples);
    let (loss, g) = output_loss_grad(&trace.output, frame, sps)?;
    let grads = backward(model, &trace, &g)?;
    Ok((loss, grads))
}

/// Mean loss and gradient over a batch. Frames run in parallel; the
/// reduction follows frame order, so the result does not depend on the
/// thread count.
pub fn batch_loss_grad(model: &EqualizerModel, frames: &[&FrameRecord], sps: usize) -> Result<(f64, Vec<f64>)> {
    let parts: Vec<(f64, Vec<f64>)> = frames
        .par_iter()
        .map(|f| frame_loss_grad(model, f, sps))
        .collect::<Result<_>>()?;
    let b = frames.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.n_params()];
    for (l, g) in &parts {
        loss += l;
        for (a, v) in grad.iter_mut().zip(g) {
            *a += v;
        }
    }
    grad.iter_mut().for_each(|v| *v /= b);
    Ok((loss / b, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(Error::LengthMismatch {
            expected: params.len(),
            actual: grads.len().min(state.m.len()),
        });
    }
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Replaces the taps in `scope` by zero-mean Gaussian draws. Filter taps
/// get per-component standard deviation `std/√(2·N_CD)` (unit expected
/// energy at `std = 1`); c0 taps get `std·|c_0|/√N_PB` with `c_0` the
/// current center tap.
pub fn randomize(model: &mut EqualizerModel, seed: u64, std: f64, scope: RandomScope) -> Result<()> {
    let stream = SeedStream::new(seed);
    for (i, step) in model.steps.iter_mut().enumerate() {
        let mut rng = stream.rng(Purpose::Init, i as u64);
        let n_cd = step.filter.len() as f64;
        let nf = Normal::new(0.0, std / (2.0 * n_cd).sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
        if scope == RandomScope::All {
            for h in step.filter.half_taps.iter_mut() {
                *h = Complex64::new(nf.sample(&mut rng), nf.sample(&mut rng));
            }
        }
        if let Nonlinear::C0HalfTaps(c0) = &mut step.nl {
            let sd = std * c0[0].abs() / ((2 * c0.len() - 1) as f64).sqrt();
            let nc = Normal::new(0.0, sd.max(1e-300)).map_err(|e| Error::invalid(e.to_string()))?;
            for c in c0.iter_mut() {
                *c = nc.sample(&mut rng);
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub eff_snr_db: f64,
    pub val_eff_snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epochs: Vec<EpochRecord>,
    pub wall_time_s: f64,
}

impl TrainRecord {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,eff_snr_db,val_eff_snr_db\n");
        for e in &self.epochs {
            let val = e.val_eff_snr_db.map(|v| format!("{v:.6}")).unwrap_or_default();
            s.push_str(&format!("{},{:.9e},{:.6},{}\n", e.epoch, e.loss, e.eff_snr_db, val));
        }
        s
    }

    /// Effective SNR series used for convergence measures: validation when
    /// available, training otherwise.
    pub fn snr_series(&self) -> Vec<f64> {
        self.epochs
            .iter()
            .map(|e| e.val_eff_snr_db.unwrap_or(e.eff_snr_db))
            .collect()
    }

    /// First epoch whose SNR reaches `fraction` of the converged (best) SNR
    /// in dB; the last epoch index plus one if it never does.
    pub fn epochs_to_fraction(&self, fraction: f64) -> usize {
        let snr = self.snr_series();
        let best = snr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let target = if best >= 0.0 { fraction * best } else { best / fraction };
        snr.iter()
            .position(|&v| v >= target)
            .map(|i| self.epochs[i].epoch)
            .unwrap_or_else(|| self.epochs.last().map(|e| e.epoch + 1).unwrap_or(0))
    }
}

fn mean_loss(model: &EqualizerModel, frames: &[FrameRecord], sps: usize) -> Result<f64> {
    let losses: Vec<f64> = frames
        .par_iter()
        .map(|f| frame_loss(model, f, sps))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Trains `model` in place on `train`, reporting validation SNR on `val`.
///
/// Epoch 0 of the record is the untrained model. Frames are shuffled per
/// epoch from the configured seed. Fails with [`Error::Diverged`] when the
/// epoch loss stays above ten times the initial loss for three epochs.
pub fn train(
    model: &mut EqualizerModel,
    train: &[FrameRecord],
    val: &[FrameRecord],
    cfg: &TrainConfig,
) -> Result<TrainRecord> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("no training frames"));
    }
    let start = Instant::now();
    let sps = cfg.rx_sps;
    if cfg.init_mode == InitMode::RandomGaussian {
        randomize(model, cfg.seed, cfg.random_std, cfg.random_scope)?;
    }
    let val_snr = |m: &EqualizerModel| -> Result<Option<f64>> {
        if val.is_empty() {
            Ok(None)
        } else {
            Ok(Some(effective_snr_db(mean_loss(m, val, sps)?)))
        }
    };
    let initial = mean_loss(model, train, sps)?;
    let mut epochs = vec![EpochRecord {
        epoch: 0,
        loss: initial,
        eff_snr_db: effective_snr_db(initial),
        val_eff_snr_db: val_snr(model)?,
    }];
    let mut state = AdamState::new(model.n_params());
    let mut params = model.params();
    let stream = SeedStream::new(cfg.seed);
    let mut over = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = stream.rng(Purpose::Shuffle, epoch as u64);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let frames: Vec<&FrameRecord> = batch.iter().map(|&i| &train[i]).collect();
            let (loss, grad) = batch_loss_grad(model, &frames, sps)?;
            total += loss * frames.len() as f64;
            adam_step(
                &mut params,
                &grad,
                &mut state,
                cfg.learning_rate,
                cfg.adam_beta1,
                cfg.adam_beta2,
                cfg.adam_eps,
            )?;
            model.set_params(&params)?;
        }
        let loss = total / train.len() as f64;
        epochs.push(EpochRecord {
            epoch,
            loss,
            eff_snr_db: effective_snr_db(loss),
            val_eff_snr_db: val_snr(model)?,
        });
        log::debug!("epoch {epoch}: loss {loss:.4e}");
        if !loss.is_finite() || loss > 10.0 * initial {
            over += 1;
            if over >= 3 || !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss, initial });
            }
        } else {
            over = 0;
        }
    }
    Ok(TrainRecord {
        epochs,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// BER/Q² and effective SNR of `equalize` over `frames`. `equalize` returns
/// the symbol-spaced estimates in constellation units; each frame is
/// rotated by its data-aided phase before decisions.
pub fn evaluate_with<F>(frames: &[FrameRecord], equalize: F) -> Result<MetricsReport>
where
    F: Fn(&FrameRecord) -> Result<Vec<Complex64>> + Sync,
{
    if frames.is_empty() {
        return Err(Error::invalid("no frames to evaluate"));
    }
    let per: Vec<(u64, u64, f64)> = frames
        .par_iter()
        .map(|f| {
            let s_hat = equalize(f)?;
            let rot = phase_derotate(&s_hat, &f.symbols)?;
            let mse = mse_loss(&rot.symbols, &f.symbols)?;
            let bits = qam64_demap(&rot.symbols);
            let errors = bits.iter().zip(&f.bits).filter(|(a, b)| a != b).count() as u64;
            Ok((errors, bits.len() as u64, mse))
        })
        .collect::<Result<_>>()?;
    let errors = per.iter().map(|p| p.0).sum();
    let bits = per.iter().map(|p| p.1).sum();
    let mse = per.iter().map(|p| p.2).sum::<f64>() / per.len() as f64;
    Ok(MetricsReport::from_counts(errors, bits)?.with_eff_snr(mse))
}

/// Metrics of a learned model on `frames`.
pub fn evaluate(model: &EqualizerModel, frames: &[FrameRecord], sps: usize) -> Result<MetricsReport> {
    evaluate_with(frames, |f| {
        let x = ComplexSignal::new(f.samples.clone(), model.sample_rate)?;
        let z = model.forward(&x)?;
        Ok(downsample(z.samples(), f.symbol_scale(), sps))
    })
}

/// Target full lengths for pruning; `None` leaves a part untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PruneTargets {
    pub filter_len: Option<usize>,
    pub c0_len: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneStage {
    pub filter_len: usize,
    pub c0_len: usize,
    pub q2_db: f64,
    pub eff_snr_db: Option<f64>,
}

/// Outside-in pruning: each stage drops the outermost tap pair of every
/// filter and c0 vector still longer than its target, then fine-tunes for
/// `finetune.epochs`. Q² on `val` is recorded after every stage (stage 0 is
/// the starting model).
pub fn prune(
    model: &mut EqualizerModel,
    targets: PruneTargets,
    finetune: &TrainConfig,
    train_frames: &[FrameRecord],
    val: &[FrameRecord],
) -> Result<Vec<PruneStage>> {
    for (name, t, cur) in [
        ("filter", targets.filter_len, model.max_filter_len()),
        ("c0", targets.c0_len, model.max_c0_len()),
    ] {
        if let Some(t) = t {
            if t < 1 || t % 2 == 0 {
                return Err(Error::invalid(format!("{name} target {t} must be odd and >= 1")));
            }
            if t > cur {
                return Err(Error::invalid(format!(
                    "{name} target {t} exceeds current length {cur}"
                )));
            }
        }
    }
    let sps = finetune.rx_sps;
    let cfg = TrainConfig {
        init_mode: InitMode::Analytic,
        ..finetune.clone()
    };
    let stage_of = |m: &EqualizerModel| -> Result<PruneStage> {
        let r = evaluate(m, val, sps)?;
        Ok(PruneStage {
            filter_len: m.max_filter_len(),
            c0_len: m.max_c0_len(),
            q2_db: r.q2_db,
            eff_snr_db: r.eff_snr_db,
        })
    };
    let mut stages = vec![stage_of(model)?];
    loop {
        let mut changed = false;
        for (step, mask) in model.steps.iter_mut().zip(model.pruning_masks.iter_mut()) {
            if let Some(t) = targets.filter_len {
                if step.filter.len() > t {
                    let h = step.filter.half_taps.len() - 1;
                    step.filter.half_taps.truncate(h);
                    mask.filter[h] = false;
                    changed = true;
                }
            }
            if let (Some(t), Nonlinear::C0HalfTaps(c0)) = (targets.c0_len, &mut step.nl) {
                if 2 * c0.len() - 1 > t {
                    let k = c0.len() - 1;
                    c0.truncate(k);
                    mask.c0[k] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
        if cfg.epochs > 0 {
            train(model, train_frames, &[], &cfg)?;
        }
        stages.push(stage_of(model)?);
    }
    Ok(stages)
}
