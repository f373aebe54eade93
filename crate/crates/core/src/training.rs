//! Loss, reverse-mode gradients through the reconstruction operator, Adam,
//! and the epoch loop.
//!
//! With `P` the projections, `W` the weights, `H` the bank and `B` the
//! backprojector, the forward pass is `y = ReLU(B·Φ_H(W ⊙ P))` where each
//! detector row is filtered by `Φ_H(x) = Re F⁻¹(H ⊙ F x)`. For a real `H`,
//! `Φ_H` is self-adjoint, so the backward pass is
//!
//! ```text
//! e    = ∂L/∂y ⊙ 1[pre_relu > 0]
//! g    = Bᵀ e
//! ∂H_m = Σ_v Re( F(W ⊙ P)_{m,v} · conj(F g_{m,v}) ) / N_s
//! q    = Φ_H(g)
//! ∂W   = Σ_m P_m ⊙ q_m
//! ```
//!
//! and the approximation-band gradients are the level-2 LL projections of
//! `∂W` and `∂H`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::fdk::{apply_filter_fft, apply_weighting, filter_projection};
use crate::model::{FdkModel, SparseWaveletParams};
use crate::par::for_each_chunk2;
use crate::projector::{backproject_adjoint, fdk_backproject};
use crate::rng::CounterRng;
use crate::wavelet::project_to_ll;
use crate::{Error, Fft, Matrix, ProjectionStack, Result, Volume};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let beta_ok = |b: f64| (0.0..1.0).contains(&b);
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        // lr = 0 is allowed: it turns training into evaluation.
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !beta_ok(self.adam_beta1) || !beta_ok(self.adam_beta2) {
            return Err(Error::InvalidConfig("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(Error::InvalidConfig("Adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Gradients shaped like [`SparseWaveletParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradPair {
    pub g_w: Matrix,
    pub g_h: Matrix,
}

/// Mean squared voxel difference.
pub fn mse_loss(output: &Volume, target: &Volume) -> Result<f64> {
    if output.shape() != target.shape() {
        return Err(Error::dim(format!(
            "loss inputs have shapes {:?} and {:?}",
            output.shape(),
            target.shape()
        )));
    }
    let n = output.len() as f64;
    Ok(output
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Loss of `model` on `(stack, target)` and its exact gradient with respect
/// to both approximation bands. The ReLU subgradient at zero is zero.
pub fn gradient(
    model: &FdkModel,
    stack: &ProjectionStack,
    target: &Volume,
) -> Result<(f64, GradPair)> {
    let geom = &model.geom;
    if stack.len() != geom.stack_len() || !target.matches(geom) {
        return Err(Error::dim("sample does not match the model geometry"));
    }
    let weight = model.options.distance_weight();
    let (w, h) = model.materialize()?;
    let weighted = apply_weighting(stack, &w)?;
    let filtered = apply_filter_fft(&weighted, &h)?;
    let pre = fdk_backproject(geom, &filtered, weight)?;

    let n_vox = pre.len() as f64;
    let mut loss = 0.0;
    let mut resid = Volume::for_geometry(geom);
    for ((r, &p), &t) in resid
        .as_mut_slice()
        .iter_mut()
        .zip(pre.as_slice())
        .zip(target.as_slice())
    {
        let out = p.max(0.0);
        let d = out - t;
        loss += d * d;
        if p > 0.0 {
            *r = 2.0 * d / n_vox;
        }
    }
    loss /= n_vox;

    let g_filtered = backproject_adjoint(geom, &resid, weight)?;
    let [m_count, ns, nv] = stack.shape();
    let mut dh = Matrix::zeros(m_count, ns);
    let mut q = ProjectionStack::zeros(geom);
    {
        let fft = Fft::new(ns);
        let g_all = g_filtered.as_slice();
        let x_all = weighted.as_slice();
        let inv_n = 1.0 / ns as f64;
        for_each_chunk2(
            q.as_mut_slice(),
            ns * nv,
            dh.as_mut_slice(),
            ns,
            |m, q_m, dh_m| {
                let span = m * ns * nv..(m + 1) * ns * nv;
                let (g_m, x_m) = (&g_all[span.clone()], &x_all[span]);
                let mut xb = vec![Complex64::new(0.0, 0.0); ns];
                let mut gb = vec![Complex64::new(0.0, 0.0); ns];
                for v in 0..nv {
                    for i in 0..ns {
                        xb[i] = Complex64::new(x_m[i * nv + v], 0.0);
                        gb[i] = Complex64::new(g_m[i * nv + v], 0.0);
                    }
                    fft.forward(&mut xb);
                    fft.forward(&mut gb);
                    for k in 0..ns {
                        dh_m[k] += (xb[k] * gb[k].conj()).re * inv_n;
                    }
                }
                filter_projection(&fft, h.0.row(m), g_m, q_m, ns, nv, &mut gb);
            },
        );
    }

    let mut dw = Matrix::zeros(ns, nv);
    for m in 0..m_count {
        let p_m = stack.projection(m);
        let q_m = q.projection(m);
        for ((d, &p), &qq) in dw.as_mut_slice().iter_mut().zip(p_m).zip(q_m) {
            *d += p * qq;
        }
    }
    Ok((
        loss,
        GradPair {
            g_w: project_to_ll(&dw)?,
            g_h: project_to_ll(&dh)?,
        },
    ))
}

/// First and second moment estimates plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m_w: Matrix,
    v_w: Matrix,
    m_h: Matrix,
    v_h: Matrix,
    step: u64,
}

impl AdamState {
    pub fn new(params: &SparseWaveletParams) -> Self {
        let (wr, wc) = params.w_train.shape();
        let (hr, hc) = params.h_train.shape();
        AdamState {
            m_w: Matrix::zeros(wr, wc),
            v_w: Matrix::zeros(wr, wc),
            m_h: Matrix::zeros(hr, hc),
            v_h: Matrix::zeros(hr, hc),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> (&Matrix, &Matrix) {
        (&self.m_w, &self.m_h)
    }

    pub fn second_moments(&self) -> (&Matrix, &Matrix) {
        (&self.v_w, &self.v_h)
    }
}

fn adam_update(
    p: &mut Matrix,
    g: &Matrix,
    m: &mut Matrix,
    v: &mut Matrix,
    cfg: &TrainConfig,
    t: u64,
) {
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - libm::pow(b1, t as f64);
    let c2 = 1.0 - libm::pow(b2, t as f64);
    let it = p
        .as_mut_slice()
        .iter_mut()
        .zip(g.as_slice())
        .zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice().iter_mut()));
    for ((p, &g), (m, v)) in it {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.learning_rate * m_hat / (libm::sqrt(v_hat) + cfg.adam_eps);
    }
}

/// One bias-corrected Adam update of both coefficient blocks.
pub fn adam_step(
    params: &mut SparseWaveletParams,
    grads: &GradPair,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.g_w.shape() != params.w_train.shape()
        || grads.g_h.shape() != params.h_train.shape()
        || state.m_w.shape() != params.w_train.shape()
        || state.m_h.shape() != params.h_train.shape()
    {
        return Err(Error::dim("gradient, state and parameter shapes differ"));
    }
    state.step += 1;
    let t = state.step;
    adam_update(
        &mut params.w_train,
        &grads.g_w,
        &mut state.m_w,
        &mut state.v_w,
        cfg,
        t,
    );
    adam_update(
        &mut params.h_train,
        &grads.g_h,
        &mut state.m_h,
        &mut state.v_h,
        cfg,
        t,
    );
    Ok(())
}

/// One training or validation pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub stack: ProjectionStack,
    pub target: Volume,
}

/// One line of the training log. `val_loss` is set on the last row of each
/// epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub sample_index: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss (epoch 0 is the input model).
    pub model: FdkModel,
    pub best_epoch: usize,
    pub initial_val_loss: Option<f64>,
    pub log: Vec<LogRow>,
}

fn check_samples(model: &FdkModel, samples: &[Sample]) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        if s.stack.geometry() != &model.geom || !s.target.matches(&model.geom) {
            return Err(Error::GeometryMismatch(i));
        }
    }
    Ok(())
}

/// Mean loss of `model` over `samples`.
pub fn evaluate(model: &FdkModel, samples: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        total += mse_loss(&model.forward(&s.stack)?.output, &s.target)?;
    }
    Ok(total / samples.len().max(1) as f64)
}

pub fn train(
    model: &FdkModel,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(model, train_set, val_set, cfg, |_, _| {})
}

/// [`train`] with a callback receiving `(epoch, val_loss)` after every epoch.
///
/// Samples are visited in a per-epoch shuffled order drawn from counter
/// stream `epoch` of `cfg.seed`; one Adam step per sample. Without a
/// validation set the final parameters are returned.
pub fn train_with(
    model: &FdkModel,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, Option<f64>),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_samples(model, train_set)?;
    check_samples(model, val_set)?;

    let mut current = model.clone();
    let mut state = AdamState::new(&current.params);
    let validate = |m: &FdkModel, epoch: usize| -> Result<Option<f64>> {
        if val_set.is_empty() {
            return Ok(None);
        }
        let v = evaluate(m, val_set)?;
        if !v.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        Ok(Some(v))
    };
    let initial_val_loss = validate(&current, 0)?;
    let mut best = (initial_val_loss, 0usize, current.params.clone());
    let mut log = Vec::with_capacity(cfg.epochs * train_set.len());

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        CounterRng::new(cfg.seed, epoch as u64).shuffle(&mut order);
        for &i in &order {
            let s = &train_set[i];
            let (loss, grads) = gradient(&current, &s.stack, &s.target)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            adam_step(&mut current.params, &grads, &mut state, cfg)?;
            log.push(LogRow {
                epoch,
                sample_index: i,
                train_loss: loss,
                val_loss: None,
            });
        }
        let val = validate(&current, epoch)?;
        if let Some(last) = log.last_mut() {
            last.val_loss = val;
        }
        match (val, best.0) {
            (Some(v), Some(b)) if v < b => best = (Some(v), epoch, current.params.clone()),
            (None, _) => best = (None, epoch, current.params.clone()),
            _ => {}
        }
        on_epoch(epoch, val);
    }

    let (_, best_epoch, params) = best;
    Ok(TrainOutcome {
        model: FdkModel { params, ..current },
        best_epoch,
        initial_val_loss,
        log,
    })
}
