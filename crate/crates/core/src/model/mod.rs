//! Denoising architectures: the segment transformer and four baselines
//! (fully connected, plain CNN, residual multi-kernel CNN, LSTM).
//!
//! All models map a batch `[B × N]` of noisy epochs to `[B × N]` estimates of
//! the clean epochs and are built from [`Tape`] ops, so every one of them is
//! differentiable end to end.

mod accounting;
mod baselines;
pub mod checkpoint;
mod config;
mod eegdnet;
mod params;

pub use accounting::{count_flops, count_params, flop_breakdown, FlopBreakdown};
pub use checkpoint::{load_model, model_container, model_from_container, save_model};
pub use config::{ModelConfig, ModelKind, RESCNN_KERNELS, SCNN_KERNEL};
pub use eegdnet::{
    add_position_embedding, encoder_block, feed_forward, multi_head_attention, reassemble, segment,
    AttentionOut, EncoderBlockOut,
};
pub use params::{Bound, ModelParams};

use crate::error::{Error, Result};
use crate::numerics::{grad_check, ChannelStats, GradCheckOptions, GradCheckReport, Rng, Scalar, Tape, Tensor, Var};

/// Batch-norm epsilon and running-statistics momentum for the CNN baselines.
pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.9;

/// Per-pass switches: dropout, and whether batch norm uses batch statistics.
pub struct ForwardCtx<'a, T> {
    training: bool,
    dropout_rng: Option<&'a mut Rng>,
    stats: Vec<(String, ChannelStats<T>)>,
}

impl<'a, T: Scalar> ForwardCtx<'a, T> {
    /// Inference: dropout off, batch norm uses running statistics.
    pub fn eval() -> Self {
        ForwardCtx {
            training: false,
            dropout_rng: None,
            stats: Vec::new(),
        }
    }

    /// Training: dropout masks drawn from `rng`, batch norm uses batch statistics.
    pub fn train(rng: &'a mut Rng) -> Self {
        ForwardCtx {
            training: true,
            dropout_rng: Some(rng),
            stats: Vec::new(),
        }
    }

    /// Training-mode normalization without dropout; deterministic, for
    /// gradient checks.
    pub fn train_without_dropout() -> Self {
        ForwardCtx {
            training: true,
            dropout_rng: None,
            stats: Vec::new(),
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    /// Batch statistics measured during the pass, keyed by batch-norm prefix.
    pub fn take_stats(&mut self) -> Vec<(String, ChannelStats<T>)> {
        std::mem::take(&mut self.stats)
    }

    pub(crate) fn dropout(&mut self, tape: &mut Tape<T>, x: Var, p: f64) -> Result<Var> {
        match (&mut self.dropout_rng, self.training) {
            (Some(rng), true) => tape.dropout(x, p, rng, true),
            _ => Ok(x),
        }
    }

    pub(crate) fn batch_norm(
        &mut self,
        tape: &mut Tape<T>,
        params: &ModelParams<T>,
        bound: &Bound,
        prefix: &str,
        x: Var,
    ) -> Result<Var> {
        let gamma = bound.get(&format!("{prefix}.gamma"))?;
        let beta = bound.get(&format!("{prefix}.beta"))?;
        if self.training {
            let (y, stats) = tape.batch_norm(x, gamma, beta, BATCH_NORM_EPS, None)?;
            if let Some(s) = stats {
                self.stats.push((prefix.to_string(), s));
            }
            Ok(y)
        } else {
            let mean = params.buffer(&format!("{prefix}.running_mean"))?.data();
            let var = params.buffer(&format!("{prefix}.running_var"))?.data();
            Ok(tape.batch_norm(x, gamma, beta, BATCH_NORM_EPS, Some((mean, var)))?.0)
        }
    }
}

/// `x · W + b` for the affine layer named `prefix`; `x` is `[rows × fan_in]`.
pub(crate) fn linear<T: Scalar>(tape: &mut Tape<T>, bound: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let w = bound.get(&format!("{prefix}.w"))?;
    let b = bound.get(&format!("{prefix}.b"))?;
    let y = tape.matmul(x, w)?;
    tape.add_broadcast(y, b)
}

/// Freshly initialized parameters for `cfg`.
pub fn init_params<T: Scalar>(cfg: &ModelConfig, rng: &mut Rng) -> Result<ModelParams<T>> {
    cfg.validate()?;
    Ok(match cfg.kind {
        ModelKind::EegDnet => eegdnet::init(cfg, rng),
        ModelKind::Dln => baselines::init_dln(cfg, rng),
        ModelKind::Scnn => baselines::init_scnn(cfg, rng),
        ModelKind::ResCnn1d => baselines::init_rescnn(cfg, rng),
        ModelKind::Rnn => baselines::init_rnn(cfg, rng),
    })
}

/// Runs the model on a `[B × N]` batch already on the tape.
pub fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    params: &ModelParams<T>,
    bound: &Bound,
    y: Var,
    ctx: &mut ForwardCtx<'_, T>,
) -> Result<Var> {
    match *tape.shape(y) {
        [_, n] if n == cfg.n => {}
        ref s => {
            return Err(Error::Dimension(format!(
                "model expects [B, {}] input, got {s:?}",
                cfg.n
            )))
        }
    }
    match cfg.kind {
        ModelKind::EegDnet => eegdnet::forward(tape, cfg, bound, y, ctx),
        ModelKind::Dln => baselines::forward_dln(tape, cfg, bound, y),
        ModelKind::Scnn => baselines::forward_scnn(tape, cfg, params, bound, y, ctx),
        ModelKind::ResCnn1d => baselines::forward_rescnn(tape, cfg, params, bound, y, ctx),
        ModelKind::Rnn => baselines::forward_rnn(tape, cfg, bound, y, ctx),
    }
}

/// Eval-mode denoising of `[B × N]` (or `[1 × N]`, or `[N]`) epochs.
pub fn forward_eval<T: Scalar>(cfg: &ModelConfig, params: &ModelParams<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = y.shape().to_vec();
    let batch = match shape.as_slice() {
        [n] if *n == cfg.n => 1,
        [b, n] if *n == cfg.n => *b,
        _ => {
            return Err(Error::Dimension(format!(
                "expected epochs of length {}, got shape {shape:?}",
                cfg.n
            )))
        }
    };
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let input = tape.constant(y.clone().reshape(vec![batch, cfg.n])?);
    let out = forward(&mut tape, cfg, params, &bound, input, &mut ForwardCtx::eval())?;
    tape.value(out).clone().reshape(shape)
}

/// Eval-mode denoising of many epochs, `batch` at a time.
pub fn predict<T: Scalar>(
    cfg: &ModelConfig,
    params: &ModelParams<T>,
    epochs: &[Vec<T>],
    batch: usize,
) -> Result<Vec<Vec<T>>> {
    let mut out = Vec::with_capacity(epochs.len());
    for chunk in epochs.chunks(batch.max(1)) {
        let flat: Vec<T> = chunk.iter().flatten().copied().collect();
        let y = Tensor::new(vec![chunk.len(), cfg.n], flat)?;
        let x = forward_eval(cfg, params, &y)?;
        out.extend(x.data().chunks(cfg.n).map(<[T]>::to_vec));
    }
    Ok(out)
}

/// Batch size used by [`model_grad_check`]; large enough for batch-norm
/// statistics to be non-trivial.
pub const GRAD_CHECK_BATCH: usize = 3;

/// Gradient check of the MSE loss of `cfg` with respect to every parameter
/// and the input batch. Parameters are initialized from `seed` and jittered
/// so that zero-initialized tensors are exercised too. Batch norm runs in
/// training mode and dropout is off.
pub fn model_grad_check(cfg: &ModelConfig, seed: u64, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let params = init_params::<f64>(cfg, &mut rng)?;
    let names: Vec<String> = params.names().cloned().collect();
    let mut inputs: Vec<Tensor<f64>> = params
        .iter()
        .map(|(_, t)| {
            let data = t.data().iter().map(|v| v + 0.1 * rng.normal()).collect();
            Tensor::new(t.shape().to_vec(), data)
        })
        .collect::<Result<_>>()?;
    let batch = |rng: &mut Rng| -> Result<Tensor<f64>> {
        let data = (0..GRAD_CHECK_BATCH * cfg.n).map(|_| rng.normal()).collect();
        Tensor::new(vec![GRAD_CHECK_BATCH, cfg.n], data)
    };
    inputs.push(batch(&mut rng)?);
    let target = batch(&mut rng)?;
    let f = |tape: &mut Tape<f64>, vars: &[Var]| -> Result<Var> {
        let bound = Bound::from_vars(names.iter().cloned().zip(vars.iter().copied()));
        let y = vars[names.len()];
        let out = forward(tape, cfg, &params, &bound, y, &mut ForwardCtx::train_without_dropout())?;
        let t = tape.constant(target.clone());
        tape.mse(out, t)
    };
    grad_check(f, &inputs, opts)
}
