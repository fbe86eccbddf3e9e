//! Comparison denoisers.
//!
//! - DLN: three sigmoid hidden layers, linear output.
//! - SCNN: `scnn_layers` × (conv k=3 → batch norm → ReLU), then a dense
//!   reconstruction layer.
//! - 1D-ResCNN: three parallel branches with kernels 3/5/7, each a conv
//!   stem plus one residual block, summed and fed to a dense layer.
//! - RNN: LSTM over the samples, then three dense layers with ReLU and
//!   dropout between them.

use crate::error::Result;
use crate::numerics::{Rng, Scalar, Tape, Var};

use super::params::{Bound, Init, ModelParams};
use super::{linear, ForwardCtx, ModelConfig, RESCNN_KERNELS, SCNN_KERNEL};

const DLN_HIDDEN_LAYERS: usize = 3;

pub(super) fn init_dln<T: Scalar>(cfg: &ModelConfig, rng: &mut Rng) -> ModelParams<T> {
    let mut init = Init::new(rng);
    let mut width = cfg.n;
    for i in 0..DLN_HIDDEN_LAYERS {
        init.linear(&format!("dln.fc{i}"), width, cfg.dln_hidden);
        width = cfg.dln_hidden;
    }
    init.linear("dln.out", width, cfg.n);
    init.params
}

pub(super) fn forward_dln<T: Scalar>(tape: &mut Tape<T>, _cfg: &ModelConfig, bound: &Bound, y: Var) -> Result<Var> {
    let mut h = y;
    for i in 0..DLN_HIDDEN_LAYERS {
        let z = linear(tape, bound, &format!("dln.fc{i}"), h)?;
        h = tape.sigmoid(z)?;
    }
    linear(tape, bound, "dln.out", h)
}

pub(super) fn init_scnn<T: Scalar>(cfg: &ModelConfig, rng: &mut Rng) -> ModelParams<T> {
    let mut init = Init::new(rng);
    let c = cfg.scnn_channels;
    for i in 0..cfg.scnn_layers {
        let c_in = if i == 0 { 1 } else { c };
        init.conv(&format!("scnn.conv{i}"), c_in, c, SCNN_KERNEL);
        init.batch_norm(&format!("scnn.bn{i}"), c);
    }
    init.linear("scnn.head", c * cfg.n, cfg.n);
    init.params
}

#[allow(clippy::too_many_arguments)]
fn conv_bn_relu<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ModelParams<T>,
    bound: &Bound,
    conv: &str,
    bn: &str,
    x: Var,
    ctx: &mut ForwardCtx<'_, T>,
    relu: bool,
) -> Result<Var> {
    let w = bound.get(&format!("{conv}.w"))?;
    let b = bound.get(&format!("{conv}.b"))?;
    let h = tape.conv1d(x, w, b)?;
    let h = ctx.batch_norm(tape, params, bound, bn, h)?;
    if relu {
        tape.relu(h)
    } else {
        Ok(h)
    }
}

pub(super) fn forward_scnn<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    params: &ModelParams<T>,
    bound: &Bound,
    y: Var,
    ctx: &mut ForwardCtx<'_, T>,
) -> Result<Var> {
    let batch = tape.shape(y)[0];
    let mut h = tape.reshape(y, &[batch, 1, cfg.n])?;
    for i in 0..cfg.scnn_layers {
        h = conv_bn_relu(tape, params, bound, &format!("scnn.conv{i}"), &format!("scnn.bn{i}"), h, ctx, true)?;
    }
    let flat = tape.reshape(h, &[batch, cfg.scnn_channels * cfg.n])?;
    linear(tape, bound, "scnn.head", flat)
}

pub(super) fn init_rescnn<T: Scalar>(cfg: &ModelConfig, rng: &mut Rng) -> ModelParams<T> {
    let mut init = Init::new(rng);
    let c = cfg.rescnn_channels;
    for k in RESCNN_KERNELS {
        let p = format!("rescnn.k{k}");
        init.conv(&format!("{p}.stem"), 1, c, k);
        init.batch_norm(&format!("{p}.stem_bn"), c);
        init.conv(&format!("{p}.res1"), c, c, k);
        init.batch_norm(&format!("{p}.res1_bn"), c);
        init.conv(&format!("{p}.res2"), c, c, k);
        init.batch_norm(&format!("{p}.res2_bn"), c);
    }
    init.linear("rescnn.head", c * cfg.n, cfg.n);
    init.params
}

pub(super) fn forward_rescnn<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    params: &ModelParams<T>,
    bound: &Bound,
    y: Var,
    ctx: &mut ForwardCtx<'_, T>,
) -> Result<Var> {
    let batch = tape.shape(y)[0];
    let x = tape.reshape(y, &[batch, 1, cfg.n])?;
    let mut merged: Option<Var> = None;
    for k in RESCNN_KERNELS {
        let p = format!("rescnn.k{k}");
        let stem = conv_bn_relu(tape, params, bound, &format!("{p}.stem"), &format!("{p}.stem_bn"), x, ctx, true)?;
        let h = conv_bn_relu(tape, params, bound, &format!("{p}.res1"), &format!("{p}.res1_bn"), stem, ctx, true)?;
        let h = conv_bn_relu(tape, params, bound, &format!("{p}.res2"), &format!("{p}.res2_bn"), h, ctx, false)?;
        let h = tape.add(h, stem)?;
        let branch = tape.relu(h)?;
        merged = Some(match merged {
            Some(m) => tape.add(m, branch)?,
            None => branch,
        });
    }
    let merged = merged.expect("at least one branch");
    let flat = tape.reshape(merged, &[batch, cfg.rescnn_channels * cfg.n])?;
    linear(tape, bound, "rescnn.head", flat)
}

pub(super) fn init_rnn<T: Scalar>(cfg: &ModelConfig, rng: &mut Rng) -> ModelParams<T> {
    let mut init = Init::new(rng);
    let h = cfg.rnn_hidden;
    init.uniform("rnn.lstm.w_ih".into(), &[1, 4 * h], h);
    init.uniform("rnn.lstm.w_hh".into(), &[h, 4 * h], h);
    init.constant("rnn.lstm.b".into(), &[4 * h], 0.0);
    init.linear("rnn.fc0", cfg.n * h, cfg.rnn_fc);
    init.linear("rnn.fc1", cfg.rnn_fc, cfg.rnn_fc);
    init.linear("rnn.fc2", cfg.rnn_fc, cfg.n);
    init.params
}

/// LSTM with gate order (input, forget, cell, output), one input feature per
/// time step, zero initial state.
fn lstm<T: Scalar>(tape: &mut Tape<T>, cfg: &ModelConfig, bound: &Bound, y: Var) -> Result<Var> {
    let hd = cfg.rnn_hidden;
    let w_ih = bound.get("rnn.lstm.w_ih")?;
    let w_hh = bound.get("rnn.lstm.w_hh")?;
    let bias = bound.get("rnn.lstm.b")?;
    let mut h: Option<Var> = None;
    let mut c: Option<Var> = None;
    let mut outputs = Vec::with_capacity(cfg.n);
    for t in 0..cfg.n {
        let xt = tape.slice_cols(y, t, 1)?;
        let mut z = tape.matmul(xt, w_ih)?;
        if let Some(hp) = h {
            let rec = tape.matmul(hp, w_hh)?;
            z = tape.add(z, rec)?;
        }
        let z = tape.add_broadcast(z, bias)?;
        let zi = tape.slice_cols(z, 0, hd)?;
        let i = tape.sigmoid(zi)?;
        let zf = tape.slice_cols(z, hd, hd)?;
        let f = tape.sigmoid(zf)?;
        let zg = tape.slice_cols(z, 2 * hd, hd)?;
        let g = tape.tanh(zg)?;
        let zo = tape.slice_cols(z, 3 * hd, hd)?;
        let o = tape.sigmoid(zo)?;
        let ig = tape.mul(i, g)?;
        let cn = match c {
            Some(cp) => {
                let fc = tape.mul(f, cp)?;
                tape.add(fc, ig)?
            }
            None => ig,
        };
        let tc = tape.tanh(cn)?;
        let hn = tape.mul(o, tc)?;
        outputs.push(hn);
        h = Some(hn);
        c = Some(cn);
    }
    tape.concat_cols(&outputs)
}

pub(super) fn forward_rnn<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    bound: &Bound,
    y: Var,
    ctx: &mut ForwardCtx<'_, T>,
) -> Result<Var> {
    let seq = lstm(tape, cfg, bound, y)?;
    let mut h = seq;
    for i in 0..2 {
        let z = linear(tape, bound, &format!("rnn.fc{i}"), h)?;
        let z = tape.relu(z)?;
        h = ctx.dropout(tape, z, cfg.dropout_p)?;
    }
    linear(tape, bound, "rnn.fc2", h)
}
