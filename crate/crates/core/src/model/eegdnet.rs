//! Segment transformer: an epoch `[N]` is reshaped to `[k × q]`, a learnable
//! position embedding is added, and `depths` post-norm encoder blocks run
//! over the `k` segments before the result is flattened back to `[N]`.

use crate::error::{Error, Result};
use crate::numerics::{Rng, Scalar, Tape, Tensor, Var, LAYER_NORM_EPS};

use super::params::{Bound, Init, ModelParams};
use super::{linear, ForwardCtx, ModelConfig};

/// Row `i` of the result holds samples `i·q .. (i+1)·q`.
pub fn segment<T: Scalar>(signal: &Tensor<T>, k: usize, q: usize) -> Result<Tensor<T>> {
    let n = signal.len();
    let is_row = matches!(signal.shape(), [_] | [1, _]);
    if !is_row || k * q != n {
        return Err(Error::Dimension(format!(
            "cannot segment {:?} into {k} × {q}",
            signal.shape()
        )));
    }
    signal.clone().reshape(vec![k, q])
}

/// Inverse of [`segment`]: `[k × q]` back to `[1 × N]`.
pub fn reassemble<T: Scalar>(segments: &Tensor<T>) -> Result<Tensor<T>> {
    let n = segments.len();
    segments.clone().reshape(vec![1, n])
}

pub fn add_position_embedding<T: Scalar>(tape: &mut Tape<T>, segments: Var, pos: Var) -> Result<Var> {
    tape.add_broadcast(segments, pos)
}

pub struct AttentionOut {
    pub output: Var,
    /// Softmax weights per head, each `[B × k × k]`.
    pub weights: Vec<Var>,
}

pub struct EncoderBlockOut {
    pub attention: Var,
    pub norm1: Var,
    pub feed_forward: Var,
    pub norm2: Var,
    pub attention_weights: Vec<Var>,
}

/// Returns `(batch, k, q)` for a `[k × q]` or `[B × k × q]` input.
fn seg_dims<T: Scalar>(tape: &Tape<T>, s: Var) -> Result<(usize, usize, usize)> {
    match *tape.shape(s) {
        [k, q] => Ok((1, k, q)),
        [b, k, q] => Ok((b, k, q)),
        ref other => Err(Error::Dimension(format!(
            "segments must be [k, q] or [B, k, q], got {other:?}"
        ))),
    }
}

/// Multi-head self-attention across segments. Each head projects to the full
/// segment width `q`; heads are concatenated and projected back to `q`.
pub fn multi_head_attention<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &Bound,
    prefix: &str,
    s: Var,
    heads: usize,
) -> Result<AttentionOut> {
    let (b, k, q) = seg_dims(tape, s)?;
    let out_shape = tape.shape(s).to_vec();
    let rows = tape.reshape(s, &[b * k, q])?;
    let scale = 1.0 / (q as f64).sqrt();
    let mut per_head = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let hp = format!("{prefix}.head{h}");
        let project = |tape: &mut Tape<T>, which: &str| -> Result<Var> {
            let w = bound.get(&format!("{hp}.w{which}"))?;
            let bias = bound.get(&format!("{hp}.b{which}"))?;
            let y = tape.matmul(rows, w)?;
            let y = tape.add_broadcast(y, bias)?;
            tape.reshape(y, &[b, k, q])
        };
        let qh = project(tape, "q")?;
        let kh = project(tape, "k")?;
        let vh = project(tape, "v")?;
        let scores = tape.batch_matmul(qh, kh, true)?;
        let scores = tape.scale(scores, scale)?;
        let attn = tape.softmax(scores, 2)?;
        let mixed = tape.batch_matmul(attn, vh, false)?;
        per_head.push(tape.reshape(mixed, &[b * k, q])?);
        weights.push(attn);
    }
    let cat = tape.concat_cols(&per_head)?;
    let out = linear(tape, bound, &format!("{prefix}.out"), cat)?;
    Ok(AttentionOut {
        output: tape.reshape(out, &out_shape)?,
        weights,
    })
}

/// Per-segment affine `q → ff_hidden`, PReLU, dropout, affine `ff_hidden → q`.
pub fn feed_forward<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &Bound,
    prefix: &str,
    s: Var,
    dropout_p: f64,
    ctx: &mut ForwardCtx<'_, T>,
) -> Result<Var> {
    let (b, k, q) = seg_dims(tape, s)?;
    let out_shape = tape.shape(s).to_vec();
    let rows = tape.reshape(s, &[b * k, q])?;
    let h = linear(tape, bound, &format!("{prefix}.fc1"), rows)?;
    let h = tape.prelu(h, bound.get(&format!("{prefix}.prelu"))?)?;
    let h = ctx.dropout(tape, h, dropout_p)?;
    let y = linear(tape, bound, &format!("{prefix}.fc2"), h)?;
    tape.reshape(y, &out_shape)
}

/// `u = LN(s + MHA(s))`, `out = LN(u + FF(u))`.
pub fn encoder_block<T: Scalar>(
    tape: &mut Tape<T>,
    bound: &Bound,
    prefix: &str,
    s: Var,
    cfg: &ModelConfig,
    ctx: &mut ForwardCtx<'_, T>,
) -> Result<EncoderBlockOut> {
    let attn = multi_head_attention(tape, bound, &format!("{prefix}.attn"), s, cfg.heads)?;
    let res = tape.add(s, attn.output)?;
    let norm1 = tape.layer_norm(
        res,
        bound.get(&format!("{prefix}.norm1.gamma"))?,
        bound.get(&format!("{prefix}.norm1.beta"))?,
        LAYER_NORM_EPS,
    )?;
    let ff = feed_forward(tape, bound, &format!("{prefix}.ff"), norm1, cfg.dropout_p, ctx)?;
    let res = tape.add(norm1, ff)?;
    let norm2 = tape.layer_norm(
        res,
        bound.get(&format!("{prefix}.norm2.gamma"))?,
        bound.get(&format!("{prefix}.norm2.beta"))?,
        LAYER_NORM_EPS,
    )?;
    Ok(EncoderBlockOut {
        attention: attn.output,
        norm1,
        feed_forward: ff,
        norm2,
        attention_weights: attn.weights,
    })
}

pub(crate) fn block_prefix(d: usize) -> String {
    format!("block{d}")
}

pub(super) fn init<T: Scalar>(cfg: &ModelConfig, rng: &mut Rng) -> ModelParams<T> {
    let (k, q, f) = (cfg.k, cfg.q, cfg.ff_hidden);
    let mut init = Init::new(rng);
    init.constant("pos_embedding".into(), &[k, q], 0.0);
    for d in 0..cfg.depths {
        let p = block_prefix(d);
        for h in 0..cfg.heads {
            for which in ["q", "k", "v"] {
                init.uniform(format!("{p}.attn.head{h}.w{which}"), &[q, q], q);
                init.constant(format!("{p}.attn.head{h}.b{which}"), &[q], 0.0);
            }
        }
        init.linear(&format!("{p}.attn.out"), cfg.heads * q, q);
        init.constant(format!("{p}.norm1.gamma"), &[q], 1.0);
        init.constant(format!("{p}.norm1.beta"), &[q], 0.0);
        init.linear(&format!("{p}.ff.fc1"), q, f);
        init.constant(format!("{p}.ff.prelu"), &[1], 0.25);
        init.linear(&format!("{p}.ff.fc2"), f, q);
        init.constant(format!("{p}.norm2.gamma"), &[q], 1.0);
        init.constant(format!("{p}.norm2.beta"), &[q], 0.0);
    }
    init.params
}

pub(super) fn forward<T: Scalar>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    bound: &Bound,
    y: Var,
    ctx: &mut ForwardCtx<'_, T>,
) -> Result<Var> {
    let batch = tape.shape(y)[0];
    let segs = tape.reshape(y, &[batch, cfg.k, cfg.q])?;
    let mut s = add_position_embedding(tape, segs, bound.get("pos_embedding")?)?;
    for d in 0..cfg.depths {
        s = encoder_block(tape, bound, &block_prefix(d), s, cfg, ctx)?.norm2;
    }
    tape.reshape(s, &[batch, cfg.n])
}
