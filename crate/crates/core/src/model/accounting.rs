//! Closed-form parameter and FLOP counts.
//!
//! FLOPs are for one forward pass on one epoch in eval mode. A multiply-add
//! counts as 2 FLOPs; bias adds, residual adds, activations, softmax and
//! normalization count 1 FLOP per output element. Dropout is free at
//! inference.

use super::{ModelConfig, ModelKind, RESCNN_KERNELS, SCNN_KERNEL};

/// Learnable scalars allocated by [`super::init_params`] for `cfg`.
pub fn count_params(cfg: &ModelConfig) -> usize {
    let n = cfg.n;
    let dense = |i: usize, o: usize| i * o + o;
    match cfg.kind {
        ModelKind::EegDnet => {
            let (q, f, h) = (cfg.q, cfg.ff_hidden, cfg.heads);
            let attention = h * 3 * dense(q, q) + dense(h * q, q);
            let norms = 2 * 2 * q;
            let ff = dense(q, f) + 1 + dense(f, q);
            cfg.k * q + cfg.depths * (attention + norms + ff)
        }
        ModelKind::Dln => {
            let w = cfg.dln_hidden;
            dense(n, w) + 2 * dense(w, w) + dense(w, n)
        }
        ModelKind::Scnn => {
            let c = cfg.scnn_channels;
            let conv = |ci: usize| c * ci * SCNN_KERNEL + c + 2 * c;
            conv(1) + (cfg.scnn_layers - 1) * conv(c) + dense(c * n, n)
        }
        ModelKind::ResCnn1d => {
            let c = cfg.rescnn_channels;
            let branches: usize = RESCNN_KERNELS
                .iter()
                .map(|&k| (c * k + 3 * c) + 2 * (c * c * k + 3 * c))
                .sum();
            branches + dense(c * n, n)
        }
        ModelKind::Rnn => {
            let (h, fc) = (cfg.rnn_hidden, cfg.rnn_fc);
            4 * h + 4 * h * h + 4 * h + dense(n * h, fc) + dense(fc, fc) + dense(fc, n)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlopBreakdown {
    /// Position embedding (transformer only).
    pub embedding: u64,
    /// All encoder blocks (transformer only).
    pub encoder: u64,
    /// Everything else, which for the baselines is the whole network.
    pub other: u64,
    pub total: u64,
}

fn dense_flops(rows: u64, i: u64, o: u64) -> u64 {
    2 * rows * i * o + rows * o
}

fn conv_flops(len: u64, ci: u64, co: u64, k: u64) -> u64 {
    2 * len * co * ci * k + len * co
}

pub fn flop_breakdown(cfg: &ModelConfig) -> FlopBreakdown {
    let n = cfg.n as u64;
    let (embedding, encoder, other) = match cfg.kind {
        ModelKind::EegDnet => {
            let (k, q, f, h) = (cfg.k as u64, cfg.q as u64, cfg.ff_hidden as u64, cfg.heads as u64);
            let per_head = 3 * dense_flops(k, q, q) // projections
                + 2 * k * k * q + k * k // scores and scaling
                + k * k // softmax
                + 2 * k * k * q; // weighted sum
            let attention = h * per_head + dense_flops(k, h * q, q);
            let ff = dense_flops(k, q, f) + k * f + dense_flops(k, f, q);
            let residual_norm = 2 * (k * q + k * q);
            (k * q, cfg.depths as u64 * (attention + ff + residual_norm), 0)
        }
        ModelKind::Dln => {
            let w = cfg.dln_hidden as u64;
            let hidden = dense_flops(1, n, w) + 2 * dense_flops(1, w, w) + 3 * w;
            (0, 0, hidden + dense_flops(1, w, n))
        }
        ModelKind::Scnn => {
            let c = cfg.scnn_channels as u64;
            let k = SCNN_KERNEL as u64;
            let bn_relu = 2 * n * c;
            let convs = conv_flops(n, 1, c, k) + (cfg.scnn_layers as u64 - 1) * conv_flops(n, c, c, k);
            let layers = convs + cfg.scnn_layers as u64 * bn_relu;
            (0, 0, layers + dense_flops(1, c * n, n))
        }
        ModelKind::ResCnn1d => {
            let c = cfg.rescnn_channels as u64;
            let map = n * c;
            let branches: u64 = RESCNN_KERNELS
                .iter()
                .map(|&k| {
                    let k = k as u64;
                    let stem = conv_flops(n, 1, c, k) + 2 * map;
                    let res1 = conv_flops(n, c, c, k) + 2 * map;
                    let res2 = conv_flops(n, c, c, k) + map;
                    stem + res1 + res2 + 2 * map // skip add, relu
                })
                .sum();
            let merge = (RESCNN_KERNELS.len() as u64 - 1) * map;
            (0, 0, branches + merge + dense_flops(1, c * n, n))
        }
        ModelKind::Rnn => {
            let (h, fc) = (cfg.rnn_hidden as u64, cfg.rnn_fc as u64);
            let g = 4 * h;
            // gates: input projection, bias, three sigmoids and a tanh,
            // i·g, tanh(c), o·tanh(c)
            let step = 2 * g + g + g + 3 * h;
            // the recurrent terms vanish at the first step (zero state)
            let recurrent = 2 * h * g + g + 2 * h;
            let lstm = n * step + (n - 1) * recurrent;
            let head = dense_flops(1, n * h, fc) + fc + dense_flops(1, fc, fc) + fc + dense_flops(1, fc, n);
            (0, 0, lstm + head)
        }
    };
    FlopBreakdown {
        embedding,
        encoder,
        other,
        total: embedding + encoder + other,
    }
}

pub fn count_flops(cfg: &ModelConfig) -> u64 {
    flop_breakdown(cfg).total
}
