//! Dense tensors, a reverse-mode autodiff tape and the seeded random stream
//! that every model and the optimizer run on.

mod gradcheck;
mod kernels;
mod rng;
mod scalar;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, ElementError, GradCheckOptions, GradCheckReport};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tape::{ChannelStats, CustomBackward, Tape, Var};
pub use tensor::Tensor;

/// Layer-norm epsilon used throughout the models.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn random(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        t(shape, &(0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect::<Vec<_>>())
    }

    fn opts() -> GradCheckOptions {
        GradCheckOptions::default()
    }

    #[test]
    fn matmul_identity_and_scalar() {
        let mut tape = Tape::new();
        let eye = tape.constant(t(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]));
        let b = tape.constant(t(&[3, 2], &[1.5, -2., 3., 4.25, -5., 6.]));
        let out = tape.matmul(eye, b).unwrap();
        assert_eq!(tape.data(out), tape.data(b));

        let a = tape.constant(t(&[1, 1], &[2.0]));
        let b = tape.constant(t(&[1, 1], &[3.0]));
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.data(out), &[6.0]);
    }

    #[test]
    fn matmul_bitwise_matches_triple_loop() {
        let mut rng = Rng::new(11);
        for (m, p, n) in [(5, 4, 3), (16, 16, 16), (1, 7, 9), (13, 2, 11)] {
            let (a, b) = (random(&mut rng, &[m, p]), random(&mut rng, &[p, n]));
            let mut want = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..p {
                        s += a.data()[i * p + k] * b.data()[k * n + j];
                    }
                    want[i * n + j] = s;
                }
            }
            let mut tape = Tape::new();
            let (av, bv) = (tape.constant(a), tape.constant(b));
            let out = tape.matmul(av, bv).unwrap();
            let got: Vec<u64> = tape.data(out).iter().map(|v| v.to_bits()).collect();
            let want: Vec<u64> = want.iter().map(|v| v.to_bits()).collect();
            assert_eq!(got, want, "{m}x{p}x{n}");
        }
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn softmax_closed_forms() {
        let mut tape = Tape::new();
        let v = tape.constant(t(&[2], &[0.0, 0.0]));
        let s = tape.softmax(v, 0).unwrap();
        assert_eq!(tape.data(s), &[0.5, 0.5]);

        let v = tape.constant(t(&[2], &[2f64.ln(), 0.0]));
        let s = tape.softmax(v, 0).unwrap();
        assert!((tape.data(s)[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((tape.data(s)[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_over_middle_axis() {
        let mut rng = Rng::new(3);
        let x = random(&mut rng, &[2, 3, 4]);
        let mut tape = Tape::new();
        let v = tape.constant(x);
        let s = tape.softmax(v, 1).unwrap();
        let d = tape.data(s);
        for o in 0..2 {
            for i in 0..4 {
                let sum: f64 = (0..3).map(|j| d[o * 12 + j * 4 + i]).sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
        assert!(tape.softmax(v, 3).is_err());
    }

    #[test]
    fn layer_norm_cases() {
        let mut tape = Tape::new();
        let ones = tape.constant(Tensor::full(&[4], 1.0));
        let zeros = tape.constant(Tensor::zeros(&[4]));
        let x = tape.constant(t(&[1, 4], &[3.0; 4]));
        let y = tape.layer_norm(x, ones, zeros, LAYER_NORM_EPS).unwrap();
        assert!(tape.data(y).iter().all(|&v| v == 0.0));

        let x = tape.constant(t(&[1, 4], &[1.0, -2.0, 7.5, 0.25]));
        let y = tape.layer_norm(x, ones, zeros, LAYER_NORM_EPS).unwrap();
        let d = tape.data(y);
        let mean: f64 = d.iter().sum::<f64>() / 4.0;
        let var: f64 = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4);

        let beta = tape.constant(t(&[4], &[0.1, 0.2, 0.3, 0.4]));
        let y = tape.layer_norm(x, zeros, beta, LAYER_NORM_EPS).unwrap();
        assert_eq!(tape.data(y), &[0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn prelu_cases() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[3], &[2.0, -2.0, 0.0]));
        let a = tape.constant(t(&[1], &[0.25]));
        let y = tape.prelu(x, a).unwrap();
        assert_eq!(tape.data(y), &[2.0, -0.5, 0.0]);

        let zero = tape.constant(t(&[1], &[0.0]));
        let y = tape.prelu(x, zero).unwrap();
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.data(y), tape.data(r));
    }

    #[test]
    fn dropout_modes() {
        let mut rng = Rng::new(5);
        let mut tape = Tape::new();
        let x = tape.constant(t(&[4], &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(tape.dropout(x, 0.0, &mut rng, true).unwrap(), x);
        assert_eq!(tape.dropout(x, 0.9, &mut rng, false).unwrap(), x);
        assert!(matches!(
            tape.dropout(x, 1.0, &mut rng, true),
            Err(Error::Parameter(_))
        ));

        let n = 1_000_000;
        let x = tape.constant(Tensor::full(&[n], 1.0));
        let y = tape.dropout(x, 0.5, &mut rng, true).unwrap();
        let mean = tape.data(y).iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert!(tape.data(y).iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn dropout_masks_reproducible() {
        let mask = |seed| {
            let mut rng = Rng::new(seed);
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::full(&[64], 1.0f32));
            let y = tape.dropout(x, 0.3, &mut rng, true).unwrap();
            tape.data(y).to_vec()
        };
        assert_eq!(mask(9), mask(9));
        assert_ne!(mask(9), mask(10));
    }

    #[test]
    fn mse_cases() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[1], &[0.0]));
        let b = tape.constant(t(&[1], &[2.0]));
        let l = tape.mse(a, b).unwrap();
        assert_eq!(tape.data(l), &[4.0]);
        let l = tape.mse(b, b).unwrap();
        assert_eq!(tape.data(l), &[0.0]);

        let mut rng = Rng::new(8);
        let (x, y) = (random(&mut rng, &[7, 3]), random(&mut rng, &[7, 3]));
        let want: f64 = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / 21.0;
        let (xv, yv) = (tape.constant(x), tape.constant(y));
        let l = tape.mse(xv, yv).unwrap();
        assert!((tape.data(l)[0] - want).abs() < 1e-12);
        let z = tape.constant(Tensor::zeros(&[3, 7]));
        assert!(tape.mse(xv, z).is_err());
    }

    #[test]
    fn backward_of_sum_is_ones_and_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[5], &[1.0, -2.0, 3.0, 0.5, 9.0]).with_grad());
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0; 5]);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0; 5]);
        tape.zero_grads();
        assert!(tape.grad(x).is_none());
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn backward_matches_hand_derivative() {
        // loss = mean((w * v)^2) => d/dw_i = 2 w_i v_i^2 / n
        let w = [0.5, -1.5, 2.0];
        let v = [1.0, 3.0, -0.5];
        let mut tape = Tape::new();
        let wv = tape.leaf(t(&[3], &w).with_grad());
        let vv = tape.constant(t(&[3], &v));
        let zero = tape.constant(Tensor::zeros(&[3]));
        let prod = tape.mul(wv, vv).unwrap();
        let l = tape.mse(prod, zero).unwrap();
        tape.backward(l).unwrap();
        let g = tape.grad(wv).unwrap();
        for i in 0..3 {
            let want = 2.0 * w[i] * v[i] * v[i] / 3.0;
            assert!((g[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_function_is_exact() {
        let mut rng = Rng::new(1);
        let inputs = vec![random(&mut rng, &[3, 4]), random(&mut rng, &[4, 2])];
        let b = random(&mut rng, &[3, 4]);
        let r = grad_check(
            |tape, v| {
                let bc = tape.constant(b.clone());
                let m = tape.mul(v[0], bc)?;
                let s = tape.scale(m, 3.0)?;
                tape.sum(s)
            },
            &inputs[..1],
            &opts(),
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    fn check(report: GradCheckReport) {
        assert!(report.passed(), "{report:?}");
        assert!(report.checked > 0);
    }

    #[test]
    fn every_op_passes_grad_check() {
        let mut rng = Rng::new(2024);
        let a = random(&mut rng, &[3, 4]);
        let b = random(&mut rng, &[4, 5]);
        let o = opts();
        let weights = random(&mut rng, &[3, 5]);
        let proj = move |tape: &mut Tape<f64>, v: Var| -> crate::Result<Var> {
            let w = tape.constant(weights.clone());
            let m = tape.mul(v, w)?;
            tape.sum(m)
        };

        check(grad_check(|tp, v| { let m = tp.matmul(v[0], v[1])?; proj(tp, m) }, &[a.clone(), b], &o).unwrap());

        let x3 = random(&mut rng, &[2, 3, 4]);
        let y3 = random(&mut rng, &[2, 4, 3]);
        let z3 = random(&mut rng, &[2, 5, 4]);
        let w3 = random(&mut rng, &[2, 3, 3]);
        let w35 = random(&mut rng, &[2, 3, 5]);
        check(grad_check(|tp, v| {
            let m = tp.batch_matmul(v[0], v[1], false)?;
            let w = tp.constant(w3.clone());
            let p = tp.mul(m, w)?;
            tp.sum(p)
        }, &[x3.clone(), y3], &o).unwrap());
        check(grad_check(|tp, v| {
            let m = tp.batch_matmul(v[0], v[1], true)?;
            let w = tp.constant(w35.clone());
            let p = tp.mul(m, w)?;
            tp.sum(p)
        }, &[x3.clone(), z3], &o).unwrap());

        let wsm = random(&mut rng, &[2, 3, 4]);
        for axis in 0..3 {
            let wsm = wsm.clone();
            check(grad_check(move |tp, v| {
                let s = tp.softmax(v[0], axis)?;
                let w = tp.constant(wsm.clone());
                let p = tp.mul(s, w)?;
                tp.sum(p)
            }, &[x3.clone()], &o).unwrap());
        }

        let gamma = random(&mut rng, &[4]);
        let beta = random(&mut rng, &[4]);
        let wln = random(&mut rng, &[3, 4]);
        check(grad_check(|tp, v| {
            let y = tp.layer_norm(v[0], v[1], v[2], LAYER_NORM_EPS)?;
            let w = tp.constant(wln.clone());
            let p = tp.mul(y, w)?;
            tp.sum(p)
        }, &[a.clone(), gamma, beta], &o).unwrap());

        let slope = t(&[1], &[0.3]);
        let margin = GradCheckOptions { kink_margin: 0.05, ..opts() };
        let wp = random(&mut rng, &[3, 4]);
        let a_away: Vec<f64> = a.data().iter().map(|&v| if v.abs() < 0.1 { v + 0.2 } else { v }).collect();
        check(grad_check(|tp, v| {
            let y = tp.prelu(v[0], v[1])?;
            let w = tp.constant(wp.clone());
            let p = tp.mul(y, w)?;
            tp.sum(p)
        }, &[t(&[3, 4], &a_away), slope], &margin).unwrap());

        for which in 0..3 {
            let wp = wp.clone();
            check(grad_check(move |tp, v| {
                let y = match which {
                    0 => tp.relu(v[0])?,
                    1 => tp.sigmoid(v[0])?,
                    _ => tp.tanh(v[0])?,
                };
                let w = tp.constant(wp.clone());
                let p = tp.mul(y, w)?;
                tp.sum(p)
            }, &[t(&[3, 4], &a_away)], &margin).unwrap());
        }

        let bias = random(&mut rng, &[4]);
        let other = random(&mut rng, &[3, 4]);
        check(grad_check(|tp, v| {
            let s = tp.add_broadcast(v[0], v[1])?;
            let s = tp.add(s, v[2])?;
            let s = tp.reshape(s, &[4, 3])?;
            let s = tp.reshape(s, &[3, 4])?;
            let s = tp.scale(s, -1.7)?;
            let s = tp.mul(s, v[2])?;
            tp.sum(s)
        }, &[a.clone(), bias, other.clone()], &o).unwrap());

        let wc = random(&mut rng, &[3, 6]);
        check(grad_check(|tp, v| {
            let l = tp.slice_cols(v[0], 1, 2)?;
            let r = tp.slice_cols(v[1], 0, 4)?;
            let cat = tp.concat_cols(&[l, r])?;
            let w = tp.constant(wc.clone());
            let p = tp.mul(cat, w)?;
            tp.sum(p)
        }, &[a.clone(), other.clone()], &o).unwrap());

        check(grad_check(|tp, v| tp.mse(v[0], v[1]), &[a.clone(), other.clone()], &o).unwrap());

        let xc = random(&mut rng, &[2, 3, 7]);
        let wk = random(&mut rng, &[4, 3, 3]);
        let bk = random(&mut rng, &[4]);
        let wout = random(&mut rng, &[2, 4, 7]);
        check(grad_check(|tp, v| {
            let y = tp.conv1d(v[0], v[1], v[2])?;
            let w = tp.constant(wout.clone());
            let p = tp.mul(y, w)?;
            tp.sum(p)
        }, &[xc.clone(), wk, bk], &o).unwrap());

        let g3 = random(&mut rng, &[3]);
        let b3 = random(&mut rng, &[3]);
        let wbn = random(&mut rng, &[2, 3, 7]);
        check(grad_check(|tp, v| {
            let (y, stats) = tp.batch_norm(v[0], v[1], v[2], 1e-5, None)?;
            assert!(stats.is_some());
            let w = tp.constant(wbn.clone());
            let p = tp.mul(y, w)?;
            tp.sum(p)
        }, &[xc.clone(), g3.clone(), b3.clone()], &o).unwrap());
        let rm = [0.1, -0.2, 0.3];
        let rv = [0.5, 1.5, 2.0];
        check(grad_check(|tp, v| {
            let (y, stats) = tp.batch_norm(v[0], v[1], v[2], 1e-5, Some((&rm, &rv)))?;
            assert!(stats.is_none());
            let w = tp.constant(wbn.clone());
            let p = tp.mul(y, w)?;
            tp.sum(p)
        }, &[xc, g3, b3], &o).unwrap());
    }

    #[test]
    fn dropout_with_fixed_mask_passes_grad_check() {
        let mut rng = Rng::new(4);
        let x = random(&mut rng, &[4, 4]);
        let r = grad_check(
            |tp, v| {
                let mut fixed = Rng::new(99);
                let d = tp.dropout(v[0], 0.4, &mut fixed, true)?;
                let s = tp.mul(d, d)?;
                tp.sum(s)
            },
            &[x],
            &opts(),
        )
        .unwrap();
        assert!(r.passed());
    }

    #[test]
    fn nondeterministic_function_is_rejected() {
        let counter = std::cell::Cell::new(0u64);
        let x = t(&[3], &[1.0, 2.0, 3.0]);
        let res = grad_check(
            |tp, v| {
                counter.set(counter.get() + 1);
                let mut rng = Rng::new(counter.get());
                let d = tp.dropout(v[0], 0.5, &mut rng, true)?;
                tp.sum(d)
            },
            &[x],
            &opts(),
        );
        assert!(matches!(res, Err(Error::Contract(_))));
    }

    #[test]
    fn corrupted_backward_is_caught() {
        let x = t(&[4], &[0.3, -1.2, 2.0, 0.7]);
        let r = grad_check(
            |tp, v| {
                let sq = tp.custom_unary(
                    v[0],
                    |x| x.iter().map(|v| v * v).collect(),
                    // wrong: should be 2 * x * g
                    Box::new(|x, _, g| x.iter().zip(g).map(|(x, g)| x * g).collect()),
                )?;
                tp.sum(sq)
            },
            &[x],
            &opts(),
        )
        .unwrap();
        assert!(!r.passed());
        assert!(r.worst.is_some());
    }

    #[test]
    fn non_finite_outputs_are_rejected() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[2], 1e200f64));
        assert!(matches!(tape.mul(x, x), Err(Error::NonFinite("mul"))));
    }
}
