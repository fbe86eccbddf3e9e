//! Central finite-difference verification of tape gradients (64-bit only).

use crate::error::{Error, Result};

use super::rng::Rng;
use super::tape::{Tape, Var};
use super::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    pub tol: f64,
    /// Denominator floor of the relative error, so that gradients that are
    /// both near zero compare absolutely.
    pub floor: f64,
    /// Check at most this many randomly chosen elements per input.
    pub max_per_input: Option<usize>,
    /// Skip elements whose magnitude is below this (keeps perturbations off
    /// kinks such as PReLU at zero).
    pub kink_margin: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tol: 1e-4,
            floor: 1e-3,
            max_per_input: None,
            kink_margin: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElementError {
    pub input: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest relative error seen for each input.
    pub per_input: Vec<f64>,
    pub max_rel_error: f64,
    pub worst: Option<ElementError>,
    pub checked: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tol
    }
}

fn eval<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<(Tape<f64>, Vec<Var>, Var)>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone().with_grad())).collect();
    let out = f(&mut tape, &vars)?;
    if tape.value(out).len() != 1 {
        return Err(Error::Contract("grad_check function must return a scalar".into()));
    }
    Ok((tape, vars, out))
}

/// Compares tape gradients of the scalar function `f` against central
/// differences for every (or a sampled subset of) input element.
///
/// `f` must be deterministic: it is evaluated twice at the base point and the
/// results must agree bitwise.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let (mut tape, vars, out) = eval(&f, inputs)?;
    let base = tape.data(out)[0];
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();
    drop(tape);

    let (again, _, out2) = eval(&f, inputs)?;
    if again.data(out2)[0].to_bits() != base.to_bits() {
        return Err(Error::Contract(
            "grad_check requires a deterministic function (disable dropout)".into(),
        ));
    }

    let mut rng = Rng::new(opts.seed);
    let mut report = GradCheckReport {
        per_input: vec![0.0; inputs.len()],
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        tol: opts.tol,
    };
    let mut probe = inputs.to_vec();
    for (ii, input) in inputs.iter().enumerate() {
        let mut elements: Vec<usize> = (0..input.len())
            .filter(|&e| input.data()[e].abs() >= opts.kink_margin)
            .collect();
        if let Some(k) = opts.max_per_input {
            if elements.len() > k {
                rng.shuffle(&mut elements);
                elements.truncate(k);
                elements.sort_unstable();
            }
        }
        for e in elements {
            let orig = input.data()[e];
            probe[ii].data_mut()[e] = orig + opts.step;
            let (t, _, o) = eval(&f, &probe)?;
            let plus = t.data(o)[0];
            probe[ii].data_mut()[e] = orig - opts.step;
            let (t, _, o) = eval(&f, &probe)?;
            let minus = t.data(o)[0];
            probe[ii].data_mut()[e] = orig;

            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic[ii][e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            report.checked += 1;
            if rel > report.per_input[ii] {
                report.per_input[ii] = rel;
            }
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some(ElementError {
                    input: ii,
                    element: e,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    Ok(report)
}
