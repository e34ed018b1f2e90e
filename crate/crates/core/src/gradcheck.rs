//! Central finite-difference gradient checking in `f64`.
//!
//! The numeric side only ever evaluates the forward pass on an inference
//! tape, so it shares no code with the vector-Jacobian products under test.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

/// Comparison of one input's analytic and numeric gradient.
#[derive(Clone, Debug)]
pub struct GradReport {
    pub name: String,
    pub rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, or the plain difference norm when both
/// gradients vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Checks at most this many evenly spaced elements per input.
    pub max_elements: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-4,
            max_elements: None,
        }
    }
}

/// Compares the tape gradient of the scalar `f(inputs)` with central
/// differences for every named input.
pub fn check_gradients<F>(
    inputs: &[(String, Tensor<f64>)],
    opts: GradCheckOptions,
    f: F,
) -> Result<Vec<GradReport>>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|(_, t)| tape.var(t.clone())).collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(&loss)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .map(|v| grads.get(v).expect("leaf requires grad"))
        .collect();

    let mut values: Vec<Tensor<f64>> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::inference();
        let vars: Vec<_> = values.iter().map(|t| tape.constant(t.clone())).collect();
        Ok(f(&tape, &vars)?.value().item())
    };

    let mut reports = Vec::with_capacity(inputs.len());
    for (i, (name, _)) in inputs.iter().enumerate() {
        let len = values[i].numel();
        let stride = opts
            .max_elements
            .map_or(1, |m| len.div_ceil(m.max(1)).max(1));
        let mut a = Vec::new();
        let mut num = Vec::new();
        for j in (0..len).step_by(stride) {
            let orig = values[i].data()[j];
            values[i].data_mut()[j] = orig + opts.step;
            let plus = eval(&values)?;
            values[i].data_mut()[j] = orig - opts.step;
            let minus = eval(&values)?;
            values[i].data_mut()[j] = orig;
            num.push((plus - minus) / (2.0 * opts.step));
            a.push(analytic[i].data()[j]);
        }
        let max_abs_err = a
            .iter()
            .zip(&num)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        reports.push(GradReport {
            name: name.clone(),
            rel_err: relative_error(&a, &num),
            max_abs_err,
            checked: a.len(),
        });
    }
    Ok(reports)
}

/// Worst relative error over a set of reports.
pub fn worst(reports: &[GradReport]) -> Option<&GradReport> {
    reports
        .iter()
        .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
}

/// Fixed random projection `Σ out ⊗ r` turning any output into a scalar with
/// a non-degenerate gradient.
pub fn project<'t>(out: &Var<'t, f64>, seed: u64) -> Result<Var<'t, f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let r = Tensor::from_fn(out.shape(), |_| rng.random_range(-1.0..1.0));
    Ok(out.mul(&out.tape().constant(r))?.sum_all())
}
