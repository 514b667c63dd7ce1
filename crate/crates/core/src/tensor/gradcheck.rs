use super::{Graph, Real, Tensor, Var};
use crate::error::TensorError;

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Clone, Copy, Debug, Default)]
pub struct GradCheckReport {
    /// `max |analytic − numeric| / max(‖analytic‖∞, ‖numeric‖∞)`, per input tensor, maximised.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

/// Check every element of every input. `f` must build a scalar-valued graph.
pub fn grad_check<T, F>(inputs: &[Tensor<T>], eps: f64, f: F) -> Result<GradCheckReport, TensorError>
where
    T: Real,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var, TensorError>,
{
    grad_check_subset(inputs, eps, usize::MAX, f)
}

/// Like [`grad_check`], but perturbs at most `max_per_input` evenly strided elements of each input.
pub fn grad_check_subset<T, F>(
    inputs: &[Tensor<T>],
    eps: f64,
    max_per_input: usize,
    f: F,
) -> Result<GradCheckReport, TensorError>
where
    T: Real,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |values: &[Tensor<T>]| -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let vars = values.iter().map(|t| g.param(t.clone())).collect::<Result<Vec<_>, _>>()?;
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item().as_f64())
    };

    let mut g = Graph::new();
    let vars = inputs.iter().map(|t| g.param(t.clone())).collect::<Result<Vec<_>, _>>()?;
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut report = GradCheckReport::default();
    let mut work: Vec<Tensor<T>> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[k], input.shape());
        let stride = (input.len() / max_per_input.max(1)).max(1);
        let mut numeric = Vec::new();
        let mut picked = Vec::new();
        for i in (0..input.len()).step_by(stride) {
            let orig = input.data()[i];
            work[k].data_mut()[i] = orig + T::from_f64(eps);
            let plus = eval(&work)?;
            work[k].data_mut()[i] = orig - T::from_f64(eps);
            let minus = eval(&work)?;
            work[k].data_mut()[i] = orig;
            numeric.push((plus - minus) / (2.0 * eps));
            picked.push(analytic.data()[i].as_f64());
        }
        let scale = numeric.iter().chain(&picked).fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, n) in picked.iter().zip(&numeric) {
            let abs = (a - n).abs();
            report.max_abs_error = report.max_abs_error.max(abs);
            if scale > 0.0 {
                report.max_rel_error = report.max_rel_error.max(abs / scale);
            }
        }
        report.checked += numeric.len();
    }
    Ok(report)
}
