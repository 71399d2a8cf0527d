use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Largest normwise relative error over the inputs:
    /// `max|analytic - numeric| / max(max|numeric|, 1e-12)`.
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub coords_checked: usize,
}

/// Compare reverse-mode gradients of the scalar `f` against central
/// differences with step `h`. At most `max_per_input` evenly spaced
/// coordinates of each input are probed (all when `None`).
pub fn gradient_check<F>(
    inputs: &[Tensor],
    h: f64,
    max_per_input: Option<usize>,
    f: F,
) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&tape, &vars)?;
        if loss.numel() != 1 {
            return Err(Error::shape("gradient check needs a scalar function"));
        }
        tape.backward(loss)?;
        vars.iter()
            .zip(inputs)
            .map(|(v, t)| v.grad().unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    };
    let eval = |vals: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.constant(t.clone())).collect();
        Ok(f(&tape, &vars)?.item())
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        coords_checked: 0,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let stride = match max_per_input {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        let mut max_num = 0.0f64;
        let mut max_diff = 0.0f64;
        for j in (0..n).step_by(stride) {
            let orig = input.data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            max_num = max_num.max(numeric.abs());
            max_diff = max_diff.max((numeric - analytic[i].data()[j]).abs());
            report.coords_checked += 1;
        }
        report.max_abs_err = report.max_abs_err.max(max_diff);
        report.max_rel_err = report.max_rel_err.max(max_diff / max_num.max(1e-12));
    }
    Ok(report)
}
