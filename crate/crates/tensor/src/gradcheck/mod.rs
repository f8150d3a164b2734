//! Central finite-difference verification of recorded gradients.
//!
//! The checker perturbs every element of every input by ±h, re-evaluates the
//! (scalar-valued) function, and compares `(f(x+h) - f(x-h)) / 2h` against
//! the gradient produced by [`crate::Tensor::backward`]. Run it at `f64`;
//! f32 rounding drowns the signal.

use crate::error::Result;
use crate::tensor::Tensor;

/// Outcome of checking one op or module.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_err: f64,
    /// (input index, element index) where the worst error occurred.
    pub worst: Option<(usize, usize)>,
    pub tolerance: f64,
    pub elements_checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: max rel err {:.3e} over {} elements (tol {:.1e}) -> {}",
            self.name,
            self.max_rel_err,
            self.elements_checked,
            self.tolerance,
            if self.passed() { "ok" } else { "FAIL" }
        )
    }
}

/// Relative error with a floor so that near-zero pairs compare absolutely.
///
/// The floor matters: where the true gradient is zero, the central
/// difference measures rounding noise of order `eps * |f| / 2h` (~1e-9 for
/// deep f64 compositions at h = 1e-5). A 1e-3 floor keeps such elements from
/// drowning the report while still demanding ~1e-7 absolute agreement under
/// the 1e-4 tolerance.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

/// Checks `d f / d inputs` for a scalar-valued `f`.
///
/// Inputs must be `requires_grad` leaves; `f` must be a pure function of
/// their current data (it is re-invoked many times with perturbed values).
pub fn grad_check<F>(
    name: &str,
    f: F,
    inputs: &[Tensor<f64>],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    for t in inputs {
        t.zero_grad();
    }
    let out = f(inputs)?;
    out.backward()?;
    let analytic: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();
    for t in inputs {
        t.zero_grad();
    }

    let mut max_rel = 0.0f64;
    let mut worst = None;
    let mut checked = 0usize;

    for (ti, t) in inputs.iter().enumerate() {
        let base = t.to_vec();
        for ei in 0..base.len() {
            let mut bumped = base.clone();
            bumped[ei] = base[ei] + step;
            t.set_data(&bumped)?;
            let f_plus = f(inputs)?.item()?;

            bumped[ei] = base[ei] - step;
            t.set_data(&bumped)?;
            let f_minus = f(inputs)?.item()?;

            t.set_data(&base)?;

            let numeric = (f_plus - f_minus) / (2.0 * step);
            let err = rel_err(analytic[ti][ei], numeric);
            checked += 1;
            if err > max_rel {
                max_rel = err;
                worst = Some((ti, ei));
            }
        }
    }

    Ok(GradCheckReport {
        name: name.to_string(),
        max_rel_err: max_rel,
        worst,
        tolerance,
        elements_checked: checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_gradients_are_exact() {
        let x = Tensor::<f64>::param(&[2, 3], vec![0.3, -0.7, 1.2, 0.9, 0.1, -0.4]).unwrap();
        let w = Tensor::<f64>::param(&[2, 3], vec![0.5, 0.25, -0.5, 1.0, -0.75, 0.2]).unwrap();
        let b = Tensor::<f64>::param(&[2], vec![0.1, -0.2]).unwrap();
        let inputs = [x, w, b];
        let report = grad_check(
            "linear",
            |ins| ins[0].linear(&ins[1], Some(&ins[2]))?.sum_all(),
            &inputs,
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.passed(), "{}", report);
    }

    #[test]
    fn constant_function_has_zero_gradients() {
        let x = Tensor::<f64>::param(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let zero_w = Tensor::<f64>::param(&[1, 4], vec![0.0; 4]).unwrap();
        let inputs = [x, zero_w];
        let report = grad_check(
            "zero-weight linear",
            |ins| {
                ins[0]
                    .reshape(&[1, 4])?
                    .linear(&ins[1], None)?
                    .sum_all()
            },
            &inputs,
            1e-5,
            1e-9,
        )
        .unwrap();
        // f == 0 identically in x (weight is input 1, checked too: d f / d w = x)
        assert!(report.passed(), "{}", report);
    }

    #[test]
    fn detects_a_corrupted_backward() {
        // mul's true gradient is (b, a); pretend f = a*b but report via scale
        // with the wrong constant, then the checker must flag it.
        let a = Tensor::<f64>::param(&[1], vec![0.7]).unwrap();
        let inputs = [a];
        let report = grad_check(
            "deliberately-wrong",
            |ins| ins[0].scale(2.0)?.sum_all(), // true df/da = 2
            &inputs,
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.passed());

        // Now lie about the function: analytic path computes 2a, numeric sees 3a.
        let b = Tensor::<f64>::param(&[1], vec![0.7]).unwrap();
        let inputs = [b];
        let mut first = true;
        let cell = std::cell::Cell::new(first);
        first = false;
        let _ = first;
        let report = grad_check(
            "mismatched",
            move |ins| {
                // First call (analytic) uses scale 2, later calls use scale 3.
                let factor = if cell.get() { 2.0 } else { 3.0 };
                cell.set(false);
                ins[0].scale(factor)?.sum_all()
            },
            &inputs,
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(!report.passed());
    }
}
pub mod suite;
