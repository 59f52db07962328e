use super::{Tape, Tensor, TensorError, Var};

/// Below this combined magnitude components are compared absolutely.
const ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Compares the tape gradient of the scalar function `f` at `x` against
/// central differences with step `eps`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<GradCheck, TensorError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let out = f(&mut tape, xv)?;
    let analytic = tape.backward(out)?.wrt(xv).into_data();

    let eval = |point: Tensor| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let v = tape.param(point);
        let out = f(&mut tape, v)?;
        Ok(tape.value(out).item())
    };

    let mut numeric = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        numeric.push((eval(plus)? - eval(minus)?) / (2.0 * eps));
    }

    let mut max_rel_error = 0.0;
    let mut worst_index = 0;
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let err = relative_error(a, n);
        if err > max_rel_error {
            max_rel_error = err;
            worst_index = i;
        }
    }
    Ok(GradCheck {
        max_rel_error,
        worst_index,
        analytic,
        numeric,
    })
}

pub(crate) fn relative_error(a: f64, n: f64) -> f64 {
    let diff = (a - n).abs();
    if a.abs() + n.abs() < ABS_FLOOR {
        diff
    } else {
        diff / a.abs().max(n.abs())
    }
}
