//! Central finite-difference gradient checking.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-5;

/// Relative error with the denominator floored at `1e-12`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

fn eval<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let v = g.value(out);
    if v.len() != 1 {
        return Err(Error::Shape(format!(
            "gradient check needs a scalar function, got shape {:?}",
            v.shape()
        )));
    }
    let y = v.item();
    if !y.is_finite() {
        return Err(Error::Numeric("non-finite function value".into()));
    }
    Ok(y)
}

/// Worst relative error between reverse-mode and central-difference
/// gradients over every coordinate of every input.
pub fn grad_check_multi<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    if g.value(out).len() != 1 {
        return Err(Error::Shape("gradient check needs a scalar function".into()));
    }
    g.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.len() {
            let orig = input.data()[i];
            probe[k].data_mut()[i] = orig + eps;
            let plus = eval(&f, &probe)?;
            probe[k].data_mut()[i] = orig - eps;
            let minus = eval(&f, &probe)?;
            probe[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[k].data()[i];
            if !a.is_finite() {
                return Err(Error::Numeric("non-finite analytic gradient".into()));
            }
            worst = worst.max(relative_error(a, numeric));
        }
    }
    Ok(worst)
}

pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    grad_check_multi(|g, vars| f(g, vars[0]), std::slice::from_ref(x), eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_exact() {
        let x = Tensor::from_fn(&[3, 4], |i| i as f64 * 0.3 - 1.0);
        let err = grad_check(|g, v| Ok(g.sum(v)), &x, DEFAULT_EPS).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn relu_away_from_kink() {
        let x = Tensor::new(&[4], vec![-1.0, 0.5, 0.01, 2.0]).unwrap();
        let err = grad_check(
            |g, v| {
                let r = g.relu(v);
                Ok(g.sum(r))
            },
            &x,
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn non_scalar_and_non_finite_are_errors() {
        let x = Tensor::zeros(&[2]);
        assert!(grad_check(|g, v| Ok(g.relu(v)), &x, DEFAULT_EPS).is_err());
        let y = Tensor::new(&[1], vec![f64::INFINITY]).unwrap();
        assert!(grad_check(|g, v| Ok(g.sum(v)), &y, DEFAULT_EPS).is_err());
    }
}
