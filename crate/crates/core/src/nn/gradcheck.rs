use crate::error::{Error, Result};

pub const GRAD_CHECK_EPS: f64 = 1e-5;

/// Largest relative error between the analytic gradient returned by `f` and
/// central finite differences with step [`GRAD_CHECK_EPS`].
///
/// `f` maps a flat parameter vector to `(value, gradient)`. Per coordinate the
/// error is `|a - n| / max(|a|, |n|, 1e-6)`, so coordinates whose gradient is
/// numerically zero are compared on an absolute 1e-6 scale.
pub fn grad_check<F>(mut f: F, params: &[f64]) -> Result<f64>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (value, analytic) = f(params);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("objective {value} at base point")));
    }
    if analytic.len() != params.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries for {} params",
            analytic.len(),
            params.len()
        )));
    }
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..p.len() {
        let orig = p[k];
        p[k] = orig + GRAD_CHECK_EPS;
        let (fp, _) = f(&p);
        p[k] = orig - GRAD_CHECK_EPS;
        let (fm, _) = f(&p);
        p[k] = orig;
        let numeric = (fp - fm) / (2.0 * GRAD_CHECK_EPS);
        let a = analytic[k];
        if !numeric.is_finite() || !a.is_finite() {
            return Err(Error::NonFinite(format!(
                "coordinate {k}: analytic {a}, numeric {numeric}"
            )));
        }
        let denom = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let w = [0.3, -1.7, 2.5, 0.01, 4.0];
        let err = grad_check(
            |p| {
                (
                    p.iter().map(|x| x * x).sum(),
                    p.iter().map(|x| 2.0 * x).collect(),
                )
            },
            &w,
        )
        .unwrap();
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn detects_wrong_gradient() {
        let err = grad_check(|p| (p[0] * p[0], vec![p[0]]), &[1.0]).unwrap();
        assert!(err > 0.4);
    }

    #[test]
    fn non_finite_is_an_error() {
        assert!(grad_check(|p| (p[0].ln(), vec![1.0 / p[0]]), &[-1.0]).is_err());
    }
}
