//! Central finite differences, the independent oracle for every analytic
//! gradient in the crate.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every coordinate `i`.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor<f64>, h: f64) -> Result<Tensor<f64>>
where
    F: FnMut(&Tensor<f64>) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Contract(format!("step must be positive, got {h}")));
    }
    let mut point = x.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let orig = point[i];
        point[i] = orig + h;
        let plus = eval(&mut f, x.shape(), &point, i)?;
        point[i] = orig - h;
        let minus = eval(&mut f, x.shape(), &point, i)?;
        point[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    Tensor::new(x.shape(), grad)
}

/// Central difference along coordinate `index` only.
pub fn finite_diff_coordinate<F>(mut f: F, x: &Tensor<f64>, index: usize, h: f64) -> Result<f64>
where
    F: FnMut(&Tensor<f64>) -> Result<f64>,
{
    if index >= x.numel() {
        return Err(Error::Contract(format!(
            "coordinate {index} out of range for {} elements",
            x.numel()
        )));
    }
    let mut point = x.to_vec();
    let orig = point[index];
    point[index] = orig + h;
    let plus = eval(&mut f, x.shape(), &point, index)?;
    point[index] = orig - h;
    let minus = eval(&mut f, x.shape(), &point, index)?;
    Ok((plus - minus) / (2.0 * h))
}

fn eval<F>(f: &mut F, shape: &[usize], point: &[f64], i: usize) -> Result<f64>
where
    F: FnMut(&Tensor<f64>) -> Result<f64>,
{
    let v = f(&Tensor::new(shape, point.to_vec())?)?;
    if !v.is_finite() {
        return Err(Error::NonFinite(format!(
            "objective evaluated while perturbing coordinate {i}"
        )));
    }
    Ok(v)
}

/// Relative error with a unit floor on the denominator:
/// `|a − b| / max(|a|, |b|, 1)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn max_relative_error(a: &Tensor<f64>, b: &Tensor<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape("max_relative_error", a.shape(), b.shape()));
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| relative_error(x, y))
        .fold(0.0, f64::max))
}
