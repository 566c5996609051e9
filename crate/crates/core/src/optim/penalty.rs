use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::tensor::Element;

/// `λ_g · Σ gates`. Gates lie in (0, 1), so the sum is their L1 norm.
/// Returns `None` when there is nothing to penalize.
pub fn gate_sparsity_penalty<T: Element>(
    tape: &mut Tape<T>,
    gates: &[Var],
    lambda: f64,
) -> Result<Option<Var>> {
    if lambda == 0.0 || gates.is_empty() {
        return Ok(None);
    }
    scaled_total(tape, gates, lambda, |tape, g| tape.sum(g))
}

/// `λ · Σ ‖W‖₂²` over the given weight tensors.
pub fn weight_decay_penalty<T: Element>(
    tape: &mut Tape<T>,
    weights: &[Var],
    lambda: f64,
) -> Result<Option<Var>> {
    if lambda == 0.0 || weights.is_empty() {
        return Ok(None);
    }
    scaled_total(tape, weights, lambda, |tape, w| tape.sum_squares(w))
}

fn scaled_total<T: Element>(
    tape: &mut Tape<T>,
    vars: &[Var],
    lambda: f64,
    reduce: impl Fn(&mut Tape<T>, Var) -> Result<Var>,
) -> Result<Option<Var>> {
    let mut total = reduce(tape, vars[0])?;
    for &v in &vars[1..] {
        let r = reduce(tape, v)?;
        total = tape.add(total, r)?;
    }
    Ok(Some(tape.scale(total, T::from_f64_lossy(lambda))?))
}
