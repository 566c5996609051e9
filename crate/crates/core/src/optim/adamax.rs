use crate::error::{Error, Result};
use crate::layers::Param;
use crate::tensor::{Element, Tensor};

pub const ADAMAX_LR: f64 = 0.002;
pub const ADAMAX_BETA1: f64 = 0.9;
pub const ADAMAX_BETA2: f64 = 0.999;
pub const ADAMAX_EPS: f64 = 1e-8;

/// Adamax: Adam with an infinity-norm second moment.
///
/// ```text
/// m ← β₁m + (1−β₁)g
/// u ← max(β₂u, |g|)
/// θ ← θ − (α/(1−β₁ᵗ))·m/(u+ε)
/// ```
#[derive(Clone, Debug)]
pub struct AdamaxState<T: Element> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<T>>,
    u: Vec<Vec<T>>,
    t: u64,
}

impl<T: Element> AdamaxState<T> {
    /// Zero moments for parameters of the given shapes.
    pub fn new(shapes: &[&[usize]], lr: f64) -> Self {
        let zeros = || {
            shapes
                .iter()
                .map(|s| vec![T::zero(); s.iter().product()])
                .collect::<Vec<_>>()
        };
        AdamaxState {
            lr,
            beta1: ADAMAX_BETA1,
            beta2: ADAMAX_BETA2,
            eps: ADAMAX_EPS,
            m: zeros(),
            u: zeros(),
            t: 0,
        }
    }

    pub fn for_params(params: &[Param<T>], lr: f64) -> Self {
        let shapes: Vec<&[usize]> = params.iter().map(|p| p.value.shape()).collect();
        Self::new(&shapes, lr)
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, i: usize) -> &[T] {
        &self.m[i]
    }

    pub fn infinity_norm(&self, i: usize) -> &[T] {
        &self.u[i]
    }

    /// Applies one update. Nothing is modified when any gradient is
    /// non-finite or mis-shaped, or when an update would produce a
    /// non-finite parameter.
    pub fn step(&mut self, params: &mut [Param<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Contract(format!(
                "adamax state tracks {} parameters, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.value.shape() != g.shape() {
                return Err(Error::shape("adamax", p.value.shape(), g.shape()));
            }
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", p.name)));
            }
        }
        let t = self.t + 1;
        let b1 = T::from_f64_lossy(self.beta1);
        let b2 = T::from_f64_lossy(self.beta2);
        let one_minus_b1 = T::from_f64_lossy(1.0 - self.beta1);
        let eps = T::from_f64_lossy(self.eps);
        let step =
            T::from_f64_lossy(self.lr / (1.0 - self.beta1.powi(t.min(i32::MAX as u64) as i32)));
        let mut new_m = Vec::with_capacity(params.len());
        let mut new_u = Vec::with_capacity(params.len());
        let mut new_theta = Vec::with_capacity(params.len());
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let mut m = self.m[i].clone();
            let mut u = self.u[i].clone();
            let mut theta = p.value.to_vec();
            for (k, &gk) in g.data().iter().enumerate() {
                m[k] = b1 * m[k] + one_minus_b1 * gk;
                u[k] = (b2 * u[k]).max(gk.abs());
                theta[k] = theta[k] - step * m[k] / (u[k] + eps);
            }
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("updated value of {}", p.name)));
            }
            new_m.push(m);
            new_u.push(u);
            new_theta.push(theta);
        }
        for (p, theta) in params.iter_mut().zip(new_theta) {
            p.value = Tensor::new(p.value.shape(), theta)?;
        }
        self.m = new_m;
        self.u = new_u;
        self.t = t;
        Ok(())
    }
}
