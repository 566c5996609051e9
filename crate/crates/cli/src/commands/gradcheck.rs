use anyhow::{Context, Result};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wig_core::activations::{
    wig_conv_on_tape, wig_dense_forward, wig_dense_jacobian, wig_dense_on_tape, WigDenseParams,
};
use wig_core::gradcheck::{
    finite_diff_coordinate, finite_diff_grad, max_relative_error, relative_error,
};
use wig_core::layers::{build_network, reference_denoiser, Dim, Mode, Network, NetworkSpec, Scale};
use wig_core::{Precision, Tape, Tensor, Var};

use crate::args::{GradCheckArgs, GradTarget};
use crate::CertificationFailure;

pub const TOLERANCE: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;
/// Coordinates sampled per parameter tensor of a full network.
const NETWORK_COORDS: usize = 8;
/// Side used for free spatial dimensions of a network input.
const NETWORK_SIDE: usize = 8;

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Shifts every element by `delta`; the hook behind `--inject-fault`.
fn corrupt(t: &Tensor<f64>, delta: f64) -> Tensor<f64> {
    t.map(|v| v + delta)
}

fn weighted_sum(tape: &mut Tape<f64>, y: Var, r: &Tensor<f64>) -> Result<Var> {
    let rv = tape.constant(r.clone());
    let p = tape.mul(y, rv)?;
    Ok(tape.sum(p)?)
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Dense unit: closed-form Jacobian, taped Jacobian and finite differences
/// pairwise, then the taped gate-parameter gradients.
fn dense_instance(rng: &mut ChaCha8Rng, fault: bool) -> Result<f64> {
    let n = rng.random_range(2..=6);
    let x = uniform(&[n], -2.0, 2.0, rng);
    let w = uniform(&[n, n], -2.0, 2.0, rng);
    let b = uniform(&[n], -2.0, 2.0, rng);
    let p = WigDenseParams::new(w.clone(), b.clone())?;

    let mut closed = wig_dense_jacobian(&x, &p)?;
    if fault {
        closed = corrupt(&closed, 1e-3);
    }
    let mut taped = Vec::with_capacity(n * n);
    let mut numeric = Vec::with_capacity(n * n);
    for i in 0..n {
        let e = Tensor::from_fn(&[1, n], |j| if j == i { 1.0 } else { 0.0 });
        let mut tape = Tape::new();
        let xv = tape.leaf(x.reshape(&[1, n])?);
        let (wv, bv) = (tape.constant(w.clone()), tape.constant(b.clone()));
        let out = wig_dense_on_tape(&mut tape, xv, wv, bv)?;
        let s = weighted_sum(&mut tape, out.output, &e)?;
        taped.extend(tape.backward(s)?.wrt(xv)?.to_vec());
        let row = finite_diff_grad(|v| Ok(wig_dense_forward(v, &p)?.data()[i]), &x, FD_STEP)?;
        numeric.extend(row.to_vec());
    }
    let taped = Tensor::new(&[n, n], taped)?;
    let numeric = Tensor::new(&[n, n], numeric)?;
    let mut worst = max_relative_error(&closed, &numeric)?
        .max(max_relative_error(&closed, &taped)?)
        .max(max_relative_error(&taped, &numeric)?);

    let r = uniform(&[1, n], -1.0, 1.0, rng);
    let mut tape = Tape::new();
    let xv = tape.constant(x.reshape(&[1, n])?);
    let (wv, bv) = (tape.leaf(w.clone()), tape.leaf(b.clone()));
    let out = wig_dense_on_tape(&mut tape, xv, wv, bv)?;
    let s = weighted_sum(&mut tape, out.output, &r)?;
    let grads = tape.backward(s)?;
    let objective = |w: &Tensor<f64>, b: &Tensor<f64>| -> wig_core::Result<f64> {
        let p = WigDenseParams::new(w.clone(), b.clone())?;
        Ok(dot(&wig_dense_forward(&x.reshape(&[1, n])?, &p)?, &r))
    };
    let fw = finite_diff_grad(|v| objective(v, &b), &w, FD_STEP)?;
    let fb = finite_diff_grad(|v| objective(&w, v), &b, FD_STEP)?;
    worst = worst
        .max(max_relative_error(&grads.wrt(wv)?, &fw)?)
        .max(max_relative_error(&grads.wrt(bv)?, &fb)?);
    Ok(worst)
}

/// Convolutional unit: taped gradients of `Σ r ⊙ f` with respect to the
/// input, gate kernel and gate bias.
fn conv_instance(rng: &mut ChaCha8Rng, fault: bool) -> Result<f64> {
    let batch = rng.random_range(1..=2);
    let c = rng.random_range(1..=3);
    let (h, w) = (rng.random_range(3..=6), rng.random_range(3..=6));
    let k = if rng.random_bool(0.5) { 1 } else { 3 };
    let x = uniform(&[batch, c, h, w], -2.0, 2.0, rng);
    let kernel = uniform(&[c, c, k, k], -1.0, 1.0, rng);
    let bias = uniform(&[c], -1.0, 1.0, rng);
    let r = uniform(&[batch, c, h, w], -1.0, 1.0, rng);

    let objective =
        |x: &Tensor<f64>, kernel: &Tensor<f64>, bias: &Tensor<f64>| -> wig_core::Result<f64> {
            let mut tape = Tape::new();
            let (xv, kv, bv) = (
                tape.constant(x.clone()),
                tape.constant(kernel.clone()),
                tape.constant(bias.clone()),
            );
            let out = wig_conv_on_tape(&mut tape, xv, kv, bv)?;
            Ok(dot(tape.value(out.output)?, &r))
        };
    let mut tape = Tape::new();
    let (xv, kv, bv) = (
        tape.leaf(x.clone()),
        tape.leaf(kernel.clone()),
        tape.leaf(bias.clone()),
    );
    let out = wig_conv_on_tape(&mut tape, xv, kv, bv)?;
    let s = weighted_sum(&mut tape, out.output, &r)?;
    let grads = tape.backward(s)?;
    let mut gx = grads.wrt(xv)?;
    if fault {
        gx = corrupt(&gx, 1e-3);
    }
    let fx = finite_diff_grad(|v| objective(v, &kernel, &bias), &x, FD_STEP)?;
    let fk = finite_diff_grad(|v| objective(&x, v, &bias), &kernel, FD_STEP)?;
    let fb = finite_diff_grad(|v| objective(&x, &kernel, v), &bias, FD_STEP)?;
    Ok(max_relative_error(&gx, &fx)?
        .max(max_relative_error(&grads.wrt(kv)?, &fk)?)
        .max(max_relative_error(&grads.wrt(bv)?, &fb)?))
}

fn concrete_input_shape(spec: &NetworkSpec) -> Vec<usize> {
    let mut shape = vec![1];
    shape.extend(spec.input_shape.iter().map(|d| match d {
        Dim::Known(n) => *n,
        Dim::Free(_) => NETWORK_SIDE,
    }));
    shape
}

/// Whole network with perturbed parameters: taped gradients against central
/// differences on a random sample of coordinates of every parameter tensor
/// and of the input.
fn network_instance(
    spec: &NetworkSpec,
    seed: u64,
    rng: &mut ChaCha8Rng,
    fault: bool,
) -> Result<f64> {
    let mut net: Network<f64> = build_network(spec, seed)?;
    let perturbed = net
        .param_values()
        .into_iter()
        .map(|t| {
            let noise = uniform(t.shape(), -0.2, 0.2, rng);
            Ok(wig_core::tensor::add(&t, &noise)?)
        })
        .collect::<Result<Vec<_>>>()?;
    net.set_param_values(perturbed.clone())?;
    let x = uniform(&concrete_input_shape(spec), 0.0, 1.0, rng);
    let out_shape = net.predict(&x)?.shape().to_vec();
    let r = uniform(&out_shape, -1.0, 1.0, rng);

    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let fwd = net.forward_on_tape(&mut tape, xv, &mut Mode::Eval, true)?;
    let s = weighted_sum(&mut tape, fwd.output, &r)?;
    let grads = tape.backward(s)?;

    let mut worst = 0.0f64;
    let mut probe = net.clone();
    for (i, value) in perturbed.iter().enumerate() {
        let mut analytic = grads.wrt(fwd.params[i])?;
        if fault && i == 0 {
            analytic = corrupt(&analytic, 1e-3);
        }
        for idx in sample(rng, value.numel(), NETWORK_COORDS.min(value.numel())) {
            let numeric = finite_diff_coordinate(
                |v| {
                    let mut values = perturbed.clone();
                    values[i] = v.clone();
                    probe.set_param_values(values)?;
                    Ok(dot(&probe.predict(&x)?, &r))
                },
                value,
                idx,
                FD_STEP,
            )?;
            worst = worst.max(relative_error(analytic.data()[idx], numeric));
        }
    }
    let gx = grads.wrt(xv)?;
    for idx in sample(rng, x.numel(), NETWORK_COORDS.min(x.numel())) {
        let numeric = finite_diff_coordinate(|v| Ok(dot(&net.predict(v)?, &r)), &x, idx, FD_STEP)?;
        worst = worst.max(relative_error(gx.data()[idx], numeric));
    }
    Ok(worst)
}

fn network_spec(args: &GradCheckArgs) -> Result<NetworkSpec> {
    let spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            text.parse::<NetworkSpec>()
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => reference_denoiser(Scale::Desk, wig_core::activations::ActivationKind::Wig),
    };
    Ok(spec.with_precision(Precision::F64))
}

/// Worst relative error over `instances` seeded instances of `target`.
pub fn certify(args: &GradCheckArgs) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let spec = match args.target {
        GradTarget::Network => Some(network_spec(args)?),
        _ => None,
    };
    let mut worst = 0.0f64;
    for k in 0..args.instances {
        let err = match (args.target, &spec) {
            (GradTarget::WigDense, _) => dense_instance(&mut rng, args.inject_fault)?,
            (GradTarget::WigConv, _) => conv_instance(&mut rng, args.inject_fault)?,
            (GradTarget::Network, Some(spec)) => network_instance(
                spec,
                args.seed.wrapping_add(k as u64),
                &mut rng,
                args.inject_fault,
            )?,
            (GradTarget::Network, None) => unreachable!("spec is resolved for the network target"),
        };
        log::info!("instance {k}: max relative error {err:e}");
        worst = worst.max(err);
    }
    Ok(worst)
}

pub fn run(args: &GradCheckArgs) -> Result<()> {
    let name = match args.target {
        GradTarget::WigDense => "wig-dense",
        GradTarget::WigConv => "wig-conv",
        GradTarget::Network => "network",
    };
    let worst = certify(args)?;
    let verdict = if worst < TOLERANCE { "pass" } else { "fail" };
    println!(
        "grad-check {name}: {} instances, max relative error {worst:e} (tolerance {TOLERANCE:e}): {verdict}",
        args.instances
    );
    if worst < TOLERANCE {
        Ok(())
    } else {
        Err(
            CertificationFailure(format!("{name} gradient error {worst:e} >= {TOLERANCE:e}"))
                .into(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(target: GradTarget, fault: bool) -> GradCheckArgs {
        GradCheckArgs {
            target,
            seed: 3,
            instances: 4,
            spec: None,
            inject_fault: fault,
        }
    }

    #[test]
    fn dense_and_conv_pass() {
        assert!(certify(&args(GradTarget::WigDense, false)).unwrap() < TOLERANCE);
        assert!(certify(&args(GradTarget::WigConv, false)).unwrap() < TOLERANCE);
    }

    #[test]
    fn injected_fault_is_caught() {
        for t in [GradTarget::WigDense, GradTarget::WigConv] {
            assert!(certify(&args(t, true)).unwrap() >= TOLERANCE);
        }
        let mut a = args(GradTarget::Network, true);
        a.instances = 1;
        assert!(certify(&a).unwrap() >= TOLERANCE);
    }
}
