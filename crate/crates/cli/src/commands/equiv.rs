use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wig_core::activations::{
    baseline_forward, fuse_reparameterize, fused_forward, scalar_wig, unfused_forward,
    wig_dense_forward, BaselineActivation, WigDenseParams,
};
use wig_core::Tensor;

use crate::args::EquivArgs;
use crate::CertificationFailure;

/// Random points of the special-case comparisons, as `[ROWS, FEATURES]`.
const ROWS: usize = 100;
const FEATURES: usize = 10;
const GRID_STEP: f64 = 1e-5;
const RANGE: (f64, f64) = (-6.0, 6.0);
pub const SWISH_SCALES: [f64; 6] = [0.5, 1.0, 2.0, 5.0, 10.0, 50.0];
pub const RELU_SCALES: [f64; 3] = [10.0, 50.0, 200.0];
const RELU_CONSTANT: f64 = 0.28;
const NEGATIVE_SCALE: f64 = -50.0;
const NEGATIVE_BOUND: f64 = 0.006;
const FUSION_SIZE: usize = 8;
const FUSION_INPUTS: usize = 100;
const EXACT_BOUND: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// `value < bound` when set, `value <= bound` otherwise.
    pub strict: bool,
}

impl Check {
    pub fn passed(&self) -> bool {
        if self.strict {
            self.value < self.bound
        } else {
            self.value <= self.bound
        }
    }

    pub fn line(&self) -> String {
        let op = if self.strict { "<" } else { "<=" };
        let verdict = if self.passed() { "pass" } else { "fail" };
        format!(
            "{}: {:e} {op} {:e}: {verdict}",
            self.name, self.value, self.bound
        )
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn grid() -> impl Iterator<Item = f64> {
    let n = ((RANGE.1 - RANGE.0) / GRID_STEP).round() as usize;
    (0..=n).map(|i| RANGE.0 + i as f64 * GRID_STEP)
}

fn sup_distance(w: f64, target: impl Fn(f64) -> f64) -> f64 {
    grid()
        .map(|x| (scalar_wig(x, w, 0.0) - target(x)).abs())
        .fold(0.0, f64::max)
}

fn scaled_identity_unit(s: f64) -> Result<WigDenseParams<f64>> {
    let w = Tensor::from_fn(&[FEATURES, FEATURES], |i| {
        if i / FEATURES == i % FEATURES {
            s
        } else {
            0.0
        }
    });
    Ok(WigDenseParams::new(w, Tensor::zeros(&[FEATURES]))?)
}

/// Dense gate unit with `W_g = sI, b_g = 0` against its closed-form special
/// cases, the ReLU limits on a fine grid, and the fused two-matrix form.
pub fn checks(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::from_fn(&[ROWS, FEATURES], |_| rng.random_range(RANGE.0..=RANGE.1));
    let mut out = Vec::new();

    for s in SWISH_SCALES {
        let wig = wig_dense_forward(&x, &scaled_identity_unit(s)?)?;
        let swish = baseline_forward(&BaselineActivation::Swish { beta: s }, &x)?;
        out.push(Check {
            name: format!("wig(s={s}) vs swish(beta={s})"),
            value: max_abs_diff(wig.data(), swish.data()),
            bound: EXACT_BOUND,
            strict: true,
        });
    }
    let wig = wig_dense_forward(&x, &scaled_identity_unit(1.0)?)?;
    let sil = baseline_forward(&BaselineActivation::Sil, &x)?;
    out.push(Check {
        name: "wig(s=1) vs sil".into(),
        value: max_abs_diff(wig.data(), sil.data()),
        bound: EXACT_BOUND,
        strict: true,
    });
    let wig = wig_dense_forward(&x, &scaled_identity_unit(0.0)?)?;
    let half: Vec<f64> = x.data().iter().map(|v| v / 2.0).collect();
    out.push(Check {
        name: "wig(s=0) vs x/2".into(),
        value: max_abs_diff(wig.data(), &half),
        bound: 0.0,
        strict: false,
    });

    for s in RELU_SCALES {
        out.push(Check {
            name: format!("sup |wig(s={s}) - relu| on [-6,6]"),
            value: sup_distance(s, |x| x.max(0.0)),
            bound: RELU_CONSTANT / s,
            strict: false,
        });
    }
    out.push(Check {
        name: format!("sup |wig(s={NEGATIVE_SCALE}) - min(x,0)| on [-6,6]"),
        value: sup_distance(NEGATIVE_SCALE, |x| x.min(0.0)),
        bound: NEGATIVE_BOUND,
        strict: false,
    });

    let normal = |rng: &mut ChaCha8Rng, shape: &[usize]| {
        Tensor::from_fn(shape, |_| rng.sample::<f64, _>(StandardNormal))
    };
    let n = FUSION_SIZE;
    let weight = normal(&mut rng, &[n, n]);
    let unit = WigDenseParams::new(normal(&mut rng, &[n, n]), Tensor::zeros(&[n]))?;
    let (w, v) = fuse_reparameterize(&weight, &unit)?;
    let mut worst = 0.0f64;
    for _ in 0..FUSION_INPUTS {
        let xi = normal(&mut rng, &[n]);
        let a = unfused_forward(&weight, &unit, &xi)?;
        let b = fused_forward(&w, &v, &xi)?;
        let scale = a.data().iter().map(|v| v.abs()).fold(0.0, f64::max);
        worst = worst.max(max_abs_diff(a.data(), b.data()) / scale.max(f64::MIN_POSITIVE));
    }
    out.push(Check {
        name: "weighting+gate vs fused form (relative)".into(),
        value: worst,
        bound: EXACT_BOUND,
        strict: true,
    });
    Ok(out)
}

pub fn run(args: &EquivArgs) -> Result<()> {
    let results = checks(args.seed)?;
    for c in &results {
        println!("{}", c.line());
    }
    let failed: Vec<_> = results
        .iter()
        .filter(|c| !c.passed())
        .map(|c| c.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CertificationFailure(failed.join("; ")).into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass_and_cover_the_tower() {
        let results = checks(0).unwrap();
        assert_eq!(
            results.len(),
            SWISH_SCALES.len() + 2 + RELU_SCALES.len() + 2
        );
        for c in &results {
            assert!(c.passed(), "{}", c.line());
        }
    }

    #[test]
    fn relu_gap_matches_the_closed_form_peak() {
        // max over x of |x|·σ(−s|x|) is 0.27846/s
        for s in RELU_SCALES {
            let d = sup_distance(s, |x| x.max(0.0));
            assert!((d * s - 0.278_46).abs() < 1e-3, "{s}: {d}");
        }
    }

    #[test]
    fn failing_check_renders_as_fail() {
        let c = Check {
            name: "x".into(),
            value: 2.0,
            bound: 1.0,
            strict: false,
        };
        assert!(!c.passed());
        assert!(c.line().ends_with("fail"));
    }
}
