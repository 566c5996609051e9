use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use wig_core::activations::{scalar_wig, scalar_wig_derivative};
use wig_core::fsutil::write_atomic;
use wig_core::gradcheck::relative_error;

use crate::args::PlotArgs;
use crate::CertificationFailure;

/// Step of the central difference used to cross-check every emitted
/// derivative.
const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-8;

fn parse_range(text: &str) -> Result<(f64, f64)> {
    let (lo, hi) = text
        .split_once(',')
        .with_context(|| format!("--range expects `lo,hi`, got `{text}`"))?;
    let lo: f64 = lo
        .trim()
        .parse()
        .with_context(|| format!("bad range start `{lo}`"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .with_context(|| format!("bad range end `{hi}`"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        bail!("--range needs finite lo < hi, got {lo},{hi}");
    }
    Ok((lo, hi))
}

/// CSV with columns `w,b,x,f,df`, one block of rows per (w, b) pair.
pub fn table(ws: &[f64], bs: &[f64], lo: f64, hi: f64, samples: usize) -> Result<String> {
    if samples < 2 {
        bail!("--samples must be at least 2, got {samples}");
    }
    if let Some(v) = ws.iter().chain(bs).find(|v| !v.is_finite()) {
        bail!("gate parameters must be finite, got {v}");
    }
    let step = (hi - lo) / (samples - 1) as f64;
    let mut out = String::from("w,b,x,f,df\n");
    let mut worst = 0.0f64;
    for &w in ws {
        for &b in bs {
            for i in 0..samples {
                let x = if i == samples - 1 {
                    hi
                } else {
                    lo + i as f64 * step
                };
                let f = scalar_wig(x, w, b);
                let df = scalar_wig_derivative(x, w, b);
                let numeric = (scalar_wig(x + FD_STEP, w, b) - scalar_wig(x - FD_STEP, w, b))
                    / (2.0 * FD_STEP);
                worst = worst.max(relative_error(df, numeric));
                writeln!(out, "{w},{b},{x},{f},{df}")?;
            }
        }
    }
    if worst >= FD_TOLERANCE {
        return Err(CertificationFailure(format!(
            "analytic derivative disagrees with finite differences by {worst:e}"
        ))
        .into());
    }
    log::info!("derivative cross-check: max relative error {worst:e}");
    Ok(out)
}

pub fn run(args: &PlotArgs) -> Result<()> {
    let (lo, hi) = parse_range(&args.range)?;
    let csv = table(&args.w, &args.b, lo, hi, args.samples)?;
    match &args.out {
        Some(path) => write_atomic(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}
