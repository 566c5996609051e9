use anyhow::{bail, Context, Result};
use wig_core::data::{load_cifar_split, CifarVariant, Split};
use wig_core::layers::{load_checkpoint, read_checkpoint_spec, Network};
use wig_core::{Element, Precision};

use crate::args::EvalArgs;
use crate::commands::train::score;

fn eval<T: Element>(args: &EvalArgs) -> Result<()> {
    let net: Network<T> = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let classes = match net.shapes().output().as_slice() {
        [d] => d.known().unwrap_or(0),
        other => bail!("checkpoint is not a classifier: output shape {other:?}"),
    };
    let variant = CifarVariant::from_classes(classes)?;
    let mut set = load_cifar_split::<T>(&args.data, variant, Split::Test)
        .with_context(|| format!("loading CIFAR test data from {}", args.data.display()))?;
    if let Some(n) = args.subset {
        set = set.take(n)?;
    }
    let (acc, ce) = score(&net, &set)?;
    println!("accuracy: {acc} (n={})", set.len());
    println!("cross_entropy: {ce}");
    Ok(())
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let spec = read_checkpoint_spec(&args.checkpoint)
        .with_context(|| format!("reading checkpoint {}", args.checkpoint.display()))?;
    match spec.precision {
        Precision::F32 => eval::<f32>(args),
        Precision::F64 => eval::<f64>(args),
    }
}
