use std::fmt::Write as _;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::layers::{LossKind, Mode, Network};
use crate::metrics::MetricReport;
use crate::tensor::{Element, Tensor};

use super::adamax::AdamaxState;
use super::config::TrainConfig;
use super::penalty::{gate_sparsity_penalty, weight_decay_penalty};

#[derive(Clone, Debug, PartialEq)]
pub enum Target<T: Element> {
    Labels(Vec<usize>),
    Image(Tensor<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T: Element> {
    pub input: Tensor<T>,
    pub target: Target<T>,
}

/// Supplies training mini-batches. All randomness must come from the
/// provided generator so runs are reproducible.
pub trait BatchSource<T: Element> {
    fn batches_per_epoch(&self) -> usize;

    fn start_epoch(&mut self, _rng: &mut dyn RngCore) -> Result<()> {
        Ok(())
    }

    fn next_batch(&mut self, rng: &mut dyn RngCore) -> Result<Batch<T>>;
}

/// In-memory labelled samples `[N, ...]`, reshuffled every epoch.
pub struct ShuffledBatches<T: Element> {
    inputs: Tensor<T>,
    labels: Vec<usize>,
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
}

impl<T: Element> ShuffledBatches<T> {
    pub fn new(inputs: Tensor<T>, labels: Vec<usize>, batch_size: usize) -> Result<Self> {
        if inputs.rank() < 2 || inputs.shape()[0] != labels.len() {
            return Err(Error::shape("batches", inputs.shape(), &[labels.len()]));
        }
        if labels.is_empty() || batch_size == 0 {
            return Err(Error::Config(
                "need at least one sample and a positive batch size".into(),
            ));
        }
        let n = labels.len();
        Ok(ShuffledBatches {
            inputs,
            labels,
            batch_size,
            order: (0..n).collect(),
            cursor: 0,
        })
    }
}

impl<T: Element> BatchSource<T> for ShuffledBatches<T> {
    fn batches_per_epoch(&self) -> usize {
        self.labels.len().div_ceil(self.batch_size)
    }

    fn start_epoch(&mut self, rng: &mut dyn RngCore) -> Result<()> {
        use rand::seq::SliceRandom;
        self.order.shuffle(rng);
        self.cursor = 0;
        Ok(())
    }

    fn next_batch(&mut self, _rng: &mut dyn RngCore) -> Result<Batch<T>> {
        let n = self.labels.len();
        let idx: Vec<usize> = (0..self.batch_size.min(n - self.cursor % n))
            .map(|k| self.order[(self.cursor + k) % n])
            .collect();
        self.cursor += idx.len();
        let rows: Result<Vec<_>> = idx.iter().map(|&i| self.inputs.select(i)).collect();
        Ok(Batch {
            input: Tensor::stack(&rows?)?,
            target: Target::Labels(idx.iter().map(|&i| self.labels[i]).collect()),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    /// Mean task loss over the epoch's mini-batches, without penalties.
    pub train_loss: f64,
    pub val_metric: Option<f64>,
    /// Mean WiG gate value over the epoch's mini-batches.
    pub mean_gate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub config: String,
    pub val_metric_name: String,
    pub rows: Vec<EpochRow>,
    pub final_metrics: Vec<MetricReport>,
    /// Seconds per epoch; kept out of the CSV so it stays reproducible.
    pub wall_seconds: Vec<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl RunReport {
    pub fn csv(&self) -> String {
        let mut out = format!("epoch,train_loss,{},mean_gate\n", self.val_metric_name);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.epoch,
                r.train_loss,
                cell(r.val_metric),
                cell(r.mean_gate)
            );
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("epoch,wall_seconds\n");
        for (i, t) in self.wall_seconds.iter().enumerate() {
            let _ = writeln!(out, "{},{t:.3}", i + 1);
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::from("# configuration\n");
        out.push_str(&self.config);
        let _ = writeln!(out, "\n# epochs: {}", self.rows.len());
        if let Some(last) = self.rows.last() {
            let _ = writeln!(out, "final train_loss: {:.6}", last.train_loss);
            if let Some(v) = last.val_metric {
                let _ = writeln!(out, "final {}: {v:.6}", self.val_metric_name);
            }
            if let Some(g) = last.mean_gate {
                let _ = writeln!(out, "final mean_gate: {g:.6}");
            }
        }
        for m in &self.final_metrics {
            let _ = writeln!(out, "{}: {:.6} (n={})", m.name, m.value, m.count);
        }
        out
    }
}

/// Evaluates the network after every epoch.
pub type Validator<'a, T> = &'a mut dyn FnMut(&Network<T>) -> Result<f64>;

/// Runs `cfg.epochs` epochs of Adamax on
/// `task loss + λ·Σ‖W‖² + (λ_g / B)·Σ gates`.
///
/// On a non-finite loss the network keeps the parameters of the last good
/// step and [`Error::Diverged`] is returned.
pub fn train<T: Element>(
    net: &mut Network<T>,
    data: &mut dyn BatchSource<T>,
    cfg: &TrainConfig,
    val_metric_name: &str,
    mut validate: Option<Validator<'_, T>>,
) -> Result<RunReport> {
    cfg.validate()?;
    let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    data_rng.set_stream(1);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    drop_rng.set_stream(2);
    let mut opt = AdamaxState::for_params(net.params(), cfg.lr);
    let loss_kind = net.spec().loss;
    let steps = cfg
        .batches_per_epoch
        .unwrap_or_else(|| data.batches_per_epoch());
    let mut report = RunReport {
        config: cfg.to_string(),
        val_metric_name: val_metric_name.to_string(),
        rows: Vec::with_capacity(cfg.epochs),
        final_metrics: Vec::new(),
        wall_seconds: Vec::with_capacity(cfg.epochs),
    };
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        data.start_epoch(&mut data_rng)?;
        let (mut loss_sum, mut gate_sum, mut gate_batches) = (0.0, 0.0, 0usize);
        for step in 0..steps {
            let batch = data.next_batch(&mut data_rng)?;
            let batch_size = batch.input.shape()[0];
            let mut tape = Tape::new();
            let x = tape.constant(batch.input);
            let fwd = net.forward_on_tape(&mut tape, x, &mut Mode::Train(&mut drop_rng), true)?;
            let task = match (loss_kind, &batch.target) {
                (LossKind::CategoricalCrossEntropy, Target::Labels(l)) => {
                    tape.softmax_cross_entropy(fwd.output, l)?
                }
                (LossKind::Mse, Target::Image(t)) => tape.mse(fwd.output, t)?,
                (kind, _) => {
                    return Err(Error::Contract(format!(
                        "{} loss received the wrong kind of target",
                        kind.name()
                    )))
                }
            };
            let mut total = task;
            let decaying: Vec<_> = net
                .params()
                .iter()
                .zip(&fwd.params)
                .filter(|(p, _)| p.role.decays())
                .map(|(_, &v)| v)
                .collect();
            if let Some(p) = weight_decay_penalty(&mut tape, &decaying, cfg.lambda_wd)? {
                total = tape.add(total, p)?;
            }
            let lambda_g = cfg.lambda_gate / batch_size as f64;
            if let Some(p) = gate_sparsity_penalty(&mut tape, &fwd.gates, lambda_g)? {
                total = tape.add(total, p)?;
            }
            let total_value = tape.value(total)?.item()?.to_f64_lossy();
            if !total_value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    loss: total_value,
                });
            }
            loss_sum += tape.value(task)?.item()?.to_f64_lossy();
            if !fwd.gates.is_empty() {
                let (mut s, mut n) = (0.0, 0usize);
                for g in &fwd.gates {
                    let v = tape.value(*g)?;
                    s += v.sum().to_f64_lossy();
                    n += v.numel();
                }
                gate_sum += s / n as f64;
                gate_batches += 1;
            }
            let grads = tape.backward(total)?;
            let grads: Vec<Tensor<T>> = fwd
                .params
                .iter()
                .map(|&v| grads.wrt(v))
                .collect::<Result<_>>()?;
            opt.step(net.params_mut(), &grads)?;
        }
        let val_metric = validate.as_mut().map(|f| f(net)).transpose()?;
        let row = EpochRow {
            epoch,
            train_loss: loss_sum / steps.max(1) as f64,
            val_metric,
            mean_gate: (gate_batches > 0).then(|| gate_sum / gate_batches as f64),
        };
        log::info!(
            "epoch {epoch}: train_loss {:.5}{}",
            row.train_loss,
            row.val_metric
                .map(|v| format!(", {val_metric_name} {v:.5}"))
                .unwrap_or_default()
        );
        report.rows.push(row);
        report.wall_seconds.push(started.elapsed().as_secs_f64());
    }
    Ok(report)
}
