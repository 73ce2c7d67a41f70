use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqnas_core::{arch_cost, Dataset};
use seqnas_tensor::{
    adadelta_step, frame_predictions, frame_softmax_ce, AdadeltaConfig, Real, Tensor4,
};
use serde::{Deserialize, Serialize};

use crate::data::{batch_indices, make_batch};
use crate::error::{NeuralError, Result};
use crate::fixed::FixedNet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub optim: AdadeltaConfig,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch: usize, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch,
            seed,
            optim: AdadeltaConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 {
            return Err(NeuralError::Config("epochs and batch must be >= 1".into()));
        }
        Ok(())
    }
}

/// One line of the per-epoch JSON-lines log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub frame_acc: f64,
    pub seq_acc: f64,
    pub expected_flops: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub val_loss: f64,
    pub seq_accuracy: f64,
    pub frame_accuracy: f64,
    pub train_curve: Vec<EpochRecord>,
}

impl EvalReport {
    pub fn to_jsonl(&self) -> String {
        self.train_curve
            .iter()
            .map(|r| serde_json::to_string(r).expect("plain numeric record") + "\n")
            .collect()
    }
}

/// Loss and accuracies over a whole dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub loss: f64,
    pub frame_acc: f64,
    pub seq_acc: f64,
}

/// Running sums for `Metrics`, fed one batch of logits at a time.
#[derive(Debug, Default)]
pub struct MetricsAcc {
    loss_sum: f64,
    frames: usize,
    frames_ok: usize,
    seqs: usize,
    seqs_ok: usize,
}

impl MetricsAcc {
    pub fn add<T: Real>(&mut self, logits: &Tensor4<T>, labels: &[usize], loss: f64) {
        let f = logits.dims[3];
        let preds = frame_predictions(logits);
        for (p, y) in preds.chunks(f).zip(labels.chunks(f)) {
            let ok = p.iter().zip(y).filter(|(a, b)| a == b).count();
            self.frames_ok += ok;
            self.seqs_ok += usize::from(ok == f);
        }
        self.frames += preds.len();
        self.seqs += logits.dims[0];
        self.loss_sum += loss * preds.len() as f64;
    }

    pub fn finish(&self) -> Metrics {
        let d = |n: usize| n.max(1) as f64;
        Metrics {
            loss: self.loss_sum / d(self.frames),
            frame_acc: self.frames_ok as f64 / d(self.frames),
            seq_acc: self.seqs_ok as f64 / d(self.seqs),
        }
    }
}

pub fn evaluate_fixed<T: Real>(net: &FixedNet<T>, data: &Dataset, batch: usize) -> Result<Metrics> {
    let mut acc = MetricsAcc::default();
    for idx in batch_indices(data.len(), batch, None::<&mut ChaCha8Rng>) {
        let b = make_batch::<T>(data, &idx);
        let (logits, _) = net.forward(&b.x)?;
        let (loss, _) = frame_softmax_ce(&logits, &b.labels)?;
        acc.add(&logits, &b.labels, loss);
    }
    Ok(acc.finish())
}

/// ADADELTA over seeded shuffles of `train`; validation after every epoch.
pub fn train_fixed<T: Real>(
    net: &mut FixedNet<T>,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    train.check_space(&net.backbone.space)?;
    val.check_space(&net.backbone.space)?;
    if train.is_empty() || val.is_empty() {
        return Err(NeuralError::Config(
            "train and validation sets must be non-empty".into(),
        ));
    }
    let macs = arch_cost(&net.arch, &net.backbone.space)?.total_macs as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for idx in batch_indices(train.len(), cfg.batch, Some(&mut rng)) {
            let b = make_batch::<T>(train, &idx);
            let (logits, tape) = net.forward(&b.x)?;
            let (loss, dlogits) = frame_softmax_ce(&logits, &b.labels)?;
            if !loss.is_finite() {
                return Err(NeuralError::Divergence {
                    epoch,
                    phase: "train",
                });
            }
            net.store.zero_grad();
            net.backward(&tape, &dlogits)?;
            adadelta_step(&mut net.store, &cfg.optim);
            loss_sum += loss * idx.len() as f64;
            seen += idx.len();
        }
        if !net.store.all_finite() {
            return Err(NeuralError::Divergence {
                epoch,
                phase: "train",
            });
        }
        let m = evaluate_fixed(net, val, cfg.batch)?;
        if !m.loss.is_finite() {
            return Err(NeuralError::Divergence {
                epoch,
                phase: "validation",
            });
        }
        log::debug!(
            "epoch {epoch}: train {:.4} val {:.4} frame {:.3}",
            loss_sum / seen as f64,
            m.loss,
            m.frame_acc
        );
        curve.push(EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_loss: m.loss,
            frame_acc: m.frame_acc,
            seq_acc: m.seq_acc,
            expected_flops: macs,
        });
    }
    let last = curve[curve.len() - 1];
    Ok(EvalReport {
        val_loss: last.val_loss,
        seq_accuracy: last.seq_acc,
        frame_accuracy: last.frame_acc,
        train_curve: curve,
    })
}
