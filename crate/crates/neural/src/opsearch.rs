//! Operation search on a supernet: uniform warm-up, alternating weight and
//! architecture steps, and discretization under a MAC budget.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqnas_core::{
    layer_geometry, op_cost, regularizer_grad, Architecture, Dataset, RegularizerConfig, SpaceSpec,
    StridePath,
};
use seqnas_tensor::{adadelta_scalar, adadelta_step, frame_softmax_ce, AdadeltaConfig, Real};
use serde::{Deserialize, Serialize};

use crate::data::{batch_indices, make_batch};
use crate::error::{NeuralError, Result};
use crate::supernet::{sample_index, uniform_choices, Mode, SuperNet};

/// How the architecture step evaluates the supernet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMode {
    Mixture,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpSearchConfig {
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub reg: RegularizerConfig,
    pub weight_optim: AdadeltaConfig,
    pub arch_optim: AdadeltaConfig,
    pub alpha_mode: AlphaMode,
}

impl OpSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 {
            return Err(NeuralError::Config("epochs and batch must be >= 1".into()));
        }
        self.reg.validate()?;
        Ok(())
    }
}

/// One alternating step: the weight step's training loss, then the
/// architecture step's validation loss, expected FLOPS and regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub step: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub expected_flops: f64,
    pub regularizer: f64,
    pub objective: f64,
}

fn check_data<T: Real>(net: &SuperNet<T>, data: &Dataset) -> Result<()> {
    data.check_space(&net.backbone.space)?;
    if data.is_empty() {
        return Err(NeuralError::Config("dataset is empty".into()));
    }
    Ok(())
}

/// Trains weights only, leaving the architecture logits alone. In mixture
/// mode every batch runs the full mixture at the current probabilities;
/// in sampled mode it runs one uniformly drawn legal op per layer.
pub fn warmup<T: Real>(
    net: &mut SuperNet<T>,
    train: &Dataset,
    epochs: usize,
    batch: usize,
    seed: u64,
    optim: &AdadeltaConfig,
    mode: AlphaMode,
) -> Result<()> {
    check_data(net, train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for epoch in 1..=epochs {
        for idx in batch_indices(train.len(), batch, Some(&mut rng)) {
            let m = match mode {
                AlphaMode::Mixture => Mode::Mixture,
                AlphaMode::Sampled => Mode::Sampled(uniform_choices(&net.legal, &mut rng)),
            };
            weight_step(net, train, &idx, m, optim, epoch)?;
        }
    }
    Ok(())
}

fn weight_step<T: Real>(
    net: &mut SuperNet<T>,
    data: &Dataset,
    idx: &[usize],
    mode: Mode,
    optim: &AdadeltaConfig,
    epoch: usize,
) -> Result<f64> {
    let b = make_batch::<T>(data, idx);
    let (logits, tape) = net.forward(&b.x, &mode)?;
    let (loss, dlogits) = frame_softmax_ce(&logits, &b.labels)?;
    if !loss.is_finite() {
        return Err(NeuralError::Divergence {
            epoch,
            phase: "weight step",
        });
    }
    net.store.zero_grad();
    net.backward(&tape, &dlogits)?;
    adadelta_step(&mut net.store, optim);
    Ok(loss)
}

/// Validation loss `L`, regularizer `r`, expected FLOPS `E` and the
/// gradient of `r * L` with respect to the logits. Weight gradients
/// produced on the way are discarded.
pub fn arch_objective<T: Real>(
    net: &mut SuperNet<T>,
    val: &Dataset,
    idx: &[usize],
    reg: &RegularizerConfig,
    mode: Mode,
) -> Result<(f64, f64, f64, Vec<Vec<f64>>)> {
    let b = make_batch::<T>(val, idx);
    let (logits, tape) = net.forward(&b.x, &mode)?;
    let (loss, dlogits) = frame_softmax_ce(&logits, &b.labels)?;
    net.store.zero_grad();
    let dl_dp = net.backward(&tape, &dlogits)?;
    net.store.zero_grad();
    let probs = net.arch.probs();
    let (r, dr_dp) = regularizer_grad(&probs, net.flops_table(), reg)?;
    let e = seqnas_core::expected_flops(&probs, net.flops_table())?;
    let dp: Vec<Vec<f64>> = dl_dp
        .iter()
        .zip(&dr_dp)
        .map(|(gl, gr)| gl.iter().zip(gr).map(|(a, b)| r * a + loss * b).collect())
        .collect();
    Ok((loss, r, e, net.logit_grad(&dp)))
}

/// Alternates per training batch: a weight step on `train` with ops drawn
/// from the current softmax, then an architecture step on the next `val`
/// batch minimizing `r(alpha) * L`. Updates `net.arch` in place.
pub fn alternating_search<T: Real>(
    net: &mut SuperNet<T>,
    train: &Dataset,
    val: &Dataset,
    cfg: &OpSearchConfig,
) -> Result<Vec<HistoryRecord>> {
    cfg.validate()?;
    check_data(net, train)?;
    check_data(net, val)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut acc_g: Vec<Vec<f64>> = net.legal.iter().map(|r| vec![0.0; r.len()]).collect();
    let mut acc_d = acc_g.clone();
    let mut history = Vec::new();
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let train_batches = batch_indices(train.len(), cfg.batch, Some(&mut rng));
        let val_batches = batch_indices(val.len(), cfg.batch, Some(&mut rng));
        for (k, idx) in train_batches.iter().enumerate() {
            let probs = net.arch.probs();
            let draw = |rng: &mut ChaCha8Rng| match cfg.alpha_mode {
                AlphaMode::Mixture => Mode::Mixture,
                AlphaMode::Sampled => {
                    Mode::Sampled(probs.iter().map(|p| sample_index(p, rng)).collect())
                }
            };
            let wmode = draw(&mut rng);
            let train_loss = weight_step(net, train, idx, wmode, &cfg.weight_optim, epoch)?;
            let mode = draw(&mut rng);
            let vidx = &val_batches[k % val_batches.len()];
            let (val_loss, r, e, grad) = arch_objective(net, val, vidx, &cfg.reg, mode)?;
            if !(val_loss.is_finite() && r.is_finite() && e.is_finite()) {
                return Err(NeuralError::Divergence {
                    epoch,
                    phase: "architecture step",
                });
            }
            for (l, row) in net.arch.logits.iter_mut().enumerate() {
                for (j, z) in row.iter_mut().enumerate() {
                    if net.legal[l][j] {
                        *z = adadelta_scalar(
                            &cfg.arch_optim,
                            *z,
                            grad[l][j],
                            &mut acc_g[l][j],
                            &mut acc_d[l][j],
                        );
                    }
                }
            }
            step += 1;
            history.push(HistoryRecord {
                step,
                epoch,
                train_loss,
                val_loss,
                expected_flops: e,
                regularizer: r,
                objective: r * val_loss,
            });
        }
        log::debug!(
            "op search epoch {epoch}: E[flops] {:.0}",
            history.last().map_or(0.0, |h| h.expected_flops)
        );
    }
    Ok(history)
}

/// Twice the MACs of the network that uses, at every layer, the cheapest
/// legal non-skip op of the vocabulary (the all-`mb3e1` network for the
/// default vocabulary).
pub fn default_budget(space: &SpaceSpec, path: &StridePath) -> Result<u64> {
    let geoms = layer_geometry(path, space)?;
    let mut total = 0u64;
    for (l, g) in geoms.iter().enumerate() {
        let mut cheapest: Option<u64> = None;
        for op in space.op_vocab.iter().filter(|o| !o.is_skip()) {
            let c = op_cost(op, g.in_ch, g.out_ch, g.out_h, g.out_w, g.stride())?.macs;
            cheapest = Some(cheapest.map_or(c, |m| m.min(c)));
        }
        let c = cheapest.ok_or_else(|| {
            NeuralError::Config(format!(
                "layer {} has no non-skip op in the vocabulary",
                l + 1
            ))
        })?;
        total += c;
    }
    Ok(2 * total)
}

/// Per-layer argmax over legal choices, ties to the lowest index. With a
/// budget, over-budget results are repaired by repeatedly moving one layer
/// to its most probable strictly cheaper legal op, choosing the move that
/// gives up the least probability.
pub fn discretize(
    probs: &[Vec<f64>],
    legal: &[Vec<bool>],
    path: &StridePath,
    space: &SpaceSpec,
    budget: Option<u64>,
) -> Result<Architecture> {
    let mut pick: Vec<usize> = probs
        .iter()
        .zip(legal)
        .map(|(p, ok)| {
            let mut best: Option<usize> = None;
            for j in 0..p.len() {
                if ok[j] && best.map_or(true, |b| p[j] > p[b]) {
                    best = Some(j);
                }
            }
            best.expect("every layer has a legal op")
        })
        .collect();
    let build = |pick: &[usize]| {
        Architecture::new(
            space,
            path.clone(),
            pick.iter().map(|&j| space.op_vocab[j]).collect(),
        )
    };
    let Some(budget) = budget else {
        return Ok(build(&pick)?);
    };
    let geoms = layer_geometry(path, space)?;
    let cost_of = |l: usize, j: usize| -> Result<u64> {
        let g = &geoms[l];
        Ok(op_cost(
            &space.op_vocab[j],
            g.in_ch,
            g.out_ch,
            g.out_h,
            g.out_w,
            g.stride(),
        )?
        .macs)
    };
    let mut total: u64 = (0..pick.len())
        .map(|l| cost_of(l, pick[l]))
        .sum::<Result<u64>>()?;
    while total > budget {
        let mut best: Option<(f64, usize, usize, u64, u64)> = None;
        for l in 0..pick.len() {
            let cur = cost_of(l, pick[l])?;
            let mut cand: Option<(usize, u64)> = None;
            for j in 0..probs[l].len() {
                if !legal[l][j] {
                    continue;
                }
                let c = cost_of(l, j)?;
                if c < cur && cand.map_or(true, |(b, _)| probs[l][j] > probs[l][b]) {
                    cand = Some((j, c));
                }
            }
            if let Some((j, c)) = cand {
                let loss = probs[l][pick[l]] - probs[l][j];
                if best.map_or(true, |b| loss < b.0) {
                    best = Some((loss, l, j, cur, c));
                }
            }
        }
        let Some((_, l, j, cur, c)) = best else {
            return Err(NeuralError::Infeasible {
                budget,
                cheapest: total,
            });
        };
        pick[l] = j;
        total = total - cur + c;
    }
    Ok(build(&pick)?)
}
