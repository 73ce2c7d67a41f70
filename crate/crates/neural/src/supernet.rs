//! Weight-sharing supernet over one downsampling path.
//!
//! Each layer is a choice block holding every vocabulary op; parameters are
//! keyed by (layer, op code), so any architecture on this path reads and
//! trains the same tensors. Architecture parameters are per-layer logits
//! with `-inf` on illegal choices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqnas_core::{
    expected_flops, flops_table, legal_choices, OperationSpec, SpaceSpec, StridePath,
};
use seqnas_tensor::{init_op, op_backward, op_forward, OpCache, ParamStore, Real, Tensor4};

use crate::backbone::{op_prefix, Backbone, StemCache};
use crate::error::{NeuralError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ArchParams {
    /// `L x C` logits; `-inf` marks an illegal choice.
    pub logits: Vec<Vec<f64>>,
    pub temperature: f64,
}

impl ArchParams {
    /// Zero logits on legal choices.
    pub fn uniform(legal: &[Vec<bool>], temperature: f64) -> Self {
        ArchParams {
            logits: legal
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&ok| if ok { 0.0 } else { f64::NEG_INFINITY })
                        .collect()
                })
                .collect(),
            temperature,
        }
    }

    pub fn probs(&self) -> Vec<Vec<f64>> {
        self.logits
            .iter()
            .map(|row| softmax(row, self.temperature))
            .collect()
    }
}

pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits
        .iter()
        .map(|&z| {
            if z == f64::NEG_INFINITY {
                0.0
            } else {
                ((z - m) / temperature).exp()
            }
        })
        .collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Chains a gradient with respect to probabilities back to logits.
pub fn softmax_backward(probs: &[f64], dprobs: &[f64], temperature: f64) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(dprobs).map(|(p, g)| p * g).sum();
    probs
        .iter()
        .zip(dprobs)
        .map(|(p, g)| p * (g - dot) / temperature)
        .collect()
}

/// Index drawn from `probs` with one uniform variate.
pub fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last = 0;
    for (j, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last = j;
            if u < cum {
                return j;
            }
        }
    }
    last
}

/// One legal op per layer, uniformly.
pub fn uniform_choices(legal: &[Vec<bool>], rng: &mut impl Rng) -> Vec<usize> {
    legal
        .iter()
        .map(|row| {
            let ok: Vec<usize> = (0..row.len()).filter(|&j| row[j]).collect();
            ok[rng.gen_range(0..ok.len())]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Every legal op, weighted by the softmax of the logits.
    Mixture,
    /// One op per layer; its output is scaled by `p / stopgrad(p)` so the
    /// forward value is unchanged but the logits still receive gradient.
    Sampled(Vec<usize>),
}

#[derive(Debug, Clone)]
struct Branch<T> {
    choice: usize,
    weight: f64,
    /// Gradient of the block output with respect to this branch's probability.
    dprob_scale: f64,
    cache: OpCache<T>,
    out: Tensor4<T>,
}

#[derive(Debug, Clone)]
pub struct SuperTape<T> {
    stem: StemCache<T>,
    layers: Vec<Vec<Branch<T>>>,
    feat: Tensor4<T>,
}

#[derive(Debug, Clone)]
pub struct SuperNet<T = f32> {
    pub backbone: Backbone,
    pub vocab: Vec<OperationSpec>,
    pub legal: Vec<Vec<bool>>,
    pub arch: ArchParams,
    pub store: ParamStore<T>,
    flops: Vec<Vec<f64>>,
}

impl<T: Real> SuperNet<T> {
    /// Builds every (layer, op) parameter set from `seed`: stem, then layers
    /// in order with ops in vocabulary order, then head.
    pub fn new(
        space: &SpaceSpec,
        path: &StridePath,
        classes: usize,
        seed: u64,
        temperature: f64,
    ) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(NeuralError::Config("temperature must be positive".into()));
        }
        let backbone = Backbone::new(space, path, classes)?;
        let legal = legal_choices(path, space)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        backbone.init_stem(&mut store, &mut rng);
        for (l, g) in backbone.geoms.iter().enumerate() {
            for (j, op) in space.op_vocab.iter().enumerate() {
                if legal[l][j] {
                    init_op(
                        &mut store,
                        &op_prefix(l, op),
                        op,
                        g.in_ch,
                        g.out_ch,
                        g.stride(),
                        &mut rng,
                    )?;
                }
            }
        }
        backbone.init_head(&mut store, &mut rng);
        Ok(SuperNet {
            vocab: space.op_vocab.clone(),
            arch: ArchParams::uniform(&legal, temperature),
            flops: flops_table(path, space)?,
            legal,
            backbone,
            store,
        })
    }

    pub fn flops_table(&self) -> &[Vec<f64>] {
        &self.flops
    }

    /// Replaces the per-(layer, op) cost table used by the regularizer.
    pub fn set_flops_table(&mut self, table: Vec<Vec<f64>>) -> Result<()> {
        let ok = table.len() == self.legal.len()
            && table
                .iter()
                .zip(&self.legal)
                .all(|(t, l)| t.len() == l.len());
        if !ok {
            return Err(NeuralError::Config(
                "flops table does not match L x C".into(),
            ));
        }
        self.flops = table;
        Ok(())
    }

    pub fn expected_flops(&self) -> Result<f64> {
        Ok(expected_flops(&self.arch.probs(), &self.flops)?)
    }

    /// Values of one (layer, choice) parameter set, concatenated by name.
    pub fn op_params(&self, layer: usize, choice: usize) -> Vec<T> {
        self.store
            .flat_values(&format!("{}.", op_prefix(layer, &self.vocab[choice])))
    }

    pub fn forward(&self, x: &Tensor4<T>, mode: &Mode) -> Result<(Tensor4<T>, SuperTape<T>)> {
        let probs = self.arch.probs();
        if let Mode::Sampled(ch) = mode {
            let bad = ch.len() != self.legal.len()
                || ch
                    .iter()
                    .zip(&self.legal)
                    .any(|(&c, row)| c >= row.len() || !row[c]);
            if bad {
                return Err(NeuralError::Config(format!(
                    "illegal sampled choices {ch:?}"
                )));
            }
        }
        let (mut h, stem) = self.backbone.stem_forward(&self.store, x)?;
        let mut layers = Vec::with_capacity(self.legal.len());
        for (l, g) in self.backbone.geoms.iter().enumerate() {
            let picks: Vec<(usize, f64, f64)> = match mode {
                Mode::Mixture => (0..self.vocab.len())
                    .filter(|&j| self.legal[l][j])
                    .map(|j| (j, probs[l][j], 1.0))
                    .collect(),
                Mode::Sampled(ch) => {
                    let p = probs[l][ch[l]];
                    vec![(ch[l], 1.0, if p > 0.0 { 1.0 / p } else { 0.0 })]
                }
            };
            let mut branches = Vec::with_capacity(picks.len());
            let mut sum: Option<Vec<f64>> = None;
            let mut dims = [0; 4];
            for (j, weight, dprob_scale) in picks {
                let op = &self.vocab[j];
                let (out, cache) =
                    op_forward(&self.store, &op_prefix(l, op), op, &h, g.out_ch, g.stride())?;
                dims = out.dims;
                let acc = sum.get_or_insert_with(|| vec![0.0; out.len()]);
                for (a, v) in acc.iter_mut().zip(&out.data) {
                    *a += weight * v.as_f64();
                }
                branches.push(Branch {
                    choice: j,
                    weight,
                    dprob_scale,
                    cache,
                    out,
                });
            }
            let sum = sum.expect("every layer has a legal op");
            h = Tensor4 {
                dims,
                data: sum.into_iter().map(T::from_f64).collect(),
            };
            layers.push(branches);
        }
        let logits = self.backbone.head_forward(&self.store, &h)?;
        Ok((
            logits,
            SuperTape {
                stem,
                layers,
                feat: h,
            },
        ))
    }

    /// Accumulates weight gradients and returns `dL/dp` (same layout as the
    /// logits, zero for choices not in the tape).
    pub fn backward(&mut self, tape: &SuperTape<T>, dlogits: &Tensor4<T>) -> Result<Vec<Vec<f64>>> {
        let mut dprobs: Vec<Vec<f64>> = self.legal.iter().map(|r| vec![0.0; r.len()]).collect();
        let mut d = self
            .backbone
            .head_backward(&mut self.store, &tape.feat, dlogits)?;
        for (l, branches) in tape.layers.iter().enumerate().rev() {
            let mut dx: Option<Vec<f64>> = None;
            let mut in_dims = [0; 4];
            for br in branches {
                dprobs[l][br.choice] += br.dprob_scale * br.out.dot(&d)?;
                let scaled = if br.weight == 1.0 {
                    d.clone()
                } else {
                    d.scale(br.weight)
                };
                let prefix = op_prefix(l, &self.vocab[br.choice]);
                let di = op_backward(&mut self.store, &prefix, &br.cache, &scaled)?;
                in_dims = di.dims;
                let acc = dx.get_or_insert_with(|| vec![0.0; di.len()]);
                for (a, v) in acc.iter_mut().zip(&di.data) {
                    *a += v.as_f64();
                }
            }
            d = Tensor4 {
                dims: in_dims,
                data: dx
                    .expect("non-empty layer")
                    .into_iter()
                    .map(T::from_f64)
                    .collect(),
            };
        }
        self.backbone
            .stem_backward(&mut self.store, &tape.stem, &d)?;
        Ok(dprobs)
    }

    /// Chains `dL/dp` to the logits.
    pub fn logit_grad(&self, dprobs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.arch
            .probs()
            .iter()
            .zip(dprobs)
            .map(|(p, g)| softmax_backward(p, g, self.arch.temperature))
            .collect()
    }
}
