use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqnas_core::{Architecture, SpaceSpec};
use seqnas_tensor::{init_op, op_backward, op_forward, OpCache, ParamStore, Real, Tensor4};

use crate::backbone::{op_prefix, Backbone, StemCache};
use crate::error::Result;

/// A single architecture with its own parameters.
#[derive(Debug, Clone)]
pub struct FixedNet<T = f32> {
    pub backbone: Backbone,
    pub arch: Architecture,
    pub store: ParamStore<T>,
}

/// Saved activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    stem: StemCache<T>,
    layers: Vec<OpCache<T>>,
    feat: Tensor4<T>,
}

/// Instantiates the layer stack with weights drawn from `seed`
/// (stem, then layers in order, then head).
pub fn build_fixed<T: Real>(
    arch: &Architecture,
    space: &SpaceSpec,
    classes: usize,
    seed: u64,
) -> Result<FixedNet<T>> {
    arch.validate(space)?;
    let backbone = Backbone::new(space, &arch.path, classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    backbone.init_stem(&mut store, &mut rng);
    for (l, (g, op)) in backbone.geoms.iter().zip(&arch.ops).enumerate() {
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
    backbone.init_head(&mut store, &mut rng);
    Ok(FixedNet {
        backbone,
        arch: arch.clone(),
        store,
    })
}

impl<T: Real> FixedNet<T> {
    pub fn forward(&self, x: &Tensor4<T>) -> Result<(Tensor4<T>, Tape<T>)> {
        let (mut h, stem) = self.backbone.stem_forward(&self.store, x)?;
        let mut layers = Vec::with_capacity(self.arch.ops.len());
        for (l, (g, op)) in self.backbone.geoms.iter().zip(&self.arch.ops).enumerate() {
            let (y, cache) =
                op_forward(&self.store, &op_prefix(l, op), op, &h, g.out_ch, g.stride())?;
            layers.push(cache);
            h = y;
        }
        let logits = self.backbone.head_forward(&self.store, &h)?;
        Ok((
            logits,
            Tape {
                stem,
                layers,
                feat: h,
            },
        ))
    }

    /// Accumulates parameter gradients for `dlogits`.
    pub fn backward(&mut self, tape: &Tape<T>, dlogits: &Tensor4<T>) -> Result<()> {
        let mut d = self
            .backbone
            .head_backward(&mut self.store, &tape.feat, dlogits)?;
        for (l, cache) in tape.layers.iter().enumerate().rev() {
            d = op_backward(&mut self.store, &op_prefix(l, &self.arch.ops[l]), cache, &d)?;
        }
        self.backbone.stem_backward(&mut self.store, &tape.stem, &d)
    }

    /// Parameters of the searched layers only (stem and head excluded).
    pub fn layer_param_count(&self) -> u64 {
        self.store.param_count("layer")
    }
}
