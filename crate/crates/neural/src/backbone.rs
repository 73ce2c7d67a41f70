//! The parts every network shares: a 3x3 stem lifting the one-channel image
//! to the stem width, the searched layer stack geometry, and a 1x1 head
//! (with bias) mapping the height-collapsed feature map to per-frame logits.

use rand::Rng;
use seqnas_core::{
    check_constraint, layer_geometry, LayerGeom, OperationSpec, SpaceSpec, StridePath,
};
use seqnas_tensor::{
    bias_backward, bias_forward, conv2d_backward, conv2d_forward, relu6_backward, relu6_forward,
    ParamStore, Real, Tensor4,
};

use crate::error::{NeuralError, Result};

pub const STEM: &str = "stem.w";
pub const HEAD_W: &str = "head.w";
pub const HEAD_B: &str = "head.b";

/// Parameter prefix of an op at a 0-based layer. Shared by every network
/// that places this op at this layer.
pub fn op_prefix(layer: usize, op: &OperationSpec) -> String {
    format!("layer{:02}.{}", layer + 1, op.code())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub space: SpaceSpec,
    pub path: StridePath,
    pub geoms: Vec<LayerGeom>,
    pub classes: usize,
}

#[derive(Debug, Clone)]
pub struct StemCache<T> {
    x: Tensor4<T>,
    pre: Tensor4<T>,
}

impl Backbone {
    pub fn new(space: &SpaceSpec, path: &StridePath, classes: usize) -> Result<Self> {
        space.validate()?;
        if !check_constraint(path, space) {
            return Err(seqnas_core::Error::Constraint {
                layer: path.len(),
                reason: format!("path {path} does not reach {}x{}", space.c1, space.c2),
            }
            .into());
        }
        if space.c1 != 1 {
            return Err(NeuralError::Config(format!(
                "the frame head needs output height 1, space has c1 = {}",
                space.c1
            )));
        }
        if classes < 2 {
            return Err(NeuralError::Config("need at least 2 classes".into()));
        }
        Ok(Backbone {
            space: space.clone(),
            path: path.clone(),
            geoms: layer_geometry(path, space)?,
            classes,
        })
    }

    pub fn last_channels(&self) -> usize {
        self.geoms
            .last()
            .map_or(self.space.stem_channels, |g| g.out_ch)
    }

    pub fn init_stem<T: Real>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng) {
        store.init_uniform(
            STEM,
            [self.space.stem_channels, 1, 3, 3],
            9,
            std::f64::consts::SQRT_2,
            rng,
        );
    }

    pub fn init_head<T: Real>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng) {
        let c = self.last_channels();
        store.init_uniform(HEAD_W, [self.classes, c, 1, 1], c, 1.0, rng);
        store.init_uniform(HEAD_B, [self.classes, 1, 1, 1], c, 1.0, rng);
    }

    pub fn stem_forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor4<T>,
    ) -> Result<(Tensor4<T>, StemCache<T>)> {
        if x.dims[1..] != [1, self.space.input_h, self.space.input_w] {
            return Err(seqnas_tensor::TensorError::Shape(format!(
                "input {:?} does not match a 1x{}x{} image",
                x.dims, self.space.input_h, self.space.input_w
            ))
            .into());
        }
        let pre = conv2d_forward(x, store.value(STEM)?, (1, 1), 1)?;
        let y = relu6_forward(&pre);
        Ok((y, StemCache { x: x.clone(), pre }))
    }

    pub fn stem_backward<T: Real>(
        &self,
        store: &mut ParamStore<T>,
        cache: &StemCache<T>,
        dy: &Tensor4<T>,
    ) -> Result<()> {
        let dpre = relu6_backward(&cache.pre, dy);
        let (_, dw) = conv2d_backward(&cache.x, store.value(STEM)?, &dpre, (1, 1), 1)?;
        store.accumulate_grad(STEM, &dw)?;
        Ok(())
    }

    pub fn head_forward<T: Real>(
        &self,
        store: &ParamStore<T>,
        h: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let y = conv2d_forward(h, store.value(HEAD_W)?, (1, 1), 1)?;
        Ok(bias_forward(&y, store.value(HEAD_B)?)?)
    }

    /// Returns the gradient with respect to the head's input.
    pub fn head_backward<T: Real>(
        &self,
        store: &mut ParamStore<T>,
        h: &Tensor4<T>,
        dlogits: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let bdims = store.value(HEAD_B)?.dims;
        store.accumulate_grad(HEAD_B, &bias_backward(dlogits, bdims))?;
        let (dh, dw) = conv2d_backward(h, store.value(HEAD_W)?, dlogits, (1, 1), 1)?;
        store.accumulate_grad(HEAD_W, &dw)?;
        Ok(dh)
    }
}
