//! Candidate-op blocks built from the conv and activation kernels.
//!
//! * MBConv(k, e): `1x1 expand -> ReLU6 -> kxk depthwise(stride) -> ReLU6 ->
//!   1x1 project`, the expansion omitted when `e == 1`, plus an identity
//!   residual when stride is 1 and channels match.
//! * Residual 3x3: `3x3 conv(stride) -> ReLU6` plus a shortcut that is the
//!   identity, or a strided 1x1 projection when shape changes.
//! * Skip: identity; only legal when shapes already match.
//!
//! Parameters live in a `ParamStore` under `<prefix>.<part>`. No biases.

use rand::Rng;
use std::f64::consts::SQRT_2;

use seqnas_core::{OpFamily, OperationSpec};

use crate::activation::{relu6_backward, relu6_forward};
use crate::conv::{conv2d_backward, conv2d_forward};
use crate::error::{Result, TensorError};
use crate::store::ParamStore;
use crate::tensor::{Real, Tensor4};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub part: &'static str,
    pub dims: [usize; 4],
    pub groups: usize,
    pub fan_in: usize,
    /// `sqrt(2)` when a ReLU6 follows the conv, 1 for linear outputs.
    pub gain: f64,
}

fn spec(part: &'static str, dims: [usize; 4], groups: usize, gain: f64) -> ParamSpec {
    ParamSpec {
        part,
        dims,
        groups,
        fan_in: dims[1] * dims[2] * dims[3],
        gain,
    }
}

fn has_identity(stride: (usize, usize), in_ch: usize, out_ch: usize) -> bool {
    stride == (1, 1) && in_ch == out_ch
}

pub fn op_param_specs(
    op: &OperationSpec,
    in_ch: usize,
    out_ch: usize,
    stride: (usize, usize),
) -> Result<Vec<ParamSpec>> {
    Ok(match op.family {
        OpFamily::SkipConnect => {
            if !has_identity(stride, in_ch, out_ch) {
                return Err(TensorError::IllegalOp(format!(
                    "skip with stride {stride:?} and channels {in_ch} -> {out_ch}"
                )));
            }
            Vec::new()
        }
        OpFamily::MbConv => {
            let hidden = in_ch * op.expansion;
            let mut v = Vec::with_capacity(3);
            if op.expansion > 1 {
                v.push(spec("expand", [hidden, in_ch, 1, 1], 1, SQRT_2));
            }
            v.push(spec(
                "dw",
                [hidden, 1, op.kernel, op.kernel],
                hidden,
                SQRT_2,
            ));
            v.push(spec("project", [out_ch, hidden, 1, 1], 1, 1.0));
            v
        }
        OpFamily::ResidualConv3x3 => {
            let mut v = vec![spec("conv", [out_ch, in_ch, 3, 3], 1, SQRT_2)];
            if !has_identity(stride, in_ch, out_ch) {
                v.push(spec("shortcut", [out_ch, in_ch, 1, 1], 1, 1.0));
            }
            v
        }
    })
}

fn pname(prefix: &str, part: &str) -> String {
    format!("{prefix}.{part}")
}

/// Creates the op's parameters under `prefix` (existing names are kept).
pub fn init_op<T: Real>(
    store: &mut ParamStore<T>,
    prefix: &str,
    op: &OperationSpec,
    in_ch: usize,
    out_ch: usize,
    stride: (usize, usize),
    rng: &mut impl Rng,
) -> Result<()> {
    for s in op_param_specs(op, in_ch, out_ch, stride)? {
        store.init_uniform(&pname(prefix, s.part), s.dims, s.fan_in, s.gain, rng);
    }
    Ok(())
}

/// Activations saved by `op_forward` for the backward pass.
#[derive(Debug, Clone)]
pub struct OpCache<T> {
    op: OperationSpec,
    stride: (usize, usize),
    out_ch: usize,
    x: Tensor4<T>,
    /// Pre-activation tensors in forward order.
    pre: Vec<Tensor4<T>>,
    /// Post-activation tensors in forward order.
    post: Vec<Tensor4<T>>,
}

pub fn op_forward<T: Real>(
    store: &ParamStore<T>,
    prefix: &str,
    op: &OperationSpec,
    x: &Tensor4<T>,
    out_ch: usize,
    stride: (usize, usize),
) -> Result<(Tensor4<T>, OpCache<T>)> {
    let in_ch = x.dims[1];
    let specs = op_param_specs(op, in_ch, out_ch, stride)?;
    let w = |part: &str| store.value(&pname(prefix, part));
    let mut cache = OpCache {
        op: *op,
        stride,
        out_ch,
        x: x.clone(),
        pre: Vec::new(),
        post: Vec::new(),
    };
    let y = match op.family {
        OpFamily::SkipConnect => x.clone(),
        OpFamily::MbConv => {
            let mut h = x.clone();
            if op.expansion > 1 {
                let pre = conv2d_forward(&h, w("expand")?, (1, 1), 1)?;
                h = relu6_forward(&pre);
                cache.pre.push(pre);
                cache.post.push(h.clone());
            }
            let hidden = in_ch * op.expansion;
            let pre = conv2d_forward(&h, w("dw")?, stride, hidden)?;
            let h = relu6_forward(&pre);
            cache.pre.push(pre);
            cache.post.push(h.clone());
            let y = conv2d_forward(&h, w("project")?, (1, 1), 1)?;
            if has_identity(stride, in_ch, out_ch) {
                y.add(x)?
            } else {
                y
            }
        }
        OpFamily::ResidualConv3x3 => {
            let pre = conv2d_forward(x, w("conv")?, stride, 1)?;
            let main = relu6_forward(&pre);
            cache.pre.push(pre);
            if specs.len() > 1 {
                main.add(&conv2d_forward(x, w("shortcut")?, stride, 1)?)?
            } else {
                main.add(x)?
            }
        }
    };
    Ok((y, cache))
}

/// Accumulates parameter gradients into `store` and returns `dL/dx`.
pub fn op_backward<T: Real>(
    store: &mut ParamStore<T>,
    prefix: &str,
    cache: &OpCache<T>,
    dy: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    let OpCache {
        op,
        stride,
        out_ch,
        x,
        pre,
        post,
    } = cache;
    let (stride, in_ch) = (*stride, x.dims[1]);
    let identity = has_identity(stride, in_ch, *out_ch);
    match op.family {
        OpFamily::SkipConnect => Ok(dy.clone()),
        OpFamily::MbConv => {
            let hidden = in_ch * op.expansion;
            let expanded = op.expansion > 1;
            let dw_in = if expanded { &post[0] } else { x };
            let (dw_pre, dw_post) = (&pre[pre.len() - 1], &post[post.len() - 1]);

            let wp = pname(prefix, "project");
            let (dh, dwp) = conv2d_backward(dw_post, store.value(&wp)?, dy, (1, 1), 1)?;
            store.accumulate_grad(&wp, &dwp)?;
            let dh = relu6_backward(dw_pre, &dh);

            let wd = pname(prefix, "dw");
            let (mut dx, dwd) = conv2d_backward(dw_in, store.value(&wd)?, &dh, stride, hidden)?;
            store.accumulate_grad(&wd, &dwd)?;

            if expanded {
                let dh = relu6_backward(&pre[0], &dx);
                let we = pname(prefix, "expand");
                let (dxe, dwe) = conv2d_backward(x, store.value(&we)?, &dh, (1, 1), 1)?;
                store.accumulate_grad(&we, &dwe)?;
                dx = dxe;
            }
            if identity {
                dx.add_assign(dy)?;
            }
            Ok(dx)
        }
        OpFamily::ResidualConv3x3 => {
            let dh = relu6_backward(&pre[0], dy);
            let wc = pname(prefix, "conv");
            let (mut dx, dwc) = conv2d_backward(x, store.value(&wc)?, &dh, stride, 1)?;
            store.accumulate_grad(&wc, &dwc)?;
            if identity {
                dx.add_assign(dy)?;
            } else {
                let ws = pname(prefix, "shortcut");
                let (dxs, dws) = conv2d_backward(x, store.value(&ws)?, dy, stride, 1)?;
                store.accumulate_grad(&ws, &dws)?;
                dx.add_assign(&dxs)?;
            }
            Ok(dx)
        }
    }
}
