//! Analytic MAC and parameter counts, and the FLOPS regularizer.
//!
//! One multiply-accumulate counts as one FLOP. Activations, biases and
//! normalization are not counted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{layer_geometry, Architecture, OpFamily, OperationSpec, SpaceSpec, StridePath};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub macs: u64,
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub per_layer: Vec<LayerCost>,
    pub total_macs: u64,
    pub total_params: u64,
}

impl CostReport {
    pub fn from_layers(per_layer: Vec<LayerCost>) -> Self {
        let total_macs = per_layer.iter().map(|c| c.macs).sum();
        let total_params = per_layer.iter().map(|c| c.params).sum();
        CostReport {
            per_layer,
            total_macs,
            total_params,
        }
    }
}

/// Cost of one operation producing an `out_h x out_w x out_ch` map with the
/// given stride. MBConv is expand 1x1 (omitted when e == 1), depthwise kxk
/// carrying the stride, project 1x1. The residual 3x3 conv adds a strided 1x1
/// projection shortcut whenever the shape changes.
pub fn op_cost(
    op: &OperationSpec,
    in_ch: usize,
    out_ch: usize,
    out_h: usize,
    out_w: usize,
    stride: (usize, usize),
) -> Result<LayerCost> {
    if in_ch == 0 || out_ch == 0 || out_h == 0 || out_w == 0 || stride.0 == 0 || stride.1 == 0 {
        return Err(Error::Dimension("op_cost needs positive dimensions".into()));
    }
    let (ic, oc) = (in_ch as u64, out_ch as u64);
    let out_px = (out_h * out_w) as u64;
    let in_px = out_px * (stride.0 * stride.1) as u64;
    let cost = match op.family {
        OpFamily::SkipConnect => {
            if stride != (1, 1) || in_ch != out_ch {
                return Err(Error::IllegalSkip {
                    layer: 0,
                    reason: format!("stride {stride:?}, channels {in_ch} -> {out_ch}"),
                });
            }
            LayerCost::default()
        }
        OpFamily::MbConv => {
            let e = op.expansion as u64;
            let k2 = (op.kernel * op.kernel) as u64;
            let hidden = e * ic;
            let (expand_macs, expand_params) = if e > 1 {
                (ic * hidden * in_px, ic * hidden)
            } else {
                (0, 0)
            };
            LayerCost {
                macs: expand_macs + k2 * hidden * out_px + hidden * oc * out_px,
                params: expand_params + k2 * hidden + hidden * oc,
            }
        }
        OpFamily::ResidualConv3x3 => {
            let projected = stride != (1, 1) || in_ch != out_ch;
            let (pm, pp) = if projected {
                (ic * oc * out_px, ic * oc)
            } else {
                (0, 0)
            };
            LayerCost {
                macs: 9 * ic * oc * out_px + pm,
                params: 9 * ic * oc + pp,
            }
        }
    };
    Ok(cost)
}

/// Per-layer and total cost of the searchable stack (stem and head excluded).
pub fn arch_cost(arch: &Architecture, space: &SpaceSpec) -> Result<CostReport> {
    arch.validate(space)?;
    let geom = layer_geometry(&arch.path, space)?;
    let per_layer = geom
        .iter()
        .zip(&arch.ops)
        .enumerate()
        .map(|(i, (g, op))| {
            op_cost(op, g.in_ch, g.out_ch, g.out_h, g.out_w, g.stride()).map_err(|e| match e {
                Error::IllegalSkip { reason, .. } => Error::IllegalSkip {
                    layer: i + 1,
                    reason,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CostReport::from_layers(per_layer))
}

/// MACs of every vocabulary choice at every layer of `path`. Illegal choices
/// (skip where the shape changes) get 0; they carry zero weight anyway.
pub fn flops_table(path: &StridePath, space: &SpaceSpec) -> Result<Vec<Vec<f64>>> {
    let geom = layer_geometry(path, space)?;
    Ok(geom
        .iter()
        .map(|g| {
            space
                .op_vocab
                .iter()
                .map(|op| {
                    if op.is_skip() && !g.skip_legal() {
                        0.0
                    } else {
                        op_cost(op, g.in_ch, g.out_ch, g.out_h, g.out_w, g.stride())
                            .map(|c| c.macs as f64)
                            .unwrap_or(0.0)
                    }
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerConfig {
    pub beta: f64,
    /// Normalizing constant; r == 1 when expected FLOPS equal it.
    pub g: f64,
}

impl RegularizerConfig {
    pub fn new(beta: f64, g: f64) -> Result<Self> {
        let cfg = RegularizerConfig { beta, g };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Domain(format!(
                "beta must be >= 0, got {}",
                self.beta
            )));
        }
        if !(self.g > 1.0 && self.g.is_finite()) {
            return Err(Error::Domain(format!("G must be > 1, got {}", self.g)));
        }
        Ok(())
    }
}

fn check_alpha(alpha: &[Vec<f64>], table: &[Vec<f64>]) -> Result<()> {
    if alpha.len() != table.len() {
        return Err(Error::Dimension(format!(
            "alpha has {} layers, table has {}",
            alpha.len(),
            table.len()
        )));
    }
    for (l, (row, costs)) in alpha.iter().zip(table).enumerate() {
        if row.len() != costs.len() {
            return Err(Error::Dimension(format!(
                "layer {}: alpha has {} choices, table has {}",
                l + 1,
                row.len(),
                costs.len()
            )));
        }
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "layer {}: alpha row is not a probability vector (sum {sum})",
                l + 1
            )));
        }
    }
    Ok(())
}

/// `sum_l sum_j alpha[l][j] * table[l][j]`
pub fn expected_flops(alpha: &[Vec<f64>], table: &[Vec<f64>]) -> Result<f64> {
    check_alpha(alpha, table)?;
    let mut total = 0.0;
    for (row, costs) in alpha.iter().zip(table) {
        for (&p, &c) in row.iter().zip(costs) {
            total += p * c;
        }
    }
    Ok(total)
}

/// `(ln E / ln G)^beta` for a known expected FLOPS value `E > 1`.
pub fn regularizer_from_flops(expected: f64, cfg: &RegularizerConfig) -> Result<f64> {
    cfg.validate()?;
    if !(expected > 1.0) {
        return Err(Error::Domain(format!(
            "expected FLOPS must exceed 1, got {expected}"
        )));
    }
    if cfg.beta == 0.0 {
        return Ok(1.0);
    }
    Ok((expected.ln() / cfg.g.ln()).powf(cfg.beta))
}

/// `r(alpha) = (ln(expected_flops) / ln G)^beta`
pub fn regularizer(alpha: &[Vec<f64>], table: &[Vec<f64>], cfg: &RegularizerConfig) -> Result<f64> {
    regularizer_from_flops(expected_flops(alpha, table)?, cfg)
}

/// The regularizer and its gradient with respect to each alpha entry
/// (treating alpha as free weights, before any softmax).
pub fn regularizer_grad(
    alpha: &[Vec<f64>],
    table: &[Vec<f64>],
    cfg: &RegularizerConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let e = expected_flops(alpha, table)?;
    let r = regularizer_from_flops(e, cfg)?;
    let scale = if cfg.beta == 0.0 {
        0.0
    } else {
        let ratio = e.ln() / cfg.g.ln();
        cfg.beta * ratio.powf(cfg.beta - 1.0) / (e * cfg.g.ln())
    };
    let grad = table
        .iter()
        .map(|row| row.iter().map(|&c| scale * c).collect())
        .collect();
    Ok((r, grad))
}
