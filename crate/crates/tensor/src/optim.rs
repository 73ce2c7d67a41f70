use serde::{Deserialize, Serialize};

use crate::store::ParamStore;
use crate::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub eps: f64,
    pub lr: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        AdadeltaConfig {
            rho: 0.9,
            eps: 1e-6,
            lr: 1.0,
        }
    }
}

/// One ADADELTA update of a single scalar; returns the new value.
///
/// `v = rho v + (1 - rho) g^2`, `d = sqrt(u + eps) / sqrt(v + eps) g`,
/// `u = rho u + (1 - rho) d^2`, `theta -= lr d`.
#[inline]
pub fn adadelta_scalar(cfg: &AdadeltaConfig, theta: f64, g: f64, v: &mut f64, u: &mut f64) -> f64 {
    *v = cfg.rho * *v + (1.0 - cfg.rho) * g * g;
    let d = (*u + cfg.eps).sqrt() / (*v + cfg.eps).sqrt() * g;
    *u = cfg.rho * *u + (1.0 - cfg.rho) * d * d;
    theta - cfg.lr * d
}

/// Updates every parameter that received a gradient since the last
/// `zero_grad`; untouched parameters and their accumulators are left alone.
pub fn adadelta_step<T: Real>(store: &mut ParamStore<T>, cfg: &AdadeltaConfig) {
    for (_, p) in store.iter_mut() {
        if !p.touched {
            continue;
        }
        for i in 0..p.value.len() {
            let mut v = p.acc_grad.data[i].as_f64();
            let mut u = p.acc_delta.data[i].as_f64();
            let theta = adadelta_scalar(
                cfg,
                p.value.data[i].as_f64(),
                p.grad.data[i].as_f64(),
                &mut v,
                &mut u,
            );
            p.value.data[i] = T::from_f64(theta);
            p.acc_grad.data[i] = T::from_f64(v);
            p.acc_delta.data[i] = T::from_f64(u);
        }
    }
}
