//! Central finite differences, shared by the kernel and network tests.

use rand::Rng;

use crate::tensor::{Real, Tensor4};

pub const FD_STEP: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-3;
pub const ABS_TOL: f64 = 1e-5;

pub fn random_tensor<T: Real>(dims: [usize; 4], rng: &mut impl Rng) -> Tensor4<T> {
    let n = dims.iter().product();
    Tensor4 {
        dims,
        data: (0..n)
            .map(|_| T::from_f64(rng.gen_range(-1.0..1.0)))
            .collect(),
    }
}

/// Central differences of a scalar function over every element of `x`.
pub fn numeric_grad(x: &Tensor4<f64>, mut f: impl FnMut(&Tensor4<f64>) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data[i];
            probe.data[i] = orig + FD_STEP;
            let up = f(&probe);
            probe.data[i] = orig - FD_STEP;
            let down = f(&probe);
            probe.data[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn grad_close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= ABS_TOL + REL_TOL * analytic.abs().max(numeric.abs())
}

pub fn assert_grad_close(analytic: &[f64], numeric: &[f64]) {
    assert_eq!(analytic.len(), numeric.len());
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        assert!(grad_close(a, n), "element {i}: analytic {a} vs numeric {n}");
    }
}
