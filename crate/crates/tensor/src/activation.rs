use crate::tensor::{Real, Tensor4};

pub fn relu6_forward<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    Tensor4 {
        dims: x.dims,
        data: x
            .data
            .iter()
            .map(|v| T::from_f64(v.as_f64().clamp(0.0, 6.0)))
            .collect(),
    }
}

/// Passes `dy` where the pre-activation `x` is strictly inside (0, 6).
pub fn relu6_backward<T: Real>(x: &Tensor4<T>, dy: &Tensor4<T>) -> Tensor4<T> {
    Tensor4 {
        dims: x.dims,
        data: x
            .data
            .iter()
            .zip(&dy.data)
            .map(|(v, d)| {
                let v = v.as_f64();
                if v > 0.0 && v < 6.0 {
                    *d
                } else {
                    T::default()
                }
            })
            .collect(),
    }
}
