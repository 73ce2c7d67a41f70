//! Grouped 2-D cross-correlation with same padding `(k - 1) / 2`.
//!
//! Weights are `(out_ch, in_ch / groups, kh, kw)`. Groups equal to the
//! channel count give a depthwise convolution; a 1x1 kernel is pointwise.

use crate::error::{Result, TensorError};
use crate::tensor::{Real, Tensor4};

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    oc: usize,
    icg: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
    ocg: usize,
}

impl Geometry {
    /// Output columns `ox` whose input column `ox * sw + kx - pw` is in range.
    #[inline]
    fn ox_range(&self, kx: usize) -> (usize, usize) {
        let lo = if self.pw > kx {
            (self.pw - kx).div_ceil(self.sw)
        } else {
            0
        };
        let hi = if self.w + self.pw > kx {
            ((self.w + self.pw - kx - 1) / self.sw + 1).min(self.ow)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

fn geometry<T: Real>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    stride: (usize, usize),
    groups: usize,
) -> Result<Geometry> {
    let [n, c, h, w] = x.dims;
    let [oc, icg, kh, kw] = weight.dims;
    let (sh, sw) = stride;
    let err = |m: String| Err(TensorError::Shape(m));
    if groups == 0 || c % groups != 0 || oc % groups != 0 {
        return err(format!("groups {groups} must divide channels {c} and {oc}"));
    }
    if icg != c / groups {
        return err(format!(
            "weight expects {icg} input channels per group, input has {}",
            c / groups
        ));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return err(format!("kernel {kh}x{kw} must be odd for same padding"));
    }
    if sh == 0 || sw == 0 || h == 0 || w == 0 {
        return err("zero stride or empty input".into());
    }
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    Ok(Geometry {
        n,
        c,
        h,
        w,
        oc,
        icg,
        kh,
        kw,
        sh,
        sw,
        ph,
        pw,
        oh: (h + 2 * ph - kh) / sh + 1,
        ow: (w + 2 * pw - kw) / sw + 1,
        ocg: oc / groups,
    })
}

pub fn conv2d_forward<T: Real>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    stride: (usize, usize),
    groups: usize,
) -> Result<Tensor4<T>> {
    let g = geometry(x, weight, stride, groups)?;
    let out_px = g.oh * g.ow;
    let mut acc = vec![0f64; g.n * g.oc * out_px];
    for b in 0..g.n {
        for o in 0..g.oc {
            let grp = o / g.ocg;
            let out = &mut acc[(b * g.oc + o) * out_px..][..out_px];
            for ci in 0..g.icg {
                let ic = grp * g.icg + ci;
                let xin = &x.data[(b * g.c + ic) * g.h * g.w..][..g.h * g.w];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let wv = weight.data[((o * g.icg + ci) * g.kh + ky) * g.kw + kx].as_f64();
                        let (lo, hi) = g.ox_range(kx);
                        for oy in 0..g.oh {
                            let iy = (oy * g.sh + ky) as isize - g.ph as isize;
                            if iy < 0 || iy >= g.h as isize {
                                continue;
                            }
                            let row = &xin[iy as usize * g.w..][..g.w];
                            let orow = &mut out[oy * g.ow..][..g.ow];
                            for ox in lo..hi {
                                orow[ox] += wv * row[ox * g.sw + kx - g.pw].as_f64();
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor4::from_f64_vec([g.n, g.oc, g.oh, g.ow], acc))
}

/// Returns `(grad_input, grad_weight)`.
pub fn conv2d_backward<T: Real>(
    x: &Tensor4<T>,
    weight: &Tensor4<T>,
    dy: &Tensor4<T>,
    stride: (usize, usize),
    groups: usize,
) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let g = geometry(x, weight, stride, groups)?;
    if dy.dims != [g.n, g.oc, g.oh, g.ow] {
        return Err(TensorError::Shape(format!(
            "output grad dims {:?}, expected {:?}",
            dy.dims,
            [g.n, g.oc, g.oh, g.ow]
        )));
    }
    let out_px = g.oh * g.ow;
    let in_px = g.h * g.w;
    let mut dx = vec![0f64; x.len()];
    let mut dw = vec![0f64; weight.len()];
    for b in 0..g.n {
        for o in 0..g.oc {
            let grp = o / g.ocg;
            let dout = &dy.data[(b * g.oc + o) * out_px..][..out_px];
            for ci in 0..g.icg {
                let ic = grp * g.icg + ci;
                let base = (b * g.c + ic) * in_px;
                let xin = &x.data[base..][..in_px];
                let dxin = &mut dx[base..][..in_px];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let widx = ((o * g.icg + ci) * g.kh + ky) * g.kw + kx;
                        let wv = weight.data[widx].as_f64();
                        let (lo, hi) = g.ox_range(kx);
                        let mut wsum = 0f64;
                        for oy in 0..g.oh {
                            let iy = (oy * g.sh + ky) as isize - g.ph as isize;
                            if iy < 0 || iy >= g.h as isize {
                                continue;
                            }
                            let roff = iy as usize * g.w;
                            let drow = &dout[oy * g.ow..][..g.ow];
                            for ox in lo..hi {
                                let ix = roff + ox * g.sw + kx - g.pw;
                                let d = drow[ox].as_f64();
                                dxin[ix] += wv * d;
                                wsum += d * xin[ix].as_f64();
                            }
                        }
                        dw[widx] += wsum;
                    }
                }
            }
        }
    }
    Ok((
        Tensor4::from_f64_vec(x.dims, dx),
        Tensor4::from_f64_vec(weight.dims, dw),
    ))
}

/// Adds a per-channel bias.
pub fn bias_forward<T: Real>(x: &Tensor4<T>, bias: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [n, c, h, w] = x.dims;
    if bias.len() != c {
        return Err(TensorError::Shape(format!(
            "bias has {} entries for {c} channels",
            bias.len()
        )));
    }
    let mut y = x.clone();
    for b in 0..n {
        for ch in 0..c {
            let bv = bias.data[ch].as_f64();
            for v in &mut y.data[(b * c + ch) * h * w..][..h * w] {
                *v = T::from_f64(v.as_f64() + bv);
            }
        }
    }
    Ok(y)
}

/// Gradient of the bias: per-channel sum of `dy`, in the bias's own shape.
pub fn bias_backward<T: Real>(dy: &Tensor4<T>, bias_dims: [usize; 4]) -> Tensor4<T> {
    let [n, c, h, w] = dy.dims;
    let mut acc = vec![0f64; c];
    for b in 0..n {
        for (ch, a) in acc.iter_mut().enumerate() {
            *a += dy.data[(b * c + ch) * h * w..][..h * w]
                .iter()
                .map(|v| v.as_f64())
                .sum::<f64>();
        }
    }
    Tensor4::from_f64_vec(bias_dims, acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{assert_grad_close, numeric_grad, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_1x1() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor::<f32>([2, 3, 4, 5], &mut rng);
        let mut w = Tensor4::<f32>::zeros([3, 3, 1, 1]);
        for i in 0..3 {
            w.data[i * 3 + i] = 1.0;
        }
        assert_eq!(conv2d_forward(&x, &w, (1, 1), 1).unwrap(), x);
    }

    #[test]
    fn ones_3x3_center_is_nine() {
        let x = Tensor4::<f32>::from_vec([1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let w = Tensor4::<f32>::from_vec([1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let y = conv2d_forward(&x, &w, (1, 1), 1).unwrap();
        assert_eq!(y.data[4], 9.0);
        assert_eq!(y.data[0], 4.0);
    }

    #[test]
    fn strided_output_dims() {
        let x = Tensor4::<f32>::zeros([1, 4, 8, 6]);
        let w = Tensor4::<f32>::zeros([4, 1, 5, 5]);
        let y = conv2d_forward(&x, &w, (2, 1), 4).unwrap();
        assert_eq!(y.dims, [1, 4, 4, 6]);
        let w = Tensor4::<f32>::zeros([8, 4, 3, 3]);
        assert_eq!(
            conv2d_forward(&x, &w, (2, 2), 1).unwrap().dims,
            [1, 8, 4, 3]
        );
    }

    #[test]
    fn shape_mismatch_errors() {
        let x = Tensor4::<f32>::zeros([1, 4, 8, 8]);
        assert!(conv2d_forward(&x, &Tensor4::zeros([4, 3, 3, 3]), (1, 1), 1).is_err());
        assert!(conv2d_forward(&x, &Tensor4::zeros([4, 4, 2, 2]), (1, 1), 1).is_err());
        assert!(conv2d_forward(&x, &Tensor4::zeros([3, 1, 3, 3]), (1, 1), 4).is_err());
        let w = Tensor4::<f32>::zeros([4, 4, 3, 3]);
        assert!(conv2d_backward(&x, &w, &Tensor4::zeros([1, 4, 4, 4]), (1, 1), 1).is_err());
    }

    fn check_conv_grads(
        xd: [usize; 4],
        wd: [usize; 4],
        stride: (usize, usize),
        groups: usize,
        seed: u64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor::<f64>(xd, &mut rng);
        let w = random_tensor::<f64>(wd, &mut rng);
        let y0 = conv2d_forward(&x, &w, stride, groups).unwrap();
        let probe = random_tensor::<f64>(y0.dims, &mut rng);
        let loss = |x: &Tensor4<f64>, w: &Tensor4<f64>| {
            conv2d_forward(x, w, stride, groups)
                .unwrap()
                .dot(&probe)
                .unwrap()
        };
        let (dx, dw) = conv2d_backward(&x, &w, &probe, stride, groups).unwrap();
        assert_grad_close(&dx.data, &numeric_grad(&x, |t| loss(t, &w)));
        assert_grad_close(&dw.data, &numeric_grad(&w, |t| loss(&x, t)));
    }

    #[test]
    fn grads_dense_3x3() {
        check_conv_grads([2, 3, 6, 5], [4, 3, 3, 3], (1, 1), 1, 3);
    }

    #[test]
    fn grads_strided_depthwise_5x5() {
        check_conv_grads([2, 4, 8, 8], [4, 1, 5, 5], (2, 2), 4, 4);
        check_conv_grads([1, 4, 8, 6], [4, 1, 3, 3], (2, 1), 4, 5);
    }

    #[test]
    fn grads_pointwise_grouped() {
        check_conv_grads([2, 6, 4, 4], [4, 3, 1, 1], (1, 1), 2, 6);
        check_conv_grads([1, 6, 4, 4], [8, 6, 1, 1], (2, 2), 1, 7);
    }

    #[test]
    fn bias_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_tensor::<f64>([2, 3, 1, 4], &mut rng);
        let b = random_tensor::<f64>([3, 1, 1, 1], &mut rng);
        let probe = random_tensor::<f64>(x.dims, &mut rng);
        let db = bias_backward(&probe, b.dims);
        let num = numeric_grad(&b, |t| bias_forward(&x, t).unwrap().dot(&probe).unwrap());
        assert_grad_close(&db.data, &num);
    }
}
