use crate::error::{Result, TensorError};
use crate::tensor::{Real, Tensor4};

/// Per-frame softmax cross-entropy over logits `(batch, classes, 1, frames)`.
///
/// `labels` is batch-major: `labels[b * frames + f]`. Returns the mean loss
/// over all frames and its gradient with respect to the logits.
pub fn frame_softmax_ce<T: Real>(
    logits: &Tensor4<T>,
    labels: &[usize],
) -> Result<(f64, Tensor4<T>)> {
    let [n, k, h, f] = logits.dims;
    if h != 1 {
        return Err(TensorError::Shape(format!(
            "logit height must be 1, got {h}"
        )));
    }
    if labels.len() != n * f {
        return Err(TensorError::Shape(format!(
            "{} labels for {n} x {f} frames",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(TensorError::Label {
            label: bad,
            classes: k,
        });
    }
    let count = (n * f) as f64;
    let mut grad = vec![0f64; logits.len()];
    let mut total = 0f64;
    let mut probs = vec![0f64; k];
    for b in 0..n {
        for t in 0..f {
            let at = |c: usize| (b * k + c) * f + t;
            let m = (0..k)
                .map(|c| logits.data[at(c)].as_f64())
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0f64;
            for (c, p) in probs.iter_mut().enumerate() {
                *p = (logits.data[at(c)].as_f64() - m).exp();
                z += *p;
            }
            let y = labels[b * f + t];
            total += -((probs[y] / z).ln());
            for (c, p) in probs.iter().enumerate() {
                let target = if c == y { 1.0 } else { 0.0 };
                grad[at(c)] = (p / z - target) / count;
            }
        }
    }
    Ok((total / count, Tensor4::from_f64_vec(logits.dims, grad)))
}

/// Argmax class per frame, batch-major; ties go to the lowest class.
pub fn frame_predictions<T: Real>(logits: &Tensor4<T>) -> Vec<usize> {
    let [n, k, _, f] = logits.dims;
    let mut out = Vec::with_capacity(n * f);
    for b in 0..n {
        for t in 0..f {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for c in 0..k {
                let v = logits.data[(b * k + c) * f + t].as_f64();
                if v > best_v {
                    best = c;
                    best_v = v;
                }
            }
            out.push(best);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{assert_grad_close, numeric_grad, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Tensor4::<f32>::zeros([2, 10, 1, 3]);
        let (loss, _) = frame_softmax_ce(&logits, &[0, 1, 2, 3, 4, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_logits_give_small_loss() {
        let mut logits = Tensor4::<f32>::zeros([1, 10, 1, 2]);
        logits.data[3 * 2] = 10.0;
        logits.data[7 * 2 + 1] = 10.0;
        let (loss, _) = frame_softmax_ce(&logits, &[3, 7]).unwrap();
        assert!(loss < 0.01);
        assert_eq!(frame_predictions(&logits), vec![3, 7]);
    }

    #[test]
    fn label_out_of_range() {
        let logits = Tensor4::<f32>::zeros([1, 4, 1, 1]);
        assert!(matches!(
            frame_softmax_ce(&logits, &[4]),
            Err(TensorError::Label {
                label: 4,
                classes: 4
            })
        ));
        let tall = Tensor4::<f32>::zeros([1, 4, 2, 1]);
        assert!(frame_softmax_ce(&tall, &[0]).is_err());
    }

    #[test]
    fn grad_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let logits = random_tensor::<f64>([3, 5, 1, 4], &mut rng).scale(3.0);
        let labels: Vec<usize> = (0..12).map(|i| (i * 7) % 5).collect();
        let (_, g) = frame_softmax_ce(&logits, &labels).unwrap();
        let num = numeric_grad(&logits, |t| frame_softmax_ce(t, &labels).unwrap().0);
        assert_grad_close(&g.data, &num);
    }
}
