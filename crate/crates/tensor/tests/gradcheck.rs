use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqnas_tensor::testutil::{grad_close, numeric_grad, random_tensor};
use seqnas_tensor::{
    conv2d_backward, conv2d_forward, frame_softmax_ce, relu6_backward, relu6_forward,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conv_grads_on_random_shapes(
        n in 1usize..=4,
        groups in 1usize..=2,
        cpg in 1usize..=4,
        ocpg in 1usize..=2,
        h in 1usize..=8,
        w in 1usize..=8,
        k in prop::sample::select(vec![1usize, 3, 5]),
        sh in 1usize..=2,
        sw in 1usize..=2,
        seed in any::<u64>(),
    ) {
        let c = groups * cpg;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor::<f64>([n, c, h, w], &mut rng);
        let wt = random_tensor::<f64>([groups * ocpg, cpg, k, k], &mut rng);
        let y = conv2d_forward(&x, &wt, (sh, sw), groups).unwrap();
        let probe = random_tensor::<f64>(y.dims, &mut rng);
        let (dx, dw) = conv2d_backward(&x, &wt, &probe, (sh, sw), groups).unwrap();
        let nx = numeric_grad(&x, |t| conv2d_forward(t, &wt, (sh, sw), groups).unwrap().dot(&probe).unwrap());
        let nw = numeric_grad(&wt, |t| conv2d_forward(&x, t, (sh, sw), groups).unwrap().dot(&probe).unwrap());
        for (a, b) in dx.data.iter().zip(&nx).chain(dw.data.iter().zip(&nw)) {
            prop_assert!(grad_close(*a, *b), "{a} vs {b}");
        }
    }

    #[test]
    fn relu6_and_ce_grads(n in 1usize..=4, k in 2usize..=8, f in 1usize..=8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = random_tensor::<f64>([n, k, 1, f], &mut rng).scale(4.0);
        let labels: Vec<usize> = (0..n * f).map(|i| (i * 31 + seed as usize) % k).collect();
        let (_, g) = frame_softmax_ce(&logits, &labels).unwrap();
        let num = numeric_grad(&logits, |t| frame_softmax_ce(t, &labels).unwrap().0);
        for (a, b) in g.data.iter().zip(&num) {
            prop_assert!(grad_close(*a, *b));
        }
        let probe = random_tensor::<f64>(logits.dims, &mut rng);
        let dr = relu6_backward(&logits, &probe);
        let num = numeric_grad(&logits, |t| relu6_forward(t).dot(&probe).unwrap());
        for (a, b) in dr.data.iter().zip(&num) {
            prop_assert!(grad_close(*a, *b));
        }
    }
}
