//! A linear per-frame classifier on raw pixels separates clean data.

use seqnas_core::{gen_dataset, Dataset, GlyphSet, SpaceSpec, SynthConfig};

const WIN: usize = 8;

fn frame_features(ds: &Dataset) -> (Vec<Vec<f64>>, Vec<usize>) {
    let cell = 1 << ds.a;
    let pad = (WIN - cell) / 2;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in &ds.samples {
        for (f, &label) in s.labels.iter().enumerate() {
            let mut feat = Vec::with_capacity(ds.height * WIN + 1);
            for y in 0..ds.height {
                for dx in 0..WIN {
                    let x = (f * cell + dx) as i64 - pad as i64;
                    feat.push(if (0..ds.width as i64).contains(&x) {
                        s.image[y * ds.width + x as usize] as f64
                    } else {
                        0.0
                    });
                }
            }
            feat.push(1.0);
            xs.push(feat);
            ys.push(label as usize);
        }
    }
    (xs, ys)
}

#[test]
fn linear_frame_classifier_exceeds_95_percent() {
    let space = SpaceSpec::desk();
    let glyphs = GlyphSet::generate(10, 4, 1).unwrap();
    let make = |n, seed| {
        gen_dataset(
            &space,
            &glyphs,
            &SynthConfig {
                n,
                noise: 0.0,
                max_jitter: 1,
                seed,
            },
        )
        .unwrap()
    };
    let (xtr, ytr) = frame_features(&make(1500, 10));
    let (xte, yte) = frame_features(&make(300, 11));
    let d = xtr[0].len();
    let k = 10;
    let mut w = vec![vec![0.0f64; d]; k];
    let lr = 2.0;
    for _ in 0..600 {
        let mut grad = vec![vec![0.0f64; d]; k];
        for (x, &y) in xtr.iter().zip(&ytr) {
            let logits: Vec<f64> = w
                .iter()
                .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
                .collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in 0..k {
                let g = e[c] / z - if c == y { 1.0 } else { 0.0 };
                for (gi, xi) in grad[c].iter_mut().zip(x) {
                    *gi += g * xi;
                }
            }
        }
        let n = xtr.len() as f64;
        for c in 0..k {
            for i in 0..d {
                w[c][i] -= lr * grad[c][i] / n;
            }
        }
    }
    let correct = xte
        .iter()
        .zip(&yte)
        .filter(|(x, &y)| {
            let scores: Vec<f64> = w
                .iter()
                .map(|r| r.iter().zip(x.iter()).map(|(a, b)| a * b).sum())
                .collect();
            let best = (0..k)
                .max_by(|&i, &j| scores[i].total_cmp(&scores[j]))
                .unwrap();
            best == y
        })
        .count();
    let acc = correct as f64 / yte.len() as f64;
    assert!(acc > 0.95, "frame accuracy {acc}");
}
