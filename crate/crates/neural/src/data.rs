use rand::seq::SliceRandom;
use rand::Rng;
use seqnas_core::Dataset;
use seqnas_tensor::{Real, Tensor4};

/// Images `(n, 1, H, W)` and batch-major frame labels.
#[derive(Debug, Clone)]
pub struct Batch<T = f32> {
    pub x: Tensor4<T>,
    pub labels: Vec<usize>,
}

pub fn make_batch<T: Real>(data: &Dataset, indices: &[usize]) -> Batch<T> {
    let (h, w) = (data.height, data.width);
    let mut x = Vec::with_capacity(indices.len() * h * w);
    let mut labels = Vec::with_capacity(indices.len() * data.frames());
    for &i in indices {
        let s = &data.samples[i];
        x.extend(s.image.iter().map(|&v| T::from_f64(v as f64)));
        labels.extend(s.labels.iter().map(|&l| l as usize));
    }
    Batch {
        x: Tensor4 {
            dims: [indices.len(), 1, h, w],
            data: x,
        },
        labels,
    }
}

/// Index chunks of size `batch` (last one may be short), optionally shuffled.
pub fn batch_indices(n: usize, batch: usize, rng: Option<&mut impl Rng>) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    if let Some(rng) = rng {
        idx.shuffle(rng);
    }
    idx.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}
