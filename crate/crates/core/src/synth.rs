//! Procedural text-line images with one glyph label per output frame.
//!
//! Each image is split into `W / 2^a` cells of width `2^a`; each cell gets one
//! random glyph, centered vertically and horizontally, shifted by up to
//! `max_jitter` pixels. Noise blends each pixel as `(1 - noise) * v + noise * u`
//! with `u ~ U[0, 1)`.
//!
//! # File layout
//!
//! All integers little-endian.
//!
//! ```text
//! magic   4 bytes  "SQDS"
//! version u32      1
//! H, W    u32, u32
//! a       u32
//! K       u32
//! n       u32
//! n x { H*W f32 pixels (row-major), W/2^a u8 labels }
//! ```

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::space::SpaceSpec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlyphSet {
    pub size: usize,
    pub seed: u64,
    /// `size * size` row-major masks, one per class.
    pub bitmaps: Vec<Vec<bool>>,
}

impl GlyphSet {
    /// Rejection-samples `k` random masks whose pairwise Hamming distance is
    /// at least a quarter of the bits.
    pub fn generate(k: usize, size: usize, seed: u64) -> Result<Self> {
        if k == 0 || k > 255 || size == 0 {
            return Err(Error::Config(format!("bad glyph set: k={k}, size={size}")));
        }
        let bits = size * size;
        let min_dist = bits.div_ceil(4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bitmaps: Vec<Vec<bool>> = Vec::with_capacity(k);
        let mut attempts = 0usize;
        while bitmaps.len() < k {
            attempts += 1;
            if attempts > 100_000 {
                return Err(Error::Config(format!(
                    "cannot fit {k} glyphs of {size}x{size} at distance {min_dist}"
                )));
            }
            let cand: Vec<bool> = (0..bits).map(|_| rng.gen_bool(0.5)).collect();
            if !cand.iter().any(|&b| b) {
                continue;
            }
            let ok = bitmaps
                .iter()
                .all(|g| g.iter().zip(&cand).filter(|(x, y)| x != y).count() >= min_dist);
            if ok {
                bitmaps.push(cand);
            }
        }
        Ok(GlyphSet {
            size,
            seed,
            bitmaps,
        })
    }

    pub fn classes(&self) -> usize {
        self.bitmaps.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqSample {
    /// `H * W` row-major pixels in [0, 1].
    pub image: Vec<f32>,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub height: usize,
    pub width: usize,
    pub a: usize,
    pub classes: usize,
    pub samples: Vec<SeqSample>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub noise: f64,
    pub max_jitter: usize,
    pub seed: u64,
}

impl Dataset {
    pub fn frames(&self) -> usize {
        self.width >> self.a
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn with_samples(&self, samples: Vec<SeqSample>) -> Dataset {
        Dataset {
            samples,
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Dataset {
        Dataset {
            height: self.height,
            width: self.width,
            a: self.a,
            classes: self.classes,
            samples: Vec::new(),
        }
    }

    /// Seeded disjoint partition: `round(train_frac * n)` samples go to the
    /// first set.
    pub fn split(&self, train_frac: f64, seed: u64) -> (Dataset, Dataset) {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((self.len() as f64) * train_frac).round() as usize;
        let (tr, va) = idx.split_at(n_train.min(self.len()));
        let mut tr = tr.to_vec();
        let mut va = va.to_vec();
        tr.sort_unstable();
        va.sort_unstable();
        (
            self.with_samples(tr.iter().map(|&i| self.samples[i].clone()).collect()),
            self.with_samples(va.iter().map(|&i| self.samples[i].clone()).collect()),
        )
    }

    /// Checks that the data matches a space's input and frame geometry.
    pub fn check_space(&self, space: &SpaceSpec) -> Result<()> {
        if self.height != space.input_h || self.width != space.input_w || self.a != space.a {
            return Err(Error::Geometry(format!(
                "dataset {}x{} (a={}) does not match space {}x{} (a={})",
                self.height, self.width, self.a, space.input_h, space.input_w, space.a
            )));
        }
        if self.frames() != space.c2 {
            return Err(Error::Geometry(format!(
                "dataset has {} frames, space outputs {}",
                self.frames(),
                space.c2
            )));
        }
        Ok(())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(b"SQDS")?;
        for v in [1, self.height, self.width, self.a, self.classes, self.len()] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for s in &self.samples {
            for px in &s.image {
                w.write_all(&px.to_le_bytes())?;
            }
            w.write_all(&s.labels)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Dataset> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"SQDS" {
            return Err(Error::Io("not a dataset file (bad magic)".into()));
        }
        let mut hdr = [0u32; 6];
        for v in hdr.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *v = u32::from_le_bytes(b);
        }
        let [version, h, w, a, k, n] = hdr.map(|x| x as usize);
        if version != 1 {
            return Err(Error::Io(format!("unsupported dataset version {version}")));
        }
        if a >= usize::BITS as usize || w % (1 << a) != 0 {
            return Err(Error::Io("inconsistent dataset header".into()));
        }
        let frames = w >> a;
        let mut samples = Vec::with_capacity(n);
        let mut buf = vec![0u8; h * w * 4];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            let image = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let mut labels = vec![0u8; frames];
            r.read_exact(&mut labels)?;
            if labels.iter().any(|&l| l as usize >= k) {
                return Err(Error::Io("label out of range".into()));
            }
            samples.push(SeqSample { image, labels });
        }
        Ok(Dataset {
            height: h,
            width: w,
            a,
            classes: k,
            samples,
        })
    }
}

/// Generates one sample; depends only on (`cfg.seed`, `index`).
pub fn gen_sample(
    space: &SpaceSpec,
    glyphs: &GlyphSet,
    cfg: &SynthConfig,
    index: usize,
) -> SeqSample {
    let (h, w) = (space.input_h, space.input_w);
    let cell = 1usize << space.a;
    let frames = w / cell;
    let g = glyphs.size;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let mut image = vec![0f32; h * w];
    let mut labels = Vec::with_capacity(frames);
    let y0 = (h - g) / 2;
    for f in 0..frames {
        let label = rng.gen_range(0..glyphs.classes());
        labels.push(label as u8);
        let jitter = if cfg.max_jitter > 0 {
            rng.gen_range(-(cfg.max_jitter as i64)..=cfg.max_jitter as i64)
        } else {
            0
        };
        let x0 = (f * cell + (cell - g) / 2) as i64 + jitter;
        let bitmap = &glyphs.bitmaps[label];
        for gy in 0..g {
            for gx in 0..g {
                let x = x0 + gx as i64;
                if bitmap[gy * g + gx] && (0..w as i64).contains(&x) {
                    image[(y0 + gy) * w + x as usize] = 1.0;
                }
            }
        }
    }
    if cfg.noise > 0.0 {
        let keep = (1.0 - cfg.noise) as f32;
        for px in image.iter_mut() {
            let u: f32 = rng.gen();
            *px = keep * *px + cfg.noise as f32 * u;
        }
    }
    SeqSample { image, labels }
}

pub fn gen_dataset(space: &SpaceSpec, glyphs: &GlyphSet, cfg: &SynthConfig) -> Result<Dataset> {
    space.validate()?;
    let cell = 1usize << space.a;
    if space.input_w % cell != 0 {
        return Err(Error::Geometry(format!(
            "width {} not divisible by cell width {cell}",
            space.input_w
        )));
    }
    if glyphs.size > cell || glyphs.size > space.input_h {
        return Err(Error::Geometry(format!(
            "glyph size {} does not fit a {}x{cell} cell",
            glyphs.size, space.input_h
        )));
    }
    let max_jitter = if space.a == 0 { 0 } else { cell / 2 };
    if cfg.max_jitter > max_jitter {
        return Err(Error::Geometry(format!(
            "jitter {} exceeds half a cell ({max_jitter})",
            cfg.max_jitter
        )));
    }
    if !(0.0..1.0).contains(&cfg.noise) {
        return Err(Error::Config(format!(
            "noise must be in [0, 1), got {}",
            cfg.noise
        )));
    }
    let samples = (0..cfg.n)
        .map(|i| gen_sample(space, glyphs, cfg, i))
        .collect();
    Ok(Dataset {
        height: space.input_h,
        width: space.input_w,
        a: space.a,
        classes: glyphs.classes(),
        samples,
    })
}
