//! Named parameters with gradients and ADADELTA state, plus checkpoint I/O.
//!
//! A checkpoint is two files: `<stem>.bin`, every parameter's values as
//! little-endian f32 concatenated in name order, and `<stem>.json`, a
//! manifest listing each name, its dims and its offset (in floats).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::tensor::{Real, Tensor4};

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T = f32> {
    pub value: Tensor4<T>,
    pub grad: Tensor4<T>,
    /// Running average of squared gradients.
    pub acc_grad: Tensor4<T>,
    /// Running average of squared updates.
    pub acc_delta: Tensor4<T>,
    /// Received a gradient since the last `zero_grad`.
    pub touched: bool,
}

impl<T: Real> Param<T> {
    pub fn new(value: Tensor4<T>) -> Self {
        let z = Tensor4::zeros(value.dims);
        Param {
            grad: z.clone(),
            acc_grad: z.clone(),
            acc_delta: z,
            value,
            touched: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T = f32> {
    params: BTreeMap<String, Param<T>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    dims: [usize; 4],
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    params: Vec<ManifestEntry>,
}

const FORMAT: &str = "f32le";

fn stem_with(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor4<T>) {
        self.params.insert(name.into(), Param::new(value));
    }

    /// Uniform in `±gain * sqrt(3 / fan_in)`, i.e. variance `gain^2 / fan_in`.
    /// Does nothing if `name` already exists.
    pub fn init_uniform(
        &mut self,
        name: &str,
        dims: [usize; 4],
        fan_in: usize,
        gain: f64,
        rng: &mut impl Rng,
    ) {
        if self.params.contains_key(name) {
            return;
        }
        let bound = gain * (3.0 / fan_in.max(1) as f64).sqrt();
        let n = dims.iter().product();
        let data = (0..n)
            .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
            .collect();
        self.insert(name, Tensor4 { dims, data });
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn param(&self, name: &str) -> Result<&Param<T>> {
        self.params
            .get(name)
            .ok_or_else(|| TensorError::MissingParam(name.to_string()))
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut Param<T>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| TensorError::MissingParam(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor4<T>> {
        Ok(&self.param(name)?.value)
    }

    pub fn accumulate_grad(&mut self, name: &str, grad: &Tensor4<T>) -> Result<()> {
        let p = self.param_mut(name)?;
        p.grad.add_assign(grad)?;
        p.touched = true;
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad.data.iter_mut().for_each(|v| *v = T::default());
            p.touched = false;
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count of parameters whose name starts with `prefix`.
    pub fn param_count(&self, prefix: &str) -> u64 {
        self.params
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, p)| p.value.len() as u64)
            .sum()
    }

    /// Parameter values concatenated in name order, restricted to `prefix`.
    pub fn flat_values(&self, prefix: &str) -> Vec<T> {
        self.params
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .flat_map(|(_, p)| p.value.data.iter().copied())
            .collect()
    }

    /// Copy with values converted to another element type; optimizer state is reset.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for (k, p) in &self.params {
            out.insert(k.clone(), p.value.cast());
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(|p| p.value.all_finite())
    }

    pub fn save_checkpoint(&self, stem: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        let mut entries = Vec::new();
        let mut offset = 0;
        for (name, p) in &self.params {
            entries.push(ManifestEntry {
                name: name.clone(),
                dims: p.value.dims,
                offset,
            });
            offset += p.value.len();
            for v in &p.value.data {
                bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
        let manifest = Manifest {
            format: FORMAT.into(),
            params: entries,
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(stem_with(stem, ".bin"), bytes)?;
        fs::write(stem_with(stem, ".json"), json)?;
        Ok(())
    }

    /// Loads values into a fresh store; optimizer state starts at zero.
    pub fn load_checkpoint(stem: &Path) -> Result<Self> {
        let json = fs::read_to_string(stem_with(stem, ".json"))?;
        let manifest: Manifest =
            serde_json::from_str(&json).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        if manifest.format != FORMAT {
            return Err(TensorError::Checkpoint(format!(
                "unknown format `{}`",
                manifest.format
            )));
        }
        let bytes = fs::read(stem_with(stem, ".bin"))?;
        if bytes.len() % 4 != 0 {
            return Err(TensorError::Checkpoint(
                "binary length not a multiple of 4".into(),
            ));
        }
        let floats: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut store = ParamStore::new();
        for e in manifest.params {
            let n: usize = e.dims.iter().product();
            let slice = floats.get(e.offset..e.offset + n).ok_or_else(|| {
                TensorError::Checkpoint(format!("`{}` runs past the end of the data", e.name))
            })?;
            let data = slice.iter().map(|&v| T::from_f64(v as f64)).collect();
            store.insert(e.name, Tensor4 { dims: e.dims, data });
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_store(seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        s.init_uniform("b.w", [4, 3, 3, 3], 27, 1.0, &mut rng);
        s.init_uniform("a.w", [2, 1, 1, 1], 1, 1.0, &mut rng);
        s
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let s = sample_store(3);
        let bound = (3.0f64 / 27.0).sqrt();
        assert!(s
            .value("b.w")
            .unwrap()
            .data
            .iter()
            .all(|v| (*v as f64).abs() <= bound));
        assert_eq!(s, sample_store(3));
        assert_ne!(s, sample_store(4));
        assert_eq!(s.param_count(""), 110);
        assert_eq!(s.param_count("a."), 2);
    }

    #[test]
    fn grads_accumulate_and_reset() {
        let mut s = sample_store(1);
        let g = Tensor4::from_vec([2, 1, 1, 1], vec![1.0, 2.0]).unwrap();
        s.accumulate_grad("a.w", &g).unwrap();
        s.accumulate_grad("a.w", &g).unwrap();
        assert_eq!(s.param("a.w").unwrap().grad.data, vec![2.0, 4.0]);
        assert!(s.param("a.w").unwrap().touched);
        assert!(!s.param("b.w").unwrap().touched);
        s.zero_grad();
        assert_eq!(s.param("a.w").unwrap().grad.data, vec![0.0, 0.0]);
        assert!(matches!(
            s.accumulate_grad("zz", &g),
            Err(TensorError::MissingParam(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("ck/step1");
        let s = sample_store(8);
        s.save_checkpoint(&stem).unwrap();
        let bin = fs::read(stem_with(&stem, ".bin")).unwrap();
        assert_eq!(bin.len(), 110 * 4);
        // "a.w" sorts first, so the file starts with its first value.
        let first = f32::from_le_bytes([bin[0], bin[1], bin[2], bin[3]]);
        assert_eq!(first, s.value("a.w").unwrap().data[0]);
        let back: ParamStore = ParamStore::load_checkpoint(&stem).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn truncated_checkpoint_errors() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("c");
        sample_store(1).save_checkpoint(&stem).unwrap();
        fs::write(stem_with(&stem, ".bin"), [0u8; 8]).unwrap();
        assert!(ParamStore::<f32>::load_checkpoint(&stem).is_err());
    }
}
