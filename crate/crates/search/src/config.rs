//! Run configuration: a flat `key = value` file with `[section]` prefixes.
//!
//! Every key has a default, unknown keys are rejected, and `to_kv` renders
//! the fully resolved configuration (the `config.snapshot` artifact). A few
//! values accept `auto`, which names a fixed rule rather than hidden state.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use seqnas_core::{KvFile, SpaceSpec, SPACE_KEYS};
use seqnas_neural::AlphaMode;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SearchError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Surrogate,
    Neural,
}

impl FromStr for Backend {
    type Err = SearchError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "surrogate" => Ok(Backend::Surrogate),
            "neural" => Ok(Backend::Neural),
            _ => Err(SearchError::Config(format!("unknown backend `{s}`"))),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Surrogate => "surrogate",
            Backend::Neural => "neural",
        })
    }
}

/// A value that is either given or derived by a documented rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Auto<T> {
    Auto,
    Value(T),
}

impl<T: Copy> Auto<T> {
    pub fn or(self, fallback: T) -> T {
        match self {
            Auto::Auto => fallback,
            Auto::Value(v) => v,
        }
    }
}

impl<T: fmt::Display> fmt::Display for Auto<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Auto::Auto => f.write_str("auto"),
            Auto::Value(v) => v.fmt(f),
        }
    }
}

fn parse_auto<T: FromStr>(kv: &KvFile, key: &str, default: Auto<T>) -> Result<Auto<T>> {
    match kv.get(key) {
        None => Ok(default),
        Some("auto") => Ok(Auto::Auto),
        Some(v) => v
            .parse()
            .map(Auto::Value)
            .map_err(|_| SearchError::Config(format!("bad value for `{key}`: `{v}`"))),
    }
}

/// The search controller's settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRun {
    pub space: SpaceSpec,
    pub backend: Backend,
    pub seed: u64,
    pub step1_epochs: usize,
    pub step2_warmup_epochs: usize,
    pub step2_epochs: usize,
    pub batch: usize,
    /// `auto`: twice the cost of the cheapest non-skip op at every layer of
    /// the searched path.
    pub budget_macs: Auto<u64>,
    pub beta: f64,
    /// Regularizer pivot; `auto`: the budget.
    pub reg_g: Auto<f64>,
    /// Seeded random starts of the surrogate coordinate ascent (besides the
    /// all-lowest-index start).
    pub restarts: usize,
    pub random_candidates: usize,
    /// Without fixed downsampling positions, step 1 tries every path when
    /// there are at most this many; otherwise the stage-aligned ones.
    pub max_full_paths: usize,
    /// Step-1 worker threads; 0 means `SEQNAS_THREADS` or all cores.
    pub threads: usize,
    pub weight_lr: f64,
    pub arch_lr: f64,
    pub rho: f64,
    pub eps: f64,
    pub temperature: f64,
    pub alpha_mode: AlphaMode,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub classes: usize,
    pub glyph_size: usize,
    pub glyph_seed: u64,
    pub n: usize,
    pub noise: f64,
    pub jitter: usize,
    pub seed: u64,
    pub train_frac: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    /// `auto`: the run seed.
    pub seed: Auto<u64>,
    /// `auto`: 1.5x the all-mb3e1 cost on the first step-1 candidate.
    pub target_macs: Auto<u64>,
    pub w_cost: f64,
    pub w_path: f64,
    pub affinity_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run: SearchRun,
    pub data: DataConfig,
    pub surrogate: SurrogateConfig,
}

const RUN_KEYS: &[&str] = &[
    "run.backend",
    "run.seed",
    "run.step1_epochs",
    "run.step2_warmup_epochs",
    "run.step2_epochs",
    "run.batch",
    "run.budget_macs",
    "run.restarts",
    "run.random_candidates",
    "run.max_full_paths",
    "run.threads",
    "run.output_dir",
    "reg.beta",
    "reg.g",
    "optim.weight_lr",
    "optim.arch_lr",
    "optim.rho",
    "optim.eps",
    "optim.temperature",
    "optim.alpha_mode",
    "data.classes",
    "data.glyph_size",
    "data.glyph_seed",
    "data.n",
    "data.noise",
    "data.jitter",
    "data.seed",
    "data.train_frac",
    "surrogate.seed",
    "surrogate.target_macs",
    "surrogate.w_cost",
    "surrogate.w_path",
    "surrogate.affinity_scale",
];

/// Every accepted key.
pub fn known_keys() -> Vec<String> {
    SPACE_KEYS
        .iter()
        .map(|k| format!("space.{k}"))
        .chain(RUN_KEYS.iter().map(|k| k.to_string()))
        .collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run: SearchRun {
                space: SpaceSpec::desk(),
                backend: Backend::Surrogate,
                seed: 0,
                step1_epochs: 5,
                step2_warmup_epochs: 1,
                step2_epochs: 2,
                batch: 32,
                budget_macs: Auto::Auto,
                beta: 0.6,
                reg_g: Auto::Auto,
                restarts: 8,
                random_candidates: 10,
                max_full_paths: 64,
                threads: 0,
                weight_lr: 1.0,
                arch_lr: 1.0,
                rho: 0.9,
                eps: 1e-6,
                temperature: 1.0,
                alpha_mode: AlphaMode::Mixture,
                output_dir: PathBuf::from("runs/seqnas"),
            },
            data: DataConfig {
                classes: 10,
                glyph_size: 4,
                glyph_seed: 1,
                n: 2000,
                noise: 0.1,
                jitter: 1,
                seed: 1,
                train_frac: 0.8,
            },
            surrogate: SurrogateConfig {
                seed: Auto::Auto,
                target_macs: Auto::Auto,
                w_cost: 0.05,
                w_path: 0.5,
                affinity_scale: 0.02,
            },
        }
    }
}

fn get<T: FromStr + Copy>(kv: &KvFile, key: &str, default: T) -> Result<T> {
    Ok(kv.parse_value(key)?.unwrap_or(default))
}

impl RunConfig {
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let known = known_keys();
        let known: Vec<&str> = known.iter().map(String::as_str).collect();
        kv.check_keys(&known)?;
        let d = RunConfig::default();
        let alpha_mode = match kv.get("optim.alpha_mode") {
            None => d.run.alpha_mode,
            Some("mixture") => AlphaMode::Mixture,
            Some("sampled") => AlphaMode::Sampled,
            Some(v) => return Err(SearchError::Config(format!("unknown alpha mode `{v}`"))),
        };
        let backend = match kv.get("run.backend") {
            None => d.run.backend,
            Some(v) => v.parse()?,
        };
        let cfg = RunConfig {
            run: SearchRun {
                space: SpaceSpec::from_kv(kv, "space.")?,
                backend,
                seed: get(kv, "run.seed", d.run.seed)?,
                step1_epochs: get(kv, "run.step1_epochs", d.run.step1_epochs)?,
                step2_warmup_epochs: get(kv, "run.step2_warmup_epochs", d.run.step2_warmup_epochs)?,
                step2_epochs: get(kv, "run.step2_epochs", d.run.step2_epochs)?,
                batch: get(kv, "run.batch", d.run.batch)?,
                budget_macs: parse_auto(kv, "run.budget_macs", d.run.budget_macs)?,
                beta: get(kv, "reg.beta", d.run.beta)?,
                reg_g: parse_auto(kv, "reg.g", d.run.reg_g)?,
                restarts: get(kv, "run.restarts", d.run.restarts)?,
                random_candidates: get(kv, "run.random_candidates", d.run.random_candidates)?,
                max_full_paths: get(kv, "run.max_full_paths", d.run.max_full_paths)?,
                threads: get(kv, "run.threads", d.run.threads)?,
                weight_lr: get(kv, "optim.weight_lr", d.run.weight_lr)?,
                arch_lr: get(kv, "optim.arch_lr", d.run.arch_lr)?,
                rho: get(kv, "optim.rho", d.run.rho)?,
                eps: get(kv, "optim.eps", d.run.eps)?,
                temperature: get(kv, "optim.temperature", d.run.temperature)?,
                alpha_mode,
                output_dir: kv
                    .get("run.output_dir")
                    .map_or(d.run.output_dir.clone(), PathBuf::from),
            },
            data: DataConfig {
                classes: get(kv, "data.classes", d.data.classes)?,
                glyph_size: get(kv, "data.glyph_size", d.data.glyph_size)?,
                glyph_seed: get(kv, "data.glyph_seed", d.data.glyph_seed)?,
                n: get(kv, "data.n", d.data.n)?,
                noise: get(kv, "data.noise", d.data.noise)?,
                jitter: get(kv, "data.jitter", d.data.jitter)?,
                seed: get(kv, "data.seed", d.data.seed)?,
                train_frac: get(kv, "data.train_frac", d.data.train_frac)?,
            },
            surrogate: SurrogateConfig {
                seed: parse_auto(kv, "surrogate.seed", d.surrogate.seed)?,
                target_macs: parse_auto(kv, "surrogate.target_macs", d.surrogate.target_macs)?,
                w_cost: get(kv, "surrogate.w_cost", d.surrogate.w_cost)?,
                w_path: get(kv, "surrogate.w_path", d.surrogate.w_path)?,
                affinity_scale: get(kv, "surrogate.affinity_scale", d.surrogate.affinity_scale)?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvFile::parse(text)?)
    }

    /// Applies `key=value` overrides on top of `text`.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut kv = KvFile::parse(text)?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| SearchError::Config(format!("override `{o}` is not key=value")))?;
            kv.set(k.trim(), v.trim());
        }
        Self::from_kv(&kv)
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        let r = &self.run;
        r.space.write_kv(&mut kv, "space.");
        let mut put = |k: &str, v: String| kv.set(k, v);
        put("run.backend", r.backend.to_string());
        put("run.seed", r.seed.to_string());
        put("run.step1_epochs", r.step1_epochs.to_string());
        put("run.step2_warmup_epochs", r.step2_warmup_epochs.to_string());
        put("run.step2_epochs", r.step2_epochs.to_string());
        put("run.batch", r.batch.to_string());
        put("run.budget_macs", r.budget_macs.to_string());
        put("run.restarts", r.restarts.to_string());
        put("run.random_candidates", r.random_candidates.to_string());
        put("run.max_full_paths", r.max_full_paths.to_string());
        put("run.threads", r.threads.to_string());
        put("run.output_dir", r.output_dir.display().to_string());
        put("reg.beta", r.beta.to_string());
        put("reg.g", r.reg_g.to_string());
        put("optim.weight_lr", r.weight_lr.to_string());
        put("optim.arch_lr", r.arch_lr.to_string());
        put("optim.rho", r.rho.to_string());
        put("optim.eps", r.eps.to_string());
        put("optim.temperature", r.temperature.to_string());
        put(
            "optim.alpha_mode",
            match r.alpha_mode {
                AlphaMode::Mixture => "mixture",
                AlphaMode::Sampled => "sampled",
            }
            .into(),
        );
        let dc = &self.data;
        put("data.classes", dc.classes.to_string());
        put("data.glyph_size", dc.glyph_size.to_string());
        put("data.glyph_seed", dc.glyph_seed.to_string());
        put("data.n", dc.n.to_string());
        put("data.noise", dc.noise.to_string());
        put("data.jitter", dc.jitter.to_string());
        put("data.seed", dc.seed.to_string());
        put("data.train_frac", dc.train_frac.to_string());
        let s = &self.surrogate;
        put("surrogate.seed", s.seed.to_string());
        put("surrogate.target_macs", s.target_macs.to_string());
        put("surrogate.w_cost", s.w_cost.to_string());
        put("surrogate.w_path", s.w_path.to_string());
        put("surrogate.affinity_scale", s.affinity_scale.to_string());
        kv
    }

    /// The `config.snapshot` text: sorted resolved keys.
    pub fn snapshot(&self) -> String {
        self.to_kv().render_sorted()
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        r.space.validate()?;
        let bad = |m: &str| Err(SearchError::Config(m.to_string()));
        if r.step1_epochs == 0 || r.step2_warmup_epochs == 0 || r.step2_epochs == 0 {
            return bad("all epoch counts must be >= 1");
        }
        if r.batch == 0 || r.random_candidates == 0 {
            return bad("run.batch and run.random_candidates must be >= 1");
        }
        if r.budget_macs == Auto::Value(0) {
            return bad("run.budget_macs must be positive");
        }
        if !(r.beta >= 0.0 && r.beta.is_finite()) {
            return bad("reg.beta must be >= 0");
        }
        if let Auto::Value(g) = r.reg_g {
            if !(g > 1.0 && g.is_finite()) {
                return bad("reg.g must be > 1");
            }
        }
        for (name, v) in [
            ("optim.weight_lr", r.weight_lr),
            ("optim.arch_lr", r.arch_lr),
            ("optim.eps", r.eps),
            ("optim.temperature", r.temperature),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SearchError::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&r.rho) {
            return bad("optim.rho must be in [0, 1)");
        }
        let dc = &self.data;
        if dc.n < 2 || !(dc.train_frac > 0.0 && dc.train_frac < 1.0) {
            return bad("data.n must be >= 2 and data.train_frac in (0, 1)");
        }
        if dc.classes < 2 || dc.classes > 256 {
            return bad("data.classes must be in 2..=256");
        }
        if self.surrogate.target_macs == Auto::Value(0) {
            return bad("surrogate.target_macs must be positive");
        }
        for (name, v) in [
            ("surrogate.w_cost", self.surrogate.w_cost),
            ("surrogate.w_path", self.surrogate.w_path),
            ("surrogate.affinity_scale", self.surrogate.affinity_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SearchError::Config(format!("{name} must be >= 0")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_snapshot() {
        let d = RunConfig::default();
        let back = RunConfig::parse(&d.snapshot()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.snapshot(), d.snapshot());
    }

    #[test]
    fn sections_and_overrides() {
        let text =
            "[run]\nbackend = neural\nseed = 9\n[reg]\nbeta = 0.3\ng = 1e6\n[space]\nL = 6\n";
        let cfg =
            RunConfig::parse_with_overrides(text, &["run.seed=11".into(), "data.n = 50".into()])
                .unwrap();
        assert_eq!(cfg.run.backend, Backend::Neural);
        assert_eq!(cfg.run.seed, 11);
        assert_eq!(cfg.run.beta, 0.3);
        assert_eq!(cfg.run.reg_g, Auto::Value(1e6));
        assert_eq!(cfg.run.space.layers, 6);
        assert_eq!(cfg.data.n, 50);
        let again = RunConfig::parse(&cfg.snapshot()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_and_invalid_keys_rejected() {
        assert!(RunConfig::parse("run.sede = 3\n").is_err());
        assert!(RunConfig::parse("[run]\nbackend = gpu\n").is_err());
        assert!(RunConfig::parse("run.step1_epochs = 0\n").is_err());
        assert!(RunConfig::parse("run.budget_macs = 0\n").is_err());
        assert!(RunConfig::parse("reg.g = 1\n").is_err());
        assert!(RunConfig::parse("space.L = 3\n").is_err());
        assert!(RunConfig::parse_with_overrides("", &["novalue".into()]).is_err());
    }
}
