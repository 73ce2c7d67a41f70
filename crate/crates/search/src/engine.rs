//! The two search steps, their composition, and the random baseline.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use seqnas_core::surrogate::mix;
use seqnas_core::{
    arch_cost, enumerate_paths, gen_dataset, layer_geometry, legal_choices, op_cost,
    regularizer_from_flops, serialize_arch, surrogate_score, surrogate_train_curve, typical_paths,
    Architecture, CostReport, Dataset, GlyphSet, OperationSpec, RegularizerConfig, StridePath,
    SurrogateSpec, SynthConfig,
};
use seqnas_neural::{
    alternating_search, build_fixed, default_budget, discretize, train_fixed, warmup,
    HistoryRecord, NeuralError, OpSearchConfig, SuperNet, TrainConfig,
};
use seqnas_tensor::{AdadeltaConfig, ParamStore};
use serde::{Deserialize, Serialize};

use crate::config::{Backend, RunConfig};
use crate::error::{Result, SearchError};

/// One evaluated candidate architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub index: usize,
    pub path: String,
    pub arch: String,
    pub macs: u64,
    pub epochs: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub frame_acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seq_acc: Option<f64>,
}

impl CandidateRow {
    /// Lower is better: negated score, or validation loss.
    fn rank_key(&self) -> f64 {
        match (self.score, self.val_loss) {
            (Some(s), _) => -s,
            (None, Some(l)) => l,
            (None, None) => f64::INFINITY,
        }
    }
}

/// Index of the best row; ties go to the earliest.
fn best_row(rows: &[CandidateRow]) -> usize {
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.rank_key() < rows[best].rank_key() {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step1Outcome {
    pub best: StridePath,
    pub rows: Vec<CandidateRow>,
}

/// An accepted move of the surrogate coordinate ascent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentRecord {
    pub restart: usize,
    pub sweep: usize,
    /// 1-based layer that changed; 0 for the starting point.
    pub layer: usize,
    pub ops: String,
    pub objective: f64,
    pub score: f64,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step2History {
    Surrogate(Vec<AscentRecord>),
    Neural(Vec<HistoryRecord>),
}

impl Step2History {
    pub fn to_jsonl(&self) -> String {
        fn lines<T: Serialize>(v: &[T]) -> String {
            v.iter()
                .map(|r| serde_json::to_string(r).expect("plain record") + "\n")
                .collect()
        }
        match self {
            Step2History::Surrogate(v) => lines(v),
            Step2History::Neural(v) => lines(v),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Step2Outcome {
    pub arch: Architecture,
    pub budget: u64,
    pub history: Step2History,
    /// Final architecture probabilities (neural backend).
    pub alpha: Option<Vec<Vec<f64>>>,
    /// Trained supernet weights (neural backend).
    pub supernet: Option<ParamStore>,
}

/// Surrogate evaluation of one architecture under the regularized objective
/// `r(MACs) * (1 - score)`; over-budget architectures get `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateEval {
    pub objective: f64,
    pub score: f64,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub backend: Backend,
    pub best_path: String,
    pub best_arch: String,
    pub budget_macs: u64,
    pub cost: CostReport,
    /// Surrogate score of the result (surrogate backend).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub score: Option<f64>,
    /// Regularized objective of the result (surrogate backend).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub objective: Option<f64>,
    /// Final per-layer op probabilities (neural backend).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<Vec<Vec<f64>>>,
    pub scores: Vec<CandidateRow>,
    /// Kept out of `result.json` so repeated runs compare byte-for-byte.
    #[serde(skip)]
    pub wall_time: f64,
}

/// Distinct, reproducible seeds for each stage of a run.
pub fn sub_seed(seed: u64, stage: u64) -> u64 {
    mix(seed ^ mix(stage.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

pub const STAGE_STEP1: u64 = 1;
pub const STAGE_SUPERNET: u64 = 2;
pub const STAGE_WARMUP: u64 = 3;
pub const STAGE_ALPHA: u64 = 4;
pub const STAGE_ASCENT: u64 = 5;
pub const STAGE_RANDOM: u64 = 6;

pub struct Engine {
    pub cfg: RunConfig,
    candidates: Vec<StridePath>,
    surrogate: SurrogateSpec,
    data: OnceLock<(Dataset, Dataset)>,
}

impl Engine {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let space = &cfg.run.space;
        let candidates = if space.ds_positions.is_none() {
            let all = enumerate_paths(space)?;
            if all.len() <= cfg.run.max_full_paths {
                all
            } else {
                typical_paths(space)?
            }
        } else {
            typical_paths(space)?
        };
        if candidates.is_empty() {
            return Err(SearchError::Config(
                "the space has no candidate paths".into(),
            ));
        }
        let target = match cfg.surrogate.target_macs {
            crate::config::Auto::Value(t) => t,
            crate::config::Auto::Auto => {
                let base = Architecture::uniform(
                    space,
                    candidates[0].clone(),
                    OperationSpec::mbconv(3, 1),
                )?;
                (arch_cost(&base, space)?.total_macs * 3 / 2).max(1)
            }
        };
        let surrogate = SurrogateSpec {
            seed: cfg.surrogate.seed.or(cfg.run.seed),
            target_macs: target,
            w_cost: cfg.surrogate.w_cost,
            w_path: cfg.surrogate.w_path,
            affinity_scale: cfg.surrogate.affinity_scale,
        };
        surrogate.validate()?;
        Ok(Engine {
            cfg,
            candidates,
            surrogate,
            data: OnceLock::new(),
        })
    }

    pub fn candidates(&self) -> &[StridePath] {
        &self.candidates
    }

    pub fn surrogate_spec(&self) -> &SurrogateSpec {
        &self.surrogate
    }

    /// The generated dataset split into (train, validation).
    pub fn data(&self) -> Result<&(Dataset, Dataset)> {
        if let Some(d) = self.data.get() {
            return Ok(d);
        }
        let dc = &self.cfg.data;
        let space = &self.cfg.run.space;
        let glyphs = GlyphSet::generate(dc.classes, dc.glyph_size, dc.glyph_seed)?;
        let all = gen_dataset(
            space,
            &glyphs,
            &SynthConfig {
                n: dc.n,
                noise: dc.noise,
                max_jitter: dc.jitter,
                seed: dc.seed,
            },
        )?;
        let split = all.split(dc.train_frac, dc.seed);
        if split.0.is_empty() || split.1.is_empty() {
            return Err(SearchError::Config("data split leaves an empty set".into()));
        }
        Ok(self.data.get_or_init(|| split))
    }

    pub fn budget_for(&self, path: &StridePath) -> Result<u64> {
        match self.cfg.run.budget_macs {
            crate::config::Auto::Value(b) => Ok(b),
            crate::config::Auto::Auto => Ok(default_budget(&self.cfg.run.space, path)?),
        }
    }

    pub fn reg_for(&self, budget: u64) -> Result<RegularizerConfig> {
        let g = self.cfg.run.reg_g.or(budget as f64);
        Ok(RegularizerConfig::new(self.cfg.run.beta, g)?)
    }

    fn optim(&self, lr: f64) -> AdadeltaConfig {
        AdadeltaConfig {
            rho: self.cfg.run.rho,
            eps: self.cfg.run.eps,
            lr,
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let n = if self.cfg.run.threads > 0 {
            self.cfg.run.threads
        } else {
            std::env::var("SEQNAS_THREADS")
                .ok()
                .and_then(|v| v.trim().parse().ok())
                .unwrap_or(0)
        };
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SearchError::Config(format!("thread pool: {e}")))
    }

    /// Trains or scores one architecture for `epochs`.
    pub fn evaluate(
        &self,
        index: usize,
        arch: &Architecture,
        epochs: usize,
    ) -> Result<CandidateRow> {
        let space = &self.cfg.run.space;
        let mut row = CandidateRow {
            index,
            path: arch.path.to_string(),
            arch: serialize_arch(arch),
            macs: arch_cost(arch, space)?.total_macs,
            epochs,
            score: None,
            val_loss: None,
            frame_acc: None,
            seq_acc: None,
        };
        match self.cfg.run.backend {
            Backend::Surrogate => {
                let curve = surrogate_train_curve(arch, space, &self.surrogate, epochs)?;
                row.score = curve.last().copied();
            }
            Backend::Neural => {
                let (train, val) = self.data()?;
                let seed = sub_seed(self.cfg.run.seed, STAGE_STEP1);
                let mut net = build_fixed::<f32>(arch, space, self.cfg.data.classes, seed)?;
                let mut tc = TrainConfig::new(epochs, self.cfg.run.batch, seed);
                tc.optim = self.optim(self.cfg.run.weight_lr);
                let rep = train_fixed(&mut net, train, val, &tc)?;
                row.val_loss = Some(rep.val_loss);
                row.frame_acc = Some(rep.frame_accuracy);
                row.seq_acc = Some(rep.seq_accuracy);
            }
        }
        Ok(row)
    }

    /// Evaluates all architectures concurrently; rows come back in input
    /// order and the first failure (by index) aborts the batch.
    fn evaluate_all(&self, archs: &[Architecture], epochs: usize) -> Result<Vec<CandidateRow>> {
        if self.cfg.run.backend == Backend::Neural {
            self.data()?;
        }
        let results: Vec<Result<CandidateRow>> = self.pool()?.install(|| {
            archs
                .par_iter()
                .enumerate()
                .map(|(i, a)| self.evaluate(i, a, epochs))
                .collect()
        });
        results
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                r.map_err(|e| SearchError::Candidate {
                    index: i,
                    path: archs[i].path.to_string(),
                    source: Box::new(e),
                })
            })
            .collect()
    }

    /// Scores every candidate path with all layers fixed to the 3x3
    /// residual conv; best is highest surrogate score or lowest final
    /// validation loss, ties to the earliest candidate.
    pub fn step1(&self) -> Result<Step1Outcome> {
        let space = &self.cfg.run.space;
        let archs = self
            .candidates
            .iter()
            .map(|p| Architecture::uniform(space, p.clone(), OperationSpec::RES3))
            .collect::<seqnas_core::Result<Vec<_>>>()?;
        let rows = self.evaluate_all(&archs, self.cfg.run.step1_epochs)?;
        let best = self.candidates[best_row(&rows)].clone();
        log::info!("step 1: {} candidates, best path {best}", rows.len());
        Ok(Step1Outcome { best, rows })
    }

    pub fn surrogate_eval(
        &self,
        arch: &Architecture,
        budget: u64,
        reg: &RegularizerConfig,
    ) -> Result<SurrogateEval> {
        let space = &self.cfg.run.space;
        let macs = arch_cost(arch, space)?.total_macs;
        let score = surrogate_score(arch, space, &self.surrogate)?;
        let objective = if macs > budget {
            f64::INFINITY
        } else {
            regularizer_from_flops(macs.max(2) as f64, reg)? * (1.0 - score)
        };
        Ok(SurrogateEval {
            objective,
            score,
            macs,
        })
    }

    pub fn step2(&self, path: &StridePath) -> Result<Step2Outcome> {
        let budget = self.budget_for(path)?;
        let reg = self.reg_for(budget)?;
        match self.cfg.run.backend {
            Backend::Surrogate => self.step2_surrogate(path, budget, &reg),
            Backend::Neural => self.step2_neural(path, budget, &reg),
        }
    }

    fn step2_neural(
        &self,
        path: &StridePath,
        budget: u64,
        reg: &RegularizerConfig,
    ) -> Result<Step2Outcome> {
        let space = &self.cfg.run.space;
        let r = &self.cfg.run;
        let (train, val) = self.data()?;
        let mut net = SuperNet::<f32>::new(
            space,
            path,
            self.cfg.data.classes,
            sub_seed(r.seed, STAGE_SUPERNET),
            r.temperature,
        )?;
        let wopt = self.optim(r.weight_lr);
        warmup(
            &mut net,
            train,
            r.step2_warmup_epochs,
            r.batch,
            sub_seed(r.seed, STAGE_WARMUP),
            &wopt,
            r.alpha_mode,
        )?;
        let oc = OpSearchConfig {
            epochs: r.step2_epochs,
            batch: r.batch,
            seed: sub_seed(r.seed, STAGE_ALPHA),
            reg: *reg,
            weight_optim: wopt,
            arch_optim: self.optim(r.arch_lr),
            alpha_mode: r.alpha_mode,
        };
        let history = alternating_search(&mut net, train, val, &oc)?;
        let probs = net.arch.probs();
        let arch =
            discretize(&probs, &net.legal, path, space, Some(budget)).map_err(|e| match e {
                NeuralError::Infeasible { budget, cheapest } => {
                    SearchError::Infeasible { budget, cheapest }
                }
                e => e.into(),
            })?;
        log::info!("step 2 (neural): {}", serialize_arch(&arch));
        Ok(Step2Outcome {
            arch,
            budget,
            history: Step2History::Neural(history),
            alpha: Some(probs),
            supernet: Some(net.store),
        })
    }

    /// Per-(layer, op) MACs; `None` where the op is illegal.
    fn cost_table(&self, path: &StridePath) -> Result<Vec<Vec<Option<u64>>>> {
        let space = &self.cfg.run.space;
        let legal = legal_choices(path, space)?;
        let geoms = layer_geometry(path, space)?;
        geoms
            .iter()
            .zip(&legal)
            .map(|(g, ok)| {
                space
                    .op_vocab
                    .iter()
                    .zip(ok)
                    .map(|(op, &ok)| {
                        if !ok {
                            return Ok(None);
                        }
                        Ok(Some(
                            op_cost(op, g.in_ch, g.out_ch, g.out_h, g.out_w, g.stride())?.macs,
                        ))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect()
    }

    fn step2_surrogate(
        &self,
        path: &StridePath,
        budget: u64,
        reg: &RegularizerConfig,
    ) -> Result<Step2Outcome> {
        let space = &self.cfg.run.space;
        let costs = self.cost_table(path)?;
        let cheapest: u64 = costs
            .iter()
            .map(|row| row.iter().flatten().copied().min().unwrap_or(0))
            .sum();
        if cheapest > budget {
            return Err(SearchError::Infeasible { budget, cheapest });
        }
        let legal_idx: Vec<Vec<usize>> = costs
            .iter()
            .map(|row| (0..row.len()).filter(|&j| row[j].is_some()).collect())
            .collect();
        let mut cache: HashMap<Vec<usize>, SurrogateEval> = HashMap::new();
        let mut eval = |pick: &[usize]| -> Result<SurrogateEval> {
            if let Some(e) = cache.get(pick) {
                return Ok(*e);
            }
            let ops = pick.iter().map(|&j| space.op_vocab[j]).collect();
            let arch = Architecture::new(space, path.clone(), ops)?;
            let e = self.surrogate_eval(&arch, budget, reg)?;
            cache.insert(pick.to_vec(), e);
            Ok(e)
        };
        let better =
            |a: &(f64, Vec<usize>), b: &(f64, Vec<usize>)| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);
        let codes = |pick: &[usize]| {
            pick.iter()
                .map(|&j| space.op_vocab[j].code())
                .collect::<Vec<_>>()
                .join(",")
        };

        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.cfg.run.seed, STAGE_ASCENT));
        let mut starts = vec![legal_idx.iter().map(|r| r[0]).collect::<Vec<usize>>()];
        for _ in 0..self.cfg.run.restarts {
            starts.push(
                legal_idx
                    .iter()
                    .map(|r| r[rng.gen_range(0..r.len())])
                    .collect(),
            );
        }

        let mut history = Vec::new();
        let mut best: Option<(f64, Vec<usize>)> = None;
        for (restart, mut pick) in starts.into_iter().enumerate() {
            repair(&mut pick, &costs, budget);
            let e = eval(&pick)?;
            history.push(AscentRecord {
                restart,
                sweep: 0,
                layer: 0,
                ops: codes(&pick),
                objective: e.objective,
                score: e.score,
                macs: e.macs,
            });
            let mut cur = (e.objective, pick);
            let mut sweep = 0;
            loop {
                sweep += 1;
                let mut moved = false;
                for l in 0..legal_idx.len() {
                    let mut layer_best = cur.clone();
                    for &j in &legal_idx[l] {
                        if j == cur.1[l] {
                            continue;
                        }
                        let mut cand = cur.1.clone();
                        cand[l] = j;
                        let c = (eval(&cand)?.objective, cand);
                        if better(&c, &layer_best) {
                            layer_best = c;
                        }
                    }
                    if layer_best.1 != cur.1 {
                        cur = layer_best;
                        moved = true;
                        let e = eval(&cur.1)?;
                        history.push(AscentRecord {
                            restart,
                            sweep,
                            layer: l + 1,
                            ops: codes(&cur.1),
                            objective: e.objective,
                            score: e.score,
                            macs: e.macs,
                        });
                    }
                }
                if !moved {
                    break;
                }
            }
            if best.as_ref().map_or(true, |b| better(&cur, b)) {
                best = Some(cur);
            }
        }
        let (_, pick) = best.expect("at least one start");
        let ops = pick.iter().map(|&j| space.op_vocab[j]).collect();
        let arch = Architecture::new(space, path.clone(), ops)?;
        log::info!("step 2 (surrogate): {}", serialize_arch(&arch));
        Ok(Step2Outcome {
            arch,
            budget,
            history: Step2History::Surrogate(history),
            alpha: None,
            supernet: None,
        })
    }

    fn result_for(
        &self,
        arch: &Architecture,
        budget: u64,
        alpha: Option<Vec<Vec<f64>>>,
        scores: Vec<CandidateRow>,
    ) -> Result<SearchResult> {
        let space = &self.cfg.run.space;
        let cost = arch_cost(arch, space)?;
        if cost.total_macs > budget {
            return Err(SearchError::Infeasible {
                budget,
                cheapest: cost.total_macs,
            });
        }
        let (score, objective) = match self.cfg.run.backend {
            Backend::Surrogate => {
                let e = self.surrogate_eval(arch, budget, &self.reg_for(budget)?)?;
                (Some(e.score), Some(e.objective))
            }
            Backend::Neural => (None, None),
        };
        Ok(SearchResult {
            backend: self.cfg.run.backend,
            best_path: arch.path.to_string(),
            best_arch: serialize_arch(arch),
            budget_macs: budget,
            cost,
            score,
            objective,
            alpha,
            scores,
            wall_time: 0.0,
        })
    }

    /// Step 1 then step 2 on the winning path.
    pub fn two_step(&self) -> Result<(SearchResult, Step1Outcome, Step2Outcome)> {
        let start = std::time::Instant::now();
        let s1 = self.step1()?;
        let mut s2 = self.step2(&s1.best)?;
        let mut res = self.result_for(&s2.arch, s2.budget, s2.alpha.take(), s1.rows.clone())?;
        res.wall_time = start.elapsed().as_secs_f64();
        Ok((res, s1, s2))
    }

    /// Step 2 alone on a given path.
    pub fn step2_only(&self, path: &StridePath) -> Result<(SearchResult, Step2Outcome)> {
        let start = std::time::Instant::now();
        let mut s2 = self.step2(path)?;
        let mut res = self.result_for(&s2.arch, s2.budget, s2.alpha.take(), Vec::new())?;
        res.wall_time = start.elapsed().as_secs_f64();
        Ok((res, s2))
    }

    /// Candidate-training epochs spent by a two-step run.
    pub fn two_step_epochs(&self) -> usize {
        let r = &self.cfg.run;
        self.candidates.len() * r.step1_epochs + r.step2_warmup_epochs + r.step2_epochs
    }

    /// Uniform legal architectures on uniform candidate paths, each under
    /// its path's budget, trained for an equal share of the two-step epochs.
    pub fn sample_random(&self, n: usize) -> Result<Vec<Architecture>> {
        let space = &self.cfg.run.space;
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.cfg.run.seed, STAGE_RANDOM));
        let mut out = Vec::with_capacity(n);
        const MAX_TRIES: usize = 10_000;
        for _ in 0..n {
            let mut found = None;
            for _ in 0..MAX_TRIES {
                let path = &self.candidates[rng.gen_range(0..self.candidates.len())];
                let legal = legal_choices(path, space)?;
                let ops = legal
                    .iter()
                    .map(|row| {
                        let ok: Vec<usize> = (0..row.len()).filter(|&j| row[j]).collect();
                        space.op_vocab[ok[rng.gen_range(0..ok.len())]]
                    })
                    .collect();
                let arch = Architecture::new(space, path.clone(), ops)?;
                if arch_cost(&arch, space)?.total_macs <= self.budget_for(path)? {
                    found = Some(arch);
                    break;
                }
            }
            let arch = found.ok_or_else(|| SearchError::Infeasible {
                budget: self.budget_for(&self.candidates[0]).unwrap_or(0),
                cheapest: 0,
            })?;
            out.push(arch);
        }
        Ok(out)
    }

    pub fn random_search(&self, n: usize) -> Result<SearchResult> {
        if n == 0 {
            return Err(SearchError::Config(
                "random search needs at least one candidate".into(),
            ));
        }
        let start = std::time::Instant::now();
        let archs = self.sample_random(n)?;
        let epochs = (self.two_step_epochs() / n).max(1);
        let rows = self.evaluate_all(&archs, epochs)?;
        let best = &archs[best_row(&rows)];
        let budget = self.budget_for(&best.path)?;
        let mut res = self.result_for(best, budget, None, rows)?;
        res.wall_time = start.elapsed().as_secs_f64();
        Ok(res)
    }
}

/// Moves layers to cheaper ops until the total fits: each step takes the
/// currently most expensive layer down to its next cheaper legal op.
fn repair(pick: &mut [usize], costs: &[Vec<Option<u64>>], budget: u64) {
    let cost = |l: usize, j: usize| costs[l][j].expect("legal pick");
    loop {
        let total: u64 = pick.iter().enumerate().map(|(l, &j)| cost(l, j)).sum();
        if total <= budget {
            return;
        }
        let mut mv: Option<(u64, usize, usize)> = None;
        for (l, &j) in pick.iter().enumerate() {
            let cur = cost(l, j);
            let next = (0..costs[l].len())
                .filter_map(|k| costs[l][k].filter(|&c| c < cur).map(|c| (c, k)))
                .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
            if let Some((_, k)) = next {
                if mv.map_or(true, |m| cur > m.0) {
                    mv = Some((cur, l, k));
                }
            }
        }
        match mv {
            Some((_, l, k)) => pick[l] = k,
            None => return,
        }
    }
}
