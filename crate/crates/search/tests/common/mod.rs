#![allow(dead_code)]

use seqnas_core::{legal_choices, Architecture, SpaceSpec, StridePath};
use seqnas_search::{Engine, RunConfig};

/// Every legal architecture on every given path, by odometer over op indices.
pub fn all_archs(space: &SpaceSpec, paths: &[StridePath]) -> Vec<Architecture> {
    let mut out = Vec::new();
    for p in paths {
        let legal = legal_choices(p, space).unwrap();
        let mut idx = vec![0usize; space.layers];
        'outer: loop {
            if idx.iter().enumerate().all(|(l, &j)| legal[l][j]) {
                let ops = idx.iter().map(|&j| space.op_vocab[j]).collect();
                out.push(Architecture::new(space, p.clone(), ops).unwrap());
            }
            for d in idx.iter_mut() {
                *d += 1;
                if *d < space.vocab_size() {
                    continue 'outer;
                }
                *d = 0;
            }
            break;
        }
    }
    out
}

/// Objective of each architecture under its own path's budget and regularizer.
pub fn objectives(eng: &Engine, archs: &[Architecture]) -> Vec<f64> {
    archs
        .iter()
        .map(|a| {
            let b = eng.budget_for(&a.path).unwrap();
            eng.surrogate_eval(a, b, &eng.reg_for(b).unwrap())
                .unwrap()
                .objective
        })
        .collect()
}

/// Small surrogate space with `channels = 4, 8, 12, ...`.
pub fn small_config(ops: &str, l: usize, a: usize, b: usize, seed: u64, extra: &str) -> RunConfig {
    let channels: Vec<String> = (1..=a + b).map(|i| (4 * i).to_string()).collect();
    let text = format!(
        "[space]\nL = {l}\na = {a}\nb = {b}\nc1 = 1\nc2 = 2\nstem_channels = 4\nchannels = {}\nops = {ops}\n[run]\nseed = {seed}\n{extra}\n",
        channels.join(",")
    );
    RunConfig::parse(&text).unwrap()
}

/// Spaces where every downsampling layer is fixed by the stage count
/// (L = a + b), so two-step search covers the whole space.
pub const EXHAUSTIVE_SPACES: &[(&str, usize, usize, usize)] = &[
    ("mb3e1,mb5e6", 5, 2, 3),
    ("mb3e1,mb3e6,mb5e3", 5, 2, 3),
    ("mb3e3,mb5e1,mb5e6", 5, 2, 3),
    ("mb3e1,mb5e6", 4, 2, 2),
    ("mb3e1,mb3e3,mb5e6", 4, 1, 3),
];
