//! Runs a configured search and writes its artifacts:
//!
//! ```text
//! <output_dir>/config.snapshot      resolved configuration
//! <output_dir>/step1_scores.jsonl   one row per step-1 candidate
//! <output_dir>/random_scores.jsonl  one row per random-search candidate
//! <output_dir>/step2_history.jsonl  one record per step-2 update
//! <output_dir>/result.json          final result
//! <output_dir>/timing.json          wall-clock seconds
//! <output_dir>/checkpoints/         trained weights (neural backend)
//! ```

use std::fs;
use std::path::Path;

use seqnas_core::{check_constraint, StridePath};
use serde::{Deserialize, Serialize};

use crate::config::{Backend, RunConfig};
use crate::engine::{CandidateRow, Engine, SearchResult, Step2Outcome};
use crate::error::{Result, SearchError};

#[derive(Debug, Clone, PartialEq)]
pub enum RunMode {
    TwoStep,
    Step1Only,
    Step2Only(StridePath),
    Random,
}

/// `result.json` of a step-1-only run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub backend: Backend,
    pub best_path: String,
    pub scores: Vec<CandidateRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutput {
    Path(PathResult),
    Search(SearchResult),
}

/// Parses `STAGES@p1,p2,...` (1-based downsampling layers) for `space`.
pub fn parse_path(text: &str, space: &seqnas_core::SpaceSpec) -> Result<StridePath> {
    let (stages, pos) = text
        .split_once('@')
        .ok_or_else(|| SearchError::Config(format!("path `{text}` is not STAGES@positions")))?;
    let positions = pos
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| SearchError::Config(format!("bad position `{p}` in `{text}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let path = StridePath::from_stages(stages.trim(), &positions, space.layers)?;
    if !check_constraint(&path, space) {
        return Err(SearchError::Config(format!(
            "path `{text}` violates the output-size constraint"
        )));
    }
    Ok(path)
}

fn jsonl<T: Serialize>(rows: &[T]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("plain record") + "\n")
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| SearchError::Config(e.to_string()))?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn write_step2(dir: &Path, s2: &Step2Outcome) -> Result<()> {
    fs::write(dir.join("step2_history.jsonl"), s2.history.to_jsonl())?;
    if let Some(store) = &s2.supernet {
        store.save_checkpoint(&dir.join("checkpoints").join("supernet"))?;
    }
    Ok(())
}

pub fn execute(cfg: &RunConfig, mode: &RunMode) -> Result<RunOutput> {
    let engine = Engine::new(cfg.clone())?;
    let dir = cfg.run.output_dir.as_path();
    fs::create_dir_all(dir.join("checkpoints"))?;
    fs::write(dir.join("config.snapshot"), cfg.snapshot())?;
    let start = std::time::Instant::now();
    let out = match mode {
        RunMode::TwoStep => {
            let (res, s1, s2) = engine.two_step()?;
            fs::write(dir.join("step1_scores.jsonl"), jsonl(&s1.rows))?;
            write_step2(dir, &s2)?;
            RunOutput::Search(res)
        }
        RunMode::Step1Only => {
            let s1 = engine.step1()?;
            fs::write(dir.join("step1_scores.jsonl"), jsonl(&s1.rows))?;
            RunOutput::Path(PathResult {
                backend: cfg.run.backend,
                best_path: s1.best.to_string(),
                scores: s1.rows,
            })
        }
        RunMode::Step2Only(path) => {
            let (res, s2) = engine.step2_only(path)?;
            write_step2(dir, &s2)?;
            RunOutput::Search(res)
        }
        RunMode::Random => {
            let res = engine.random_search(cfg.run.random_candidates)?;
            fs::write(dir.join("random_scores.jsonl"), jsonl(&res.scores))?;
            RunOutput::Search(res)
        }
    };
    match &out {
        RunOutput::Path(p) => write_json(&dir.join("result.json"), p)?,
        RunOutput::Search(r) => write_json(&dir.join("result.json"), r)?,
    }
    write_json(
        &dir.join("timing.json"),
        &serde_json::json!({ "wall_time_secs": start.elapsed().as_secs_f64() }),
    )?;
    Ok(out)
}
