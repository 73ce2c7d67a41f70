//! The two-level search space: constrained downsampling paths and the
//! per-layer operation vocabulary.

use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv::KvFile;

/// One layer's stride pair. Variant order gives the enumeration order A < B < N.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrideStep {
    /// (2, 2)
    A,
    /// (2, 1)
    B,
    /// (1, 1)
    N,
}

impl StrideStep {
    /// (height-stride, width-stride)
    pub fn strides(self) -> (usize, usize) {
        match self {
            StrideStep::A => (2, 2),
            StrideStep::B => (2, 1),
            StrideStep::N => (1, 1),
        }
    }

    pub fn is_downsampling(self) -> bool {
        self != StrideStep::N
    }

    pub fn as_char(self) -> char {
        match self {
            StrideStep::A => 'A',
            StrideStep::B => 'B',
            StrideStep::N => 'N',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'A' => Some(StrideStep::A),
            'B' => Some(StrideStep::B),
            'N' => Some(StrideStep::N),
            _ => None,
        }
    }
}

/// Per-layer stride assignment for the whole stack.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StridePath(Vec<StrideStep>);

impl StridePath {
    pub fn new(steps: Vec<StrideStep>) -> Self {
        StridePath(steps)
    }

    pub fn all_n(layers: usize) -> Self {
        StridePath(vec![StrideStep::N; layers])
    }

    /// Builds a path from a stage string over {A, B} and the 1-based layer
    /// indices that carry each stage's downsampling.
    pub fn from_stages(stages: &str, positions: &[usize], layers: usize) -> Result<Self> {
        let chars: Vec<char> = stages.chars().collect();
        if chars.len() != positions.len() {
            return Err(Error::InvalidSpace(format!(
                "stage string length {} != position count {}",
                chars.len(),
                positions.len()
            )));
        }
        let mut steps = vec![StrideStep::N; layers];
        let mut prev = 0;
        for (&c, &p) in chars.iter().zip(positions) {
            let step = match StrideStep::from_char(c) {
                Some(s) if s.is_downsampling() => s,
                _ => return Err(Error::InvalidSpace(format!("bad stage symbol `{c}`"))),
            };
            if p == 0 || p > layers || p <= prev {
                return Err(Error::InvalidSpace(format!(
                    "downsampling positions must be strictly increasing in 1..={layers}"
                )));
            }
            steps[p - 1] = step;
            prev = p;
        }
        Ok(StridePath(steps))
    }

    pub fn steps(&self) -> &[StrideStep] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self, kind: StrideStep) -> usize {
        self.0.iter().filter(|&&s| s == kind).count()
    }

    /// The downsampling steps in layer order, e.g. `ABABB`.
    pub fn stage_string(&self) -> String {
        self.0
            .iter()
            .filter(|s| s.is_downsampling())
            .map(|s| s.as_char())
            .collect()
    }

    /// 1-based indices of the downsampling layers.
    pub fn ds_positions(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_downsampling())
            .map(|(i, _)| i + 1)
            .collect()
    }
}

impl fmt::Display for StridePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pos: Vec<String> = self.ds_positions().iter().map(|p| p.to_string()).collect();
        write!(f, "{}@{}", self.stage_string(), pos.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpFamily {
    MbConv,
    SkipConnect,
    ResidualConv3x3,
}

/// One candidate operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OperationSpec {
    pub family: OpFamily,
    pub kernel: usize,
    pub expansion: usize,
}

impl OperationSpec {
    pub const fn mbconv(kernel: usize, expansion: usize) -> Self {
        OperationSpec {
            family: OpFamily::MbConv,
            kernel,
            expansion,
        }
    }

    pub const SKIP: OperationSpec = OperationSpec {
        family: OpFamily::SkipConnect,
        kernel: 1,
        expansion: 1,
    };

    pub const RES3: OperationSpec = OperationSpec {
        family: OpFamily::ResidualConv3x3,
        kernel: 3,
        expansion: 1,
    };

    /// The seven searchable choice-block operations, in vocabulary order.
    pub fn searchable() -> Vec<OperationSpec> {
        vec![
            Self::mbconv(3, 1),
            Self::mbconv(3, 3),
            Self::mbconv(3, 6),
            Self::mbconv(5, 1),
            Self::mbconv(5, 3),
            Self::mbconv(5, 6),
            Self::SKIP,
        ]
    }

    pub fn code(&self) -> String {
        match self.family {
            OpFamily::MbConv => format!("mb{}e{}", self.kernel, self.expansion),
            OpFamily::SkipConnect => "skip".to_string(),
            OpFamily::ResidualConv3x3 => "res3".to_string(),
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "skip" => return Some(Self::SKIP),
            "res3" => return Some(Self::RES3),
            _ => {}
        }
        let rest = code.strip_prefix("mb")?;
        let (k, e) = rest.split_once('e')?;
        let k: usize = k.parse().ok()?;
        let e: usize = e.parse().ok()?;
        if matches!(k, 3 | 5) && matches!(e, 1 | 3 | 6) {
            Some(Self::mbconv(k, e))
        } else {
            None
        }
    }

    pub fn is_skip(&self) -> bool {
        self.family == OpFamily::SkipConnect
    }
}

impl fmt::Display for OperationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

/// Geometry of one layer in a resolved stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerGeom {
    pub step: StrideStep,
    pub in_h: usize,
    pub in_w: usize,
    pub in_ch: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub out_ch: usize,
    /// 0 before the first downsampling layer, then 1, 2, ...
    pub stage: usize,
}

impl LayerGeom {
    pub fn stride(&self) -> (usize, usize) {
        self.step.strides()
    }

    /// Skip-connect cannot change shape.
    pub fn skip_legal(&self) -> bool {
        self.step == StrideStep::N && self.in_ch == self.out_ch
    }
}

/// Search-space definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub layers: usize,
    pub a: usize,
    pub b: usize,
    pub input_h: usize,
    pub input_w: usize,
    pub c1: usize,
    pub c2: usize,
    /// Channels entering layer 1 (the stem's output).
    pub stem_channels: usize,
    /// Output channels of each stage; stage k starts at the k-th downsampling layer.
    pub channels: Vec<usize>,
    pub op_vocab: Vec<OperationSpec>,
    /// Fixed 1-based downsampling layers, if any.
    pub ds_positions: Option<Vec<usize>>,
}

pub const SPACE_KEYS: &[&str] = &[
    "L",
    "a",
    "b",
    "input_h",
    "input_w",
    "c1",
    "c2",
    "stem_channels",
    "channels",
    "ds_positions",
    "ops",
];

impl SpaceSpec {
    /// The 15-layer, 32x100 instance with five stages of 32..512 filters.
    pub fn full() -> Self {
        SpaceSpec {
            layers: 15,
            a: 2,
            b: 3,
            input_h: 32,
            input_w: 100,
            c1: 1,
            c2: 25,
            stem_channels: 32,
            channels: vec![32, 64, 128, 256, 512],
            op_vocab: OperationSpec::searchable(),
            ds_positions: Some(vec![1, 4, 7, 10, 13]),
        }
    }

    /// Desk-scale default: 16x32 input, 8 layers, 8 output frames.
    pub fn desk() -> Self {
        SpaceSpec {
            layers: 8,
            a: 2,
            b: 2,
            input_h: 16,
            input_w: 32,
            c1: 1,
            c2: 8,
            stem_channels: 8,
            channels: vec![8, 16, 16, 24],
            op_vocab: OperationSpec::searchable(),
            ds_positions: None,
        }
    }

    /// Smallest consistent geometry for a given (L, a, b); used for counting.
    pub fn minimal(layers: usize, a: usize, b: usize) -> Self {
        let stages = a + b;
        SpaceSpec {
            layers,
            a,
            b,
            input_h: 1usize << stages.min(usize::BITS as usize - 1),
            input_w: 1usize << a.min(usize::BITS as usize - 1),
            c1: 1,
            c2: 1,
            stem_channels: 8,
            channels: vec![8; stages],
            op_vocab: OperationSpec::searchable(),
            ds_positions: None,
        }
    }

    pub fn stages(&self) -> usize {
        self.a + self.b
    }

    pub fn vocab_size(&self) -> usize {
        self.op_vocab.len()
    }

    /// Checks every relation the rest of the crate relies on.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpace(m));
        if self.layers == 0 {
            return bad("L must be positive".into());
        }
        if self.stages() > self.layers {
            return bad(format!(
                "a + b <= L violated: {} + {} > {}",
                self.a, self.b, self.layers
            ));
        }
        if self.stages() >= 63 {
            return bad("a + b too large".into());
        }
        if self.c1 == 0 || self.c2 == 0 {
            return bad("c1 and c2 must be positive".into());
        }
        if self.input_h != self.c1 << self.stages() {
            return bad(format!(
                "input_h = c1 * 2^(a+b) violated: {} != {} * 2^{}",
                self.input_h,
                self.c1,
                self.stages()
            ));
        }
        if self.input_w != self.c2 << self.a {
            return bad(format!(
                "input_w = c2 * 2^a violated: {} != {} * 2^{}",
                self.input_w, self.c2, self.a
            ));
        }
        if self.channels.len() != self.stages() {
            return bad(format!(
                "channels must list one entry per stage: {} != a + b = {}",
                self.channels.len(),
                self.stages()
            ));
        }
        if self.stem_channels == 0 || self.channels.contains(&0) {
            return bad("channel counts must be positive".into());
        }
        if self.op_vocab.is_empty() {
            return bad("operation vocabulary is empty".into());
        }
        if self
            .op_vocab
            .iter()
            .any(|o| o.family == OpFamily::ResidualConv3x3)
        {
            return bad("res3 is the fixed default and cannot be a choice".into());
        }
        if let Some(pos) = &self.ds_positions {
            if pos.len() != self.stages() {
                return bad(format!(
                    "ds_positions length {} != a + b = {}",
                    pos.len(),
                    self.stages()
                ));
            }
            let mut prev = 0;
            for &p in pos {
                if p == 0 || p > self.layers || p <= prev {
                    return bad(format!(
                        "ds_positions must be strictly increasing within 1..={}",
                        self.layers
                    ));
                }
                prev = p;
            }
        }
        Ok(())
    }

    /// Stage-aligned downsampling layers: the fixed `ds_positions` when set,
    /// otherwise the first layer of each of `a + b` near-equal stages.
    pub fn typical_positions(&self) -> Vec<usize> {
        if let Some(p) = &self.ds_positions {
            return p.clone();
        }
        let n = self.stages();
        (0..n).map(|i| i * self.layers / n + 1).collect()
    }

    pub fn with_ds_positions(&self, positions: Option<Vec<usize>>) -> Self {
        SpaceSpec {
            ds_positions: positions,
            ..self.clone()
        }
    }

    pub fn from_kv(kv: &KvFile, prefix: &str) -> Result<Self> {
        let key = |k: &str| format!("{prefix}{k}");
        let base = SpaceSpec::desk();
        let layers = kv.parse_value(&key("L"))?.unwrap_or(base.layers);
        let a = kv.parse_value(&key("a"))?.unwrap_or(base.a);
        let b = kv.parse_value(&key("b"))?.unwrap_or(base.b);
        let c1 = kv.parse_value(&key("c1"))?.unwrap_or(base.c1);
        let c2 = kv.parse_value(&key("c2"))?.unwrap_or(base.c2);
        let ops = match kv.get(&key("ops")) {
            None => base.op_vocab.clone(),
            Some(v) => v
                .split(',')
                .map(|c| {
                    OperationSpec::from_code(c.trim())
                        .ok_or_else(|| Error::Config(format!("unknown op code `{}`", c.trim())))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let ds_positions = match kv.get(&key("ds_positions")) {
            None => None,
            Some(v) if v.trim().is_empty() || v.trim() == "none" => None,
            Some(_) => kv.parse_list(&key("ds_positions"))?,
        };
        let space = SpaceSpec {
            layers,
            a,
            b,
            input_h: kv
                .parse_value(&key("input_h"))?
                .unwrap_or(c1 << (a + b).min(62)),
            input_w: kv.parse_value(&key("input_w"))?.unwrap_or(c2 << a.min(62)),
            c1,
            c2,
            stem_channels: kv
                .parse_value(&key("stem_channels"))?
                .unwrap_or(base.stem_channels),
            channels: kv.parse_list(&key("channels"))?.unwrap_or_else(|| {
                if a + b == base.stages() {
                    base.channels.clone()
                } else {
                    vec![base.stem_channels; a + b]
                }
            }),
            op_vocab: ops,
            ds_positions,
        };
        space.validate()?;
        Ok(space)
    }

    pub fn write_kv(&self, kv: &mut KvFile, prefix: &str) {
        let join = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        kv.set(&format!("{prefix}L"), self.layers.to_string());
        kv.set(&format!("{prefix}a"), self.a.to_string());
        kv.set(&format!("{prefix}b"), self.b.to_string());
        kv.set(&format!("{prefix}input_h"), self.input_h.to_string());
        kv.set(&format!("{prefix}input_w"), self.input_w.to_string());
        kv.set(&format!("{prefix}c1"), self.c1.to_string());
        kv.set(&format!("{prefix}c2"), self.c2.to_string());
        kv.set(
            &format!("{prefix}stem_channels"),
            self.stem_channels.to_string(),
        );
        kv.set(&format!("{prefix}channels"), join(&self.channels));
        kv.set(
            &format!("{prefix}ds_positions"),
            match &self.ds_positions {
                Some(p) => join(p),
                None => "none".to_string(),
            },
        );
        let ops: Vec<String> = self.op_vocab.iter().map(|o| o.code()).collect();
        kv.set(&format!("{prefix}ops"), ops.join(","));
    }
}

/// All paths with exactly `a` A-steps and `b` B-steps, restricted to
/// `ds_positions` when the space fixes them, in lexicographic order.
pub fn enumerate_paths(space: &SpaceSpec) -> Result<Vec<StridePath>> {
    space.validate()?;
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(space.layers);
    let allowed: Option<Vec<bool>> = space.ds_positions.as_ref().map(|pos| {
        let mut m = vec![false; space.layers];
        for &p in pos {
            m[p - 1] = true;
        }
        m
    });
    let n_free = space.layers - space.stages();
    enumerate_rec(
        &mut cur,
        space.layers,
        [space.a, space.b, n_free],
        allowed.as_deref(),
        &mut out,
    );
    Ok(out)
}

fn enumerate_rec(
    cur: &mut Vec<StrideStep>,
    layers: usize,
    remaining: [usize; 3],
    allowed: Option<&[bool]>,
    out: &mut Vec<StridePath>,
) {
    let i = cur.len();
    if i == layers {
        out.push(StridePath(cur.clone()));
        return;
    }
    for (k, step) in [StrideStep::A, StrideStep::B, StrideStep::N]
        .into_iter()
        .enumerate()
    {
        if remaining[k] == 0 {
            continue;
        }
        if let Some(mask) = allowed {
            if mask[i] == (step == StrideStep::N) {
                continue;
            }
        }
        let mut r = remaining;
        r[k] -= 1;
        cur.push(step);
        enumerate_rec(cur, layers, r, allowed, out);
        cur.pop();
    }
}

/// Stage-aligned paths at [`SpaceSpec::typical_positions`].
pub fn typical_paths(space: &SpaceSpec) -> Result<Vec<StridePath>> {
    space.validate()?;
    enumerate_paths(&space.with_ds_positions(Some(space.typical_positions())))
}

/// Whether the path maps the input exactly onto (c1, c2) with integral sizes
/// after every layer.
pub fn check_constraint(path: &StridePath, space: &SpaceSpec) -> bool {
    if path.len() != space.layers {
        return false;
    }
    let (mut h, mut w) = (space.input_h, space.input_w);
    for step in path.steps() {
        let (sh, sw) = step.strides();
        if h % sh != 0 || w % sw != 0 {
            return false;
        }
        h /= sh;
        w /= sw;
    }
    h == space.c1 && w == space.c2
}

/// Per-layer geometry, attaching each stage's channel count at its
/// downsampling layer.
pub fn layer_geometry(path: &StridePath, space: &SpaceSpec) -> Result<Vec<LayerGeom>> {
    if path.len() != space.layers {
        return Err(Error::Constraint {
            layer: path.len().min(space.layers) + 1,
            reason: format!("path has {} layers, space has {}", path.len(), space.layers),
        });
    }
    let (mut h, mut w, mut ch) = (space.input_h, space.input_w, space.stem_channels);
    let mut stage = 0;
    let mut out = Vec::with_capacity(space.layers);
    for (i, &step) in path.steps().iter().enumerate() {
        let (sh, sw) = step.strides();
        if h % sh != 0 || w % sw != 0 {
            return Err(Error::Constraint {
                layer: i + 1,
                reason: format!("{h}x{w} not divisible by stride {sh}x{sw}"),
            });
        }
        let out_ch = if step.is_downsampling() {
            let c = *space.channels.get(stage).ok_or_else(|| Error::Constraint {
                layer: i + 1,
                reason: "more downsampling layers than stages".into(),
            })?;
            stage += 1;
            c
        } else {
            ch
        };
        let g = LayerGeom {
            step,
            in_h: h,
            in_w: w,
            in_ch: ch,
            out_h: h / sh,
            out_w: w / sw,
            out_ch,
            stage,
        };
        h = g.out_h;
        w = g.out_w;
        ch = out_ch;
        out.push(g);
    }
    if h != space.c1 || w != space.c2 {
        return Err(Error::Constraint {
            layer: space.layers,
            reason: format!("output {h}x{w} != required {}x{}", space.c1, space.c2),
        });
    }
    Ok(out)
}

/// Output (height, width, channels) after each layer.
pub fn shape_trace(path: &StridePath, space: &SpaceSpec) -> Result<Vec<(usize, usize, usize)>> {
    Ok(layer_geometry(path, space)?
        .iter()
        .map(|g| (g.out_h, g.out_w, g.out_ch))
        .collect())
}

/// Per-layer legality mask over `space.op_vocab`.
pub fn legal_choices(path: &StridePath, space: &SpaceSpec) -> Result<Vec<Vec<bool>>> {
    let geom = layer_geometry(path, space)?;
    Ok(geom
        .iter()
        .map(|g| {
            space
                .op_vocab
                .iter()
                .map(|op| !op.is_skip() || g.skip_legal())
                .collect()
        })
        .collect())
}

/// Number of constrained paths and of (path, op-assignment) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceCount {
    pub paths: BigUint,
    pub architectures: BigUint,
}

fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc *= BigUint::from(n - i);
        acc /= BigUint::from(i + 1);
    }
    acc
}

/// Closed-form size of the space. Skip-connect exclusions are not applied to
/// the architecture count.
pub fn count_space(space: &SpaceSpec) -> Result<SpaceCount> {
    space.validate()?;
    let stages = space.stages();
    let arrangements = binomial(stages, space.a);
    let paths = match space.ds_positions {
        Some(_) => arrangements,
        None => binomial(space.layers, stages) * arrangements,
    };
    let architectures = &paths * BigUint::from(space.vocab_size()).pow(space.layers as u32);
    Ok(SpaceCount {
        paths,
        architectures,
    })
}

/// A concrete backbone: one stride step and one operation per layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub path: StridePath,
    pub ops: Vec<OperationSpec>,
}

impl Architecture {
    pub fn new(space: &SpaceSpec, path: StridePath, ops: Vec<OperationSpec>) -> Result<Self> {
        let arch = Architecture { path, ops };
        arch.validate(space)?;
        Ok(arch)
    }

    /// Every layer gets the same operation.
    pub fn uniform(space: &SpaceSpec, path: StridePath, op: OperationSpec) -> Result<Self> {
        let ops = vec![op; space.layers];
        Self::new(space, path, ops)
    }

    pub fn validate(&self, space: &SpaceSpec) -> Result<()> {
        if self.ops.len() != space.layers {
            return Err(Error::InvalidSpace(format!(
                "architecture has {} ops, space has {} layers",
                self.ops.len(),
                space.layers
            )));
        }
        let geom = layer_geometry(&self.path, space)?;
        for (i, (g, op)) in geom.iter().zip(&self.ops).enumerate() {
            if op.is_skip() && !g.skip_legal() {
                return Err(Error::IllegalSkip {
                    layer: i + 1,
                    reason: format!(
                        "stride {:?}, channels {} -> {}",
                        g.stride(),
                        g.in_ch,
                        g.out_ch
                    ),
                });
            }
        }
        Ok(())
    }

    /// Vocabulary index of each op; `None` for ops outside the vocabulary.
    pub fn op_indices(&self, space: &SpaceSpec) -> Vec<Option<usize>> {
        self.ops
            .iter()
            .map(|op| space.op_vocab.iter().position(|v| v == op))
            .collect()
    }
}
