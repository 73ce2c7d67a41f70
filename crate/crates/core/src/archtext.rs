//! Text form of an architecture:
//!
//! ```text
//! path=<stages over {A,B}>@<1-based ds layers, comma-separated>;ops=<L op codes, comma-separated>
//! ```
//!
//! e.g. `path=AB@1,3;ops=mb3e1,skip,mb5e6,mb3e3`. Parse errors carry the byte
//! offset of the offending token.

use crate::error::{Error, Result};
use crate::space::{check_constraint, Architecture, OperationSpec, SpaceSpec, StridePath};

pub fn serialize_arch(arch: &Architecture) -> String {
    let ops: Vec<String> = arch.ops.iter().map(|o| o.code()).collect();
    format!("path={};ops={}", arch.path, ops.join(","))
}

fn perr(pos: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        pos,
        msg: msg.into(),
    }
}

pub fn parse_arch(text: &str, space: &SpaceSpec) -> Result<Architecture> {
    let text = text.trim_end();
    let body = text
        .strip_prefix("path=")
        .ok_or_else(|| perr(0, "expected `path=`"))?;
    let path_start = 5;
    let at = body
        .find('@')
        .ok_or_else(|| perr(path_start, "expected `@`"))?;
    let stages = &body[..at];
    for (i, c) in stages.char_indices() {
        if c != 'A' && c != 'B' {
            return Err(perr(path_start + i, format!("bad stage symbol `{c}`")));
        }
    }
    let rest = &body[at + 1..];
    let semi = rest
        .find(';')
        .ok_or_else(|| perr(path_start + at + 1, "expected `;`"))?;
    let idx_start = path_start + at + 1;
    let mut positions = Vec::new();
    if !rest[..semi].is_empty() {
        let mut off = idx_start;
        for tok in rest[..semi].split(',') {
            let p: usize = tok
                .parse()
                .map_err(|_| perr(off, format!("bad layer index `{tok}`")))?;
            positions.push(p);
            off += tok.len() + 1;
        }
    }
    let ops_part = &rest[semi + 1..];
    let ops_start = idx_start + semi + 1;
    let ops_body = ops_part
        .strip_prefix("ops=")
        .ok_or_else(|| perr(ops_start, "expected `ops=`"))?;
    let mut ops = Vec::new();
    let mut op_offsets = Vec::new();
    let mut off = ops_start + 4;
    for tok in ops_body.split(',') {
        let op = OperationSpec::from_code(tok)
            .ok_or_else(|| perr(off, format!("unknown op code `{tok}`")))?;
        ops.push(op);
        op_offsets.push(off);
        off += tok.len() + 1;
    }

    let path = StridePath::from_stages(stages, &positions, space.layers)
        .map_err(|e| perr(path_start, e.to_string()))?;
    if !check_constraint(&path, space) {
        return Err(perr(
            path_start,
            format!("path {path} violates the output-size constraint"),
        ));
    }
    if ops.len() != space.layers {
        return Err(perr(
            ops_start + 4,
            format!("expected {} op codes, found {}", space.layers, ops.len()),
        ));
    }
    let arch = Architecture { path, ops };
    match arch.validate(space) {
        Ok(()) => Ok(arch),
        Err(Error::IllegalSkip { layer, reason }) => Err(perr(
            op_offsets[layer - 1],
            format!("illegal skip-connect at layer {layer}: {reason}"),
        )),
        Err(e) => Err(perr(path_start, e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{enumerate_paths, legal_choices};
    use proptest::prelude::*;

    #[test]
    fn parses_full_scale_example() {
        let space = SpaceSpec::full();
        let text = "path=ABABB@1,4,7,10,13;ops=mb5e6,mb5e6,mb3e3,mb5e3,mb3e1,skip,mb3e6,mb3e1,skip,mb5e1,mb3e3,skip,mb3e1,skip,skip";
        let arch = parse_arch(text, &space).unwrap();
        assert_eq!(arch.path.stage_string(), "ABABB");
        assert_eq!(arch.path.ds_positions(), vec![1, 4, 7, 10, 13]);
        assert_eq!(arch.ops[0], OperationSpec::mbconv(5, 6));
        assert_eq!(arch.ops[5], OperationSpec::SKIP);
        assert_eq!(serialize_arch(&arch), text);
    }

    #[test]
    fn unknown_code_has_position() {
        let space = SpaceSpec::minimal(2, 0, 1);
        let err = parse_arch("path=B@1;ops=mb3e1,mb7e2", &space).unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                pos: 19,
                msg: "unknown op code `mb7e2`".into()
            }
        );
    }

    #[test]
    fn malformed_inputs() {
        let space = SpaceSpec::minimal(2, 0, 1);
        for bad in [
            "",
            "path=C@1;ops=mb3e1,mb3e1",
            "path=B1;ops=mb3e1,mb3e1",
            "path=B@x;ops=mb3e1,mb3e1",
            "path=B@1;op=mb3e1,mb3e1",
            "path=B@1;ops=mb3e1",
            "path=A@1;ops=mb3e1,mb3e1",
            "path=B@1;ops=skip,mb3e1",
        ] {
            assert!(
                matches!(parse_arch(bad, &space), Err(Error::Parse { .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn illegal_skip_points_at_op() {
        let space = SpaceSpec::minimal(2, 0, 1);
        let err = parse_arch("path=B@2;ops=mb3e1,skip", &space).unwrap_err();
        assert!(matches!(err, Error::Parse { pos: 19, .. }), "{err:?}");
    }

    #[test]
    fn all_n_path_text() {
        let mut space = SpaceSpec::minimal(2, 0, 0);
        space.c1 = 1;
        let arch = parse_arch("path=@;ops=skip,mb3e1", &space).unwrap();
        assert_eq!(serialize_arch(&arch), "path=@;ops=skip,mb3e1");
    }

    fn arb_arch() -> impl Strategy<Value = (SpaceSpec, Architecture)> {
        let space = SpaceSpec::desk();
        let paths = enumerate_paths(&space).unwrap();
        (0..paths.len(), proptest::collection::vec(0usize..7, 8)).prop_map(move |(pi, picks)| {
            let path = paths[pi].clone();
            let legal = legal_choices(&path, &space).unwrap();
            let ops = picks
                .iter()
                .zip(&legal)
                .map(|(&j, mask)| {
                    let j = if mask[j] { j } else { 0 };
                    space.op_vocab[j]
                })
                .collect();
            (space.clone(), Architecture::new(&space, path, ops).unwrap())
        })
    }

    proptest! {
        #[test]
        fn round_trip((space, arch) in arb_arch()) {
            let text = serialize_arch(&arch);
            prop_assert_eq!(parse_arch(&text, &space).unwrap(), arch);
        }
    }
}
