//! SDPA sparse format (`.dat-s`).
//!
//! Written as `min cᵀx s.t. Σ_i F_i x_i − F_0 ⪰ 0`. Scalar blocks and
//! equalities (as `±` pairs) share one diagonal block of negative size.
//! The objective constant, which the format cannot carry, is kept in a
//! leading comment line.

use std::collections::BTreeMap;
use std::fmt::Write;

use thiserror::Error;

use crate::relaxation::{AffineForm, BlockOrigin, BlockSDP, RelaxMeta, SymbolicMatrix, VarKey};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpaError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Export `sdp`; variables are numbered in key order (moments first, graded-lex).
pub fn export_sdpa(sdp: &BlockSDP) -> String {
    let vars: Vec<VarKey> = sdp.variables().into_iter().collect();
    let index: BTreeMap<&VarKey, usize> = vars.iter().enumerate().map(|(i, k)| (k, i + 1)).collect();

    // diagonal entries: scalar blocks then equality pairs
    let mut diag: Vec<AffineForm> = Vec::new();
    let mut dense: Vec<&SymbolicMatrix> = Vec::new();
    for b in &sdp.blocks {
        if b.dim() == 1 {
            diag.push(b.entry(0, 0).clone());
        } else {
            dense.push(b);
        }
    }
    for e in &sdp.equalities {
        diag.push(e.clone());
        diag.push(e.scale(-1.0));
    }
    let nblocks = dense.len() + usize::from(!diag.is_empty());

    let mut out = String::new();
    writeln!(out, "* objective_constant {}", fmt(sdp.objective.constant)).unwrap();
    writeln!(out, "{}", vars.len()).unwrap();
    writeln!(out, "{nblocks}").unwrap();
    let mut sizes: Vec<String> = dense.iter().map(|b| b.dim().to_string()).collect();
    if !diag.is_empty() {
        sizes.push(format!("-{}", diag.len()));
    }
    writeln!(out, "{}", sizes.join(" ")).unwrap();
    let c: Vec<String> = vars
        .iter()
        .map(|k| fmt(sdp.objective.terms.get(k).copied().unwrap_or(0.0)))
        .collect();
    writeln!(out, "{}", c.join(" ")).unwrap();

    let mut entry = |blk: usize, i: usize, j: usize, f: &AffineForm| {
        if f.constant != 0.0 {
            writeln!(out, "0 {blk} {} {} {}", i + 1, j + 1, fmt(-f.constant)).unwrap();
        }
        for (k, &v) in &f.terms {
            writeln!(out, "{} {blk} {} {} {}", index[k], i + 1, j + 1, fmt(v)).unwrap();
        }
    };
    for (bi, b) in dense.iter().enumerate() {
        for (i, j, f) in b.upper() {
            entry(bi + 1, i, j, f);
        }
    }
    if !diag.is_empty() {
        let blk = dense.len() + 1;
        for (i, f) in diag.iter().enumerate() {
            entry(blk, i, i, f);
        }
    }
    out
}

/// Parse SDPA sparse text into a generic block SDP over `Aux` variables.
pub fn parse_sdpa(text: &str) -> Result<BlockSDP, SdpaError> {
    let mut constant = 0.0;
    let mut lines: Vec<(usize, String)> = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let t = raw.trim();
        if let Some(rest) = t.strip_prefix("* objective_constant") {
            constant = rest.trim().parse().map_err(|_| SdpaError::Parse {
                line: no + 1,
                msg: "bad objective constant".into(),
            })?;
            continue;
        }
        if t.is_empty() || t.starts_with('*') || t.starts_with('"') {
            continue;
        }
        let cleaned: String = t
            .chars()
            .map(|ch| if "{}(),".contains(ch) { ' ' } else { ch })
            .collect();
        lines.push((no + 1, cleaned));
    }
    let mut it = lines.into_iter();
    let mut next = |what: &str| {
        it.next().ok_or_else(|| SdpaError::Parse {
            line: 0,
            msg: format!("missing {what}"),
        })
    };
    let num = |line: usize, tok: &str| -> Result<f64, SdpaError> {
        tok.parse::<f64>().map_err(|_| SdpaError::Parse {
            line,
            msg: format!("expected a number, found `{tok}`"),
        })
    };
    let (l, s) = next("variable count")?;
    let m = num(l, s.split_whitespace().next().unwrap_or(""))? as usize;
    let (l, s) = next("block count")?;
    let nb = num(l, s.split_whitespace().next().unwrap_or(""))? as usize;
    let (l, s) = next("block structure")?;
    let sizes: Vec<i64> = s
        .split_whitespace()
        .take(nb)
        .map(|t| num(l, t).map(|v| v as i64))
        .collect::<Result<_, _>>()?;
    if sizes.len() != nb || sizes.contains(&0) {
        return Err(SdpaError::Parse {
            line: l,
            msg: "block structure does not match block count".into(),
        });
    }
    let (l, s) = next("objective vector")?;
    let c: Vec<f64> = s
        .split_whitespace()
        .take(m)
        .map(|t| num(l, t))
        .collect::<Result<_, _>>()?;
    if c.len() != m {
        return Err(SdpaError::Parse {
            line: l,
            msg: format!("expected {m} objective coefficients"),
        });
    }
    // F(x) = −F_0 + Σ x_k F_k, kept as upper-triangle forms per block
    let mut forms: Vec<BTreeMap<(usize, usize), AffineForm>> = vec![BTreeMap::new(); nb];
    for (l, s) in it {
        let tok: Vec<&str> = s.split_whitespace().collect();
        if tok.len() < 5 {
            return Err(SdpaError::Parse {
                line: l,
                msg: "entry needs five fields".into(),
            });
        }
        let k = num(l, tok[0])? as usize;
        let blk = num(l, tok[1])? as usize;
        let (mut i, mut j) = (num(l, tok[2])? as usize, num(l, tok[3])? as usize);
        let v = num(l, tok[4])?;
        if k > m || blk == 0 || blk > nb {
            return Err(SdpaError::Parse {
                line: l,
                msg: "matrix or block index out of range".into(),
            });
        }
        let dim = sizes[blk - 1].unsigned_abs() as usize;
        if i == 0 || j == 0 || i > dim || j > dim || (sizes[blk - 1] < 0 && i != j) {
            return Err(SdpaError::Parse {
                line: l,
                msg: "entry position out of range".into(),
            });
        }
        if i > j {
            std::mem::swap(&mut i, &mut j);
        }
        let f = forms[blk - 1].entry((i - 1, j - 1)).or_default();
        if k == 0 {
            f.constant -= v;
        } else {
            f.add_term(VarKey::Aux(k - 1), v);
        }
    }
    let mut objective = AffineForm::constant(constant);
    for (k, &ck) in c.iter().enumerate() {
        objective.add_term(VarKey::Aux(k), ck);
    }
    let mut sdp = BlockSDP::new(objective, RelaxMeta::generic(0));
    for (b, &size) in sizes.iter().enumerate() {
        let f = &forms[b];
        let get = |i: usize, j: usize| f.get(&(i, j)).cloned().unwrap_or_default();
        if size > 0 {
            let m = SymbolicMatrix::from_fn(size as usize, get);
            sdp.push_block(m, BlockOrigin::Generic, Vec::new());
        } else {
            for i in 0..size.unsigned_abs() as usize {
                let m = SymbolicMatrix::from_fn(1, |_, _| get(i, i));
                sdp.push_block(m, BlockOrigin::Generic, Vec::new());
            }
        }
    }
    Ok(sdp)
}
