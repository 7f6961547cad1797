//! Sparse SDPA (`.dat-s`) files.
//!
//! A file describes `min c'y  s.t.  sum y_i F_i - F_0 >= 0`. Problems are
//! written after equality elimination; two comment lines carry the objective
//! offset and orientation so that a re-import reproduces the original value.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::npa::Affine;

use super::ipm::SolveStatus;
use super::problem::{BlockEntry, LmiBlock, SdpProblem, Sense};
use super::reduce::{reduce, Entry, StandardForm};
use super::{solution_from, SdpSolution};

/// Writes an already reduced problem.
pub fn write_standard(sf: &StandardForm, mut out: impl Write) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "* offset {}", sf.offset).unwrap();
    writeln!(s, "* sign {}", sf.sign).unwrap();
    writeln!(s, "{}", sf.m()).unwrap();
    writeln!(s, "{}", sf.dims.len()).unwrap();
    let sizes: Vec<String> = sf
        .dims
        .iter()
        .zip(&sf.diagonal)
        .map(|(d, &diag)| if diag { format!("-{d}") } else { d.to_string() })
        .collect();
    writeln!(s, "{}", sizes.join(" ")).unwrap();
    let c: Vec<String> = sf.b.iter().map(|b| (-b).to_string()).collect();
    writeln!(
        s,
        "{}",
        if c.is_empty() {
            "0".to_string()
        } else {
            c.join(" ")
        }
    )
    .unwrap();
    let mut line = |mat: usize, e: &Entry, v: f64| {
        writeln!(s, "{} {} {} {} {}", mat, e.blk + 1, e.r + 1, e.c + 1, v).unwrap();
    };
    // F_0 = -C and F_i = -A_i
    for e in &sf.c {
        line(0, e, -e.v);
    }
    for (i, ai) in sf.a.iter().enumerate() {
        for e in ai {
            line(i + 1, e, -e.v);
        }
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn export_sdpa(p: &SdpProblem, path: impl AsRef<Path>) -> Result<()> {
    let sf = reduce(p)?;
    let f = std::fs::File::create(path)?;
    write_standard(&sf, std::io::BufWriter::new(f))
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("SDPA line {line}: {msg}"))
}

fn numbers(text: &str, line: usize) -> Result<Vec<f64>> {
    text.split(|c: char| c.is_whitespace() || matches!(c, ',' | '{' | '}' | '(' | ')'))
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| parse_err(line, format!("bad number '{t}'")))
        })
        .collect()
}

/// Reads a sparse SDPA file as a problem in the variables `y`.
pub fn read_sdpa(input: impl BufRead) -> Result<SdpProblem> {
    let mut offset = 0.0;
    let mut sign = -1.0;
    let mut header: Vec<(usize, String)> = Vec::new();
    let mut body: Vec<(usize, String)> = Vec::new();
    for (no, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if header.is_empty() && (t.starts_with('*') || t.starts_with('"')) {
            let words: Vec<&str> = t[1..].split_whitespace().collect();
            match words.as_slice() {
                ["offset", v] => offset = v.parse().map_err(|_| parse_err(no + 1, "bad offset"))?,
                ["sign", v] => sign = v.parse().map_err(|_| parse_err(no + 1, "bad sign"))?,
                _ => {}
            }
            continue;
        }
        if header.len() < 4 {
            header.push((no + 1, t.to_string()));
        } else {
            body.push((no + 1, t.to_string()));
        }
    }
    if header.len() < 4 {
        return Err(Error::Parse(
            "SDPA file ends before the header is complete".into(),
        ));
    }
    let first = |k: usize| -> Result<f64> {
        numbers(&header[k].1, header[k].0)?
            .first()
            .copied()
            .ok_or_else(|| parse_err(header[k].0, "missing value"))
    };
    let m = first(0)? as usize;
    let nblocks = first(1)? as usize;
    let sizes = numbers(&header[2].1, header[2].0)?;
    if sizes.len() < nblocks {
        return Err(parse_err(
            header[2].0,
            format!("expected {nblocks} block sizes"),
        ));
    }
    let mut c = numbers(&header[3].1, header[3].0)?;
    // The cost vector may wrap onto following lines.
    let mut body = body.into_iter().peekable();
    while c.len() < m {
        let (no, t) = body
            .next()
            .ok_or_else(|| Error::Parse("SDPA cost vector is truncated".into()))?;
        c.extend(numbers(&t, no)?);
    }
    if m > 0 {
        c.truncate(m);
    }

    let mut blocks: Vec<LmiBlock> = sizes[..nblocks]
        .iter()
        .map(|&s| LmiBlock {
            dim: s.abs() as usize,
            diagonal: s < 0.0,
            entries: Vec::new(),
        })
        .collect();
    for (no, t) in body {
        let v = numbers(&t, no)?;
        if v.len() != 5 {
            return Err(parse_err(no, "entry needs five fields"));
        }
        let (mat, blk, i, j) = (v[0] as usize, v[1] as usize, v[2] as usize, v[3] as usize);
        if mat > m || blk == 0 || blk > nblocks || i == 0 || j == 0 {
            return Err(parse_err(no, "entry index out of range"));
        }
        let (row, col) = if i <= j {
            (i - 1, j - 1)
        } else {
            (j - 1, i - 1)
        };
        let b = &mut blocks[blk - 1];
        if col >= b.dim {
            return Err(parse_err(no, "entry outside its block"));
        }
        let (var, value) = if mat == 0 {
            (None, -v[4])
        } else {
            (Some(mat - 1), v[4])
        };
        b.entries.push(BlockEntry {
            var,
            row,
            col,
            value,
        });
    }
    let objective = Affine {
        constant: offset,
        terms: c
            .iter()
            .enumerate()
            .map(|(i, &ci)| (i, -sign * ci))
            .filter(|t| t.1 != 0.0)
            .collect(),
    };
    let p = SdpProblem {
        num_vars: m,
        blocks,
        objective,
        sense: if sign > 0.0 {
            Sense::Maximize
        } else {
            Sense::Minimize
        },
        equalities: Vec::new(),
        inequalities: Vec::new(),
        identity: None,
    };
    p.validate()?;
    Ok(p)
}

pub fn import_sdpa(path: impl AsRef<Path>) -> Result<SdpProblem> {
    let f = std::fs::File::open(path)?;
    read_sdpa(std::io::BufReader::new(f))
}

static SCRATCH: AtomicUsize = AtomicUsize::new(0);

/// Runs an external SDPA-speaking solver (CSDP conventions: `solver in out`,
/// the first line of `out` is `y`).
pub(crate) fn solve_external(sf: &StandardForm, program: &str) -> Result<SdpSolution> {
    let tag = format!(
        "dicert-{}-{}",
        std::process::id(),
        SCRATCH.fetch_add(1, Ordering::Relaxed)
    );
    let dir = std::env::temp_dir();
    let input = dir.join(format!("{tag}.dat-s"));
    let output = dir.join(format!("{tag}.sol"));
    write_standard(sf, std::io::BufWriter::new(std::fs::File::create(&input)?))?;
    let run = std::process::Command::new(program)
        .arg(&input)
        .arg(&output)
        .output()
        .map_err(|e| Error::Numerical(format!("cannot run external solver '{program}': {e}")));
    let _ = std::fs::remove_file(&input);
    let run = run?;
    let status = match run.status.code() {
        Some(0) => SolveStatus::Optimal,
        Some(1) => SolveStatus::Unbounded,
        Some(2) => SolveStatus::Infeasible,
        Some(3) => SolveStatus::Inaccurate,
        code => {
            let _ = std::fs::remove_file(&output);
            return Err(Error::Numerical(format!(
                "external solver '{program}' failed with {code:?}"
            )));
        }
    };
    let text = std::fs::read_to_string(&output).unwrap_or_default();
    let _ = std::fs::remove_file(&output);
    let z = match text.lines().next() {
        Some(l) => numbers(l, 1)?,
        None if status != SolveStatus::Optimal => vec![0.0; sf.m()],
        None => return Err(Error::Numerical("external solver wrote no solution".into())),
    };
    if z.len() != sf.m() {
        return Err(Error::Numerical(format!(
            "external solver returned {} values for {} variables",
            z.len(),
            sf.m()
        )));
    }
    let dobj: f64 = sf.b.iter().zip(&z).map(|(b, z)| b * z).sum();
    Ok(solution_from(sf, status, &z, dobj, 0.0, 0.0, 0.0, 0))
}
