//! Sparse text format for [`SdpProblem`].
//!
//! ```text
//! VARIABLES <n>
//! OBJECTIVE <k>
//! <var> <coef>                       (k lines)
//! CONSTRAINTS <m>
//! <EQ|GE> <rhs>                      (m lines)
//! TRIPLETS <t>
//! <constraint> <var> <coef>          (t lines)
//! BLOCKS <nb>
//! <dim> ...                          (nb dims on one line)
//! BLOCKENTRIES <e>
//! <block> <var|-1> <row> <col> <val> (e lines, row >= col, -1 = constant)
//! END
//! ```
//!
//! Indices are 0-based; reals are written with 17 significant digits.

use std::io::{BufRead, Write};

use super::{BlockEntry, LinearConstraint, PsdBlock, Result, SdpError, SdpProblem, Sense};

pub fn write_text<W: Write>(p: &SdpProblem, mut w: W) -> Result<()> {
    writeln!(w, "VARIABLES {}", p.num_vars)?;
    let obj: Vec<(usize, f64)> = p
        .objective
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(i, c)| (i, *c))
        .collect();
    writeln!(w, "OBJECTIVE {}", obj.len())?;
    for (i, c) in obj {
        writeln!(w, "{i} {c:.16e}")?;
    }
    writeln!(w, "CONSTRAINTS {}", p.constraints.len())?;
    for c in &p.constraints {
        let s = match c.sense {
            Sense::Eq => "EQ",
            Sense::Ge => "GE",
        };
        writeln!(w, "{s} {:.16e}", c.rhs)?;
    }
    let nnz: usize = p.constraints.iter().map(|c| c.coeffs.len()).sum();
    writeln!(w, "TRIPLETS {nnz}")?;
    for (r, c) in p.constraints.iter().enumerate() {
        for &(v, a) in &c.coeffs {
            writeln!(w, "{r} {v} {a:.16e}")?;
        }
    }
    writeln!(w, "BLOCKS {}", p.blocks.len())?;
    let dims: Vec<String> = p.blocks.iter().map(|b| b.dim.to_string()).collect();
    writeln!(w, "{}", dims.join(" "))?;
    let ne: usize = p.blocks.iter().map(|b| b.entries.len()).sum();
    writeln!(w, "BLOCKENTRIES {ne}")?;
    for (k, b) in p.blocks.iter().enumerate() {
        for e in &b.entries {
            let v = e.var.map(|v| v as i64).unwrap_or(-1);
            writeln!(w, "{k} {v} {} {} {:.16e}", e.row, e.col, e.value)?;
        }
    }
    writeln!(w, "END")?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_tokens(&mut self) -> Result<Vec<String>> {
        loop {
            self.line += 1;
            let l = self.inner.next().ok_or_else(|| self.err("unexpected end of file"))??;
            let toks: Vec<String> = l.split_whitespace().map(str::to_string).collect();
            if !toks.is_empty() && !toks[0].starts_with('#') {
                return Ok(toks);
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> SdpError {
        SdpError::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn header(&mut self, key: &str) -> Result<usize> {
        let t = self.next_tokens()?;
        if t.len() != 2 || t[0] != key {
            return Err(self.err(format!("expected `{key} <count>`")));
        }
        self.parse(&t[1])
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("cannot parse `{s}`")))
    }

    fn fields(&mut self, n: usize) -> Result<Vec<String>> {
        let t = self.next_tokens()?;
        if t.len() != n {
            return Err(self.err(format!("expected {n} fields, got {}", t.len())));
        }
        Ok(t)
    }
}

pub fn read_text<R: BufRead>(r: R) -> Result<SdpProblem> {
    let mut l = Lines {
        inner: r.lines(),
        line: 0,
    };
    let n = l.header("VARIABLES")?;
    let mut objective = vec![0.0; n];
    for _ in 0..l.header("OBJECTIVE")? {
        let f = l.fields(2)?;
        let i: usize = l.parse(&f[0])?;
        if i >= n {
            return Err(l.err("objective index out of range"));
        }
        objective[i] = l.parse(&f[1])?;
    }
    let m = l.header("CONSTRAINTS")?;
    let mut constraints = Vec::with_capacity(m);
    for _ in 0..m {
        let f = l.fields(2)?;
        let sense = match f[0].as_str() {
            "EQ" => Sense::Eq,
            "GE" => Sense::Ge,
            other => return Err(l.err(format!("unknown sense `{other}`"))),
        };
        constraints.push(LinearConstraint {
            coeffs: Vec::new(),
            sense,
            rhs: l.parse(&f[1])?,
        });
    }
    for _ in 0..l.header("TRIPLETS")? {
        let f = l.fields(3)?;
        let r: usize = l.parse(&f[0])?;
        let v: usize = l.parse(&f[1])?;
        if r >= m {
            return Err(l.err("constraint index out of range"));
        }
        let a: f64 = l.parse(&f[2])?;
        constraints[r].coeffs.push((v, a));
    }
    let nb = l.header("BLOCKS")?;
    let mut blocks = Vec::with_capacity(nb);
    if nb > 0 {
        let f = l.fields(nb)?;
        for d in f {
            blocks.push(PsdBlock {
                dim: l.parse(&d)?,
                entries: Vec::new(),
            });
        }
    }
    for _ in 0..l.header("BLOCKENTRIES")? {
        let f = l.fields(5)?;
        let k: usize = l.parse(&f[0])?;
        let v: i64 = l.parse(&f[1])?;
        if k >= nb {
            return Err(l.err("block index out of range"));
        }
        blocks[k].entries.push(BlockEntry {
            var: (v >= 0).then_some(v as usize),
            row: l.parse(&f[2])?,
            col: l.parse(&f[3])?,
            value: l.parse(&f[4])?,
        });
    }
    let t = l.next_tokens()?;
    if t != ["END"] {
        return Err(l.err("expected END"));
    }
    let p = SdpProblem {
        num_vars: n,
        objective,
        constraints,
        blocks,
    };
    p.check()?;
    Ok(p)
}
