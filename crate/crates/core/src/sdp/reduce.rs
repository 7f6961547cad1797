//! Elimination of linear equalities, bringing a problem to the form
//! `max b'z  s.t.  C - sum z_j A_j >= 0` used by the solver and by SDPA export.

use crate::error::{Error, Result};
use crate::npa::Affine;

use super::problem::{SdpProblem, Sense};

/// Symmetric sparse entry; `r <= c` and the mirror is implied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub blk: usize,
    pub r: usize,
    pub c: usize,
    pub v: f64,
}

/// `max b'z + offset` subject to `C - sum z_j A_j` PSD, block-diagonal.
#[derive(Debug, Clone)]
pub struct StandardForm {
    pub dims: Vec<usize>,
    pub diagonal: Vec<bool>,
    /// Constant term, as sparse entries.
    pub c: Vec<Entry>,
    pub a: Vec<Vec<Entry>>,
    pub b: Vec<f64>,
    pub offset: f64,
    /// `+1` when the original problem maximizes, `-1` when it minimizes.
    pub sign: f64,
    /// Original variables as affine functions of `z`.
    pub lift: Vec<Affine>,
}

impl StandardForm {
    pub fn m(&self) -> usize {
        self.b.len()
    }

    /// Original objective value at `z`.
    pub fn objective(&self, z: &[f64]) -> f64 {
        self.offset + self.sign * self.b.iter().zip(z).map(|(b, z)| b * z).sum::<f64>()
    }

    pub fn lift(&self, z: &[f64]) -> Vec<f64> {
        self.lift.iter().map(|e| e.eval(z)).collect()
    }
}

const PIVOT_TOL: f64 = 1e-10;
const CONSISTENCY_TOL: f64 = 1e-9;

/// Row-reduces the equalities. Returns `(pivot column, row)` pairs with the
/// rows normalized so each pivot column is a unit vector.
fn rref(rows: &mut Vec<Vec<f64>>, nvars: usize) -> Result<Vec<usize>> {
    let mut pivots: Vec<usize> = Vec::new();
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for mut row in rows.drain(..) {
        for (p, prow) in pivots.iter().zip(&kept) {
            let k = row[*p];
            if k != 0.0 {
                for (x, y) in row.iter_mut().zip(prow) {
                    *x -= k * y;
                }
            }
        }
        let scale = row[..nvars].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let (col, best) = row[..nvars]
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (i, v)| {
                if v.abs() > acc.1 {
                    (i, v.abs())
                } else {
                    acc
                }
            });
        if best <= PIVOT_TOL * scale.max(1.0) || best == 0.0 {
            if row[nvars].abs() > CONSISTENCY_TOL {
                return Err(Error::Infeasible(format!(
                    "equality constraints are inconsistent (residual {:.3e})",
                    row[nvars]
                )));
            }
            continue;
        }
        let inv = 1.0 / row[col];
        row.iter_mut().for_each(|v| *v *= inv);
        row[col] = 1.0;
        for prow in kept.iter_mut() {
            let k = prow[col];
            if k != 0.0 {
                for (x, y) in prow.iter_mut().zip(&row) {
                    *x -= k * y;
                }
                prow[col] = 0.0;
            }
        }
        pivots.push(col);
        kept.push(row);
    }
    *rows = kept;
    Ok(pivots)
}

fn substitute(expr: &Affine, lift: &[Affine]) -> Affine {
    let mut out = Affine::constant(expr.constant);
    for &(k, c) in &expr.terms {
        out.add_scaled(c, &lift[k]);
    }
    out.simplify()
}

fn merge(mut v: Vec<Entry>) -> Vec<Entry> {
    v.sort_by_key(|e| (e.blk, e.r, e.c));
    let mut out: Vec<Entry> = Vec::with_capacity(v.len());
    for e in v {
        match out.last_mut() {
            Some(l) if (l.blk, l.r, l.c) == (e.blk, e.r, e.c) => l.v += e.v,
            _ => out.push(e),
        }
    }
    out.retain(|e| e.v.abs() > 1e-15);
    out
}

/// Eliminates equalities and turns scalar inequalities into a diagonal block.
pub fn reduce(p: &SdpProblem) -> Result<StandardForm> {
    p.validate()?;
    let nv = p.num_vars;
    let mut rows: Vec<Vec<f64>> = p
        .equalities
        .iter()
        .map(|c| {
            let mut row = vec![0.0; nv + 1];
            for &(k, v) in &c.expr.terms {
                row[k] += v;
            }
            row[nv] = c.rhs - c.expr.constant;
            row
        })
        .collect();
    let pivots = rref(&mut rows, nv)?;

    let mut is_pivot = vec![None; nv];
    for (r, &col) in pivots.iter().enumerate() {
        is_pivot[col] = Some(r);
    }
    let free: Vec<usize> = (0..nv).filter(|&k| is_pivot[k].is_none()).collect();
    let mut zidx = vec![usize::MAX; nv];
    for (j, &k) in free.iter().enumerate() {
        zidx[k] = j;
    }
    let mut lift: Vec<Affine> = (0..nv)
        .map(|k| match is_pivot[k] {
            None => Affine::var(zidx[k]),
            Some(r) => {
                let row = &rows[r];
                let mut e = Affine::constant(row[nv]);
                for &f in &free {
                    if row[f] != 0.0 {
                        e.terms.push((zidx[f], -row[f]));
                    }
                }
                e
            }
        })
        .collect();

    // F(z) = G0 + sum z_j G_j, stored as C = G0 and A_j = -G_j.
    let mut dims: Vec<usize> = p.blocks.iter().map(|b| b.dim).collect();
    let mut diagonal: Vec<bool> = p.blocks.iter().map(|b| b.diagonal).collect();
    let mut c = Vec::new();
    let mut a: Vec<Vec<Entry>> = vec![Vec::new(); free.len()];
    for (blk, block) in p.blocks.iter().enumerate() {
        for e in &block.entries {
            let (r, cc) = (e.row, e.col);
            match e.var {
                None => c.push(Entry {
                    blk,
                    r,
                    c: cc,
                    v: e.value,
                }),
                Some(k) => {
                    let ex = &lift[k];
                    if ex.constant != 0.0 {
                        c.push(Entry {
                            blk,
                            r,
                            c: cc,
                            v: e.value * ex.constant,
                        });
                    }
                    for &(j, coef) in &ex.terms {
                        a[j].push(Entry {
                            blk,
                            r,
                            c: cc,
                            v: -e.value * coef,
                        });
                    }
                }
            }
        }
    }
    if !p.inequalities.is_empty() {
        let blk = dims.len();
        dims.push(p.inequalities.len());
        diagonal.push(true);
        for (i, ineq) in p.inequalities.iter().enumerate() {
            let ex = substitute(&ineq.expr, &lift);
            c.push(Entry {
                blk,
                r: i,
                c: i,
                v: ex.constant - ineq.rhs,
            });
            for &(j, coef) in &ex.terms {
                a[j].push(Entry {
                    blk,
                    r: i,
                    c: i,
                    v: -coef,
                });
            }
        }
    }
    let c = merge(c);
    let a: Vec<Vec<Entry>> = a.into_iter().map(merge).collect();

    let sign = match p.sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    let obj = substitute(&p.objective, &lift);
    let mut b = vec![0.0; free.len()];
    for &(j, coef) in &obj.terms {
        b[j] += sign * coef;
    }

    // Free variables that touch no block are either unbounded or irrelevant.
    let keep: Vec<usize> = (0..free.len()).filter(|&j| !a[j].is_empty()).collect();
    if let Some(j) = (0..free.len()).find(|&j| a[j].is_empty() && b[j].abs() > 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "objective is unbounded along variable {} which no constraint limits",
            free[j]
        )));
    }
    if keep.len() < free.len() {
        let mut remap = vec![None; free.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = Some(new);
        }
        for e in lift.iter_mut() {
            e.terms = e
                .terms
                .iter()
                .filter_map(|&(j, c)| remap[j].map(|n| (n, c)))
                .collect();
        }
    }
    let a = keep.iter().map(|&j| a[j].clone()).collect();
    let b = keep.iter().map(|&j| b[j]).collect();

    Ok(StandardForm {
        dims,
        diagonal,
        c,
        a,
        b,
        offset: obj.constant,
        sign,
        lift,
    })
}
