//! Dense primal-dual interior-point method (HKM direction, Mehrotra
//! predictor-corrector) for block-diagonal problems in standard form.
//!
//! Dual: `max b'y  s.t.  Z = C - sum y_i A_i >= 0`.
//! Primal: `min <C, X>  s.t.  <A_i, X> = b_i,  X >= 0`.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::reduce::{Entry, StandardForm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Inaccurate,
}

#[derive(Debug, Clone, Copy)]
pub struct IpmOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    /// A run that stops early is still reported optimal within this tolerance.
    pub accept_tol: f64,
    /// Iterations without a 10% improvement of the worst residual before giving up.
    pub patience: usize,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-9,
            feas_tol: 1e-9,
            max_iter: 150,
            accept_tol: 1e-7,
            patience: 25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub status: SolveStatus,
    pub y: Vec<f64>,
    pub primal_obj: f64,
    pub rel_gap: f64,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    pub iterations: usize,
}

type Blocks = Vec<Mat<f64>>;

fn zeros(dims: &[usize]) -> Blocks {
    dims.iter().map(|&n| Mat::zeros(n, n)).collect()
}

fn scaled_identity(dims: &[usize], k: f64) -> Blocks {
    dims.iter()
        .map(|&n| Mat::from_fn(n, n, |i, j| if i == j { k } else { 0.0 }))
        .collect()
}

fn inner(x: &Blocks, z: &Blocks) -> f64 {
    x.iter()
        .zip(z)
        .map(|(a, b)| {
            let mut s = 0.0;
            for j in 0..a.ncols() {
                s += a
                    .col_as_slice(j)
                    .iter()
                    .zip(b.col_as_slice(j))
                    .map(|(u, v)| u * v)
                    .sum::<f64>();
            }
            s
        })
        .sum()
}

fn frob(x: &Blocks) -> f64 {
    inner(x, x).sqrt()
}

/// `<A, K>` for a symmetric sparse `A` and any square `K`.
fn apply(ents: &[Entry], k: &Blocks) -> f64 {
    ents.iter()
        .map(|e| {
            let m = &k[e.blk];
            if e.r == e.c {
                e.v * m[(e.r, e.r)]
            } else {
                e.v * (m[(e.r, e.c)] + m[(e.c, e.r)])
            }
        })
        .sum()
}

fn add_sparse(out: &mut Blocks, ents: &[Entry], k: f64) {
    for e in ents {
        out[e.blk][(e.r, e.c)] += k * e.v;
        if e.r != e.c {
            out[e.blk][(e.c, e.r)] += k * e.v;
        }
    }
}

fn sym_in_place(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn lower_inverse(l: faer::MatRef<'_, f64>) -> Mat<f64> {
    let n = l.nrows();
    let mut out = Mat::zeros(n, n);
    faer::linalg::triangular_inverse::invert_lower_triangular(out.as_mut(), l, faer::Par::Seq);
    for j in 0..n {
        for i in 0..j {
            out[(i, j)] = 0.0;
        }
    }
    out
}

/// Largest step keeping `L L' + alpha D` positive semidefinite, given `L^{-1}`.
fn max_step(linv: &Blocks, d: &Blocks) -> f64 {
    let mut alpha = f64::INFINITY;
    for (li, di) in linv.iter().zip(d) {
        let mut w = li * di * li.transpose();
        sym_in_place(&mut w);
        let lam = match w.self_adjoint_eigenvalues(Side::Lower) {
            Ok(ev) => ev.first().copied().unwrap_or(0.0),
            Err(_) => return 0.0,
        };
        if lam < 0.0 {
            alpha = alpha.min(-1.0 / lam);
        }
    }
    alpha
}

struct Factor {
    inv: Blocks,
    linv: Blocks,
}

fn factor(x: &Blocks) -> Option<Factor> {
    let mut inv = Vec::with_capacity(x.len());
    let mut linv = Vec::with_capacity(x.len());
    for m in x {
        let llt = m.llt(Side::Lower).ok()?;
        let mut i = llt.inverse();
        sym_in_place(&mut i);
        inv.push(i);
        linv.push(lower_inverse(llt.L()));
    }
    Some(Factor { inv, linv })
}

/// Schur complement `M_ij = tr(A_i X A_j Z^{-1})`.
fn schur(sf: &StandardForm, x: &Blocks, zinv: &Blocks) -> Mat<f64> {
    let m = sf.m();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            // T = Z^{-1} A_i X, only on the blocks A_i touches
            let mut t: Vec<Option<Mat<f64>>> = vec![None; sf.dims.len()];
            for e in &sf.a[i] {
                let n = sf.dims[e.blk];
                let tb = t[e.blk].get_or_insert_with(|| Mat::zeros(n, n));
                let zi = &zinv[e.blk];
                let xb = &x[e.blk];
                let mut rank_one = |r: usize, c: usize| {
                    let zcol: Vec<f64> = zi.col_as_slice(r).to_vec();
                    for q in 0..n {
                        let k = e.v * xb[(c, q)];
                        if k != 0.0 {
                            for (dst, z) in tb.col_as_slice_mut(q).iter_mut().zip(&zcol) {
                                *dst += k * z;
                            }
                        }
                    }
                };
                rank_one(e.r, e.c);
                if e.r != e.c {
                    rank_one(e.c, e.r);
                }
            }
            (0..m)
                .map(|j| {
                    sf.a[j]
                        .iter()
                        .map(|e| match &t[e.blk] {
                            None => 0.0,
                            Some(tb) if e.r == e.c => e.v * tb[(e.r, e.r)],
                            Some(tb) => e.v * (tb[(e.c, e.r)] + tb[(e.r, e.c)]),
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    let mut out = Mat::from_fn(m, m, |i, j| rows[i][j]);
    sym_in_place(&mut out);
    out
}

enum SchurSolver {
    Llt(faer::linalg::solvers::Llt<f64>),
    Lu(faer::linalg::solvers::PartialPivLu<f64>),
}

impl SchurSolver {
    fn new(m: &Mat<f64>) -> Self {
        let n = m.nrows();
        let maxdiag = (0..n)
            .map(|i| m[(i, i)].abs())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let mut reg = 0.0;
        for _ in 0..6 {
            let mut mm = m.clone();
            for i in 0..n {
                mm[(i, i)] += reg;
            }
            if let Ok(f) = mm.llt(Side::Lower) {
                return SchurSolver::Llt(f);
            }
            reg = if reg == 0.0 {
                1e-14 * maxdiag
            } else {
                reg * 100.0
            };
        }
        SchurSolver::Lu(m.partial_piv_lu())
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = match self {
            SchurSolver::Llt(f) => f.solve(&b),
            SchurSolver::Lu(f) => f.solve(&b),
        };
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }
}

fn dense_c(sf: &StandardForm) -> Blocks {
    let mut c = zeros(&sf.dims);
    add_sparse(&mut c, &sf.c, 1.0);
    c
}

fn a_adjoint(sf: &StandardForm, y: &[f64]) -> Blocks {
    let mut out = zeros(&sf.dims);
    for (yi, ai) in y.iter().zip(&sf.a) {
        if *yi != 0.0 {
            add_sparse(&mut out, ai, *yi);
        }
    }
    out
}

fn a_op(sf: &StandardForm, k: &Blocks) -> Vec<f64> {
    sf.a.iter().map(|ai| apply(ai, k)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct Direction {
    dx: Blocks,
    dy: Vec<f64>,
    dz: Blocks,
}

/// `Delta y` from the Schur system, then `Delta Z` and `Delta X`.
/// `target` is `sigma mu Z^{-1}` and `corr` the second-order term, both already
/// multiplied through by `Z^{-1}`.
#[allow(clippy::too_many_arguments)]
fn direction(
    sf: &StandardForm,
    solver: &SchurSolver,
    x: &Blocks,
    zinv: &Blocks,
    rd: &Blocks,
    target: &Blocks,
    corr: Option<&Blocks>,
) -> Direction {
    // K = sigma mu Z^-1 - X Rd Z^-1 - corr
    let mut k: Blocks = Vec::with_capacity(x.len());
    for b in 0..x.len() {
        let mut kb = &target[b] - &x[b] * &rd[b] * &zinv[b];
        if let Some(c) = corr {
            kb -= &c[b];
        }
        k.push(kb);
    }
    let ak = a_op(sf, &k);
    let rhs: Vec<f64> = sf.b.iter().zip(&ak).map(|(b, a)| b - a).collect();
    let dy = solver.solve(&rhs);
    let mut dz = a_adjoint(sf, &dy);
    for b in 0..dz.len() {
        dz[b] = &rd[b] - &dz[b];
    }
    let mut dx = Vec::with_capacity(x.len());
    for b in 0..x.len() {
        let mut d = &target[b] - &x[b] - &x[b] * &dz[b] * &zinv[b];
        if let Some(c) = corr {
            d -= &c[b];
        }
        sym_in_place(&mut d);
        dx.push(d);
    }
    Direction { dx, dy, dz }
}

fn axpy_blocks(x: &mut Blocks, a: f64, d: &Blocks) {
    for (xb, db) in x.iter_mut().zip(d) {
        *xb += faer::Scale(a) * db;
    }
}

fn scale_blocks(x: &Blocks, a: f64) -> Blocks {
    x.iter().map(|b| faer::Scale(a) * b).collect()
}

pub fn solve(sf: &StandardForm, opts: &IpmOptions) -> IpmResult {
    let m = sf.m();
    let n_tot: usize = sf.dims.iter().sum();
    let nf = n_tot as f64;
    let c = dense_c(sf);
    let norm_c = frob(&c);
    let norm_b = norm(&sf.b);

    let a_norms: Vec<f64> =
        sf.a.iter()
            .map(|ai| {
                ai.iter()
                    .map(|e| {
                        if e.r == e.c {
                            e.v * e.v
                        } else {
                            2.0 * e.v * e.v
                        }
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
    let xi = (0..m)
        .map(|i| nf * (1.0 + sf.b[i].abs()) / (1.0 + a_norms[i]))
        .fold(10.0f64.max(nf.sqrt()), f64::max);
    let eta = a_norms
        .iter()
        .copied()
        .fold(10.0f64.max(nf.sqrt()).max(norm_c), f64::max);

    let mut x = scaled_identity(&sf.dims, xi);
    let mut z = scaled_identity(&sf.dims, eta);
    let mut y = vec![0.0; m];

    let mut best: Option<IpmResult> = None;
    let mut best_err = f64::INFINITY;
    let mut since_best = 0;
    let mut stalled = 0;
    let mut last: Option<IpmResult> = None;

    for it in 0..=opts.max_iter {
        let ax = a_op(sf, &x);
        let rp: Vec<f64> = sf.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let aty = a_adjoint(sf, &y);
        let rd: Blocks = (0..c.len()).map(|b| &c[b] - &aty[b] - &z[b]).collect();
        let pobj = inner(&c, &x);
        let dobj: f64 = sf.b.iter().zip(&y).map(|(b, y)| b * y).sum();
        let mu = inner(&x, &z) / nf;
        let pinf = norm(&rp) / (1.0 + norm_b);
        let dinf = frob(&rd) / (1.0 + norm_c);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let current = IpmResult {
            status: SolveStatus::Inaccurate,
            y: y.clone(),
            primal_obj: pobj,
            rel_gap: gap,
            primal_infeas: pinf,
            dual_infeas: dinf,
            iterations: it,
        };
        log::trace!("ipm {it:3} p={pobj:.10e} d={dobj:.10e} gap={gap:.2e} pinf={pinf:.2e} dinf={dinf:.2e} mu={mu:.2e}");
        if gap <= opts.gap_tol && pinf <= opts.feas_tol && dinf <= opts.feas_tol {
            return IpmResult {
                status: SolveStatus::Optimal,
                ..current
            };
        }
        // Certificates: a primal ray proves the LMI in y infeasible; a dual ray
        // proves the objective unbounded.
        if it > 5 && pobj < 0.0 && norm(&ax) / -pobj < 1e-8 && frob(&x) > 1e6 {
            return IpmResult {
                status: SolveStatus::Infeasible,
                ..current
            };
        }
        let ay_z = (0..c.len()).map(|b| &aty[b] + &z[b]).collect::<Blocks>();
        if it > 5 && dobj > 0.0 && frob(&ay_z) / dobj < 1e-8 && norm(&y) > 1e6 {
            return IpmResult {
                status: SolveStatus::Unbounded,
                ..current
            };
        }
        let err = gap.max(pinf).max(dinf);
        if err < 0.9 * best_err {
            best_err = err;
            best = Some(current.clone());
            since_best = 0;
        } else {
            since_best += 1;
        }
        last = Some(current);
        if it == opts.max_iter || stalled >= 3 || since_best >= opts.patience {
            break;
        }

        let (Some(fx), Some(fz)) = (factor(&x), factor(&z)) else {
            break;
        };
        let zinv = &fz.inv;
        let mmat = schur(sf, &x, zinv);
        let solver = SchurSolver::new(&mmat);

        let zero_target = zeros(&sf.dims);
        let pred = direction(sf, &solver, &x, zinv, &rd, &zero_target, None);
        let ap = max_step(&fx.linv, &pred.dx).min(1.0);
        let ad = max_step(&fz.linv, &pred.dz).min(1.0);
        let mut xa = x.clone();
        axpy_blocks(&mut xa, ap, &pred.dx);
        let mut za = z.clone();
        axpy_blocks(&mut za, ad, &pred.dz);
        let mu_aff = inner(&xa, &za) / nf;
        let sigma = if mu > 0.0 {
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };

        let target = scale_blocks(zinv, sigma * mu);
        let corr: Blocks = (0..x.len())
            .map(|b| &pred.dx[b] * &pred.dz[b] * &zinv[b])
            .collect();
        let dir = direction(sf, &solver, &x, zinv, &rd, &target, Some(&corr));

        let gamma = 0.9 + 0.09 * ap.min(ad);
        let sp = (gamma * max_step(&fx.linv, &dir.dx)).min(1.0);
        let sd = (gamma * max_step(&fz.linv, &dir.dz)).min(1.0);
        if sp < 1e-10 && sd < 1e-10 {
            stalled += 1;
        } else {
            stalled = 0;
        }
        axpy_blocks(&mut x, sp, &dir.dx);
        axpy_blocks(&mut z, sd, &dir.dz);
        for (yi, di) in y.iter_mut().zip(&dir.dy) {
            *yi += sd * di;
        }
        for b in x.iter_mut().chain(z.iter_mut()) {
            sym_in_place(b);
        }
    }
    finish(best, last, opts)
}

/// Returns the best iterate seen, marked optimal if it meets the looser
/// acceptance tolerance.
fn finish(best: Option<IpmResult>, last: Option<IpmResult>, opts: &IpmOptions) -> IpmResult {
    let mut r = best.or(last).expect("at least one iterate");
    if r.rel_gap <= opts.accept_tol
        && r.primal_infeas <= opts.accept_tol
        && r.dual_infeas <= opts.accept_tol
    {
        r.status = SolveStatus::Optimal;
    }
    r
}

/// `C - sum y_i A_i` for every block.
pub fn slack(sf: &StandardForm, y: &[f64]) -> Vec<Mat<f64>> {
    let c = dense_c(sf);
    let aty = a_adjoint(sf, y);
    (0..c.len()).map(|b| &c[b] - &aty[b]).collect()
}

/// Smallest eigenvalue over all blocks of a block-diagonal matrix.
pub fn min_eigenvalue(blocks: &[Mat<f64>]) -> f64 {
    blocks
        .iter()
        .map(|b| {
            b.self_adjoint_eigenvalues(Side::Lower)
                .ok()
                .and_then(|v| v.first().copied())
                .unwrap_or(f64::NEG_INFINITY)
        })
        .fold(f64::INFINITY, f64::min)
}
