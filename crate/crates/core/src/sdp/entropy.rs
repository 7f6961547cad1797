//! Quantum maxima and min-entropy bounds from moment relaxations.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{witness_to_bell, BellFunctional, DimensionWitness, InputFactorization};
use crate::npa::{MomentStructure, MonomialSet};
use crate::scenario::Behavior;

use super::ipm::{IpmOptions, SolveStatus};
use super::problem::{SdpProblem, Sense};
use super::{solve_with, Backend, SdpSolution};

/// How the observed functional value enters the relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SecurityConstraint {
    /// `I(P) = v`.
    Equal,
    /// `I(P) >= v`.
    AtLeast,
}

#[derive(Debug, Clone, Copy)]
pub struct RelaxationOptions {
    pub monomials: MonomialSet,
    pub constraint: SecurityConstraint,
    /// Pin every `P(a|x)` to `1/na`.
    pub uniform_marginals: bool,
    pub backend: Backend,
    pub ipm: IpmOptions,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        Self {
            monomials: MonomialSet::Level(2),
            constraint: SecurityConstraint::Equal,
            uniform_marginals: false,
            backend: Backend::Builtin,
            ipm: IpmOptions::default(),
        }
    }
}

impl RelaxationOptions {
    pub fn with_monomials(mut self, m: MonomialSet) -> Self {
        self.monomials = m;
        self
    }

    pub fn with_uniform_marginals(mut self, on: bool) -> Self {
        self.uniform_marginals = on;
        self
    }

    pub fn with_constraint(mut self, c: SecurityConstraint) -> Self {
        self.constraint = c;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyPoint {
    /// Security parameter: the functional value the bound holds for.
    pub value: f64,
    /// Certified min-entropy in bits.
    pub bound: f64,
    /// Upper bounds on the guessing probability of each outcome pair, `[a][b]`.
    pub guessing: Vec<Vec<f64>>,
    pub argmax_a: usize,
    pub argmax_b: usize,
    /// Worst solver status among the sub-problems.
    pub status: SolveStatus,
}

fn base_problem(ms: &MomentStructure, opts: &RelaxationOptions) -> SdpProblem {
    let mut p = SdpProblem::from_moments(ms, Default::default(), Sense::Maximize);
    if opts.uniform_marginals {
        for (expr, rhs) in ms.uniform_marginal_constraints() {
            p.add_equality(expr, rhs);
        }
    }
    p
}

/// Maximum of `f` over the relaxation, with the solver's details.
pub fn max_quantum_solution(f: &BellFunctional, opts: &RelaxationOptions) -> Result<SdpSolution> {
    let ms = MomentStructure::new(*f.scenario(), opts.monomials)?;
    let mut p = base_problem(&ms, opts);
    p.objective = ms.functional(f)?;
    let sol = solve_with(&p, opts.backend, &opts.ipm)?;
    match sol.status {
        SolveStatus::Infeasible => {
            Err(Error::Infeasible("relaxation has no feasible point".into()))
        }
        SolveStatus::Unbounded => Err(Error::Numerical(
            "relaxation reported an unbounded objective".into(),
        )),
        SolveStatus::Inaccurate => {
            log::info!(
                "maximum solved inaccurately (gap {:.1e}, residuals {:.1e}/{:.1e})",
                sol.rel_gap,
                sol.primal_infeas,
                sol.dual_infeas
            );
            Ok(sol)
        }
        SolveStatus::Optimal => Ok(sol),
    }
}

/// Upper bound on the quantum maximum of `f` from the given relaxation level.
pub fn max_quantum_value(f: &BellFunctional, monomials: MonomialSet) -> Result<f64> {
    let opts = RelaxationOptions::default().with_monomials(monomials);
    Ok(max_quantum_solution(f, &opts)?.certified())
}

/// The behavior at the relaxation optimum of `f`, read off the moment matrix.
/// Round-off is clipped so every input cell is a probability distribution.
pub fn optimal_behavior(f: &BellFunctional, opts: &RelaxationOptions) -> Result<Behavior> {
    let s = *f.scenario();
    let ms = MomentStructure::new(s, opts.monomials)?;
    let sol = max_quantum_solution(f, opts)?;
    let mut p: Vec<f64> = ms
        .behavior(&sol.y)?
        .table()
        .iter()
        .map(|&q| q.max(0.0))
        .collect();
    for x in 0..s.nx {
        for y in 0..s.ny {
            let total: f64 = (0..s.na)
                .flat_map(|a| (0..s.nb).map(move |b| (a, b)))
                .map(|(a, b)| p[s.index(a, b, x, y)])
                .sum();
            for a in 0..s.na {
                for b in 0..s.nb {
                    p[s.index(a, b, x, y)] /= total;
                }
            }
        }
    }
    Behavior::from_table(s, p)
}

fn worst(a: SolveStatus, b: SolveStatus) -> SolveStatus {
    let rank = |s| match s {
        SolveStatus::Optimal => 0,
        SolveStatus::Inaccurate => 1,
        SolveStatus::Unbounded => 2,
        SolveStatus::Infeasible => 3,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

/// Largest `P(a,b|x,y)` for each outcome pair, given `f(P) = v`.
fn guessing_table(
    f: &BellFunctional,
    v: f64,
    x: usize,
    y: usize,
    opts: &RelaxationOptions,
) -> Result<(Vec<Vec<f64>>, SolveStatus)> {
    let s = *f.scenario();
    if x >= s.nx || y >= s.ny {
        return Err(Error::InvalidArgument(format!(
            "inputs ({x}, {y}) outside the scenario"
        )));
    }
    let ms = MomentStructure::new(s, opts.monomials)?;
    let mut base = base_problem(&ms, opts);
    let expr = ms.functional(f)?;
    match opts.constraint {
        SecurityConstraint::Equal => base.add_equality(expr, v),
        SecurityConstraint::AtLeast => base.add_inequality(expr, v),
    }
    let pairs: Vec<(usize, usize)> = (0..s.na)
        .flat_map(|a| (0..s.nb).map(move |b| (a, b)))
        .collect();
    let sols: Vec<Result<SdpSolution>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let mut p = base.clone();
            p.objective = ms.joint(a, b, x, y).clone();
            solve_with(&p, opts.backend, &opts.ipm)
        })
        .collect();
    let mut table = vec![vec![0.0; s.nb]; s.na];
    let mut status = SolveStatus::Optimal;
    for (&(a, b), sol) in pairs.iter().zip(sols) {
        let sol = sol?;
        status = worst(status, sol.status);
        match sol.status {
            SolveStatus::Infeasible => {
                return Err(Error::Infeasible(format!(
                    "value {v} is outside the relaxation (sub-problem a={a}, b={b})"
                )))
            }
            SolveStatus::Unbounded => {
                return Err(Error::Numerical(format!(
                    "sub-problem a={a}, b={b} reported unbounded"
                )))
            }
            SolveStatus::Inaccurate => log::info!(
                "sub-problem a={a}, b={b} at v={v}: gap {:.1e}, residuals {:.1e}/{:.1e}",
                sol.rel_gap,
                sol.primal_infeas,
                sol.dual_infeas
            ),
            SolveStatus::Optimal => {}
        }
        table[a][b] = sol.certified().clamp(0.0, 1.0);
    }
    Ok((table, status))
}

fn point(value: f64, guessing: Vec<Vec<f64>>, status: SolveStatus) -> EntropyPoint {
    let mut best = (0, 0, f64::NEG_INFINITY);
    for (a, row) in guessing.iter().enumerate() {
        for (b, &g) in row.iter().enumerate() {
            if g > best.2 {
                best = (a, b, g);
            }
        }
    }
    let bound = if best.2 > 0.0 {
        (-best.2.log2()).max(0.0)
    } else {
        f64::INFINITY
    };
    EntropyPoint {
        value,
        bound,
        guessing,
        argmax_a: best.0,
        argmax_b: best.1,
        status,
    }
}

/// Lower bound on `H_min(a,b|x,y)` for any quantum behavior with `f(P) = v`.
/// One relaxation is solved per outcome pair.
pub fn di_min_entropy(
    f: &BellFunctional,
    v: f64,
    x: usize,
    y: usize,
    opts: &RelaxationOptions,
) -> Result<EntropyPoint> {
    let (table, status) = guessing_table(f, v, x, y, opts)?;
    Ok(point(v, table, status))
}

/// Lower bound on `H_min(b|x',y)` for qubit prepare-and-measure devices with
/// `w = v`.
///
/// The witness is turned into a Bell functional by the factorization `split`;
/// with uniform outcome marginals both take the same value, and dividing out
/// Alice's uniform outcome costs exactly one bit of the joint bound. The
/// guessing table holds `na * P(a,b|x,y)`.
pub fn sdi_min_entropy(
    w: &DimensionWitness,
    v: f64,
    xp: usize,
    y: usize,
    split: &InputFactorization,
    opts: &RelaxationOptions,
) -> Result<EntropyPoint> {
    if xp >= w.scenario().nprep {
        return Err(Error::InvalidArgument(format!(
            "preparation {xp} outside the scenario"
        )));
    }
    let bell = witness_to_bell(w, split)?;
    let (x, _) = split.pair(xp);
    let opts = RelaxationOptions {
        uniform_marginals: true,
        ..*opts
    };
    let (mut table, status) = guessing_table(&bell, v, x, y, &opts)?;
    let na = split.outcomes() as f64;
    for row in table.iter_mut() {
        for g in row.iter_mut() {
            *g = (*g * na).min(1.0);
        }
    }
    Ok(point(v, table, status))
}

/// What a curve is computed for.
#[derive(Debug, Clone, Copy)]
pub enum CurveTarget<'a> {
    Bell {
        f: &'a BellFunctional,
        x: usize,
        y: usize,
    },
    Witness {
        w: &'a DimensionWitness,
        split: &'a InputFactorization,
        xp: usize,
        y: usize,
    },
}

/// Bounds on a grid of values. Points that fail keep their error and the
/// remaining points are still computed.
pub fn entropy_curve(
    target: CurveTarget<'_>,
    values: &[f64],
    opts: &RelaxationOptions,
) -> Vec<(f64, Result<EntropyPoint>)> {
    values
        .par_iter()
        .map(|&v| {
            let r = match target {
                CurveTarget::Bell { f, x, y } => di_min_entropy(f, v, x, y, opts),
                CurveTarget::Witness { w, split, xp, y } => {
                    sdi_min_entropy(w, v, xp, y, split, opts)
                }
            };
            (v, r)
        })
        .collect()
}

/// CSV with header `value,bound,argmax_a,argmax_b`; failed points leave the
/// last three fields empty.
pub fn write_curve_csv(
    points: &[(f64, Result<EntropyPoint>)],
    mut out: impl std::io::Write,
) -> Result<()> {
    writeln!(out, "value,bound,argmax_a,argmax_b")?;
    for (v, r) in points {
        match r {
            Ok(p) => writeln!(out, "{},{},{},{}", v, p.bound, p.argmax_a, p.argmax_b)?,
            Err(_) => writeln!(out, "{v},,,")?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{pn_max, pn_value, rac_inequality, rac_normalization};

    #[test]
    fn classical_value_certifies_nothing() {
        let f = rac_inequality(2).unwrap();
        let p = di_min_entropy(&f, 6.0, 0, 0, &RelaxationOptions::default()).unwrap();
        assert!(p.bound.abs() < 1e-3, "{p:?}");
    }

    #[test]
    fn chsh_boundary_value() {
        let f = rac_inequality(2).unwrap();
        let v = pn_max(2) * rac_normalization(2);
        let p = di_min_entropy(&f, v, 0, 0, &RelaxationOptions::default()).unwrap();
        assert!((p.bound - 1.2284).abs() < 5e-3, "{p:?}");
    }

    #[test]
    fn values_above_the_maximum_are_infeasible() {
        let f = rac_inequality(2).unwrap();
        let r = di_min_entropy(&f, 7.0, 0, 0, &RelaxationOptions::default());
        assert!(matches!(r, Err(Error::Infeasible(_))), "{r:?}");
    }

    #[test]
    fn optimal_box_reaches_the_maximum() {
        let f = rac_inequality(2).unwrap();
        let beh = optimal_behavior(&f, &RelaxationOptions::default()).unwrap();
        assert!(crate::scenario::validate_behavior(&beh, 1e-6).passed);
        assert!((pn_value(f.evaluate(&beh).unwrap(), 2) - pn_max(2)).abs() < 1e-6);
    }

    #[test]
    fn csv_layout() {
        let pts = vec![
            (
                6.0,
                Ok(point(
                    6.0,
                    vec![vec![1.0, 0.0], vec![0.0, 0.0]],
                    SolveStatus::Optimal,
                )),
            ),
            (9.0, Err(Error::Infeasible("x".into()))),
        ];
        let mut buf = Vec::new();
        write_curve_csv(&pts, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "value,bound,argmax_a,argmax_b\n6,0,0,0\n9,,,\n"
        );
    }
}
