//! Semidefinite programs: problem assembly, solving, and the randomness bounds
//! built on top of them.

mod entropy;
mod ipm;
mod problem;
mod reduce;
pub mod sdpa;

use serde::Serialize;

use crate::error::{Error, Result};

pub use entropy::{
    di_min_entropy, entropy_curve, max_quantum_solution, max_quantum_value, optimal_behavior,
    sdi_min_entropy, write_curve_csv, CurveTarget, EntropyPoint, RelaxationOptions,
    SecurityConstraint,
};
pub use ipm::{IpmOptions, SolveStatus};
pub use problem::{BlockEntry, LinearConstraint, LmiBlock, SdpProblem, Sense};
pub use reduce::{reduce, Entry, StandardForm};

/// Environment variable selecting the solver backend (`builtin` or `csdp`).
pub const BACKEND_ENV: &str = "DICERT_SDP_BACKEND";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Builtin,
    /// The `csdp` executable, driven through an SDPA file.
    Csdp,
}

impl Backend {
    pub fn from_env() -> Result<Self> {
        match std::env::var(BACKEND_ENV) {
            Err(_) => Ok(Backend::Builtin),
            Ok(v) => v.parse(),
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "builtin" => Ok(Backend::Builtin),
            "csdp" => Ok(Backend::Csdp),
            other => Err(Error::InvalidArgument(format!(
                "unknown solver backend '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub sense: Sense,
    /// Objective at the returned point.
    pub value: f64,
    /// Bound from the other side of the duality pair: an upper bound on the
    /// optimum when maximizing, a lower bound when minimizing.
    pub bound: f64,
    pub y: Vec<f64>,
    /// First matrix block evaluated at `y`; the moment matrix for relaxations.
    pub matrix: Vec<Vec<f64>>,
    pub rel_gap: f64,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    pub iterations: usize,
}

impl SdpSolution {
    fn infeasible(p: &SdpProblem) -> Self {
        Self {
            status: SolveStatus::Infeasible,
            sense: p.sense,
            value: f64::NAN,
            bound: f64::NAN,
            y: vec![f64::NAN; p.num_vars],
            matrix: Vec::new(),
            rel_gap: f64::NAN,
            primal_infeas: f64::NAN,
            dual_infeas: f64::NAN,
            iterations: 0,
        }
    }

    /// The value to trust: the dual-side bound when solved to tolerance; for an
    /// inaccurate solve, whichever of bound and objective is more conservative.
    pub fn certified(&self) -> f64 {
        if !self.bound.is_finite() {
            return self.value;
        }
        match (self.status, self.sense) {
            (SolveStatus::Inaccurate, Sense::Maximize) => self.bound.max(self.value),
            (SolveStatus::Inaccurate, Sense::Minimize) => self.bound.min(self.value),
            _ => self.bound,
        }
    }
}

fn first_block(sf: &StandardForm, z: &[f64]) -> Vec<Vec<f64>> {
    match ipm::slack(sf, z).first() {
        Some(b) => (0..b.nrows())
            .map(|i| (0..b.ncols()).map(|j| b[(i, j)]).collect())
            .collect(),
        None => Vec::new(),
    }
}

/// Solves with the backend named by [`BACKEND_ENV`].
pub fn solve(p: &SdpProblem) -> Result<SdpSolution> {
    solve_with(p, Backend::from_env()?, &IpmOptions::default())
}

pub fn solve_with(p: &SdpProblem, backend: Backend, opts: &IpmOptions) -> Result<SdpSolution> {
    let sf = match reduce(p) {
        Ok(sf) => sf,
        Err(Error::Infeasible(_)) => return Ok(SdpSolution::infeasible(p)),
        Err(e) => return Err(e),
    };
    match backend {
        Backend::Builtin => Ok(solve_standard(&sf, opts)),
        Backend::Csdp => sdpa::solve_external(&sf, "csdp"),
    }
}

pub(crate) fn solve_standard(sf: &StandardForm, opts: &IpmOptions) -> SdpSolution {
    if sf.m() == 0 {
        let blocks = ipm::slack(sf, &[]);
        let ok = ipm::min_eigenvalue(&blocks) >= -1e-9;
        let value = sf.objective(&[]);
        return SdpSolution {
            sense: if sf.sign > 0.0 {
                Sense::Maximize
            } else {
                Sense::Minimize
            },
            status: if ok {
                SolveStatus::Optimal
            } else {
                SolveStatus::Infeasible
            },
            value: if ok { value } else { f64::NAN },
            bound: if ok { value } else { f64::NAN },
            y: sf.lift(&[]),
            matrix: first_block(sf, &[]),
            rel_gap: 0.0,
            primal_infeas: 0.0,
            dual_infeas: 0.0,
            iterations: 0,
        };
    }
    let r = ipm::solve(sf, opts);
    solution_from(
        sf,
        r.status,
        &r.y,
        r.primal_obj,
        r.rel_gap,
        r.primal_infeas,
        r.dual_infeas,
        r.iterations,
    )
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn solution_from(
    sf: &StandardForm,
    status: SolveStatus,
    z: &[f64],
    primal_obj: f64,
    rel_gap: f64,
    primal_infeas: f64,
    dual_infeas: f64,
    iterations: usize,
) -> SdpSolution {
    let usable = matches!(status, SolveStatus::Optimal | SolveStatus::Inaccurate);
    SdpSolution {
        status,
        sense: if sf.sign > 0.0 {
            Sense::Maximize
        } else {
            Sense::Minimize
        },
        value: if usable { sf.objective(z) } else { f64::NAN },
        bound: if usable {
            sf.offset + sf.sign * primal_obj
        } else {
            f64::NAN
        },
        y: sf.lift(z),
        matrix: if usable {
            first_block(sf, z)
        } else {
            Vec::new()
        },
        rel_gap,
        primal_infeas,
        dual_infeas,
        iterations,
    }
}
