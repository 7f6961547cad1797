use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::npa::{Affine, MomentStructure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Maximize,
    Minimize,
}

/// One entry of a symmetric affine matrix: `value * y[var]` (or the constant
/// `value` when `var` is `None`) at `(row, col)` and its mirror.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub var: Option<usize>,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// A block `F(y) = F0 + sum y_k F_k` that must be positive semidefinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiBlock {
    pub dim: usize,
    /// Only diagonal entries; the block is a set of scalar inequalities.
    pub diagonal: bool,
    pub entries: Vec<BlockEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearConstraint {
    pub expr: Affine,
    pub rhs: f64,
}

/// Optimize an affine objective over `y` subject to linear matrix inequalities,
/// linear equalities `expr = rhs` and inequalities `expr >= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdpProblem {
    pub num_vars: usize,
    pub blocks: Vec<LmiBlock>,
    pub objective: Affine,
    pub sense: Sense,
    pub equalities: Vec<LinearConstraint>,
    pub inequalities: Vec<LinearConstraint>,
    /// Variable standing for the identity moment, when there is one.
    pub identity: Option<usize>,
}

impl SdpProblem {
    /// Moment-matrix relaxation with the identity pinned to 1 and vanishing
    /// products pinned to 0.
    pub fn from_moments(ms: &MomentStructure, objective: Affine, sense: Sense) -> Self {
        let n = ms.dim();
        let mut entries = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                entries.push(BlockEntry {
                    var: Some(ms.cell(i, j)),
                    row: i,
                    col: j,
                    value: 1.0,
                });
            }
        }
        let mut equalities = vec![LinearConstraint {
            expr: Affine::var(0),
            rhs: 1.0,
        }];
        if let Some(z) = ms.zero_class() {
            equalities.push(LinearConstraint {
                expr: Affine::var(z),
                rhs: 0.0,
            });
        }
        Self {
            num_vars: ms.num_classes(),
            blocks: vec![LmiBlock {
                dim: n,
                diagonal: false,
                entries,
            }],
            objective,
            sense,
            equalities,
            inequalities: Vec::new(),
            identity: Some(0),
        }
    }

    pub fn add_equality(&mut self, expr: Affine, rhs: f64) {
        self.equalities.push(LinearConstraint { expr, rhs });
    }

    pub fn add_inequality(&mut self, expr: Affine, rhs: f64) {
        self.inequalities.push(LinearConstraint { expr, rhs });
    }

    pub fn validate(&self) -> Result<()> {
        let check = |k: usize, what: &str| {
            if k >= self.num_vars {
                Err(Error::InvalidArgument(format!(
                    "{what} refers to variable {k} of {}",
                    self.num_vars
                )))
            } else {
                Ok(())
            }
        };
        for (b, blk) in self.blocks.iter().enumerate() {
            if blk.dim == 0 {
                return Err(Error::InvalidArgument(format!("block {b} is empty")));
            }
            for e in &blk.entries {
                if e.row > e.col || e.col >= blk.dim {
                    return Err(Error::InvalidArgument(format!(
                        "block {b} entry ({}, {}) outside the upper triangle of size {}",
                        e.row, e.col, blk.dim
                    )));
                }
                if blk.diagonal && e.row != e.col {
                    return Err(Error::InvalidArgument(format!(
                        "diagonal block {b} has an off-diagonal entry"
                    )));
                }
                if let Some(k) = e.var {
                    check(k, "matrix entry")?;
                }
            }
        }
        for c in self.equalities.iter().chain(&self.inequalities) {
            for &(k, _) in &c.expr.terms {
                check(k, "constraint")?;
            }
        }
        for &(k, _) in &self.objective.terms {
            check(k, "objective")?;
        }
        if let Some(id) = self.identity {
            check(id, "identity pin")?;
            let pins = self
                .equalities
                .iter()
                .filter(|c| c.expr.constant == 0.0 && c.expr.terms == [(id, 1.0)] && c.rhs == 1.0)
                .count();
            if pins != 1 {
                return Err(Error::InvalidArgument(format!(
                    "identity pinned {pins} times, expected once"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::npa::MonomialSet;
    use crate::scenario::Scenario;

    #[test]
    fn moment_problem_is_well_formed() {
        let ms = MomentStructure::new(Scenario::new(2, 2, 2, 2).unwrap(), MonomialSet::Level(2))
            .unwrap();
        let mut p = SdpProblem::from_moments(&ms, Affine::var(1), Sense::Maximize);
        p.validate().unwrap();
        assert_eq!(p.blocks[0].entries.len(), 13 * 14 / 2);
        p.add_equality(Affine::var(0), 1.0);
        assert!(p.validate().is_err());
        p.equalities.pop();
        p.add_inequality(Affine::var(99), 0.0);
        assert!(p.validate().is_err());
    }
}
