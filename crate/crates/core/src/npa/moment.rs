use std::collections::HashMap;

use serde::Serialize;

use super::monomial::{canonicalize, Monomial, MonomialSet, Symbol};
use crate::error::{Error, Result};
use crate::functionals::BellFunctional;
use crate::scenario::{Behavior, Scenario};

/// `constant + sum coef * y[class]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Affine {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn var(k: usize) -> Self {
        Self {
            constant: 0.0,
            terms: vec![(k, 1.0)],
        }
    }

    pub fn add_scaled(&mut self, k: f64, other: &Affine) {
        self.constant += k * other.constant;
        self.terms
            .extend(other.terms.iter().map(|&(i, c)| (i, k * c)));
    }

    /// Merges repeated variables and drops vanishing coefficients.
    pub fn simplify(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (i, c) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
        self
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * y[i]).sum::<f64>()
    }
}

/// Moment matrix of a bipartite scenario, with cells grouped into classes of
/// equal value.
///
/// Class 0 is always the identity and is pinned to 1. Products that vanish share
/// one extra class, pinned to 0.
#[derive(Debug, Clone)]
pub struct MomentStructure {
    scenario: Scenario,
    set: MonomialSet,
    monomials: Vec<Monomial>,
    /// `None` marks the zero class.
    classes: Vec<Option<Monomial>>,
    lookup: HashMap<Monomial, usize>,
    zero_class: Option<usize>,
    cells: Vec<usize>,
    joint: Vec<Affine>,
    alice: Vec<Affine>,
    bob: Vec<Affine>,
}

/// A local projector, or the identity minus the others when it is the
/// eliminated last outcome.
fn local_expansion(sym: Symbol, outcomes: usize) -> Vec<(Option<Symbol>, f64)> {
    if sym.outcome + 1 < outcomes {
        return vec![(Some(sym), 1.0)];
    }
    let mut v = vec![(None, 1.0)];
    v.extend((0..outcomes - 1).map(|o| (Some(Symbol { outcome: o, ..sym }), -1.0)));
    v
}

impl MomentStructure {
    pub fn new(scenario: Scenario, set: MonomialSet) -> Result<Self> {
        if set == MonomialSet::Level(0) {
            return Err(Error::InvalidArgument(
                "a moment relaxation needs level >= 1".into(),
            ));
        }
        let monomials = set.generate(&scenario);
        let n = monomials.len();
        let adjoints: Vec<Monomial> = monomials.iter().map(|m| m.adjoint()).collect();

        let mut classes = vec![Some(Monomial::identity())];
        let mut lookup = HashMap::from([(Monomial::identity(), 0usize)]);
        let mut zero_class = None;
        let mut cells = vec![0usize; n * n];
        for i in 0..n {
            for j in i..n {
                let class = match adjoints[i].mul(&monomials[j]) {
                    Some(w) => {
                        let key = w.class_key();
                        let next = classes.len();
                        let id = *lookup.entry(key.clone()).or_insert(next);
                        if id == next {
                            classes.push(Some(key));
                        }
                        id
                    }
                    None => *zero_class.get_or_insert_with(|| {
                        classes.push(None);
                        classes.len() - 1
                    }),
                };
                cells[i * n + j] = class;
                cells[j * n + i] = class;
            }
        }

        let mut ms = Self {
            scenario,
            set,
            monomials,
            classes,
            lookup,
            zero_class,
            cells,
            joint: Vec::new(),
            alice: Vec::new(),
            bob: Vec::new(),
        };
        ms.build_probability_map()?;
        Ok(ms)
    }

    fn product_expr(&self, ops: &[Symbol]) -> Result<Affine> {
        let mut terms: Vec<(Vec<Symbol>, f64)> = vec![(Vec::new(), 1.0)];
        for &op in ops {
            let outcomes = match op.party {
                super::Party::A => self.scenario.na,
                super::Party::B => self.scenario.nb,
            };
            let mut next = Vec::new();
            for (word, c) in &terms {
                for (s, k) in local_expansion(op, outcomes) {
                    let mut w = word.clone();
                    w.extend(s);
                    next.push((w, c * k));
                }
            }
            terms = next;
        }
        let mut out = Affine::default();
        for (word, c) in terms {
            match canonicalize(&word) {
                None => {}
                Some(m) if m.is_identity() => out.constant += c,
                Some(m) => {
                    let k = self.class_of(&m).ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "moment {m} is not covered by the {} relaxation",
                            self.set
                        ))
                    })?;
                    out.terms.push((k, c));
                }
            }
        }
        Ok(out.simplify())
    }

    fn build_probability_map(&mut self) -> Result<()> {
        let s = self.scenario;
        let mut joint = vec![Affine::default(); s.table_len()];
        for a in 0..s.na {
            for b in 0..s.nb {
                for x in 0..s.nx {
                    for y in 0..s.ny {
                        joint[s.index(a, b, x, y)] =
                            self.product_expr(&[Symbol::a(x, a), Symbol::b(y, b)])?;
                    }
                }
            }
        }
        let mut alice = Vec::with_capacity(s.nx * s.na);
        for x in 0..s.nx {
            for a in 0..s.na {
                alice.push(self.product_expr(&[Symbol::a(x, a)])?);
            }
        }
        let mut bob = Vec::with_capacity(s.ny * s.nb);
        for y in 0..s.ny {
            for b in 0..s.nb {
                bob.push(self.product_expr(&[Symbol::b(y, b)])?);
            }
        }
        self.joint = joint;
        self.alice = alice;
        self.bob = bob;
        Ok(())
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn monomial_set(&self) -> MonomialSet {
        self.set
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn dim(&self) -> usize {
        self.monomials.len()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_word(&self, k: usize) -> Option<&Monomial> {
        self.classes[k].as_ref()
    }

    pub fn zero_class(&self) -> Option<usize> {
        self.zero_class
    }

    pub fn cell(&self, i: usize, j: usize) -> usize {
        self.cells[i * self.dim() + j]
    }

    /// Class holding the moment of a canonical word, if the relaxation has one.
    pub fn class_of(&self, m: &Monomial) -> Option<usize> {
        self.lookup.get(&m.class_key()).copied()
    }

    /// `P(a,b|x,y)` as an affine function of the class values.
    pub fn joint(&self, a: usize, b: usize, x: usize, y: usize) -> &Affine {
        &self.joint[self.scenario.index(a, b, x, y)]
    }

    /// `P(a|x)`.
    pub fn alice_marginal(&self, a: usize, x: usize) -> &Affine {
        &self.alice[x * self.scenario.na + a]
    }

    /// `P(b|y)`.
    pub fn bob_marginal(&self, b: usize, y: usize) -> &Affine {
        &self.bob[y * self.scenario.nb + b]
    }

    /// A Bell functional as an affine function of the class values.
    pub fn functional(&self, f: &BellFunctional) -> Result<Affine> {
        if f.scenario() != &self.scenario {
            return Err(Error::Shape(
                "functional and relaxation use different scenarios".into(),
            ));
        }
        let mut out = Affine::default();
        for (idx, &c) in f.coeffs().iter().enumerate() {
            if c != 0.0 {
                out.add_scaled(c, &self.joint[idx]);
            }
        }
        Ok(out.simplify())
    }

    /// `P(a|x) = 1/na` for every setting. The last outcome follows from completeness.
    pub fn uniform_marginal_constraints(&self) -> Vec<(Affine, f64)> {
        let s = self.scenario;
        let target = 1.0 / s.na as f64;
        (0..s.nx)
            .flat_map(|x| (0..s.na - 1).map(move |a| (a, x)))
            .map(|(a, x)| (self.alice_marginal(a, x).clone(), target))
            .collect()
    }

    /// Reads the behavior off a vector of class values.
    pub fn behavior(&self, y: &[f64]) -> Result<Behavior> {
        if y.len() != self.num_classes() {
            return Err(Error::Shape(format!(
                "{} class values for {} classes",
                y.len(),
                self.num_classes()
            )));
        }
        Behavior::from_table(
            self.scenario,
            self.joint.iter().map(|e| e.eval(y)).collect(),
        )
    }

    /// Class values of the product strategy where every measurement gives a
    /// fixed outcome. The resulting moment matrix is rank one.
    pub fn deterministic_moments(&self, fa: &[usize], fb: &[usize]) -> Vec<f64> {
        let value = |m: &Monomial| -> f64 {
            let hit = m.symbols().iter().all(|s| match s.party {
                super::Party::A => fa[s.setting] == s.outcome,
                super::Party::B => fb[s.setting] == s.outcome,
            });
            if hit {
                1.0
            } else {
                0.0
            }
        };
        self.classes
            .iter()
            .map(|c| c.as_ref().map_or(0.0, value))
            .collect()
    }

    /// Monomial list and class table for external cross-checks.
    pub fn debug_json(&self) -> serde_json::Value {
        let n = self.dim();
        serde_json::json!({
            "scenario": self.scenario,
            "relaxation": self.set.to_string(),
            "monomials": self.monomials.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
            "classes": self.classes.iter()
                .map(|c| c.as_ref().map_or_else(|| "0".to_string(), |m| m.to_string()))
                .collect::<Vec<_>>(),
            "cells": (0..n).map(|i| self.cells[i * n..(i + 1) * n].to_vec()).collect::<Vec<_>>(),
        })
    }
}
