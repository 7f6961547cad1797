use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    A,
    B,
}

/// Projector onto `outcome` of `party`'s measurement `setting`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol {
    pub party: Party,
    pub setting: usize,
    pub outcome: usize,
}

impl Symbol {
    pub fn a(setting: usize, outcome: usize) -> Self {
        Self {
            party: Party::A,
            setting,
            outcome,
        }
    }

    pub fn b(setting: usize, outcome: usize) -> Self {
        Self {
            party: Party::B,
            setting,
            outcome,
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.party {
            Party::A => 'A',
            Party::B => 'B',
        };
        write!(f, "{p}{}:{}", self.setting, self.outcome)
    }
}

/// A canonical product of projectors: Alice's symbols first, no symbol
/// repeated back to back, no orthogonal neighbours.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Monomial(Vec<Symbol>);

impl Monomial {
    pub fn identity() -> Self {
        Self(Vec::new())
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    /// Hermitian conjugate. Each party's word is reversed; the two parties commute.
    pub fn adjoint(&self) -> Monomial {
        let split = self
            .0
            .iter()
            .position(|s| s.party == Party::B)
            .unwrap_or(self.0.len());
        let (a, b) = self.0.split_at(split);
        Monomial(a.iter().rev().chain(b.iter().rev()).copied().collect())
    }

    /// Representative shared by a word and its conjugate, which take the same
    /// value in a real moment matrix.
    pub fn class_key(&self) -> Monomial {
        let adj = self.adjoint();
        if adj < *self {
            adj
        } else {
            self.clone()
        }
    }

    /// Product `self * other`, canonicalized.
    pub fn mul(&self, other: &Monomial) -> Option<Monomial> {
        let word: Vec<Symbol> = self.0.iter().chain(&other.0).copied().collect();
        canonicalize(&word)
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("1");
        }
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

fn reduce_into(out: &mut Vec<Symbol>, s: Symbol) -> bool {
    if let Some(top) = out.last() {
        if top.party == s.party && top.setting == s.setting {
            // P P = P, and distinct outcomes of one measurement annihilate
            return top.outcome == s.outcome;
        }
    }
    out.push(s);
    true
}

/// Reduces a word with cross-party commutation, idempotence and orthogonality.
/// Returns `None` when the product vanishes.
pub fn canonicalize(word: &[Symbol]) -> Option<Monomial> {
    let mut a = Vec::with_capacity(word.len());
    let mut b = Vec::new();
    for &s in word {
        let ok = match s.party {
            Party::A => reduce_into(&mut a, s),
            Party::B => reduce_into(&mut b, s),
        };
        if !ok {
            return None;
        }
    }
    a.extend(b);
    Some(Monomial(a))
}

/// One projector per (party, setting, outcome) with the last outcome of each
/// setting left out; it is recovered through completeness.
pub fn generators(s: &Scenario) -> Vec<Symbol> {
    let mut g = Vec::new();
    for x in 0..s.nx {
        for a in 0..s.na - 1 {
            g.push(Symbol::a(x, a));
        }
    }
    for y in 0..s.ny {
        for b in 0..s.nb - 1 {
            g.push(Symbol::b(y, b));
        }
    }
    g
}

/// Which words index the moment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MonomialSet {
    /// Identity plus every canonical word of length at most `k`.
    Level(usize),
    /// Identity, single projectors and products `A B`.
    OnePlusAb,
}

impl MonomialSet {
    pub fn generate(&self, s: &Scenario) -> Vec<Monomial> {
        match *self {
            MonomialSet::Level(k) => generate_monomials(s, k),
            MonomialSet::OnePlusAb => {
                let g = generators(s);
                let mut out = vec![Monomial::identity()];
                out.extend(g.iter().map(|&x| Monomial(vec![x])));
                for &ga in g.iter().filter(|x| x.party == Party::A) {
                    for &gb in g.iter().filter(|x| x.party == Party::B) {
                        out.push(Monomial(vec![ga, gb]));
                    }
                }
                out
            }
        }
    }
}

impl fmt::Display for MonomialSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MonomialSet::Level(k) => write!(f, "level {k}"),
            MonomialSet::OnePlusAb => f.write_str("level 1+AB"),
        }
    }
}

impl std::str::FromStr for MonomialSet {
    type Err = crate::error::Error;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let t = text.trim().to_ascii_lowercase();
        if t == "1+ab" {
            return Ok(MonomialSet::OnePlusAb);
        }
        t.parse::<usize>()
            .map(MonomialSet::Level)
            .map_err(|_| crate::error::Error::Parse(format!("unknown relaxation level '{text}'")))
    }
}

/// Identity plus all canonical nonzero words of length `1..=level`, shortest
/// first and sorted within each length.
pub fn generate_monomials(s: &Scenario, level: usize) -> Vec<Monomial> {
    let gens = generators(s);
    let mut out = vec![Monomial::identity()];
    let mut frontier = vec![Monomial::identity()];
    for len in 1..=level {
        let mut next = BTreeSet::new();
        for w in &frontier {
            for &g in &gens {
                let mut word = w.0.clone();
                word.push(g);
                if let Some(m) = canonicalize(&word) {
                    if m.len() == len {
                        next.insert(m);
                    }
                }
            }
        }
        frontier = next.into_iter().collect();
        out.extend(frontier.iter().cloned());
    }
    out
}
