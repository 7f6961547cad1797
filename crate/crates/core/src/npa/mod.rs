//! Moment-matrix relaxations of the quantum set of correlations.

mod moment;
mod monomial;

pub use moment::{Affine, MomentStructure};
pub use monomial::{
    canonicalize, generate_monomials, generators, Monomial, MonomialSet, Party, Symbol,
};
