//! Bell functionals, dimension witnesses and the conversion between them.
//!
//! A Bell functional `I = sum alpha[a,b,x,y] P(a,b|x,y)` becomes a dimension
//! witness by reading Alice's outcome as part of her input, `x' = (x, a)`, and
//! assuming it is drawn uniformly: `beta[b,x',y] = alpha[a,b,x,y] / A`. The
//! reverse direction splits the preparation alphabet into a setting and an
//! outcome, which needs a composite alphabet size.
//!
//! Coefficients are kept in raw count form. With uniform Alice marginals the
//! two functionals then take identical values: `I(P) = W(P(b|x',y))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{
    decode_assignment, flat_to_nested3, flat_to_nested4, nested3_to_flat, nested4_to_flat,
    pow_saturating, Behavior, PmBehavior, PmScenario, Scenario,
};

/// Default cap on the number of deterministic strategies an exact classical
/// bound may enumerate.
pub const DEFAULT_ENUMERATION_CAP: u128 = 100_000_000;
/// At most this many maximizing strategies are returned.
pub const MAX_REPORTED_MAXIMIZERS: usize = 100;

/// `I = sum alpha[a,b,x,y] P(a,b|x,y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BellFunctional {
    scenario: Scenario,
    alpha: Vec<f64>,
}

/// `W = sum beta[b,x',y] P(b|x',y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionWitness {
    scenario: PmScenario,
    beta: Vec<f64>,
}

impl BellFunctional {
    pub fn from_table(scenario: Scenario, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != scenario.table_len() {
            return Err(Error::Shape(format!(
                "coefficient table has {} entries, scenario needs {}",
                alpha.len(),
                scenario.table_len()
            )));
        }
        Ok(Self { scenario, alpha })
    }

    pub fn from_fn(scenario: Scenario, f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let alpha = Behavior::from_fn(scenario, f).table().to_vec();
        Self { scenario, alpha }
    }

    pub fn zero(scenario: Scenario) -> Self {
        Self {
            scenario,
            alpha: vec![0.0; scenario.table_len()],
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.alpha
    }

    #[inline]
    pub fn coeff(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.alpha[self.scenario.index(a, b, x, y)]
    }

    pub fn evaluate(&self, beh: &Behavior) -> Result<f64> {
        if beh.scenario() != &self.scenario {
            return Err(Error::Shape(format!(
                "functional on {:?} evaluated on behavior over {:?}",
                self.scenario,
                beh.scenario()
            )));
        }
        Ok(dot(&self.alpha, beh.table()))
    }

    /// `k * self + other`, coefficient-wise.
    pub fn scaled_add(&self, k: f64, other: &BellFunctional) -> Result<BellFunctional> {
        if self.scenario != other.scenario {
            return Err(Error::Shape(
                "functionals live on different scenarios".into(),
            ));
        }
        let alpha = self
            .alpha
            .iter()
            .zip(&other.alpha)
            .map(|(u, v)| k * u + v)
            .collect();
        Ok(Self {
            scenario: self.scenario,
            alpha,
        })
    }
}

impl DimensionWitness {
    pub fn from_table(scenario: PmScenario, beta: Vec<f64>) -> Result<Self> {
        if beta.len() != scenario.table_len() {
            return Err(Error::Shape(format!(
                "coefficient table has {} entries, scenario needs {}",
                beta.len(),
                scenario.table_len()
            )));
        }
        Ok(Self { scenario, beta })
    }

    pub fn from_fn(scenario: PmScenario, f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let beta = PmBehavior::from_fn(scenario, f).table().to_vec();
        Self { scenario, beta }
    }

    pub fn zero(scenario: PmScenario) -> Self {
        Self {
            scenario,
            beta: vec![0.0; scenario.table_len()],
        }
    }

    pub fn scenario(&self) -> &PmScenario {
        &self.scenario
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.beta
    }

    #[inline]
    pub fn coeff(&self, b: usize, xp: usize, y: usize) -> f64 {
        self.beta[self.scenario.index(b, xp, y)]
    }

    pub fn evaluate(&self, beh: &PmBehavior) -> Result<f64> {
        if beh.scenario() != &self.scenario {
            return Err(Error::Shape(format!(
                "witness on {:?} evaluated on behavior over {:?}",
                self.scenario,
                beh.scenario()
            )));
        }
        Ok(dot(&self.beta, beh.table()))
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// A bijection between preparations `x'` and (setting, outcome) pairs `(x, a)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputFactorization {
    outcomes: usize,
    settings: usize,
    to_pair: Vec<(usize, usize)>,
    to_prep: Vec<usize>,
}

impl InputFactorization {
    /// Mixed-radix split `x' = a + outcomes * x`: the outcome is the
    /// lowest-order component of the preparation index.
    pub fn canonical(nprep: usize, outcomes: usize) -> Result<Self> {
        if outcomes < 2 || outcomes >= nprep || !nprep.is_multiple_of(outcomes) {
            return Err(Error::Factorization(format!(
                "cannot split {nprep} preparations into {outcomes} outcomes per setting"
            )));
        }
        let pairs = (0..nprep)
            .map(|xp| (xp / outcomes, xp % outcomes))
            .collect();
        Self::from_pairs(outcomes, pairs)
    }

    /// Canonical split using the smallest nontrivial divisor of `nprep`.
    pub fn canonical_default(nprep: usize) -> Result<Self> {
        let a = (2..nprep)
            .find(|&d| nprep.is_multiple_of(d))
            .ok_or_else(|| {
                Error::Factorization(format!(
                    "{nprep} preparations cannot be split: size is prime"
                ))
            })?;
        Self::canonical(nprep, a)
    }

    /// Split of `n`-bit preparations `x' = (a_0, ..., a_{n-1})` (bit `i` of the
    /// index is `a_i`) into outcome `a = a_0` and setting bits `a_i XOR a_0`.
    /// Each setting then pairs a string with its complement.
    pub fn relative_bits(n: usize) -> Result<Self> {
        if !(2..=24).contains(&n) {
            return Err(Error::Factorization(format!(
                "relative-bit split needs 2 <= n <= 24, got {n}"
            )));
        }
        let nprep = 1usize << n;
        let pairs = (0..nprep)
            .map(|xp| {
                let a0 = xp & 1;
                let mask = if a0 == 1 { (1 << (n - 1)) - 1 } else { 0 };
                ((xp >> 1) ^ mask, a0)
            })
            .collect();
        Self::from_pairs(2, pairs)
    }

    /// Builds a factorization from the image `(x, a)` of every preparation.
    pub fn from_pairs(outcomes: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let nprep = pairs.len();
        if outcomes < 2 || !nprep.is_multiple_of(outcomes) || nprep / outcomes < 1 {
            return Err(Error::Factorization(format!(
                "{nprep} preparations are not a multiple of {outcomes} outcomes"
            )));
        }
        let settings = nprep / outcomes;
        let mut to_prep = vec![usize::MAX; nprep];
        for (xp, &(x, a)) in pairs.iter().enumerate() {
            if x >= settings || a >= outcomes {
                return Err(Error::Factorization(format!(
                    "pair ({x}, {a}) outside {settings} settings x {outcomes} outcomes"
                )));
            }
            let slot = &mut to_prep[x * outcomes + a];
            if *slot != usize::MAX {
                return Err(Error::Factorization(format!("pair ({x}, {a}) used twice")));
            }
            *slot = xp;
        }
        Ok(Self {
            outcomes,
            settings,
            to_pair: pairs,
            to_prep,
        })
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn settings(&self) -> usize {
        self.settings
    }

    pub fn nprep(&self) -> usize {
        self.to_pair.len()
    }

    /// `(x, a)` for preparation `x'`.
    pub fn pair(&self, xp: usize) -> (usize, usize) {
        self.to_pair[xp]
    }

    /// Preparation `x'` for `(x, a)`.
    pub fn prep(&self, x: usize, a: usize) -> usize {
        self.to_prep[x * self.outcomes + a]
    }
}

/// Converts a Bell functional with the canonical split `x' = a + na * x`.
pub fn bell_to_witness(bell: &BellFunctional) -> DimensionWitness {
    let s = bell.scenario;
    let f = InputFactorization::canonical(s.nx * s.na, s.na)
        .or_else(|_| {
            // nx = 1 leaves nothing to split; the pairing is still a bijection.
            InputFactorization::from_pairs(
                s.na,
                (0..s.na * s.nx).map(|xp| (xp / s.na, xp % s.na)).collect(),
            )
        })
        .expect("mixed-radix pairing is always a bijection");
    bell_to_witness_with(bell, &f).expect("factorization matches the scenario")
}

/// Converts a Bell functional, reading `(x, a)` as the preparation `f.prep(x, a)`.
pub fn bell_to_witness_with(
    bell: &BellFunctional,
    f: &InputFactorization,
) -> Result<DimensionWitness> {
    let s = bell.scenario;
    if f.settings != s.nx || f.outcomes != s.na {
        return Err(Error::Factorization(format!(
            "factorization has {} settings x {} outcomes, functional has nx={} na={}",
            f.settings, f.outcomes, s.nx, s.na
        )));
    }
    let pm = PmScenario::new(s.nx * s.na, s.ny, s.nb)?;
    let inv_a = 1.0 / s.na as f64;
    Ok(DimensionWitness::from_fn(pm, |b, xp, y| {
        let (x, a) = f.pair(xp);
        bell.coeff(a, b, x, y) * inv_a
    }))
}

/// Converts a dimension witness into a Bell functional, `alpha = A * beta`.
pub fn witness_to_bell(w: &DimensionWitness, f: &InputFactorization) -> Result<BellFunctional> {
    let pm = w.scenario;
    if f.nprep() != pm.nprep {
        return Err(Error::Factorization(format!(
            "factorization covers {} preparations, witness has {}",
            f.nprep(),
            pm.nprep
        )));
    }
    let s = Scenario::new(f.settings, f.outcomes, pm.ny, pm.nb)?;
    let scale = f.outcomes as f64;
    Ok(BellFunctional::from_fn(s, |a, b, x, y| {
        scale * w.coeff(b, f.prep(x, a), y)
    }))
}

fn check_rac_n(n: usize) -> Result<()> {
    if !(2..=20).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "random access codes need 2 <= n <= 20, got {n}"
        )));
    }
    Ok(())
}

/// The `n -> 1` random access code witness: `beta[b,x',y] = [b = a_y]`
/// where `a_i` is bit `i` of the preparation index.
pub fn rac_witness(n: usize) -> Result<DimensionWitness> {
    check_rac_n(n)?;
    let pm = PmScenario::new(1 << n, n, 2)?;
    Ok(DimensionWitness::from_fn(pm, |b, xp, y| {
        if (xp >> y) & 1 == b {
            1.0
        } else {
            0.0
        }
    }))
}

/// The Bell inequality `I_n` obtained from the `n -> 1` code.
///
/// Alice's outcome plays the role of `a_0` and her setting `x` carries the
/// remaining bits relative to it; Bob succeeds when `a XOR b` equals the
/// requested relative bit (zero for `y = 0`). `I_2` is CHSH in success form.
/// Coefficients are 2 on every success event, so `I_n / (n 2^n)` is the
/// average success probability.
pub fn rac_inequality(n: usize) -> Result<BellFunctional> {
    check_rac_n(n)?;
    let s = Scenario::new(1 << (n - 1), 2, n, 2)?;
    Ok(BellFunctional::from_fn(s, |a, b, x, y| {
        let target = if y == 0 { 0 } else { (x >> (y - 1)) & 1 };
        if a ^ b == target {
            2.0
        } else {
            0.0
        }
    }))
}

/// Normalization `n 2^n` turning `I_n` into a success probability.
pub fn rac_normalization(n: usize) -> f64 {
    n as f64 * (1u64 << n) as f64
}

/// `P_n = I_n / (n 2^n)`.
pub fn pn_value(value: f64, n: usize) -> f64 {
    value / rac_normalization(n)
}

/// Largest quantum value of `P_n`, `(1 + 1/sqrt(n)) / 2`.
pub fn pn_max(n: usize) -> f64 {
    0.5 * (1.0 + 1.0 / (n as f64).sqrt())
}

/// `I_alpha`: weight `alpha` on `a = b` for `x = 0`, weight 1 on `a = b XOR y` for `x = 1`.
pub fn i_alpha(alpha: f64) -> Result<BellFunctional> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let s = Scenario::new(2, 2, 2, 2)?;
    Ok(BellFunctional::from_fn(s, |a, b, x, y| match x {
        0 if a == b => alpha,
        1 if a == b ^ y => 1.0,
        _ => 0.0,
    }))
}

/// `W_alpha`, the witness converted from `I_alpha` with `x' = a + 2x`.
pub fn w_alpha(alpha: f64) -> Result<DimensionWitness> {
    Ok(bell_to_witness(&i_alpha(alpha)?))
}

// --- classical bounds -------------------------------------------------------

/// A deterministic local strategy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LocalStrategy {
    pub fa: Vec<usize>,
    pub fb: Vec<usize>,
}

/// A deterministic one-bit prepare-and-measure strategy: preparation `x'` sends
/// `encoding[x']`, Bob outputs `decoding[m][y]` on message `m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BitStrategy {
    pub encoding: Vec<usize>,
    pub decoding: Vec<Vec<usize>>,
}

impl BitStrategy {
    pub fn behavior(&self, pm: PmScenario) -> PmBehavior {
        PmBehavior::from_fn(pm, |b, xp, y| {
            if self.decoding[self.encoding[xp]][y] == b {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Exact classical maximum with (up to [`MAX_REPORTED_MAXIMIZERS`]) optimal strategies.
#[derive(Debug, Clone, Serialize)]
pub struct ClassicalBound<S> {
    pub value: f64,
    pub maximizers: Vec<S>,
    /// Set when more optimal strategies exist than were reported.
    pub truncated: bool,
}

fn tie_tol(scale: f64) -> f64 {
    1e-12 * scale.max(1.0)
}

#[derive(Clone)]
struct Best {
    value: f64,
    indices: Vec<u128>,
    overflow: bool,
}

impl Best {
    fn empty() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            indices: Vec::new(),
            overflow: false,
        }
    }

    fn push(mut self, idx: u128, value: f64, tol: f64) -> Self {
        if value > self.value + tol {
            self.value = value;
            self.indices.clear();
            self.overflow = false;
        }
        if (value - self.value).abs() <= tol {
            if self.indices.len() < MAX_REPORTED_MAXIMIZERS {
                self.indices.push(idx);
            } else {
                self.overflow = true;
            }
        }
        self
    }

    fn merge(self, other: Self, tol: f64) -> Self {
        let (mut hi, lo) = if self.value >= other.value {
            (self, other)
        } else {
            (other, self)
        };
        if (hi.value - lo.value).abs() <= tol {
            hi.overflow |= lo.overflow;
            hi.indices.extend(lo.indices);
            hi.indices.sort_unstable();
            if hi.indices.len() > MAX_REPORTED_MAXIMIZERS {
                hi.indices.truncate(MAX_REPORTED_MAXIMIZERS);
                hi.overflow = true;
            }
        }
        hi
    }
}

/// Cartesian product of per-slot candidate lists, capped at `cap` entries.
fn product_capped(choices: &[Vec<usize>], cap: usize) -> (Vec<Vec<usize>>, bool) {
    let mut out = vec![Vec::with_capacity(choices.len())];
    let mut truncated = false;
    for options in choices {
        let mut next = Vec::new();
        'outer: for prefix in &out {
            for &o in options {
                if next.len() == cap {
                    truncated = true;
                    break 'outer;
                }
                let mut v = prefix.clone();
                v.push(o);
                next.push(v);
            }
        }
        out = next;
    }
    (out, truncated)
}

/// Exact maximum of a Bell functional over local deterministic strategies.
///
/// Alice's assignments are enumerated; for each one Bob's best response is
/// taken setting by setting, which is exact because the functional is linear.
pub fn classical_bound(bell: &BellFunctional) -> Result<ClassicalBound<LocalStrategy>> {
    classical_bound_capped(bell, DEFAULT_ENUMERATION_CAP)
}

pub fn classical_bound_capped(
    bell: &BellFunctional,
    cap: u128,
) -> Result<ClassicalBound<LocalStrategy>> {
    let s = bell.scenario;
    let count = s.deterministic_count();
    if count > cap {
        return Err(Error::Capacity { count, cap });
    }
    let alice_count = pow_saturating(s.na, s.nx);
    let scale = bell.alpha.iter().map(|v| v.abs()).sum::<f64>();
    let tol = tie_tol(scale);

    let bob_scores = |fa: &[usize], y: usize| -> Vec<f64> {
        (0..s.nb)
            .map(|b| (0..s.nx).map(|x| bell.coeff(fa[x], b, x, y)).sum())
            .collect()
    };
    let value_of = |idx: u128| -> f64 {
        let mut fa = vec![0; s.nx];
        decode_assignment(idx, s.na, s.nx, &mut fa);
        (0..s.ny)
            .map(|y| {
                bob_scores(&fa, y)
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum()
    };

    let best = (0..alice_count as u64)
        .into_par_iter()
        .fold(Best::empty, |acc, i| {
            acc.push(i as u128, value_of(i as u128), tol)
        })
        .reduce(Best::empty, |l, r| l.merge(r, tol));

    let mut maximizers = Vec::new();
    let mut truncated = best.overflow;
    for (k, &idx) in best.indices.iter().enumerate() {
        let mut fa = vec![0; s.nx];
        decode_assignment(idx, s.na, s.nx, &mut fa);
        let ties: Vec<Vec<usize>> = (0..s.ny)
            .map(|y| {
                let scores = bob_scores(&fa, y);
                let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (0..s.nb).filter(|&b| scores[b] >= top - tol).collect()
            })
            .collect();
        let room = MAX_REPORTED_MAXIMIZERS - maximizers.len();
        let (fbs, cut) = product_capped(&ties, room);
        truncated |= cut;
        maximizers.extend(
            fbs.into_iter()
                .map(|fb| LocalStrategy { fa: fa.clone(), fb }),
        );
        if maximizers.len() == MAX_REPORTED_MAXIMIZERS {
            truncated |= k + 1 < best.indices.len();
            break;
        }
    }
    Ok(ClassicalBound {
        value: best.value,
        maximizers,
        truncated,
    })
}

/// Exact maximum of a witness over deterministic strategies communicating one
/// classical bit. Shared randomness cannot help: the witness is linear, so a
/// convex mixture never beats its best deterministic component.
pub fn classical_bound_pm(w: &DimensionWitness) -> Result<ClassicalBound<BitStrategy>> {
    classical_bound_pm_capped(w, DEFAULT_ENUMERATION_CAP)
}

pub fn classical_bound_pm_capped(
    w: &DimensionWitness,
    cap: u128,
) -> Result<ClassicalBound<BitStrategy>> {
    let pm = w.scenario;
    let encodings = pow_saturating(2, pm.nprep);
    let count = encodings.saturating_mul(pow_saturating(pm.nb, 2 * pm.ny));
    if count > cap {
        return Err(Error::Capacity { count, cap });
    }
    let scale = w.beta.iter().map(|v| v.abs()).sum::<f64>();
    let tol = tie_tol(scale);

    let scores = |enc: u128, m: usize, y: usize| -> Vec<f64> {
        (0..pm.nb)
            .map(|b| {
                (0..pm.nprep)
                    .filter(|&xp| ((enc >> xp) & 1) as usize == m)
                    .map(|xp| w.coeff(b, xp, y))
                    .sum()
            })
            .collect()
    };
    let value_of = |enc: u128| -> f64 {
        let mut v = 0.0;
        for y in 0..pm.ny {
            for m in 0..2 {
                v += scores(enc, m, y)
                    .into_iter()
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        }
        v
    };

    let best = (0..encodings as u64)
        .into_par_iter()
        .fold(Best::empty, |acc, e| {
            acc.push(e as u128, value_of(e as u128), tol)
        })
        .reduce(Best::empty, |l, r| l.merge(r, tol));

    let mut maximizers = Vec::new();
    let mut truncated = best.overflow;
    for (k, &enc) in best.indices.iter().enumerate() {
        let encoding: Vec<usize> = (0..pm.nprep).map(|xp| ((enc >> xp) & 1) as usize).collect();
        // slot (m, y) flattened as m * ny + y
        let ties: Vec<Vec<usize>> = (0..2)
            .flat_map(|m| (0..pm.ny).map(move |y| (m, y)))
            .map(|(m, y)| {
                let sc = scores(enc, m, y);
                let top = sc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (0..pm.nb).filter(|&b| sc[b] >= top - tol).collect()
            })
            .collect();
        let room = MAX_REPORTED_MAXIMIZERS - maximizers.len();
        let (decs, cut) = product_capped(&ties, room);
        truncated |= cut;
        maximizers.extend(decs.into_iter().map(|flat| BitStrategy {
            encoding: encoding.clone(),
            decoding: flat.chunks(pm.ny).map(|c| c.to_vec()).collect(),
        }));
        if maximizers.len() == MAX_REPORTED_MAXIMIZERS {
            truncated |= k + 1 < best.indices.len();
            break;
        }
    }
    Ok(ClassicalBound {
        value: best.value,
        maximizers,
        truncated,
    })
}

// --- JSON interchange -------------------------------------------------------

/// Either kind of functional, as read from or written to JSON.
#[derive(Debug, Clone, PartialEq)]
pub enum Functional {
    Bell(BellFunctional),
    Witness(DimensionWitness),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum FunctionalFile {
    Bell {
        scenario: Scenario,
        coeffs: Vec<Vec<Vec<Vec<f64>>>>,
    },
    Witness {
        scenario: PmScenario,
        coeffs: Vec<Vec<Vec<f64>>>,
    },
}

impl Serialize for Functional {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Functional::Bell(f) => FunctionalFile::Bell {
                scenario: f.scenario,
                coeffs: flat_to_nested4(&f.alpha, f.scenario),
            },
            Functional::Witness(w) => FunctionalFile::Witness {
                scenario: w.scenario,
                coeffs: flat_to_nested3(&w.beta, w.scenario),
            },
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Functional {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        Ok(match FunctionalFile::deserialize(de)? {
            FunctionalFile::Bell { scenario, coeffs } => Functional::Bell(BellFunctional {
                scenario,
                alpha: nested4_to_flat(&coeffs, scenario).map_err(D::Error::custom)?,
            }),
            FunctionalFile::Witness { scenario, coeffs } => Functional::Witness(DimensionWitness {
                scenario,
                beta: nested3_to_flat(&coeffs, scenario).map_err(D::Error::custom)?,
            }),
        })
    }
}

impl From<BellFunctional> for Functional {
    fn from(f: BellFunctional) -> Self {
        Functional::Bell(f)
    }
}

impl From<DimensionWitness> for Functional {
    fn from(w: DimensionWitness) -> Self {
        Functional::Witness(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{deterministic_behavior, PmBehavior};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pm(pm: PmScenario, rng: &mut impl Rng) -> PmBehavior {
        let mut p = PmBehavior::uniform(pm).table().to_vec();
        for xp in 0..pm.nprep {
            for y in 0..pm.ny {
                let w: Vec<f64> = (0..pm.nb).map(|_| rng.random::<f64>() + 1e-3).collect();
                let t: f64 = w.iter().sum();
                for b in 0..pm.nb {
                    p[pm.index(b, xp, y)] = w[b] / t;
                }
            }
        }
        PmBehavior::from_table(pm, p).unwrap()
    }

    #[test]
    fn rac_inequality_n2_matches_relative_split_of_the_witness() {
        let w = rac_witness(2).unwrap();
        let via_split =
            witness_to_bell(&w, &InputFactorization::relative_bits(2).unwrap()).unwrap();
        assert_eq!(via_split, rac_inequality(2).unwrap());
        let back = bell_to_witness_with(&via_split, &InputFactorization::relative_bits(2).unwrap())
            .unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn i2_is_chsh_in_success_form() {
        let i2 = rac_inequality(2).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for x in 0..2 {
                    for y in 0..2 {
                        let win = (a ^ b) == (x & y);
                        assert_eq!(i2.coeff(a, b, x, y), if win { 2.0 } else { 0.0 });
                    }
                }
            }
        }
    }

    #[test]
    fn bell_to_witness_scales_by_outcome_count() {
        // The relative split of I_2 reproduces the 2 -> 1 witness; the canonical
        // split gives the same coefficients up to relabelling preparations.
        let i2 = rac_inequality(2).unwrap();
        let w = bell_to_witness(&i2);
        let qrac = rac_witness(2).unwrap();
        let f = InputFactorization::relative_bits(2).unwrap();
        for xp in 0..4 {
            let (x, a) = f.pair(xp);
            for y in 0..2 {
                for b in 0..2 {
                    assert_eq!(w.coeff(b, a + 2 * x, y), qrac.coeff(b, xp, y));
                }
            }
        }
        // Cross-check on random behaviours: both witnesses evaluate identically
        // once preparations are relabelled.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let beh = random_pm(*qrac.scenario(), &mut rng);
            let relabelled = PmBehavior::from_fn(*w.scenario(), |b, xc, y| {
                beh.get(b, f.prep(xc / 2, xc % 2), y)
            });
            let lhs = qrac.evaluate(&beh).unwrap();
            let rhs = w.evaluate(&relabelled).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
        let zero = BellFunctional::zero(Scenario::new(3, 2, 2, 2).unwrap());
        assert!(bell_to_witness(&zero).coeffs().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn w_alpha_coefficients() {
        for alpha in [0.5, 1.0, 3.0] {
            let w = w_alpha(alpha).unwrap();
            for x in 0..2 {
                for a in 0..2 {
                    for y in 0..2 {
                        for b in 0..2 {
                            let expect = match x {
                                0 if a == b => alpha / 2.0,
                                1 if a == b ^ y => 0.5,
                                _ => 0.0,
                            };
                            assert_eq!(w.coeff(b, a + 2 * x, y), expect);
                        }
                    }
                }
            }
        }
        assert!(i_alpha(0.0).is_err());
    }

    #[test]
    fn witness_to_bell_needs_composite_alphabet() {
        let pm = PmScenario::new(5, 2, 2).unwrap();
        assert!(matches!(
            InputFactorization::canonical_default(5),
            Err(Error::Factorization(_))
        ));
        assert!(matches!(
            InputFactorization::canonical(5, 2),
            Err(Error::Factorization(_))
        ));
        let f = InputFactorization::canonical(4, 2).unwrap();
        assert!(matches!(
            witness_to_bell(&DimensionWitness::zero(pm), &f),
            Err(Error::Factorization(_))
        ));
        assert!(InputFactorization::from_pairs(2, vec![(0, 0), (0, 0), (1, 0), (1, 1)]).is_err());
    }

    #[test]
    fn evaluation_examples() {
        let s = Scenario::new(2, 2, 2, 2).unwrap();
        let i2 = rac_inequality(2).unwrap();
        assert_eq!(i2.evaluate(&Behavior::uniform(s)).unwrap(), 4.0);
        assert_eq!(pn_value(4.0, 2), 0.5);
        let det = deterministic_behavior(s, &[0, 0], &[0, 0]).unwrap();
        assert_eq!(i2.evaluate(&det).unwrap(), 6.0);
        assert_eq!(pn_value(6.0, 2), 0.75);
        assert_eq!(BellFunctional::zero(s).evaluate(&det).unwrap(), 0.0);
        // uniform P(a,b|x,y) = 1/4: four terms of weight alpha, four of weight 1
        assert_eq!(
            i_alpha(1.0)
                .unwrap()
                .evaluate(&Behavior::uniform(s))
                .unwrap(),
            2.0
        );
        let other = Scenario::new(3, 2, 2, 2).unwrap();
        assert!(matches!(
            i2.evaluate(&Behavior::uniform(other)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn rac_scenarios() {
        let i3 = rac_inequality(3).unwrap();
        assert_eq!(*i3.scenario(), Scenario::new(4, 2, 3, 2).unwrap());
        assert!(rac_inequality(1).is_err());
        assert!((pn_max(2) - 0.853_553_390_593_273_8).abs() < 1e-15);
        assert_eq!(pn_max(4), 0.75);
        for n in 2..=5 {
            let w = rac_witness(n).unwrap();
            let f = InputFactorization::relative_bits(n).unwrap();
            assert_eq!(witness_to_bell(&w, &f).unwrap(), rac_inequality(n).unwrap());
        }
    }

    #[test]
    fn classical_bounds_of_the_rac_family() {
        let b2 = classical_bound(&rac_inequality(2).unwrap()).unwrap();
        assert_eq!(pn_value(b2.value, 2), 0.75);
        assert_eq!(b2.maximizers.len(), 8);
        for strat in &b2.maximizers {
            let s = *rac_inequality(2).unwrap().scenario();
            let beh = deterministic_behavior(s, &strat.fa, &strat.fb).unwrap();
            assert_eq!(rac_inequality(2).unwrap().evaluate(&beh).unwrap(), b2.value);
        }
        for n in 2..=5 {
            let b = classical_bound(&rac_inequality(n).unwrap()).unwrap();
            assert!(pn_value(b.value, n) < pn_max(n));
        }
        let zero = BellFunctional::zero(Scenario::new(2, 2, 2, 2).unwrap());
        let zb = classical_bound(&zero).unwrap();
        assert_eq!(zb.value, 0.0);
        assert!(!zb.truncated);
        assert_eq!(zb.maximizers.len(), 16);
        let wide = BellFunctional::zero(Scenario::new(4, 2, 4, 2).unwrap());
        let wb = classical_bound(&wide).unwrap();
        assert!(wb.truncated);
        assert_eq!(wb.maximizers.len(), MAX_REPORTED_MAXIMIZERS);
    }

    #[test]
    fn capacity_is_enforced() {
        let s = Scenario::new(8, 3, 8, 3).unwrap();
        let err = classical_bound_capped(&BellFunctional::zero(s), 1000).unwrap_err();
        assert!(matches!(err, Error::Capacity { cap: 1000, .. }));
        assert!(matches!(
            classical_bound_pm(&rac_witness(5).unwrap()),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn classical_witness_bound_matches_bell_bound_for_the_2_to_1_code() {
        let w = rac_witness(2).unwrap();
        let b = classical_bound_pm(&w).unwrap();
        assert_eq!(b.value, 6.0);
        for strat in &b.maximizers {
            assert_eq!(w.evaluate(&strat.behavior(*w.scenario())).unwrap(), 6.0);
        }
    }

    #[test]
    fn json_round_trip() {
        let f: Functional = rac_inequality(3).unwrap().into();
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.contains("\"kind\":\"bell\""));
        assert_eq!(serde_json::from_str::<Functional>(&text).unwrap(), f);
        let w: Functional = w_alpha(2.0).unwrap().into();
        let v = serde_json::to_value(&w).unwrap();
        assert_eq!(v["kind"], "witness");
        assert_eq!(v["scenario"]["dim"], 2);
        // coeffs[x'=1][y=0][b=1]: x'=1 is (x=0, a=1), weight alpha/2 on a=b
        assert_eq!(v["coeffs"][1][0][1], 1.0);
        assert_eq!(serde_json::from_value::<Functional>(v).unwrap(), w);
    }

    proptest! {
        #[test]
        fn canonical_round_trip_is_exact(
            nx in 1usize..4, na in 2usize..4, ny in 1usize..3, nb in 2usize..4,
            seed in any::<u64>(),
        ) {
            let s = Scenario::new(nx, na, ny, nb).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bell = BellFunctional::from_fn(s, |_, _, _, _| rng.random_range(-3i32..=3) as f64);
            let w = bell_to_witness(&bell);
            let f = InputFactorization::from_pairs(na, (0..nx * na).map(|xp| (xp / na, xp % na)).collect()).unwrap();
            prop_assert_eq!(witness_to_bell(&w, &f).unwrap(), bell);
        }

        #[test]
        fn conversion_preserves_value_under_uniform_marginals(seed in any::<u64>()) {
            let s = Scenario::new(2, 2, 3, 2).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bell = BellFunctional::from_fn(s, |_, _, _, _| rng.random::<f64>() * 4.0 - 2.0);
            // P(a,b|x,y) = P(b|a,x,y) / 2 with arbitrary conditionals
            let cond: Vec<f64> = (0..s.nx * s.na * s.ny).map(|_| rng.random::<f64>()).collect();
            let beh = Behavior::from_fn(s, |a, b, x, y| {
                let q = cond[(x * s.na + a) * s.ny + y];
                0.5 * if b == 0 { q } else { 1.0 - q }
            });
            let lhs = bell.evaluate(&beh).unwrap();
            let rhs = bell_to_witness(&bell).evaluate(&beh.conditional_on_alice().unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn evaluate_is_linear(seed in any::<u64>(), lambda in 0.0f64..1.0, k in -2.0f64..2.0) {
            let s = Scenario::new(2, 2, 2, 2).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let random_beh = |rng: &mut ChaCha8Rng| {
                let (fa, fb) = ([rng.random_range(0..2), rng.random_range(0..2)], [rng.random_range(0..2), rng.random_range(0..2)]);
                deterministic_behavior(s, &fa, &fb).unwrap().mix(&Behavior::uniform(s), rng.random()).unwrap()
            };
            let p = random_beh(&mut rng);
            let q = random_beh(&mut rng);
            let f = BellFunctional::from_fn(s, |_, _, _, _| rng.random::<f64>());
            let g = rac_inequality(2).unwrap();
            let mixed = p.mix(&q, lambda).unwrap();
            let lhs = f.evaluate(&mixed).unwrap();
            let rhs = lambda * f.evaluate(&p).unwrap() + (1.0 - lambda) * f.evaluate(&q).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
            let comb = f.scaled_add(k, &g).unwrap();
            let lhs = comb.evaluate(&p).unwrap();
            let rhs = k * f.evaluate(&p).unwrap() + g.evaluate(&p).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn mixtures_of_bit_strategies_stay_below_the_classical_bound(seed in any::<u64>()) {
            let w = rac_witness(3).unwrap();
            let pm = *w.scenario();
            let bound = classical_bound_pm(&w).unwrap().value;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut mix = PmBehavior::uniform(pm);
            for k in 1..6 {
                let strat = BitStrategy {
                    encoding: (0..pm.nprep).map(|_| rng.random_range(0..2)).collect(),
                    decoding: (0..2).map(|_| (0..pm.ny).map(|_| rng.random_range(0..2)).collect()).collect(),
                };
                mix = strat.behavior(pm).mix(&mix, 1.0 / k as f64).unwrap();
            }
            prop_assert!(w.evaluate(&mix).unwrap() <= bound + 1e-12);
        }
    }
}
