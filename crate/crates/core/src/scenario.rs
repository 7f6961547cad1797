//! Bell and prepare-and-measure scenarios and the probability tables on them.
//!
//! Tables are stored dense in the canonical row-major order `(a, b, x, y)` for
//! Bell behaviors and `(b, x', y)` for prepare-and-measure behaviors. The JSON
//! interchange format nests them by inputs first: `p[x][y][a][b]` and `p[x'][y][b]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for tables built from exact arithmetic.
pub const EXACT_TOL: f64 = 1e-9;
/// Tolerance for tables recovered from a numerical solver.
pub const SOLVER_TOL: f64 = 1e-6;

/// A bipartite Bell scenario: Alice has `nx` settings with `na` outcomes each,
/// Bob has `ny` settings with `nb` outcomes each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawScenario")]
pub struct Scenario {
    pub nx: usize,
    pub na: usize,
    pub ny: usize,
    pub nb: usize,
}

#[derive(Deserialize)]
struct RawScenario {
    nx: usize,
    na: usize,
    ny: usize,
    nb: usize,
}

impl TryFrom<RawScenario> for Scenario {
    type Error = Error;

    fn try_from(raw: RawScenario) -> Result<Self> {
        Scenario::new(raw.nx, raw.na, raw.ny, raw.nb)
    }
}

impl Scenario {
    pub fn new(nx: usize, na: usize, ny: usize, nb: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Scenario(format!(
                "setting counts must be positive (nx={nx}, ny={ny})"
            )));
        }
        if na < 2 || nb < 2 {
            return Err(Error::Scenario(format!(
                "outcome counts must be at least 2 (na={na}, nb={nb})"
            )));
        }
        Ok(Self { nx, na, ny, nb })
    }

    /// Number of entries in a probability or coefficient table.
    pub fn table_len(&self) -> usize {
        self.na * self.nb * self.nx * self.ny
    }

    /// Flat index of `(a, b, x, y)`.
    #[inline]
    pub fn index(&self, a: usize, b: usize, x: usize, y: usize) -> usize {
        debug_assert!(a < self.na && b < self.nb && x < self.nx && y < self.ny);
        ((a * self.nb + b) * self.nx + x) * self.ny + y
    }

    /// Number of deterministic local strategies, `na^nx * nb^ny`.
    pub fn deterministic_count(&self) -> u128 {
        pow_saturating(self.na, self.nx).saturating_mul(pow_saturating(self.nb, self.ny))
    }
}

/// A prepare-and-measure scenario: Alice prepares one of `nprep` states of
/// dimension `dim`, Bob measures one of `ny` settings with `nb` outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPmScenario")]
pub struct PmScenario {
    pub nprep: usize,
    pub ny: usize,
    pub nb: usize,
    pub dim: usize,
}

#[derive(Deserialize)]
struct RawPmScenario {
    nprep: usize,
    ny: usize,
    nb: usize,
    #[serde(default = "qubit_dim")]
    dim: usize,
}

fn qubit_dim() -> usize {
    2
}

impl TryFrom<RawPmScenario> for PmScenario {
    type Error = Error;

    fn try_from(raw: RawPmScenario) -> Result<Self> {
        PmScenario::with_dim(raw.nprep, raw.ny, raw.nb, raw.dim)
    }
}

impl PmScenario {
    /// A qubit prepare-and-measure scenario.
    pub fn new(nprep: usize, ny: usize, nb: usize) -> Result<Self> {
        Self::with_dim(nprep, ny, nb, 2)
    }

    pub fn with_dim(nprep: usize, ny: usize, nb: usize, dim: usize) -> Result<Self> {
        if dim != 2 {
            return Err(Error::Scenario(format!(
                "only qubit communication is supported (dim={dim})"
            )));
        }
        if nprep < 2 {
            return Err(Error::Scenario(format!(
                "at least two preparations are required (nprep={nprep})"
            )));
        }
        if ny == 0 || nb < 2 {
            return Err(Error::Scenario(format!(
                "need ny >= 1 and nb >= 2 (ny={ny}, nb={nb})"
            )));
        }
        Ok(Self { nprep, ny, nb, dim })
    }

    pub fn table_len(&self) -> usize {
        self.nb * self.nprep * self.ny
    }

    /// Flat index of `(b, x', y)`.
    #[inline]
    pub fn index(&self, b: usize, xp: usize, y: usize) -> usize {
        debug_assert!(b < self.nb && xp < self.nprep && y < self.ny);
        (b * self.nprep + xp) * self.ny + y
    }
}

pub(crate) fn pow_saturating(base: usize, exp: usize) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.saturating_mul(base as u128);
    }
    acc
}

/// Conditional probabilities `P(a,b|x,y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Behavior {
    scenario: Scenario,
    p: Vec<f64>,
}

impl Behavior {
    /// Wraps a flat table in canonical `(a, b, x, y)` order.
    pub fn from_table(scenario: Scenario, p: Vec<f64>) -> Result<Self> {
        if p.len() != scenario.table_len() {
            return Err(Error::Shape(format!(
                "behavior table has {} entries, scenario needs {}",
                p.len(),
                scenario.table_len()
            )));
        }
        Ok(Self { scenario, p })
    }

    pub fn from_fn(
        scenario: Scenario,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut p = vec![0.0; scenario.table_len()];
        for a in 0..scenario.na {
            for b in 0..scenario.nb {
                for x in 0..scenario.nx {
                    for y in 0..scenario.ny {
                        p[scenario.index(a, b, x, y)] = f(a, b, x, y);
                    }
                }
            }
        }
        Self { scenario, p }
    }

    /// The behavior with every outcome pair equally likely.
    pub fn uniform(scenario: Scenario) -> Self {
        let w = 1.0 / (scenario.na * scenario.nb) as f64;
        Self {
            scenario,
            p: vec![w; scenario.table_len()],
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn table(&self) -> &[f64] {
        &self.p
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.p[self.scenario.index(a, b, x, y)]
    }

    /// Alice's marginal `P(a|x,y)`.
    pub fn alice_marginal(&self, a: usize, x: usize, y: usize) -> f64 {
        (0..self.scenario.nb).map(|b| self.get(a, b, x, y)).sum()
    }

    /// Bob's marginal `P(b|x,y)`.
    pub fn bob_marginal(&self, b: usize, x: usize, y: usize) -> f64 {
        (0..self.scenario.na).map(|a| self.get(a, b, x, y)).sum()
    }

    /// Convex combination `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, other: &Behavior, lambda: f64) -> Result<Behavior> {
        if self.scenario != other.scenario {
            return Err(Error::Shape(
                "cannot mix behaviors on different scenarios".into(),
            ));
        }
        let p = self
            .p
            .iter()
            .zip(&other.p)
            .map(|(u, v)| lambda * u + (1.0 - lambda) * v)
            .collect();
        Ok(Behavior {
            scenario: self.scenario,
            p,
        })
    }

    /// The prepare-and-measure table obtained by reading Alice's outcome as part
    /// of her input, `P(b|x',y) = P(a,b|x,y) / P(a|x,y)` with `x' = a + na*x`.
    /// Cells with vanishing marginal are filled uniformly.
    pub fn conditional_on_alice(&self) -> Result<PmBehavior> {
        let s = self.scenario;
        let pm = PmScenario::new(s.nx * s.na, s.ny, s.nb)?;
        let mut p = vec![0.0; pm.table_len()];
        for x in 0..s.nx {
            for a in 0..s.na {
                let xp = a + s.na * x;
                for y in 0..s.ny {
                    let marg = self.alice_marginal(a, x, y);
                    for b in 0..s.nb {
                        p[pm.index(b, xp, y)] = if marg > 0.0 {
                            self.get(a, b, x, y) / marg
                        } else {
                            1.0 / s.nb as f64
                        };
                    }
                }
            }
        }
        PmBehavior::from_table(pm, p)
    }
}

/// Conditional probabilities `P(b|x',y)` in a prepare-and-measure scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct PmBehavior {
    scenario: PmScenario,
    p: Vec<f64>,
}

impl PmBehavior {
    pub fn from_table(scenario: PmScenario, p: Vec<f64>) -> Result<Self> {
        if p.len() != scenario.table_len() {
            return Err(Error::Shape(format!(
                "behavior table has {} entries, scenario needs {}",
                p.len(),
                scenario.table_len()
            )));
        }
        Ok(Self { scenario, p })
    }

    pub fn from_fn(scenario: PmScenario, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut p = vec![0.0; scenario.table_len()];
        for b in 0..scenario.nb {
            for xp in 0..scenario.nprep {
                for y in 0..scenario.ny {
                    p[scenario.index(b, xp, y)] = f(b, xp, y);
                }
            }
        }
        Self { scenario, p }
    }

    pub fn uniform(scenario: PmScenario) -> Self {
        let w = 1.0 / scenario.nb as f64;
        Self {
            scenario,
            p: vec![w; scenario.table_len()],
        }
    }

    pub fn scenario(&self) -> &PmScenario {
        &self.scenario
    }

    pub fn table(&self) -> &[f64] {
        &self.p
    }

    #[inline]
    pub fn get(&self, b: usize, xp: usize, y: usize) -> f64 {
        self.p[self.scenario.index(b, xp, y)]
    }

    pub fn mix(&self, other: &PmBehavior, lambda: f64) -> Result<PmBehavior> {
        if self.scenario != other.scenario {
            return Err(Error::Shape(
                "cannot mix behaviors on different scenarios".into(),
            ));
        }
        let p = self
            .p
            .iter()
            .zip(&other.p)
            .map(|(u, v)| lambda * u + (1.0 - lambda) * v)
            .collect();
        Ok(PmBehavior {
            scenario: self.scenario,
            p,
        })
    }
}

/// Outcome of [`validate_behavior`] and [`validate_pm_behavior`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// `|sum of outcomes - 1|` for every input cell, in row-major input order.
    pub normalization_errors: Vec<f64>,
    pub max_normalization_error: f64,
    pub min_entry: f64,
    /// Largest change of a marginal when the other party's setting changes.
    /// Always zero for prepare-and-measure tables.
    pub no_signaling_violation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks normalization, nonnegativity and no-signaling of a Bell behavior.
pub fn validate_behavior(beh: &Behavior, tol: f64) -> ValidationReport {
    let s = beh.scenario;
    let mut normalization_errors = Vec::with_capacity(s.nx * s.ny);
    for x in 0..s.nx {
        for y in 0..s.ny {
            let mut sum = 0.0;
            for a in 0..s.na {
                for b in 0..s.nb {
                    sum += beh.get(a, b, x, y);
                }
            }
            normalization_errors.push((sum - 1.0).abs());
        }
    }
    let mut signaling: f64 = 0.0;
    for x in 0..s.nx {
        for a in 0..s.na {
            let margs: Vec<f64> = (0..s.ny).map(|y| beh.alice_marginal(a, x, y)).collect();
            signaling = signaling.max(spread(&margs));
        }
    }
    for y in 0..s.ny {
        for b in 0..s.nb {
            let margs: Vec<f64> = (0..s.nx).map(|x| beh.bob_marginal(b, x, y)).collect();
            signaling = signaling.max(spread(&margs));
        }
    }
    finish_report(normalization_errors, &beh.p, signaling, tol)
}

/// Checks normalization and nonnegativity of a prepare-and-measure behavior.
pub fn validate_pm_behavior(beh: &PmBehavior, tol: f64) -> ValidationReport {
    let s = beh.scenario;
    let mut normalization_errors = Vec::with_capacity(s.nprep * s.ny);
    for xp in 0..s.nprep {
        for y in 0..s.ny {
            let sum: f64 = (0..s.nb).map(|b| beh.get(b, xp, y)).sum();
            normalization_errors.push((sum - 1.0).abs());
        }
    }
    finish_report(normalization_errors, &beh.p, 0.0, tol)
}

fn spread(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

fn finish_report(
    normalization_errors: Vec<f64>,
    table: &[f64],
    no_signaling_violation: f64,
    tol: f64,
) -> ValidationReport {
    let max_normalization_error = normalization_errors.iter().copied().fold(0.0, f64::max);
    let min_entry = table.iter().copied().fold(f64::INFINITY, f64::min);
    let passed =
        max_normalization_error <= tol && min_entry >= -tol && no_signaling_violation <= tol;
    ValidationReport {
        normalization_errors,
        max_normalization_error,
        min_entry,
        no_signaling_violation,
        tolerance: tol,
        passed,
    }
}

/// The local deterministic behavior `p(a,b|x,y) = [a = fa(x)] [b = fb(y)]`.
pub fn deterministic_behavior(s: Scenario, fa: &[usize], fb: &[usize]) -> Result<Behavior> {
    if fa.len() != s.nx || fb.len() != s.ny {
        return Err(Error::Shape(format!(
            "assignments cover {} and {} settings, scenario has {} and {}",
            fa.len(),
            fb.len(),
            s.nx,
            s.ny
        )));
    }
    if let Some(&a) = fa.iter().find(|&&a| a >= s.na) {
        return Err(Error::Assignment(format!(
            "Alice outcome {a} >= na={}",
            s.na
        )));
    }
    if let Some(&b) = fb.iter().find(|&&b| b >= s.nb) {
        return Err(Error::Assignment(format!("Bob outcome {b} >= nb={}", s.nb)));
    }
    Ok(Behavior::from_fn(s, |a, b, x, y| {
        if fa[x] == a && fb[y] == b {
            1.0
        } else {
            0.0
        }
    }))
}

/// Decodes `index` as a mixed-radix assignment of `len` digits in base `base`,
/// least significant digit first.
pub(crate) fn decode_assignment(mut index: u128, base: usize, len: usize, out: &mut [usize]) {
    for digit in out.iter_mut().take(len) {
        *digit = (index % base as u128) as usize;
        index /= base as u128;
    }
}

/// All deterministic `(fa, fb)` pairs of a scenario, Alice's assignment varying fastest.
pub fn deterministic_assignments(s: Scenario) -> impl Iterator<Item = (Vec<usize>, Vec<usize>)> {
    let na_count = pow_saturating(s.na, s.nx);
    let total = s.deterministic_count();
    (0..total).map(move |k| {
        let mut fa = vec![0; s.nx];
        let mut fb = vec![0; s.ny];
        decode_assignment(k % na_count, s.na, s.nx, &mut fa);
        decode_assignment(k / na_count, s.nb, s.ny, &mut fb);
        (fa, fb)
    })
}

// --- JSON interchange -------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct BehaviorFile {
    scenario: Scenario,
    p: Vec<Vec<Vec<Vec<f64>>>>,
}

impl Serialize for Behavior {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let s = self.scenario;
        let p = (0..s.nx)
            .map(|x| {
                (0..s.ny)
                    .map(|y| {
                        (0..s.na)
                            .map(|a| (0..s.nb).map(|b| self.get(a, b, x, y)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        BehaviorFile { scenario: s, p }.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Behavior {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let file = BehaviorFile::deserialize(de)?;
        let s = file.scenario;
        let table = nested4_to_flat(&file.p, s).map_err(serde::de::Error::custom)?;
        Ok(Behavior {
            scenario: s,
            p: table,
        })
    }
}

/// Flattens a `[x][y][a][b]` nested table into canonical order.
pub(crate) fn nested4_to_flat(nested: &[Vec<Vec<Vec<f64>>>], s: Scenario) -> Result<Vec<f64>> {
    let bad = || Error::Shape(format!("nested table does not match scenario {s:?}"));
    if nested.len() != s.nx {
        return Err(bad());
    }
    let mut out = vec![0.0; s.table_len()];
    for (x, by_y) in nested.iter().enumerate() {
        if by_y.len() != s.ny {
            return Err(bad());
        }
        for (y, by_a) in by_y.iter().enumerate() {
            if by_a.len() != s.na {
                return Err(bad());
            }
            for (a, by_b) in by_a.iter().enumerate() {
                if by_b.len() != s.nb {
                    return Err(bad());
                }
                for (b, &v) in by_b.iter().enumerate() {
                    out[s.index(a, b, x, y)] = v;
                }
            }
        }
    }
    Ok(out)
}

pub(crate) fn flat_to_nested4(table: &[f64], s: Scenario) -> Vec<Vec<Vec<Vec<f64>>>> {
    (0..s.nx)
        .map(|x| {
            (0..s.ny)
                .map(|y| {
                    (0..s.na)
                        .map(|a| (0..s.nb).map(|b| table[s.index(a, b, x, y)]).collect())
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Flattens a `[x'][y][b]` nested table into canonical order.
pub(crate) fn nested3_to_flat(nested: &[Vec<Vec<f64>>], s: PmScenario) -> Result<Vec<f64>> {
    let bad = || Error::Shape(format!("nested table does not match scenario {s:?}"));
    if nested.len() != s.nprep {
        return Err(bad());
    }
    let mut out = vec![0.0; s.table_len()];
    for (xp, by_y) in nested.iter().enumerate() {
        if by_y.len() != s.ny {
            return Err(bad());
        }
        for (y, by_b) in by_y.iter().enumerate() {
            if by_b.len() != s.nb {
                return Err(bad());
            }
            for (b, &v) in by_b.iter().enumerate() {
                out[s.index(b, xp, y)] = v;
            }
        }
    }
    Ok(out)
}

pub(crate) fn flat_to_nested3(table: &[f64], s: PmScenario) -> Vec<Vec<Vec<f64>>> {
    (0..s.nprep)
        .map(|xp| {
            (0..s.ny)
                .map(|y| (0..s.nb).map(|b| table[s.index(b, xp, y)]).collect())
                .collect()
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct PmBehaviorFile {
    scenario: PmScenario,
    p: Vec<Vec<Vec<f64>>>,
}

impl Serialize for PmBehavior {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        PmBehaviorFile {
            scenario: self.scenario,
            p: flat_to_nested3(&self.p, self.scenario),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for PmBehavior {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let file = PmBehaviorFile::deserialize(de)?;
        let table = nested3_to_flat(&file.p, file.scenario).map_err(serde::de::Error::custom)?;
        Ok(PmBehavior {
            scenario: file.scenario,
            p: table,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chsh() -> Scenario {
        Scenario::new(2, 2, 2, 2).unwrap()
    }

    #[test]
    fn rejects_degenerate_scenarios() {
        assert!(Scenario::new(0, 2, 2, 2).is_err());
        assert!(Scenario::new(2, 1, 2, 2).is_err());
        assert!(PmScenario::new(1, 2, 2).is_err());
        assert!(PmScenario::with_dim(4, 2, 2, 3).is_err());
    }

    #[test]
    fn uniform_behavior_passes() {
        let r = validate_behavior(&Behavior::uniform(chsh()), EXACT_TOL);
        assert!(r.passed);
        assert_eq!(r.max_normalization_error, 0.0);
        assert_eq!(r.no_signaling_violation, 0.0);
        assert_eq!(r.min_entry, 0.25);
    }

    #[test]
    fn normalization_defect_is_reported() {
        let s = chsh();
        let beh = Behavior::from_fn(s, |a, b, x, y| {
            if (x, y) == (1, 0) && (a, b) == (1, 1) {
                0.15
            } else {
                0.25
            }
        });
        let r = validate_behavior(&beh, EXACT_TOL);
        assert!(!r.passed);
        assert!((r.max_normalization_error - 0.1).abs() < 1e-12);
        // cell (x=1, y=0) in row-major input order
        assert!((r.normalization_errors[2] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn signaling_table_is_caught() {
        // Alice's marginal for a=0 drops from 0.75 to 0.25 when Bob switches setting.
        let s = chsh();
        let beh = Behavior::from_fn(s, |a, b, _x, y| {
            let pa = if y == 0 { [0.75, 0.25] } else { [0.25, 0.75] };
            pa[a] * 0.5 + 0.0 * b as f64
        });
        let r = validate_behavior(&beh, EXACT_TOL);
        assert!((r.no_signaling_violation - 0.5).abs() < 1e-12);
        assert_eq!(r.max_normalization_error, 0.0);
        assert!(!r.passed);
    }

    #[test]
    fn deterministic_behaviors() {
        let s = chsh();
        let beh = deterministic_behavior(s, &[0, 0], &[0, 0]).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert_eq!(beh.get(0, 0, x, y), 1.0);
            }
        }
        assert_eq!(deterministic_assignments(s).count(), 16);
        for (fa, fb) in deterministic_assignments(s) {
            let r = validate_behavior(&deterministic_behavior(s, &fa, &fb).unwrap(), EXACT_TOL);
            assert!(r.passed);
            assert_eq!(r.no_signaling_violation, 0.0);
        }
        assert!(matches!(
            deterministic_behavior(s, &[2, 0], &[0, 0]),
            Err(Error::Assignment(_))
        ));
        assert!(matches!(
            deterministic_behavior(s, &[0], &[0, 0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            Behavior::from_table(chsh(), vec![0.0; 15]),
            Err(Error::Shape(_))
        ));
        let pm = PmScenario::new(4, 2, 2).unwrap();
        assert!(matches!(
            PmBehavior::from_table(pm, vec![0.0; 3]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn json_layout_is_inputs_first() {
        let s = Scenario::new(2, 2, 3, 2).unwrap();
        let beh = deterministic_behavior(s, &[1, 0], &[0, 1, 1]).unwrap();
        let v = serde_json::to_value(&beh).unwrap();
        // p[x=0][y=1][a=1][b=1]
        assert_eq!(v["p"][0][1][1][1], 1.0);
        assert_eq!(v["scenario"]["ny"], 3);
        let back: Behavior = serde_json::from_value(v).unwrap();
        assert_eq!(back, beh);

        let bad = serde_json::json!({"scenario": {"nx": 2, "na": 2, "ny": 2, "nb": 2}, "p": [[]]});
        assert!(serde_json::from_value::<Behavior>(bad).is_err());
    }

    #[test]
    fn conditional_on_alice_reads_outcome_as_input() {
        let s = chsh();
        let pm = Behavior::uniform(s).conditional_on_alice().unwrap();
        assert_eq!(pm.scenario().nprep, 4);
        assert!(validate_pm_behavior(&pm, EXACT_TOL).passed);
        assert!(pm.table().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }
}
