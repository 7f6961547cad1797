//! Qubit prepare-and-measure strategies: Born-rule statistics, local
//! maximization of witnesses and a heuristic search for the most predictable
//! outcome at a given witness value.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{DimensionWitness, InputFactorization};
use crate::scenario::{PmBehavior, PmScenario};

pub const DEFAULT_RESTARTS: usize = 50;
const NORM_TOL: f64 = 1e-9;

/// Pure-state preparations and projective measurements, as Bloch vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStrategy")]
pub struct QubitStrategy {
    preparations: Vec<[f64; 3]>,
    measurements: Vec<[f64; 3]>,
}

#[derive(Deserialize)]
struct RawStrategy {
    preparations: Vec<[f64; 3]>,
    measurements: Vec<[f64; 3]>,
}

impl TryFrom<RawStrategy> for QubitStrategy {
    type Error = Error;

    fn try_from(r: RawStrategy) -> Result<Self> {
        QubitStrategy::new(r.preparations, r.measurements)
    }
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn dot3(u: &[f64; 3], v: &[f64; 3]) -> f64 {
    u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

impl QubitStrategy {
    pub fn new(preparations: Vec<[f64; 3]>, measurements: Vec<[f64; 3]>) -> Result<Self> {
        if preparations.is_empty() || measurements.is_empty() {
            return Err(Error::InvalidArgument(
                "a strategy needs preparations and measurements".into(),
            ));
        }
        for (what, vs) in [
            ("preparation", &preparations),
            ("measurement", &measurements),
        ] {
            for (i, v) in vs.iter().enumerate() {
                if (norm3(v) - 1.0).abs() > NORM_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "{what} {i} has Bloch vector norm {}, expected 1",
                        norm3(v)
                    )));
                }
            }
        }
        Ok(Self {
            preparations,
            measurements,
        })
    }

    pub fn preparations(&self) -> &[[f64; 3]] {
        &self.preparations
    }

    pub fn measurements(&self) -> &[[f64; 3]] {
        &self.measurements
    }

    pub fn scenario(&self) -> PmScenario {
        PmScenario::new(self.preparations.len(), self.measurements.len(), 2)
            .expect("nonempty strategy has a valid scenario")
    }

    /// `P(b=0|x',y) = (1 + r_x' . m_y) / 2`.
    pub fn born_probabilities(&self) -> PmBehavior {
        PmBehavior::from_fn(self.scenario(), |b, xp, y| {
            let c = dot3(&self.preparations[xp], &self.measurements[y]).clamp(-1.0, 1.0);
            if b == 0 {
                0.5 * (1.0 + c)
            } else {
                0.5 * (1.0 - c)
            }
        })
    }

    /// The optimal 2 -> 1 random access code: preparations at 45 degrees in the
    /// X-Z plane, bit `i` of `x'` selecting the sign along axis `i`, measured
    /// along Z (`y = 0`) and X (`y = 1`).
    pub fn rac2_optimal() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let preparations = (0..4)
            .map(|xp| {
                let z = if xp & 1 == 0 { s } else { -s };
                let x = if xp & 2 == 0 { s } else { -s };
                [x, 0.0, z]
            })
            .collect();
        Self::new(preparations, vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]).unwrap()
    }

    fn from_angles(angles: &[f64], nprep: usize) -> Self {
        let vecs: Vec<[f64; 3]> = angles.chunks(2).map(|t| bloch(t[0], t[1]).0).collect();
        let (p, m) = vecs.split_at(nprep);
        Self {
            preparations: p.to_vec(),
            measurements: m.to_vec(),
        }
    }
}

/// Unit vector at polar angle `t`, azimuth `p`, with its two partial derivatives.
fn bloch(t: f64, p: f64) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let (st, ct) = t.sin_cos();
    let (sp, cp) = p.sin_cos();
    (
        [st * cp, st * sp, ct],
        [ct * cp, ct * sp, -st],
        [-st * sp, st * cp, 0.0],
    )
}

/// `W = c0 + 1/2 sum d[x',y] r_x' . m_y` for a binary-outcome witness.
struct Model {
    nprep: usize,
    ny: usize,
    c0: f64,
    d: Vec<f64>,
}

impl Model {
    fn new(w: &DimensionWitness) -> Result<Self> {
        let pm = *w.scenario();
        if pm.nb != 2 {
            return Err(Error::InvalidArgument(
                "qubit strategies need binary outcomes".into(),
            ));
        }
        let mut c0 = 0.0;
        let mut d = vec![0.0; pm.nprep * pm.ny];
        for xp in 0..pm.nprep {
            for y in 0..pm.ny {
                let (b0, b1) = (w.coeff(0, xp, y), w.coeff(1, xp, y));
                c0 += 0.5 * (b0 + b1);
                d[xp * pm.ny + y] = b0 - b1;
            }
        }
        Ok(Self {
            nprep: pm.nprep,
            ny: pm.ny,
            c0,
            d,
        })
    }

    fn nparams(&self) -> usize {
        2 * (self.nprep + self.ny)
    }

    fn vectors(&self, angles: &[f64]) -> Vec<([f64; 3], [f64; 3], [f64; 3])> {
        angles.chunks(2).map(|t| bloch(t[0], t[1])).collect()
    }

    fn value(&self, v: &[([f64; 3], [f64; 3], [f64; 3])]) -> f64 {
        let mut s = self.c0;
        for xp in 0..self.nprep {
            for y in 0..self.ny {
                s += 0.5 * self.d[xp * self.ny + y] * dot3(&v[xp].0, &v[self.nprep + y].0);
            }
        }
        s
    }

    /// Gradient of the witness with respect to the angles, added with weight `k`.
    fn add_grad(&self, v: &[([f64; 3], [f64; 3], [f64; 3])], k: f64, g: &mut [f64]) {
        for xp in 0..self.nprep {
            for y in 0..self.ny {
                let c = 0.5 * k * self.d[xp * self.ny + y];
                if c == 0.0 {
                    continue;
                }
                let (r, m) = (&v[xp], &v[self.nprep + y]);
                g[2 * xp] += c * dot3(&r.1, &m.0);
                g[2 * xp + 1] += c * dot3(&r.2, &m.0);
                let j = self.nprep + y;
                g[2 * j] += c * dot3(&m.1, &r.0);
                g[2 * j + 1] += c * dot3(&m.2, &r.0);
            }
        }
    }
}

fn random_angles(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n / 2 {
        // uniform on the sphere
        let z: f64 = rng.random_range(-1.0..=1.0);
        let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        out.push(z.acos());
        out.push(phi);
    }
    out
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

struct LmOutcome {
    x: Vec<f64>,
    f: f64,
    converged: bool,
}

/// Levenberg-Marquardt damped Newton minimization. The Hessian is taken by
/// central differences of the analytic gradient.
fn lm_minimize(
    f: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64], &mut [f64]),
    mut x: Vec<f64>,
    max_iter: usize,
) -> LmOutcome {
    let n = x.len();
    let h = 1e-6;
    let mut fx = f(&x);
    let mut g = vec![0.0; n];
    let mut lambda = 1e-3;
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    for _ in 0..max_iter {
        g.iter_mut().for_each(|v| *v = 0.0);
        grad(&x, &mut g);
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-10 {
            return LmOutcome {
                x,
                f: fx,
                converged: true,
            };
        }
        let mut hess = Mat::<f64>::zeros(n, n);
        for j in 0..n {
            let keep = x[j];
            x[j] = keep + h;
            gp.iter_mut().for_each(|v| *v = 0.0);
            grad(&x, &mut gp);
            x[j] = keep - h;
            gm.iter_mut().for_each(|v| *v = 0.0);
            grad(&x, &mut gm);
            x[j] = keep;
            for i in 0..n {
                hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        for j in 0..n {
            for i in 0..j {
                let v = 0.5 * (hess[(i, j)] + hess[(j, i)]);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        let rhs = Mat::from_fn(n, 1, |i, _| -g[i]);
        let mut improved = false;
        for _ in 0..40 {
            let mut a = hess.clone();
            for i in 0..n {
                a[(i, i)] += lambda;
            }
            let Ok(llt) = a.llt(Side::Lower) else {
                lambda *= 4.0;
                continue;
            };
            let step = llt.solve(&rhs);
            let trial: Vec<f64> = (0..n).map(|i| x[i] + step[(i, 0)]).collect();
            let ft = f(&trial);
            if ft < fx {
                let small = (0..n).map(|i| step[(i, 0)].abs()).fold(0.0, f64::max) < 1e-13;
                x = trial;
                let drop = fx - ft;
                fx = ft;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if small || drop < 1e-15 * (1.0 + fx.abs()) {
                    return LmOutcome {
                        x,
                        f: fx,
                        converged: true,
                    };
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            // no descent at any damping: a stationary point up to round-off
            return LmOutcome {
                x,
                f: fx,
                converged: gnorm < 1e-6,
            };
        }
    }
    LmOutcome {
        x,
        f: fx,
        converged: false,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessOptimum {
    pub strategy: QubitStrategy,
    pub value: f64,
    pub restarts: usize,
    pub converged: usize,
}

/// Best witness value found by local maximization from `restarts` random
/// starts. A lower bound on the qubit maximum; the same seed gives the same result.
pub fn optimize_witness(
    w: &DimensionWitness,
    restarts: usize,
    seed: u64,
) -> Result<WitnessOptimum> {
    if restarts == 0 {
        return Err(Error::InvalidArgument(
            "at least one restart is needed".into(),
        ));
    }
    let model = Model::new(w)?;
    let np = model.nparams();
    let f = |a: &[f64]| -model.value(&model.vectors(a));
    let g = |a: &[f64], out: &mut [f64]| model.add_grad(&model.vectors(a), -1.0, out);
    let runs: Vec<(usize, LmOutcome)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let x0 = random_angles(np, &mut restart_rng(seed, r));
            (r, lm_minimize(&f, &g, x0, 500))
        })
        .collect();
    let converged = runs.iter().filter(|(_, o)| o.converged).count();
    for (r, o) in &runs {
        if !o.converged {
            log::debug!("restart {r} stopped before convergence at {}", -o.f);
        }
    }
    let (_, best) = runs
        .iter()
        .filter(|(_, o)| o.converged)
        .chain(runs.iter())
        .min_by(|a, b| a.1.f.total_cmp(&b.1.f).then(a.0.cmp(&b.0)))
        .expect("restarts > 0");
    Ok(WitnessOptimum {
        strategy: QubitStrategy::from_angles(&best.x, model.nprep),
        value: -best.f,
        restarts,
        converged,
    })
}

/// Maps search parameters to the angles of every Bloch vector. With a pairing,
/// the preparation for outcome 1 of each setting is the antipode of the one
/// for outcome 0, so each setting's average state is maximally mixed.
struct Layout {
    /// `full[i] = offset + sign * reduced[src]`
    map: Vec<(usize, f64, f64)>,
    nreduced: usize,
}

impl Layout {
    fn identity(n: usize) -> Self {
        Self {
            map: (0..n).map(|i| (i, 1.0, 0.0)).collect(),
            nreduced: n,
        }
    }

    fn antipodal(model: &Model, split: &InputFactorization) -> Result<Self> {
        if split.nprep() != model.nprep || split.outcomes() != 2 {
            return Err(Error::Factorization(format!(
                "antipodal pairing needs a two-outcome split of {} preparations",
                model.nprep
            )));
        }
        let pi = std::f64::consts::PI;
        let mut map = vec![(0, 1.0, 0.0); 2 * (model.nprep + model.ny)];
        for xp in 0..model.nprep {
            let (x, a) = split.pair(xp);
            let (t, p) = (2 * x, 2 * x + 1);
            map[2 * xp] = if a == 0 { (t, 1.0, 0.0) } else { (t, -1.0, pi) };
            map[2 * xp + 1] = if a == 0 { (p, 1.0, 0.0) } else { (p, 1.0, pi) };
        }
        let base = 2 * split.settings();
        for y in 0..model.ny {
            let j = model.nprep + y;
            map[2 * j] = (base + 2 * y, 1.0, 0.0);
            map[2 * j + 1] = (base + 2 * y + 1, 1.0, 0.0);
        }
        Ok(Self {
            map,
            nreduced: base + 2 * model.ny,
        })
    }

    fn expand(&self, r: &[f64]) -> Vec<f64> {
        self.map.iter().map(|&(s, k, o)| o + k * r[s]).collect()
    }

    fn fold(&self, full: &[f64], out: &mut [f64]) {
        for (&(s, k, _), g) in self.map.iter().zip(full) {
            out[s] += k * g;
        }
    }
}

/// Gauss-Newton steps on `W(x) = v` alone. Near a maximum of `W` the
/// gradient vanishes and the penalty stages stall short of the tolerance.
fn restore(model: &Model, layout: &Layout, v: f64, x: &mut Vec<f64>) {
    let value = |r: &[f64]| model.value(&model.vectors(&layout.expand(r)));
    let mut c = value(x) - v;
    for _ in 0..200 {
        if c.abs() <= 0.01 * CONSTRAINT_TOL {
            return;
        }
        let mut gf = vec![0.0; layout.map.len()];
        model.add_grad(&model.vectors(&layout.expand(x)), 1.0, &mut gf);
        let mut g = vec![0.0; x.len()];
        layout.fold(&gf, &mut g);
        let g2: f64 = g.iter().map(|t| t * t).sum();
        if g2 == 0.0 {
            return;
        }
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x
                .iter()
                .zip(&g)
                .map(|(xi, gi)| xi - t * c * gi / g2)
                .collect();
            let ct = value(&trial) - v;
            if ct.abs() < c.abs() {
                *x = trial;
                c = ct;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            return;
        }
    }
}

/// Result of the heuristic guessing-probability search.
#[derive(Debug, Clone, Serialize)]
pub struct HeuristicEntropy {
    pub value: f64,
    /// `-log2` of the best guessing probability found; `None` when flagged.
    pub entropy: Option<f64>,
    pub guessing: f64,
    pub outcome: usize,
    /// `|W - v|` at the reported strategy.
    pub violation: f64,
    /// The witness constraint could not be met to tolerance.
    pub flagged: bool,
    pub strategy: QubitStrategy,
}

pub const CONSTRAINT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct HeuristicOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Pair preparations `(x, 0)` and `(x, 1)` as antipodal states.
    pub antipodal: Option<InputFactorization>,
}

impl Default for HeuristicOptions {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            antipodal: None,
        }
    }
}

/// Searches for the qubit strategy with `W = v` that makes outcome `b` of
/// `(x', y)` most predictable, by an augmented Lagrangian with penalty weights
/// growing tenfold over four stages. The result is an upper bound on the true
/// min-entropy only as far as the search finds global optima.
pub fn heuristic_min_entropy(
    w: &DimensionWitness,
    v: f64,
    xp: usize,
    y: usize,
    opts: &HeuristicOptions,
) -> Result<HeuristicEntropy> {
    let pm = *w.scenario();
    if xp >= pm.nprep || y >= pm.ny {
        return Err(Error::InvalidArgument(format!(
            "inputs ({xp}, {y}) outside the scenario"
        )));
    }
    if opts.restarts == 0 {
        return Err(Error::InvalidArgument(
            "at least one restart is needed".into(),
        ));
    }
    let model = Model::new(w)?;
    let layout = match &opts.antipodal {
        Some(split) => Layout::antipodal(&model, split)?,
        None => Layout::identity(model.nparams()),
    };
    let mi = model.nprep + y;

    let search = |b: usize, r: usize| -> (f64, f64, Vec<f64>) {
        let sgn = if b == 0 { 1.0 } else { -1.0 };
        let guess =
            |vs: &[([f64; 3], [f64; 3], [f64; 3])]| 0.5 * (1.0 + sgn * dot3(&vs[xp].0, &vs[mi].0));
        let mut x = random_angles(layout.nreduced, &mut restart_rng(opts.seed, r));
        let mut mult = 0.0;
        let mut rho = 10.0;
        for _stage in 0..4 {
            // a few multiplier updates per penalty weight
            for _ in 0..5 {
                let f = |a: &[f64]| {
                    let vs = model.vectors(&layout.expand(a));
                    let c = model.value(&vs) - v;
                    -guess(&vs) + mult * c + 0.5 * rho * c * c
                };
                let g = |a: &[f64], out: &mut [f64]| {
                    let vs = model.vectors(&layout.expand(a));
                    let c = model.value(&vs) - v;
                    let mut full = vec![0.0; layout.map.len()];
                    model.add_grad(&vs, mult + rho * c, &mut full);
                    let (r, m) = (&vs[xp], &vs[mi]);
                    let k = -0.5 * sgn;
                    full[2 * xp] += k * dot3(&r.1, &m.0);
                    full[2 * xp + 1] += k * dot3(&r.2, &m.0);
                    full[2 * mi] += k * dot3(&m.1, &r.0);
                    full[2 * mi + 1] += k * dot3(&m.2, &r.0);
                    layout.fold(&full, out);
                };
                x = lm_minimize(&f, &g, x, 300).x;
                let c = model.value(&model.vectors(&layout.expand(&x))) - v;
                mult += rho * c;
                if c.abs() < 0.1 * CONSTRAINT_TOL {
                    break;
                }
            }
            rho *= 10.0;
        }
        restore(&model, &layout, v, &mut x);
        let full = layout.expand(&x);
        let vs = model.vectors(&full);
        ((model.value(&vs) - v).abs(), guess(&vs), full)
    };

    let jobs: Vec<(usize, usize)> = (0..2)
        .flat_map(|b| (0..opts.restarts).map(move |r| (b, r)))
        .collect();
    let runs: Vec<(usize, usize, f64, f64, Vec<f64>)> = jobs
        .par_iter()
        .map(|&(b, r)| {
            let (viol, g, x) = search(b, r);
            (b, r, viol, g, x)
        })
        .collect();

    let feasible = runs
        .iter()
        .filter(|t| t.2 <= CONSTRAINT_TOL)
        .max_by(|a, b| a.3.total_cmp(&b.3).then(b.0.cmp(&a.0)).then(b.1.cmp(&a.1)));
    let (run, flagged) = match feasible {
        Some(t) => (t, false),
        None => (
            runs.iter()
                .min_by(|a, b| a.2.total_cmp(&b.2))
                .expect("restarts > 0"),
            true,
        ),
    };
    let guessing = run.3.clamp(0.0, 1.0);
    Ok(HeuristicEntropy {
        value: v,
        entropy: if flagged {
            None
        } else {
            Some((-guessing.log2()).max(0.0))
        },
        guessing,
        outcome: run.0,
        violation: run.2,
        flagged,
        strategy: QubitStrategy::from_angles(&run.4, model.nprep),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{pn_max, pn_value, rac_witness};
    use crate::scenario::validate_pm_behavior;
    use proptest::prelude::*;

    #[test]
    fn born_rule_examples() {
        let s = QubitStrategy::new(
            vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]],
            vec![[0.0, 0.0, 1.0]],
        )
        .unwrap();
        let p = s.born_probabilities();
        assert_eq!(p.get(0, 0, 0), 1.0);
        assert!((p.get(0, 1, 0) - 0.5).abs() < 1e-15);
        assert!(QubitStrategy::new(vec![[1.0, 1.0, 0.0]], vec![[0.0, 0.0, 1.0]]).is_err());
    }

    #[test]
    fn optimal_rac2_strategy_value() {
        let w = rac_witness(2).unwrap();
        let v = w
            .evaluate(&QubitStrategy::rac2_optimal().born_probabilities())
            .unwrap();
        let expect = (std::f64::consts::PI / 8.0).cos().powi(2);
        assert!((pn_value(v, 2) - expect).abs() < 1e-12);
    }

    #[test]
    fn optimizer_finds_the_rac_maxima() {
        for n in [2, 3] {
            let w = rac_witness(n).unwrap();
            let opt = optimize_witness(&w, 20, 11).unwrap();
            assert!(
                (pn_value(opt.value, n) - pn_max(n)).abs() < 1e-5,
                "n={n}: {}",
                pn_value(opt.value, n)
            );
            let again = w.evaluate(&opt.strategy.born_probabilities()).unwrap();
            assert!((again - opt.value).abs() < 1e-9);
        }
        let zero = DimensionWitness::zero(PmScenario::new(4, 2, 2).unwrap());
        assert_eq!(optimize_witness(&zero, 3, 0).unwrap().value, 0.0);
    }

    #[test]
    fn seeded_runs_repeat_exactly() {
        let w = rac_witness(2).unwrap();
        let a = optimize_witness(&w, 5, 42).unwrap();
        let b = optimize_witness(&w, 5, 42).unwrap();
        assert_eq!(a.strategy, b.strategy);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    fn quick(restarts: usize) -> HeuristicOptions {
        HeuristicOptions {
            restarts,
            seed: 1,
            antipodal: None,
        }
    }

    #[test]
    fn antipodal_pairing_holds_in_results() {
        let w = rac_witness(2).unwrap();
        let split = InputFactorization::relative_bits(2).unwrap();
        let opts = HeuristicOptions {
            restarts: 4,
            seed: 3,
            antipodal: Some(split.clone()),
        };
        let h = heuristic_min_entropy(&w, 6.5, 0, 1, &opts).unwrap();
        let p = h.strategy.preparations();
        for x in 0..2 {
            let (u, v) = (p[split.prep(x, 0)], p[split.prep(x, 1)]);
            assert!((dot3(&u, &v) + 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn heuristic_examples() {
        let w = rac_witness(2).unwrap();
        let classical = heuristic_min_entropy(&w, 6.0, 0, 0, &quick(8)).unwrap();
        assert!(!classical.flagged);
        assert!(classical.entropy.unwrap() < 1e-6);
        let top = pn_max(2) * 8.0;
        let h = heuristic_min_entropy(&w, top, 0, 0, &quick(8)).unwrap();
        assert!(!h.flagged, "{h:?}");
        assert!(h.entropy.unwrap() >= 0.2284 - 1e-3, "{h:?}");
        let over = heuristic_min_entropy(&w, 7.5, 0, 0, &quick(4)).unwrap();
        assert!(over.flagged && over.entropy.is_none());
    }

    #[test]
    fn strategy_json_layout() {
        let s = QubitStrategy::rac2_optimal();
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v["measurements"][0], serde_json::json!([0.0, 0.0, 1.0]));
        assert_eq!(serde_json::from_value::<QubitStrategy>(v).unwrap(), s);
        let bad = serde_json::json!({"preparations": [[2.0, 0.0, 0.0]], "measurements": [[1.0, 0.0, 0.0]]});
        assert!(serde_json::from_value::<QubitStrategy>(bad).is_err());
    }

    proptest! {
        #[test]
        fn born_statistics_are_valid(angles in proptest::collection::vec(0.0f64..6.3, 12)) {
            let s = QubitStrategy::from_angles(&angles, 4);
            prop_assert!(validate_pm_behavior(&s.born_probabilities(), 1e-12).passed);
            let s2 = QubitStrategy::new(s.preparations().to_vec(), s.measurements().to_vec());
            prop_assert!(s2.is_ok());
        }

        #[test]
        fn analytic_gradient_matches_differences(angles in proptest::collection::vec(0.1f64..3.0, 12)) {
            let m = Model::new(&rac_witness(2).unwrap()).unwrap();
            let mut g = vec![0.0; 12];
            m.add_grad(&m.vectors(&angles), 1.0, &mut g);
            for j in 0..12 {
                let mut a = angles.clone();
                a[j] += 1e-6;
                let up = m.value(&m.vectors(&a));
                a[j] -= 2e-6;
                let down = m.value(&m.vectors(&a));
                prop_assert!((g[j] - (up - down) / 2e-6).abs() < 1e-6);
            }
        }
    }
}
