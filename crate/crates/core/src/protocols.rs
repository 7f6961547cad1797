//! Round-by-round simulation of prepare-and-measure protocols and of the
//! entanglement-assisted random access code.
//!
//! Rounds are simulated in batches of [`BATCH_ROUNDS`]. Batch `k` draws from
//! ChaCha8 seeded with the master seed on stream `k`, so results do not depend
//! on how batches are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::DimensionWitness;
use crate::qubit::QubitStrategy;
use crate::scenario::{Behavior, PmBehavior, PmScenario};

pub const BATCH_ROUNDS: u64 = 65_536;

fn batch_rng(seed: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    rng
}

fn batches(rounds: u64) -> Vec<(u64, u64)> {
    (0..rounds.div_ceil(BATCH_ROUNDS))
        .map(|k| (k, BATCH_ROUNDS.min(rounds - k * BATCH_ROUNDS)))
        .collect()
}

fn sample_index(rng: &mut ChaCha8Rng, weights: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// One prepare-and-measure round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PmRound {
    pub round: u64,
    pub xp: usize,
    pub y: usize,
    pub b: usize,
    pub estimation: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundLog {
    pub scenario: PmScenario,
    pub rounds: Vec<PmRound>,
    /// Outcome counts of estimation rounds, indexed like the behavior table.
    pub counts: Vec<u64>,
    pub estimation_rounds: u64,
}

impl RoundLog {
    /// Empirical `P(b|x',y)`; cells without samples are filled uniformly.
    pub fn frequencies(&self) -> PmBehavior {
        let pm = self.scenario;
        PmBehavior::from_fn(pm, |b, xp, y| {
            let total: u64 = (0..pm.nb).map(|bb| self.counts[pm.index(bb, xp, y)]).sum();
            if total == 0 {
                1.0 / pm.nb as f64
            } else {
                self.counts[pm.index(b, xp, y)] as f64 / total as f64
            }
        })
    }

    /// Rounds as newline-delimited JSON.
    pub fn write_ndjson(&self, mut out: impl std::io::Write) -> Result<()> {
        for r in &self.rounds {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Estimate of the witness with inputs drawn uniformly, and its standard
    /// error. `None` without estimation rounds.
    pub fn estimate(&self, w: &DimensionWitness) -> Result<Option<Estimate>> {
        if w.scenario() != &self.scenario {
            return Err(Error::Shape(
                "witness and log use different scenarios".into(),
            ));
        }
        if self.estimation_rounds == 0 {
            return Ok(None);
        }
        // Each round contributes the score K * beta[b,x',y] for K input pairs.
        let pm = self.scenario;
        let k = (pm.nprep * pm.ny) as f64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for idx in 0..self.counts.len() {
            let c = self.counts[idx] as f64;
            let score = k * w.coeffs()[idx];
            s1 += c * score;
            s2 += c * score * score;
        }
        let n = self.estimation_rounds as f64;
        let mean = s1 / n;
        let var = (s2 / n - mean * mean).max(0.0);
        Ok(Some(Estimate {
            value: mean,
            std_error: (var / n).sqrt(),
            samples: self.estimation_rounds,
        }))
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
}

/// Simulates `rounds` rounds of a qubit strategy with uniformly random inputs.
/// Each round is an estimation round with probability `estimation_fraction`.
/// Per-round records are kept when `keep_rounds` is set.
pub fn simulate_pm(
    strategy: &QubitStrategy,
    rounds: u64,
    estimation_fraction: f64,
    seed: u64,
    keep_rounds: bool,
) -> Result<RoundLog> {
    if rounds == 0 {
        return Err(Error::InvalidArgument(
            "at least one round is needed".into(),
        ));
    }
    if !(0.0..=1.0).contains(&estimation_fraction) {
        return Err(Error::InvalidArgument(format!(
            "estimation fraction {estimation_fraction} outside [0, 1]"
        )));
    }
    let beh = strategy.born_probabilities();
    let pm = *beh.scenario();
    let parts: Vec<(Vec<u64>, u64, Vec<PmRound>)> = batches(rounds)
        .into_par_iter()
        .map(|(k, len)| {
            let mut rng = batch_rng(seed, k);
            let mut counts = vec![0u64; pm.table_len()];
            let mut est = 0;
            let mut log = Vec::new();
            for i in 0..len {
                let xp = rng.random_range(0..pm.nprep);
                let y = rng.random_range(0..pm.ny);
                let b = sample_index(&mut rng, (0..pm.nb).map(|b| beh.get(b, xp, y)));
                let estimation = rng.random::<f64>() < estimation_fraction;
                if estimation {
                    counts[pm.index(b, xp, y)] += 1;
                    est += 1;
                }
                if keep_rounds {
                    log.push(PmRound {
                        round: k * BATCH_ROUNDS + i,
                        xp,
                        y,
                        b,
                        estimation,
                    });
                }
            }
            (counts, est, log)
        })
        .collect();
    let mut counts = vec![0u64; pm.table_len()];
    let mut est = 0;
    let mut log = Vec::new();
    for (c, e, l) in parts {
        counts.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        est += e;
        log.extend(l);
    }
    Ok(RoundLog {
        scenario: pm,
        rounds: log,
        counts,
        estimation_rounds: est,
    })
}

/// Outcome of one entanglement-assisted random access code round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EaracRound {
    /// The bit Alice sends.
    pub message: usize,
    /// Bob's guess for `c_y`.
    pub decoded: usize,
    pub target: usize,
    pub correct: bool,
}

/// Alice holds `n` bits `c`, Bob wants `c_y`. Alice feeds `x` with bits
/// `c_i XOR c_0` (i >= 1) into her box, gets `a` and sends `m = a XOR c_0`;
/// Bob feeds `y`, gets `b` and outputs `b XOR m`.
pub fn earac_round(
    box_: &Behavior,
    c: &[usize],
    y: usize,
    rng: &mut impl Rng,
) -> Result<EaracRound> {
    let s = *box_.scenario();
    let n = c.len();
    if s.na != 2 || s.nb != 2 || s.ny != n || s.nx != 1 << (n - 1) {
        return Err(Error::Shape(format!(
            "box {s:?} does not fit an {n}-bit access code"
        )));
    }
    if y >= n || c.iter().any(|&b| b > 1) {
        return Err(Error::InvalidArgument("bits must be 0/1 and y < n".into()));
    }
    let x = (1..n).map(|i| (c[i] ^ c[0]) << (i - 1)).sum::<usize>();
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut ab = (1, 1);
    'outer: for a in 0..2 {
        for b in 0..2 {
            acc += box_.get(a, b, x, y);
            if u < acc {
                ab = (a, b);
                break 'outer;
            }
        }
    }
    let (a, b) = ab;
    let message = a ^ c[0];
    let decoded = b ^ message;
    Ok(EaracRound {
        message,
        decoded,
        target: c[y],
        correct: decoded == c[y],
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EaracReport {
    pub rounds: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub std_error: f64,
}

/// Runs the code with uniformly random `c` and `y`.
pub fn simulate_earac(box_: &Behavior, n: usize, rounds: u64, seed: u64) -> Result<EaracReport> {
    if rounds == 0 {
        return Err(Error::InvalidArgument(
            "at least one round is needed".into(),
        ));
    }
    if !(2..=20).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "access codes need 2 <= n <= 20, got {n}"
        )));
    }
    let wins: Result<Vec<u64>> = batches(rounds)
        .into_par_iter()
        .map(|(k, len)| {
            let mut rng = batch_rng(seed, k);
            let mut wins = 0;
            let mut c = vec![0usize; n];
            for _ in 0..len {
                c.iter_mut().for_each(|b| *b = rng.random_range(0..2));
                let y = rng.random_range(0..n);
                if earac_round(box_, &c, y, &mut rng)?.correct {
                    wins += 1;
                }
            }
            Ok(wins)
        })
        .collect();
    let successes: u64 = wins?.iter().sum();
    let p = successes as f64 / rounds as f64;
    Ok(EaracReport {
        rounds,
        successes,
        success_rate: p,
        std_error: (p * (1.0 - p) / rounds as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{pn_value, rac_inequality, rac_witness};
    use crate::scenario::{validate_pm_behavior, Scenario};

    #[test]
    fn optimal_strategy_estimates_its_value() {
        let w = rac_witness(2).unwrap();
        let s = QubitStrategy::rac2_optimal();
        let exact = w.evaluate(&s.born_probabilities()).unwrap();
        let log = simulate_pm(&s, 200_000, 1.0, 5, false).unwrap();
        let est = log.estimate(&w).unwrap().unwrap();
        assert!(
            (est.value - exact).abs() < 3.0 * est.std_error,
            "{est:?} vs {exact}"
        );
        assert!(validate_pm_behavior(&log.frequencies(), 1e-12).passed);
    }

    #[test]
    fn aligned_strategy_is_deterministic() {
        let s = QubitStrategy::new(vec![[0.0, 0.0, 1.0]; 2], vec![[0.0, 0.0, 1.0]]).unwrap();
        let log = simulate_pm(&s, 1000, 1.0, 0, true).unwrap();
        assert!(log.rounds.iter().all(|r| r.b == 0));
        assert_eq!(log.frequencies().get(0, 1, 0), 1.0);
    }

    #[test]
    fn no_estimation_rounds_means_no_estimate() {
        let log = simulate_pm(&QubitStrategy::rac2_optimal(), 500, 0.0, 0, true).unwrap();
        assert_eq!(log.estimation_rounds, 0);
        assert!(log.estimate(&rac_witness(2).unwrap()).unwrap().is_none());
        assert!(log.rounds.iter().all(|r| !r.estimation));
        let mut buf = Vec::new();
        log.write_ndjson(&mut buf).unwrap();
        assert_eq!(buf.iter().filter(|&&c| c == b'\n').count(), 500);
    }

    #[test]
    fn seeded_simulations_repeat() {
        let s = QubitStrategy::rac2_optimal();
        let a = simulate_pm(&s, 150_000, 0.3, 9, false).unwrap();
        let b = simulate_pm(&s, 150_000, 0.3, 9, false).unwrap();
        assert_eq!(a.counts, b.counts);
    }

    #[test]
    fn perfect_box_always_decodes() {
        // b = a XOR x_y, with x_0 = 0: then b XOR m = c_y
        let s = Scenario::new(4, 2, 3, 2).unwrap();
        let perfect = Behavior::from_fn(s, |a, b, x, y| {
            let t = if y == 0 { 0 } else { (x >> (y - 1)) & 1 };
            if b == a ^ t {
                0.5
            } else {
                0.0
            }
        });
        assert_eq!(
            pn_value(rac_inequality(3).unwrap().evaluate(&perfect).unwrap(), 3),
            1.0
        );
        let mut rng = batch_rng(0, 0);
        for bits in 0..8usize {
            let c: Vec<usize> = (0..3).map(|i| (bits >> i) & 1).collect();
            for y in 0..3 {
                assert!(earac_round(&perfect, &c, y, &mut rng).unwrap().correct);
            }
        }
        let rep = simulate_earac(&Behavior::uniform(s), 3, 100_000, 1).unwrap();
        assert!((rep.success_rate - 0.5).abs() < 3.0 * rep.std_error + 1e-12);
    }
}
