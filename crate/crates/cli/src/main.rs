//! `dicert`: certified randomness bounds from the command line.
//!
//! Results go to standard output (or `--out`), diagnostics to standard error.
//! Exit status: 0 on success, 1 for usage and input errors, 2 when a problem
//! is infeasible or the numerics could not be trusted.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dicert::functionals::{
    bell_to_witness, bell_to_witness_with, classical_bound, classical_bound_pm, i_alpha, pn_max,
    pn_value, rac_inequality, rac_normalization, rac_witness, w_alpha, witness_to_bell, Functional,
};
use dicert::npa::{MomentStructure, MonomialSet};
use dicert::protocols::{simulate_earac, simulate_pm};
use dicert::qubit::{
    heuristic_min_entropy, optimize_witness, HeuristicOptions, QubitStrategy, DEFAULT_RESTARTS,
};
use dicert::sdp::{
    di_min_entropy, entropy_curve, max_quantum_solution, optimal_behavior, sdi_min_entropy, sdpa,
    write_curve_csv, Backend, CurveTarget, RelaxationOptions, SdpProblem, SecurityConstraint,
    Sense,
};
use dicert::{Behavior, BellFunctional, DimensionWitness, InputFactorization};

use config::Config;

#[derive(Parser, Debug)]
#[command(
    name = "dicert",
    version,
    about = "Randomness certification for DI and SDI protocols"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Worker threads for parallel solves and restarts [default: available parallelism]
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for every randomized step [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Relaxation level: an integer k or "1+ab" [default: 2]
    #[arg(long, global = true)]
    level: Option<String>,
    /// SDP backend, "builtin" or "csdp" [default: $DICERT_SDP_BACKEND, else builtin]
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Write the result here instead of standard output
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Configuration file with key = value lines (jobs, seed, level, backend, restarts)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert between a Bell functional and a dimension witness
    Convert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = ["bell2witness", "witness2bell"])]
        direction: String,
        /// Outcome count A for the split x' = a + A x, or "relative" for bit strings
        #[arg(long)]
        factorization: Option<String>,
    },
    /// Exact classical maximum by enumerating deterministic strategies
    ClassicalBound {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Maximum of a Bell functional over the moment relaxation
    QuantumBound {
        #[arg(long = "in")]
        input: PathBuf,
        /// Pin all of Alice's marginals to uniform
        #[arg(long)]
        uniform_marginals: bool,
    },
    /// Certified DI min-entropy of the outcome pair at inputs x,y
    Entropy {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        value: f64,
        /// Inputs as x,y
        #[arg(long)]
        inputs: String,
        #[arg(long)]
        uniform_marginals: bool,
        /// Constrain the functional to be at least the value instead of equal to it
        #[arg(long)]
        at_least: bool,
    },
    /// Certified SDI min-entropy of Bob's outcome for preparation (a,x) and measurement y
    SdiEntropy {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        value: f64,
        /// Inputs as a,x,y
        #[arg(long)]
        inputs: String,
        /// Outcome count A, "relative", or "auto" (relative for 2^n preparations)
        #[arg(long, default_value = "auto")]
        factorization: String,
    },
    /// Entropy bounds on a grid of functional values, as CSV
    Curve {
        #[arg(long = "in")]
        input: PathBuf,
        /// lo:hi:steps
        #[arg(long)]
        grid: String,
        /// x,y for a Bell functional; a,x,y for a witness
        #[arg(long, default_value = "0,0")]
        inputs: String,
        #[arg(long, default_value = "auto")]
        factorization: String,
        #[arg(long)]
        uniform_marginals: bool,
    },
    /// Reproduce the random-access-code min-entropy table
    Table1 {
        /// Also compute n = 4 and n = 5 (minutes each)
        #[arg(long)]
        extended: bool,
    },
    /// The n -> 1 random access code inequality (or witness)
    Rac {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        witness: bool,
    },
    /// The two-setting family I_alpha
    Ialpha {
        #[arg(long)]
        alpha: f64,
    },
    /// The witness W_alpha converted from I_alpha
    Walpha {
        #[arg(long)]
        alpha: f64,
    },
    /// Monte-Carlo simulation of the protocols
    #[command(subcommand)]
    Simulate(Simulate),
    /// Write the relaxation as a sparse SDPA file (--out is required)
    ExportSdpa {
        #[arg(long = "in")]
        input: PathBuf,
        /// Export the guessing problem at this value instead of the maximization
        #[arg(long)]
        value: Option<f64>,
        #[arg(long, default_value = "0,0")]
        inputs: String,
        /// Outcome pair a,b whose probability is maximized
        #[arg(long, default_value = "0,0")]
        outcomes: String,
        #[arg(long)]
        uniform_marginals: bool,
    },
    /// Maximize a witness over qubit strategies by local search
    OptimizeQubit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Heuristic qubit search for the most predictable outcome at a witness value
    HeuristicEntropy {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        value: f64,
        /// Inputs as a,x,y
        #[arg(long)]
        inputs: String,
        #[arg(long)]
        restarts: Option<usize>,
        /// Prepare paired states (x,0), (x,1) as antipodal Bloch vectors
        #[arg(long)]
        antipodal: bool,
        #[arg(long, default_value = "auto")]
        factorization: String,
    },
}

#[derive(Subcommand, Debug)]
enum Simulate {
    /// Prepare-and-measure rounds of a qubit strategy
    Pm {
        /// Strategy JSON
        #[arg(long)]
        strategy: PathBuf,
        /// Witness to estimate; defaults to the access-code witness when the shape fits
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 1_000_000)]
        rounds: u64,
        #[arg(long, default_value_t = 1.0)]
        estimation_fraction: f64,
        /// Write every round as newline-delimited JSON
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Entanglement-assisted random access code rounds
    Earac {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1_000_000)]
        rounds: u64,
        /// Behavior JSON for the shared box; defaults to the relaxation optimum of I_n
        #[arg(long = "box")]
        box_: Option<PathBuf>,
    },
}

/// Marks failures that map to exit status 2.
#[derive(Debug)]
struct Numerics(String);

impl std::fmt::Display for Numerics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Numerics {}

struct Settings {
    seed: u64,
    level: MonomialSet,
    backend: Backend,
    restarts: usize,
    out: Option<PathBuf>,
}

impl Settings {
    fn resolve(g: &Global) -> Result<Self> {
        let cfg = match &g.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(j) = g.jobs.or(cfg.jobs) {
            if j == 0 {
                bail!("--jobs must be at least 1");
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build_global()
                .context("starting the thread pool")?;
        }
        let level = match g.level.as_ref().or(cfg.level.as_ref()) {
            Some(l) => l.parse()?,
            None => MonomialSet::Level(2),
        };
        let backend = match g.backend.as_ref().or(cfg.backend.as_ref()) {
            Some(b) => b.parse()?,
            None => Backend::from_env()?,
        };
        Ok(Self {
            seed: g.seed.or(cfg.seed).unwrap_or(0),
            level,
            backend,
            restarts: cfg.restarts.unwrap_or(DEFAULT_RESTARTS),
            out: g.out.clone(),
        })
    }

    fn relaxation(&self) -> RelaxationOptions {
        RelaxationOptions {
            backend: self.backend,
            ..RelaxationOptions::default()
        }
        .with_monomials(self.level)
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
            None => {
                let mut o = std::io::stdout().lock();
                o.write_all(text.as_bytes())?;
                Ok(o.flush()?)
            }
        }
    }

    fn emit_json(&self, v: &impl Serialize) -> Result<()> {
        self.emit(&(serde_json::to_string_pretty(v)? + "\n"))
    }
}

fn read_functional(path: &Path) -> Result<Functional> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a functional", path.display()))
}

fn read_bell(path: &Path) -> Result<BellFunctional> {
    match read_functional(path)? {
        Functional::Bell(f) => Ok(f),
        Functional::Witness(_) => bail!(
            "{} holds a witness; a Bell functional is needed here",
            path.display()
        ),
    }
}

fn read_witness(path: &Path) -> Result<DimensionWitness> {
    match read_functional(path)? {
        Functional::Witness(w) => Ok(w),
        Functional::Bell(_) => bail!(
            "{} holds a Bell functional; a witness is needed here",
            path.display()
        ),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn parse_indices(text: &str, count: usize, what: &str) -> Result<Vec<usize>> {
    let v: Vec<usize> = text
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| anyhow!("{what} must be {count} comma-separated indices, got '{text}'"))?;
    if v.len() != count {
        bail!("{what} must be {count} comma-separated indices, got '{text}'");
    }
    Ok(v)
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || anyhow!("grid must be lo:hi:steps, got '{text}'");
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if steps == 0 || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect())
}

/// "relative", an outcome count, or "auto": relative bits for `2^n`
/// preparations (n >= 2), otherwise the smallest divisor.
fn parse_factorization(text: &str, nprep: usize) -> Result<InputFactorization> {
    let bits = (nprep.is_power_of_two() && nprep >= 4).then(|| nprep.trailing_zeros() as usize);
    Ok(match text.trim() {
        "relative" => InputFactorization::relative_bits(
            bits.ok_or_else(|| anyhow!("relative split needs 2^n preparations, got {nprep}"))?,
        )?,
        "auto" => match bits {
            Some(n) => InputFactorization::relative_bits(n)?,
            None => InputFactorization::canonical_default(nprep)?,
        },
        a => InputFactorization::canonical(
            nprep,
            a.parse().map_err(|_| {
                anyhow!("factorization must be an outcome count, 'relative' or 'auto'")
            })?,
        )?,
    })
}

/// Maps library errors that mean "no trustworthy answer" to exit status 2.
fn numerics(e: dicert::Error) -> anyhow::Error {
    match e {
        dicert::Error::Infeasible(_) | dicert::Error::Numerical(_) => {
            Numerics(e.to_string()).into()
        }
        other => other.into(),
    }
}

#[derive(Serialize)]
struct QuantumBoundReport {
    value: f64,
    objective: f64,
    bound: f64,
    status: dicert::sdp::SolveStatus,
    relaxation: String,
    iterations: usize,
    rel_gap: f64,
}

#[derive(Serialize)]
struct SimulationReport {
    rounds: u64,
    estimation_rounds: u64,
    /// Estimation-round counts indexed `[x'][y][b]`.
    counts: Vec<Vec<Vec<u64>>>,
    frequencies: dicert::PmBehavior,
    estimate: Option<dicert::protocols::Estimate>,
}

#[derive(Serialize)]
struct EaracSummary {
    #[serde(flatten)]
    report: dicert::protocols::EaracReport,
    expected: f64,
}

fn run(cli: Cli) -> Result<()> {
    let st = Settings::resolve(&cli.global)?;
    match cli.command {
        Command::Convert {
            input,
            direction,
            factorization,
        } => {
            let out: Functional = match (direction.as_str(), read_functional(&input)?) {
                ("bell2witness", Functional::Bell(f)) => match factorization {
                    None => bell_to_witness(&f).into(),
                    Some(t) => {
                        let split = parse_factorization(&t, f.scenario().nx * f.scenario().na)?;
                        bell_to_witness_with(&f, &split)?.into()
                    }
                },
                ("witness2bell", Functional::Witness(w)) => {
                    let nprep = w.scenario().nprep;
                    let split = match factorization {
                        None => InputFactorization::canonical_default(nprep)?,
                        Some(t) => parse_factorization(&t, nprep)?,
                    };
                    witness_to_bell(&w, &split)?.into()
                }
                (d, _) => bail!("input kind does not match --direction {d}"),
            };
            st.emit_json(&out)
        }
        Command::ClassicalBound { input } => match read_functional(&input)? {
            Functional::Bell(f) => st.emit_json(&classical_bound(&f)?),
            Functional::Witness(w) => st.emit_json(&classical_bound_pm(&w)?),
        },
        Command::QuantumBound {
            input,
            uniform_marginals,
        } => {
            let f = read_bell(&input)?;
            let opts = st.relaxation().with_uniform_marginals(uniform_marginals);
            let sol = max_quantum_solution(&f, &opts).map_err(numerics)?;
            st.emit_json(&QuantumBoundReport {
                value: sol.certified(),
                objective: sol.value,
                bound: sol.bound,
                status: sol.status,
                relaxation: st.level.to_string(),
                iterations: sol.iterations,
                rel_gap: sol.rel_gap,
            })
        }
        Command::Entropy {
            input,
            value,
            inputs,
            uniform_marginals,
            at_least,
        } => {
            let f = read_bell(&input)?;
            let xy = parse_indices(&inputs, 2, "--inputs")?;
            let mut opts = st.relaxation().with_uniform_marginals(uniform_marginals);
            if at_least {
                opts = opts.with_constraint(SecurityConstraint::AtLeast);
            }
            let p = di_min_entropy(&f, value, xy[0], xy[1], &opts).map_err(numerics)?;
            st.emit_json(&p)
        }
        Command::SdiEntropy {
            input,
            value,
            inputs,
            factorization,
        } => {
            let w = read_witness(&input)?;
            let split = parse_factorization(&factorization, w.scenario().nprep)?;
            let axy = parse_indices(&inputs, 3, "--inputs")?;
            let xp = prep_index(&split, axy[0], axy[1])?;
            let p = sdi_min_entropy(&w, value, xp, axy[2], &split, &st.relaxation())
                .map_err(numerics)?;
            st.emit_json(&p)
        }
        Command::Curve {
            input,
            grid,
            inputs,
            factorization,
            uniform_marginals,
        } => {
            let values = parse_grid(&grid)?;
            let opts = st.relaxation().with_uniform_marginals(uniform_marginals);
            let points = match read_functional(&input)? {
                Functional::Bell(f) => {
                    let xy = parse_indices(&inputs, 2, "--inputs")?;
                    entropy_curve(
                        CurveTarget::Bell {
                            f: &f,
                            x: xy[0],
                            y: xy[1],
                        },
                        &values,
                        &opts,
                    )
                }
                Functional::Witness(w) => {
                    let split = parse_factorization(&factorization, w.scenario().nprep)?;
                    let axy = parse_indices(&inputs, 3, "--inputs")?;
                    let xp = prep_index(&split, axy[0], axy[1])?;
                    entropy_curve(
                        CurveTarget::Witness {
                            w: &w,
                            split: &split,
                            xp,
                            y: axy[2],
                        },
                        &values,
                        &opts,
                    )
                }
            };
            for (v, r) in &points {
                if let Err(e) = r {
                    log::warn!("value {v}: {e}");
                }
            }
            let mut buf = Vec::new();
            write_curve_csv(&points, &mut buf)?;
            st.emit(&String::from_utf8(buf)?)
        }
        Command::Table1 { extended } => table1(&st, extended),
        Command::Rac { n, witness } => {
            let f: Functional = if witness {
                rac_witness(n)?.into()
            } else {
                rac_inequality(n)?.into()
            };
            st.emit_json(&f)
        }
        Command::Ialpha { alpha } => st.emit_json(&Functional::from(i_alpha(alpha)?)),
        Command::Walpha { alpha } => st.emit_json(&Functional::from(w_alpha(alpha)?)),
        Command::Simulate(Simulate::Pm {
            strategy,
            input,
            rounds,
            estimation_fraction,
            log,
        }) => {
            let s: QubitStrategy = read_json(&strategy)?;
            let witness = match input {
                Some(p) => Some(read_witness(&p)?),
                None => default_rac_witness(&s),
            };
            let rl = simulate_pm(&s, rounds, estimation_fraction, st.seed, log.is_some())?;
            if let Some(p) = log {
                let f = std::fs::File::create(&p)
                    .with_context(|| format!("creating {}", p.display()))?;
                rl.write_ndjson(std::io::BufWriter::new(f))?;
            }
            let estimate = match &witness {
                Some(w) => rl.estimate(w)?,
                None => None,
            };
            st.emit_json(&SimulationReport {
                rounds,
                estimation_rounds: rl.estimation_rounds,
                frequencies: rl.frequencies(),
                counts: nested_counts(&rl),
                estimate,
            })
        }
        Command::Simulate(Simulate::Earac { n, rounds, box_ }) => {
            let f = rac_inequality(n)?;
            let beh: Behavior = match box_ {
                Some(p) => read_json(&p)?,
                None => optimal_behavior(&f, &st.relaxation()).map_err(numerics)?,
            };
            let expected = pn_value(f.evaluate(&beh)?, n);
            let report = simulate_earac(&beh, n, rounds, st.seed)?;
            st.emit_json(&EaracSummary { report, expected })
        }
        Command::ExportSdpa {
            input,
            value,
            inputs,
            outcomes,
            uniform_marginals,
        } => {
            let path = st
                .out
                .clone()
                .ok_or_else(|| anyhow!("export-sdpa needs --out"))?;
            let f = read_bell(&input)?;
            let ms = MomentStructure::new(*f.scenario(), st.level)?;
            let expr = ms.functional(&f)?;
            let mut p = SdpProblem::from_moments(&ms, Default::default(), Sense::Maximize);
            if uniform_marginals {
                for (e, rhs) in ms.uniform_marginal_constraints() {
                    p.add_equality(e, rhs);
                }
            }
            match value {
                None => p.objective = expr,
                Some(v) => {
                    let xy = parse_indices(&inputs, 2, "--inputs")?;
                    let ab = parse_indices(&outcomes, 2, "--outcomes")?;
                    let s = f.scenario();
                    if xy[0] >= s.nx || xy[1] >= s.ny || ab[0] >= s.na || ab[1] >= s.nb {
                        bail!("inputs or outcomes outside the scenario");
                    }
                    p.add_equality(expr, v);
                    p.objective = ms.joint(ab[0], ab[1], xy[0], xy[1]).clone();
                }
            }
            sdpa::export_sdpa(&p, &path).map_err(numerics)?;
            log::info!("wrote {}", path.display());
            Ok(())
        }
        Command::OptimizeQubit { input, restarts } => {
            let w = read_witness(&input)?;
            let opt = optimize_witness(&w, restarts.unwrap_or(st.restarts), st.seed)?;
            st.emit_json(&opt)
        }
        Command::HeuristicEntropy {
            input,
            value,
            inputs,
            restarts,
            antipodal,
            factorization,
        } => {
            let w = read_witness(&input)?;
            let split = parse_factorization(&factorization, w.scenario().nprep)?;
            let axy = parse_indices(&inputs, 3, "--inputs")?;
            let xp = prep_index(&split, axy[0], axy[1])?;
            let opts = HeuristicOptions {
                restarts: restarts.unwrap_or(st.restarts),
                seed: st.seed,
                antipodal: antipodal.then_some(split),
            };
            let h = heuristic_min_entropy(&w, value, xp, axy[2], &opts)?;
            st.emit_json(&h)?;
            if h.flagged {
                return Err(Numerics(format!(
                    "witness constraint violated by {:.2e}",
                    h.violation
                ))
                .into());
            }
            Ok(())
        }
    }
}

fn prep_index(split: &InputFactorization, a: usize, x: usize) -> Result<usize> {
    if a >= split.outcomes() || x >= split.settings() {
        bail!(
            "(a, x) = ({a}, {x}) outside {} outcomes x {} settings",
            split.outcomes(),
            split.settings()
        );
    }
    Ok(split.prep(x, a))
}

fn nested_counts(rl: &dicert::protocols::RoundLog) -> Vec<Vec<Vec<u64>>> {
    let pm = rl.scenario;
    (0..pm.nprep)
        .map(|xp| {
            (0..pm.ny)
                .map(|y| (0..pm.nb).map(|b| rl.counts[pm.index(b, xp, y)]).collect())
                .collect()
        })
        .collect()
}

fn default_rac_witness(s: &QubitStrategy) -> Option<DimensionWitness> {
    let pm = s.scenario();
    let n = pm.ny;
    (n >= 2 && n < usize::BITS as usize && pm.nprep == 1 << n)
        .then(|| rac_witness(n).ok())
        .flatten()
}

/// Published bounds for the n -> 1 codes. The SDI entries for n >= 4 belong to
/// a different protocol family and are printed for comparison only.
const REFERENCE_ROWS: [(usize, f64, f64); 4] = [
    (2, 1.2284, 0.2284),
    (3, 1.3421, 0.3425),
    (4, 1.4126, 0.1388),
    (5, 1.4652, 0.1024),
];

fn table1(st: &Settings, extended: bool) -> Result<()> {
    let rows = if extended {
        &REFERENCE_ROWS[..]
    } else {
        &REFERENCE_ROWS[..2]
    };
    let mut text = String::from("n  relaxation  P_n       DI(ref)    DI        SDI(ref)    SDI\n");
    let mut failed = None;
    for &(n, di_ref, sdi_ref) in rows {
        // the full second level for n = 5 does not fit in memory; see README
        let level = if n >= 5 {
            MonomialSet::OnePlusAb
        } else {
            st.level
        };
        let opts = st.relaxation().with_monomials(level);
        let f = rac_inequality(n)?;
        let w = rac_witness(n)?;
        let split = InputFactorization::relative_bits(n)?;
        let mut values = vec![pn_max(n)];
        if extended && n >= 4 {
            let top = pn_value(
                max_quantum_solution(&f, &opts)
                    .map_err(numerics)?
                    .certified(),
                n,
            );
            if (top - pn_max(n)).abs() > 1e-6 {
                values.push(top);
            }
        }
        for p in values {
            let v = p * rac_normalization(n);
            let di = di_min_entropy(&f, v, 0, 0, &opts);
            let sdi = sdi_min_entropy(&w, v, split.prep(0, 0), 0, &split, &opts);
            let show = |r: &dicert::Result<dicert::sdp::EntropyPoint>| match r {
                Ok(p) => format!("{:.4}", p.bound),
                Err(e) => {
                    log::error!("n={n}: {e}");
                    "failed".to_string()
                }
            };
            text += &format!(
                "{n}  {:<10}  {p:.6}  {di_ref:<9.4}  {:<8}  {sdi_ref:<10.4}  {}\n",
                level.to_string().trim_start_matches("level "),
                show(&di),
                show(&sdi)
            );
            if let Err(e) = di.and(sdi) {
                failed.get_or_insert(e);
            }
            log::info!("finished n={n} at P_n={p:.6}");
        }
    }
    st.emit(&text)?;
    match failed {
        Some(e) => Err(numerics(e)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<Numerics>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_include_both_ends() {
        assert_eq!(parse_grid("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("2:5:1").unwrap(), vec![2.0]);
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("0:1:0").is_err());
    }

    #[test]
    fn index_lists_have_fixed_length() {
        assert_eq!(parse_indices("1, 0", 2, "x").unwrap(), vec![1, 0]);
        assert!(parse_indices("1,0,0", 2, "x").is_err());
        assert!(parse_indices("a,0", 2, "x").is_err());
    }

    #[test]
    fn auto_factorization_prefers_relative_bits() {
        assert_eq!(
            parse_factorization("auto", 8).unwrap(),
            InputFactorization::relative_bits(3).unwrap()
        );
        assert_eq!(
            parse_factorization("auto", 6).unwrap(),
            InputFactorization::canonical(6, 2).unwrap()
        );
        assert_eq!(
            parse_factorization("3", 6).unwrap(),
            InputFactorization::canonical(6, 3).unwrap()
        );
        assert!(parse_factorization("relative", 6).is_err());
    }
}
