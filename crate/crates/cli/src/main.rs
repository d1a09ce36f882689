use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::exit;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use qbfmp::bench::{self, SweepSpec};
use qbfmp::decimation::{prove_unsat, ProverMethod};
use qbfmp::gen::{clauses_for, gen_lk, gen_model_b, LkSpec, ModelBSpec};
use qbfmp::heuristics::Heuristic;
use qbfmp::qdpll::{qdpll_solve_timeout, QbfStatus};
use qbfmp::sp::DEFAULT_EPS_TRIVIAL;
use qbfmp::{
    bp_marginals, bp_run, is_nontrivial, parse_qdimacs, sat_solve, sp_marginals, sp_run, to_two_alternation,
    write_qdimacs, BpParams64, FactorGraph, QbfFormula, SatResult,
};

const EXIT_SAT: i32 = 10;
const EXIT_UNSAT: i32 = 20;

#[derive(Parser)]
#[command(name = "qbfmp", version, about = "Message passing and QDPLL for quantified Boolean formulas")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Lk,
    ModelB,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatsFormat {
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Bp,
    Sp,
}

#[derive(clap::Args)]
struct BpArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum message-passing sweeps.
    #[arg(long, default_value_t = 300)]
    tmax: usize,
    #[arg(long, default_value_t = 1e-7)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
}

impl BpArgs {
    fn params(&self) -> Result<BpParams64> {
        if !(0.0..1.0).contains(&self.damping) || self.epsilon <= 0.0 {
            bail!("damping must lie in [0, 1) and epsilon be positive");
        }
        Ok(BpParams64 {
            t_max: self.tmax,
            epsilon: self.epsilon,
            damping: self.damping,
            seed: self.seed,
        })
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a random instance as QDIMACS.
    Generate {
        #[arg(long, value_enum, default_value = "lk")]
        model: Model,
        #[arg(long = "L", default_value_t = 1)]
        l: usize,
        #[arg(long = "K", default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        nu: usize,
        #[arg(long, default_value_t = 10)]
        ne: usize,
        /// Model B alternations.
        #[arg(long, default_value_t = 4)]
        t: usize,
        /// Model B variables per block.
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Model B universal literals per clause.
        #[arg(long = "U", default_value_t = 1)]
        u: usize,
        /// Model B existential literals per clause.
        #[arg(long = "V", default_value_t = 3)]
        v: usize,
        /// Clauses per existential variable (per block variable for model B).
        #[arg(long, conflicts_with = "m")]
        alpha: Option<f64>,
        /// Clause count.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Decide a QDIMACS file. Exit code 10 sat, 20 unsat, 0 unknown.
    Solve {
        file: PathBuf,
        #[arg(long, default_value = "vsids")]
        heuristic: Heuristic,
        /// Seconds.
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long, value_enum)]
        stats: Option<StatsFormat>,
        /// Report wall_time as 0 so the stats line is reproducible.
        #[arg(long)]
        no_wall_time: bool,
        #[command(flatten)]
        bp: BpArgs,
    },
    /// Try to prove a forall-exists QDIMACS file false. Exit 20 when proved, 0 otherwise.
    ProveUnsat {
        file: PathBuf,
        #[arg(long, default_value = "bpdu")]
        method: ProverMethod,
        #[command(flatten)]
        bp: BpArgs,
    },
    /// Decide a DIMACS CNF file. Exit code 10 sat, 20 unsat.
    Sat {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a sweep described by a TOML file; worker count from QBFMP_WORKERS.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Overrides QBFMP_WORKERS.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Dump BP or SP marginals as CSV.
    Marginals {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "bp")]
        kind: Kind,
        #[command(flatten)]
        bp: BpArgs,
    },
    /// Dump a decision order as CSV.
    Order {
        file: PathBuf,
        #[arg(long, default_value = "bph")]
        heuristic: Heuristic,
        #[command(flatten)]
        bp: BpArgs,
    },
    /// Move all universal blocks to the front (a sound unsat relaxation).
    Transform {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn read_formula(path: &Path) -> Result<QbfFormula> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_qdimacs(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(io::stdout().lock().write_all(text.as_bytes())?),
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Generate {
            model,
            l,
            k,
            nu,
            ne,
            t,
            n,
            u,
            v,
            alpha,
            m,
            seed,
            output,
        } => {
            let per = match model {
                Model::Lk => ne,
                Model::ModelB => n,
            };
            let m = match (m, alpha) {
                (Some(m), _) => m,
                (None, Some(a)) if a >= 0.0 && a.is_finite() => clauses_for(a, per),
                (None, Some(_)) => bail!("alpha must be finite and non-negative"),
                (None, None) => bail!("one of --alpha or --m is required"),
            };
            let f = match model {
                Model::Lk => gen_lk(&LkSpec { l, k, nu, ne, m, seed })?,
                Model::ModelB => gen_model_b(&ModelBSpec { t, n, u, v, m, seed })?,
            };
            emit(output.as_deref(), &write_qdimacs(&f))?;
            Ok(0)
        }
        Cmd::Solve {
            file,
            heuristic,
            timeout,
            stats,
            no_wall_time,
            bp,
        } => {
            let f = read_formula(&file)?;
            let p = bp.params()?;
            let limit = match timeout {
                Some(t) if t > 0.0 && t.is_finite() => Duration::from_secs_f64(t),
                Some(_) => bail!("timeout must be positive"),
                None => Duration::MAX / 4,
            };
            let start = Instant::now();
            let mut brancher = heuristic.brancher(&f, &p);
            let (status, mut st) = qdpll_solve_timeout(&f, &mut brancher, limit);
            st.wall_time = if no_wall_time { 0.0 } else { start.elapsed().as_secs_f64() };
            let name = status.map_or("unknown", QbfStatus::as_str);
            match stats {
                Some(StatsFormat::Csv) => print!("{}", bench::stats_csv(name, &st)),
                None => println!("s {name}"),
            }
            Ok(match status {
                Some(QbfStatus::Sat) => EXIT_SAT,
                Some(QbfStatus::Unsat) => EXIT_UNSAT,
                None => 0,
            })
        }
        Cmd::ProveUnsat { file, method, bp } => {
            let f = read_formula(&file)?;
            let attempt = prove_unsat(&f, method, &bp.params()?)?;
            println!("s {}", attempt.outcome.as_str());
            let lits: Vec<String> = attempt
                .universal_witness
                .to_lits()
                .iter()
                .map(|l| l.to_dimacs().to_string())
                .collect();
            println!("v {} 0", lits.join(" "));
            Ok(if attempt.outcome.is_unsat() { EXIT_UNSAT } else { 0 })
        }
        Cmd::Sat { file, seed } => {
            let f = read_formula(&file)?;
            if f.num_universal() > 0 {
                bail!("{} has universal variables; use `solve`", file.display());
            }
            let result = if seed == 0 {
                sat_solve(f.matrix())
            } else {
                qbfmp::sat::SatSolver::new(f.matrix(), seed).solve()
            };
            match result {
                SatResult::Sat(model) => {
                    println!("s SATISFIABLE");
                    let lits: Vec<String> = model.to_lits().iter().map(|l| l.to_dimacs().to_string()).collect();
                    println!("v {} 0", lits.join(" "));
                    Ok(EXIT_SAT)
                }
                SatResult::Unsat => {
                    println!("s UNSATISFIABLE");
                    Ok(EXIT_UNSAT)
                }
            }
        }
        Cmd::Bench { spec, output, workers } => {
            let text = fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let spec = SweepSpec::from_toml(&text)?;
            let rows = bench::run_sweep_with(&spec, &output, workers.or_else(bench::workers_from_env))?;
            eprintln!(
                "{} summary rows written to {}",
                rows.len(),
                output.join(bench::SUMMARY_FILE).display()
            );
            Ok(0)
        }
        Cmd::Marginals { file, kind, bp } => {
            let f = read_formula(&file)?;
            let g = FactorGraph::build(f.matrix(), f.num_vars() as usize);
            let p = bp.params()?;
            let mut out = String::new();
            match kind {
                Kind::Bp => {
                    let run = bp_run(&g, &p);
                    let m = bp_marginals(&g, &run.state);
                    out.push_str("variable,psi_plus,converged\n");
                    for v in f.vars() {
                        out.push_str(&format!("{},{},{}\n", v.id(), m.plus(v), run.converged));
                    }
                }
                Kind::Sp => {
                    let run = sp_run(&g, &p);
                    let m = sp_marginals(&g, &run.state);
                    let nontrivial = is_nontrivial(&run.state, DEFAULT_EPS_TRIVIAL);
                    out.push_str("variable,psi_plus,psi_star,psi_minus,converged,nontrivial\n");
                    for v in f.vars() {
                        let s = m.get(v);
                        out.push_str(&format!(
                            "{},{},{},{},{},{}\n",
                            v.id(),
                            s.plus,
                            s.joker,
                            s.minus,
                            run.converged,
                            nontrivial
                        ));
                    }
                }
            }
            emit(None, &out)?;
            Ok(0)
        }
        Cmd::Order { file, heuristic, bp } => {
            let f = read_formula(&file)?;
            match heuristic.order(&f, &bp.params()?) {
                Some(order) => emit(None, &order.to_csv())?,
                None => bail!("{heuristic} picks variables dynamically and has no static order"),
            }
            Ok(0)
        }
        Cmd::Transform { file, output } => {
            let f = read_formula(&file)?;
            emit(output.as_deref(), &write_qdimacs(&to_two_alternation(&f).formula))?;
            Ok(0)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            exit(1);
        }
    }
}
