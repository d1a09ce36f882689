//! Belief and survey propagation on the factor graph of a QBF matrix, a
//! decimation prover of unsatisfiability, a chronological QDPLL solver with
//! marginal-driven branching, random ensembles, and a sweep harness.
//!
//! The message-passing kernels are generic over [`scalar::Real`] (`f32` or
//! `f64`); the aliases below fix the scalar for the common cases.
//!
//! ```
//! use qbfmp::{parse_qdimacs, solve_with, BpParams64, Heuristic, QbfStatus};
//!
//! let f = parse_qdimacs("p cnf 2 2\na 1 0\ne 2 0\n1 2 0\n-1 2 0\n").unwrap();
//! let out = solve_with(&f, Heuristic::Bph, &BpParams64::default());
//! assert_eq!(out.status, QbfStatus::Sat);
//! ```

pub mod bench;
pub mod bp;
pub mod decimation;
pub mod formula;
pub mod gen;
pub mod graph;
pub mod heuristics;
pub mod qdimacs;
pub mod qdpll;
pub mod sat;
pub mod scalar;
pub mod seeds;
pub mod sp;

pub use bench::{run_sweep, SweepRow, SweepSpec};
pub use bp::{bp_marginals, bp_run, BpMarginals, BpParams, BpState};
pub use decimation::{bpdu, bpspdu, greedy_universal, prove_unsat, ProofOutcome, ProverMethod, UnsatProofAttempt};
pub use formula::{
    condition, residual_existential, to_two_alternation, Assignment, Clause, Lit, QbfFormula, QuantBlock, Quantifier,
    Var,
};
pub use gen::{gen_lk, gen_model_b, GeneratorSpec, LkSpec, ModelBSpec};
pub use graph::FactorGraph;
pub use heuristics::{bpdh_order, bph_order, solve_with, DecisionOrder, Heuristic};
pub use qdimacs::{parse_qdimacs, write_qdimacs};
pub use qdpll::{brute_force_eval, qdpll_solve, QbfStatus, SolverStats};
pub use sat::{sat_solve, SatResult};
pub use sp::{is_nontrivial, sp_marginals, sp_run, SpMarginals, SpState};

pub type BpParams64 = BpParams<f64>;
pub type BpParams32 = BpParams<f32>;
pub type BpState64 = BpState<f64>;
pub type BpState32 = BpState<f32>;
pub type BpMarginals64 = BpMarginals<f64>;
pub type BpMarginals32 = BpMarginals<f32>;
pub type SpState64 = SpState<f64>;
pub type SpState32 = SpState<f32>;
pub type SpMarginals64 = SpMarginals<f64>;
pub type SpMarginals32 = SpMarginals<f32>;
