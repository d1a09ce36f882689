//! Incomplete refutation of forall-exists formulas.
//!
//! The decimation provers fix universal variables one at a time, always the
//! most biased one and always against its bias, re-running message passing
//! on the simplified matrix after each fixing. The existential residual left
//! by the final universal assignment is then decided by the complete SAT
//! solver: UNSAT proves the formula false, SAT proves nothing.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::bp::{bp_marginals, bp_run, BpParams};
use crate::formula::{condition, residual_existential, Assignment, Clause, QbfFormula, Var};
use crate::graph::FactorGraph;
use crate::heuristics::{compute_bias, first_sign, most_biased, Bias, DEFAULT_TIE_EPSILON};
use crate::sat::sat_solve;
use crate::scalar::Real;
use crate::seeds::derive;
use crate::sp::{is_nontrivial, sp_marginals, sp_run, DEFAULT_EPS_TRIVIAL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProofOutcome {
    /// The residual under the witness is unsatisfiable.
    UnsatProved,
    /// The residual is satisfiable; no claim.
    Unknown,
    /// Fixing universals alone falsified a clause.
    UnsatEarly,
}

impl ProofOutcome {
    pub fn is_unsat(self) -> bool {
        self != ProofOutcome::Unknown
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProofOutcome::UnsatProved => "unsat_proved",
            ProofOutcome::Unknown => "unknown",
            ProofOutcome::UnsatEarly => "unsat_early",
        }
    }
}

/// Message-passing kernel a decimation step took its biases from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarginalSource {
    Bp,
    Sp,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecimationStep {
    pub var: Var,
    pub value: bool,
    pub magnitude: f64,
    pub converged: bool,
    pub source: MarginalSource,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnsatProofAttempt {
    pub outcome: ProofOutcome,
    /// Assignment of every universal variable.
    pub universal_witness: Assignment,
    pub residual_clause_count: usize,
    pub steps: Vec<DecimationStep>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecimationError {
    #[error("prefix has a universal block inside an existential one; flatten it first")]
    NotForallExists,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProverMethod {
    Bpdu,
    Bpspdu,
    Greedy,
}

impl ProverMethod {
    pub const ALL: [ProverMethod; 3] = [ProverMethod::Bpdu, ProverMethod::Bpspdu, ProverMethod::Greedy];

    pub fn name(self) -> &'static str {
        match self {
            ProverMethod::Bpdu => "bpdu",
            ProverMethod::Bpspdu => "bpspdu",
            ProverMethod::Greedy => "greedy",
        }
    }
}

impl fmt::Display for ProverMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("unknown prover method `{0}` (expected bpdu, bpspdu or greedy)")]
pub struct UnknownMethod(pub String);

impl FromStr for ProverMethod {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProverMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownMethod(s.to_string()))
    }
}

fn check_prefix(f: &QbfFormula) -> Result<(), DecimationError> {
    if f.is_forall_exists() {
        Ok(())
    } else {
        Err(DecimationError::NotForallExists)
    }
}

/// Decides the residual of `witness` and packages the attempt.
fn finish(f: &QbfFormula, witness: Assignment, steps: Vec<DecimationStep>) -> UnsatProofAttempt {
    let residual = residual_existential(f, &witness).expect("witness covers every universal");
    let outcome = if sat_solve(&residual).is_sat() {
        ProofOutcome::Unknown
    } else {
        ProofOutcome::UnsatProved
    };
    UnsatProofAttempt {
        outcome,
        universal_witness: witness,
        residual_clause_count: residual.len(),
        steps,
    }
}

fn decimate<T: Real>(f: &QbfFormula, p: &BpParams<T>, use_sp: bool) -> Result<UnsatProofAttempt, DecimationError> {
    check_prefix(f)?;
    let n = f.num_vars() as usize;
    let tie = T::lit(DEFAULT_TIE_EPSILON);
    let mut universals: Vec<Var> = f.universal_vars().collect();
    universals.sort();

    let mut matrix: Vec<Clause> = f.matrix().to_vec();
    let mut witness = Assignment::with_num_vars(n);
    let mut steps = Vec::with_capacity(universals.len());

    for step in 0..universals.len() {
        let g = FactorGraph::build(&matrix, n);
        let mut chosen: Option<(Vec<Bias<T>>, bool, MarginalSource)> = None;
        if use_sp {
            let sp = sp_run(&g, &p.with_seed(derive(p.seed, 2 * step as u64 + 1)));
            if sp.converged && is_nontrivial(&sp.state, T::lit(DEFAULT_EPS_TRIVIAL)) {
                let biases = compute_bias(&sp_marginals(&g, &sp.state), tie);
                chosen = Some((biases, true, MarginalSource::Sp));
            }
        }
        let (biases, converged, source) = chosen.unwrap_or_else(|| {
            let bp = bp_run(&g, &p.with_seed(derive(p.seed, 2 * step as u64)));
            let biases = compute_bias(&bp_marginals(&g, &bp.state), tie);
            (biases, bp.converged, MarginalSource::Bp)
        });

        let var = most_biased(&biases, universals.iter().copied().filter(|&v| !witness.is_bound(v)))
            .expect("an unfixed universal remains");
        let bias = biases[var.index()];
        let value = first_sign(true, bias.favored);
        witness.assign(var, value).expect("universal fixed once");
        steps.push(DecimationStep {
            var,
            value,
            magnitude: bias.rank_key().as_f64(),
            converged,
            source,
        });

        let single: Assignment = [(var, value)].into_iter().collect();
        let reduced = condition(&matrix, &single);
        if reduced.empty_clause {
            for &u in &universals {
                if !witness.is_bound(u) {
                    witness.assign(u, false).expect("unbound");
                }
            }
            let residual = residual_existential(f, &witness).expect("witness covers every universal");
            return Ok(UnsatProofAttempt {
                outcome: ProofOutcome::UnsatEarly,
                universal_witness: witness,
                residual_clause_count: residual.len(),
                steps,
            });
        }
        matrix = reduced.clauses;
    }
    Ok(finish(f, witness, steps))
}

/// BP decimation over the universal variables.
pub fn bpdu<T: Real>(f: &QbfFormula, p: &BpParams<T>) -> Result<UnsatProofAttempt, DecimationError> {
    decimate(f, p, false)
}

/// As [`bpdu`], but each step uses SP marginals when SP converges to a
/// nontrivial fixed point, and BP otherwise.
pub fn bpspdu<T: Real>(f: &QbfFormula, p: &BpParams<T>) -> Result<UnsatProofAttempt, DecimationError> {
    decimate(f, p, true)
}

/// Majority rule: a universal variable is set true when it occurs negated
/// more often than non-negated, false otherwise (ties false).
pub fn greedy_universal(f: &QbfFormula) -> Result<Assignment, DecimationError> {
    check_prefix(f)?;
    let n = f.num_vars() as usize;
    let mut pos = vec![0usize; n];
    let mut neg = vec![0usize; n];
    for clause in f.matrix() {
        for &l in clause.lits() {
            if l.is_positive() {
                pos[l.var().index()] += 1;
            } else {
                neg[l.var().index()] += 1;
            }
        }
    }
    Ok(f.universal_vars()
        .map(|v| (v, neg[v.index()] > pos[v.index()]))
        .collect())
}

/// Runs one prover.
pub fn prove_unsat<T: Real>(
    f: &QbfFormula,
    method: ProverMethod,
    p: &BpParams<T>,
) -> Result<UnsatProofAttempt, DecimationError> {
    match method {
        ProverMethod::Bpdu => bpdu(f, p),
        ProverMethod::Bpspdu => bpspdu(f, p),
        ProverMethod::Greedy => {
            let witness = greedy_universal(f)?;
            Ok(finish(f, witness, Vec::new()))
        }
    }
}
