//! Seeded random QBF ensembles.
//!
//! Clause `c` of an instance with seed `s` is drawn from
//! `ChaCha8Rng::seed_from_u64(s)` switched to stream `c`: first the universal
//! variables (distinct, uniform over the universal pool, via
//! `rand::seq::index::sample`), then the existential ones, each group sorted
//! by index, then one fair sign bit per literal in clause order. Clauses are
//! independent, so duplicates may occur.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{Clause, Lit, QbfFormula, QuantBlock, Quantifier, Var};

/// (L, K) model: `forall X exists Y`, each clause with L universal and K
/// existential literals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LkSpec {
    pub l: usize,
    pub k: usize,
    pub nu: usize,
    pub ne: usize,
    pub m: usize,
    pub seed: u64,
}

/// Model B: `t` alternating blocks of `n` variables, outermost universal;
/// each clause has `u` literals over all universal blocks and `v` over all
/// existential blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBSpec {
    pub t: usize,
    pub n: usize,
    pub u: usize,
    pub v: usize,
    pub m: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Lk(LkSpec),
    ModelB(ModelBSpec),
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<QbfFormula, GenError> {
        match self {
            GeneratorSpec::Lk(s) => gen_lk(s),
            GeneratorSpec::ModelB(s) => gen_model_b(s),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("L = {l} must lie in 1..={nu}")]
    BadL { l: usize, nu: usize },
    #[error("K = {k} must lie in 1..={ne}")]
    BadK { k: usize, ne: usize },
    #[error("model B needs at least 2 alternations, got {0}")]
    TooFewAlternations(usize),
    #[error("model B needs V > 0 existential literals per clause")]
    NoExistentials,
    #[error("cannot draw {want} distinct variables from a pool of {pool}")]
    PoolTooSmall { want: usize, pool: usize },
}

/// Clause count for density `alpha` over `n` variables: `round(alpha * n)`.
pub fn clauses_for(alpha: f64, n: usize) -> usize {
    (alpha * n as f64).round() as usize
}

pub fn gen_lk(spec: &LkSpec) -> Result<QbfFormula, GenError> {
    if spec.l < 1 || spec.l > spec.nu {
        return Err(GenError::BadL { l: spec.l, nu: spec.nu });
    }
    if spec.k < 1 || spec.k > spec.ne {
        return Err(GenError::BadK { k: spec.k, ne: spec.ne });
    }
    let universal = vars(1, spec.nu);
    let existential = vars(spec.nu + 1, spec.ne);
    let prefix = vec![
        QuantBlock::new(Quantifier::Universal, universal.clone()),
        QuantBlock::new(Quantifier::Existential, existential.clone()),
    ];
    Ok(sample_formula(prefix, &universal, &existential, spec.l, spec.k, spec.m, spec.seed))
}

pub fn gen_model_b(spec: &ModelBSpec) -> Result<QbfFormula, GenError> {
    if spec.t < 2 {
        return Err(GenError::TooFewAlternations(spec.t));
    }
    if spec.v == 0 {
        return Err(GenError::NoExistentials);
    }
    let mut prefix = Vec::with_capacity(spec.t);
    let (mut universal, mut existential) = (Vec::new(), Vec::new());
    for b in 0..spec.t {
        let block = vars(b * spec.n + 1, spec.n);
        let q = if b % 2 == 0 {
            universal.extend_from_slice(&block);
            Quantifier::Universal
        } else {
            existential.extend_from_slice(&block);
            Quantifier::Existential
        };
        prefix.push(QuantBlock::new(q, block));
    }
    for (want, pool) in [(spec.u, universal.len()), (spec.v, existential.len())] {
        if want > pool {
            return Err(GenError::PoolTooSmall { want, pool });
        }
    }
    Ok(sample_formula(prefix, &universal, &existential, spec.u, spec.v, spec.m, spec.seed))
}

/// Uniform random k-CNF over `n` existential variables.
pub fn random_ksat(n: usize, k: usize, m: usize, seed: u64) -> Result<QbfFormula, GenError> {
    if k > n {
        return Err(GenError::PoolTooSmall { want: k, pool: n });
    }
    let pool = vars(1, n);
    let prefix = vec![QuantBlock::new(Quantifier::Existential, pool.clone())];
    Ok(sample_formula(prefix, &[], &pool, 0, k, m, seed))
}

fn vars(first: usize, count: usize) -> Vec<Var> {
    (first..first + count).map(|i| Var::new(i as u32)).collect()
}

fn sample_formula(
    prefix: Vec<QuantBlock>,
    universal: &[Var],
    existential: &[Var],
    u: usize,
    v: usize,
    m: usize,
    seed: u64,
) -> QbfFormula {
    let base = ChaCha8Rng::seed_from_u64(seed);
    let matrix = (0..m)
        .map(|c| {
            let mut rng = base.clone();
            rng.set_stream(c as u64);
            let mut lits = Vec::with_capacity(u + v);
            for (pool, count) in [(universal, u), (existential, v)] {
                let mut picked: Vec<Var> = sample(&mut rng, pool.len(), count)
                    .into_iter()
                    .map(|i| pool[i])
                    .collect();
                picked.sort();
                lits.extend(picked);
            }
            let lits: Vec<Lit> = lits.into_iter().map(|var| Lit::new(var, rng.gen())).collect();
            Clause::normalize(lits).expect("distinct variables")
        })
        .collect();
    let num_vars = (universal.len() + existential.len()) as u32;
    QbfFormula::with_num_vars(num_vars, prefix, matrix).expect("generated prefix is valid")
}
