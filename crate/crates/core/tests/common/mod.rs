//! Reference implementations used as test oracles. They work on plain
//! DIMACS integers and share no evaluation code with the library.
#![allow(dead_code)]

use qbfmp::formula::{Clause, QbfFormula, QuantBlock, Quantifier};
use qbfmp::{sat_solve, SatResult, Var};
use rand::seq::SliceRandom;
use rand::Rng;

pub type Cnf = Vec<Vec<i32>>;

pub fn dimacs(f: &QbfFormula) -> Cnf {
    f.matrix()
        .iter()
        .map(|c| c.lits().iter().map(|l| l.to_dimacs() as i32).collect())
        .collect()
}

/// `(universal, vars)` per block, outermost first.
pub fn blocks(f: &QbfFormula) -> Vec<(bool, Vec<u32>)> {
    f.prefix()
        .iter()
        .map(|b| (b.quantifier == Quantifier::Universal, b.vars.iter().map(|v| v.id()).collect()))
        .collect()
}

fn satisfied(cnf: &Cnf, values: &[bool]) -> bool {
    cnf.iter()
        .all(|c| c.iter().any(|&l| values[l.unsigned_abs() as usize] == (l > 0)))
}

/// Evaluates the QBF by expanding every quantifier over both values; the
/// matrix is only checked at full assignments.
pub fn eval_qbf(f: &QbfFormula) -> bool {
    let order: Vec<(bool, u32)> = blocks(f)
        .into_iter()
        .flat_map(|(u, vs)| vs.into_iter().map(move |v| (u, v)))
        .collect();
    assert!(order.len() <= 20, "oracle limited to 20 variables");
    let cnf = dimacs(f);
    let mut values = vec![false; f.num_vars() as usize + 1];
    fn go(order: &[(bool, u32)], cnf: &Cnf, values: &mut Vec<bool>) -> bool {
        match order.split_first() {
            None => satisfied(cnf, values),
            Some((&(universal, v), rest)) => {
                let mut results = [false, true].into_iter().map(|b| {
                    values[v as usize] = b;
                    go(rest, cnf, values)
                });
                if universal {
                    results.all(|r| r)
                } else {
                    results.any(|r| r)
                }
            }
        }
    }
    go(&order, &cnf, &mut values)
}

/// Solutions of `cnf` over variables `1..=n`, as bitmasks (bit `i-1` is var `i`).
pub fn solutions(cnf: &Cnf, n: usize) -> Vec<u32> {
    assert!(n <= 24);
    (0u32..1 << n)
        .filter(|&mask| {
            cnf.iter().all(|c| {
                c.iter()
                    .any(|&l| ((mask >> (l.unsigned_abs() - 1)) & 1 == 1) == (l > 0))
            })
        })
        .collect()
}

pub fn satisfiable(cnf: &Cnf, n: usize) -> bool {
    assert!(n <= 24);
    (0u32..1 << n).any(|mask| {
        cnf.iter()
            .all(|c| c.iter().any(|&l| ((mask >> (l.unsigned_abs() - 1)) & 1 == 1) == (l > 0)))
    })
}

/// Fraction of solutions with each variable true, or `None` when unsatisfiable.
pub fn exact_marginals(cnf: &Cnf, n: usize) -> Option<Vec<f64>> {
    let sols = solutions(cnf, n);
    if sols.is_empty() {
        return None;
    }
    Some(
        (0..n)
            .map(|i| sols.iter().filter(|&&s| (s >> i) & 1 == 1).count() as f64 / sols.len() as f64)
            .collect(),
    )
}

/// Decides `forall X exists Y` for matrices whose clauses hold at most one
/// universal literal, by counterexample-guided refinement: candidate universal
/// assignments must falsify the matrix under every existential assignment
/// seen so far, and each candidate is checked with the CNF solver.
pub fn forall_exists_true(f: &QbfFormula) -> bool {
    let b = blocks(f);
    assert!(b.len() <= 2 && b.first().is_none_or(|x| x.0 || b.len() == 1));
    let universal: Vec<bool> = {
        let mut u = vec![false; f.num_vars() as usize + 1];
        if let Some((true, vs)) = b.first() {
            for &v in vs {
                u[v as usize] = true;
            }
        }
        u
    };
    let cnf = dimacs(f);
    let split: Vec<(Option<i32>, Vec<i32>)> = cnf
        .iter()
        .map(|c| {
            let us: Vec<i32> = c.iter().copied().filter(|&l| universal[l.unsigned_abs() as usize]).collect();
            assert!(us.len() <= 1, "oracle needs at most one universal literal per clause");
            (
                us.first().copied(),
                c.iter().copied().filter(|&l| !universal[l.unsigned_abs() as usize]).collect(),
            )
        })
        .collect();
    let mut abstraction: Vec<Clause> = Vec::new();
    loop {
        let sigma = match sat_solve(&abstraction) {
            SatResult::Unsat => return true,
            SatResult::Sat(m) => m,
        };
        let value = |l: i32| sigma.get(Var::new(l.unsigned_abs())).unwrap_or(false) == (l > 0);
        let residual: Vec<Vec<i32>> = split
            .iter()
            .filter(|(u, _)| !u.is_some_and(value))
            .map(|(_, e)| e.clone())
            .collect();
        if residual.iter().any(|c| c.is_empty()) {
            return false;
        }
        let mut clauses: Vec<Clause> = residual.iter().map(|c| Clause::from_dimacs(c)).collect();
        let mut tau = match sat_solve(&clauses) {
            SatResult::Unsat => return false,
            SatResult::Sat(m) => m,
        };
        // widen tau: keep every other existential part it can also satisfy,
        // so one refinement rules out more universal assignments
        for (u, e) in &split {
            let ok = |m: &qbfmp::Assignment| e.iter().any(|&l| m.get(Var::new(l.unsigned_abs())).unwrap_or(false) == (l > 0));
            if u.is_some_and(value) && !ok(&tau) {
                clauses.push(Clause::from_dimacs(e));
                match sat_solve(&clauses) {
                    SatResult::Sat(m) => tau = m,
                    SatResult::Unsat => {
                        clauses.pop();
                    }
                }
            }
        }
        let tval = |l: i32| tau.get(Var::new(l.unsigned_abs())).unwrap_or(false) == (l > 0);
        // clauses whose existential part tau falsifies; sigma must falsify one
        let mut refine = Vec::new();
        for (u, e) in &split {
            if !e.iter().any(|&l| tval(l)) {
                match u {
                    Some(l) => refine.push(-l),
                    None => return false,
                }
            }
        }
        if refine.is_empty() {
            return true;
        }
        // tau satisfies the residual, so sigma makes every refine literal false
        refine.sort();
        refine.dedup();
        abstraction.push(Clause::from_dimacs(&refine));
    }
}

pub fn random_cnf<R: Rng>(rng: &mut R, n: usize, m: usize, max_len: usize) -> Cnf {
    (0..m)
        .map(|_| {
            let len = rng.gen_range(1..=max_len.min(n));
            let mut vars: Vec<i32> = (1..=n as i32).collect();
            vars.shuffle(rng);
            vars[..len]
                .iter()
                .map(|&v| if rng.gen() { v } else { -v })
                .collect()
        })
        .collect()
}

/// Random QBF with `n` variables split into `t` alternating blocks.
pub fn random_qbf<R: Rng>(rng: &mut R, n: usize, t: usize, m: usize, max_len: usize, outer_universal: bool) -> QbfFormula {
    let mut vars: Vec<u32> = (1..=n as u32).collect();
    vars.shuffle(rng);
    let mut prefix = Vec::new();
    let chunk = n.div_ceil(t);
    for (j, vs) in vars.chunks(chunk).enumerate() {
        let universal = (j % 2 == 0) == outer_universal;
        prefix.push(if universal {
            QuantBlock::universal(vs.iter().copied())
        } else {
            QuantBlock::existential(vs.iter().copied())
        });
    }
    let matrix = random_cnf(rng, n, m, max_len)
        .iter()
        .map(|c| Clause::from_dimacs(c))
        .collect();
    QbfFormula::with_num_vars(n as u32, prefix, matrix).unwrap()
}

/// Random CNF whose factor graph is a tree: each new clause touches exactly
/// one variable already present, plus fresh ones.
pub fn random_tree_cnf<R: Rng>(rng: &mut R, max_vars: usize) -> (Cnf, usize) {
    let mut n = 1usize;
    let mut cnf = Vec::new();
    let sign = |rng: &mut R, v: usize| if rng.gen() { v as i32 } else { -(v as i32) };
    while n < max_vars {
        let anchor = rng.gen_range(1..=n);
        let fresh = rng.gen_range(0..=2usize.min(max_vars - n));
        let mut c = vec![sign(rng, anchor)];
        for _ in 0..fresh {
            n += 1;
            c.push(sign(rng, n));
        }
        cnf.push(c);
        if rng.gen_bool(0.15) {
            break;
        }
    }
    (cnf, n)
}
