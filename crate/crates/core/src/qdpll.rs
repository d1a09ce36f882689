//! Complete QBF solver: chronological DPLL over a prenex CNF.
//!
//! Decisions are taken from the outermost quantifier block that still has
//! unassigned variables. A falsified clause backtracks to the most recent
//! existential decision whose other value is untried; a state in which every
//! clause is satisfied and every universal variable is assigned is a
//! solution leaf and backtracks to the most recent untried universal
//! decision. No learning and no back-jumping.

use std::time::{Duration, Instant};

use crate::formula::{Assignment, Lit, QbfFormula, Quantifier, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QbfStatus {
    Sat,
    Unsat,
}

impl QbfStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QbfStatus::Sat => "sat",
            QbfStatus::Unsat => "unsat",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverStats {
    pub decisions: u64,
    pub conflicts: u64,
    /// Solution leaves visited.
    pub solutions: u64,
    /// Literals implied by unit propagation.
    pub propagations: u64,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QdpllOutcome {
    pub status: QbfStatus,
    pub stats: SolverStats,
}

/// Decision policy. `candidates` are the unassigned variables of the
/// outermost open block in ascending order, never empty; the result must
/// be one of them together with the value to try first.
pub trait Brancher {
    fn pick(&mut self, candidates: &[Var]) -> (Var, bool);

    fn on_conflict(&mut self) {}
}

impl<B: Brancher + ?Sized> Brancher for Box<B> {
    fn pick(&mut self, candidates: &[Var]) -> (Var, bool) {
        (**self).pick(candidates)
    }

    fn on_conflict(&mut self) {
        (**self).on_conflict()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reason {
    Decision { flipped: bool },
    Implied,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrailEntry {
    pub var: Var,
    pub value: bool,
    pub reason: Reason,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Propagation {
    Ok,
    /// Index of a clause that is false or cannot be kept true.
    Conflict(usize),
}

const UNDEF: i8 = -1;

/// Search state over one formula.
pub struct QdpllSolver<'f> {
    f: &'f QbfFormula,
    values: Vec<i8>,
    quant: Vec<Quantifier>,
    block: Vec<usize>,
    pos_occ: Vec<Vec<usize>>,
    neg_occ: Vec<Vec<usize>>,
    num_true: Vec<u32>,
    num_false: Vec<u32>,
    satisfied: usize,
    block_open: Vec<usize>,
    universal_open: usize,
    trail: Vec<TrailEntry>,
    units: Vec<usize>,
    conflict: Option<usize>,
    stats: SolverStats,
}

impl<'f> QdpllSolver<'f> {
    pub fn new(f: &'f QbfFormula) -> Self {
        let n = f.num_vars() as usize;
        let mut pos_occ = vec![Vec::new(); n];
        let mut neg_occ = vec![Vec::new(); n];
        let mut units = Vec::new();
        let mut conflict = None;
        for (c, clause) in f.matrix().iter().enumerate() {
            for &lit in clause.lits() {
                let occ = if lit.is_positive() { &mut pos_occ } else { &mut neg_occ };
                occ[lit.var().index()].push(c);
            }
            match clause.len() {
                0 => conflict = conflict.or(Some(c)),
                1 => units.push(c),
                _ => {}
            }
        }
        let quant: Vec<Quantifier> = f.vars().map(|v| f.quantifier(v).unwrap()).collect();
        let block: Vec<usize> = f.vars().map(|v| f.block_of(v).unwrap()).collect();
        QdpllSolver {
            f,
            values: vec![UNDEF; n],
            universal_open: quant.iter().filter(|q| q.is_universal()).count(),
            block_open: f.prefix().iter().map(|b| b.vars.len()).collect(),
            quant,
            block,
            pos_occ,
            neg_occ,
            num_true: vec![0; f.num_clauses()],
            num_false: vec![0; f.num_clauses()],
            satisfied: 0,
            trail: Vec::new(),
            units,
            conflict,
            stats: SolverStats::default(),
        }
    }

    pub fn value(&self, var: Var) -> Option<bool> {
        match self.values[var.index()] {
            UNDEF => None,
            v => Some(v == 1),
        }
    }

    fn lit_value(&self, lit: Lit) -> Option<bool> {
        self.value(lit.var()).map(|v| lit.eval(v))
    }

    pub fn trail(&self) -> &[TrailEntry] {
        &self.trail
    }

    pub fn stats(&self) -> &SolverStats {
        &self.stats
    }

    /// Current partial assignment.
    pub fn assignment(&self) -> Assignment {
        self.trail.iter().map(|t| (t.var, t.value)).collect()
    }

    fn assign(&mut self, var: Var, value: bool, reason: Reason) {
        let i = var.index();
        debug_assert_eq!(self.values[i], UNDEF);
        self.values[i] = i8::from(value);
        self.block_open[self.block[i]] -= 1;
        if self.quant[i].is_universal() {
            self.universal_open -= 1;
        }
        self.trail.push(TrailEntry { var, value, reason });

        let (made_true, made_false) = if value {
            (&self.pos_occ[i], &self.neg_occ[i])
        } else {
            (&self.neg_occ[i], &self.pos_occ[i])
        };
        for &c in made_true {
            self.num_true[c] += 1;
            if self.num_true[c] == 1 {
                self.satisfied += 1;
            }
        }
        for &c in made_false {
            self.num_false[c] += 1;
            if self.num_true[c] > 0 {
                continue;
            }
            let len = self.f.matrix()[c].len() as u32;
            if self.num_false[c] == len {
                self.conflict = self.conflict.or(Some(c));
            } else if self.num_false[c] + 1 == len {
                self.units.push(c);
            }
        }
    }

    fn unassign_last(&mut self) -> TrailEntry {
        let entry = self.trail.pop().expect("non-empty trail");
        let i = entry.var.index();
        self.values[i] = UNDEF;
        self.block_open[self.block[i]] += 1;
        if self.quant[i].is_universal() {
            self.universal_open += 1;
        }
        let (made_true, made_false) = if entry.value {
            (&self.pos_occ[i], &self.neg_occ[i])
        } else {
            (&self.neg_occ[i], &self.pos_occ[i])
        };
        for &c in made_true {
            self.num_true[c] -= 1;
            if self.num_true[c] == 0 {
                self.satisfied -= 1;
            }
        }
        for &c in made_false {
            self.num_false[c] -= 1;
        }
        entry
    }

    /// Unit propagation to fixpoint. A clause whose only unassigned literal
    /// is existential forces it; if that literal is universal the clause is
    /// a conflict, since the universal player falsifies it.
    pub fn propagate(&mut self) -> Propagation {
        loop {
            if let Some(c) = self.conflict {
                return Propagation::Conflict(c);
            }
            let Some(c) = self.units.pop() else {
                return Propagation::Ok;
            };
            if self.num_true[c] > 0 {
                continue;
            }
            let clause = &self.f.matrix()[c];
            if self.num_false[c] as usize == clause.len() {
                self.conflict = Some(c);
                continue;
            }
            if self.num_false[c] as usize + 1 != clause.len() {
                continue;
            }
            let lit = *clause
                .lits()
                .iter()
                .find(|&&l| self.lit_value(l).is_none())
                .expect("unit clause has an unassigned literal");
            if self.quant[lit.var().index()].is_universal() {
                self.conflict = Some(c);
                continue;
            }
            self.stats.propagations += 1;
            self.assign(lit.var(), lit.is_positive(), Reason::Implied);
        }
    }

    /// Undoes the trail down to the most recent untried decision on a
    /// variable with quantifier `q` and flips it. False when none is left.
    fn backtrack(&mut self, q: Quantifier) -> bool {
        self.units.clear();
        self.conflict = None;
        while let Some(&top) = self.trail.last() {
            self.unassign_last();
            if top.reason == (Reason::Decision { flipped: false })
                && self.quant[top.var.index()] == q
            {
                self.assign(top.var, !top.value, Reason::Decision { flipped: true });
                return true;
            }
        }
        false
    }

    fn open_block(&self) -> Option<usize> {
        self.block_open.iter().position(|&n| n > 0)
    }

    fn decide<B: Brancher + ?Sized>(&mut self, brancher: &mut B) {
        let b = self.open_block().expect("an unassigned variable remains");
        let candidates: Vec<Var> = self.f.prefix()[b]
            .vars
            .iter()
            .copied()
            .filter(|v| self.values[v.index()] == UNDEF)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let (var, value) = brancher.pick(&candidates);
        assert!(
            candidates.contains(&var),
            "brancher chose {var} outside the outermost open block"
        );
        self.stats.decisions += 1;
        self.assign(var, value, Reason::Decision { flipped: false });
    }

    /// Runs the search to completion.
    pub fn solve<B: Brancher + ?Sized>(&mut self, brancher: &mut B) -> QbfStatus {
        self.solve_until(brancher, None)
            .expect("search without a deadline always finishes")
    }

    /// Runs the search, giving up with `None` once `deadline` has passed.
    pub fn solve_until<B: Brancher + ?Sized>(
        &mut self,
        brancher: &mut B,
        deadline: Option<Instant>,
    ) -> Option<QbfStatus> {
        let start = Instant::now();
        let mut steps: u64 = 0;
        let status = loop {
            steps += 1;
            if steps.is_multiple_of(1024) && deadline.is_some_and(|d| Instant::now() >= d) {
                self.stats.wall_time = start.elapsed().as_secs_f64();
                return None;
            }
            match self.propagate() {
                Propagation::Conflict(_) => {
                    self.stats.conflicts += 1;
                    brancher.on_conflict();
                    if !self.backtrack(Quantifier::Existential) {
                        break QbfStatus::Unsat;
                    }
                }
                Propagation::Ok => {
                    if self.satisfied == self.f.num_clauses() && self.universal_open == 0 {
                        self.stats.solutions += 1;
                        if !self.backtrack(Quantifier::Universal) {
                            break QbfStatus::Sat;
                        }
                    } else {
                        self.decide(brancher);
                    }
                }
            }
        };
        self.stats.wall_time = start.elapsed().as_secs_f64();
        Some(status)
    }
}

/// Solves `f` with `brancher`.
pub fn qdpll_solve<B: Brancher + ?Sized>(f: &QbfFormula, brancher: &mut B) -> QdpllOutcome {
    let mut solver = QdpllSolver::new(f);
    let status = solver.solve(brancher);
    QdpllOutcome {
        status,
        stats: solver.stats.clone(),
    }
}

/// As [`qdpll_solve`], returning `None` on timeout.
pub fn qdpll_solve_timeout<B: Brancher + ?Sized>(
    f: &QbfFormula,
    brancher: &mut B,
    limit: Duration,
) -> (Option<QbfStatus>, SolverStats) {
    let mut solver = QdpllSolver::new(f);
    let status = solver.solve_until(brancher, Some(Instant::now() + limit));
    (status, solver.stats.clone())
}

/// Largest formula [`brute_force_eval`] accepts.
pub const BRUTE_FORCE_MAX_VARS: u32 = 24;

/// Game-tree evaluation straight from the semantics: universal nodes are a
/// conjunction over both values, existential nodes a disjunction. Only
/// clause evaluation prunes.
///
/// # Panics
/// If the formula has more than [`BRUTE_FORCE_MAX_VARS`] variables.
pub fn brute_force_eval(f: &QbfFormula) -> QbfStatus {
    assert!(
        f.num_vars() <= BRUTE_FORCE_MAX_VARS,
        "brute force limited to {BRUTE_FORCE_MAX_VARS} variables"
    );
    let order: Vec<(Var, Quantifier)> = f
        .prefix()
        .iter()
        .flat_map(|b| b.vars.iter().map(move |&v| (v, b.quantifier)))
        .collect();
    let mut values = vec![None; f.num_vars() as usize];
    if game_value(f, &order, &mut values) {
        QbfStatus::Sat
    } else {
        QbfStatus::Unsat
    }
}

fn game_value(f: &QbfFormula, order: &[(Var, Quantifier)], values: &mut [Option<bool>]) -> bool {
    let mut all_sat = true;
    for clause in f.matrix() {
        let mut sat = false;
        let mut open = false;
        for &l in clause.lits() {
            match values[l.var().index()] {
                Some(v) if l.eval(v) => {
                    sat = true;
                    break;
                }
                Some(_) => {}
                None => open = true,
            }
        }
        if !sat && !open {
            return false;
        }
        all_sat &= sat;
    }
    if all_sat {
        return true;
    }
    let Some((&(var, q), rest)) = order.split_first() else {
        unreachable!("all variables assigned yet some clause undecided");
    };
    let mut branch = |value: bool| {
        values[var.index()] = Some(value);
        let r = game_value(f, rest, values);
        values[var.index()] = None;
        r
    };
    match q {
        Quantifier::Universal => branch(false) && branch(true),
        Quantifier::Existential => branch(false) || branch(true),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{Clause, QuantBlock};

    /// Lowest index first, value false.
    struct Lowest;

    impl Brancher for Lowest {
        fn pick(&mut self, c: &[Var]) -> (Var, bool) {
            (c[0], false)
        }
    }

    fn qbf(prefix: Vec<QuantBlock>, m: &[&[i32]]) -> QbfFormula {
        QbfFormula::new(prefix, m.iter().map(|c| Clause::from_dimacs(c)).collect()).unwrap()
    }

    fn ae(m: &[&[i32]]) -> QbfFormula {
        qbf(vec![QuantBlock::universal([1]), QuantBlock::existential([2])], m)
    }

    #[test]
    fn xor_like_is_sat_with_two_leaves() {
        let f = ae(&[&[1, 2], &[-1, -2]]);
        let out = qdpll_solve(&f, &mut Lowest);
        assert_eq!(out.status, QbfStatus::Sat);
        assert_eq!(out.stats.solutions, 2);
        assert_eq!(brute_force_eval(&f), QbfStatus::Sat);
    }

    #[test]
    fn universal_refutes() {
        let f = ae(&[&[1, 2], &[1, -2]]);
        assert_eq!(qdpll_solve(&f, &mut Lowest).status, QbfStatus::Unsat);
        assert_eq!(brute_force_eval(&f), QbfStatus::Unsat);
    }

    #[test]
    fn prefix_order_matters() {
        let f = qbf(
            vec![QuantBlock::existential([2]), QuantBlock::universal([1])],
            &[&[1, 2], &[-1, -2]],
        );
        assert_eq!(qdpll_solve(&f, &mut Lowest).status, QbfStatus::Unsat);
        assert_eq!(brute_force_eval(&f), QbfStatus::Unsat);
    }

    #[test]
    fn unit_universal_is_conflict() {
        let f = qbf(vec![QuantBlock::universal([1])], &[&[-1]]);
        let mut s = QdpllSolver::new(&f);
        assert_eq!(s.propagate(), Propagation::Conflict(0));
        assert!(s.trail().is_empty());
    }

    #[test]
    fn unit_existential_is_implied() {
        let f = qbf(vec![QuantBlock::existential([1])], &[&[1]]);
        let mut s = QdpllSolver::new(&f);
        assert_eq!(s.propagate(), Propagation::Ok);
        assert_eq!(s.value(Var::new(1)), Some(true));
        assert_eq!(s.trail()[0].reason, Reason::Implied);
    }

    #[test]
    fn propagation_chains() {
        let f = qbf(vec![QuantBlock::existential([1, 2])], &[&[1, 2], &[-1]]);
        let mut s = QdpllSolver::new(&f);
        assert_eq!(s.propagate(), Propagation::Ok);
        assert_eq!(s.value(Var::new(1)), Some(false));
        assert_eq!(s.value(Var::new(2)), Some(true));
        assert_eq!(s.stats().propagations, 2);
    }

    #[test]
    fn brute_force_basics() {
        assert_eq!(
            brute_force_eval(&qbf(vec![QuantBlock::existential([1])], &[&[1]])),
            QbfStatus::Sat
        );
        assert_eq!(
            brute_force_eval(&qbf(vec![QuantBlock::universal([1])], &[&[1]])),
            QbfStatus::Unsat
        );
    }

    #[test]
    fn empty_matrix_is_sat_with_all_universal_leaves() {
        let f = qbf(vec![QuantBlock::universal([1, 2]), QuantBlock::existential([3])], &[]);
        let out = qdpll_solve(&f, &mut Lowest);
        assert_eq!(out.status, QbfStatus::Sat);
        assert_eq!(out.stats.solutions, 4);
    }

    #[test]
    fn empty_clause_is_unsat() {
        let f = QbfFormula::cnf(vec![Clause::default()]);
        assert_eq!(qdpll_solve(&f, &mut Lowest).status, QbfStatus::Unsat);
        assert_eq!(brute_force_eval(&f), QbfStatus::Unsat);
    }

    #[test]
    fn decisions_respect_the_prefix() {
        struct Checking<'a>(&'a QbfFormula, Vec<Var>);
        impl Brancher for Checking<'_> {
            fn pick(&mut self, c: &[Var]) -> (Var, bool) {
                let b = self.0.block_of(c[0]).unwrap();
                assert!(c.iter().all(|&v| self.0.block_of(v) == Some(b)));
                self.1.push(*c.last().unwrap());
                (*c.last().unwrap(), true)
            }
        }
        let f = qbf(
            vec![
                QuantBlock::universal([3, 1]),
                QuantBlock::existential([2]),
                QuantBlock::universal([4]),
                QuantBlock::existential([5]),
            ],
            &[&[1, 2, 5], &[-3, 4, -5], &[2, -4, 5]],
        );
        let mut b = Checking(&f, Vec::new());
        let status = qdpll_solve(&f, &mut b).status;
        assert_eq!(status, brute_force_eval(&f));
        assert!(!b.1.is_empty());
    }
}
