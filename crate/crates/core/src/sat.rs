//! Complete CDCL SAT solver used to decide residual formulas.
//!
//! Two-watched-literal propagation, first-UIP clause learning, VSIDS
//! branching with phase saving, and geometric restarts.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::formula::{Assignment, Clause, Lit, Var};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    /// Model over every variable up to the largest identifier in the input.
    Sat(Assignment),
    Unsat,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }

    pub fn model(&self) -> Option<&Assignment> {
        match self {
            SatResult::Sat(m) => Some(m),
            SatResult::Unsat => None,
        }
    }
}

/// Decides `cnf` with the default seed.
pub fn sat_solve(cnf: &[Clause]) -> SatResult {
    SatSolver::new(cnf, 0).solve()
}

const RESTART_FIRST: u64 = 100;
const RESTART_GROWTH: f64 = 1.5;
const ACTIVITY_DECAY: f64 = 0.95;

// literal code: 2 * var_index + negated
type Code = u32;

fn code(l: Lit) -> Code {
    (l.var().index() as u32) << 1 | u32::from(l.is_negated())
}

fn var_of(c: Code) -> usize {
    (c >> 1) as usize
}

fn neg(c: Code) -> Code {
    c ^ 1
}

const UNDEF: i8 = -1;

pub struct SatSolver {
    num_vars: usize,
    input: Vec<Clause>,
    clauses: Vec<Vec<Code>>,
    watches: Vec<Vec<usize>>,
    // per variable: -1 unassigned, 0 false, 1 true
    assigns: Vec<i8>,
    level: Vec<usize>,
    reason: Vec<Option<usize>>,
    trail: Vec<Code>,
    trail_lim: Vec<usize>,
    qhead: usize,
    activity: Vec<f64>,
    var_inc: f64,
    phase: Vec<bool>,
    seen: Vec<bool>,
    heap: VarHeap,
    trivially_unsat: bool,
    pub conflicts: u64,
    pub decisions: u64,
}

impl SatSolver {
    /// `seed` perturbs the initial branching order.
    pub fn new(cnf: &[Clause], seed: u64) -> Self {
        let num_vars = cnf
            .iter()
            .flat_map(|c| c.vars())
            .map(|v| v.index() + 1)
            .max()
            .unwrap_or(0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let activity: Vec<f64> = (0..num_vars).map(|_| rng.gen::<f64>() * 1e-6).collect();
        let mut s = SatSolver {
            num_vars,
            input: cnf.to_vec(),
            clauses: Vec::new(),
            watches: vec![Vec::new(); 2 * num_vars],
            assigns: vec![UNDEF; num_vars],
            level: vec![0; num_vars],
            reason: vec![None; num_vars],
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            heap: VarHeap::new(num_vars),
            activity,
            var_inc: 1.0,
            phase: vec![false; num_vars],
            seen: vec![false; num_vars],
            trivially_unsat: false,
            conflicts: 0,
            decisions: 0,
        };
        for v in 0..num_vars {
            s.heap.insert(v, &s.activity);
        }
        let mut unique: HashSet<Vec<Code>> = HashSet::new();
        for clause in cnf {
            let mut lits: Vec<Code> = clause.lits().iter().map(|&l| code(l)).collect();
            lits.sort_unstable();
            if unique.insert(lits.clone()) {
                s.add_input_clause(lits);
            }
        }
        s
    }

    fn add_input_clause(&mut self, lits: Vec<Code>) {
        match lits.len() {
            0 => self.trivially_unsat = true,
            1 => match self.value(lits[0]) {
                Some(false) => self.trivially_unsat = true,
                Some(true) => {}
                None => self.enqueue(lits[0], None),
            },
            _ => {
                self.attach(lits);
            }
        }
    }

    fn attach(&mut self, lits: Vec<Code>) -> usize {
        let id = self.clauses.len();
        self.watches[lits[0] as usize].push(id);
        self.watches[lits[1] as usize].push(id);
        self.clauses.push(lits);
        id
    }

    fn value(&self, c: Code) -> Option<bool> {
        match self.assigns[var_of(c)] {
            UNDEF => None,
            a => Some((a == 1) != (c & 1 == 1)),
        }
    }

    fn decision_level(&self) -> usize {
        self.trail_lim.len()
    }

    fn enqueue(&mut self, c: Code, reason: Option<usize>) {
        let v = var_of(c);
        debug_assert_eq!(self.assigns[v], UNDEF);
        self.assigns[v] = i8::from(c & 1 == 0);
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(c);
    }

    fn propagate(&mut self) -> Option<usize> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            let false_lit = neg(p);
            let watching = std::mem::take(&mut self.watches[false_lit as usize]);
            let mut kept = Vec::with_capacity(watching.len());
            let mut conflict = None;
            let mut i = 0;
            while i < watching.len() {
                let ci = watching[i];
                i += 1;
                let clause = &mut self.clauses[ci];
                if clause[0] == false_lit {
                    clause.swap(0, 1);
                }
                let first = clause[0];
                if self.value(first) == Some(true) {
                    kept.push(ci);
                    continue;
                }
                let clause = &mut self.clauses[ci];
                let mut moved = false;
                for k in 2..clause.len() {
                    let lit = clause[k];
                    let val = match self.assigns[var_of(lit)] {
                        UNDEF => None,
                        a => Some((a == 1) != (lit & 1 == 1)),
                    };
                    if val != Some(false) {
                        clause.swap(1, k);
                        self.watches[clause[1] as usize].push(ci);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                kept.push(ci);
                if self.value(first) == Some(false) {
                    conflict = Some(ci);
                    kept.extend_from_slice(&watching[i..]);
                    break;
                }
                self.enqueue(first, Some(ci));
            }
            self.watches[false_lit as usize] = kept;
            if conflict.is_some() {
                self.qhead = self.trail.len();
                return conflict;
            }
        }
        None
    }

    fn bump(&mut self, v: usize) {
        self.activity[v] += self.var_inc;
        if self.activity[v] > 1e100 {
            for a in &mut self.activity {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.heap.increased(v, &self.activity);
    }

    /// First-UIP analysis; returns the learnt clause (asserting literal
    /// first, highest remaining level second) and the backjump level.
    fn analyze(&mut self, mut confl: usize) -> (Vec<Code>, usize) {
        let mut learnt: Vec<Code> = vec![0];
        let mut open = 0usize;
        let mut p: Option<Code> = None;
        let mut idx = self.trail.len();
        let current = self.decision_level();
        loop {
            let skip = usize::from(p.is_some());
            for k in skip..self.clauses[confl].len() {
                let q = self.clauses[confl][k];
                let v = var_of(q);
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    self.bump(v);
                    if self.level[v] >= current {
                        open += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[var_of(self.trail[idx])] {
                    break;
                }
            }
            let lit = self.trail[idx];
            p = Some(lit);
            self.seen[var_of(lit)] = false;
            open -= 1;
            if open == 0 {
                break;
            }
            confl = self.reason[var_of(lit)].expect("implied literal has a reason");
        }
        learnt[0] = neg(p.expect("conflict at a positive level"));
        for &q in &learnt[1..] {
            self.seen[var_of(q)] = false;
        }
        let mut bt = 0;
        if learnt.len() > 1 {
            let (best, _) = learnt
                .iter()
                .enumerate()
                .skip(1)
                .max_by_key(|(_, &q)| self.level[var_of(q)])
                .unwrap();
            learnt.swap(1, best);
            bt = self.level[var_of(learnt[1])];
        }
        (learnt, bt)
    }

    fn backtrack(&mut self, level: usize) {
        if self.decision_level() <= level {
            return;
        }
        let start = self.trail_lim[level];
        for &c in self.trail[start..].iter().rev() {
            let v = var_of(c);
            self.phase[v] = c & 1 == 0;
            self.assigns[v] = UNDEF;
            self.reason[v] = None;
            self.heap.insert(v, &self.activity);
        }
        self.trail.truncate(start);
        self.trail_lim.truncate(level);
        self.qhead = start;
    }

    fn pick_branch(&mut self) -> Option<Code> {
        while let Some(v) = self.heap.pop(&self.activity) {
            if self.assigns[v] == UNDEF {
                return Some((v as u32) << 1 | u32::from(!self.phase[v]));
            }
        }
        None
    }

    pub fn solve(mut self) -> SatResult {
        if self.trivially_unsat || self.propagate().is_some() {
            return SatResult::Unsat;
        }
        let mut restart_limit = RESTART_FIRST as f64;
        let mut since_restart = 0u64;
        loop {
            if let Some(confl) = self.propagate() {
                self.conflicts += 1;
                since_restart += 1;
                if self.decision_level() == 0 {
                    return SatResult::Unsat;
                }
                let (learnt, bt) = self.analyze(confl);
                self.backtrack(bt);
                if learnt.len() == 1 {
                    self.enqueue(learnt[0], None);
                } else {
                    let asserting = learnt[0];
                    let id = self.attach(learnt);
                    self.enqueue(asserting, Some(id));
                }
                self.var_inc /= ACTIVITY_DECAY;
                continue;
            }
            if since_restart as f64 >= restart_limit {
                since_restart = 0;
                restart_limit *= RESTART_GROWTH;
                self.backtrack(0);
                continue;
            }
            match self.pick_branch() {
                Some(lit) => {
                    self.decisions += 1;
                    self.trail_lim.push(self.trail.len());
                    self.enqueue(lit, None);
                }
                None => return SatResult::Sat(self.model()),
            }
        }
    }

    fn model(&self) -> Assignment {
        let mut m = Assignment::with_num_vars(self.num_vars);
        for v in 0..self.num_vars {
            m.assign(Var::from_index(v), self.assigns[v] == 1)
                .expect("each variable assigned once");
        }
        for clause in &self.input {
            assert_eq!(clause.eval(&m), Some(true), "SAT model violates clause {clause}");
        }
        m
    }
}

/// Max-heap of variables keyed by activity.
struct VarHeap {
    heap: Vec<usize>,
    pos: Vec<Option<usize>>,
}

impl VarHeap {
    fn new(n: usize) -> Self {
        VarHeap {
            heap: Vec::with_capacity(n),
            pos: vec![None; n],
        }
    }

    fn better(act: &[f64], a: usize, b: usize) -> bool {
        act[a] > act[b] || (act[a] == act[b] && a < b)
    }

    fn insert(&mut self, v: usize, act: &[f64]) {
        if self.pos[v].is_some() {
            return;
        }
        self.pos[v] = Some(self.heap.len());
        self.heap.push(v);
        self.sift_up(self.heap.len() - 1, act);
    }

    fn increased(&mut self, v: usize, act: &[f64]) {
        if let Some(i) = self.pos[v] {
            self.sift_up(i, act);
        }
    }

    fn pop(&mut self, act: &[f64]) -> Option<usize> {
        let top = *self.heap.first()?;
        let last = self.heap.pop().unwrap();
        self.pos[top] = None;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.pos[last] = Some(0);
            self.sift_down(0, act);
        }
        Some(top)
    }

    fn sift_up(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        while i > 0 {
            let parent = (i - 1) / 2;
            if !Self::better(act, v, self.heap[parent]) {
                break;
            }
            self.heap[i] = self.heap[parent];
            self.pos[self.heap[i]] = Some(i);
            i = parent;
        }
        self.heap[i] = v;
        self.pos[v] = Some(i);
    }

    fn sift_down(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        let n = self.heap.len();
        loop {
            let left = 2 * i + 1;
            if left >= n {
                break;
            }
            let right = left + 1;
            let child = if right < n && Self::better(act, self.heap[right], self.heap[left]) {
                right
            } else {
                left
            };
            if !Self::better(act, self.heap[child], v) {
                break;
            }
            self.heap[i] = self.heap[child];
            self.pos[self.heap[i]] = Some(i);
            i = child;
        }
        self.heap[i] = v;
        self.pos[v] = Some(i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cnf(c: &[&[i32]]) -> Vec<Clause> {
        c.iter().map(|l| Clause::from_dimacs(l)).collect()
    }

    #[test]
    fn contradictory_units() {
        assert_eq!(sat_solve(&cnf(&[&[2], &[-2]])), SatResult::Unsat);
    }

    #[test]
    fn forced_model() {
        let r = sat_solve(&cnf(&[&[2, 3], &[-2]]));
        let m = r.model().unwrap();
        assert_eq!(m.get(Var::new(2)), Some(false));
        assert_eq!(m.get(Var::new(3)), Some(true));
    }

    #[test]
    fn empty_cnf_and_empty_clause() {
        assert_eq!(sat_solve(&[]), SatResult::Sat(Assignment::new()));
        assert_eq!(sat_solve(&[Clause::default()]), SatResult::Unsat);
    }

    #[test]
    fn pigeonhole_three_into_two() {
        // p_{i,h}: pigeon i in hole h, var = 2*i + h + 1
        let v = |i: i32, h: i32| 2 * i + h + 1;
        let mut c: Vec<Vec<i32>> = (0..3).map(|i| vec![v(i, 0), v(i, 1)]).collect();
        for h in 0..2 {
            for i in 0..3 {
                for j in i + 1..3 {
                    c.push(vec![-v(i, h), -v(j, h)]);
                }
            }
        }
        let clauses: Vec<Clause> = c.iter().map(|l| Clause::from_dimacs(l)).collect();
        assert_eq!(sat_solve(&clauses), SatResult::Unsat);
    }

    #[test]
    fn duplicate_clauses_tolerated() {
        let r = sat_solve(&cnf(&[&[1, 2], &[2, 1], &[-1], &[-1]]));
        assert!(r.is_sat());
    }
}
