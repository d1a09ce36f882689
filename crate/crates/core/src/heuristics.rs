//! Variable biases and the decision policies of the QBF solver: static BP
//! orders (one-shot and decimated), literal-count VSIDS, and index order.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::bp::{bp_marginals, bp_run, BpMarginals, BpParams};
use crate::formula::{condition, Assignment, Lit, QbfFormula, Var};
use crate::graph::FactorGraph;
use crate::qdpll::{qdpll_solve, Brancher, QdpllOutcome};
use crate::scalar::Real;
use crate::seeds::derive;
use crate::sp::SpMarginals;

pub const DEFAULT_TIE_EPSILON: f64 = 1e-6;

/// Number of conflicts between two halvings of the VSIDS scores.
pub const VSIDS_DECAY_INTERVAL: u64 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Favored {
    Positive,
    Negative,
    None,
}

impl Favored {
    /// The favored truth value, if any.
    pub fn value(self) -> Option<bool> {
        match self {
            Favored::Positive => Some(true),
            Favored::Negative => Some(false),
            Favored::None => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bias<T> {
    pub var: Var,
    pub favored: Favored,
    /// max(ψ^+, ψ^−).
    pub magnitude: T,
}

impl<T: Real> Bias<T> {
    fn from_pair(var: Var, plus: T, minus: T, tie_epsilon: T) -> Self {
        let favored = if (plus - minus).abs() < tie_epsilon {
            Favored::None
        } else if plus > minus {
            Favored::Positive
        } else {
            Favored::Negative
        };
        Bias {
            var,
            favored,
            magnitude: plus.max(minus),
        }
    }

    /// Sort key for ranking; unbiased variables all rank at exactly 1/2.
    pub fn rank_key(&self) -> T {
        match self.favored {
            Favored::None => T::half(),
            _ => self.magnitude,
        }
    }
}

/// Marginals a bias can be read from.
pub trait BiasSource<T> {
    fn biases(&self, tie_epsilon: T) -> Vec<Bias<T>>;
}

impl<T: Real> BiasSource<T> for BpMarginals<T> {
    fn biases(&self, tie_epsilon: T) -> Vec<Bias<T>> {
        self.psi_plus
            .iter()
            .enumerate()
            .map(|(i, &p)| Bias::from_pair(Var::from_index(i), p, T::one() - p, tie_epsilon))
            .collect()
    }
}

impl<T: Real> BiasSource<T> for SpMarginals<T> {
    /// Uses the pair (ψ^+, ψ^−) renormalized to sum to one; an all-joker
    /// variable is unbiased with magnitude 1/2.
    fn biases(&self, tie_epsilon: T) -> Vec<Bias<T>> {
        self.vars
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let var = Var::from_index(i);
                let mass = m.plus + m.minus;
                if mass <= T::zero() {
                    Bias {
                        var,
                        favored: Favored::None,
                        magnitude: T::half(),
                    }
                } else {
                    Bias::from_pair(var, m.plus / mass, m.minus / mass, tie_epsilon)
                }
            })
            .collect()
    }
}

pub fn compute_bias<T: Real, M: BiasSource<T>>(marginals: &M, tie_epsilon: T) -> Vec<Bias<T>> {
    marginals.biases(tie_epsilon)
}

/// Index of the highest-ranked bias among `candidates` (ties: lowest variable).
pub(crate) fn most_biased<T: Real>(biases: &[Bias<T>], candidates: impl Iterator<Item = Var>) -> Option<Var> {
    let mut best: Option<(Var, T)> = None;
    for v in candidates {
        let key = biases[v.index()].rank_key();
        let better = match best {
            None => true,
            Some((bv, bk)) => key > bk || (key == bk && v < bv),
        };
        if better {
            best = Some((v, key));
        }
    }
    best.map(|(v, _)| v)
}

/// First value to try: against the bias for universals, with it for
/// existentials, false when unbiased.
pub fn first_sign(universal: bool, favored: Favored) -> bool {
    match favored.value() {
        Some(v) => v != universal,
        None => false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderEntry {
    pub var: Var,
    pub first_sign: bool,
    /// Bias magnitude the entry was ranked by (1/2 when unbiased).
    pub bias: f64,
}

/// Static branching sequence covering every variable exactly once.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionOrder {
    entries: Vec<OrderEntry>,
}

impl DecisionOrder {
    /// # Panics
    /// If a variable repeats.
    pub fn new(entries: Vec<OrderEntry>) -> Self {
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            assert!(seen.insert(e.var), "variable {} repeated in decision order", e.var);
        }
        DecisionOrder { entries }
    }

    /// Ascending variable index, every first sign false.
    pub fn by_index(f: &QbfFormula) -> Self {
        DecisionOrder::new(
            f.vars()
                .map(|var| OrderEntry {
                    var,
                    first_sign: false,
                    bias: 0.5,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[OrderEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Whether the order names every variable of `f` exactly once.
    pub fn covers(&self, f: &QbfFormula) -> bool {
        let mut seen = vec![false; f.num_vars() as usize];
        for e in &self.entries {
            match seen.get_mut(e.var.index()) {
                Some(s) if !*s => *s = true,
                _ => return false,
            }
        }
        seen.iter().all(|&s| s)
    }

    /// CSV with header `rank,variable,first_sign,bias`; ranks start at 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,variable,first_sign,bias\n");
        for (rank, e) in self.entries.iter().enumerate() {
            out.push_str(&format!("{},{},{},{}\n", rank + 1, e.var, e.first_sign, e.bias));
        }
        out
    }

    pub fn brancher(&self, num_vars: usize) -> StaticBrancher {
        StaticBrancher::new(self, num_vars)
    }
}

/// One-shot BP order: BP on the whole matrix ignoring quantifiers, every
/// variable ranked by bias.
pub fn bph_order<T: Real>(f: &QbfFormula, p: &BpParams<T>) -> DecisionOrder {
    let g = FactorGraph::build(f.matrix(), f.num_vars() as usize);
    let run = bp_run(&g, p);
    let biases = compute_bias(&bp_marginals(&g, &run.state), T::lit(DEFAULT_TIE_EPSILON));
    let mut ranked: Vec<&Bias<T>> = biases.iter().collect();
    ranked.sort_by(|a, b| {
        b.rank_key()
            .partial_cmp(&a.rank_key())
            .expect("bias magnitudes are finite")
            .then(a.var.cmp(&b.var))
    });
    DecisionOrder::new(
        ranked
            .into_iter()
            .map(|b| OrderEntry {
                var: b.var,
                first_sign: first_sign(f.is_universal(b.var), b.favored),
                bias: b.rank_key().as_f64(),
            })
            .collect(),
    )
}

/// Decimated BP order: repeatedly run BP on the conditioned matrix, take the
/// most biased unassigned variable of the outermost open block, fix it to its
/// first sign and condition. Once the matrix is empty or contains an empty
/// clause the remaining variables follow block by block in index order.
pub fn bpdh_order<T: Real>(f: &QbfFormula, p: &BpParams<T>) -> DecisionOrder {
    let n = f.num_vars() as usize;
    let mut matrix = f.matrix().to_vec();
    let mut assigned = vec![false; n];
    let mut entries = Vec::with_capacity(n);
    let mut stalled = false;

    for (b, block) in f.prefix().iter().enumerate() {
        let mut members = block.vars.clone();
        members.sort();
        while members.iter().any(|v| !assigned[v.index()]) {
            if stalled || matrix.is_empty() {
                break;
            }
            let g = FactorGraph::build(&matrix, n);
            let run = bp_run(&g, &p.with_seed(derive(p.seed, entries.len() as u64)));
            let biases = compute_bias(&bp_marginals(&g, &run.state), T::lit(DEFAULT_TIE_EPSILON));
            let var = most_biased(&biases, members.iter().copied().filter(|v| !assigned[v.index()]))
                .expect("block has an unassigned member");
            let bias = &biases[var.index()];
            let value = first_sign(f.is_universal(var), bias.favored);
            entries.push(OrderEntry {
                var,
                first_sign: value,
                bias: bias.rank_key().as_f64(),
            });
            assigned[var.index()] = true;
            let single: Assignment = [(var, value)].into_iter().collect();
            let reduced = condition(&matrix, &single);
            matrix = reduced.clauses;
            stalled = reduced.empty_clause;
            debug_assert_eq!(f.block_of(var), Some(b));
        }
        for v in members {
            if !assigned[v.index()] {
                assigned[v.index()] = true;
                entries.push(OrderEntry {
                    var: v,
                    first_sign: false,
                    bias: 0.5,
                });
            }
        }
    }
    DecisionOrder::new(entries)
}

/// Follows a static order, restricted to the block the solver allows.
#[derive(Clone, Debug)]
pub struct StaticBrancher {
    rank: Vec<usize>,
    sign: Vec<bool>,
}

impl StaticBrancher {
    pub fn new(order: &DecisionOrder, num_vars: usize) -> Self {
        let mut rank = vec![usize::MAX; num_vars];
        let mut sign = vec![false; num_vars];
        for (r, e) in order.entries().iter().enumerate() {
            rank[e.var.index()] = r;
            sign[e.var.index()] = e.first_sign;
        }
        StaticBrancher { rank, sign }
    }
}

impl Brancher for StaticBrancher {
    fn pick(&mut self, candidates: &[Var]) -> (Var, bool) {
        let var = *candidates
            .iter()
            .min_by_key(|v| (self.rank[v.index()], v.index()))
            .expect("non-empty candidates");
        (var, self.sign[var.index()])
    }
}

/// Literal-occurrence VSIDS. Without clause learning the counts never grow,
/// so the periodic halving only rescales them.
#[derive(Clone, Debug)]
pub struct Vsids {
    // [positive, negative] per variable
    scores: Vec<[f64; 2]>,
    conflicts: u64,
}

impl Vsids {
    pub fn new(f: &QbfFormula) -> Self {
        let mut scores = vec![[0.0; 2]; f.num_vars() as usize];
        for clause in f.matrix() {
            for &l in clause.lits() {
                scores[l.var().index()][usize::from(l.is_negated())] += 1.0;
            }
        }
        Vsids {
            scores,
            conflicts: 0,
        }
    }

    pub fn score(&self, lit: Lit) -> f64 {
        self.scores[lit.var().index()][usize::from(lit.is_negated())]
    }
}

impl Brancher for Vsids {
    /// Highest-scoring literal; ties go to the lower variable, then to the
    /// negative literal.
    fn pick(&mut self, candidates: &[Var]) -> (Var, bool) {
        let mut best: Option<(Lit, f64)> = None;
        for &v in candidates {
            for lit in [Lit::negative(v), Lit::positive(v)] {
                let s = self.score(lit);
                if best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((lit, s));
                }
            }
        }
        let (lit, _) = best.expect("non-empty candidates");
        (lit.var(), lit.is_positive())
    }

    fn on_conflict(&mut self) {
        self.conflicts += 1;
        if self.conflicts.is_multiple_of(VSIDS_DECAY_INTERVAL) {
            for s in &mut self.scores {
                s[0] *= 0.5;
                s[1] *= 0.5;
            }
        }
    }
}

/// Decision heuristic selectable for the QBF solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Heuristic {
    Vsids,
    Bph,
    Bpdh,
    Index,
}

impl Heuristic {
    pub const ALL: [Heuristic; 4] = [Heuristic::Vsids, Heuristic::Bph, Heuristic::Bpdh, Heuristic::Index];

    pub fn name(self) -> &'static str {
        match self {
            Heuristic::Vsids => "vsids",
            Heuristic::Bph => "bph",
            Heuristic::Bpdh => "bpdh",
            Heuristic::Index => "index",
        }
    }

    /// The static order this heuristic follows, if it has one.
    pub fn order<T: Real>(self, f: &QbfFormula, p: &BpParams<T>) -> Option<DecisionOrder> {
        match self {
            Heuristic::Vsids => None,
            Heuristic::Bph => Some(bph_order(f, p)),
            Heuristic::Bpdh => Some(bpdh_order(f, p)),
            Heuristic::Index => Some(DecisionOrder::by_index(f)),
        }
    }

    pub fn brancher<T: Real>(self, f: &QbfFormula, p: &BpParams<T>) -> Box<dyn Brancher> {
        match self.order(f, p) {
            Some(order) => Box::new(order.brancher(f.num_vars() as usize)),
            None => Box::new(Vsids::new(f)),
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown heuristic `{0}` (expected vsids, bph, bpdh or index)")]
pub struct UnknownHeuristic(pub String);

impl FromStr for Heuristic {
    type Err = UnknownHeuristic;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Heuristic::ALL
            .into_iter()
            .find(|h| h.name() == s)
            .ok_or_else(|| UnknownHeuristic(s.to_string()))
    }
}

/// Solves `f` with `heuristic`; wall time includes computing the order.
pub fn solve_with<T: Real>(f: &QbfFormula, heuristic: Heuristic, p: &BpParams<T>) -> QdpllOutcome {
    let start = Instant::now();
    let mut brancher = heuristic.brancher(f, p);
    let mut out = qdpll_solve(f, &mut brancher);
    out.stats.wall_time = start.elapsed().as_secs_f64();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{Clause, QuantBlock};
    use crate::sp::SpMarginal;

    fn ae(m: &[&[i32]]) -> QbfFormula {
        QbfFormula::new(
            vec![QuantBlock::universal([1]), QuantBlock::existential([2])],
            m.iter().map(|c| Clause::from_dimacs(c)).collect(),
        )
        .unwrap()
    }

    fn entry_pairs(o: &DecisionOrder) -> Vec<(u32, bool)> {
        o.entries().iter().map(|e| (e.var.id(), e.first_sign)).collect()
    }

    #[test]
    fn bias_from_bp_marginal() {
        let b = compute_bias(&BpMarginals { psi_plus: vec![0.8f64, 0.5] }, 1e-6);
        assert_eq!(b[0].favored, Favored::Positive);
        assert!((b[0].magnitude - 0.8).abs() < 1e-15);
        assert_eq!(b[1].favored, Favored::None);
        assert_eq!(b[1].magnitude, 0.5);
    }

    #[test]
    fn bias_from_sp_marginal() {
        let m = SpMarginals {
            vars: vec![
                SpMarginal { plus: 0.1f64, joker: 0.6, minus: 0.3 },
                SpMarginal { plus: 0.0, joker: 1.0, minus: 0.0 },
            ],
        };
        let b = compute_bias(&m, 1e-6);
        assert_eq!(b[0].favored, Favored::Negative);
        assert!((b[0].magnitude - 0.75).abs() < 1e-12);
        assert_eq!(b[1].favored, Favored::None);
        assert_eq!(b[1].magnitude, 0.5);
    }

    #[test]
    fn bph_example() {
        let f = ae(&[&[1, 2], &[1, -2]]);
        let o = bph_order(&f, &BpParams::<f64>::default());
        assert_eq!(entry_pairs(&o), vec![(1, false), (2, false)]);
        assert!(o.covers(&f));
    }

    #[test]
    fn bph_flip_covariance() {
        let f = ae(&[&[-1, 2], &[-1, -2]]);
        let o = bph_order(&f, &BpParams::<f64>::default());
        assert_eq!(entry_pairs(&o), vec![(1, true), (2, false)]);
    }

    #[test]
    fn bph_all_unbiased_falls_back_to_index() {
        let f = QbfFormula::new(
            vec![QuantBlock::universal([1, 2]), QuantBlock::existential([3])],
            vec![],
        )
        .unwrap();
        let o = bph_order(&f, &BpParams::<f64>::default());
        assert_eq!(entry_pairs(&o), vec![(1, false), (2, false), (3, false)]);
    }

    #[test]
    fn bpdh_example() {
        let f = ae(&[&[1, 2], &[1, -2]]);
        let o = bpdh_order(&f, &BpParams::<f64>::default());
        assert_eq!(o.entries()[0].var, Var::new(1));
        assert!(!o.entries()[0].first_sign);
        assert_eq!(o.entries()[1].var, Var::new(2));
    }

    #[test]
    fn bpdh_empty_matrix_is_prefix_order() {
        let f = QbfFormula::new(
            vec![QuantBlock::universal([3, 1]), QuantBlock::existential([2])],
            vec![],
        )
        .unwrap();
        let o = bpdh_order(&f, &BpParams::<f64>::default());
        assert_eq!(entry_pairs(&o), vec![(1, false), (3, false), (2, false)]);
    }

    #[test]
    fn bpdh_universals_first() {
        let f = QbfFormula::new(
            vec![QuantBlock::universal([4, 5]), QuantBlock::existential([1, 2, 3])],
            [[1, 4, -2], [-1, 5, 3], [2, -4, 3], [-3, -5, 1]]
                .iter()
                .map(|c| Clause::from_dimacs(c))
                .collect(),
        )
        .unwrap();
        let o = bpdh_order(&f, &BpParams::<f64>::default());
        let firsts: Vec<u32> = o.entries()[..2].iter().map(|e| e.var.id()).collect();
        assert!(firsts.contains(&4) && firsts.contains(&5));
        assert!(o.covers(&f));
    }

    #[test]
    fn vsids_scores_and_first_decision() {
        let f = ae(&[&[1, 2], &[1, -2]]);
        let mut v = Vsids::new(&f);
        assert_eq!(v.score(Lit::from_dimacs(1)), 2.0);
        assert_eq!(v.score(Lit::from_dimacs(-1)), 0.0);
        assert_eq!(v.score(Lit::from_dimacs(2)), 1.0);
        assert_eq!(v.score(Lit::from_dimacs(-2)), 1.0);
        assert_eq!(v.pick(&[Var::new(1)]), (Var::new(1), true));
        assert_eq!(v.pick(&[Var::new(2)]), (Var::new(2), false));
    }

    #[test]
    fn vsids_equal_counts_pick_lowest_index() {
        let f = QbfFormula::cnf(vec![Clause::from_dimacs(&[1, 2, 3])]);
        let mut v = Vsids::new(&f);
        assert_eq!(v.pick(&[Var::new(2), Var::new(3)]).0, Var::new(2));
    }

    #[test]
    fn vsids_decay_preserves_argmax() {
        let f = QbfFormula::cnf(
            [[1, 2], [1, -3], [-2, 3], [1, 3]]
                .iter()
                .map(|c| Clause::from_dimacs(c))
                .collect(),
        );
        let mut v = Vsids::new(&f);
        let cands = [Var::new(1), Var::new(2), Var::new(3)];
        let before = v.pick(&cands);
        for _ in 0..VSIDS_DECAY_INTERVAL {
            v.on_conflict();
        }
        assert_eq!(v.score(Lit::from_dimacs(1)), 1.5);
        assert_eq!(v.pick(&cands), before);
    }

    #[test]
    fn heuristic_names_parse() {
        for h in Heuristic::ALL {
            assert_eq!(h.name().parse::<Heuristic>().unwrap(), h);
        }
        assert!("moms".parse::<Heuristic>().is_err());
    }

    #[test]
    fn order_csv() {
        let f = ae(&[&[1, 2]]);
        let csv = DecisionOrder::by_index(&f).to_csv();
        assert_eq!(csv, "rank,variable,first_sign,bias\n1,1,false,0.5\n2,2,false,0.5\n");
    }
}
