//! Survey propagation.
//!
//! `u[e]` for edge `(i, a)` is u_{a→i}; the survey (warning probability) is
//! η_{a→i} = 1 − u_{a→i}. The trivial fixed point is `u ≡ 1` (no warnings).
//! Messages are floored at 1e-12 when read, but never capped below 1, so the
//! trivial fixed point is reproduced exactly.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bp::{BpParams, INIT_RANGE, MESSAGE_FLOOR};
use crate::formula::Var;
use crate::graph::FactorGraph;
use crate::scalar::Real;

/// Default threshold on max η for [`is_nontrivial`].
pub const DEFAULT_EPS_TRIVIAL: f64 = 1e-3;

/// Normalized cavity triple (ψ^U, ψ^S, ψ^*) of one edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Survey<T> {
    pub unsat: T,
    pub sat: T,
    pub joker: T,
}

impl<T: Real> Survey<T> {
    pub fn all_joker() -> Self {
        Survey {
            unsat: T::zero(),
            sat: T::zero(),
            joker: T::one(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpState<T> {
    /// u_{a→i}, indexed by edge id.
    pub u: Vec<T>,
    /// (ψ^U, ψ^S, ψ^*)_{i→a}, indexed by edge id.
    pub surveys: Vec<Survey<T>>,
    pub sweeps: usize,
    pub residual: T,
    /// Cavity triples that vanished before normalization and were replaced
    /// by the all-joker triple.
    pub jokers: usize,
}

impl<T: Real> SpState<T> {
    pub fn random<R: Rng>(g: &FactorGraph, rng: &mut R) -> Self {
        let u = (0..g.num_edges())
            .map(|_| T::lit(rng.gen_range(INIT_RANGE.0..INIT_RANGE.1)))
            .collect();
        Self::from_u(g, u)
    }

    /// Every message set to `value`; `uniform(g, 1)` is the trivial fixed point.
    pub fn uniform(g: &FactorGraph, value: T) -> Self {
        Self::from_u(g, vec![value; g.num_edges()])
    }

    pub fn from_u(g: &FactorGraph, u: Vec<T>) -> Self {
        assert_eq!(u.len(), g.num_edges());
        let mut s = SpState {
            surveys: vec![Survey::all_joker(); u.len()],
            u,
            sweeps: 0,
            residual: T::zero(),
            jokers: 0,
        };
        for e in 0..g.num_edges() {
            let (survey, degenerate) = cavity_survey(g, &s.u, e);
            s.surveys[e] = survey;
            s.jokers += usize::from(degenerate);
        }
        s
    }

    /// η_{a→i} = 1 − u_{a→i} per edge.
    pub fn eta(&self) -> impl Iterator<Item = T> + '_ {
        self.u.iter().map(|&u| T::one() - u)
    }

    pub fn max_eta(&self) -> T {
        self.eta().fold(T::zero(), T::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpRun<T> {
    pub state: SpState<T>,
    pub converged: bool,
}

fn floor<T: Real>(x: T) -> T {
    x.max(T::lit(MESSAGE_FLOOR))
}

/// Normalizes three non-negative weights; all-zero gives the joker triple and
/// `true`.
fn normalize<T: Real>(a: T, b: T, c: T) -> ([T; 3], bool) {
    let total = a + b + c;
    if total > T::zero() && total.is_finite() {
        ([a / total, b / total, c / total], false)
    } else {
        ([T::zero(), T::zero(), T::one()], true)
    }
}

fn cavity_survey<T: Real>(g: &FactorGraph, u: &[T], e: usize) -> (Survey<T>, bool) {
    let edge = g.edge(e);
    let (mut same, mut opposite) = (T::one(), T::one());
    for &f in g.var_edges(edge.var) {
        if f == e {
            continue;
        }
        if g.edge(f).negated == edge.negated {
            same = same * floor(u[f]);
        } else {
            opposite = opposite * floor(u[f]);
        }
    }
    let ([unsat, sat, joker], degenerate) = normalize(
        (T::one() - opposite) * same,
        (T::one() - same) * opposite,
        same * opposite,
    );
    (Survey { unsat, sat, joker }, degenerate)
}

/// u_{a→i} = 1 − Π_{j∈∂a∖i} ψ^U_{j→a}.
fn clause_message<T: Real>(g: &FactorGraph, state: &mut SpState<T>, e: usize) -> T {
    let clause = g.edge(e).clause;
    let mut prod = T::one();
    for f in g.clause_edges(clause) {
        if f == e {
            continue;
        }
        let (survey, degenerate) = cavity_survey(g, &state.u, f);
        state.surveys[f] = survey;
        state.jokers += usize::from(degenerate);
        prod = prod * survey.unsat;
    }
    T::one() - prod
}

/// Continues SP sweeps from `state`; same schedule and stopping rule as BP.
pub fn sp_iterate<T: Real, R: Rng>(
    g: &FactorGraph,
    state: &mut SpState<T>,
    p: &BpParams<T>,
    rng: &mut R,
) -> bool {
    p.validate();
    let mut order: Vec<usize> = (0..g.num_edges()).collect();
    for _ in 0..p.t_max {
        order.shuffle(rng);
        let mut residual = T::zero();
        for &e in &order {
            let fresh = clause_message(g, state, e);
            let old = state.u[e];
            let new = p.damping * old + (T::one() - p.damping) * fresh;
            residual = residual.max((new - old).abs());
            state.u[e] = new;
        }
        state.sweeps += 1;
        state.residual = residual;
        debug_assert!(state.surveys.iter().all(|s| {
            let sum = s.unsat + s.sat + s.joker;
            (sum - T::one()).abs() < T::lit(1e-5)
        }));
        if residual < p.epsilon {
            return true;
        }
    }
    false
}

/// Randomly initialized SP run seeded from `p.seed`.
pub fn sp_run<T: Real>(g: &FactorGraph, p: &BpParams<T>) -> SpRun<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut state = SpState::random(g, &mut rng);
    let converged = sp_iterate(g, &mut state, p, &mut rng);
    SpRun { state, converged }
}

/// Per-variable (ψ^+, ψ^*, ψ^−).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpMarginal<T> {
    pub plus: T,
    pub joker: T,
    pub minus: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpMarginals<T> {
    pub vars: Vec<SpMarginal<T>>,
}

impl<T: Real> SpMarginals<T> {
    pub fn get(&self, var: Var) -> SpMarginal<T> {
        self.vars[var.index()]
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

/// SP marginals; isolated variables are (0, 1, 0).
pub fn sp_marginals<T: Real>(g: &FactorGraph, s: &SpState<T>) -> SpMarginals<T> {
    let vars = (0..g.num_vars())
        .map(|i| {
            let (mut pos, mut neg) = (T::one(), T::one());
            for &f in g.var_edges(Var::from_index(i)) {
                if g.edge(f).negated {
                    neg = neg * floor(s.u[f]);
                } else {
                    pos = pos * floor(s.u[f]);
                }
            }
            let ([plus, minus, joker], _) =
                normalize((T::one() - pos) * neg, (T::one() - neg) * pos, pos * neg);
            SpMarginal { plus, joker, minus }
        })
        .collect();
    SpMarginals { vars }
}

/// Whether some survey η = 1 − u exceeds `eps_trivial`.
pub fn is_nontrivial<T: Real>(s: &SpState<T>, eps_trivial: T) -> bool {
    s.eta().any(|eta| eta > eps_trivial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::Clause;

    fn graph(m: &[&[i32]]) -> FactorGraph {
        let m: Vec<Clause> = m.iter().map(|c| Clause::from_dimacs(c)).collect();
        FactorGraph::build(&m, 0)
    }

    fn eps() -> f64 {
        DEFAULT_EPS_TRIVIAL
    }

    #[test]
    fn trivial_point_is_fixed() {
        let g = graph(&[&[1, 2, -3], &[-1, 2], &[3, -2, 4], &[1, 4]]);
        let mut s = SpState::<f64>::uniform(&g, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = BpParams::default().with_t_max(1);
        assert!(sp_iterate(&g, &mut s, &p, &mut rng));
        assert!(s.u.iter().all(|&u| u == 1.0));
        assert!(!is_nontrivial(&s, eps()));
        let m = sp_marginals(&g, &s);
        assert!(m.vars.iter().all(|v| v.plus == 0.0 && v.minus == 0.0 && v.joker == 1.0));
    }

    #[test]
    fn unit_clause_warns() {
        let g = graph(&[&[1]]);
        let run = sp_run(&g, &BpParams::<f64>::default());
        assert!(run.converged);
        assert_eq!(run.state.u[0], 0.0);
        assert!(is_nontrivial(&run.state, eps()));
        let m = sp_marginals(&g, &run.state).get(Var::new(1));
        assert!((m.plus - 1.0).abs() < 1e-9);
        assert!(m.joker.abs() < 1e-9 && m.minus.abs() < 1e-9);
    }

    #[test]
    fn binary_clause_relaxes_to_trivial_point() {
        let g = graph(&[&[1, 2]]);
        let run = sp_run(&g, &BpParams::<f64>::default());
        assert!(run.converged);
        assert!(run.state.u.iter().all(|&u| u == 1.0));
        let m = sp_marginals(&g, &run.state);
        assert!(m.vars.iter().all(|v| v.joker == 1.0));
    }

    #[test]
    fn balanced_variable_symmetric() {
        // x appears once positive, once negative; the neighbours force nothing
        let g = graph(&[&[1], &[-2], &[2, 3], &[-2, -3]]);
        let mut s = SpState::<f64>::from_u(&g, vec![0.5; g.num_edges()]);
        let edges = g.var_edges(Var::new(3)).to_vec();
        s.u[edges[0]] = 0.3;
        s.u[edges[1]] = 0.3;
        let m = sp_marginals(&g, &s).get(Var::new(3));
        assert!((m.plus - m.minus).abs() < 1e-15);
    }

    #[test]
    fn triples_are_probability_vectors() {
        let g = graph(&[&[1, 2, -3], &[-1, 3], &[2, -3], &[1, 3, 4], &[-4]]);
        let run = sp_run(&g, &BpParams::<f64>::default().with_seed(9));
        for s in &run.state.surveys {
            assert!((s.unsat + s.sat + s.joker - 1.0).abs() < 1e-9);
        }
        for v in sp_marginals(&g, &run.state).vars {
            assert!((v.plus + v.joker + v.minus - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn isolated_variable_is_joker() {
        let m = vec![Clause::from_dimacs(&[1])];
        let g = FactorGraph::build(&m, 2);
        let run = sp_run(&g, &BpParams::<f64>::default());
        let v = sp_marginals(&g, &run.state).get(Var::new(2));
        assert_eq!((v.plus, v.joker, v.minus), (0.0, 1.0, 0.0));
    }
}
