//! Belief propagation over the clause factor graph.
//!
//! Messages live on edges. `u[e]` for edge `e = (i, a)` is the clause-to-
//! variable message u_{a→i}; `psi[e]` is the cavity message ψ_{i→a}, the
//! probability that `i` takes the value violating `a` when `a` is removed.
//! Updates are asynchronous over a seeded random edge permutation per sweep.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::formula::Var;
use crate::graph::FactorGraph;
use crate::scalar::Real;

/// Messages are read through this clamp before entering a product.
pub(crate) const MESSAGE_FLOOR: f64 = 1e-12;

/// Range random initial messages are drawn from.
pub(crate) const INIT_RANGE: (f64, f64) = (0.01, 0.99);

#[derive(Clone, Debug, PartialEq)]
pub struct BpParams<T> {
    /// Maximum number of sweeps.
    pub t_max: usize,
    /// A run converges once the largest message change in a sweep drops below this.
    pub epsilon: T,
    /// Weight of the old message in `u ← d·u_old + (1−d)·u_new`, in `[0, 1)`.
    pub damping: T,
    pub seed: u64,
}

impl<T: Real> Default for BpParams<T> {
    fn default() -> Self {
        BpParams {
            t_max: 300,
            epsilon: T::lit(1e-7),
            damping: T::zero(),
            seed: 0,
        }
    }
}

impl<T: Real> BpParams<T> {
    pub fn with_seed(&self, seed: u64) -> Self {
        BpParams {
            seed,
            ..self.clone()
        }
    }

    pub fn with_t_max(&self, t_max: usize) -> Self {
        BpParams {
            t_max,
            ..self.clone()
        }
    }

    pub fn with_epsilon(&self, epsilon: T) -> Self {
        BpParams {
            epsilon,
            ..self.clone()
        }
    }

    pub(crate) fn validate(&self) {
        assert!(self.t_max >= 1, "t_max must be at least 1");
        assert!(self.epsilon > T::zero(), "epsilon must be positive");
        assert!(
            self.damping >= T::zero() && self.damping < T::one(),
            "damping must lie in [0, 1)"
        );
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BpState<T> {
    /// u_{a→i}, indexed by edge id.
    pub u: Vec<T>,
    /// ψ_{i→a}, indexed by edge id.
    pub psi: Vec<T>,
    pub sweeps: usize,
    /// Largest absolute change of a `u` message in the last sweep.
    pub residual: T,
}

impl<T: Real> BpState<T> {
    /// Messages `u` drawn uniformly from [0.01, 0.99]; cavity messages
    /// computed from them.
    pub fn random<R: Rng>(g: &FactorGraph, rng: &mut R) -> Self {
        let u = (0..g.num_edges())
            .map(|_| T::lit(rng.gen_range(INIT_RANGE.0..INIT_RANGE.1)))
            .collect();
        Self::from_u(g, u)
    }

    /// State with the given clause-to-variable messages.
    pub fn from_u(g: &FactorGraph, u: Vec<T>) -> Self {
        assert_eq!(u.len(), g.num_edges());
        let mut s = BpState {
            psi: vec![T::half(); u.len()],
            u,
            sweeps: 0,
            residual: T::zero(),
        };
        for e in 0..g.num_edges() {
            s.psi[e] = cavity_psi(g, &s.u, e);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BpRun<T> {
    pub state: BpState<T>,
    pub converged: bool,
    pub sweeps: usize,
}

pub(crate) fn clamp<T: Real>(x: T) -> T {
    let lo = T::lit(MESSAGE_FLOOR);
    let hi = T::one() - lo;
    x.max(lo).min(hi)
}

/// `Π_A u · Π_B (1−u) / (Π_A u · Π_B (1−u) + Π_B u · Π_A (1−u))` over
/// clamped messages, where `items` yields `(u, in_a)`. Empty products are 1.
/// Falls back to log space when the products underflow.
fn share<T: Real, I>(items: impl Fn() -> I) -> T
where
    I: Iterator<Item = (T, bool)>,
{
    let (mut a_u, mut a_c, mut b_u, mut b_c) = (T::one(), T::one(), T::one(), T::one());
    for (u, in_a) in items() {
        let u = clamp(u);
        if in_a {
            a_u = a_u * u;
            a_c = a_c * (T::one() - u);
        } else {
            b_u = b_u * u;
            b_c = b_c * (T::one() - u);
        }
    }
    let num = a_u * b_c;
    let den = num + b_u * a_c;
    if den >= T::min_positive_value() && den.is_finite() {
        return num / den;
    }
    // log-weights of the two alternatives
    let (mut la, mut lb) = (T::zero(), T::zero());
    for (u, in_a) in items() {
        let u = clamp(u);
        if in_a {
            la = la + u.ln();
            lb = lb + (T::one() - u).ln();
        } else {
            lb = lb + u.ln();
            la = la + (T::one() - u).ln();
        }
    }
    let r = T::one() / (T::one() + (lb - la).exp());
    debug_assert!(r.is_finite());
    r
}

/// ψ_{i→a} for edge `e = (i, a)` from the current `u` messages.
pub(crate) fn cavity_psi<T: Real>(g: &FactorGraph, u: &[T], e: usize) -> T {
    let edge = g.edge(e);
    let incident = g.var_edges(edge.var);
    share(|| {
        incident
            .iter()
            .filter(move |&&f| f != e)
            .map(move |&f| (u[f], g.edge(f).negated == edge.negated))
    })
}

/// u_{b→i} = (1 − P) / (2 − P), P the product of ψ over the other members of `b`.
fn clause_message<T: Real>(g: &FactorGraph, state: &mut BpState<T>, e: usize) -> T {
    let clause = g.edge(e).clause;
    let mut prod = T::one();
    for f in g.clause_edges(clause) {
        if f == e {
            continue;
        }
        let psi = cavity_psi(g, &state.u, f);
        state.psi[f] = psi;
        prod = prod * clamp(psi);
    }
    (T::one() - prod) / (T::two() - prod)
}

/// Continues asynchronous sweeps on `state` until the residual falls below
/// `p.epsilon` or `p.t_max` sweeps have run. Returns whether it converged.
pub fn bp_iterate<T: Real, R: Rng>(
    g: &FactorGraph,
    state: &mut BpState<T>,
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
        debug_assert!(
            state
                .u
                .iter()
                .chain(&state.psi)
                .all(|&m| m >= T::zero() && m <= T::one()),
            "BP message left [0, 1]"
        );
        if residual < p.epsilon {
            return true;
        }
    }
    false
}

/// Randomly initialized BP run, seeded from `p.seed`.
pub fn bp_run<T: Real>(g: &FactorGraph, p: &BpParams<T>) -> BpRun<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut state = BpState::random(g, &mut rng);
    let converged = bp_iterate(g, &mut state, p, &mut rng);
    BpRun {
        sweeps: state.sweeps,
        state,
        converged,
    }
}

/// Per-variable ψ_i^+ (index = variable index).
#[derive(Clone, Debug, PartialEq)]
pub struct BpMarginals<T> {
    pub psi_plus: Vec<T>,
}

impl<T: Real> BpMarginals<T> {
    pub fn plus(&self, var: Var) -> T {
        self.psi_plus[var.index()]
    }

    pub fn minus(&self, var: Var) -> T {
        T::one() - self.psi_plus[var.index()]
    }

    pub fn len(&self) -> usize {
        self.psi_plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi_plus.is_empty()
    }
}

/// ψ_i^+ for every variable; isolated variables get 1/2.
pub fn bp_marginals<T: Real>(g: &FactorGraph, s: &BpState<T>) -> BpMarginals<T> {
    let psi_plus = (0..g.num_vars())
        .map(|i| {
            let incident = g.var_edges(Var::from_index(i));
            // weight of "true": violated clauses are those with i negated
            share(|| incident.iter().map(|&f| (s.u[f], g.edge(f).negated)))
        })
        .collect();
    BpMarginals { psi_plus }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::Clause;

    fn graph(m: &[&[i32]]) -> FactorGraph {
        let m: Vec<Clause> = m.iter().map(|c| Clause::from_dimacs(c)).collect();
        FactorGraph::build(&m, 0)
    }

    fn tight() -> BpParams<f64> {
        BpParams::default().with_epsilon(1e-13).with_t_max(10_000)
    }

    #[test]
    fn unit_clause_message_is_zero() {
        let g = graph(&[&[1]]);
        let run = bp_run(&g, &BpParams::<f64>::default());
        assert!(run.converged);
        assert_eq!(run.state.u[0], 0.0);
        let m = bp_marginals(&g, &run.state);
        assert!((m.plus(Var::new(1)) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn single_binary_clause_fixed_point() {
        let g = graph(&[&[1, 2]]);
        let run = bp_run(&g, &tight());
        assert!(run.converged);
        for e in 0..2 {
            assert!((run.state.u[e] - 1.0 / 3.0).abs() < 1e-12);
            assert!((run.state.psi[e] - 0.5).abs() < 1e-12);
        }
        let m = bp_marginals(&g, &run.state);
        assert!((m.plus(Var::new(1)) - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.plus(Var::new(2)) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn loopy_pair_closed_form() {
        let g = graph(&[&[1, 2], &[-1, 2]]);
        let run = bp_run(&g, &tight());
        assert!(run.converged);
        let sqrt2 = 2f64.sqrt();
        for a in 0..2 {
            let e1 = g.find_edge(Var::new(1), a).unwrap();
            let e2 = g.find_edge(Var::new(2), a).unwrap();
            assert!((run.state.u[e1] - (sqrt2 - 1.0)).abs() < 1e-10);
            assert!((run.state.u[e2] - (1.0 - 1.0 / sqrt2)).abs() < 1e-10);
        }
        let m = bp_marginals(&g, &run.state);
        assert!((m.plus(Var::new(1)) - 0.5).abs() < 1e-10);
        assert!((m.plus(Var::new(2)) - (2.0 + sqrt2) / 4.0).abs() < 1e-10);
    }

    #[test]
    fn f32_kernel_agrees() {
        let g = graph(&[&[1, 2]]);
        let p = BpParams::<f32>::default().with_epsilon(1e-6);
        let run = bp_run(&g, &p);
        assert!(run.converged);
        let m = bp_marginals(&g, &run.state);
        assert!((m.plus(Var::new(1)) - 2.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn isolated_variable_is_unbiased() {
        let m: Vec<Clause> = vec![Clause::from_dimacs(&[1])];
        let g = FactorGraph::build(&m, 2);
        let run = bp_run(&g, &BpParams::<f64>::default());
        assert_eq!(bp_marginals(&g, &run.state).plus(Var::new(2)), 0.5);
    }

    #[test]
    fn contradictory_units_stay_finite() {
        let g = graph(&[&[1], &[-1]]);
        let run = bp_run(&g, &BpParams::<f64>::default());
        let m = bp_marginals(&g, &run.state);
        assert!((m.plus(Var::new(1)) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn high_degree_underflow_handled_in_f32() {
        // 40 unit clauses on x and one on ¬x: products of clamped messages underflow in f32
        let mut m: Vec<Clause> = (0..40).map(|_| Clause::from_dimacs(&[1])).collect();
        m.push(Clause::from_dimacs(&[-1, 2]));
        let g = FactorGraph::build(&m, 0);
        let run = bp_run(&g, &BpParams::<f32>::default());
        let marg = bp_marginals(&g, &run.state);
        assert!(marg.psi_plus.iter().all(|x| x.is_finite()));
        assert!(marg.plus(Var::new(1)) > 0.99);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let g = graph(&[&[1, 2, -3], &[-1, 3], &[2, -3], &[1, 3, 4]]);
        let p = BpParams::<f64>::default().with_seed(42);
        assert_eq!(bp_run(&g, &p), bp_run(&g, &p));
    }

    #[test]
    fn damping_still_converges() {
        let g = graph(&[&[1, 2], &[-1, 2]]);
        let p = BpParams {
            damping: 0.5,
            ..tight()
        };
        let run = bp_run(&g, &p);
        assert!(run.converged);
        let m = bp_marginals(&g, &run.state);
        assert!((m.plus(Var::new(1)) - 0.5).abs() < 1e-9);
    }
}
