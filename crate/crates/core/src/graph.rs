//! Variable/clause incidence structure of a CNF matrix.

use std::ops::Range;

use crate::formula::{Clause, Var};

/// One occurrence of a variable in a clause.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub var: Var,
    pub clause: usize,
    pub negated: bool,
}

/// Factor graph of a CNF: clauses are factors, variables are nodes.
///
/// Edges are stored clause-major, so the edges of clause `a` are the
/// contiguous range [`FactorGraph::clause_edges`]. For an edge `(i, a)`, the
/// other occurrences of `i` split into the same-sign set S_ia and the
/// opposite-sign set U_ia.
#[derive(Clone, Debug)]
pub struct FactorGraph {
    num_vars: usize,
    edges: Vec<Edge>,
    clause_start: Vec<usize>,
    var_start: Vec<usize>,
    var_edge_ids: Vec<usize>,
}

impl FactorGraph {
    /// Builds the graph over variables `1..=max(num_vars, largest id in matrix)`.
    /// Clauses must not repeat a variable.
    pub fn build(matrix: &[Clause], num_vars: usize) -> Self {
        let num_vars = matrix
            .iter()
            .flat_map(|c| c.vars())
            .map(|v| v.index() + 1)
            .max()
            .unwrap_or(0)
            .max(num_vars);

        let mut edges = Vec::with_capacity(matrix.iter().map(Clause::len).sum());
        let mut clause_start = Vec::with_capacity(matrix.len() + 1);
        for (a, clause) in matrix.iter().enumerate() {
            clause_start.push(edges.len());
            for &lit in clause.lits() {
                edges.push(Edge {
                    var: lit.var(),
                    clause: a,
                    negated: lit.is_negated(),
                });
            }
        }
        clause_start.push(edges.len());

        let mut degree = vec![0usize; num_vars + 1];
        for e in &edges {
            degree[e.var.index() + 1] += 1;
        }
        let mut var_start = degree;
        for i in 1..var_start.len() {
            var_start[i] += var_start[i - 1];
        }
        let mut fill = var_start.clone();
        let mut var_edge_ids = vec![0; edges.len()];
        for (id, e) in edges.iter().enumerate() {
            let slot = &mut fill[e.var.index()];
            var_edge_ids[*slot] = id;
            *slot += 1;
        }

        FactorGraph {
            num_vars,
            edges,
            clause_start,
            var_start,
            var_edge_ids,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_clauses(&self) -> usize {
        self.clause_start.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, id: usize) -> Edge {
        self.edges[id]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge ids of clause `a`.
    pub fn clause_edges(&self, a: usize) -> Range<usize> {
        self.clause_start[a]..self.clause_start[a + 1]
    }

    /// Edge ids incident to `var`, in clause order.
    pub fn var_edges(&self, var: Var) -> &[usize] {
        let i = var.index();
        &self.var_edge_ids[self.var_start[i]..self.var_start[i + 1]]
    }

    pub fn degree(&self, var: Var) -> usize {
        self.var_edges(var).len()
    }

    /// Edge id of the occurrence of `var` in clause `a`, if any.
    pub fn find_edge(&self, var: Var, a: usize) -> Option<usize> {
        self.clause_edges(a).find(|&e| self.edges[e].var == var)
    }

    /// ∂+i: clauses containing `var` non-negated.
    pub fn positive_clauses(&self, var: Var) -> impl Iterator<Item = usize> + '_ {
        self.var_edges(var)
            .iter()
            .map(|&e| self.edges[e])
            .filter(|e| !e.negated)
            .map(|e| e.clause)
    }

    /// ∂−i: clauses containing `var` negated.
    pub fn negative_clauses(&self, var: Var) -> impl Iterator<Item = usize> + '_ {
        self.var_edges(var)
            .iter()
            .map(|&e| self.edges[e])
            .filter(|e| e.negated)
            .map(|e| e.clause)
    }

    /// S_ia for edge `(i, a)`: other clauses where `i` has the same sign as in `a`.
    pub fn same_sign(&self, edge: usize) -> impl Iterator<Item = usize> + '_ {
        let e = self.edges[edge];
        self.var_edges(e.var)
            .iter()
            .filter(move |&&f| f != edge && self.edges[f].negated == e.negated)
            .map(|&f| self.edges[f].clause)
    }

    /// U_ia for edge `(i, a)`: clauses where `i` has the opposite sign.
    pub fn opposite_sign(&self, edge: usize) -> impl Iterator<Item = usize> + '_ {
        let e = self.edges[edge];
        self.var_edges(e.var)
            .iter()
            .filter(move |&&f| self.edges[f].negated != e.negated)
            .map(|&f| self.edges[f].clause)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(m: &[&[i32]], n: usize) -> FactorGraph {
        let m: Vec<Clause> = m.iter().map(|c| Clause::from_dimacs(c)).collect();
        FactorGraph::build(&m, n)
    }

    fn v(i: u32) -> Var {
        Var::new(i)
    }

    #[test]
    fn single_clause_occurrences() {
        let g = graph(&[&[1, -2]], 0);
        assert_eq!(g.positive_clauses(v(1)).collect::<Vec<_>>(), vec![0]);
        assert_eq!(g.negative_clauses(v(1)).count(), 0);
        assert_eq!(g.positive_clauses(v(2)).count(), 0);
        assert_eq!(g.negative_clauses(v(2)).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn same_and_opposite_sign_sets() {
        // a = (x ∨ y), b = (¬x ∨ y)
        let g = graph(&[&[1, 2], &[-1, 2]], 0);
        let xa = g.find_edge(v(1), 0).unwrap();
        assert_eq!(g.same_sign(xa).count(), 0);
        assert_eq!(g.opposite_sign(xa).collect::<Vec<_>>(), vec![1]);
        let ya = g.find_edge(v(2), 0).unwrap();
        assert_eq!(g.same_sign(ya).collect::<Vec<_>>(), vec![1]);
        assert_eq!(g.opposite_sign(ya).count(), 0);
    }

    #[test]
    fn isolated_variable_present() {
        let g = graph(&[&[1]], 3);
        assert_eq!(g.num_vars(), 3);
        assert!(g.var_edges(v(3)).is_empty());
        assert_eq!(g.positive_clauses(v(2)).count(), 0);
    }

    #[test]
    fn partition_invariant() {
        let g = graph(&[&[1, 2, -3], &[-1, 3], &[1, -2], &[2, 3]], 0);
        for id in 0..g.num_edges() {
            let e = g.edge(id);
            let mut all: Vec<usize> = std::iter::once(e.clause)
                .chain(g.same_sign(id))
                .chain(g.opposite_sign(id))
                .collect();
            all.sort();
            let mut incident: Vec<usize> = g.var_edges(e.var).iter().map(|&f| g.edge(f).clause).collect();
            incident.sort();
            assert_eq!(all, incident);
        }
    }
}
