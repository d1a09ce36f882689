//! Prenex-CNF quantified Boolean formulas: literals, clauses, quantifier
//! prefixes, partial assignments, and the purely syntactic operations the
//! solvers build on (conditioning, residual extraction, prefix flattening).

use std::fmt;
use std::ops::Not;

use thiserror::Error;

/// A propositional variable, identified by a positive integer as in QDIMACS.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(u32);

impl Var {
    /// # Panics
    /// If `id` is zero.
    pub fn new(id: u32) -> Self {
        assert!(id >= 1, "variable identifiers start at 1");
        Var(id)
    }

    /// Variable with zero-based dense index `index`.
    pub fn from_index(index: usize) -> Self {
        Var(index as u32 + 1)
    }

    pub fn id(self) -> u32 {
        self.0
    }

    /// Zero-based dense index (`id - 1`).
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A variable together with a sign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit {
    var: Var,
    negated: bool,
}

impl Lit {
    pub fn new(var: Var, positive: bool) -> Self {
        Lit {
            var,
            negated: !positive,
        }
    }

    pub fn positive(var: Var) -> Self {
        Lit::new(var, true)
    }

    pub fn negative(var: Var) -> Self {
        Lit::new(var, false)
    }

    /// # Panics
    /// If `lit` is zero.
    pub fn from_dimacs(lit: i32) -> Self {
        assert!(lit != 0, "0 is not a literal");
        Lit::new(Var::new(lit.unsigned_abs()), lit > 0)
    }

    pub fn to_dimacs(self) -> i64 {
        let v = i64::from(self.var.id());
        if self.negated {
            -v
        } else {
            v
        }
    }

    pub fn var(self) -> Var {
        self.var
    }

    pub fn is_positive(self) -> bool {
        !self.negated
    }

    pub fn is_negated(self) -> bool {
        self.negated
    }

    /// Truth value of this literal when its variable takes `value`.
    pub fn eval(self, value: bool) -> bool {
        value != self.negated
    }
}

impl Not for Lit {
    type Output = Lit;

    fn not(self) -> Lit {
        Lit {
            var: self.var,
            negated: !self.negated,
        }
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

/// A disjunction of literals over distinct variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Clause {
    lits: Vec<Lit>,
}

impl Clause {
    /// Builds a clause, removing repeated literals (first occurrence wins).
    /// Returns `None` for a tautology. The result may be empty.
    pub fn normalize(lits: impl IntoIterator<Item = Lit>) -> Option<Clause> {
        let mut out: Vec<Lit> = Vec::new();
        for lit in lits {
            if out.contains(&!lit) {
                return None;
            }
            if !out.contains(&lit) {
                out.push(lit);
            }
        }
        Some(Clause { lits: out })
    }

    /// # Panics
    /// On a tautology or a zero literal.
    pub fn from_dimacs(lits: &[i32]) -> Clause {
        Clause::normalize(lits.iter().map(|&l| Lit::from_dimacs(l))).expect("tautological clause")
    }

    pub(crate) fn from_normalized(lits: Vec<Lit>) -> Clause {
        debug_assert!(Clause::normalize(lits.iter().copied()).map(|c| c.lits.len()) == Some(lits.len()));
        Clause { lits }
    }

    pub fn lits(&self) -> &[Lit] {
        &self.lits
    }

    pub fn len(&self) -> usize {
        self.lits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lits.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.lits.iter().map(|l| l.var())
    }

    /// `Some(true)` if a literal is true under `a`, `Some(false)` if every
    /// literal is false, `None` otherwise.
    pub fn eval(&self, a: &Assignment) -> Option<bool> {
        let mut undecided = false;
        for &lit in &self.lits {
            match a.lit_value(lit) {
                Some(true) => return Some(true),
                Some(false) => {}
                None => undecided = true,
            }
        }
        if undecided {
            None
        } else {
            Some(false)
        }
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for lit in &self.lits {
            write!(f, "{lit} ")?;
        }
        write!(f, "0")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Quantifier {
    Universal,
    Existential,
}

impl Quantifier {
    pub fn is_universal(self) -> bool {
        self == Quantifier::Universal
    }

    pub fn is_existential(self) -> bool {
        self == Quantifier::Existential
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantBlock {
    pub quantifier: Quantifier,
    pub vars: Vec<Var>,
}

impl QuantBlock {
    pub fn new(quantifier: Quantifier, vars: Vec<Var>) -> Self {
        QuantBlock { quantifier, vars }
    }

    pub fn universal(vars: impl IntoIterator<Item = u32>) -> Self {
        QuantBlock::new(Quantifier::Universal, vars.into_iter().map(Var::new).collect())
    }

    pub fn existential(vars: impl IntoIterator<Item = u32>) -> Self {
        QuantBlock::new(Quantifier::Existential, vars.into_iter().map(Var::new).collect())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormulaError {
    #[error("variable {0} quantified twice")]
    QuantifiedTwice(Var),
    #[error("variable {0} is already bound")]
    AlreadyBound(Var),
    #[error("universal variable {0} is not assigned")]
    UniversalUnassigned(Var),
    #[error("prefix is not of the form forall-exists (found {0} blocks with an inner universal)")]
    NotForallExists(usize),
}

/// Partial map from variables to truth values.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment {
    values: Vec<Option<bool>>,
    bound: usize,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_num_vars(n: usize) -> Self {
        Assignment {
            values: vec![None; n],
            bound: 0,
        }
    }

    pub fn get(&self, var: Var) -> Option<bool> {
        self.values.get(var.index()).copied().flatten()
    }

    pub fn lit_value(&self, lit: Lit) -> Option<bool> {
        self.get(lit.var()).map(|v| lit.eval(v))
    }

    pub fn is_bound(&self, var: Var) -> bool {
        self.get(var).is_some()
    }

    /// Binds `var`; a variable may be bound only once.
    pub fn assign(&mut self, var: Var, value: bool) -> Result<(), FormulaError> {
        if var.index() >= self.values.len() {
            self.values.resize(var.index() + 1, None);
        }
        let slot = &mut self.values[var.index()];
        if slot.is_some() {
            return Err(FormulaError::AlreadyBound(var));
        }
        *slot = Some(value);
        self.bound += 1;
        Ok(())
    }

    /// Number of bound variables.
    pub fn len(&self) -> usize {
        self.bound
    }

    pub fn is_empty(&self) -> bool {
        self.bound == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, bool)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|b| (Var::from_index(i), b)))
    }

    /// The bound variables as true literals, in variable order.
    pub fn to_lits(&self) -> Vec<Lit> {
        self.iter().map(|(v, b)| Lit::new(v, b)).collect()
    }
}

impl FromIterator<(Var, bool)> for Assignment {
    /// # Panics
    /// If a variable occurs twice.
    fn from_iter<I: IntoIterator<Item = (Var, bool)>>(iter: I) -> Self {
        let mut a = Assignment::new();
        for (v, b) in iter {
            a.assign(v, b).expect("variable bound twice");
        }
        a
    }
}

/// Prenex CNF formula `Q1 V1 ... Qt Vt . matrix`.
///
/// Every variable `1..=num_vars` belongs to exactly one block; adjacent
/// blocks carry different quantifiers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QbfFormula {
    num_vars: u32,
    prefix: Vec<QuantBlock>,
    matrix: Vec<Clause>,
    // per variable index: (quantifier, block index)
    binding: Vec<(Quantifier, usize)>,
}

impl QbfFormula {
    /// Validates and normalizes a formula. Empty blocks are dropped,
    /// adjacent blocks with equal quantifiers merged, and variables up to
    /// the largest identifier that no block names are appended to a
    /// trailing existential block.
    pub fn new(prefix: Vec<QuantBlock>, matrix: Vec<Clause>) -> Result<Self, FormulaError> {
        Self::with_num_vars(0, prefix, matrix)
    }

    /// As [`QbfFormula::new`], declaring at least `num_vars` variables.
    pub fn with_num_vars(
        num_vars: u32,
        prefix: Vec<QuantBlock>,
        matrix: Vec<Clause>,
    ) -> Result<Self, FormulaError> {
        let max_prefix = prefix.iter().flat_map(|b| b.vars.iter()).map(|v| v.id()).max();
        let max_matrix = matrix.iter().flat_map(|c| c.vars()).map(|v| v.id()).max();
        let n = num_vars.max(max_prefix.unwrap_or(0)).max(max_matrix.unwrap_or(0));

        let mut seen = vec![false; n as usize];
        let mut blocks: Vec<QuantBlock> = Vec::new();
        for block in prefix {
            for &v in &block.vars {
                if std::mem::replace(&mut seen[v.index()], true) {
                    return Err(FormulaError::QuantifiedTwice(v));
                }
            }
            push_block(&mut blocks, block);
        }
        let free: Vec<Var> = (0..n as usize)
            .filter(|&i| !seen[i])
            .map(Var::from_index)
            .collect();
        push_block(&mut blocks, QuantBlock::new(Quantifier::Existential, free));

        let mut binding = vec![(Quantifier::Existential, 0); n as usize];
        for (bi, block) in blocks.iter().enumerate() {
            for &v in &block.vars {
                binding[v.index()] = (block.quantifier, bi);
            }
        }
        Ok(QbfFormula {
            num_vars: n,
            prefix: blocks,
            matrix,
            binding,
        })
    }

    /// Purely existential formula (a plain CNF).
    pub fn cnf(matrix: Vec<Clause>) -> Self {
        QbfFormula::new(Vec::new(), matrix).expect("empty prefix is always valid")
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn prefix(&self) -> &[QuantBlock] {
        &self.prefix
    }

    pub fn matrix(&self) -> &[Clause] {
        &self.matrix
    }

    pub fn num_clauses(&self) -> usize {
        self.matrix.len()
    }

    pub fn quantifier(&self, var: Var) -> Option<Quantifier> {
        self.binding.get(var.index()).map(|b| b.0)
    }

    pub fn block_of(&self, var: Var) -> Option<usize> {
        self.binding.get(var.index()).map(|b| b.1)
    }

    pub fn is_universal(&self, var: Var) -> bool {
        self.quantifier(var) == Some(Quantifier::Universal)
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> {
        (1..=self.num_vars).map(Var::new)
    }

    pub fn universal_vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.vars().filter(|&v| self.is_universal(v))
    }

    pub fn existential_vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.vars().filter(|&v| !self.is_universal(v))
    }

    /// N_u.
    pub fn num_universal(&self) -> usize {
        self.universal_vars().count()
    }

    /// N_e.
    pub fn num_existential(&self) -> usize {
        self.existential_vars().count()
    }

    /// M / N_e, or `None` when there are no existential variables.
    pub fn alpha_e(&self) -> Option<f64> {
        let ne = self.num_existential();
        (ne > 0).then(|| self.matrix.len() as f64 / ne as f64)
    }

    /// M / N_u, or `None` when there are no universal variables.
    pub fn alpha_u(&self) -> Option<f64> {
        let nu = self.num_universal();
        (nu > 0).then(|| self.matrix.len() as f64 / nu as f64)
    }

    /// Number of quantifier blocks.
    pub fn alternations(&self) -> usize {
        self.prefix.len()
    }

    /// True when no universal block follows an existential one (this
    /// includes purely existential and purely universal prefixes).
    pub fn is_forall_exists(&self) -> bool {
        let mut seen_exists = false;
        for b in &self.prefix {
            match b.quantifier {
                Quantifier::Existential => seen_exists = true,
                Quantifier::Universal if seen_exists => return false,
                Quantifier::Universal => {}
            }
        }
        true
    }

    /// Same prefix, different matrix.
    pub fn with_matrix(&self, matrix: Vec<Clause>) -> QbfFormula {
        QbfFormula {
            matrix,
            ..self.clone()
        }
    }
}

fn push_block(blocks: &mut Vec<QuantBlock>, block: QuantBlock) {
    if block.vars.is_empty() {
        return;
    }
    match blocks.last_mut() {
        Some(last) if last.quantifier == block.quantifier => last.vars.extend(block.vars),
        _ => blocks.push(block),
    }
}

/// Result of [`condition`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conditioned {
    /// Surviving clauses with false literals removed. Clauses that lost every
    /// literal are not included.
    pub clauses: Vec<Clause>,
    pub empty_clause: bool,
}

/// Simplifies `matrix` under the partial assignment `a`.
pub fn condition(matrix: &[Clause], a: &Assignment) -> Conditioned {
    let mut clauses = Vec::with_capacity(matrix.len());
    let mut empty_clause = false;
    'clauses: for clause in matrix {
        let mut kept = Vec::with_capacity(clause.len());
        for &lit in clause.lits() {
            match a.lit_value(lit) {
                Some(true) => continue 'clauses,
                Some(false) => {}
                None => kept.push(lit),
            }
        }
        if kept.is_empty() {
            empty_clause = true;
        } else {
            clauses.push(Clause::from_normalized(kept));
        }
    }
    Conditioned {
        clauses,
        empty_clause,
    }
}

/// Clauses of a forall-exists formula left unsatisfied by the total
/// universal assignment `sigma`, with universal literals deleted. The result
/// may contain an empty clause.
pub fn residual_existential(f: &QbfFormula, sigma: &Assignment) -> Result<Vec<Clause>, FormulaError> {
    if !f.is_forall_exists() {
        return Err(FormulaError::NotForallExists(f.alternations()));
    }
    if let Some(v) = f.universal_vars().find(|&v| !sigma.is_bound(v)) {
        return Err(FormulaError::UniversalUnassigned(v));
    }
    let residual = f
        .matrix()
        .iter()
        .filter(|c| {
            !c.lits()
                .iter()
                .any(|&l| f.is_universal(l.var()) && sigma.lit_value(l) == Some(true))
        })
        .map(|c| {
            Clause::from_normalized(
                c.lits()
                    .iter()
                    .copied()
                    .filter(|l| !f.is_universal(l.var()))
                    .collect(),
            )
        })
        .collect();
    Ok(residual)
}

/// Output of [`to_two_alternation`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Flattened {
    pub formula: QbfFormula,
    /// Set when the input had no universal variables; `formula` is then the
    /// input unchanged.
    pub purely_existential: bool,
}

/// Moves every universal block to the front: `forall (U1 ∪ U2 ...) exists
/// (E1 ∪ E2 ...)` over the same matrix. Unsatisfiability of the result
/// implies unsatisfiability of the input; the converse does not hold.
pub fn to_two_alternation(f: &QbfFormula) -> Flattened {
    if f.num_universal() == 0 {
        return Flattened {
            formula: f.clone(),
            purely_existential: true,
        };
    }
    let gather = |q: Quantifier| {
        f.prefix()
            .iter()
            .filter(|b| b.quantifier == q)
            .flat_map(|b| b.vars.iter().copied())
            .collect::<Vec<_>>()
    };
    let prefix = vec![
        QuantBlock::new(Quantifier::Universal, gather(Quantifier::Universal)),
        QuantBlock::new(Quantifier::Existential, gather(Quantifier::Existential)),
    ];
    let formula = QbfFormula::with_num_vars(f.num_vars(), prefix, f.matrix().to_vec())
        .expect("regrouping a valid prefix keeps variables distinct");
    Flattened {
        formula,
        purely_existential: false,
    }
}
