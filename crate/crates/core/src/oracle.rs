//! Extensional oracle.
//!
//! Every statement is replaced by the explicit set of tuple pairs it accepts
//! over the whole domain (the product of all taxonomy value sets). The
//! operators are re-run with set operations in place of logical tests, so
//! their results can be compared with the symbolic rewriting.

use std::collections::HashMap;
use std::fmt;

use fixedbitset::FixedBitSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::eval::Masks;
use crate::formula::{Formula, Schema, Statement, TTuple};
use crate::rewrite::{apply_stages, canonicalize, Canonical, Op, RewriteConfig, RewriteError};

/// Default limit on the enumerated domain size.
pub const DEFAULT_MAX_DOMAIN: usize = 250_000;

/// Upper bound on the number of statements the oracle operators may hold.
pub const MAX_ORACLE_STATEMENTS: usize = 4096;

const MAX_SAMPLE: usize = 10;

// Below this many row-bit operations a composition stays on one thread.
const PAR_THRESHOLD: usize = 1 << 16;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("domain has {size} tuples, above the limit of {max}")]
    DomainTooLarge { size: usize, max: usize },
    #[error("oracle produced more than {0} statements")]
    TooManyStatements(usize),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
}

/// A binary relation over `0..n`, stored as one bit row per left element.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PairSet {
    n: usize,
    rows: Vec<FixedBitSet>,
}

impl fmt::Debug for PairSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.pairs()).finish()
    }
}

impl PairSet {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            rows: vec![FixedBitSet::with_capacity(n); n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn insert(&mut self, i: usize, j: usize) {
        self.rows[i].insert(j);
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.rows[i].contains(j)
    }

    pub fn row(&self, i: usize) -> &FixedBitSet {
        &self.rows[i]
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(FixedBitSet::is_clear)
    }

    pub fn count(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones(..)).sum()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.ones().map(move |j| (i, j)))
    }

    pub fn is_subset(&self, other: &PairSet) -> bool {
        self.rows.iter().zip(&other.rows).all(|(a, b)| a.is_subset(b))
    }

    pub fn union_with(&mut self, other: &PairSet) {
        for (a, b) in self.rows.iter_mut().zip(&other.rows) {
            a.union_with(b);
        }
    }

    pub fn difference_with(&mut self, other: &PairSet) {
        for (a, b) in self.rows.iter_mut().zip(&other.rows) {
            a.difference_with(b);
        }
    }

    pub fn transpose(&self) -> PairSet {
        let mut t = PairSet::new(self.n);
        for (i, j) in self.pairs() {
            t.rows[j].insert(i);
        }
        t
    }

    /// `{(a, c) | (a, b) in self, (b, c) in other}`. Identical rows are
    /// composed once; distinct rows are composed in parallel.
    pub fn compose(&self, other: &PairSet) -> PairSet {
        let mut slot: HashMap<&FixedBitSet, usize> = HashMap::new();
        let mut keys: Vec<&FixedBitSet> = Vec::new();
        let idx: Vec<Option<usize>> = self
            .rows
            .iter()
            .map(|row| {
                (!row.is_clear()).then(|| {
                    *slot.entry(row).or_insert_with(|| {
                        keys.push(row);
                        keys.len() - 1
                    })
                })
            })
            .collect();
        let compose_row = |row: &&FixedBitSet| {
            let mut acc = FixedBitSet::with_capacity(self.n);
            for b in row.ones() {
                acc.union_with(&other.rows[b]);
            }
            acc
        };
        let done: Vec<FixedBitSet> = if keys.len() * self.n > PAR_THRESHOLD {
            keys.par_iter().map(compose_row).collect()
        } else {
            keys.iter().map(compose_row).collect()
        };
        let mut out = PairSet::new(self.n);
        for (a, k) in idx.into_iter().enumerate() {
            if let Some(k) = k {
                out.rows[a] = done[k].clone();
            }
        }
        out
    }

    /// Transitive closure by Warshall's algorithm.
    pub fn transitive_closure(&self) -> PairSet {
        let mut r = self.clone();
        for k in 0..self.n {
            let rk = r.rows[k].clone();
            for i in 0..self.n {
                if r.rows[i].contains(k) {
                    r.rows[i].union_with(&rk);
                }
            }
        }
        r
    }

    pub fn is_transitive(&self) -> bool {
        self.compose(self).is_subset(self)
    }

    /// Pairs `(i, j)` with `(j, i)` absent.
    pub fn strict_part(&self) -> PairSet {
        let mut s = self.clone();
        let t = self.transpose();
        s.difference_with(&t);
        s
    }
}

/// Statements represented by their extensions over a fixed domain.
#[derive(Debug, Clone)]
pub struct ExtensionRelation {
    pub statements: Vec<(String, PairSet)>,
    n: usize,
}

impl ExtensionRelation {
    pub fn new(n: usize, statements: Vec<(String, PairSet)>) -> Self {
        Self { statements, n }
    }

    pub fn domain_size(&self) -> usize {
        self.n
    }

    pub fn union(&self) -> PairSet {
        let mut u = PairSet::new(self.n);
        for (_, e) in &self.statements {
            u.union_with(e);
        }
        u
    }

    pub fn ids(&self) -> Vec<&str> {
        self.statements.iter().map(|(id, _)| id.as_str()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&PairSet> {
        self.statements
            .iter()
            .find(|(i, _)| i == id)
            .map(|(_, e)| e)
    }
}

/// Every tuple of the product of the schema's value sets, in lexicographic
/// order of value ids.
pub fn enumerate_domain(schema: &Schema, max: usize) -> Result<Vec<TTuple>, OracleError> {
    let size = schema.domain_size();
    if size > max {
        return Err(OracleError::DomainTooLarge { size, max });
    }
    let dims: Vec<usize> = schema.attributes().iter().map(|a| a.taxonomy.len()).collect();
    let mut out = Vec::with_capacity(size);
    let mut cur = vec![0u32; dims.len()];
    for _ in 0..size {
        out.push(TTuple::new(cur.clone()));
        for k in (0..dims.len()).rev() {
            cur[k] += 1;
            if (cur[k] as usize) < dims[k] {
                break;
            }
            cur[k] = 0;
        }
    }
    Ok(out)
}

/// Weak-preference pairs of the whole formula over `domain`.
pub fn formula_extension(f: &Formula, domain: &[TTuple]) -> PairSet {
    let m = Masks::compute(f, domain);
    let n = domain.len();
    let k = f.clause_count();
    let mut worse_sets = vec![FixedBitSet::with_capacity(n); k];
    for j in 0..n {
        for (c, set) in worse_sets.iter_mut().enumerate() {
            if m.worse_bit(j, c) {
                set.insert(j);
            }
        }
    }
    let mut out = PairSet::new(n);
    let mut memo: HashMap<&[u64], FixedBitSet> = HashMap::new();
    for i in 0..n {
        let key = m.better_words(i);
        if key.iter().all(|&w| w == 0) {
            continue;
        }
        let row = memo.entry(key).or_insert_with(|| {
            let mut acc = FixedBitSet::with_capacity(n);
            for (c, set) in worse_sets.iter().enumerate() {
                if key[c / 64] >> (c % 64) & 1 == 1 {
                    acc.union_with(set);
                }
            }
            acc
        });
        out.rows[i] = row.clone();
    }
    out
}

pub fn statement_extension(schema: &std::sync::Arc<Schema>, s: &Statement, domain: &[TTuple]) -> PairSet {
    formula_extension(&Formula::new(schema.clone(), vec![s.clone()]), domain)
}

/// Per-statement extensions of `f` over `domain`.
pub fn extension(f: &Formula, domain: &[TTuple]) -> ExtensionRelation {
    ExtensionRelation::new(
        domain.len(),
        f.statements
            .iter()
            .map(|s| (s.id.clone(), statement_extension(&f.schema, s, domain)))
            .collect(),
    )
}

/// Drops empty statements and every statement contained in another one
/// (strictly, or equal with an earlier position).
pub fn oracle_simplify(ext: &ExtensionRelation) -> ExtensionRelation {
    let stmts: Vec<&(String, PairSet)> =
        ext.statements.iter().filter(|(_, e)| !e.is_empty()).collect();
    let n = stmts.len();
    let mut out = Vec::new();
    for i in 0..n {
        let covered = (0..n).any(|j| {
            j != i
                && stmts[i].1.is_subset(&stmts[j].1)
                && (j < i || !stmts[j].1.is_subset(&stmts[i].1))
        });
        if !covered {
            out.push(stmts[i].clone());
        }
    }
    ExtensionRelation::new(ext.n, out)
}

pub fn oracle_t(ext: &ExtensionRelation) -> Result<ExtensionRelation, OracleError> {
    let base = oracle_simplify(ext);
    let orig = base.statements.clone();
    let mut acc = orig.clone();
    loop {
        let mut progress = false;
        let mut i = 0;
        while i < acc.len() {
            for (qid, q) in &orig {
                let e = acc[i].1.compose(q);
                if e.is_empty() || acc.iter().any(|(_, a)| e.is_subset(a)) {
                    continue;
                }
                let id = format!("{}*{}", acc[i].0, qid);
                acc.push((id, e));
                progress = true;
                if acc.len() > MAX_ORACLE_STATEMENTS {
                    return Err(OracleError::TooManyStatements(MAX_ORACLE_STATEMENTS));
                }
            }
            i += 1;
        }
        if !progress {
            break;
        }
    }
    Ok(oracle_simplify(&ExtensionRelation::new(ext.n, acc)))
}

pub fn oracle_s(ext: &ExtensionRelation) -> ExtensionRelation {
    let mut stmts = oracle_simplify(ext).statements;
    loop {
        let rev: Vec<PairSet> = stmts.iter().map(|(_, e)| e.transpose()).collect();
        let mut next = Vec::with_capacity(stmts.len());
        let mut changed = false;
        for (id, e) in &stmts {
            let imp: Vec<usize> = (0..stmts.len())
                .filter(|&j| rev[j].is_subset(e) && !e.is_subset(&rev[j]))
                .collect();
            if imp.is_empty() {
                next.push((id.clone(), e.clone()));
                continue;
            }
            changed = true;
            let mut e = e.clone();
            let mut id = id.clone();
            for j in imp {
                e.difference_with(&rev[j]);
                id = format!("{id}!{}", stmts[j].0);
            }
            if !e.is_empty() {
                next.push((id, e));
            }
        }
        stmts = next;
        if !changed {
            break;
        }
    }
    oracle_simplify(&ExtensionRelation::new(ext.n, stmts))
}

pub fn oracle_op(ext: &ExtensionRelation, op: Op) -> Result<ExtensionRelation, OracleError> {
    match op {
        Op::T => oracle_t(ext),
        Op::S => Ok(oracle_s(ext)),
    }
}

/// The input followed by the result of each operator of `seq`.
pub fn oracle_stages(
    ext: &ExtensionRelation,
    seq: Canonical,
) -> Result<Vec<ExtensionRelation>, OracleError> {
    let mut out = vec![ext.clone()];
    for &op in seq.ops() {
        let next = oracle_op(out.last().unwrap(), op)?;
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct PairWitness {
    pub better: String,
    pub worse: String,
    /// `"formula"` when only the rewritten formula accepts the pair.
    pub only_in: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub formula_statements: usize,
    pub oracle_statements: usize,
    pub formula_pairs: usize,
    pub oracle_pairs: usize,
    pub mismatches: usize,
    pub sample: Vec<PairWitness>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub sequence: String,
    pub canonical: String,
    pub domain_size: usize,
    pub stages: Vec<StageReport>,
}

impl EquivalenceReport {
    pub fn ok(&self) -> bool {
        self.stages.iter().all(|s| s.mismatches == 0)
    }
}

impl fmt::Display for EquivalenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "sequence {:?} (canonical {}), domain of {} tuples",
            self.sequence, self.canonical, self.domain_size
        )?;
        for s in &self.stages {
            writeln!(
                f,
                "  {:<5} {} | formula {} stmts / {} pairs, oracle {} stmts / {} pairs, {} mismatches",
                s.stage,
                if s.mismatches == 0 { "ok      " } else { "MISMATCH" },
                s.formula_statements,
                s.formula_pairs,
                s.oracle_statements,
                s.oracle_pairs,
                s.mismatches
            )?;
            for w in &s.sample {
                writeln!(f, "      {} > {} only in {}", w.better, w.worse, w.only_in)?;
            }
        }
        write!(f, "result: {}", if self.ok() { "equivalent" } else { "MISMATCH" })
    }
}

/// Runs the symbolic and extensional pipelines side by side and compares
/// the weak preference relation after every operator.
pub fn check_equivalence(
    f: &Formula,
    word: &str,
    max_domain: usize,
) -> Result<EquivalenceReport, OracleError> {
    check_equivalence_with(f, word, max_domain, RewriteConfig::default())
}

pub fn check_equivalence_with(
    f: &Formula,
    word: &str,
    max_domain: usize,
    cfg: RewriteConfig,
) -> Result<EquivalenceReport, OracleError> {
    let seq = canonicalize(word)?;
    let domain = enumerate_domain(&f.schema, max_domain)?;
    let formulas = apply_stages(f, seq, cfg)?;
    let oracles = oracle_stages(&extension(f, &domain), seq)?;
    let mut stages = Vec::new();
    for (k, (g, o)) in formulas.iter().zip(&oracles).enumerate() {
        let fu = formula_extension(g, &domain);
        let ou = o.union();
        let mut only_f = fu.clone();
        only_f.difference_with(&ou);
        let mut only_o = ou.clone();
        only_o.difference_with(&fu);
        let show = |i: usize| domain[i].display(&f.schema).to_string();
        let sample = only_f
            .pairs()
            .map(|p| (p, "formula"))
            .chain(only_o.pairs().map(|p| (p, "oracle")))
            .take(MAX_SAMPLE)
            .map(|((i, j), only_in)| PairWitness {
                better: show(i),
                worse: show(j),
                only_in,
            })
            .collect();
        let stage: String = seq.ops()[..k].iter().map(Op::to_string).collect();
        stages.push(StageReport {
            stage: if stage.is_empty() { "ε".into() } else { stage },
            formula_statements: g.statements.len(),
            oracle_statements: o.statements.len(),
            formula_pairs: fu.count(),
            oracle_pairs: ou.count(),
            mismatches: only_f.count() + only_o.count(),
            sample,
        });
    }
    Ok(EquivalenceReport {
        sequence: word.to_string(),
        canonical: seq.to_string(),
        domain_size: domain.len(),
        stages,
    })
}

/// Rows of `domain` not strictly dominated under the weak relation `weak`.
pub fn oracle_best(weak: &PairSet, rows: &[usize]) -> Vec<usize> {
    rows.iter()
        .copied()
        .filter(|&t| {
            !rows
                .iter()
                .any(|&u| weak.contains(u, t) && !weak.contains(t, u))
        })
        .collect()
}

/// Size limits for [`random_instance`].
#[derive(Debug, Clone, Copy)]
pub struct InstanceLimits {
    /// Most values in a one-attribute taxonomy.
    pub max_nodes: usize,
    /// Most values per taxonomy when there are two attributes.
    pub max_nodes_pair: usize,
    pub max_statements: usize,
    pub max_clauses: usize,
}

impl Default for InstanceLimits {
    fn default() -> Self {
        Self {
            max_nodes: 30,
            max_nodes_pair: 30,
            max_statements: 3,
            max_clauses: 4,
        }
    }
}

/// A small random formula for equivalence sweeps: one or two attributes
/// over random DAG (or forest) taxonomies, and a few satisfiable clauses
/// whose sides mix `<=` and negated predicates.
pub fn random_instance(seed: u64, lim: InstanceLimits) -> Formula {
    use crate::formula::{clause_satisfiable, Clause, Predicate};
    use crate::taxonomy::gen_small_dag;
    use std::sync::Arc;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attrs = rng.gen_range(1..=2);
    let cap = if attrs == 1 { lim.max_nodes } else { lim.max_nodes_pair };
    let mut taxa = Vec::new();
    for a in 0..attrs {
        let n = rng.gen_range(3..=cap);
        let extra = if rng.gen_bool(0.5) { 0.0 } else { 0.3 };
        let t = gen_small_dag(n, 0.2, extra, &mut rng);
        taxa.push((format!("A{a}"), Arc::new(t)));
    }
    let schema = Arc::new(Schema::new(taxa).expect("distinct attribute names"));

    let side = |rng: &mut ChaCha8Rng| -> Vec<Predicate> {
        (0..rng.gen_range(1..=2))
            .map(|_| {
                let a = rng.gen_range(0..attrs);
                let v = rng.gen_range(0..schema.taxonomy(a).len()) as u32;
                if rng.gen_bool(0.75) {
                    Predicate::leq(a, v)
                } else {
                    Predicate::not_leq(a, v)
                }
            })
            .collect()
    };
    let n_stmts = rng.gen_range(1..=lim.max_statements);
    let mut budget = lim.max_clauses.max(n_stmts);
    let mut stmts = Vec::new();
    for s in 0..n_stmts {
        let left = n_stmts - s - 1;
        let k = rng.gen_range(1..=(budget - left).min(2));
        budget -= k;
        let mut clauses = Vec::new();
        while clauses.len() < k {
            let c = Clause::new(side(&mut rng), side(&mut rng));
            if clause_satisfiable(&schema, &c) {
                clauses.push(c);
            }
        }
        stmts.push(Statement::new(format!("P{}", s + 1), clauses));
    }
    Formula::new(schema, stmts)
}
