//! The transitive-closure operator `T`, the specificity operator `S`, and
//! canonical operator sequences.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::formula::{
    conj_satisfiable, conjoin_negation, simplify, simplify_statement, statement_implies,
    statement_implies_reversed, Clause, Formula, FormulaError, Statement,
};

/// Upper bound on the number of statements an operator may produce.
pub const MAX_STATEMENTS: usize = 4096;

#[derive(Debug, thiserror::Error)]
pub enum RewriteError {
    #[error("invalid character {0:?} at position {1} in operator sequence")]
    InvalidCharacter(char, usize),
    #[error("operator produced more than {0} statements")]
    TooManyStatements(usize),
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

impl RewriteError {
    pub fn is_capacity(&self) -> bool {
        matches!(
            self,
            RewriteError::TooManyStatements(_)
                | RewriteError::Formula(FormulaError::CapacityExceeded(_))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    T,
    S,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::T => "T",
            Op::S => "S",
        })
    }
}

/// The eight operator words every sequence reduces to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Canonical {
    Empty,
    T,
    S,
    TS,
    ST,
    TST,
    STS,
    STST,
}

impl Canonical {
    pub const ALL: [Canonical; 8] = [
        Canonical::Empty,
        Canonical::T,
        Canonical::S,
        Canonical::TS,
        Canonical::ST,
        Canonical::TST,
        Canonical::STS,
        Canonical::STST,
    ];

    pub fn ops(self) -> &'static [Op] {
        use Op::*;
        match self {
            Canonical::Empty => &[],
            Canonical::T => &[T],
            Canonical::S => &[S],
            Canonical::TS => &[T, S],
            Canonical::ST => &[S, T],
            Canonical::TST => &[T, S, T],
            Canonical::STS => &[S, T, S],
            Canonical::STST => &[S, T, S, T],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Canonical::Empty => "",
            Canonical::T => "T",
            Canonical::S => "S",
            Canonical::TS => "TS",
            Canonical::ST => "ST",
            Canonical::TST => "TST",
            Canonical::STS => "STS",
            Canonical::STST => "STST",
        }
    }

    /// Sequences ending in `T` yield transitive preference relations.
    pub fn ends_with_t(self) -> bool {
        self.ops().last() == Some(&Op::T)
    }
}

impl fmt::Display for Canonical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Canonical::Empty => f.write_str("ε"),
            c => f.write_str(c.as_str()),
        }
    }
}

impl FromStr for Canonical {
    type Err = RewriteError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        canonicalize(s)
    }
}

/// Collapses repeated letters and rewrites `TSTS` to `TS` until nothing
/// changes. The string `ε` denotes the empty word.
pub fn canonicalize(word: &str) -> Result<Canonical, RewriteError> {
    let mut w: Vec<u8> = Vec::with_capacity(word.len());
    if word != "ε" {
        for (i, c) in word.chars().enumerate() {
            match c {
                'T' | 'S' => w.push(c as u8),
                _ => return Err(RewriteError::InvalidCharacter(c, i)),
            }
        }
    }
    loop {
        let before = w.len();
        w.dedup();
        if let Some(i) = w.windows(4).position(|x| x == b"TSTS") {
            w.drain(i + 2..i + 4);
        }
        if w.len() == before {
            break;
        }
    }
    let s = std::str::from_utf8(&w).unwrap();
    Ok(*Canonical::ALL
        .iter()
        .find(|c| c.as_str() == s)
        .expect("reduced words are canonical"))
}

#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// `S` deletes statements instead of refining them.
    DropRefined,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RewriteConfig {
    #[doc(hidden)]
    pub fault: Option<Fault>,
}

fn capacity(n: usize) -> Result<(), RewriteError> {
    if n > MAX_STATEMENTS {
        Err(RewriteError::TooManyStatements(MAX_STATEMENTS))
    } else {
        Ok(())
    }
}

/// Composition `a ∘ b`: `x` beats `y` when some `z` is beaten by `x` under
/// `a` and beats `y` under `b`.
pub fn compose(schema: &crate::formula::Schema, a: &Statement, b: &Statement) -> Statement {
    let mut clauses = Vec::new();
    for cm in &a.clauses {
        for cq in &b.clauses {
            let mid: Vec<_> = cm.worse.iter().chain(&cq.better).copied().collect();
            if conj_satisfiable(schema, &mid) {
                clauses.push(Clause::new(cm.better.clone(), cq.worse.clone()));
            }
        }
    }
    simplify_statement(schema, &Statement::new(format!("{}*{}", a.id, b.id), clauses))
}

/// Adds compositions of accumulated statements with the original ones until
/// every new composition is implied by an existing statement.
pub fn apply_t(f: &Formula) -> Result<Formula, RewriteError> {
    let f = simplify(f)?;
    let schema = &*f.schema;
    let orig = f.statements.clone();
    let mut acc = orig.clone();
    loop {
        let mut progress = false;
        let mut i = 0;
        while i < acc.len() {
            for q in &orig {
                let p = compose(schema, &acc[i], q);
                if p.is_empty() {
                    continue;
                }
                let mut covered = false;
                for existing in &acc {
                    if statement_implies(schema, &p, existing)? {
                        covered = true;
                        break;
                    }
                }
                if !covered {
                    acc.push(p);
                    progress = true;
                    capacity(acc.len())?;
                }
            }
            i += 1;
        }
        if !progress {
            break;
        }
    }
    Ok(simplify(&Formula::new(f.schema.clone(), acc))?)
}

/// Statements `j` (possibly `i` itself) whose reversal implies statement `i`
/// without being implied by it.
fn implicated(schema: &crate::formula::Schema, stmts: &[Statement], i: usize) -> Result<Vec<usize>, RewriteError> {
    let mut out = Vec::new();
    for j in 0..stmts.len() {
        if statement_implies_reversed(schema, &stmts[j], &stmts[i])?
            && !statement_implies_reversed(schema, &stmts[i], &stmts[j])?
        {
            out.push(j);
        }
    }
    Ok(out)
}

/// Refines every statement that is contradicted by a more specific reversed
/// statement, in rounds, until no statement is contradicted.
pub fn apply_s(f: &Formula) -> Result<Formula, RewriteError> {
    apply_s_with(f, RewriteConfig::default())
}

fn apply_s_with(f: &Formula, cfg: RewriteConfig) -> Result<Formula, RewriteError> {
    let f = simplify(f)?;
    let schema = &*f.schema;
    let mut stmts = f.statements.clone();
    loop {
        let mut next = Vec::with_capacity(stmts.len());
        let mut changed = false;
        for i in 0..stmts.len() {
            let imp = implicated(schema, &stmts, i)?;
            if imp.is_empty() {
                next.push(stmts[i].clone());
                continue;
            }
            changed = true;
            if cfg.fault == Some(Fault::DropRefined) {
                continue;
            }
            let mut p = stmts[i].clone();
            for j in imp {
                p = conjoin_negation(schema, &p, &stmts[j])?;
            }
            if !p.is_empty() {
                next.push(p);
            }
        }
        stmts = next;
        if !changed {
            break;
        }
    }
    Ok(simplify(&Formula::new(f.schema.clone(), stmts))?)
}

pub fn apply_op(f: &Formula, op: Op, cfg: RewriteConfig) -> Result<Formula, RewriteError> {
    match op {
        Op::T => apply_t(f),
        Op::S => apply_s_with(f, cfg),
    }
}

/// Applies the canonical form of `word`. The empty word returns `f` as is.
pub fn apply_sequence(f: &Formula, word: &str) -> Result<Formula, RewriteError> {
    apply_canonical(f, canonicalize(word)?, RewriteConfig::default())
}

pub fn apply_canonical(
    f: &Formula,
    seq: Canonical,
    cfg: RewriteConfig,
) -> Result<Formula, RewriteError> {
    Ok(apply_stages(f, seq, cfg)?.pop().unwrap())
}

/// The input followed by the result of each operator of `seq`.
pub fn apply_stages(
    f: &Formula,
    seq: Canonical,
    cfg: RewriteConfig,
) -> Result<Vec<Formula>, RewriteError> {
    let mut out = vec![f.clone()];
    for &op in seq.ops() {
        let next = apply_op(out.last().unwrap(), op, cfg)?;
        out.push(next);
    }
    Ok(out)
}
