use super::{Clause, Formula, FormulaError, Polarity, Predicate, Schema, Side, Statement, TTuple};

/// Upper bound on the clauses produced while distributing a negation.
pub const MAX_DNF_CLAUSES: usize = 4096;

fn group_satisfiable<'a>(
    schema: &Schema,
    attr: usize,
    preds: impl Iterator<Item = &'a Predicate>,
) -> bool {
    let tax = schema.taxonomy(attr);
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for p in preds.filter(|p| p.attr == attr) {
        match p.polarity {
            Polarity::Leq => pos.push(p.value),
            Polarity::NotLeq => neg.push(p.value),
        }
    }
    if !tax.is_functional() {
        for (i, &a) in pos.iter().enumerate() {
            if neg.iter().any(|&n| tax.leq(a, n)) {
                return false;
            }
            if pos[i + 1..]
                .iter()
                .any(|&b| tax.common_descendant(a, b).is_none())
            {
                return false;
            }
        }
    }
    tax.has_value_within(&pos, &neg)
}

/// Whether some single tuple satisfies every predicate.
pub fn conj_satisfiable(schema: &Schema, preds: &[Predicate]) -> bool {
    let mut attrs: Vec<usize> = preds.iter().map(|p| p.attr).collect();
    attrs.sort_unstable();
    attrs.dedup();
    attrs
        .into_iter()
        .all(|a| group_satisfiable(schema, a, preds.iter()))
}

/// `conj & extra` is satisfiable, given that `conj` alone is.
fn still_satisfiable(schema: &Schema, conj: &[Predicate], extra: Predicate) -> bool {
    group_satisfiable(schema, extra.attr, conj.iter().chain(std::iter::once(&extra)))
}

pub fn clause_satisfiable(schema: &Schema, c: &Clause) -> bool {
    conj_satisfiable(schema, &c.better) && conj_satisfiable(schema, &c.worse)
}

/// Drops predicates implied by the others. Assumes `preds` is satisfiable.
fn simplify_conj(schema: &Schema, preds: &[Predicate]) -> Vec<Predicate> {
    let keep = |p: &Predicate| {
        let tax = schema.taxonomy(p.attr);
        let same = preds.iter().filter(|q| q.attr == p.attr && *q != p);
        match p.polarity {
            Polarity::Leq => !same
                .filter(|q| q.polarity == Polarity::Leq)
                .any(|q| tax.leq(q.value, p.value)),
            Polarity::NotLeq => !same.into_iter().any(|q| match q.polarity {
                Polarity::NotLeq => tax.leq(p.value, q.value),
                Polarity::Leq => tax.common_descendant(q.value, p.value).is_none(),
            }),
        }
    };
    preds.iter().filter(|p| keep(p)).copied().collect()
}

fn simplify_clause(schema: &Schema, c: &Clause) -> Clause {
    Clause {
        better: simplify_conj(schema, &c.better),
        worse: simplify_conj(schema, &c.worse),
    }
}

/// `c1 => c2` for satisfiable `c1`.
pub fn clause_implies(schema: &Schema, c1: &Clause, c2: &Clause) -> bool {
    if !clause_satisfiable(schema, c1) {
        return true;
    }
    c2.better
        .iter()
        .all(|l| !still_satisfiable(schema, &c1.better, l.negated()))
        && c2
            .worse
            .iter()
            .all(|l| !still_satisfiable(schema, &c1.worse, l.negated()))
}

fn clauses_intersect(schema: &Schema, a: &Clause, b: &Clause) -> bool {
    let better: Vec<Predicate> = a.better.iter().chain(&b.better).copied().collect();
    let worse: Vec<Predicate> = a.worse.iter().chain(&b.worse).copied().collect();
    conj_satisfiable(schema, &better) && conj_satisfiable(schema, &worse)
}

/// Keeps clause `i` unless some other clause covers it: strictly, or with an
/// equal extension and a smaller index.
fn drop_covered(schema: &Schema, clauses: Vec<Clause>) -> Vec<Clause> {
    if clauses.len() < 2 {
        return clauses;
    }
    let n = clauses.len();
    let mut keep = vec![true; n];
    for i in 0..n {
        for j in 0..n {
            if i == j || !clause_implies(schema, &clauses[i], &clauses[j]) {
                continue;
            }
            if j < i || !clause_implies(schema, &clauses[j], &clauses[i]) {
                keep[i] = false;
                break;
            }
        }
    }
    clauses
        .into_iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then_some(c))
        .collect()
}

/// `frontier & !d`, distributed into satisfiable clauses.
fn conjoin_negated_clause(
    schema: &Schema,
    frontier: Vec<Clause>,
    d: &Clause,
) -> Result<Vec<Clause>, FormulaError> {
    let mut out = Vec::with_capacity(frontier.len());
    for f in frontier {
        if !clauses_intersect(schema, &f, d) {
            out.push(f);
            continue;
        }
        for (side, preds) in [(Side::Better, &d.better), (Side::Worse, &d.worse)] {
            for l in preds {
                let l = l.negated();
                if still_satisfiable(schema, f.side(side), l) {
                    out.push(f.with(side, l));
                }
            }
        }
    }
    out.sort();
    out.dedup();
    let out = drop_covered(schema, out);
    if out.len() > MAX_DNF_CLAUSES {
        return Err(FormulaError::CapacityExceeded(MAX_DNF_CLAUSES));
    }
    Ok(out)
}

fn clause_and_not(schema: &Schema, c: &Clause, q: &[Clause]) -> Result<Vec<Clause>, FormulaError> {
    let mut frontier = vec![c.clone()];
    for d in q {
        frontier = conjoin_negated_clause(schema, frontier, d)?;
        if frontier.is_empty() {
            break;
        }
    }
    Ok(frontier)
}

/// `p(x, y) => q(x, y)`.
pub fn statement_implies(
    schema: &Schema,
    p: &Statement,
    q: &Statement,
) -> Result<bool, FormulaError> {
    for c in &p.clauses {
        if !clause_satisfiable(schema, c) {
            continue;
        }
        if q.clauses.iter().any(|d| clause_implies(schema, c, d)) {
            continue;
        }
        if !clause_and_not(schema, c, &q.clauses)?.is_empty() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `p(x, y) => q(y, x)`.
pub fn statement_implies_reversed(
    schema: &Schema,
    p: &Statement,
    q: &Statement,
) -> Result<bool, FormulaError> {
    statement_implies(schema, p, &q.reversed())
}

/// `p(x, y) & !q(y, x)` in disjunctive normal form.
pub fn conjoin_negation(
    schema: &Schema,
    p: &Statement,
    q: &Statement,
) -> Result<Statement, FormulaError> {
    let qr = q.reversed();
    let mut clauses = Vec::new();
    for c in &p.clauses {
        clauses.extend(clause_and_not(schema, c, &qr.clauses)?);
        if clauses.len() > MAX_DNF_CLAUSES {
            return Err(FormulaError::CapacityExceeded(MAX_DNF_CLAUSES));
        }
    }
    let mut s = Statement::new(format!("{}!{}", p.id, q.id), clauses);
    s = simplify_statement(schema, &s);
    Ok(s)
}

/// Removes unsatisfiable and covered clauses and redundant predicates.
pub fn simplify_statement(schema: &Schema, s: &Statement) -> Statement {
    let mut clauses: Vec<Clause> = Vec::with_capacity(s.clauses.len());
    for c in &s.clauses {
        if !clause_satisfiable(schema, c) {
            continue;
        }
        let c = simplify_clause(schema, c);
        if !clauses.contains(&c) {
            clauses.push(c);
        }
    }
    Statement::new(s.id.clone(), drop_covered(schema, clauses))
}

/// Clause-level cleanup, then drops empty statements and every statement
/// whose extension lies inside another's (strictly, or equal with an earlier
/// position).
pub fn simplify(f: &Formula) -> Result<Formula, FormulaError> {
    let schema = &*f.schema;
    let stmts: Vec<Statement> = f
        .statements
        .iter()
        .map(|s| simplify_statement(schema, s))
        .filter(|s| !s.is_empty())
        .collect();
    let n = stmts.len();
    let mut keep = vec![true; n];
    for i in 0..n {
        for j in 0..n {
            if i == j || !statement_implies(schema, &stmts[i], &stmts[j])? {
                continue;
            }
            if j < i || !statement_implies(schema, &stmts[j], &stmts[i])? {
                keep[i] = false;
                break;
            }
        }
    }
    let statements = stmts
        .into_iter()
        .zip(keep)
        .filter_map(|(s, k)| k.then_some(s))
        .collect();
    Ok(Formula::new(f.schema.clone(), statements))
}

/// Whether `t` satisfies the given side of `c`.
pub fn matches_side(schema: &Schema, t: &TTuple, c: &Clause, side: Side) -> bool {
    c.side(side).iter().all(|p| p.eval(schema, t))
}
