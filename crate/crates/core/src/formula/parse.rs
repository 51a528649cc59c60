use std::sync::Arc;

use super::{clause_satisfiable, Clause, Formula, FormulaError, Predicate, Schema, Statement};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Leq,
    Not,
    And,
    Or,
    Gt,
    Semi,
    Star,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const PUNCT: &[char] = &['&', '|', '>', '!', ';'];

fn lex(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for (li, line) in text.lines().enumerate() {
        if line.trim_start().starts_with('#') {
            continue;
        }
        let chars: Vec<(usize, char)> = line.char_indices().collect();
        let mut i = 0;
        while i < chars.len() {
            let (_, c) = chars[i];
            let col = i + 1;
            let push = |out: &mut Vec<Token>, tok| {
                out.push(Token {
                    tok,
                    line: li + 1,
                    col,
                })
            };
            if c.is_whitespace() {
                i += 1;
            } else if c == '<' && chars.get(i + 1).map(|x| x.1) == Some('=') {
                push(&mut out, Tok::Leq);
                i += 2;
            } else if PUNCT.contains(&c) {
                push(
                    &mut out,
                    match c {
                        '&' => Tok::And,
                        '|' => Tok::Or,
                        '>' => Tok::Gt,
                        '!' => Tok::Not,
                        _ => Tok::Semi,
                    },
                );
                i += 1;
            } else {
                let start = i;
                while i < chars.len() {
                    let c = chars[i].1;
                    if PUNCT.contains(&c) || (c == '<' && chars.get(i + 1).map(|x| x.1) == Some('='))
                    {
                        break;
                    }
                    i += 1;
                }
                let lo = chars[start].0;
                let hi = chars.get(i).map(|x| x.0).unwrap_or(line.len());
                let word = line[lo..hi].trim_end();
                let tok = if word == "*" {
                    Tok::Star
                } else {
                    Tok::Ident(word.to_string())
                };
                push(&mut out, tok);
            }
        }
    }
    out
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    schema: &'a Schema,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn error(&self, message: impl Into<String>) -> FormulaError {
        let (line, col) = match self.toks.get(self.pos) {
            Some(t) => (t.line, t.col),
            None => self.toks.last().map(|t| (t.line, t.col + 1)).unwrap_or((1, 1)),
        };
        FormulaError::SyntaxError {
            line,
            col,
            message: message.into(),
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, FormulaError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error("expected a value or attribute name")),
        }
    }

    fn formula(&mut self) -> Result<Vec<Statement>, FormulaError> {
        let mut stmts = Vec::new();
        while self.peek().is_some() {
            let clauses = self.statement()?;
            stmts.push(Statement::new(format!("P{}", stmts.len() + 1), clauses));
            if !self.eat(&Tok::Semi) {
                if self.peek().is_some() {
                    return Err(self.error("expected `;`, `|` or end of input"));
                }
                break;
            }
        }
        Ok(stmts)
    }

    fn statement(&mut self) -> Result<Vec<Clause>, FormulaError> {
        let mut clauses = vec![self.clause()?];
        while self.eat(&Tok::Or) {
            clauses.push(self.clause()?);
        }
        Ok(clauses)
    }

    fn clause(&mut self) -> Result<Clause, FormulaError> {
        let better = self.conj()?;
        if !self.eat(&Tok::Gt) {
            return Err(self.error("expected `>`"));
        }
        let worse = self.conj()?;
        Ok(Clause::new(better, worse))
    }

    fn conj(&mut self) -> Result<Vec<Predicate>, FormulaError> {
        if self.eat(&Tok::Star) {
            return Ok(Vec::new());
        }
        let mut preds = vec![self.pred()?];
        while self.eat(&Tok::And) {
            preds.push(self.pred()?);
        }
        Ok(preds)
    }

    fn pred(&mut self) -> Result<Predicate, FormulaError> {
        let negated = self.eat(&Tok::Not);
        let first = self.ident()?;
        let p = if self.eat(&Tok::Leq) {
            let value = self.ident()?;
            let attr = self
                .schema
                .attr_index(&first)
                .ok_or(FormulaError::UnknownAttribute(first))?;
            let v = self.schema.taxonomy(attr).id(&value).ok_or_else(|| {
                FormulaError::UnknownValue {
                    value,
                    attr: Some(self.schema.attribute(attr).name.clone()),
                }
            })?;
            Predicate::leq(attr, v)
        } else {
            let hits: Vec<usize> = (0..self.schema.len())
                .filter(|&a| self.schema.taxonomy(a).id(&first).is_some())
                .collect();
            match hits.as_slice() {
                [] => {
                    return Err(FormulaError::UnknownValue {
                        value: first,
                        attr: None,
                    })
                }
                [a] => Predicate::leq(*a, self.schema.taxonomy(*a).id(&first).unwrap()),
                _ => {
                    return Err(FormulaError::AmbiguousBareValue {
                        value: first,
                        attrs: hits
                            .iter()
                            .map(|&a| self.schema.attribute(a).name.clone())
                            .collect(),
                    })
                }
            }
        };
        Ok(if negated { p.negated() } else { p })
    }
}

/// Parses the formula language. Statements get identifiers `P1`, `P2`, ...
/// in order of appearance.
pub fn parse_formula(schema: Arc<Schema>, text: &str) -> Result<Formula, FormulaError> {
    let mut parser = Parser {
        toks: lex(text),
        pos: 0,
        schema: &schema,
    };
    let statements = parser.formula()?;
    for (si, s) in statements.iter().enumerate() {
        for (ci, c) in s.clauses.iter().enumerate() {
            if !clause_satisfiable(&schema, c) {
                return Err(FormulaError::UnsatisfiableClause {
                    statement: si + 1,
                    clause: ci + 1,
                });
            }
        }
    }
    Ok(Formula::new(schema, statements))
}
