//! Preference formulas over taxonomic attributes.
//!
//! A [`Formula`] is a list of [`Statement`]s, each a disjunction of
//! [`Clause`]s. A clause constrains a better tuple `x` and a worse tuple `y`
//! with conjunctions of taxonomy predicates `A <= v` or `!(A <= v)`.

mod logic;
mod parse;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::taxonomy::{Taxonomy, TaxonomyError, ValueId};

pub use logic::{
    clause_implies, clause_satisfiable, conj_satisfiable, conjoin_negation, matches_side,
    simplify, simplify_statement, statement_implies, statement_implies_reversed,
    MAX_DNF_CLAUSES,
};
pub use parse::parse_formula;

#[derive(Debug, thiserror::Error)]
pub enum FormulaError {
    #[error("syntax error at {line}:{col}: {message}")]
    SyntaxError {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("unknown value {value:?}{}", attr.as_ref().map(|a| format!(" for attribute {a:?}")).unwrap_or_default())]
    UnknownValue { value: String, attr: Option<String> },
    #[error("value {value:?} occurs in several taxonomies: {}", attrs.join(", "))]
    AmbiguousBareValue { value: String, attrs: Vec<String> },
    #[error("clause {clause} of statement {statement} is unsatisfiable")]
    UnsatisfiableClause { statement: usize, clause: usize },
    #[error("normal form exceeds {0} clauses")]
    CapacityExceeded(usize),
}

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate attribute {0:?}")]
    DuplicateAttribute(String),
    #[error("{path}: {source}")]
    Taxonomy {
        path: String,
        #[source]
        source: TaxonomyError,
    },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct Attribute {
    pub name: String,
    pub taxonomy: Arc<Taxonomy>,
}

/// Ordered list of attributes, each bound to a taxonomy.
#[derive(Debug, Clone)]
pub struct Schema {
    attrs: Vec<Attribute>,
}

impl Schema {
    pub fn new(
        attrs: impl IntoIterator<Item = (String, Arc<Taxonomy>)>,
    ) -> Result<Self, SchemaError> {
        let mut out: Vec<Attribute> = Vec::new();
        for (name, taxonomy) in attrs {
            if out.iter().any(|a| a.name == name) {
                return Err(SchemaError::DuplicateAttribute(name));
            }
            out.push(Attribute { name, taxonomy });
        }
        Ok(Self { attrs: out })
    }

    /// Reads `attribute = taxonomy-file` lines; relative paths resolve
    /// against the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| SchemaError::Io(path.display().to_string(), e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_config(&text, &path.display().to_string(), &base)
    }

    pub fn from_config(text: &str, origin: &str, base: &Path) -> Result<Self, SchemaError> {
        let mut attrs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((name, file)) = line.split_once('=') else {
                return Err(SchemaError::Config {
                    path: origin.to_string(),
                    line: i + 1,
                    message: "expected `attribute = taxonomy-file`".into(),
                });
            };
            let (name, file) = (name.trim(), file.trim());
            if name.is_empty() || file.is_empty() {
                return Err(SchemaError::Config {
                    path: origin.to_string(),
                    line: i + 1,
                    message: "empty attribute name or path".into(),
                });
            }
            let tax_path: PathBuf = base.join(file);
            let tax = Taxonomy::load(&tax_path).map_err(|source| SchemaError::Taxonomy {
                path: tax_path.display().to_string(),
                source,
            })?;
            attrs.push((name.to_string(), Arc::new(tax)));
        }
        Self::new(attrs)
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    pub fn attribute(&self, i: usize) -> &Attribute {
        &self.attrs[i]
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attrs
    }

    pub fn taxonomy(&self, i: usize) -> &Taxonomy {
        &self.attrs[i].taxonomy
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attrs.iter().position(|a| a.name == name)
    }

    /// Product of the taxonomy sizes, saturating.
    pub fn domain_size(&self) -> usize {
        self.attrs
            .iter()
            .fold(1usize, |acc, a| acc.saturating_mul(a.taxonomy.len()))
    }

    /// Builds a tuple from attribute values given in schema order.
    pub fn tuple(&self, values: &[&str]) -> Result<TTuple, FormulaError> {
        if values.len() != self.len() {
            return Err(FormulaError::SyntaxError {
                line: 1,
                col: 1,
                message: format!("expected {} values, got {}", self.len(), values.len()),
            });
        }
        values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                self.taxonomy(i)
                    .id(v)
                    .ok_or_else(|| FormulaError::UnknownValue {
                        value: v.to_string(),
                        attr: Some(self.attrs[i].name.clone()),
                    })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(TTuple::new)
    }
}

/// One value per schema attribute, in schema order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TTuple(Box<[ValueId]>);

impl TTuple {
    pub fn new(values: Vec<ValueId>) -> Self {
        Self(values.into_boxed_slice())
    }

    pub fn values(&self) -> &[ValueId] {
        &self.0
    }

    pub fn get(&self, attr: usize) -> ValueId {
        self.0[attr]
    }

    pub fn display<'a>(&'a self, schema: &'a Schema) -> impl fmt::Display + 'a {
        TupleDisplay(self, schema)
    }
}

struct TupleDisplay<'a>(&'a TTuple, &'a Schema);

impl fmt::Display for TupleDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, &v) in self.0.values().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", self.1.taxonomy(i).value_name(v))?;
        }
        write!(f, ")")
    }
}

/// Tuples in input order. Duplicates are kept.
#[derive(Debug, Clone)]
pub struct TRelation {
    schema: Arc<Schema>,
    tuples: Vec<TTuple>,
    columns: Vec<usize>,
}

impl TRelation {
    pub fn new(schema: Arc<Schema>, tuples: Vec<TTuple>) -> Self {
        let columns = (0..schema.len()).collect();
        Self {
            schema,
            tuples,
            columns,
        }
    }

    /// Reads a CSV whose header names every schema attribute exactly once.
    /// An input with no header at all yields an empty relation.
    pub fn from_reader<R: std::io::Read>(schema: Arc<Schema>, reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::None)
            .comment(Some(b'#'))
            .flexible(true)
            .from_reader(reader);
        let mut records = rdr.records();
        let Some(header) = records.next().transpose()? else {
            return Ok(Self::new(schema, Vec::new()));
        };
        let mut columns = Vec::with_capacity(header.len());
        for name in header.iter() {
            let name = name.trim();
            let i = schema.attr_index(name).ok_or_else(|| DataError::Malformed {
                line: 1,
                message: format!("unknown attribute {name:?} in header"),
            })?;
            if columns.contains(&i) {
                return Err(DataError::Malformed {
                    line: 1,
                    message: format!("attribute {name:?} repeated in header"),
                });
            }
            columns.push(i);
        }
        if columns.len() != schema.len() {
            return Err(DataError::Malformed {
                line: 1,
                message: format!(
                    "header has {} attributes, schema has {}",
                    columns.len(),
                    schema.len()
                ),
            });
        }
        let mut tuples = Vec::new();
        for rec in records {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            if rec.len() != columns.len() {
                return Err(DataError::Malformed {
                    line,
                    message: format!("expected {} fields, got {}", columns.len(), rec.len()),
                });
            }
            let mut values = vec![0; schema.len()];
            for (field, &attr) in rec.iter().zip(&columns) {
                let tax = schema.taxonomy(attr);
                values[attr] = tax.id(field).ok_or_else(|| DataError::Malformed {
                    line,
                    message: format!(
                        "unknown value {field:?} for attribute {:?}",
                        schema.attribute(attr).name
                    ),
                })?;
            }
            tuples.push(TTuple::new(values));
        }
        Ok(Self {
            schema,
            tuples,
            columns,
        })
    }

    pub fn load(schema: Arc<Schema>, path: impl AsRef<Path>) -> Result<Self, DataError> {
        Self::from_reader(schema, std::fs::File::open(path)?)
    }

    /// Writes the header and the selected rows, keeping the input column order.
    pub fn write_csv<W: std::io::Write>(
        &self,
        w: W,
        rows: impl IntoIterator<Item = usize>,
    ) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(self.columns.iter().map(|&a| &self.schema.attribute(a).name))?;
        for i in rows {
            let t = &self.tuples[i];
            wtr.write_record(
                self.columns
                    .iter()
                    .map(|&a| self.schema.taxonomy(a).value_name(t.get(a))),
            )?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn tuples(&self) -> &[TTuple] {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Leq,
    NotLeq,
}

/// `attr <= value` or its negation, evaluated on one tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Predicate {
    pub attr: usize,
    pub polarity: Polarity,
    pub value: ValueId,
}

impl Predicate {
    pub fn leq(attr: usize, value: ValueId) -> Self {
        Self {
            attr,
            polarity: Polarity::Leq,
            value,
        }
    }

    pub fn not_leq(attr: usize, value: ValueId) -> Self {
        Self {
            attr,
            polarity: Polarity::NotLeq,
            value,
        }
    }

    pub fn negated(self) -> Self {
        let polarity = match self.polarity {
            Polarity::Leq => Polarity::NotLeq,
            Polarity::NotLeq => Polarity::Leq,
        };
        Self { polarity, ..self }
    }

    pub fn eval(&self, schema: &Schema, t: &TTuple) -> bool {
        let inside = schema.taxonomy(self.attr).leq(t.get(self.attr), self.value);
        inside == (self.polarity == Polarity::Leq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Better,
    Worse,
}

/// `better(x) & worse(y)`. An empty side is unconstrained.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Clause {
    pub better: Vec<Predicate>,
    pub worse: Vec<Predicate>,
}

fn normalize(mut v: Vec<Predicate>) -> Vec<Predicate> {
    v.sort_unstable();
    v.dedup();
    v
}

impl Clause {
    pub fn new(better: Vec<Predicate>, worse: Vec<Predicate>) -> Self {
        Self {
            better: normalize(better),
            worse: normalize(worse),
        }
    }

    pub fn side(&self, side: Side) -> &[Predicate] {
        match side {
            Side::Better => &self.better,
            Side::Worse => &self.worse,
        }
    }

    /// The clause with its two tuple variables exchanged.
    pub fn reversed(&self) -> Self {
        Self {
            better: self.worse.clone(),
            worse: self.better.clone(),
        }
    }

    pub fn with(&self, side: Side, p: Predicate) -> Self {
        let mut c = self.clone();
        let v = match side {
            Side::Better => &mut c.better,
            Side::Worse => &mut c.worse,
        };
        if let Err(pos) = v.binary_search(&p) {
            v.insert(pos, p);
        }
        c
    }

    pub fn conjoin(&self, other: &Clause) -> Self {
        let mut better = self.better.clone();
        better.extend_from_slice(&other.better);
        let mut worse = self.worse.clone();
        worse.extend_from_slice(&other.worse);
        Self::new(better, worse)
    }

    pub fn display<'a>(&'a self, schema: &'a Schema) -> impl fmt::Display + 'a {
        ClauseDisplay(self, schema)
    }
}

/// Disjunction of clauses with a provenance identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub id: String,
    pub clauses: Vec<Clause>,
}

impl Statement {
    pub fn new(id: impl Into<String>, clauses: Vec<Clause>) -> Self {
        Self {
            id: id.into(),
            clauses,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn reversed(&self) -> Self {
        Self {
            id: self.id.clone(),
            clauses: self.clauses.iter().map(Clause::reversed).collect(),
        }
    }

    pub fn display<'a>(&'a self, schema: &'a Schema) -> impl fmt::Display + 'a {
        StatementDisplay(self, schema)
    }
}

#[derive(Debug, Clone)]
pub struct Formula {
    pub schema: Arc<Schema>,
    pub statements: Vec<Statement>,
}

impl Formula {
    pub fn new(schema: Arc<Schema>, statements: Vec<Statement>) -> Self {
        Self { schema, statements }
    }

    pub fn parse(schema: Arc<Schema>, text: &str) -> Result<Self, FormulaError> {
        parse_formula(schema, text)
    }

    pub fn clause_count(&self) -> usize {
        self.statements.iter().map(|s| s.clauses.len()).sum()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.statements.iter().map(|s| s.id.as_str()).collect()
    }

    pub fn statement(&self, id: &str) -> Option<&Statement> {
        self.statements.iter().find(|s| s.id == id)
    }

    /// Canonical text, one statement per line, each preceded by a comment
    /// with its identifier. The output parses back to the same formula.
    pub fn to_dsl_with_ids(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.statements.iter().enumerate() {
            out.push_str(&format!("# {}\n{}", s.id, s.display(&self.schema)));
            out.push_str(if i + 1 < self.statements.len() { " ;\n" } else { "\n" });
        }
        out
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.statements.iter().enumerate() {
            if i > 0 {
                write!(f, " ; ")?;
            }
            write!(f, "{}", s.display(&self.schema))?;
        }
        Ok(())
    }
}

struct ConjDisplay<'a>(&'a [Predicate], &'a Schema);

impl fmt::Display for ConjDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "*");
        }
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " & ")?;
            }
            if p.polarity == Polarity::NotLeq {
                write!(f, "!")?;
            }
            let a = self.1.attribute(p.attr);
            write!(f, "{}<={}", a.name, a.taxonomy.value_name(p.value))?;
        }
        Ok(())
    }
}

struct ClauseDisplay<'a>(&'a Clause, &'a Schema);

impl fmt::Display for ClauseDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} > {}",
            ConjDisplay(&self.0.better, self.1),
            ConjDisplay(&self.0.worse, self.1)
        )
    }
}

struct StatementDisplay<'a>(&'a Statement, &'a Schema);

impl fmt::Display for StatementDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.clauses.iter().enumerate() {
            if i > 0 {
                write!(f, " | ")?;
            }
            write!(f, "{}", c.display(self.1))?;
        }
        Ok(())
    }
}
