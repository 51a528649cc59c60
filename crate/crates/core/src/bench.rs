//! Synthetic workloads and the timing harness.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eval::{best, BestOptions};
use crate::formula::{Clause, Formula, Predicate, Schema, Statement, TRelation, TTuple};
use crate::rewrite::{apply_canonical, canonicalize, Canonical, RewriteConfig, RewriteError};
use crate::taxonomy::{
    gen_random, gen_regular, gen_scale_free_with_roots, Taxonomy, TaxonomyError, ValueId,
};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("taxonomy needs at least two maximal values with values below them")]
    InsufficientRoots,
    #[error("at least one preference pair must be requested")]
    EmptyRequest,
    #[error("schema has {have} attributes, {need} requested")]
    InsufficientAttributes { have: usize, need: usize },
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxonomyKind {
    Regular,
    Random,
    ScaleFree,
}

impl TaxonomyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaxonomyKind::Regular => "regular",
            TaxonomyKind::Random => "random",
            TaxonomyKind::ScaleFree => "scale_free",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferenceKind {
    Conflicting,
    Contextual,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub taxonomy_kind: TaxonomyKind,
    /// Fan-out of regular taxonomies, mean fan-out of random ones.
    pub fanout: usize,
    pub depth: usize,
    /// Power-law exponent of scale-free taxonomies.
    pub exponent: f64,
    /// Size of scale-free taxonomies.
    pub target_nodes: usize,
    /// Maximal values of scale-free taxonomies.
    pub roots: usize,
    pub attrs: usize,
    pub n: usize,
    pub clauses: usize,
    pub preference_kind: PreferenceKind,
    /// Operator words; the empty string is the identity.
    pub sequences: Vec<String>,
    pub runs: usize,
    pub first_seed: u64,
    pub good_run_threshold: f64,
    pub warmup: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            taxonomy_kind: TaxonomyKind::Regular,
            fanout: 5,
            depth: 6,
            exponent: 2.7,
            target_nodes: 15_000,
            roots: 6,
            attrs: 1,
            n: 10_000,
            clauses: 2,
            preference_kind: PreferenceKind::Conflicting,
            sequences: ["", "T", "TST", "STST"].map(String::from).to_vec(),
            runs: 100,
            first_seed: 0,
            good_run_threshold: 0.02,
            warmup: true,
        }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        self.first_seed..self.first_seed + self.runs as u64
    }
}

/// `n` tuples with every value drawn uniformly from its taxonomy.
pub fn gen_dataset(schema: &Arc<Schema>, n: usize, seed: u64) -> TRelation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = schema.attributes().iter().map(|a| a.taxonomy.len()).collect();
    let tuples = (0..n)
        .map(|_| {
            TTuple::new(
                sizes
                    .iter()
                    .map(|&k| rng.gen_range(0..k) as ValueId)
                    .collect(),
            )
        })
        .collect();
    TRelation::new(schema.clone(), tuples)
}

fn eligible_roots(tax: &Taxonomy) -> Vec<ValueId> {
    tax.roots()
        .iter()
        .copied()
        .filter(|&r| !tax.children(r).is_empty())
        .collect()
}

/// `(v1, v2, v2')` with `v1 != v2` maximal and `v2'` strictly below `v2`.
fn sample_pair(tax: &Taxonomy, roots: &[ValueId], rng: &mut ChaCha8Rng) -> (ValueId, ValueId, ValueId) {
    let picked: Vec<ValueId> = roots.choose_multiple(rng, 2).copied().collect();
    let (v1, v2) = (picked[0], picked[1]);
    let below = tax.down_set(v2);
    let v2p = below
        .ones()
        .filter(|&u| u != v2 as usize)
        .choose(rng)
        .expect("eligible roots have children") as ValueId;
    (v1, v2, v2p)
}

fn conflicting_statements(
    schema: &Schema,
    pairs: usize,
    context_attrs: usize,
    seed: u64,
) -> Result<Vec<Statement>, BenchError> {
    if pairs == 0 {
        return Err(BenchError::EmptyRequest);
    }
    if schema.len() < context_attrs.max(1) {
        return Err(BenchError::InsufficientAttributes {
            have: schema.len(),
            need: context_attrs.max(1),
        });
    }
    let tax = schema.taxonomy(0);
    let roots = eligible_roots(tax);
    if roots.len() < 2 {
        return Err(BenchError::InsufficientRoots);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * pairs);
    for _ in 0..pairs {
        let (v1, v2, v2p) = sample_pair(tax, &roots, &mut rng);
        let context: Vec<Predicate> = (1..context_attrs)
            .map(|a| {
                let r = *schema.taxonomy(a).roots().choose(&mut rng).unwrap();
                Predicate::leq(a, r)
            })
            .collect();
        let side = |v: ValueId| {
            let mut s = vec![Predicate::leq(0, v)];
            s.extend_from_slice(&context);
            s
        };
        let k = out.len();
        out.push(Statement::new(
            format!("P{}", k + 1),
            vec![Clause::new(side(v1), side(v2))],
        ));
        out.push(Statement::new(
            format!("P{}", k + 2),
            vec![Clause::new(side(v2p), side(v1))],
        ));
    }
    Ok(out)
}

/// `pairs` conflicting pairs `v1 > v2 ; v2' > v1` on the first attribute.
pub fn gen_conflicting(schema: &Arc<Schema>, pairs: usize, seed: u64) -> Result<Formula, BenchError> {
    Ok(Formula::new(
        schema.clone(),
        conflicting_statements(schema, pairs, 1, seed)?,
    ))
}

/// One conflicting pair on the first attribute whose sides share the context
/// `A2 <= v2 & ... & Ad <= vd`, each `vi` a maximal value of its taxonomy.
pub fn gen_contextual(schema: &Arc<Schema>, d: usize, seed: u64) -> Result<Formula, BenchError> {
    gen_contextual_pairs(schema, d, 1, seed)
}

pub fn gen_contextual_pairs(
    schema: &Arc<Schema>,
    d: usize,
    pairs: usize,
    seed: u64,
) -> Result<Formula, BenchError> {
    Ok(Formula::new(
        schema.clone(),
        conflicting_statements(schema, pairs, d, seed)?,
    ))
}

fn mix(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(salt.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .rotate_left(17)
}

pub fn gen_taxonomy(cfg: &BenchConfig, seed: u64) -> Result<Taxonomy, TaxonomyError> {
    match cfg.taxonomy_kind {
        TaxonomyKind::Regular => gen_regular(cfg.fanout, cfg.depth, seed),
        TaxonomyKind::Random => gen_random(cfg.fanout as f64, cfg.depth, seed),
        TaxonomyKind::ScaleFree => {
            gen_scale_free_with_roots(cfg.target_nodes, cfg.exponent, cfg.roots, seed)
        }
    }
}

/// Inputs of one benchmark run.
#[derive(Debug, Clone)]
pub struct Workload {
    pub schema: Arc<Schema>,
    pub relation: TRelation,
    pub formula: Formula,
}

pub fn build_schema(cfg: &BenchConfig, seed: u64) -> Result<Arc<Schema>, BenchError> {
    let attrs = (0..cfg.attrs.max(1))
        .map(|i| {
            gen_taxonomy(cfg, mix(seed, i as u64 + 1)).map(|t| (format!("A{}", i + 1), Arc::new(t)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Arc::new(
        Schema::new(attrs).map_err(|e| BenchError::Config(e.to_string()))?,
    ))
}

pub fn build_workload(cfg: &BenchConfig, seed: u64) -> Result<Workload, BenchError> {
    let schema = build_schema(cfg, seed)?;
    let relation = gen_dataset(&schema, cfg.n, mix(seed, 101));
    let pairs = (cfg.clauses / 2).max(1);
    let formula = match cfg.preference_kind {
        PreferenceKind::Conflicting => gen_conflicting(&schema, pairs, mix(seed, 202))?,
        PreferenceKind::Contextual => {
            gen_contextual_pairs(&schema, cfg.attrs, pairs, mix(seed, 202))?
        }
    };
    Ok(Workload {
        schema,
        relation,
        formula,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub seed: u64,
    pub taxonomy_kind: String,
    pub fanout: usize,
    pub depth: usize,
    pub attrs: usize,
    pub clauses: usize,
    pub n: usize,
    pub sequence: String,
    pub rewrite_ms: f64,
    pub best_ms_plain: f64,
    pub best_ms_heuristic: f64,
    pub best_card: usize,
    pub relevant: usize,
    pub good_run: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunFailure {
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub failures: Vec<RunFailure>,
    /// T-terminated runs whose Best differed between the two scan orders.
    pub heuristic_disagreements: Vec<(u64, String)>,
}

/// Timings and cardinalities of one sequence on one workload.
#[derive(Debug, Clone)]
pub struct SequenceRun {
    pub canonical: Canonical,
    pub rewrite_ms: f64,
    pub best_ms_plain: f64,
    pub best_ms_heuristic: f64,
    pub best_rows: Vec<usize>,
    pub plain_rows: Vec<usize>,
    pub relevant: usize,
    pub comparisons_plain: u64,
    pub comparisons_heuristic: u64,
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

pub fn run_sequence(w: &Workload, seq: Canonical, warmup: bool) -> Result<SequenceRun, RewriteError> {
    let cfg = RewriteConfig::default();
    if warmup {
        apply_canonical(&w.formula, seq, cfg)?;
    }
    let t0 = Instant::now();
    let g = apply_canonical(&w.formula, seq, cfg)?;
    let rewrite_ms = ms(t0.elapsed());
    let plain = best(&g, &w.relation, BestOptions { heuristic: false, keep_irrelevant: false });
    let heur = best(&g, &w.relation, BestOptions { heuristic: true, keep_irrelevant: false });
    Ok(SequenceRun {
        canonical: seq,
        rewrite_ms,
        best_ms_plain: ms(plain.elapsed),
        best_ms_heuristic: ms(heur.elapsed),
        relevant: heur.relevant_count,
        comparisons_plain: plain.comparisons,
        comparisons_heuristic: heur.comparisons,
        plain_rows: plain.rows,
        best_rows: heur.rows,
    })
}

fn run_one(cfg: &BenchConfig, seed: u64, report: &mut BenchReport) -> Result<(), BenchError> {
    let w = build_workload(cfg, seed)?;
    let mut seqs = Vec::new();
    for s in &cfg.sequences {
        seqs.push((s.clone(), canonicalize(s)?));
    }
    let mut runs = Vec::new();
    for (word, seq) in &seqs {
        runs.push((word.clone(), run_sequence(&w, *seq, cfg.warmup)?));
    }
    let limit = cfg.good_run_threshold * cfg.n as f64;
    let mut good = false;
    for target in [Canonical::TST, Canonical::STST] {
        let card = match runs.iter().find(|(_, r)| r.canonical == target) {
            Some((_, r)) => r.best_rows.len(),
            None => run_sequence(&w, target, false)?.best_rows.len(),
        };
        good |= (card as f64) < limit;
    }
    for (word, r) in runs {
        if r.canonical.ends_with_t() && r.best_rows != r.plain_rows {
            report.heuristic_disagreements.push((seed, word.clone()));
        }
        report.rows.push(BenchRow {
            seed,
            taxonomy_kind: cfg.taxonomy_kind.as_str().to_string(),
            fanout: cfg.fanout,
            depth: cfg.depth,
            attrs: cfg.attrs,
            clauses: cfg.clauses,
            n: cfg.n,
            sequence: word,
            rewrite_ms: r.rewrite_ms,
            best_ms_plain: r.best_ms_plain,
            best_ms_heuristic: r.best_ms_heuristic,
            best_card: r.best_rows.len(),
            relevant: r.relevant,
            good_run: good,
        });
    }
    Ok(())
}

/// Runs every seed sequentially so timings do not interfere. A failing run
/// is recorded and skipped.
pub fn run_benchmark(cfg: &BenchConfig) -> BenchReport {
    let mut report = BenchReport::default();
    for seed in cfg.seeds() {
        if let Err(e) = run_one(cfg, seed, &mut report) {
            report.failures.push(RunFailure {
                seed,
                message: e.to_string(),
            });
        }
    }
    report
}

pub fn write_rows<W: std::io::Write>(w: W, rows: &[BenchRow]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub sequence: String,
    pub good_only: bool,
    pub runs: usize,
    pub mean_rewrite_ms: f64,
    pub median_rewrite_ms: f64,
    pub mean_best_ms_plain: f64,
    pub median_best_ms_plain: f64,
    pub mean_best_ms_heuristic: f64,
    pub median_best_ms_heuristic: f64,
    pub mean_best_card: f64,
    pub median_best_card: f64,
    pub mean_relevant: f64,
    pub median_relevant: f64,
}

/// Mean and median per sequence, over all runs and over good runs.
pub fn summarize(rows: &[BenchRow]) -> Vec<Summary> {
    let mut seqs: Vec<&str> = Vec::new();
    for r in rows {
        if !seqs.contains(&r.sequence.as_str()) {
            seqs.push(&r.sequence);
        }
    }
    let mut out = Vec::new();
    for good_only in [false, true] {
        for s in &seqs {
            let sel: Vec<&BenchRow> = rows
                .iter()
                .filter(|r| r.sequence == *s && (!good_only || r.good_run))
                .collect();
            if sel.is_empty() {
                continue;
            }
            let col = |f: fn(&BenchRow) -> f64| -> (f64, f64) {
                let mut v: Vec<f64> = sel.iter().map(|r| f(r)).collect();
                (mean(&v), median(&mut v))
            };
            let (a, b) = col(|r| r.rewrite_ms);
            let (c, d) = col(|r| r.best_ms_plain);
            let (e, f) = col(|r| r.best_ms_heuristic);
            let (g, h) = col(|r| r.best_card as f64);
            let (i, j) = col(|r| r.relevant as f64);
            out.push(Summary {
                sequence: s.to_string(),
                good_only,
                runs: sel.len(),
                mean_rewrite_ms: a,
                median_rewrite_ms: b,
                mean_best_ms_plain: c,
                median_best_ms_plain: d,
                mean_best_ms_heuristic: e,
                median_best_ms_heuristic: f,
                mean_best_card: g,
                median_best_card: h,
                mean_relevant: i,
                median_relevant: j,
            });
        }
    }
    out
}
