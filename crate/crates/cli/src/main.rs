use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use taxopref::bench::{self, BenchConfig, BenchError};
use taxopref::eval::{best, naive_best, BestOptions};
use taxopref::formula::{DataError, FormulaError, SchemaError};
use taxopref::oracle::{check_equivalence_with, OracleError, DEFAULT_MAX_DOMAIN};
use taxopref::rewrite::{apply_canonical, canonicalize, Canonical, Fault, RewriteConfig, RewriteError};
use taxopref::taxonomy::{self, TaxonomyError};
use taxopref::{Formula, Schema, TRelation};

#[derive(Parser)]
#[command(name = "taxopref", version, about = "Preference queries over taxonomic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rewrite a formula with an operator sequence and print it.
    Rewrite {
        #[command(flatten)]
        input: FormulaInput,
        /// Operator word over {T, S}; empty means no rewriting.
        #[arg(long, default_value = "")]
        seq: String,
    },
    /// Print the Best tuples of a dataset as CSV.
    Best {
        #[command(flatten)]
        input: FormulaInput,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "")]
        seq: String,
        /// Presort candidates by height index (default).
        #[arg(long, overrides_with = "no_heuristic")]
        heuristic: bool,
        #[arg(long)]
        no_heuristic: bool,
        /// Evaluate over all tuples, not only those a clause mentions.
        #[arg(long)]
        keep_irrelevant: bool,
        /// Append a statistics comment after the rows.
        #[arg(long)]
        stats: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare symbolic rewriting against the extensional oracle.
    Check {
        #[command(flatten)]
        input: FormulaInput,
        /// Sequences to check; all eight canonical ones when omitted.
        #[arg(long)]
        seq: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_MAX_DOMAIN)]
        max_domain: usize,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Generate a synthetic taxonomy.
    GenTax {
        #[arg(long, value_enum, default_value = "regular")]
        kind: TaxKind,
        #[arg(long, default_value_t = 5.0)]
        fanout: f64,
        #[arg(long, default_value_t = 6)]
        depth: usize,
        #[arg(long, default_value_t = 2.7)]
        exponent: f64,
        #[arg(long, default_value_t = 15_000)]
        nodes: usize,
        #[arg(long, default_value_t = taxonomy::SCALE_FREE_ROOTS)]
        roots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a dataset with uniformly drawn values.
    GenData {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate conflicting or contextual preferences.
    GenPrefs {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long, value_enum, default_value = "conflicting")]
        kind: PrefKind,
        /// Number of clauses; every pair contributes two.
        #[arg(long, default_value_t = 2)]
        clauses: usize,
        /// Attributes in each side for contextual preferences.
        #[arg(long, default_value_t = 1)]
        attrs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the benchmark and write one CSV row per run and sequence.
    Bench {
        /// TOML file with benchmark settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print per-sequence means and medians as JSON lines on stderr.
        #[arg(long)]
        stats: bool,
    },
}

#[derive(Args)]
struct FormulaInput {
    /// Schema config: `attribute = taxonomy-file` per line.
    #[arg(long)]
    schema: PathBuf,
    /// Formula file, or the formula text itself.
    #[arg(long)]
    formula: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaxKind {
    Regular,
    Random,
    ScaleFree,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrefKind {
    Conflicting,
    Contextual,
}

enum Failure {
    Input(String),
    Mismatch(String),
    Capacity(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Mismatch(_) => 1,
            Failure::Input(_) => 2,
            Failure::Capacity(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Mismatch(m) | Failure::Capacity(m) => m,
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<RewriteError> for Failure {
    fn from(e: RewriteError) -> Self {
        if e.is_capacity() {
            Failure::Capacity(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Rewrite(e) => e.into(),
            e => Failure::Capacity(e.to_string()),
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Rewrite(e) => e.into(),
            e => Failure::Input(e.to_string()),
        }
    }
}

impl From<TaxonomyError> for Failure {
    fn from(e: TaxonomyError) -> Self {
        Failure::Input(e.to_string())
    }
}

fn load_schema(path: &Path) -> Result<Arc<Schema>, Failure> {
    Schema::load(path)
        .map(Arc::new)
        .map_err(|e: SchemaError| Failure::Input(e.to_string()))
}

fn load_formula(schema: &Arc<Schema>, arg: &str) -> Result<Formula, Failure> {
    let path = Path::new(arg);
    let (origin, text) = if path.is_file() {
        (arg.to_string(), std::fs::read_to_string(path)?)
    } else {
        ("<formula>".to_string(), arg.to_string())
    };
    Formula::parse(schema.clone(), &text).map_err(|e| match e {
        FormulaError::SyntaxError { line, col, message } => {
            Failure::Input(format!("{origin}:{line}:{col}: syntax error: {message}"))
        }
        e => Failure::Input(format!("{origin}: {e}")),
    })
}

fn load_data(schema: &Arc<Schema>, path: &Path) -> Result<TRelation, Failure> {
    TRelation::load(schema.clone(), path).map_err(|e| match e {
        DataError::Malformed { line, message } => {
            Failure::Input(format!("{}:{line}: {message}", path.display()))
        }
        e => Failure::Input(format!("{}: {e}", path.display())),
    })
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn is_blank(path: &Path) -> bool {
    std::fs::read_to_string(path)
        .map(|s| s.trim().is_empty())
        .unwrap_or(false)
}

fn parse_seq(word: &str) -> Result<Canonical, Failure> {
    canonicalize(word).map_err(Failure::from)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Rewrite { input, seq } => {
            let schema = load_schema(&input.schema)?;
            let f = load_formula(&schema, &input.formula)?;
            let canon = parse_seq(&seq)?;
            let g = apply_canonical(&f, canon, RewriteConfig::default())?;
            let mut w = output(&None)?;
            writeln!(w, "# sequence: {:?} canonical: {}", seq, canon)?;
            write!(w, "{}", g.to_dsl_with_ids())?;
            w.flush()?;
        }
        Command::Best {
            input,
            data,
            seq,
            heuristic: _,
            no_heuristic,
            keep_irrelevant,
            stats,
            out,
        } => {
            let schema = load_schema(&input.schema)?;
            let f = load_formula(&schema, &input.formula)?;
            let r = load_data(&schema, &data)?;
            let canon = parse_seq(&seq)?;
            let g = apply_canonical(&f, canon, RewriteConfig::default())?;
            let opts = BestOptions {
                heuristic: !no_heuristic,
                keep_irrelevant,
            };
            let naive = !canon.ends_with_t();
            if naive {
                eprintln!(
                    "note: sequence {canon} does not end in T; evaluating Best by exhaustive pairwise scan"
                );
            }
            let res = if naive {
                naive_best(&g, &r, keep_irrelevant)
            } else {
                best(&g, &r, opts)
            };
            let mut w = output(&out)?;
            if !is_blank(&data) {
                r.write_csv(&mut w, res.rows.iter().copied())
                    .map_err(|e| Failure::Input(e.to_string()))?;
            }
            if stats {
                let record = serde_json::json!({
                    "sequence": seq,
                    "canonical": canon.to_string(),
                    "evaluator": if naive { "naive" } else { "bnl" },
                    "heuristic": opts.heuristic && !naive,
                    "keep_irrelevant": keep_irrelevant,
                    "tuples": r.len(),
                    "relevant_count": res.relevant_count,
                    "best": res.rows.len(),
                    "comparisons": res.comparisons,
                    "elapsed_ms": res.elapsed.as_secs_f64() * 1e3,
                });
                writeln!(w, "# stats {record}")?;
            }
            w.flush()?;
        }
        Command::Check {
            input,
            seq,
            max_domain,
            inject_fault,
        } => {
            let schema = load_schema(&input.schema)?;
            let f = load_formula(&schema, &input.formula)?;
            let words: Vec<String> = if seq.is_empty() {
                Canonical::ALL.iter().map(|c| c.as_str().to_string()).collect()
            } else {
                seq
            };
            let cfg = RewriteConfig {
                fault: inject_fault.then_some(Fault::DropRefined),
            };
            let mut w = output(&None)?;
            let mut reports = Vec::new();
            for word in &words {
                let rep = check_equivalence_with(&f, word, max_domain, cfg)?;
                writeln!(w, "{rep}")?;
                reports.push(rep);
            }
            for rep in &reports {
                writeln!(w, "{}", serde_json::to_string(rep).expect("serializable report"))?;
            }
            w.flush()?;
            let bad: Vec<&str> = reports
                .iter()
                .filter(|r| !r.ok())
                .map(|r| r.canonical.as_str())
                .collect();
            if !bad.is_empty() {
                return Err(Failure::Mismatch(format!(
                    "oracle mismatch for {}",
                    bad.join(", ")
                )));
            }
        }
        Command::GenTax {
            kind,
            fanout,
            depth,
            exponent,
            nodes,
            roots,
            seed,
            out,
        } => {
            let t = match kind {
                TaxKind::Regular => taxonomy::gen_regular(fanout.round() as usize, depth, seed)?,
                TaxKind::Random => taxonomy::gen_random(fanout, depth, seed)?,
                TaxKind::ScaleFree => {
                    taxonomy::gen_scale_free_with_roots(nodes, exponent, roots, seed)?
                }
            };
            let mut w = output(&out)?;
            t.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::GenData { schema, n, seed, out } => {
            let schema = load_schema(&schema)?;
            let r = bench::gen_dataset(&schema, n, seed);
            let mut w = output(&out)?;
            r.write_csv(&mut w, 0..r.len())
                .map_err(|e| Failure::Input(e.to_string()))?;
            w.flush()?;
        }
        Command::GenPrefs {
            schema,
            kind,
            clauses,
            attrs,
            seed,
            out,
        } => {
            let schema = load_schema(&schema)?;
            let pairs = clauses / 2;
            let f = match kind {
                PrefKind::Conflicting => bench::gen_conflicting(&schema, pairs, seed)?,
                PrefKind::Contextual => bench::gen_contextual_pairs(&schema, attrs, pairs, seed)?,
            };
            let mut w = output(&out)?;
            write!(w, "{}", f.to_dsl_with_ids())?;
            w.flush()?;
        }
        Command::Bench {
            config,
            runs,
            seed,
            out,
            stats,
        } => {
            let mut cfg = match config {
                Some(p) => BenchConfig::from_toml(&std::fs::read_to_string(&p)?)
                    .map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?,
                None => BenchConfig::default(),
            };
            if let Some(r) = runs {
                cfg.runs = r;
            }
            if let Some(s) = seed {
                cfg.first_seed = s;
            }
            let report = bench::run_benchmark(&cfg);
            let mut w = output(&out)?;
            bench::write_rows(&mut w, &report.rows).map_err(|e| Failure::Input(e.to_string()))?;
            w.flush()?;
            for f in &report.failures {
                eprintln!("run with seed {} failed: {}", f.seed, f.message);
            }
            for (seed, seq) in &report.heuristic_disagreements {
                eprintln!("seed {seed}, sequence {seq:?}: presorted and plain Best differ");
            }
            if stats {
                for s in bench::summarize(&report.rows) {
                    eprintln!("{}", serde_json::to_string(&s).expect("serializable summary"));
                }
            }
            if !report.heuristic_disagreements.is_empty() {
                return Err(Failure::Mismatch(
                    "presorted and plain Best differ on a transitive sequence".into(),
                ));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
