//! Preference evaluation: pairwise preference tests, relevance, the height
//! index, and Best computation by block-nested-loop or naive scan.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::formula::{Formula, Predicate, Schema, TRelation, TTuple};
use crate::rewrite::{apply_sequence, Canonical, RewriteError};

/// Height index of a tuple that matches no better side.
pub const NO_HEIGHT: u32 = u32::MAX;

/// Per-tuple bitmasks of the clause sides a tuple satisfies, laid out as
/// `words` 64-bit words per tuple.
#[derive(Debug, Clone)]
pub struct Masks {
    words: usize,
    better: Vec<u64>,
    worse: Vec<u64>,
}

struct Compiled<'a> {
    schema: &'a Schema,
    preds: Vec<Predicate>,
    better: Vec<Vec<usize>>,
    worse: Vec<Vec<usize>>,
    better_leq_heights: Vec<Option<u32>>,
}

impl<'a> Compiled<'a> {
    fn new(f: &'a Formula) -> Self {
        let schema = &*f.schema;
        let mut preds: Vec<Predicate> = Vec::new();
        let mut idx = |p: &Predicate| match preds.iter().position(|q| q == p) {
            Some(i) => i,
            None => {
                preds.push(*p);
                preds.len() - 1
            }
        };
        let mut better = Vec::new();
        let mut worse = Vec::new();
        let mut heights = Vec::new();
        for s in &f.statements {
            for c in &s.clauses {
                better.push(c.better.iter().map(&mut idx).collect());
                worse.push(c.worse.iter().map(&mut idx).collect());
                heights.push(
                    c.better
                        .iter()
                        .filter(|p| p.polarity == crate::formula::Polarity::Leq)
                        .map(|p| schema.taxonomy(p.attr).height(p.value))
                        .min(),
                );
            }
        }
        Self {
            schema,
            preds,
            better,
            worse,
            better_leq_heights: heights,
        }
    }

    fn words(&self) -> usize {
        self.better.len().div_ceil(64).max(1)
    }

    fn fill(&self, t: &TTuple, truth: &mut Vec<bool>, b: &mut [u64], w: &mut [u64]) {
        truth.clear();
        truth.extend(self.preds.iter().map(|p| p.eval(self.schema, t)));
        for (k, (bs, ws)) in self.better.iter().zip(&self.worse).enumerate() {
            if bs.iter().all(|&i| truth[i]) {
                b[k / 64] |= 1 << (k % 64);
            }
            if ws.iter().all(|&i| truth[i]) {
                w[k / 64] |= 1 << (k % 64);
            }
        }
    }
}

impl Masks {
    pub fn compute(f: &Formula, tuples: &[TTuple]) -> Self {
        let c = Compiled::new(f);
        let words = c.words();
        let mut better = vec![0u64; tuples.len() * words];
        let mut worse = vec![0u64; tuples.len() * words];
        let mut truth = Vec::new();
        for (i, t) in tuples.iter().enumerate() {
            let r = i * words..(i + 1) * words;
            c.fill(t, &mut truth, &mut better[r.clone()], &mut worse[r]);
        }
        Self {
            words,
            better,
            worse,
        }
    }

    fn b(&self, i: usize) -> &[u64] {
        &self.better[i * self.words..(i + 1) * self.words]
    }

    fn w(&self, i: usize) -> &[u64] {
        &self.worse[i * self.words..(i + 1) * self.words]
    }

    /// Tuple `i` is weakly preferred to tuple `j`.
    pub fn weak(&self, i: usize, j: usize) -> bool {
        self.b(i).iter().zip(self.w(j)).any(|(x, y)| x & y != 0)
    }

    pub fn strict(&self, i: usize, j: usize) -> bool {
        self.weak(i, j) && !self.weak(j, i)
    }

    pub fn relevant(&self, i: usize) -> bool {
        self.b(i).iter().chain(self.w(i)).any(|&x| x != 0)
    }

    pub(crate) fn better_words(&self, i: usize) -> &[u64] {
        self.b(i)
    }

    pub(crate) fn worse_bit(&self, i: usize, clause: usize) -> bool {
        self.w(i)[clause / 64] >> (clause % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.better.len() / self.words
    }

    pub fn is_empty(&self) -> bool {
        self.better.is_empty()
    }
}

fn pair_masks(f: &Formula, t1: &TTuple, t2: &TTuple) -> Masks {
    Masks::compute(f, &[t1.clone(), t2.clone()])
}

/// `t1` is weakly preferred to `t2`: some clause has its better side
/// satisfied by `t1` and its worse side by `t2`.
pub fn weak_pref(f: &Formula, t1: &TTuple, t2: &TTuple) -> bool {
    pair_masks(f, t1, t2).weak(0, 1)
}

pub fn strict_pref(f: &Formula, t1: &TTuple, t2: &TTuple) -> bool {
    pair_masks(f, t1, t2).strict(0, 1)
}

pub fn relevant(f: &Formula, t: &TTuple) -> bool {
    Masks::compute(f, std::slice::from_ref(t)).relevant(0)
}

/// Smallest height among the `<=` predicates of the better sides `t`
/// satisfies; [`NO_HEIGHT`] when there is none.
pub fn height_index(f: &Formula, t: &TTuple) -> u32 {
    height_indices(f, std::slice::from_ref(t))[0]
}

fn height_indices(f: &Formula, tuples: &[TTuple]) -> Vec<u32> {
    let m = Masks::compute(f, tuples);
    heights_from_masks(f, &m, 0..tuples.len())
}

fn heights_from_masks(f: &Formula, m: &Masks, rows: impl Iterator<Item = usize>) -> Vec<u32> {
    let c = Compiled::new(f);
    rows.map(|i| {
        let mut h = NO_HEIGHT;
        for (wi, &word) in m.b(i).iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let k = wi * 64 + bits.trailing_zeros() as usize;
                bits &= bits - 1;
                if let Some(x) = c.better_leq_heights[k] {
                    h = h.min(x);
                }
            }
        }
        h
    })
    .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BestOptions {
    /// Sort candidates by ascending height index before the scan.
    pub heuristic: bool,
    /// Consider every tuple instead of only the relevant ones.
    pub keep_irrelevant: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BestResult {
    /// Row indices into the input relation, ascending.
    pub rows: Vec<usize>,
    pub relevant_count: usize,
    pub comparisons: u64,
    #[serde(serialize_with = "ser_ms")]
    pub elapsed: Duration,
}

fn ser_ms<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64() * 1e3)
}

impl BestResult {
    pub fn tuples<'a>(&'a self, r: &'a TRelation) -> impl Iterator<Item = &'a TTuple> + 'a {
        self.rows.iter().map(move |&i| &r.tuples()[i])
    }
}

/// Block-nested-loop scan. Exact when `f` induces a transitive strict
/// preference, which holds for formulas rewritten by a sequence ending in `T`.
pub fn best(f: &Formula, r: &TRelation, opts: BestOptions) -> BestResult {
    let start = Instant::now();
    let tuples = r.tuples();
    let m = Masks::compute(f, tuples);
    let relevant: Vec<usize> = (0..tuples.len()).filter(|&i| m.relevant(i)).collect();
    let relevant_count = relevant.len();
    let mut cand = if opts.keep_irrelevant {
        (0..tuples.len()).collect()
    } else {
        relevant
    };
    if opts.heuristic {
        let h = heights_from_masks(f, &m, cand.iter().copied());
        let mut order: Vec<usize> = (0..cand.len()).collect();
        order.sort_by_key(|&k| h[k]);
        cand = order.into_iter().map(|k| cand[k]).collect();
    }
    let mut comparisons = 0u64;
    let mut window: Vec<usize> = Vec::new();
    let mut beaten: Vec<usize> = Vec::new();
    'next: for t in cand {
        beaten.clear();
        for (k, &w) in window.iter().enumerate() {
            comparisons += 1;
            let (wt, tw) = (m.weak(w, t), m.weak(t, w));
            if wt && !tw {
                continue 'next;
            }
            if tw && !wt {
                beaten.push(k);
            }
        }
        for &k in beaten.iter().rev() {
            window.swap_remove(k);
        }
        window.push(t);
    }
    window.sort_unstable();
    BestResult {
        rows: window,
        relevant_count,
        comparisons,
        elapsed: start.elapsed(),
    }
}

/// Tuples not strictly dominated by any other, by exhaustive pairwise scan.
/// Exact for every formula.
pub fn naive_best(f: &Formula, r: &TRelation, keep_irrelevant: bool) -> BestResult {
    let start = Instant::now();
    let m = Masks::compute(f, r.tuples());
    let n = r.len();
    let cand: Vec<usize> = (0..n)
        .filter(|&i| keep_irrelevant || m.relevant(i))
        .collect();
    let relevant_count = (0..n).filter(|&i| m.relevant(i)).count();
    let mut comparisons = 0u64;
    let rows = cand
        .iter()
        .copied()
        .filter(|&t| {
            !cand.iter().any(|&u| {
                comparisons += 1;
                m.strict(u, t)
            })
        })
        .collect();
    BestResult {
        rows,
        relevant_count,
        comparisons,
        elapsed: start.elapsed(),
    }
}

/// Best of `r` after rewriting `f` by `word`, using the block-nested-loop
/// scan when the canonical sequence ends in `T` and the naive scan otherwise.
pub fn best_for_sequence(
    f: &Formula,
    word: &str,
    r: &TRelation,
    opts: BestOptions,
) -> Result<(Canonical, BestResult), RewriteError> {
    let seq = crate::rewrite::canonicalize(word)?;
    let g = apply_sequence(f, seq.as_str())?;
    let res = if seq.ends_with_t() {
        best(&g, r, opts)
    } else {
        naive_best(&g, r, opts.keep_irrelevant)
    };
    Ok((seq, res))
}

/// Rows in `Best` under `seq_a` but not `seq_b`, and the other way round.
pub fn diff_best(
    f: &Formula,
    seq_a: &str,
    seq_b: &str,
    r: &TRelation,
) -> Result<(Vec<usize>, Vec<usize>), RewriteError> {
    let opts = BestOptions::default();
    let (_, a) = best_for_sequence(f, seq_a, r, opts)?;
    let (_, b) = best_for_sequence(f, seq_b, r, opts)?;
    let only_a = a.rows.iter().filter(|i| !b.rows.contains(i)).copied().collect();
    let only_b = b.rows.iter().filter(|i| !a.rows.contains(i)).copied().collect();
    Ok((only_a, only_b))
}
