//! Taxonomies: finite partial orders over attribute values.
//!
//! A taxonomy is stored as a DAG of `child -> parent` edges. `leq(a, b)` holds
//! when `b` is reachable from `a` (reflexively), i.e. `a` is at least as
//! specific as `b`.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, Zeta};

/// Index of a value inside its taxonomy.
pub type ValueId = u32;

/// Above this many values a non-functional taxonomy answers reachability by
/// traversal instead of a materialised closure.
pub const DENSE_CLOSURE_LIMIT: usize = 1 << 16;

/// Probability that a node drawn by the scale-free generator is a leaf.
pub const SCALE_FREE_LEAF_PROB: f64 = 0.25;

/// Default number of maximal values for the scale-free generator.
pub const SCALE_FREE_ROOTS: usize = 6;

const SCALE_FREE_MAX_FANOUT: f64 = 1000.0;

const FORBIDDEN: &[char] = &[',', '&', '|', '>', '!', ';'];

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error("line {line}: {reason}: {text:?}")]
    MalformedLine {
        line: usize,
        text: String,
        reason: &'static str,
    },
    #[error("cycle detected through value {0:?}")]
    CycleDetected(String),
    #[error("taxonomy has no values")]
    EmptyTaxonomy,
    #[error("unknown value {0:?}")]
    UnknownValue(String),
    #[error("invalid generator parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
enum Reach {
    /// Pre-order interval labels; the subtree of `v` is `order[pre[v]..end[v]]`.
    Forest {
        pre: Vec<u32>,
        end: Vec<u32>,
        order: Vec<ValueId>,
    },
    /// `down[v]` holds every `u` with `u <= v`.
    Dense(Vec<FixedBitSet>),
    Traverse,
}

#[derive(Debug, Clone)]
pub struct Taxonomy {
    name: String,
    names: Vec<String>,
    index: HashMap<String, ValueId>,
    parents: Vec<Vec<ValueId>>,
    children: Vec<Vec<ValueId>>,
    heights: Vec<u32>,
    multiparent: Vec<ValueId>,
    roots: Vec<ValueId>,
    reach: Reach,
}

/// Incremental construction of a taxonomy from values and edges.
#[derive(Debug, Default, Clone)]
pub struct TaxonomyBuilder {
    names: Vec<String>,
    index: HashMap<String, ValueId>,
    edges: BTreeSet<(ValueId, ValueId)>,
}

impl TaxonomyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&mut self, name: &str) -> ValueId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as ValueId;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    /// Adds `child <= parent`. Self loops are ignored.
    pub fn edge(&mut self, child: &str, parent: &str) -> &mut Self {
        let c = self.value(child);
        let p = self.value(parent);
        if c != p {
            self.edges.insert((c, p));
        }
        self
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn build(self, name: impl Into<String>) -> Result<Taxonomy, TaxonomyError> {
        let n = self.names.len();
        if n == 0 {
            return Err(TaxonomyError::EmptyTaxonomy);
        }
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(c, p) in &self.edges {
            parents[c as usize].push(p);
            children[p as usize].push(c);
        }

        // Kahn's algorithm from the leaves up: every child precedes its parents.
        let mut pending: Vec<usize> = children.iter().map(Vec::len).collect();
        let mut queue: VecDeque<ValueId> = (0..n as ValueId)
            .filter(|&v| pending[v as usize] == 0)
            .collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            topo.push(v);
            for &p in &parents[v as usize] {
                pending[p as usize] -= 1;
                if pending[p as usize] == 0 {
                    queue.push_back(p);
                }
            }
        }
        if topo.len() != n {
            let stuck = (0..n).find(|&v| pending[v] > 0).unwrap();
            return Err(TaxonomyError::CycleDetected(self.names[stuck].clone()));
        }

        let mut heights = vec![u32::MAX; n];
        let mut queue: VecDeque<ValueId> = VecDeque::new();
        for v in 0..n {
            if children[v].is_empty() {
                heights[v] = 0;
                queue.push_back(v as ValueId);
            }
        }
        while let Some(v) = queue.pop_front() {
            let h = heights[v as usize] + 1;
            for &p in &parents[v as usize] {
                if heights[p as usize] == u32::MAX {
                    heights[p as usize] = h;
                    queue.push_back(p);
                }
            }
        }

        let multiparent: Vec<ValueId> = (0..n as ValueId)
            .filter(|&v| parents[v as usize].len() > 1)
            .collect();
        let roots: Vec<ValueId> = (0..n as ValueId)
            .filter(|&v| parents[v as usize].is_empty())
            .collect();

        let reach = if multiparent.is_empty() {
            forest_labels(&children, &roots)
        } else if n <= DENSE_CLOSURE_LIMIT {
            let mut down: Vec<FixedBitSet> = vec![FixedBitSet::new(); n];
            for &v in &topo {
                let mut row = FixedBitSet::with_capacity(n);
                row.insert(v as usize);
                for &c in &children[v as usize] {
                    row.union_with(&down[c as usize]);
                }
                down[v as usize] = row;
            }
            Reach::Dense(down)
        } else {
            Reach::Traverse
        };

        Ok(Taxonomy {
            name: name.into(),
            names: self.names,
            index: self.index,
            parents,
            children,
            heights,
            multiparent,
            roots,
            reach,
        })
    }
}

fn forest_labels(children: &[Vec<ValueId>], roots: &[ValueId]) -> Reach {
    let n = children.len();
    let mut pre = vec![0u32; n];
    let mut end = vec![0u32; n];
    let mut order = Vec::with_capacity(n);
    let mut stack: Vec<(ValueId, usize)> = Vec::new();
    for &r in roots {
        pre[r as usize] = order.len() as u32;
        order.push(r);
        stack.push((r, 0));
        while let Some(top) = stack.last_mut() {
            let (v, k) = *top;
            if let Some(&c) = children[v as usize].get(k) {
                top.1 += 1;
                pre[c as usize] = order.len() as u32;
                order.push(c);
                stack.push((c, 0));
            } else {
                end[v as usize] = order.len() as u32;
                stack.pop();
            }
        }
    }
    Reach::Forest { pre, end, order }
}

fn check_value(text: &str, value: &str, line: usize) -> Result<(), TaxonomyError> {
    let bad = |reason| TaxonomyError::MalformedLine {
        line,
        text: text.to_string(),
        reason,
    };
    if value.is_empty() {
        return Err(bad("empty value"));
    }
    if value.trim() != value {
        return Err(bad("value has leading or trailing whitespace"));
    }
    if value.contains(FORBIDDEN) || value.contains("<=") {
        return Err(bad("value contains a reserved character"));
    }
    Ok(())
}

impl Taxonomy {
    /// Parses the `child,parent` edge format. `value,` declares an isolated or
    /// root value and `#` starts a comment line.
    pub fn from_reader<R: Read>(name: &str, reader: R) -> Result<Self, TaxonomyError> {
        let mut b = TaxonomyBuilder::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let body = line.trim_end_matches(['\r', '\n']);
            if body.trim().is_empty() || body.trim_start().starts_with('#') {
                continue;
            }
            let mut parts = body.split(',');
            let (Some(child), Some(parent), None) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(TaxonomyError::MalformedLine {
                    line: lineno,
                    text: body.to_string(),
                    reason: "expected `child,parent` or `value,`",
                });
            };
            check_value(body, child, lineno)?;
            if parent.is_empty() {
                b.value(child);
            } else {
                check_value(body, parent, lineno)?;
                if child == parent {
                    return Err(TaxonomyError::CycleDetected(child.to_string()));
                }
                b.edge(child, parent);
            }
        }
        b.build(name)
    }

    pub fn from_csv_str(name: &str, text: &str) -> Result<Self, TaxonomyError> {
        Self::from_reader(name, text.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_reader(&name, std::fs::File::open(path)?)
    }

    /// Writes the edge format read by [`Taxonomy::from_reader`].
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for v in 0..self.len() {
            if self.parents[v].is_empty() {
                writeln!(w, "{},", self.names[v])?;
            }
        }
        for v in 0..self.len() {
            for &p in &self.parents[v] {
                writeln!(w, "{},{}", self.names[v], self.names[p as usize])?;
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, value: &str) -> Option<ValueId> {
        self.index.get(value).copied()
    }

    pub fn resolve(&self, value: &str) -> Result<ValueId, TaxonomyError> {
        self.id(value)
            .ok_or_else(|| TaxonomyError::UnknownValue(value.to_string()))
    }

    pub fn value_name(&self, v: ValueId) -> &str {
        &self.names[v as usize]
    }

    pub fn values(&self) -> impl Iterator<Item = ValueId> {
        0..self.names.len() as ValueId
    }

    pub fn parents(&self, v: ValueId) -> &[ValueId] {
        &self.parents[v as usize]
    }

    pub fn children(&self, v: ValueId) -> &[ValueId] {
        &self.children[v as usize]
    }

    pub fn roots(&self) -> &[ValueId] {
        &self.roots
    }

    pub fn multiparent(&self) -> &[ValueId] {
        &self.multiparent
    }

    pub fn is_functional(&self) -> bool {
        self.multiparent.is_empty()
    }

    /// Length of the shortest downward path from `v` to a leaf.
    pub fn height(&self, v: ValueId) -> u32 {
        self.heights[v as usize]
    }

    /// Number of values on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        let n = self.len();
        let mut longest = vec![1usize; n];
        let mut pending: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<ValueId> = self.roots.iter().copied().collect();
        let mut best = 0;
        while let Some(v) = queue.pop_front() {
            best = best.max(longest[v as usize]);
            for &c in &self.children[v as usize] {
                let c = c as usize;
                longest[c] = longest[c].max(longest[v as usize] + 1);
                pending[c] -= 1;
                if pending[c] == 0 {
                    queue.push_back(c as ValueId);
                }
            }
        }
        best
    }

    /// `a <= b`: `a` is a (reflexive, transitive) descendant of `b`.
    pub fn leq(&self, a: ValueId, b: ValueId) -> bool {
        if a == b {
            return true;
        }
        match &self.reach {
            Reach::Forest { pre, end, .. } => {
                let (pa, pb) = (pre[a as usize], pre[b as usize]);
                pb <= pa && pa < end[b as usize]
            }
            Reach::Dense(down) => down[b as usize].contains(a as usize),
            Reach::Traverse => {
                let mut seen = FixedBitSet::with_capacity(self.len());
                let mut stack = vec![a];
                seen.insert(a as usize);
                while let Some(v) = stack.pop() {
                    for &p in &self.parents[v as usize] {
                        if p == b {
                            return true;
                        }
                        if !seen.put(p as usize) {
                            stack.push(p);
                        }
                    }
                }
                false
            }
        }
    }

    pub fn leq_by_name(&self, a: &str, b: &str) -> Result<bool, TaxonomyError> {
        Ok(self.leq(self.resolve(a)?, self.resolve(b)?))
    }

    /// Every `u` with `u <= v`, including `v`.
    pub fn down_set(&self, v: ValueId) -> FixedBitSet {
        let n = self.len();
        match &self.reach {
            Reach::Forest { pre, end, order } => {
                let mut s = FixedBitSet::with_capacity(n);
                for &u in &order[pre[v as usize] as usize..end[v as usize] as usize] {
                    s.insert(u as usize);
                }
                s
            }
            Reach::Dense(down) => down[v as usize].clone(),
            Reach::Traverse => {
                let mut s = FixedBitSet::with_capacity(n);
                let mut stack = vec![v];
                s.insert(v as usize);
                while let Some(u) = stack.pop() {
                    for &c in &self.children[u as usize] {
                        if !s.put(c as usize) {
                            stack.push(c);
                        }
                    }
                }
                s
            }
        }
    }

    /// Some `w` with `w <= a` and `w <= b`, if one exists.
    pub fn common_descendant(&self, a: ValueId, b: ValueId) -> Option<ValueId> {
        if self.leq(a, b) {
            return Some(a);
        }
        if self.leq(b, a) {
            return Some(b);
        }
        if self.is_functional() {
            return None;
        }
        // Two upward paths from a shared descendant to incomparable values
        // split at a node with several parents.
        if let Reach::Dense(down) = &self.reach {
            if self.multiparent.len() > self.len() / 64 {
                let mut s = down[a as usize].clone();
                s.intersect_with(&down[b as usize]);
                return s.ones().next().map(|w| w as ValueId);
            }
        }
        self.multiparent
            .iter()
            .copied()
            .find(|&m| self.leq(m, a) && self.leq(m, b))
    }

    /// Whether some value lies below every `pos` value and below no `neg`
    /// value.
    pub fn has_value_within(&self, pos: &[ValueId], neg: &[ValueId]) -> bool {
        if self.is_functional() {
            if pos.is_empty() {
                return self.roots.iter().any(|r| !neg.contains(r));
            }
            let mut m = pos[0];
            for &p in &pos[1..] {
                if self.leq(p, m) {
                    m = p;
                } else if !self.leq(m, p) {
                    return false;
                }
            }
            return !neg.iter().any(|&n| self.leq(m, n));
        }
        let mut s = match pos.split_first() {
            None => {
                let mut all = FixedBitSet::with_capacity(self.len());
                all.insert_range(..);
                all
            }
            Some((&first, rest)) => {
                let mut s = self.down_set(first);
                for &p in rest {
                    s.intersect_with(&self.down_set(p));
                }
                s
            }
        };
        for &n in neg {
            if s.is_clear() {
                break;
            }
            s.difference_with(&self.down_set(n));
        }
        !s.is_clear()
    }
}

impl fmt::Display for Taxonomy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} values, {} roots, depth {})",
            self.name,
            self.len(),
            self.roots.len(),
            self.depth()
        )
    }
}

fn shuffled_labels(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).collect();
    labels.shuffle(rng);
    labels
}

/// Builds a forest from per-node parent indices, naming nodes by a seeded
/// permutation.
fn forest_from_parents(
    name: &str,
    parent: &[Option<usize>],
    rng: &mut ChaCha8Rng,
) -> Result<Taxonomy, TaxonomyError> {
    let labels = shuffled_labels(parent.len(), rng);
    let mut b = TaxonomyBuilder::new();
    let names: Vec<String> = labels.iter().map(|l| format!("v{l}")).collect();
    for (i, p) in parent.iter().enumerate() {
        match p {
            Some(p) => {
                b.edge(&names[i], &names[*p]);
            }
            None => {
                b.value(&names[i]);
            }
        }
    }
    b.build(name)
}

/// Complete forest of `fanout` roots where every non-leaf has `fanout`
/// children and every root-to-leaf path has `depth` values.
pub fn gen_regular(fanout: usize, depth: usize, seed: u64) -> Result<Taxonomy, TaxonomyError> {
    if fanout == 0 || depth == 0 {
        return Err(TaxonomyError::InvalidParameter(
            "fanout and depth must be positive".into(),
        ));
    }
    let mut parent: Vec<Option<usize>> = vec![None; fanout];
    let mut level: Vec<usize> = (0..fanout).collect();
    for _ in 1..depth {
        let mut next = Vec::with_capacity(level.len() * fanout);
        for &v in &level {
            for _ in 0..fanout {
                next.push(parent.len());
                parent.push(Some(v));
            }
        }
        level = next;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    forest_from_parents("regular", &parent, &mut rng)
}

/// Forest with `round(avg_fanout)` roots where every node above the last level
/// draws a Poisson number of children.
pub fn gen_random(avg_fanout: f64, depth: usize, seed: u64) -> Result<Taxonomy, TaxonomyError> {
    if !(avg_fanout > 0.0) || depth == 0 {
        return Err(TaxonomyError::InvalidParameter(
            "average fanout and depth must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poisson = Poisson::new(avg_fanout)
        .map_err(|e| TaxonomyError::InvalidParameter(e.to_string()))?;
    let roots = (avg_fanout.round() as usize).max(1);
    let mut parent: Vec<Option<usize>> = vec![None; roots];
    let mut level: Vec<usize> = (0..roots).collect();
    for _ in 1..depth {
        let mut next = Vec::new();
        for &v in &level {
            let k = poisson.sample(&mut rng) as usize;
            for _ in 0..k {
                next.push(parent.len());
                parent.push(Some(v));
            }
        }
        level = next;
    }
    forest_from_parents("random", &parent, &mut rng)
}

/// Forest of roughly `target_nodes` values whose fan-out follows a truncated
/// power law with the given exponent.
pub fn gen_scale_free(
    target_nodes: usize,
    exponent: f64,
    seed: u64,
) -> Result<Taxonomy, TaxonomyError> {
    gen_scale_free_with_roots(target_nodes, exponent, SCALE_FREE_ROOTS, seed)
}

pub fn gen_scale_free_with_roots(
    target_nodes: usize,
    exponent: f64,
    roots: usize,
    seed: u64,
) -> Result<Taxonomy, TaxonomyError> {
    if target_nodes == 0 || roots == 0 || !(exponent > 1.0) {
        return Err(TaxonomyError::InvalidParameter(
            "need target_nodes > 0, roots > 0 and exponent > 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zeta = Zeta::new(exponent).map_err(|e| TaxonomyError::InvalidParameter(e.to_string()))?;
    let roots = roots.min(target_nodes);
    let mut parent: Vec<Option<usize>> = Vec::new();
    let mut level: Vec<usize> = Vec::new();
    while parent.len() < target_nodes {
        if level.is_empty() {
            let start = parent.len();
            let k = roots.min(target_nodes - start);
            parent.extend(std::iter::repeat_n(None, k));
            level = (start..start + k).collect();
            continue;
        }
        let mut next = Vec::new();
        for &v in &level {
            let k = if rng.gen_bool(SCALE_FREE_LEAF_PROB) {
                0
            } else {
                loop {
                    let x: f64 = zeta.sample(&mut rng);
                    if x <= SCALE_FREE_MAX_FANOUT {
                        break x as usize;
                    }
                }
            };
            for _ in 0..k {
                next.push(parent.len());
                parent.push(Some(v));
            }
        }
        level = next;
    }
    forest_from_parents("scale_free", &parent, &mut rng)
}

/// Small random DAG; each non-root value gets one parent and, with
/// probability `extra_parent_prob`, a second one.
pub fn gen_small_dag(
    n: usize,
    root_prob: f64,
    extra_parent_prob: f64,
    rng: &mut impl Rng,
) -> Taxonomy {
    let mut b = TaxonomyBuilder::new();
    let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    b.value(&names[0]);
    for i in 1..n {
        b.value(&names[i]);
        if rng.gen_bool(root_prob) {
            continue;
        }
        let p = rng.gen_range(0..i);
        b.edge(&names[i], &names[p]);
        if i > 1 && rng.gen_bool(extra_parent_prob) {
            let q = rng.gen_range(0..i);
            b.edge(&names[i], &names[q]);
        }
    }
    b.build("dag").expect("parents precede children")
}
