//! Exact-rational Markov chains and the surgeries used to set up rotor walks.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::hash::Hash;

use num::{BigInt, BigRational, One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::format_ratio;

/// Dense index into a chain's vertex table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId(pub usize);

impl VertexId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("row of {vertex} sums to {sum}, expected 1")]
    RowSum { vertex: String, sum: String },
    #[error("negative probability {prob} on edge {from} -> {to}")]
    NegativeProbability { from: String, to: String, prob: String },
    #[error("zero denominator on edge {from} -> {to}")]
    ZeroDenominator { from: String, to: String },
    #[error("edge {from} -> {to} refers to an undeclared vertex")]
    DanglingVertex { from: String, to: String },
    #[error("duplicate edge {from} -> {to}")]
    DuplicateEdge { from: String, to: String },
    #[error("vertex {0} declared twice")]
    DuplicateVertex(String),
    #[error("unknown vertex {0}")]
    UnknownVertex(String),
    #[error("cannot redirect {0} to itself")]
    SelfRedirect(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("chain is not irreducible")]
    ReducibleChain,
    #[error("potential has no value at {0}")]
    MissingValue(String),
    #[error("chain reachable from {start} exceeds {limit} vertices; give a truncation radius")]
    InfiniteChain { start: String, limit: usize },
    #[error("malformed chain description: {0}")]
    Parse(String),
}

/// A Markov chain on a finite vertex table with exact rational rows.
///
/// Rows are sorted by target id, have no duplicate targets, strictly positive
/// entries, and sum to exactly one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkovChain {
    labels: Vec<String>,
    index: HashMap<String, VertexId>,
    rows: Vec<Vec<(VertexId, BigRational)>>,
}

/// One edge of a JSON chain description; probabilities are integer pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from: String,
    pub to: String,
    pub num: i64,
    pub den: i64,
}

/// The JSON chain document: `{"vertices": [...], "edges": [...]}`.
///
/// `sinks` is only read by sink-system routing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ChainSpec {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sinks: Vec<String>,
}

impl ChainSpec {
    pub fn from_json(text: &str) -> Result<ChainSpec, ChainError> {
        serde_json::from_str(text).map_err(|e| ChainError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("chain spec serializes")
    }

    pub fn build(&self) -> Result<MarkovChain, ChainError> {
        build_chain(self)
    }
}

/// Validate a chain description and build the chain.
pub fn build_chain(spec: &ChainSpec) -> Result<MarkovChain, ChainError> {
    let mut builder = ChainBuilder::new();
    for v in &spec.vertices {
        builder.vertex(v)?;
    }
    for e in &spec.edges {
        if e.den == 0 {
            return Err(ChainError::ZeroDenominator {
                from: e.from.clone(),
                to: e.to.clone(),
            });
        }
        builder.edge(&e.from, &e.to, BigRational::new(e.num.into(), e.den.into()))?;
    }
    builder.build()
}

/// Incremental construction of a [`MarkovChain`] by label.
#[derive(Debug, Default)]
pub struct ChainBuilder {
    labels: Vec<String>,
    index: HashMap<String, VertexId>,
    rows: Vec<Vec<(VertexId, BigRational)>>,
}

impl ChainBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vertex(&mut self, label: &str) -> Result<VertexId, ChainError> {
        if self.index.contains_key(label) {
            return Err(ChainError::DuplicateVertex(label.to_string()));
        }
        let id = VertexId(self.labels.len());
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), id);
        self.rows.push(Vec::new());
        Ok(id)
    }

    /// Add `from -> to` with probability `prob`. Zero entries are dropped.
    pub fn edge(&mut self, from: &str, to: &str, prob: BigRational) -> Result<(), ChainError> {
        let dangling = || ChainError::DanglingVertex {
            from: from.to_string(),
            to: to.to_string(),
        };
        let u = *self.index.get(from).ok_or_else(dangling)?;
        let v = *self.index.get(to).ok_or_else(dangling)?;
        self.edge_by_id(u, v, prob)
    }

    pub fn edge_by_id(&mut self, u: VertexId, v: VertexId, prob: BigRational) -> Result<(), ChainError> {
        if prob.is_negative() {
            return Err(ChainError::NegativeProbability {
                from: self.labels[u.0].clone(),
                to: self.labels[v.0].clone(),
                prob: format_ratio(&prob),
            });
        }
        if prob.is_zero() {
            return Ok(());
        }
        if self.rows[u.0].iter().any(|(w, _)| *w == v) {
            return Err(ChainError::DuplicateEdge {
                from: self.labels[u.0].clone(),
                to: self.labels[v.0].clone(),
            });
        }
        self.rows[u.0].push((v, prob));
        Ok(())
    }

    pub fn build(self) -> Result<MarkovChain, ChainError> {
        let mut rows = self.rows;
        for (u, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|(v, _)| *v);
            let sum: BigRational = row.iter().map(|(_, p)| p).sum();
            if !sum.is_one() {
                return Err(ChainError::RowSum {
                    vertex: self.labels[u].clone(),
                    sum: format_ratio(&sum),
                });
            }
        }
        Ok(MarkovChain {
            labels: self.labels,
            index: self.index,
            rows,
        })
    }
}

impl MarkovChain {
    /// Build from labels and rows indexed by position.
    pub fn from_rows(
        labels: Vec<String>,
        rows: Vec<Vec<(VertexId, BigRational)>>,
    ) -> Result<MarkovChain, ChainError> {
        let mut builder = ChainBuilder::new();
        for l in &labels {
            builder.vertex(l)?;
        }
        for (u, row) in rows.into_iter().enumerate() {
            for (v, p) in row {
                if v.0 >= labels.len() {
                    return Err(ChainError::DanglingVertex {
                        from: labels[u].clone(),
                        to: v.to_string(),
                    });
                }
                builder.edge_by_id(VertexId(u), v, p)?;
            }
        }
        builder.build()
    }

    pub fn from_json(text: &str) -> Result<MarkovChain, ChainError> {
        ChainSpec::from_json(text)?.build()
    }

    /// The JSON description of this chain.
    pub fn to_spec(&self) -> ChainSpec {
        let edges = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(u, row)| {
                row.iter().map(move |(v, p)| EdgeSpec {
                    from: self.labels[u].clone(),
                    to: self.labels[v.0].clone(),
                    num: i64::try_from(p.numer()).expect("numerator fits in i64"),
                    den: i64::try_from(p.denom()).expect("denominator fits in i64"),
                })
            })
            .collect();
        ChainSpec {
            vertices: self.labels.clone(),
            edges,
            sinks: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.labels.len()).map(VertexId)
    }

    pub fn label(&self, v: VertexId) -> &str {
        &self.labels[v.0]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn id(&self, label: &str) -> Result<VertexId, ChainError> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| ChainError::UnknownVertex(label.to_string()))
    }

    pub fn row(&self, u: VertexId) -> &[(VertexId, BigRational)] {
        &self.rows[u.0]
    }

    pub fn prob(&self, u: VertexId, v: VertexId) -> BigRational {
        self.rows[u.0]
            .iter()
            .find(|(w, _)| *w == v)
            .map(|(_, p)| p.clone())
            .unwrap_or_else(BigRational::zero)
    }

    /// Lowest common denominator of the probabilities leaving `u`.
    pub fn row_denominator(&self, u: VertexId) -> BigInt {
        crate::rational::common_denominator(self.rows[u.0].iter().map(|(_, p)| p))
    }

    /// Vertices reachable from `start` (including `start`).
    pub fn reachable_from(&self, start: VertexId) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([start]);
        seen[start.0] = true;
        while let Some(u) = queue.pop_front() {
            for (v, _) in &self.rows[u.0] {
                if !seen[v.0] {
                    seen[v.0] = true;
                    queue.push_back(*v);
                }
            }
        }
        seen
    }

    /// Vertices from which some vertex of `targets` can be reached.
    pub fn can_reach(&self, targets: &[VertexId]) -> Vec<bool> {
        let mut reverse: Vec<Vec<VertexId>> = vec![Vec::new(); self.len()];
        for (u, row) in self.rows.iter().enumerate() {
            for (v, _) in row {
                reverse[v.0].push(VertexId(u));
            }
        }
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::new();
        for &t in targets {
            if !seen[t.0] {
                seen[t.0] = true;
                queue.push_back(t);
            }
        }
        while let Some(v) = queue.pop_front() {
            for &u in &reverse[v.0] {
                if !seen[u.0] {
                    seen[u.0] = true;
                    queue.push_back(u);
                }
            }
        }
        seen
    }

    pub fn is_irreducible(&self) -> bool {
        if self.is_empty() {
            return false;
        }
        let first = VertexId(0);
        self.reachable_from(first).iter().all(|&b| b) && self.can_reach(&[first]).iter().all(|&b| b)
    }

    /// Replace the row of every vertex in `sources` by `{a: 1}`.
    pub fn redirect_to(&self, sources: &[VertexId], a: VertexId) -> Result<MarkovChain, ChainError> {
        if sources.contains(&a) {
            return Err(ChainError::SelfRedirect(self.label(a).to_string()));
        }
        let mut chain = self.clone();
        for &s in sources {
            chain.rows[s.0] = vec![(a, BigRational::one())];
        }
        Ok(chain)
    }

    /// Replace the row of every vertex in `sinks` by a self-loop.
    pub fn make_absorbing(&self, sinks: &[VertexId]) -> MarkovChain {
        let mut chain = self.clone();
        for &s in sinks {
            chain.rows[s.0] = vec![(s, BigRational::one())];
        }
        chain
    }

    /// Reorder the vertex table by `perm` (new id `i` is old vertex `perm[i]`).
    pub fn permuted(&self, perm: &[VertexId]) -> MarkovChain {
        assert_eq!(perm.len(), self.len());
        let mut inverse = vec![VertexId(0); self.len()];
        for (new, old) in perm.iter().enumerate() {
            inverse[old.0] = VertexId(new);
        }
        let labels = perm.iter().map(|o| self.labels[o.0].clone()).collect();
        let rows = perm
            .iter()
            .map(|o| {
                self.rows[o.0]
                    .iter()
                    .map(|(v, p)| (inverse[v.0], p.clone()))
                    .collect()
            })
            .collect();
        MarkovChain::from_rows(labels, rows).expect("permutation preserves validity")
    }
}

/// A chain given by a row oracle, possibly on an infinite vertex set.
pub trait ChainFamily {
    type Vertex: Copy + Eq + Hash + fmt::Debug;

    fn transitions(&self, v: Self::Vertex) -> Vec<(Self::Vertex, BigRational)>;

    fn label(&self, v: Self::Vertex) -> String {
        format!("{v:?}")
    }
}

impl ChainFamily for MarkovChain {
    type Vertex = VertexId;

    fn transitions(&self, v: VertexId) -> Vec<(VertexId, BigRational)> {
        self.rows[v.0].clone()
    }

    fn label(&self, v: VertexId) -> String {
        self.labels[v.0].clone()
    }
}

/// Where a vertex of a split chain came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRole<V> {
    /// `a0`: the outgoing copy of the split vertex.
    Outgoing(V),
    /// `a1`: the incoming copy of the split vertex.
    Incoming(V),
    /// A vertex strictly inside the truncation radius.
    Interior(V),
    /// A vertex at exactly the truncation radius, sent back to `a0`.
    Boundary(V),
}

impl<V: Copy> SplitRole<V> {
    pub fn original(&self) -> V {
        match *self {
            SplitRole::Outgoing(v) | SplitRole::Incoming(v) | SplitRole::Interior(v) | SplitRole::Boundary(v) => v,
        }
    }
}

/// Result of [`split_and_truncate`].
#[derive(Debug, Clone)]
pub struct SplitChain<V> {
    pub chain: MarkovChain,
    pub a0: VertexId,
    pub a1: VertexId,
    pub roles: Vec<SplitRole<V>>,
    pub index: HashMap<V, VertexId>,
    pub radius: Option<usize>,
}

impl<V: Copy + Eq + Hash> SplitChain<V> {
    /// The id a successor `v` maps to (edges into the split vertex land on `a1`).
    pub fn target_of(&self, split: V, v: V) -> VertexId {
        if v == split {
            self.a1
        } else {
            self.index[&v]
        }
    }

    pub fn boundary(&self) -> Vec<VertexId> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| matches!(r, SplitRole::Boundary(_)))
            .map(|(i, _)| VertexId(i))
            .collect()
    }
}

/// Upper bound on the size of a chain explored without a truncation radius.
pub const MAX_EXPLORED_VERTICES: usize = 250_000;

/// Split `a` into an outgoing copy `a0` and an incoming copy `a1` with
/// `a1 -> a0` forced, and optionally truncate at graph distance `radius`
/// from `a`: every vertex at distance exactly `radius` is sent to `a0`.
/// Only vertices reachable from `a` are kept.
pub fn split_and_truncate<F: ChainFamily>(
    family: &F,
    a: F::Vertex,
    radius: Option<usize>,
) -> Result<SplitChain<F::Vertex>, ChainError> {
    assert!(radius.is_none_or(|d| d >= 1), "truncation radius must be at least 1");

    // Breadth-first layers from `a`; the boundary layer is not expanded.
    let mut order: Vec<(F::Vertex, usize)> = Vec::new();
    let mut dist: HashMap<F::Vertex, usize> = HashMap::new();
    let mut expanded: HashMap<F::Vertex, Vec<(F::Vertex, BigRational)>> = HashMap::new();
    let mut queue = VecDeque::from([a]);
    dist.insert(a, 0);
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        if radius == Some(du) {
            continue;
        }
        let row = family.transitions(u);
        for (v, _) in &row {
            if !dist.contains_key(v) {
                dist.insert(*v, du + 1);
                if dist.len() > MAX_EXPLORED_VERTICES {
                    return Err(ChainError::InfiniteChain {
                        start: family.label(a),
                        limit: MAX_EXPLORED_VERTICES,
                    });
                }
                order.push((*v, du + 1));
                queue.push_back(*v);
            }
        }
        expanded.insert(u, row);
    }

    let a0 = VertexId(0);
    let a1 = VertexId(1);
    let base = family.label(a);
    let mut labels = vec![format!("{base}#0"), format!("{base}#1")];
    let mut roles = vec![SplitRole::Outgoing(a), SplitRole::Incoming(a)];
    let mut index = HashMap::new();
    for (v, dv) in &order {
        index.insert(*v, VertexId(labels.len()));
        labels.push(family.label(*v));
        roles.push(if radius == Some(*dv) {
            SplitRole::Boundary(*v)
        } else {
            SplitRole::Interior(*v)
        });
    }

    let map_row = |row: &[(F::Vertex, BigRational)]| -> Vec<(VertexId, BigRational)> {
        row.iter()
            .map(|(v, p)| (if *v == a { a1 } else { index[v] }, p.clone()))
            .collect()
    };
    let mut rows = Vec::with_capacity(labels.len());
    rows.push(map_row(&expanded[&a]));
    rows.push(vec![(a0, BigRational::one())]);
    for (v, _) in &order {
        match expanded.get(v) {
            Some(row) => rows.push(map_row(row)),
            None => rows.push(vec![(a0, BigRational::one())]),
        }
    }

    let chain = MarkovChain::from_rows(labels, rows)?;
    Ok(SplitChain {
        chain,
        a0,
        a1,
        roles,
        index,
        radius,
    })
}

/// Convenience constructors for the small chains used throughout the tests and docs.
pub mod examples {
    use super::*;
    use crate::rational::ratio;

    /// `a <-> b`, deterministic.
    pub fn two_cycle() -> MarkovChain {
        let mut b = ChainBuilder::new();
        let a = b.vertex("a").unwrap();
        let bb = b.vertex("b").unwrap();
        b.edge_by_id(a, bb, ratio(1, 1)).unwrap();
        b.edge_by_id(bb, a, ratio(1, 1)).unwrap();
        b.build().unwrap()
    }

    /// Simple random walk on the path `0 - 1 - ... - (n-1)` with reflecting ends.
    pub fn path(n: usize) -> MarkovChain {
        assert!(n >= 2);
        let labels: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let rows = (0..n)
            .map(|i| {
                if i == 0 {
                    vec![(VertexId(1), ratio(1, 1))]
                } else if i == n - 1 {
                    vec![(VertexId(n - 2), ratio(1, 1))]
                } else {
                    vec![(VertexId(i - 1), ratio(1, 2)), (VertexId(i + 1), ratio(1, 2))]
                }
            })
            .collect();
        MarkovChain::from_rows(labels, rows).unwrap()
    }

    /// Simple random walk on the cycle of length `n` (the triangle for `n = 3`).
    pub fn cycle(n: usize) -> MarkovChain {
        assert!(n >= 3);
        let labels: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let rows = (0..n)
            .map(|i| {
                let mut row = vec![
                    (VertexId((i + n - 1) % n), ratio(1, 2)),
                    (VertexId((i + 1) % n), ratio(1, 2)),
                ];
                row.sort_by_key(|(v, _)| *v);
                row
            })
            .collect();
        MarkovChain::from_rows(labels, rows).unwrap()
    }
}
