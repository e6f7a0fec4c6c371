//! Seeded generators for test chains, test functions and probability vectors.

use num::BigRational;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::chain::{MarkovChain, VertexId};
use crate::rational::ratio;

/// Shape limits for [`random_chain`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainShape {
    pub min_vertices: usize,
    pub max_vertices: usize,
    /// Largest row denominator.
    pub max_den: u32,
}

impl Default for ChainShape {
    fn default() -> Self {
        ChainShape {
            min_vertices: 3,
            max_vertices: 12,
            max_den: 6,
        }
    }
}

/// Split `total` into `parts` positive integers, uniformly over compositions.
pub fn composition<R: Rng>(rng: &mut R, total: u32, parts: usize) -> Vec<u32> {
    assert!(parts >= 1 && total as usize >= parts);
    let mut cuts = rand::seq::index::sample(rng, total as usize - 1, parts - 1)
        .into_iter()
        .map(|c| c as u32 + 1)
        .collect::<Vec<_>>();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(total)) {
        out.push(c - prev);
        prev = c;
    }
    out
}

/// Build a row over `targets` with a random denominator `D ≤ max_den`.
fn random_row<R: Rng>(rng: &mut R, targets: &[VertexId], max_den: u32) -> Vec<(VertexId, BigRational)> {
    let m = targets.len() as u32;
    let den = rng.gen_range(m..=max_den.max(m));
    let parts = composition(rng, den, targets.len());
    targets
        .iter()
        .zip(parts)
        .map(|(v, k)| (*v, ratio(k as i64, den as i64)))
        .collect()
}

/// A random irreducible chain: a random Hamiltonian cycle guarantees
/// irreducibility, and every vertex gets a few extra random targets.
pub fn random_chain<R: Rng>(rng: &mut R, shape: ChainShape) -> MarkovChain {
    let n = rng.gen_range(shape.min_vertices..=shape.max_vertices);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut next = vec![0; n];
    for i in 0..n {
        next[order[i]] = order[(i + 1) % n];
    }
    let max_targets = (shape.max_den as usize).min(n);
    let rows = (0..n)
        .map(|u| {
            let extra = rng.gen_range(0..max_targets);
            let mut targets = vec![VertexId(next[u])];
            for _ in 0..extra {
                let v = VertexId(rng.gen_range(0..n));
                if !targets.contains(&v) {
                    targets.push(v);
                }
            }
            targets.sort();
            random_row(rng, &targets, shape.max_den)
        })
        .collect();
    let labels = (0..n).map(|i| format!("v{i}")).collect();
    MarkovChain::from_rows(labels, rows).expect("generated rows are valid")
}

/// A random rational function with small numerators and denominators.
pub fn random_function<R: Rng>(rng: &mut R, n: usize) -> Vec<BigRational> {
    (0..n)
        .map(|_| ratio(rng.gen_range(-20..=20), rng.gen_range(1..=12)))
        .collect()
}

/// Three distinct vertices `(a, b, c)`.
pub fn distinct_triple<R: Rng>(rng: &mut R, n: usize) -> (VertexId, VertexId, VertexId) {
    let picked = rand::seq::index::sample(rng, n, 3);
    (VertexId(picked.index(0)), VertexId(picked.index(1)), VertexId(picked.index(2)))
}

/// A random probability vector of length `1..=max_len` whose entries share a
/// denominator of at most `max_den`.
pub fn random_probability_vector<R: Rng>(rng: &mut R, max_len: usize, max_den: u32) -> Vec<BigRational> {
    let n = rng.gen_range(1..=max_len);
    let den = rng.gen_range(n as u32..=max_den);
    composition(rng, den, n)
        .into_iter()
        .map(|k| ratio(k as i64, den as i64))
        .collect()
}

/// A random chain with absorbing sinks, in which every vertex can reach a sink.
///
/// Returns the chain and its sinks. Non-sink vertices are placed in a random
/// order and each gets one edge to a later vertex (or to a sink), so a sink is
/// always reachable; extra edges may point anywhere.
pub fn random_sink_chain<R: Rng>(rng: &mut R, max_vertices: usize, max_den: u32) -> (MarkovChain, Vec<VertexId>) {
    let n = rng.gen_range(3..=max_vertices);
    let sinks_count = rng.gen_range(1..=2.min(n - 2));
    let sinks: Vec<VertexId> = (n - sinks_count..n).map(VertexId).collect();
    let mut order: Vec<usize> = (0..n - sinks_count).collect();
    order.shuffle(rng);
    let mut rows = vec![Vec::new(); n];
    for (pos, &u) in order.iter().enumerate() {
        let forward = if pos + 1 < order.len() && rng.gen_bool(0.7) {
            VertexId(order[rng.gen_range(pos + 1..order.len())])
        } else {
            *sinks.choose(rng).unwrap()
        };
        let mut targets = vec![forward];
        let extra = rng.gen_range(0..(max_den as usize).min(n));
        for _ in 0..extra {
            let v = VertexId(rng.gen_range(0..n));
            if !targets.contains(&v) {
                targets.push(v);
            }
        }
        targets.sort();
        rows[u] = random_row(rng, &targets, max_den);
    }
    for s in &sinks {
        rows[s.0] = vec![(*s, ratio(1, 1))];
    }
    let labels = (0..n).map(|i| format!("v{i}")).collect();
    let chain = MarkovChain::from_rows(labels, rows).expect("generated rows are valid");
    (chain, sinks)
}
