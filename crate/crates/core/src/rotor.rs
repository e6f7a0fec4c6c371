//! Rotor mechanisms, configurations and the rotor-walk automaton.
//!
//! Residues are 0-based: a step first advances the rotor at the current
//! vertex, `r(x) <- (r(x) + 1) mod d(x)`, then moves the particle to
//! `succ(x)[r(x)]`. Residues are shown 1-based in every text output.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use num::{BigInt, ToPrimitive};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chain::{MarkovChain, VertexId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OrderingPolicy {
    /// Successors grouped by increasing vertex id.
    ById,
    /// Successors grouped by decreasing vertex id.
    ReverseId,
    /// A seeded shuffle of the successor multiset at each vertex.
    Shuffled(u64),
    /// Caller-supplied lists; the length at `u` may be any multiple of the row's denominator.
    Explicit(Vec<Vec<VertexId>>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MechanismError {
    #[error("successor list of {vertex} does not realise its transition probabilities")]
    OrderingMismatch { vertex: String },
    #[error("expected {expected} successor lists, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("row of {vertex} needs {d} successors, which is too many")]
    DegreeTooLarge { vertex: String, d: BigInt },
    #[error("rotor snapshot: {0}")]
    Snapshot(String),
}

/// Per-vertex successor lists realising a chain's probabilities exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RotorMechanism {
    succ: Vec<Vec<VertexId>>,
}

/// Largest rotor period accepted when deriving a mechanism.
pub const MAX_DEGREE: u64 = 1 << 20;

impl RotorMechanism {
    pub fn derive(chain: &MarkovChain, policy: &OrderingPolicy) -> Result<Self, MechanismError> {
        if let OrderingPolicy::Explicit(lists) = policy {
            return Self::from_lists(chain, lists.clone());
        }
        let mut succ = Vec::with_capacity(chain.len());
        for u in chain.vertices() {
            let d = chain.row_denominator(u);
            let d_small = d
                .to_u64()
                .filter(|&d| d <= MAX_DEGREE)
                .ok_or_else(|| MechanismError::DegreeTooLarge {
                    vertex: chain.label(u).to_string(),
                    d: d.clone(),
                })?;
            let mut list = Vec::with_capacity(d_small as usize);
            let mut row: Vec<_> = chain.row(u).to_vec();
            if *policy == OrderingPolicy::ReverseId {
                row.reverse();
            }
            for (v, p) in &row {
                let count = (p.numer() * (&d / p.denom())).to_usize().expect("count below degree");
                list.extend(std::iter::repeat_n(*v, count));
            }
            if let OrderingPolicy::Shuffled(seed) = policy {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u.0 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                list.shuffle(&mut rng);
            }
            succ.push(list);
        }
        Ok(RotorMechanism { succ })
    }

    /// Use explicit lists after checking them against the chain.
    pub fn from_lists(chain: &MarkovChain, lists: Vec<Vec<VertexId>>) -> Result<Self, MechanismError> {
        if lists.len() != chain.len() {
            return Err(MechanismError::WrongLength {
                expected: chain.len(),
                got: lists.len(),
            });
        }
        for u in chain.vertices() {
            if !realises_row(chain, u, &lists[u.0]) {
                return Err(MechanismError::OrderingMismatch {
                    vertex: chain.label(u).to_string(),
                });
            }
        }
        Ok(RotorMechanism { succ: lists })
    }

    pub fn len(&self) -> usize {
        self.succ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succ.is_empty()
    }

    pub fn degree(&self, u: VertexId) -> usize {
        self.succ[u.0].len()
    }

    pub fn successors(&self, u: VertexId) -> &[VertexId] {
        &self.succ[u.0]
    }

    pub fn successor(&self, u: VertexId, residue: usize) -> VertexId {
        self.succ[u.0][residue]
    }
}

/// Whether `list` emits each successor of `u` with exactly its probability.
pub fn realises_row(chain: &MarkovChain, u: VertexId, list: &[VertexId]) -> bool {
    if list.is_empty() {
        return false;
    }
    let mut counts: BTreeMap<VertexId, i64> = BTreeMap::new();
    for v in list {
        *counts.entry(*v).or_default() += 1;
    }
    let len = BigInt::from(list.len());
    let row = chain.row(u);
    counts.len() == row.len()
        && row.iter().all(|(v, p)| {
            let count = counts.get(v).copied().unwrap_or(0);
            // count / len == p  <=>  count * den == num * len
            BigInt::from(count) * p.denom() == p.numer() * &len
        })
}

/// Residue of every rotor.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RotorConfiguration {
    pub residues: Vec<usize>,
}

impl RotorConfiguration {
    /// Every rotor at `value mod d(u)`.
    pub fn uniform(mech: &RotorMechanism, value: usize) -> Self {
        RotorConfiguration {
            residues: (0..mech.len()).map(|u| value % mech.degree(VertexId(u))).collect(),
        }
    }

    pub fn random<R: Rng>(mech: &RotorMechanism, rng: &mut R) -> Self {
        RotorConfiguration {
            residues: (0..mech.len()).map(|u| rng.gen_range(0..mech.degree(VertexId(u)))).collect(),
        }
    }

    pub fn from_residues(mech: &RotorMechanism, residues: Vec<usize>) -> Self {
        let residues = residues
            .into_iter()
            .enumerate()
            .map(|(u, r)| r % mech.degree(VertexId(u)))
            .collect();
        RotorConfiguration { residues }
    }

    /// Snapshot as a JSON object mapping each label to its 1-based residue.
    pub fn to_json(&self, chain: &MarkovChain) -> String {
        let map: BTreeMap<&str, usize> = chain
            .vertices()
            .map(|v| (chain.label(v), self.residues[v.0] + 1))
            .collect();
        serde_json::to_string(&map).expect("snapshot serializes")
    }

    pub fn from_json(chain: &MarkovChain, mech: &RotorMechanism, text: &str) -> Result<Self, MechanismError> {
        let map: BTreeMap<String, usize> =
            serde_json::from_str(text).map_err(|e| MechanismError::Snapshot(e.to_string()))?;
        let mut residues = vec![0; chain.len()];
        for (label, r) in map {
            let v = chain.id(&label).map_err(|e| MechanismError::Snapshot(e.to_string()))?;
            if r == 0 || r > mech.degree(v) {
                return Err(MechanismError::Snapshot(format!("residue {r} out of range at {label}")));
            }
            residues[v.0] = r - 1;
        }
        Ok(RotorConfiguration { residues })
    }
}

/// Why [`run_until`] returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Hit,
    Budget,
}

/// The particle, the rotors and the visit counters of a rotor walk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkState {
    pub t: u64,
    pub x: VertexId,
    pub rotors: RotorConfiguration,
    pub visits: Vec<u64>,
    trace: Option<(usize, VecDeque<VertexId>)>,
}

impl WalkState {
    pub fn new(x0: VertexId, r0: RotorConfiguration) -> Self {
        let n = r0.residues.len();
        WalkState {
            t: 0,
            x: x0,
            rotors: r0,
            visits: vec![0; n],
            trace: None,
        }
    }

    /// Keep the last `capacity` positions left by the particle.
    pub fn with_trace(mut self, capacity: usize) -> Self {
        self.trace = Some((capacity, VecDeque::with_capacity(capacity)));
        self
    }

    pub fn trace(&self) -> Vec<VertexId> {
        self.trace.as_ref().map(|(_, q)| q.iter().copied().collect()).unwrap_or_default()
    }

    pub fn visits(&self, v: VertexId) -> u64 {
        self.visits[v.0]
    }

    pub fn rotor(&self, v: VertexId) -> usize {
        self.rotors.residues[v.0]
    }

    pub fn step(&mut self, mech: &RotorMechanism) {
        let x = self.x;
        let d = mech.degree(x);
        let r = &mut self.rotors.residues[x.0];
        *r += 1;
        if *r == d {
            *r = 0;
        }
        self.visits[x.0] += 1;
        self.t += 1;
        if let Some((cap, q)) = &mut self.trace {
            if q.len() == *cap {
                q.pop_front();
            }
            q.push_back(x);
        }
        self.x = mech.successor(x, *r);
    }
}

/// Step until `stop` holds (checked before each step) or `max_steps` steps were taken.
pub fn run_until<F>(state: &mut WalkState, mech: &RotorMechanism, mut stop: F, max_steps: u64) -> StopReason
where
    F: FnMut(&WalkState) -> bool,
{
    for _ in 0..max_steps {
        if stop(state) {
            return StopReason::Hit;
        }
        state.step(mech);
    }
    if stop(state) {
        StopReason::Hit
    } else {
        StopReason::Budget
    }
}

/// Least preperiod and period of the sequence `(x_t, r_t)`, or `None` if
/// either is not found within `max_steps` steps of the walk.
pub fn detect_period(
    mech: &RotorMechanism,
    r0: &RotorConfiguration,
    x0: VertexId,
    max_steps: u64,
) -> Option<(u64, u64)> {
    #[derive(Clone, PartialEq, Eq)]
    struct Key {
        x: VertexId,
        r: Vec<usize>,
    }
    let advance = |k: &mut Key| {
        let d = mech.degree(k.x);
        let r = &mut k.r[k.x.0];
        *r = (*r + 1) % d;
        k.x = mech.successor(k.x, *r);
    };
    let start = Key {
        x: x0,
        r: r0.residues.clone(),
    };

    // Brent's cycle finding.
    let mut spent = 0u64;
    let mut power = 1u64;
    let mut lambda = 1u64;
    let mut tortoise = start.clone();
    let mut hare = start.clone();
    advance(&mut hare);
    spent += 1;
    while tortoise != hare {
        if power == lambda {
            tortoise = hare.clone();
            power *= 2;
            lambda = 0;
        }
        advance(&mut hare);
        lambda += 1;
        spent += 1;
        if spent > max_steps {
            return None;
        }
    }

    let mut tortoise = start.clone();
    let mut hare = start;
    for _ in 0..lambda {
        advance(&mut hare);
    }
    let mut mu = 0u64;
    while tortoise != hare {
        advance(&mut tortoise);
        advance(&mut hare);
        mu += 1;
    }
    if mu + lambda > max_steps {
        return None;
    }
    Some((mu, lambda))
}

/// CSV `t,x,rotor_at_x` for times `0..=steps`, rotors shown 1-based.
pub fn trajectory_csv(chain: &MarkovChain, mech: &RotorMechanism, mut state: WalkState, steps: u64) -> String {
    let mut out = String::from("t,x,rotor_at_x\n");
    for i in 0..=steps {
        writeln!(out, "{},{},{}", state.t, chain.label(state.x), state.rotor(state.x) + 1).unwrap();
        if i < steps {
            state.step(mech);
        }
    }
    out
}

/// Emissions of vertex `u` over the given run, in order.
pub fn emissions(trajectory: &[VertexId], u: VertexId) -> Vec<VertexId> {
    trajectory
        .windows(2)
        .filter(|w| w[0] == u)
        .map(|w| w[1])
        .collect()
}

/// Total visit count, for the conservation check `Σ n_t(v) = t`.
pub fn total_visits(state: &WalkState) -> u64 {
    state.visits.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::examples::{cycle, path, two_cycle};
    use crate::chain::ChainBuilder;
    use crate::rational::{int, ratio};

    #[test]
    fn derive_orders() {
        let mut b = ChainBuilder::new();
        let u = b.vertex("u").unwrap();
        let v = b.vertex("v").unwrap();
        let w = b.vertex("w").unwrap();
        b.edge_by_id(u, v, ratio(2, 3)).unwrap();
        b.edge_by_id(u, w, ratio(1, 3)).unwrap();
        b.edge_by_id(v, u, int(1)).unwrap();
        b.edge_by_id(w, u, ratio(1, 2)).unwrap();
        b.edge_by_id(w, v, ratio(1, 2)).unwrap();
        let chain = b.build().unwrap();

        let m = RotorMechanism::derive(&chain, &OrderingPolicy::ById).unwrap();
        assert_eq!(m.successors(u), &[v, v, w]);
        assert_eq!(m.successors(v), &[u]);
        assert_eq!(m.successors(w), &[u, v]);

        let m = RotorMechanism::derive(&chain, &OrderingPolicy::ReverseId).unwrap();
        assert_eq!(m.successors(u), &[w, v, v]);

        let m = RotorMechanism::derive(&chain, &OrderingPolicy::Shuffled(7)).unwrap();
        let mut sorted = m.successors(u).to_vec();
        sorted.sort();
        assert_eq!(sorted, vec![v, v, w]);

        let doubled = vec![vec![v, w, v, v, w, v], vec![u], vec![v, u]];
        assert!(RotorMechanism::from_lists(&chain, doubled).is_ok());
        let wrong = vec![vec![v, w], vec![u], vec![u, v]];
        assert!(matches!(
            RotorMechanism::from_lists(&chain, wrong),
            Err(MechanismError::OrderingMismatch { vertex }) if vertex == "u"
        ));
    }

    #[test]
    fn forced_move_and_alternation() {
        let c = two_cycle();
        let m = RotorMechanism::derive(&c, &OrderingPolicy::ById).unwrap();
        let mut s = WalkState::new(VertexId(0), RotorConfiguration::uniform(&m, 0)).with_trace(8);
        for _ in 0..6 {
            s.step(&m);
        }
        let ids: Vec<usize> = s.trace().iter().map(|v| v.0).collect();
        assert_eq!(ids, vec![0, 1, 0, 1, 0, 1]);
        assert_eq!(s.rotor(VertexId(0)), 0);
    }

    #[test]
    fn first_move_on_path_goes_right() {
        let p = path(4);
        let m = RotorMechanism::derive(&p, &OrderingPolicy::ById).unwrap();
        let mut s = WalkState::new(VertexId(1), RotorConfiguration::uniform(&m, 0));
        s.step(&m);
        assert_eq!(s.x, VertexId(2));
        assert_eq!(s.rotor(VertexId(1)), 1);
    }

    #[test]
    fn run_until_reasons() {
        let p = path(4).redirect_to(&[VertexId(0), VertexId(3)], VertexId(1)).unwrap();
        let m = RotorMechanism::derive(&p, &OrderingPolicy::ById).unwrap();
        let r0 = RotorConfiguration::uniform(&m, 0);

        let mut s = WalkState::new(VertexId(1), r0.clone());
        let reason = run_until(&mut s, &m, |s| s.visits(VertexId(0)) + s.visits(VertexId(3)) == 100, 1_000_000);
        assert_eq!(reason, StopReason::Hit);
        assert_eq!(s.visits(VertexId(0)) + s.visits(VertexId(3)), 100);

        let mut s = WalkState::new(VertexId(1), r0.clone());
        assert_eq!(run_until(&mut s, &m, |_| false, 0), StopReason::Budget);
        assert_eq!(s.t, 0);

        let mut s = WalkState::new(VertexId(1), r0);
        assert_eq!(run_until(&mut s, &m, |_| false, 1_000_000), StopReason::Budget);
        assert_eq!(s.t, 1_000_000);
        assert_eq!(total_visits(&s), s.t);
    }

    #[test]
    fn periods() {
        let c = two_cycle();
        let m = RotorMechanism::derive(&c, &OrderingPolicy::ById).unwrap();
        assert_eq!(detect_period(&m, &RotorConfiguration::uniform(&m, 0), VertexId(0), 100), Some((0, 2)));

        let t = cycle(3);
        let m = RotorMechanism::derive(&t, &OrderingPolicy::ById).unwrap();
        let r0 = RotorConfiguration::uniform(&m, 0);
        let (mu, lambda) = detect_period(&m, &r0, VertexId(0), 10_000).unwrap();
        let mut a = WalkState::new(VertexId(0), r0.clone());
        for _ in 0..mu {
            a.step(&m);
        }
        let mut b = a.clone();
        for _ in 0..lambda {
            b.step(&m);
        }
        assert_eq!((a.x, &a.rotors), (b.x, &b.rotors));
        assert_eq!(detect_period(&m, &r0, VertexId(0), 1), None);
    }

    #[test]
    fn snapshot_round_trip() {
        let p = path(4);
        let m = RotorMechanism::derive(&p, &OrderingPolicy::ById).unwrap();
        let r = RotorConfiguration::from_residues(&m, vec![0, 1, 0, 0]);
        let json = r.to_json(&p);
        assert_eq!(json, r#"{"0":1,"1":2,"2":1,"3":1}"#);
        assert_eq!(RotorConfiguration::from_json(&p, &m, &json).unwrap(), r);
    }

    #[test]
    fn trajectory_dump() {
        let c = two_cycle();
        let m = RotorMechanism::derive(&c, &OrderingPolicy::ById).unwrap();
        let csv = trajectory_csv(&c, &m, WalkState::new(VertexId(0), RotorConfiguration::uniform(&m, 0)), 2);
        assert_eq!(csv, "t,x,rotor_at_x\n0,a,1\n1,b,1\n2,a,1\n");
    }
}
