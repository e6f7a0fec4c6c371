//! Stack walks.
//!
//! A stack mechanism gives every vertex an infinite sequence of successors
//! `u^(1), u^(2), …`; the particle leaving `u` for the `n`-th time goes to
//! `u^(n)`. Stacks are built from low-discrepancy sequences: for a probability
//! vector `p` with least common denominator `d`, a word `z_1 … z_d` with
//!
//! ```text
//! |p_i·t − #{s ≤ t : z_s = i}| ≤ 1      for every i and t,
//! ```
//!
//! repeated periodically. The word is read off a perfect matching between
//! positions `1..=d` and occurrence slots `(i, m)`, `1 ≤ m ≤ p_i·d`, where
//! position `t` may take slot `(i, m)` iff `⌈(m−1)/p_i⌉ ≤ t ≤ ⌈m/p_i⌉`.
//!
//! Irrational probabilities are handled by [`rational_approximation`] at a
//! caller-chosen denominator; everything downstream is exact.

use std::fmt::Write as _;

use num::{BigInt, BigRational, Integer, One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::bounds::{k6, BoundConstant, Checkpoint, CheckpointPolicy, DiscrepancyReport};
use crate::chain::{ChainError, MarkovChain, VertexId};
use crate::matching::{maximum_matching, Bipartite};
use crate::potential::{self, PotentialVector};
use crate::rational::common_denominator;
use crate::rotor::{MechanismError, RotorConfiguration, RotorMechanism, StopReason};

/// Largest period accepted by default.
pub const DEFAULT_PERIOD_CAP: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum StackError {
    #[error("not a probability vector: {0}")]
    NotNormalized(String),
    #[error("period {period} exceeds the cap of {cap}")]
    PeriodTooLarge { period: BigInt, cap: u64 },
    #[error("setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

/// A periodic word over the symbols `0..p.len()` with prefix discrepancy at most 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LowDiscrepancySequence {
    probabilities: Vec<BigRational>,
    /// `p_i·d`, the number of occurrences of `i` per period.
    counts: Vec<u64>,
    word: Vec<u32>,
    /// 1-based positions of each symbol within the period, increasing.
    positions: Vec<Vec<u64>>,
}

impl LowDiscrepancySequence {
    pub fn probabilities(&self) -> &[BigRational] {
        &self.probabilities
    }

    pub fn symbols(&self) -> usize {
        self.probabilities.len()
    }

    pub fn period(&self) -> u64 {
        self.word.len() as u64
    }

    /// One period, as 0-based symbols.
    pub fn word(&self) -> Vec<usize> {
        self.word.iter().map(|&z| z as usize).collect()
    }

    /// The 0-based symbol `z_j` at 1-based position `j`.
    pub fn symbol(&self, j: u64) -> usize {
        assert!(j >= 1, "positions are 1-based");
        self.word[((j - 1) % self.period()) as usize] as usize
    }

    /// `#{s ≤ n : z_s = i}`.
    pub fn count(&self, i: usize, n: u64) -> u64 {
        let d = self.period();
        let (q, r) = (n / d, n % d);
        q * self.counts[i] + self.positions[i].partition_point(|&p| p <= r) as u64
    }

    /// `#{s ≤ n : z_s = i} − n·p_i`.
    pub fn discrepancy(&self, i: usize, n: u64) -> BigRational {
        BigRational::from_integer(self.count(i, n).into()) - &self.probabilities[i] * BigRational::from_integer(n.into())
    }

    /// Check the prefix bound for every symbol and every `t ≤ periods·d`.
    pub fn prefix_bound_holds(&self, periods: u64) -> bool {
        let d = self.period() as i128;
        let mut seen = vec![0i128; self.symbols()];
        for t in 1..=(periods as i128 * d) {
            seen[self.word[((t - 1) % d) as usize] as usize] += 1;
            for (i, &c) in self.counts.iter().enumerate() {
                if (c as i128 * t - d * seen[i]).abs() > d {
                    return false;
                }
            }
        }
        true
    }

    /// The period as 1-based symbols separated by spaces.
    pub fn export(&self) -> String {
        let mut out = String::with_capacity(self.word.len() * 2);
        for (k, z) in self.word.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            write!(out, "{}", z + 1).unwrap();
        }
        out
    }
}

fn validate(p: &[BigRational]) -> Result<(), StackError> {
    if p.is_empty() {
        return Err(StackError::NotNormalized("empty vector".into()));
    }
    if let Some(x) = p.iter().find(|x| !x.is_positive() || **x > BigRational::one()) {
        return Err(StackError::NotNormalized(format!("entry {x} outside (0, 1]")));
    }
    let total: BigRational = p.iter().sum();
    if !total.is_one() {
        return Err(StackError::NotNormalized(format!("entries sum to {total}")));
    }
    Ok(())
}

/// Build the sequence for `p` with the default period cap.
pub fn low_discrepancy_sequence(p: &[BigRational]) -> Result<LowDiscrepancySequence, StackError> {
    low_discrepancy_sequence_with_cap(p, DEFAULT_PERIOD_CAP)
}

/// The Hall graph of `p` at period `d`, with slot `(i, m)` at index `offset[i] + m − 1`.
fn hall_graph(counts: &[u64], d: u64) -> Bipartite {
    let mut g = Bipartite::new(d as usize);
    let mut offsets = Vec::with_capacity(counts.len());
    let mut acc = 0usize;
    for &c in counts {
        offsets.push(acc);
        acc += c as usize;
    }
    let mut nbrs = Vec::new();
    for t in 1..=d {
        nbrs.clear();
        for (i, &c) in counts.iter().enumerate() {
            // p_i(t−1) < m ≤ p_i·t + 1, with p_i = c/d.
            let lo = (c as u128 * (t - 1) as u128 / d as u128) as u64 + 1;
            let hi = ((c as u128 * t as u128 / d as u128) as u64 + 1).min(c);
            for m in lo..=hi {
                nbrs.push(offsets[i] + m as usize - 1);
            }
        }
        g.push_left(nbrs.iter().copied());
    }
    g
}

/// Build the sequence for `p`, refusing periods above `cap`.
pub fn low_discrepancy_sequence_with_cap(p: &[BigRational], cap: u64) -> Result<LowDiscrepancySequence, StackError> {
    validate(p)?;
    let d_big = common_denominator(p);
    let d = match d_big.to_u64() {
        Some(d) if d <= cap => d,
        _ => return Err(StackError::PeriodTooLarge { period: d_big, cap }),
    };
    let counts: Vec<u64> = p
        .iter()
        .map(|x| (x.numer() * (&d_big / x.denom())).to_u64().unwrap())
        .collect();

    let g = hall_graph(&counts, d);
    let m = maximum_matching(&g);
    assert!(m.is_perfect(), "the occurrence graph of {p:?} has no perfect matching");

    let mut owner = Vec::with_capacity(d as usize);
    for (i, &c) in counts.iter().enumerate() {
        owner.extend(std::iter::repeat_n(i as u32, c as usize));
    }
    let word: Vec<u32> = m.left.iter().map(|r| owner[r.unwrap()]).collect();
    let mut positions = vec![Vec::new(); counts.len()];
    for (t, &z) in word.iter().enumerate() {
        positions[z as usize].push(t as u64 + 1);
    }
    let seq = LowDiscrepancySequence {
        probabilities: p.to_vec(),
        counts,
        word,
        positions,
    };
    assert!(seq.prefix_bound_holds(1), "matching produced a sequence violating the prefix bound");
    Ok(seq)
}

/// Round a real probability vector to multiples of `1/denominator` by
/// largest remainders, keeping every entry positive.
pub fn rational_approximation(p: &[f64], denominator: u64) -> Result<Vec<BigRational>, StackError> {
    if p.is_empty() || p.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(StackError::NotNormalized(format!("{p:?}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(StackError::NotNormalized(format!("entries sum to {total}")));
    }
    if denominator < p.len() as u64 {
        return Err(StackError::NotNormalized(format!(
            "denominator {denominator} is smaller than the number of entries"
        )));
    }
    let n = denominator as f64;
    let mut units: Vec<u64> = p.iter().map(|x| ((x * n).floor() as u64).max(1)).collect();
    let remainder = |units: &[u64], i: usize| p[i] * n - units[i] as f64;
    loop {
        let sum: u64 = units.iter().sum();
        if sum == denominator {
            break;
        }
        if sum < denominator {
            let i = (0..p.len())
                .max_by(|&a, &b| remainder(&units, a).total_cmp(&remainder(&units, b)).then(b.cmp(&a)))
                .unwrap();
            units[i] += 1;
        } else {
            let i = (0..p.len())
                .filter(|&i| units[i] > 1)
                .min_by(|&a, &b| remainder(&units, a).total_cmp(&remainder(&units, b)).then(a.cmp(&b)))
                .unwrap();
            units[i] -= 1;
        }
    }
    Ok(units
        .into_iter()
        .map(|u| BigRational::new(u.into(), denominator.into()))
        .collect())
}

/// Per-vertex stacks built from the chain's rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackMechanism {
    /// The successors `v_1, …, v_n` of each vertex, in increasing id order.
    successors: Vec<Vec<VertexId>>,
    sequences: Vec<LowDiscrepancySequence>,
}

impl StackMechanism {
    pub fn len(&self) -> usize {
        self.successors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.successors.is_empty()
    }

    pub fn successors(&self, u: VertexId) -> &[VertexId] {
        &self.successors[u.0]
    }

    pub fn sequence(&self, u: VertexId) -> &LowDiscrepancySequence {
        &self.sequences[u.0]
    }

    /// `u^(j)`, 1-based.
    pub fn stack(&self, u: VertexId, j: u64) -> VertexId {
        self.successors[u.0][self.sequences[u.0].symbol(j)]
    }

    /// The stack of `u` over one period.
    pub fn period_word(&self, u: VertexId) -> Vec<VertexId> {
        let seq = &self.sequences[u.0];
        (1..=seq.period()).map(|j| self.stack(u, j)).collect()
    }

    /// The rotor walk with the same trajectory: rotor lists are the period
    /// words and every rotor starts on its last entry.
    pub fn to_rotor(&self, chain: &MarkovChain) -> Result<(RotorMechanism, RotorConfiguration), StackError> {
        let lists = chain.vertices().map(|u| self.period_word(u)).collect();
        let mech = RotorMechanism::from_lists(chain, lists)?;
        let last = chain.vertices().map(|u| mech.degree(u) - 1).collect();
        let r0 = RotorConfiguration::from_residues(&mech, last);
        Ok((mech, r0))
    }
}

pub fn build_stack_mechanism(chain: &MarkovChain) -> Result<StackMechanism, StackError> {
    build_stack_mechanism_with_cap(chain, DEFAULT_PERIOD_CAP)
}

pub fn build_stack_mechanism_with_cap(chain: &MarkovChain, cap: u64) -> Result<StackMechanism, StackError> {
    let mut successors = Vec::with_capacity(chain.len());
    let mut sequences = Vec::with_capacity(chain.len());
    for u in chain.vertices() {
        let row = chain.row(u);
        let probs: Vec<BigRational> = row.iter().map(|(_, p)| p.clone()).collect();
        successors.push(row.iter().map(|(v, _)| *v).collect());
        sequences.push(low_discrepancy_sequence_with_cap(&probs, cap)?);
    }
    Ok(StackMechanism { successors, sequences })
}

/// `D_n(u, v) = #{i ≤ n : u^(i) = v} − n·p(u, v)`; zero when `v` is not a successor.
pub fn discrepancy_d(mech: &StackMechanism, u: VertexId, v: VertexId, n: u64) -> BigRational {
    match mech.successors(u).iter().position(|&w| w == v) {
        Some(i) => mech.sequence(u).discrepancy(i, n),
        None => BigRational::zero(),
    }
}

/// Position and departure counts `n_t(u)` of a stack walk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackWalkState {
    pub t: u64,
    pub x: VertexId,
    pub visits: Vec<u64>,
}

impl StackWalkState {
    pub fn new(x0: VertexId, n: usize) -> Self {
        StackWalkState {
            t: 0,
            x: x0,
            visits: vec![0; n],
        }
    }

    pub fn visits(&self, v: VertexId) -> u64 {
        self.visits[v.0]
    }

    pub fn step(&mut self, mech: &StackMechanism) {
        let x = self.x;
        self.visits[x.0] += 1;
        self.t += 1;
        self.x = mech.stack(x, self.visits[x.0]);
    }
}

/// Run from `x0` until `stop` holds (checked before each step) or `max_steps` steps were taken.
pub fn stack_run<F>(mech: &StackMechanism, x0: VertexId, mut stop: F, max_steps: u64) -> (StackWalkState, StopReason)
where
    F: FnMut(&StackWalkState) -> bool,
{
    let mut state = StackWalkState::new(x0, mech.len());
    for _ in 0..max_steps {
        if stop(&state) {
            return (state, StopReason::Hit);
        }
        state.step(mech);
    }
    let reason = if stop(&state) { StopReason::Hit } else { StopReason::Budget };
    (state, reason)
}

/// Running check of
///
/// ```text
/// Σ_{s<t} Δf(x_s) = f(x_t) − f(x_0) + Σ_{u,v} D_{n_t(u)}(u, v)·[f(u) − f(v) + Δf(u)]
/// ```
///
/// The right side's sum is rebuilt for the departing vertex after every step
/// from its successor counts, never from the left side.
#[derive(Debug, Clone)]
pub struct StackTracker {
    /// `S·f(u)`, with `S` clearing the denominators of `f`, `Δf` and the rows.
    value: Vec<BigInt>,
    /// `S·Δf(u)`.
    lap: Vec<BigInt>,
    /// `S_f·[f(u) − f(v_i) + Δf(u)]` per successor slot.
    weight: Vec<Vec<BigInt>>,
    /// `S_p·p(u, v_i)` per successor slot.
    prob: Vec<Vec<BigInt>>,
    /// Departures from `u` towards each successor slot.
    sent: Vec<Vec<u64>>,
    psi: Vec<BigInt>,
    psi_sum: BigInt,
    lhs: BigInt,
    start: BigInt,
    /// `S_p`.
    sp: BigInt,
    /// `S = S_f·S_p`.
    scale: BigInt,
}

impl StackTracker {
    pub fn new(chain: &MarkovChain, mech: &StackMechanism, f: &PotentialVector, x0: VertexId) -> Result<Self, StackError> {
        if f.len() < chain.len() {
            return Err(ChainError::MissingValue(chain.label(VertexId(f.len())).to_string()).into());
        }
        let lap_q: Vec<BigRational> = chain
            .vertices()
            .map(|u| potential::laplacian(chain, &f.values, u))
            .collect::<Result<_, _>>()?;
        let sf = common_denominator(f.values.iter().chain(&lap_q));
        let sp = common_denominator(chain.vertices().flat_map(|u| chain.row(u).iter().map(|(_, p)| p)));
        let scale = &sf * &sp;
        let clear = |r: &BigRational, s: &BigInt| r.numer() * (s / r.denom());
        let mut weight = Vec::with_capacity(chain.len());
        let mut prob = Vec::with_capacity(chain.len());
        for u in chain.vertices() {
            let succ = mech.successors(u);
            weight.push(
                succ.iter()
                    .map(|&v| clear(&(f.get(u) - f.get(v) + &lap_q[u.0]), &sf))
                    .collect::<Vec<_>>(),
            );
            prob.push(succ.iter().map(|&v| clear(&chain.prob(u, v), &sp)).collect::<Vec<_>>());
        }
        let value: Vec<BigInt> = f.values.iter().take(chain.len()).map(|r| clear(r, &scale)).collect();
        Ok(StackTracker {
            lap: lap_q.iter().map(|r| clear(r, &scale)).collect(),
            start: value[x0.0].clone(),
            value,
            sent: weight.iter().map(|w| vec![0; w.len()]).collect(),
            psi: vec![BigInt::zero(); chain.len()],
            psi_sum: BigInt::zero(),
            lhs: BigInt::zero(),
            weight,
            prob,
            sp,
            scale,
        })
    }

    /// Advance the walk by one step and update both sides.
    pub fn step(&mut self, state: &mut StackWalkState, mech: &StackMechanism) {
        let u = state.x;
        self.lhs += &self.lap[u.0];
        state.step(mech);
        let slot = mech
            .successors(u)
            .iter()
            .position(|&v| v == state.x)
            .expect("stack entries are successors");
        self.sent[u.0][slot] += 1;
        let n = BigInt::from(state.visits(u));
        // S·ψ(u, n) = Σ_i (S_p·D_n(u, v_i))·(S_f·w_i)
        let mut psi = BigInt::zero();
        for i in 0..self.sent[u.0].len() {
            let d = BigInt::from(self.sent[u.0][i]) * &self.sp - &n * &self.prob[u.0][i];
            psi += d * &self.weight[u.0][i];
        }
        self.psi_sum += &psi - &self.psi[u.0];
        self.psi[u.0] = psi;
    }

    /// Both sides of the identity, scaled by the common denominator.
    pub fn sides(&self, state: &StackWalkState) -> (BigInt, BigInt) {
        let rhs = &self.value[state.x.0] - &self.start + &self.psi_sum;
        (self.lhs.clone(), rhs)
    }

    pub fn holds(&self, state: &StackWalkState) -> bool {
        let (l, r) = self.sides(state);
        l == r
    }

    /// Both sides as rationals.
    pub fn identity(&self, state: &StackWalkState) -> (BigRational, BigRational) {
        let (l, r) = self.sides(state);
        (
            BigRational::new(l, self.scale.clone()),
            BigRational::new(r, self.scale.clone()),
        )
    }
}

/// Outcome of a stack-walk hitting-frequency check.
#[derive(Debug, Clone)]
pub struct StackReport {
    pub bound: DiscrepancyReport,
    pub identity_steps: u64,
    pub identity_failures: u64,
}

impl StackReport {
    pub fn passed(&self) -> bool {
        self.bound.passed() && self.identity_failures == 0
    }
}

/// Walk from `a` for `horizon` steps and check, after every step,
/// `|h(a)(n_t(b) + n_t(c)) − n_t(b)| ≤ K6` together with the stack identity for `f = h`.
pub fn verify_stack_theorem(
    chain: &MarkovChain,
    mech: &StackMechanism,
    a: VertexId,
    b: VertexId,
    c: VertexId,
    horizon: u64,
) -> Result<StackReport, StackError> {
    verify_stack_theorem_with(chain, mech, a, b, c, horizon, CheckpointPolicy::default())
}

pub fn verify_stack_theorem_with(
    chain: &MarkovChain,
    mech: &StackMechanism,
    a: VertexId,
    b: VertexId,
    c: VertexId,
    horizon: u64,
    policy: CheckpointPolicy,
) -> Result<StackReport, StackError> {
    if a == b || b == c || a == c {
        return Err(StackError::Setup("a, b, c must be distinct".into()));
    }
    if mech.len() != chain.len() {
        return Err(StackError::Setup("mechanism and chain differ in size".into()));
    }
    for s in [b, c] {
        if mech.successors(s) != [a] {
            return Err(StackError::Setup(format!("the stack of {} must be constant {}", chain.label(s), chain.label(a))));
        }
    }
    let h = potential::solve_hitting_prob(chain, b, c)?;
    let constant = k6(chain, &h, b, c);
    let ha = h.get(a);
    // |(P − Q)·n_b + P·n_c|·E ≤ Q·(E·K6), with h(a) = P/Q and K6 = K/E.
    let (p, q) = (ha.numer().clone(), ha.denom().clone());
    let bound = &q * constant.value.numer();
    let e = constant.value.denom().clone();
    let lhs_of = |nb: u64, nc: u64| ((&p - &q) * BigInt::from(nb) + &p * BigInt::from(nc)).abs();

    let mut tracker = StackTracker::new(chain, mech, &h, a)?;
    let mut state = StackWalkState::new(a, chain.len());
    let mut report = StackReport {
        bound: DiscrepancyReport::empty(&format!("stack {}", chain_label(chain, a, b, c)), constant.clone()),
        identity_steps: 0,
        identity_failures: 0,
    };
    let mut worst = BigInt::zero();
    let mut next_record = 0;
    for step in 0..=horizon {
        if step > 0 {
            tracker.step(&mut state, mech);
        }
        report.identity_steps += 1;
        if !tracker.holds(&state) {
            report.identity_failures += 1;
        }
        let lhs = lhs_of(state.visits(b), state.visits(c));
        let ok = &lhs * &e <= bound;
        if lhs > worst {
            worst = lhs.clone();
        }
        report.bound.steps_checked += 1;
        if !ok {
            report.bound.violations += 1;
        }
        if step == next_record || !ok || step == horizon {
            report.bound.checkpoints.push(Checkpoint {
                t: state.t,
                lhs: BigRational::new(lhs.clone(), q.clone()),
                rhs: constant.value.clone(),
                ok,
                worst_ratio: ratio_to(&worst, &q, &constant),
            });
            if step == next_record {
                next_record = policy.next_after(step);
            }
        }
    }
    report.bound.worst_ratio = ratio_to(&worst, &q, &constant);
    Ok(report)
}

fn chain_label(chain: &MarkovChain, a: VertexId, b: VertexId, c: VertexId) -> String {
    format!("a={} b={} c={}", chain.label(a), chain.label(b), chain.label(c))
}

fn ratio_to(worst: &BigInt, q: &BigInt, k: &BoundConstant) -> BigRational {
    if k.value.is_zero() {
        return BigRational::zero();
    }
    BigRational::new(worst.clone(), q.clone()) / &k.value
}

/// Number of occurrences in one period whose position `t`, as the `m`-th
/// occurrence of its symbol `i`, fails `⌈(m−1)/p_i⌉ ≤ t ≤ ⌈m/p_i⌉`.
pub fn occurrence_spacing_violations(seq: &LowDiscrepancySequence) -> usize {
    let d = BigInt::from(seq.period());
    let mut bad = 0;
    for (i, pos) in seq.positions.iter().enumerate() {
        let c = BigInt::from(seq.counts[i]);
        for (k, &t) in pos.iter().enumerate() {
            let m = BigInt::from(k as u64 + 1);
            let lo = ((&m - 1u32) * &d).div_ceil(&c);
            let hi = (&m * &d).div_ceil(&c);
            let t = BigInt::from(t);
            if t < lo || t > hi {
                bad += 1;
            }
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{check_linear_bound, prepare_bound, Setup, Theorem};
    use crate::chain::examples;
    use crate::gen::{random_chain, random_function, random_probability_vector, ChainShape};
    use crate::rational::{int, ratio};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Prefix bound recomputed with rationals, independent of the integer check.
    fn prefix_ok(seq: &LowDiscrepancySequence, p: &[BigRational], periods: u64) -> bool {
        let mut counts = vec![0i64; p.len()];
        for t in 1..=periods * seq.period() {
            counts[seq.symbol(t)] += 1;
            for (i, pi) in p.iter().enumerate() {
                if (pi * int(t as i64) - int(counts[i])).abs() > int(1) {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn halves_alternate() {
        let seq = low_discrepancy_sequence(&[ratio(1, 2), ratio(1, 2)]).unwrap();
        let w = seq.word();
        assert_eq!(w.len(), 2);
        assert_ne!(w[0], w[1]);
        assert_eq!(seq.export().split(' ').count(), 2);
    }

    #[test]
    fn single_symbol_is_constant() {
        let seq = low_discrepancy_sequence(&[ratio(1, 1)]).unwrap();
        assert_eq!(seq.word(), vec![0]);
        assert_eq!(seq.count(0, 17), 17);
    }

    #[test]
    fn sixths_word() {
        let p = [ratio(1, 2), ratio(1, 3), ratio(1, 6)];
        let seq = low_discrepancy_sequence(&p).unwrap();
        assert_eq!(seq.period(), 6);
        let w = seq.word();
        for (i, want) in [3, 2, 1].into_iter().enumerate() {
            assert_eq!(w.iter().filter(|&&z| z == i).count(), want);
        }
        assert!(prefix_ok(&seq, &p, 1));
        assert!(prefix_ok(&seq, &p, 3));
        assert_eq!(occurrence_spacing_violations(&seq), 0);
    }

    #[test]
    fn random_vectors_satisfy_prefix_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..150 {
            let p = random_probability_vector(&mut rng, 6, 60);
            let seq = low_discrepancy_sequence(&p).unwrap();
            assert!(prefix_ok(&seq, &p, 3), "{p:?}");
            assert_eq!(occurrence_spacing_violations(&seq), 0);
            for i in 0..p.len() {
                assert!(seq.discrepancy(i, seq.period()).is_zero());
            }
        }
    }

    #[test]
    fn large_period_is_built() {
        let p = [ratio(123_457, 1_000_000), ratio(876_543, 1_000_000)];
        let seq = low_discrepancy_sequence(&p).unwrap();
        assert_eq!(seq.period(), 1_000_000);
        assert!(seq.prefix_bound_holds(1));
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(matches!(
            low_discrepancy_sequence(&[ratio(1, 2), ratio(1, 3)]),
            Err(StackError::NotNormalized(_))
        ));
        assert!(matches!(
            low_discrepancy_sequence(&[ratio(0, 1), ratio(1, 1)]),
            Err(StackError::NotNormalized(_))
        ));
        assert!(matches!(
            low_discrepancy_sequence_with_cap(&[ratio(1, 7), ratio(6, 7)], 6),
            Err(StackError::PeriodTooLarge { .. })
        ));
    }

    #[test]
    fn golden_ratio_approximation() {
        let inv_phi = 2.0 / (1.0 + 5f64.sqrt());
        let p = rational_approximation(&[inv_phi, 1.0 - inv_phi], 10_000).unwrap();
        assert_eq!(p, vec![ratio(309, 500), ratio(191, 500)]);
        let q = rational_approximation(&[0.001, 0.999], 10).unwrap();
        assert_eq!(q, vec![ratio(1, 10), ratio(9, 10)]);
        assert!(rational_approximation(&[0.5, 0.4], 10).is_err());
    }

    #[test]
    fn discrepancy_function() {
        let chain = examples::path(4);
        let mech = build_stack_mechanism(&chain).unwrap();
        let (u, v) = (VertexId(1), VertexId(2));
        assert!(discrepancy_d(&mech, u, v, 0).is_zero());
        assert!(discrepancy_d(&mech, u, v, 2).is_zero());
        assert!(discrepancy_d(&mech, u, VertexId(3), 5).is_zero());
        assert_eq!(discrepancy_d(&mech, u, v, 1).abs(), ratio(1, 2));
    }

    #[test]
    fn discrepancy_bounded_exhaustively() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..30 {
            let chain = random_chain(&mut rng, ChainShape::default());
            let mech = build_stack_mechanism(&chain).unwrap();
            for u in chain.vertices() {
                let d = mech.sequence(u).period();
                for v in chain.vertices() {
                    for n in 0..=3 * d {
                        assert!(discrepancy_d(&mech, u, v, n).abs() <= int(1));
                    }
                    assert!(discrepancy_d(&mech, u, v, d).is_zero());
                }
            }
        }
    }

    #[test]
    fn deterministic_rows_give_constant_stacks() {
        let chain = examples::two_cycle();
        let mech = build_stack_mechanism(&chain).unwrap();
        let (state, reason) = stack_run(&mech, VertexId(0), |_| false, 5);
        assert_eq!(reason, StopReason::Budget);
        assert_eq!(state.x, VertexId(1));
        assert_eq!(state.visits, vec![3, 2]);
        let (start, _) = stack_run(&mech, VertexId(0), |_| false, 0);
        assert_eq!(start, StackWalkState::new(VertexId(0), 2));
    }

    fn same_trajectory(chain: &MarkovChain, steps: u64) {
        let mech = build_stack_mechanism(chain).unwrap();
        let (rotor, r0) = mech.to_rotor(chain).unwrap();
        for x0 in chain.vertices() {
            let mut s = StackWalkState::new(x0, chain.len());
            let mut r = crate::rotor::WalkState::new(x0, r0.clone());
            for _ in 0..steps {
                s.step(&mech);
                r.step(&rotor);
                assert_eq!(s.x, r.x);
            }
            assert_eq!(s.visits, r.visits);
        }
    }

    #[test]
    fn rotor_subsumption() {
        same_trajectory(&examples::two_cycle(), 1000);
        same_trajectory(&examples::path(5), 1000);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            same_trajectory(&random_chain(&mut rng, ChainShape::default()), 2000);
        }
    }

    #[test]
    fn identity_holds_for_random_functions() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..20 {
            let chain = random_chain(&mut rng, ChainShape::default());
            let mech = build_stack_mechanism(&chain).unwrap();
            let f = PotentialVector::arbitrary(random_function(&mut rng, chain.len()));
            let x0 = VertexId(rng.gen_range(0..chain.len()));
            let mut tracker = StackTracker::new(&chain, &mech, &f, x0).unwrap();
            let mut state = StackWalkState::new(x0, chain.len());
            let mut direct = BigRational::zero();
            for _ in 0..500 {
                direct += potential::laplacian(&chain, &f.values, state.x).unwrap();
                tracker.step(&mut state, &mech);
                assert!(tracker.holds(&state));
                assert_eq!(tracker.identity(&state).0, direct);
            }
            // Rebuild the right side from D directly.
            let mut rhs = f.get(state.x) - f.get(x0);
            for u in chain.vertices() {
                let lap = potential::laplacian(&chain, &f.values, u).unwrap();
                for v in chain.vertices() {
                    let d = discrepancy_d(&mech, u, v, state.visits(u));
                    rhs += d * (f.get(u) - f.get(v) + &lap);
                }
            }
            assert_eq!(rhs, direct);
        }
    }

    #[test]
    fn path_matches_rotor_report() {
        let path = examples::path(4);
        let (a, b, c) = (VertexId(1), VertexId(3), VertexId(0));
        let chain = path.redirect_to(&[b, c], a).unwrap();
        let mech = build_stack_mechanism(&chain).unwrap();
        let report = verify_stack_theorem(&chain, &mech, a, b, c, 10_000).unwrap();
        assert!(report.passed());
        assert_eq!(report.bound.steps_checked, 10_001);

        let (rotor, r0) = mech.to_rotor(&chain).unwrap();
        let setup = Setup { a, b, c: Some(c) };
        let prepared = prepare_bound(Theorem::HittingProbability, &chain, &rotor, &setup).unwrap();
        let rotor_report = check_linear_bound(
            "rotor",
            &rotor,
            a,
            &r0,
            b,
            Some(c),
            &prepared.form,
            &prepared.constant,
            10_000,
            CheckpointPolicy::default(),
        );
        assert_eq!(rotor_report.violations, 0);
        let lhs = |r: &DiscrepancyReport| r.checkpoints.iter().map(|c| c.lhs.clone()).collect::<Vec<_>>();
        assert_eq!(lhs(&report.bound), lhs(&rotor_report));
    }

    #[test]
    fn sixths_row_chain() {
        // a -> {x: 1/2, b: 1/3, c: 1/6}, x -> {a: 1/2, b: 1/2}, b, c -> a.
        let mut builder = crate::chain::ChainBuilder::new();
        for l in ["a", "x", "b", "c"] {
            builder.vertex(l).unwrap();
        }
        for (u, v, p) in [
            ("a", "x", ratio(1, 2)),
            ("a", "b", ratio(1, 3)),
            ("a", "c", ratio(1, 6)),
            ("x", "a", ratio(1, 2)),
            ("x", "b", ratio(1, 2)),
            ("b", "a", ratio(1, 1)),
            ("c", "a", ratio(1, 1)),
        ] {
            builder.edge(u, v, p).unwrap();
        }
        let chain = builder.build().unwrap();
        let id = |l: &str| chain.id(l).unwrap();
        let mech = build_stack_mechanism(&chain).unwrap();
        assert_eq!(mech.sequence(id("a")).period(), 6);
        let report = verify_stack_theorem(&chain, &mech, id("a"), id("b"), id("c"), 10_000).unwrap();
        assert!(report.passed());
        // h(a) = 1/3 + 1/2·h(x), h(x) = 1/2 + 1/2·h(a)  =>  h(a) = 7/9.
        let h = potential::solve_hitting_prob(&chain, id("b"), id("c")).unwrap();
        assert_eq!(h.get(id("a")), &ratio(7, 9));
    }

    #[test]
    fn golden_ratio_chain() {
        let inv_phi = 2.0 / (1.0 + 5f64.sqrt());
        let p = rational_approximation(&[inv_phi, 1.0 - inv_phi], 10_000).unwrap();
        let mut builder = crate::chain::ChainBuilder::new();
        for l in ["a", "x", "b", "c"] {
            builder.vertex(l).unwrap();
        }
        builder.edge("a", "x", p[0].clone()).unwrap();
        builder.edge("a", "b", p[1].clone()).unwrap();
        builder.edge("x", "c", ratio(1, 2)).unwrap();
        builder.edge("x", "a", ratio(1, 2)).unwrap();
        builder.edge("b", "a", ratio(1, 1)).unwrap();
        builder.edge("c", "a", ratio(1, 1)).unwrap();
        let chain = builder.build().unwrap();
        let id = |l: &str| chain.id(l).unwrap();
        let mech = build_stack_mechanism(&chain).unwrap();
        let report = verify_stack_theorem(&chain, &mech, id("a"), id("b"), id("c"), 10_000).unwrap();
        assert!(report.passed());
    }

    #[test]
    fn setup_errors() {
        let chain = examples::path(4);
        let mech = build_stack_mechanism(&chain).unwrap();
        let err = verify_stack_theorem(&chain, &mech, VertexId(1), VertexId(3), VertexId(0), 10);
        assert!(matches!(err, Err(StackError::Setup(_))));
        let err = verify_stack_theorem(&chain, &mech, VertexId(1), VertexId(1), VertexId(0), 10);
        assert!(matches!(err, Err(StackError::Setup(_))));
    }
}
