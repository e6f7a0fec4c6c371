//! Exact bookkeeping for the rotor-walk potential identity
//!
//! ```text
//! Σ_{s<t} Δf(x_s) = f(x_t) − f(x_0) + Σ_u [φ(u, r_t(u)) − φ(u, r_0(u))]
//! ```
//!
//! with `φ(u, k) = Σ_{i=1}^{k} [f(u) − f(u^(i)) + Δf(u)]` for the 0-based
//! residue `k` (so `φ(u, 0) = 0`). The left side is a running sum over the
//! trajectory; the right side is recomputed from the current rotor
//! configuration alone. Both are kept as integers over the common scale
//! `T = S·M`, where `S` clears the denominators of `f` and `M` is the lcm of
//! the rotor periods.

use std::ops::{AddAssign, Sub};

use num::{BigInt, BigRational, Integer, One, ToPrimitive, Zero};

use crate::chain::{ChainError, MarkovChain, VertexId};
use crate::potential::PotentialVector;
use crate::rational::common_denominator;
use crate::rotor::{RotorConfiguration, RotorMechanism, WalkState};

/// Arithmetic needed by the integer tables.
pub trait Exact: Clone + PartialEq + Zero + for<'a> AddAssign<&'a Self> + for<'a> Sub<&'a Self, Output = Self> {
    fn from_big(n: &BigInt) -> Self;
    fn to_big(&self) -> BigInt;
}

impl Exact for i128 {
    fn from_big(n: &BigInt) -> Self {
        n.to_i128().expect("value checked to fit")
    }
    fn to_big(&self) -> BigInt {
        BigInt::from(*self)
    }
}

impl Exact for BigInt {
    fn from_big(n: &BigInt) -> Self {
        n.clone()
    }
    fn to_big(&self) -> BigInt {
        self.clone()
    }
}

#[derive(Debug, Clone)]
struct Tables<T> {
    /// `T·Δf(u)`.
    lap: Vec<T>,
    /// `M·F(u)`, i.e. `T·f(u)`.
    value: Vec<T>,
    /// `T·φ(u, k)` for `k < d(u)`.
    phi: Vec<Vec<T>>,
    lap_sum: T,
    base: T,
}

impl<T: Exact> Tables<T> {
    fn build(big: &BigTables, x0: VertexId, r0: &RotorConfiguration) -> Self {
        let conv = |v: &Vec<BigInt>| v.iter().map(T::from_big).collect::<Vec<T>>();
        let phi: Vec<Vec<T>> = big.phi.iter().map(conv).collect();
        let value = conv(&big.value);
        // base = T·f(x_0) + Σ_u T·φ(u, r_0(u))
        let mut base = value[x0.0].clone();
        for (u, row) in phi.iter().enumerate() {
            base += &row[r0.residues[u]];
        }
        Tables {
            lap: conv(&big.lap),
            value,
            phi,
            lap_sum: T::zero(),
            base,
        }
    }

    fn rhs(&self, x: VertexId, rotors: &RotorConfiguration) -> T {
        let mut acc = self.value[x.0].clone();
        for (u, row) in self.phi.iter().enumerate() {
            acc += &row[rotors.residues[u]];
        }
        acc - &self.base
    }
}

struct BigTables {
    lap: Vec<BigInt>,
    value: Vec<BigInt>,
    phi: Vec<Vec<BigInt>>,
    scale: BigInt,
}

fn big_tables(chain: &MarkovChain, mech: &RotorMechanism, f: &PotentialVector) -> Result<BigTables, ChainError> {
    if f.len() < chain.len() {
        return Err(ChainError::MissingValue(chain.label(VertexId(f.len())).to_string()));
    }
    let s = common_denominator(&f.values);
    let m = chain
        .vertices()
        .fold(BigInt::one(), |acc, u| acc.lcm(&BigInt::from(mech.degree(u))));
    let big_f: Vec<BigInt> = f.values.iter().map(|r| r.numer() * (&s / r.denom())).collect();
    let value: Vec<BigInt> = big_f.iter().map(|x| x * &m).collect();
    let mut lap = Vec::with_capacity(chain.len());
    let mut phi = Vec::with_capacity(chain.len());
    for u in chain.vertices() {
        let d = mech.degree(u);
        let succ = mech.successors(u);
        let total: BigInt = succ.iter().map(|v| &big_f[v.0]).sum();
        let l = &m / BigInt::from(d) * total - &value[u.0];
        let mut row = Vec::with_capacity(d);
        let mut acc = BigInt::zero();
        row.push(acc.clone());
        for v in succ.iter().skip(1) {
            acc += &value[u.0] - &value[v.0] + &l;
            row.push(acc.clone());
        }
        lap.push(l);
        phi.push(row);
    }
    Ok(BigTables {
        lap,
        value,
        phi,
        scale: s * m,
    })
}

#[derive(Debug, Clone)]
enum Engine {
    Small(Tables<i128>),
    Big(Tables<BigInt>),
}

/// Running check of the potential identity along a rotor walk.
#[derive(Debug, Clone)]
pub struct PotentialTracker {
    scale: BigInt,
    engine: Engine,
}

/// Table entries below this magnitude use the `i128` fast path, leaving
/// room for more than 2^40 steps of running sums.
const SMALL_LIMIT_BITS: u64 = 80;

impl PotentialTracker {
    /// Start tracking `f` for a walk starting at `(x0, r0)`.
    pub fn new(
        chain: &MarkovChain,
        mech: &RotorMechanism,
        f: &PotentialVector,
        x0: VertexId,
        r0: &RotorConfiguration,
    ) -> Result<Self, ChainError> {
        let big = big_tables(chain, mech, f)?;
        let widest = big
            .lap
            .iter()
            .chain(&big.value)
            .chain(big.phi.iter().flatten())
            .map(|v| v.bits())
            .max()
            .unwrap_or(0);
        let row_count = chain.len() as u64;
        let small = widest + 64 - row_count.leading_zeros() as u64 <= SMALL_LIMIT_BITS;
        let engine = if small {
            Engine::Small(Tables::build(&big, x0, r0))
        } else {
            Engine::Big(Tables::build(&big, x0, r0))
        };
        Ok(PotentialTracker {
            scale: big.scale,
            engine,
        })
    }

    /// Record that the walk left `x` (call once per step, before or after `step`).
    pub fn advance(&mut self, x: VertexId) {
        match &mut self.engine {
            Engine::Small(t) => {
                let l = t.lap[x.0];
                t.lap_sum = t.lap_sum.checked_add(l).expect("identity sum overflow");
            }
            Engine::Big(t) => {
                let l = t.lap[x.0].clone();
                t.lap_sum += &l;
            }
        }
    }

    /// Step the walk and record the step.
    pub fn step(&mut self, state: &mut WalkState, mech: &RotorMechanism) {
        self.advance(state.x);
        state.step(mech);
    }

    /// Whether both sides agree for the current state.
    pub fn holds(&self, state: &WalkState) -> bool {
        match &self.engine {
            Engine::Small(t) => t.lap_sum == t.rhs(state.x, &state.rotors),
            Engine::Big(t) => t.lap_sum == t.rhs(state.x, &state.rotors),
        }
    }

    /// Both sides of the identity as exact rationals: `(Σ Δf(x_s), f(x_t) − f(x_0) + ΔΦ)`.
    pub fn check_key_identity(&self, state: &WalkState) -> (BigRational, BigRational) {
        let (lhs, rhs) = match &self.engine {
            Engine::Small(t) => (t.lap_sum.to_big(), t.rhs(state.x, &state.rotors).to_big()),
            Engine::Big(t) => (t.lap_sum.clone(), t.rhs(state.x, &state.rotors)),
        };
        (
            BigRational::new(lhs, self.scale.clone()),
            BigRational::new(rhs, self.scale.clone()),
        )
    }

    /// `Σ_{s<t} Δf(x_s)` so far.
    pub fn laplacian_sum(&self) -> BigRational {
        let raw = match &self.engine {
            Engine::Small(t) => t.lap_sum.to_big(),
            Engine::Big(t) => t.lap_sum.clone(),
        };
        BigRational::new(raw, self.scale.clone())
    }

    pub fn uses_fast_path(&self) -> bool {
        matches!(self.engine, Engine::Small(_))
    }
}

/// `φ(u, k)` evaluated directly from the definition, for cross-checks.
pub fn phi(chain: &MarkovChain, mech: &RotorMechanism, f: &[BigRational], u: VertexId, k: usize) -> BigRational {
    let lap = crate::potential::laplacian(chain, f, u).expect("f covers the chain");
    (1..=k)
        .map(|i| &f[u.0] - &f[mech.successor(u, i).0] + &lap)
        .sum()
}
