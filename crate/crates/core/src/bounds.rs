//! Discrepancy constants and step-by-step verification of the rotor-walk bounds.
//!
//! Every bound is checked in multiplied-out form, `|L(n_t(b), n_t(c), t)| ≤ K`,
//! where `L` is linear with rational coefficients:
//!
//! | bound           | `L`                                   | `K`  |
//! |-----------------|---------------------------------------|------|
//! | hitting prob.   | `h(a)(n_t(b)+n_t(c)) − n_t(b)`        | `K1` |
//! | hitting time    | `(k(a)+1) n_t(b) − t`                 | `K2` |
//! | occupation      | `n_t(b) e_{b,c} − n_t(c) e_{c,b}`     | `K3` |
//! | stationary      | `n_t(b)/π(b) − t`                     | `K4` |
//!
//! The coefficients are cleared to integers once, so the inner loop is
//! integer arithmetic (`i128` when it fits, `BigInt` otherwise).

use std::fmt::{self, Write as _};

use num::{BigInt, BigRational, Integer, One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::chain::{ChainError, MarkovChain, VertexId};
use crate::identity::Exact;
use crate::potential::{self, PotentialVector};
use crate::rational::{common_denominator, format_ratio, int, ratio};
use crate::rotor::{RotorConfiguration, RotorMechanism, WalkState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstantKind {
    K1,
    K2,
    K3,
    K4,
    K5,
    K6,
}

impl fmt::Display for ConstantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = match self {
            ConstantKind::K1 => 1,
            ConstantKind::K2 => 2,
            ConstantKind::K3 => 3,
            ConstantKind::K4 => 4,
            ConstantKind::K5 => 5,
            ConstantKind::K6 => 6,
        };
        write!(f, "K{n}")
    }
}

/// One summand of a constant. `v == None` marks a per-vertex extra such as `½d(b)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub u: VertexId,
    pub v: Option<VertexId>,
    pub value: BigRational,
}

/// A discrepancy constant with its itemised summands.
///
/// `value = lead + Σ terms + tail`; `tail` collects summands that are not
/// itemised (the far part of an infinite chain) and is zero on finite chains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundConstant {
    pub kind: ConstantKind,
    pub lead: BigRational,
    pub terms: Vec<Term>,
    pub tail: BigRational,
    pub value: BigRational,
}

impl BoundConstant {
    pub fn new(kind: ConstantKind, lead: BigRational, terms: Vec<Term>, tail: BigRational) -> Self {
        let value = terms.iter().map(|t| &t.value).sum::<BigRational>() + &lead + &tail;
        BoundConstant {
            kind,
            lead,
            terms,
            tail,
            value,
        }
    }

    /// Total of the terms attached to each vertex, indexed by vertex id.
    pub fn per_vertex(&self, n: usize) -> Vec<BigRational> {
        let mut out = vec![BigRational::zero(); n];
        for t in &self.terms {
            out[t.u.0] += &t.value;
        }
        out
    }

    /// The constant with the lead term kept only if `away` and each vertex's
    /// terms kept only if `moved[u]`.
    pub fn restricted(&self, away: bool, moved: &[bool]) -> BigRational {
        let mut k = self.tail.clone();
        if away {
            k += &self.lead;
        }
        for t in &self.terms {
            if moved[t.u.0] {
                k += &t.value;
            }
        }
        k
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("setup does not match the theorem: {0}")]
    Setup(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("constant {0} is infinite for this chain")]
    InfiniteConstant(ConstantKind),
}

/// Number of times `v` occurs in the successor list of `u`, i.e. `d(u)p(u,v)`.
fn multiplicities(mech: &RotorMechanism, u: VertexId) -> Vec<(VertexId, u64)> {
    let mut out: Vec<(VertexId, u64)> = Vec::new();
    for &v in mech.successors(u) {
        match out.iter_mut().find(|(w, _)| *w == v) {
            Some((_, c)) => *c += 1,
            None => out.push((v, 1)),
        }
    }
    out.sort();
    out
}

fn half() -> BigRational {
    ratio(1, 2)
}

/// `½ Σ_{u ∈ us, v} d(u)p(u,v)|f(u) − f(v) − shift|`, itemised.
fn gradient_terms(
    mech: &RotorMechanism,
    f: &[BigRational],
    shift: &BigRational,
    us: impl Iterator<Item = VertexId>,
) -> Vec<Term> {
    let mut terms = Vec::new();
    for u in us {
        for (v, count) in multiplicities(mech, u) {
            let diff = (&f[u.0] - &f[v.0] - shift).abs();
            if !diff.is_zero() {
                terms.push(Term {
                    u,
                    v: Some(v),
                    value: half() * int(count as i64) * diff,
                });
            }
        }
    }
    terms
}

/// `K1 = 1 + ½ Σ_{u∉{b,c}, v} d(u)p(u,v)|h(u) − h(v)|`.
pub fn k1(chain: &MarkovChain, mech: &RotorMechanism, h: &PotentialVector, b: VertexId, c: VertexId) -> BoundConstant {
    let us = chain.vertices().filter(|&u| u != b && u != c);
    let terms = gradient_terms(mech, &h.values, &BigRational::zero(), us);
    BoundConstant::new(ConstantKind::K1, BigRational::one(), terms, BigRational::zero())
}

/// `K2 = max k + ½ Σ_{u≠b, v} d(u)p(u,v)|k(u) − k(v) − 1|`.
pub fn k2(chain: &MarkovChain, mech: &RotorMechanism, k: &PotentialVector, b: VertexId) -> BoundConstant {
    let us = chain.vertices().filter(|&u| u != b);
    let terms = gradient_terms(mech, &k.values, &BigRational::one(), us);
    BoundConstant::new(ConstantKind::K2, k.max(), terms, BigRational::zero())
}

/// `K3 = 1 + ½(d(b) + d(c) + Σ_{u,v} d(u)p(u,v)|h(u) − h(v)|)`.
pub fn k3(chain: &MarkovChain, mech: &RotorMechanism, h: &PotentialVector, b: VertexId, c: VertexId) -> BoundConstant {
    let mut terms = gradient_terms(mech, &h.values, &BigRational::zero(), chain.vertices());
    for u in [b, c] {
        terms.push(Term {
            u,
            v: None,
            value: half() * int(mech.degree(u) as i64),
        });
    }
    BoundConstant::new(ConstantKind::K3, BigRational::one(), terms, BigRational::zero())
}

/// `K4 = max k + ½(d(b)/π(b) + Σ_{u,v} d(u)p(u,v)|k(u) − k(v) − 1|)`.
pub fn k4(
    chain: &MarkovChain,
    mech: &RotorMechanism,
    k: &PotentialVector,
    pi: &PotentialVector,
    b: VertexId,
) -> BoundConstant {
    let mut terms = gradient_terms(mech, &k.values, &BigRational::one(), chain.vertices());
    terms.push(Term {
        u: b,
        v: None,
        value: half() * int(mech.degree(b) as i64) / pi.get(b),
    });
    BoundConstant::new(ConstantKind::K4, k.max(), terms, BigRational::zero())
}

/// `K5 = sup g + ½(d(b) + Σ_{u,v} d(u)p(u,v)|g(u) − g(v)|)` on a finite chain.
pub fn k5(chain: &MarkovChain, mech: &RotorMechanism, g: &PotentialVector, b: VertexId) -> BoundConstant {
    let mut terms = gradient_terms(mech, &g.values, &BigRational::zero(), chain.vertices());
    terms.push(Term {
        u: b,
        v: None,
        value: half() * int(mech.degree(b) as i64),
    });
    BoundConstant::new(ConstantKind::K5, g.max(), terms, BigRational::zero())
}

/// `K6 = 1 + Σ_{u∉{b,c}, p(u,v)>0} |h(u) − h(v)|`.
pub fn k6(chain: &MarkovChain, h: &PotentialVector, b: VertexId, c: VertexId) -> BoundConstant {
    let mut terms = Vec::new();
    for u in chain.vertices().filter(|&u| u != b && u != c) {
        for (v, _) in chain.row(u) {
            let diff = (h.get(u) - h.get(*v)).abs();
            if !diff.is_zero() {
                terms.push(Term {
                    u,
                    v: Some(*v),
                    value: diff,
                });
            }
        }
    }
    BoundConstant::new(ConstantKind::K6, BigRational::one(), terms, BigRational::zero())
}

/// The potentials a constant is built from.
#[derive(Debug, Clone, Copy)]
pub struct Ingredients<'a> {
    pub h: Option<&'a PotentialVector>,
    pub k: Option<&'a PotentialVector>,
    pub pi: Option<&'a PotentialVector>,
    pub g: Option<&'a PotentialVector>,
    pub b: VertexId,
    pub c: Option<VertexId>,
}

/// Dispatch to the constant of the given kind.
pub fn compute_constant(
    kind: ConstantKind,
    chain: &MarkovChain,
    mech: &RotorMechanism,
    ing: Ingredients<'_>,
) -> Result<BoundConstant, BoundsError> {
    fn need<'p>(p: Option<&'p PotentialVector>, kind: ConstantKind, what: &str) -> Result<&'p PotentialVector, BoundsError> {
        p.ok_or_else(|| BoundsError::Setup(format!("{kind} needs {what}")))
    }
    let c = || ing.c.ok_or_else(|| BoundsError::Setup(format!("{kind} needs a vertex c")));
    Ok(match kind {
        ConstantKind::K1 => k1(chain, mech, need(ing.h, kind, "h")?, ing.b, c()?),
        ConstantKind::K2 => k2(chain, mech, need(ing.k, kind, "k")?, ing.b),
        ConstantKind::K3 => k3(chain, mech, need(ing.h, kind, "h")?, ing.b, c()?),
        ConstantKind::K4 => k4(chain, mech, need(ing.k, kind, "k")?, need(ing.pi, kind, "pi")?, ing.b),
        ConstantKind::K5 => k5(chain, mech, need(ing.g, kind, "g")?, ing.b),
        ConstantKind::K6 => k6(chain, need(ing.h, kind, "h")?, ing.b, c()?),
    })
}

/// The refinement of `constant` at the walk's current state: the lead term
/// counts only if `x_t ≠ x_0`, and each vertex's terms only if its rotor
/// differs from its initial position.
pub fn time_dependent_constant(constant: &BoundConstant, state: &WalkState, x0: VertexId, r0: &RotorConfiguration) -> BigRational {
    let moved: Vec<bool> = state
        .rotors
        .residues
        .iter()
        .zip(&r0.residues)
        .map(|(a, b)| a != b)
        .collect();
    constant.restricted(state.x != x0, &moved)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Theorem {
    /// Hitting probabilities, constant `K1`.
    HittingProbability,
    /// Hitting times, constant `K2`.
    HittingTime,
    /// Occupation frequencies, constant `K3`.
    Occupation,
    /// Stationary distribution, constant `K4`.
    Stationary,
}

impl Theorem {
    pub fn from_id(id: u32) -> Option<Theorem> {
        match id {
            1 => Some(Theorem::HittingProbability),
            2 => Some(Theorem::HittingTime),
            3 => Some(Theorem::Occupation),
            4 => Some(Theorem::Stationary),
            _ => None,
        }
    }

    pub fn id(self) -> u32 {
        match self {
            Theorem::HittingProbability => 1,
            Theorem::HittingTime => 2,
            Theorem::Occupation => 3,
            Theorem::Stationary => 4,
        }
    }

    pub fn constant_kind(self) -> ConstantKind {
        match self {
            Theorem::HittingProbability => ConstantKind::K1,
            Theorem::HittingTime => ConstantKind::K2,
            Theorem::Occupation => ConstantKind::K3,
            Theorem::Stationary => ConstantKind::K4,
        }
    }

    /// Apply the chain surgery this bound expects.
    pub fn prepare(self, chain: &MarkovChain, setup: &Setup) -> Result<MarkovChain, BoundsError> {
        match self {
            Theorem::HittingProbability => {
                let c = setup.require_c()?;
                Ok(chain.redirect_to(&[setup.b, c], setup.a)?)
            }
            Theorem::HittingTime => Ok(chain.redirect_to(&[setup.b], setup.a)?),
            Theorem::Occupation | Theorem::Stationary => Ok(chain.clone()),
        }
    }
}

/// The distinguished vertices of a bound: start `a`, target `b`, and `c` where needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Setup {
    pub a: VertexId,
    pub b: VertexId,
    pub c: Option<VertexId>,
}

impl Setup {
    fn require_c(&self) -> Result<VertexId, BoundsError> {
        self.c.ok_or_else(|| BoundsError::Setup("a second target c is required".into()))
    }
}

fn forced_to(chain: &MarkovChain, u: VertexId, a: VertexId) -> bool {
    chain.row(u) == [(a, BigRational::one())]
}

fn check_setup(theorem: Theorem, chain: &MarkovChain, mech: &RotorMechanism, setup: &Setup) -> Result<(), BoundsError> {
    let Setup { a, b, c } = *setup;
    let err = |msg: &str| Err(BoundsError::Setup(msg.to_string()));
    if mech.len() != chain.len() {
        return err("mechanism and chain differ in size");
    }
    match theorem {
        Theorem::HittingProbability => {
            let c = setup.require_c()?;
            if b == c || a == b || a == c {
                return err("a, b, c must be distinct");
            }
            if !forced_to(chain, b, a) || !forced_to(chain, c, a) {
                return err("rows of b and c must be redirected to a");
            }
        }
        Theorem::HittingTime => {
            if a == b {
                return err("a and b must differ");
            }
            if !forced_to(chain, b, a) {
                return err("row of b must be redirected to a");
            }
        }
        Theorem::Occupation | Theorem::Stationary => {
            if theorem == Theorem::Occupation && c.is_none_or(|c| c == b) {
                return err("b and c must be distinct");
            }
            if !chain.is_irreducible() {
                return err("chain must be irreducible");
            }
        }
    }
    Ok(())
}

/// When to record a checkpoint row (every step is checked regardless).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointPolicy {
    /// Record every step up to this time.
    pub dense_until: u64,
    /// Beyond it, record roughly every `1/growth` relative increase of `t`.
    pub growth_inverse: u64,
}

impl Default for CheckpointPolicy {
    fn default() -> Self {
        CheckpointPolicy {
            dense_until: 10_000,
            growth_inverse: 8,
        }
    }
}

impl CheckpointPolicy {
    /// Record only the final state and any violations.
    pub fn summary() -> Self {
        CheckpointPolicy {
            dense_until: 0,
            growth_inverse: 0,
        }
    }

    pub fn next_after(&self, t: u64) -> u64 {
        if t < self.dense_until {
            t + 1
        } else if self.growth_inverse == 0 {
            u64::MAX
        } else {
            t + (t / self.growth_inverse).max(1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Checkpoint {
    pub t: u64,
    pub lhs: BigRational,
    pub rhs: BigRational,
    pub ok: bool,
    /// Largest `lhs / rhs` seen up to and including this step.
    pub worst_ratio: BigRational,
}

/// Outcome of checking one bound along one walk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscrepancyReport {
    pub label: String,
    pub constant: BoundConstant,
    pub checkpoints: Vec<Checkpoint>,
    pub steps_checked: u64,
    pub violations: u64,
    /// Violations of the time-dependent refinement `K(t)`.
    pub refined_violations: u64,
    pub worst_ratio: BigRational,
}

impl DiscrepancyReport {
    pub fn empty(label: &str, constant: BoundConstant) -> Self {
        DiscrepancyReport {
            label: label.to_string(),
            constant,
            checkpoints: Vec::new(),
            steps_checked: 0,
            violations: 0,
            refined_violations: 0,
            worst_ratio: BigRational::zero(),
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0 && self.refined_violations == 0
    }

    pub fn first_violation(&self) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| !c.ok)
    }

    /// `t,lhs_num,lhs_den,rhs_num,rhs_den,ok,worst_ratio`, rationals in lowest terms.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for c in &self.checkpoints {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.t,
                c.lhs.numer(),
                c.lhs.denom(),
                c.rhs.numer(),
                c.rhs.denom(),
                c.ok,
                format_ratio(&c.worst_ratio)
            )
            .unwrap();
        }
        out
    }
}

pub const CSV_HEADER: &str = "t,lhs_num,lhs_den,rhs_num,rhs_den,ok,worst_ratio";

/// `L = (cb·n_b + cc·n_c + ct·t)`, the quantity whose absolute value is bounded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearForm {
    pub cb: BigRational,
    pub cc: BigRational,
    pub ct: BigRational,
}

impl LinearForm {
    pub fn eval(&self, nb: u64, nc: u64, t: u64) -> BigRational {
        (&self.cb * int(nb as i64) + &self.cc * int(nc as i64) + &self.ct * int(t as i64)).abs()
    }
}

/// Integer form of a bound check: `|A n_b + B n_c + C t| · E ≤ D · (lead·[away] + Σ_moved w_u)`.
struct Scaled<T> {
    a: T,
    b: T,
    c: T,
    /// `D`: denominator cleared from the linear form.
    d: BigInt,
    /// `E`: denominator cleared from the constant.
    e: T,
    lead: T,
    weights: Vec<T>,
    tail: T,
    full: T,
}

impl<T: Exact + Signed + Ord + From<u64>> Scaled<T> {
    fn new(form: &LinearForm, constant: &BoundConstant, n: usize) -> Self {
        let d = common_denominator([&form.cb, &form.cc, &form.ct]);
        let clear = |r: &BigRational, s: &BigInt| T::from_big(&(r.numer() * (s / r.denom())));
        let per_vertex = constant.per_vertex(n);
        let e = common_denominator(per_vertex.iter().chain([&constant.lead, &constant.tail]));
        // Fold D into the right-hand side: compare |L·D|·E against D·E·K.
        let de = &d * &e;
        let scaled_k = |r: &BigRational| T::from_big(&(r.numer() * (&de / r.denom())));
        Scaled {
            a: clear(&form.cb, &d),
            b: clear(&form.cc, &d),
            c: clear(&form.ct, &d),
            e: T::from_big(&e),
            lead: scaled_k(&constant.lead),
            weights: per_vertex.iter().map(scaled_k).collect(),
            tail: scaled_k(&constant.tail),
            full: scaled_k(&constant.value),
            d,
        }
    }

    fn lhs(&self, nb: u64, nc: u64, t: u64) -> T {
        let mut acc = self.a.clone() * T::from(nb);
        acc += &(self.b.clone() * T::from(nc));
        acc += &(self.c.clone() * T::from(t));
        acc.abs()
    }
}

/// Whether the scaled inputs leave `i128` enough headroom for `horizon` steps.
fn fits_small(form: &LinearForm, constant: &BoundConstant, n: usize, horizon: u64) -> bool {
    let d = common_denominator([&form.cb, &form.cc, &form.ct]);
    let per_vertex = constant.per_vertex(n);
    let e = common_denominator(per_vertex.iter().chain([&constant.lead, &constant.tail]));
    let coef_bits = [&form.cb, &form.cc, &form.ct]
        .iter()
        .map(|r| (r.numer() * (&d / r.denom())).bits())
        .max()
        .unwrap_or(0);
    let k_bits = (&constant.value * BigRational::from_integer(&d * &e)).to_integer().bits() + 1;
    let steps_bits = 64 - horizon.max(1).leading_zeros() as u64;
    let lhs_bits = coef_bits + steps_bits + 2 + e.bits();
    lhs_bits.max(k_bits + 4) < 120
}

/// Run the walk from `(x0, r0)` for `horizon` steps and check
/// `|L| ≤ K` and `|L| ≤ K(t)` after every step, including `t = 0`.
#[allow(clippy::too_many_arguments)]
pub fn check_linear_bound(
    label: &str,
    mech: &RotorMechanism,
    x0: VertexId,
    r0: &RotorConfiguration,
    b: VertexId,
    c: Option<VertexId>,
    form: &LinearForm,
    constant: &BoundConstant,
    horizon: u64,
    policy: CheckpointPolicy,
) -> DiscrepancyReport {
    let n = mech.len();
    if fits_small(form, constant, n, horizon) {
        run_check::<i128>(label, mech, x0, r0, b, c, form, constant, horizon, policy)
    } else {
        run_check::<BigInt>(label, mech, x0, r0, b, c, form, constant, horizon, policy)
    }
}

#[allow(clippy::too_many_arguments)]
fn run_check<T: Exact + Signed + Ord + From<u64>>(
    label: &str,
    mech: &RotorMechanism,
    x0: VertexId,
    r0: &RotorConfiguration,
    b: VertexId,
    c: Option<VertexId>,
    form: &LinearForm,
    constant: &BoundConstant,
    horizon: u64,
    policy: CheckpointPolicy,
) -> DiscrepancyReport {
    let n = mech.len();
    let s: Scaled<T> = Scaled::new(form, constant, n);
    let mut report = DiscrepancyReport::empty(label, constant.clone());
    let mut state = WalkState::new(x0, r0.clone());
    let mut moved = vec![false; n];
    let mut moved_sum = T::zero();
    let mut worst = T::zero();
    let mut next_record = 0u64;
    let count = |state: &WalkState, v: Option<VertexId>| v.map_or(0, |v| state.visits(v));

    for step in 0..=horizon {
        if step > 0 {
            let x = state.x;
            state.step(mech);
            let now = state.rotor(x) != r0.residues[x.0];
            if now != moved[x.0] {
                moved[x.0] = now;
                if now {
                    moved_sum += &s.weights[x.0];
                } else {
                    moved_sum = moved_sum - &s.weights[x.0];
                }
            }
        }
        let nb = state.visits(b);
        let nc = count(&state, c);
        let lhs = s.lhs(nb, nc, state.t);
        let lhs_e = lhs.clone() * s.e.clone();
        let ok = lhs_e <= s.full;
        let mut refined = moved_sum.clone();
        refined += &s.tail;
        if state.x != x0 {
            refined += &s.lead;
        }
        let refined_ok = lhs_e <= refined;
        if lhs > worst {
            worst = lhs.clone();
        }
        report.steps_checked += 1;
        if !ok {
            report.violations += 1;
        }
        if !refined_ok {
            report.refined_violations += 1;
        }
        if step == next_record || !ok || step == horizon {
            let d = BigRational::from_integer(s.d.clone());
            let lhs_q = BigRational::from_integer(lhs.to_big()) / &d;
            report.checkpoints.push(Checkpoint {
                t: state.t,
                lhs: lhs_q,
                rhs: constant.value.clone(),
                ok,
                worst_ratio: ratio_of(&worst, &s.d, &constant.value),
            });
            if step == next_record {
                next_record = policy.next_after(step);
            }
        }
    }
    report.worst_ratio = ratio_of(&worst, &s.d, &constant.value);
    report
}

fn ratio_of<T: Exact>(worst: &T, d: &BigInt, k: &BigRational) -> BigRational {
    if k.is_zero() {
        return BigRational::zero();
    }
    BigRational::new(worst.to_big(), d.clone()) / k
}

/// Potentials and constant for one of the four finite-chain bounds.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub form: LinearForm,
    pub constant: BoundConstant,
}

/// Solve the potentials of `theorem` on the (already prepared) chain.
pub fn prepare_bound(
    theorem: Theorem,
    chain: &MarkovChain,
    mech: &RotorMechanism,
    setup: &Setup,
) -> Result<Prepared, BoundsError> {
    check_setup(theorem, chain, mech, setup)?;
    let Setup { a, b, .. } = *setup;
    let zero = BigRational::zero;
    Ok(match theorem {
        Theorem::HittingProbability => {
            let c = setup.require_c()?;
            let h = potential::solve_hitting_prob(chain, b, c)?;
            let ha = h.get(a).clone();
            Prepared {
                form: LinearForm {
                    cb: &ha - BigRational::one(),
                    cc: ha,
                    ct: zero(),
                },
                constant: k1(chain, mech, &h, b, c),
            }
        }
        Theorem::HittingTime => {
            let k = potential::solve_hitting_time(chain, b)?;
            Prepared {
                form: LinearForm {
                    cb: k.get(a) + BigRational::one(),
                    cc: zero(),
                    ct: -BigRational::one(),
                },
                constant: k2(chain, mech, &k, b),
            }
        }
        Theorem::Occupation => {
            let c = setup.require_c()?;
            let h = potential::solve_hitting_prob(chain, b, c)?;
            let ebc = -potential::laplacian(chain, &h.values, b)?;
            let ecb = potential::laplacian(chain, &h.values, c)?;
            Prepared {
                form: LinearForm {
                    cb: ebc,
                    cc: -ecb,
                    ct: zero(),
                },
                constant: k3(chain, mech, &h, b, c),
            }
        }
        Theorem::Stationary => {
            let k = potential::solve_hitting_time(chain, b)?;
            let pi = potential::solve_stationary(chain)?;
            Prepared {
                form: LinearForm {
                    cb: BigRational::one() / pi.get(b),
                    cc: zero(),
                    ct: -BigRational::one(),
                },
                constant: k4(chain, mech, &k, &pi, b),
            }
        }
    })
}

/// Check one of the four finite-chain bounds at every step up to `horizon`.
///
/// `chain` must already carry the theorem's surgery (see [`Theorem::prepare`]).
#[allow(clippy::too_many_arguments)]
pub fn verify_theorem(
    theorem: Theorem,
    chain: &MarkovChain,
    mech: &RotorMechanism,
    r0: &RotorConfiguration,
    x0: VertexId,
    setup: &Setup,
    horizon: u64,
    policy: CheckpointPolicy,
) -> Result<DiscrepancyReport, BoundsError> {
    let prepared = prepare_bound(theorem, chain, mech, setup)?;
    let label = format!("theorem-{}", theorem.id());
    Ok(check_linear_bound(
        &label,
        mech,
        x0,
        r0,
        setup.b,
        setup.c,
        &prepared.form,
        &prepared.constant,
        horizon,
        policy,
    ))
}

/// Largest `|L|` over the report, as an `f64`, for quick summaries.
pub fn worst_lhs(report: &DiscrepancyReport) -> f64 {
    (&report.worst_ratio * &report.constant.value).to_f64().unwrap_or(f64::NAN)
}

/// `lcm` of the rotor periods, handy when sizing budgets.
pub fn period_lcm(mech: &RotorMechanism) -> BigInt {
    (0..mech.len()).fold(BigInt::one(), |acc, u| acc.lcm(&BigInt::from(mech.degree(VertexId(u)))))
}
