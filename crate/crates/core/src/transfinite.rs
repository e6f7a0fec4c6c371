//! Transfinite rotor walks.
//!
//! A rotor walk on an infinite chain may run off to infinity. The transfinite
//! walk then freezes the limiting rotor configuration and restarts the
//! particle at the origin `a`; times are `mω + t` after `m` escapes.
//!
//! An escape is recognised by a ray certificate: the particle stands at an
//! unvisited vertex from which every rotor ahead, in its current state, sends
//! it one step further along a straight ray moving strictly away from `a`,
//! and every vertex on that ray beyond the explored region is in one common
//! state. The frozen configuration then differs from the stored one exactly
//! along that ray, which is recorded as a [`Tail`]. On `ℤ` a second
//! certificate covers escapes that are not straight: two consecutive first
//! arrivals at fresh frontiers whose rotor patterns agree after a shift by one
//! vertex, with the particle staying beyond a cut in between. Runs that leave
//! the largest truncation radius of the [`EscapePolicy`] schedule without a
//! certificate are reported as undecided.
//!
//! The finite side of the machinery splits `a` into an outgoing copy `a0` and
//! an incoming copy `a1`, truncates at graph distance `d` and counts
//! returns, see [`truncated_return_series`].

use std::collections::HashMap;
use std::fmt::Write as _;

use num::{BigRational, One, Signed, Zero};
use thiserror::Error;

use crate::bounds::{BoundConstant, Checkpoint, ConstantKind, DiscrepancyReport, Term};
use crate::chain::{split_and_truncate, ChainError, ChainFamily, SplitChain, SplitRole, VertexId};
use crate::lattice::{LatticePoint, DIRECTIONS};
use crate::linalg::solve;
use crate::potential::solve_hitting_prob_sets;
use crate::rational::{int, ratio, to_f64};
use crate::rotor::{MechanismError, RotorConfiguration, RotorMechanism, WalkState};

pub const SERIES_HEADER: &str = "n,I_n,R_n,ratio";

/// How far a ray extends relative to the tail of another ray.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cover {
    /// Every point of the tail lies on the ray.
    All,
    /// No point of the tail lies on the ray.
    None,
    /// Some do and some do not.
    Partial,
}

/// An infinite chain together with a rotor mechanism and an initial configuration.
///
/// Rays are straight half-lines written `(start, next)` where `next` is the
/// neighbour of `start` in the ray's direction.
pub trait RotorSystem: ChainFamily {
    /// Rotor successors of `v` in firing order.
    fn successors(&self, v: Self::Vertex) -> Vec<Self::Vertex>;

    fn initial_rotor(&self, v: Self::Vertex) -> usize;

    /// Graph distance between `root` and `v`.
    fn distance(&self, root: Self::Vertex, v: Self::Vertex) -> u64;

    fn on_ray(&self, ray: (Self::Vertex, Self::Vertex), w: Self::Vertex) -> bool;

    /// How `ray` meets the tail of the ray `tail` (from `tail.0` onwards).
    fn cover(&self, ray: (Self::Vertex, Self::Vertex), tail: (Self::Vertex, Self::Vertex)) -> Cover;

    /// Whether the rows of the chain and the initial rotors repeat along `tail`
    /// beyond its start, so that a state that is common to all vertices there
    /// sends every one of them to the next.
    fn translation_invariant(&self, root: Self::Vertex, tail: (Self::Vertex, Self::Vertex)) -> bool;

    /// Integer coordinate of `v` when the chain lives on `ℤ`.
    fn coordinate(&self, _v: Self::Vertex) -> Option<i64> {
        None
    }

    /// The vertex with coordinate `x` when the chain lives on `ℤ`.
    fn vertex_at(&self, _x: i64) -> Option<Self::Vertex> {
        None
    }
}

fn line_cover(ray: (i64, i64), tail: (i64, i64)) -> Cover {
    let dr = ray.1 - ray.0;
    let dt = tail.1 - tail.0;
    let offset = (tail.0 - ray.0) * dr;
    if dr == dt {
        if offset >= 0 {
            Cover::All
        } else {
            Cover::Partial
        }
    } else if offset >= 0 {
        Cover::Partial
    } else {
        Cover::None
    }
}

/// Nearest-neighbour walk on `ℤ` whose rotor at every vertex cycles through
/// `left` copies of `v − 1` followed by `right` copies of `v + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineRotors {
    pub left: usize,
    pub right: usize,
    pub r0: usize,
}

impl LineRotors {
    /// Simple random walk with every rotor on its right neighbour.
    pub fn simple_all_right() -> Self {
        LineRotors { left: 1, right: 1, r0: 1 }
    }

    /// Steps right with probability `right/(left + right)`; every rotor starts on its last (rightward) entry.
    pub fn drifted_all_right(left: usize, right: usize) -> Self {
        assert!(left >= 1 && right >= 1);
        LineRotors {
            left,
            right,
            r0: left + right - 1,
        }
    }

    pub fn degree(&self) -> usize {
        self.left + self.right
    }
}

impl ChainFamily for LineRotors {
    type Vertex = i64;

    fn transitions(&self, v: i64) -> Vec<(i64, BigRational)> {
        let d = self.degree() as i64;
        vec![
            (v - 1, ratio(self.left as i64, d)),
            (v + 1, ratio(self.right as i64, d)),
        ]
    }

    fn label(&self, v: i64) -> String {
        v.to_string()
    }
}

impl RotorSystem for LineRotors {
    fn successors(&self, v: i64) -> Vec<i64> {
        let mut list = vec![v - 1; self.left];
        list.extend(std::iter::repeat_n(v + 1, self.right));
        list
    }

    fn initial_rotor(&self, _v: i64) -> usize {
        self.r0 % self.degree()
    }

    fn distance(&self, root: i64, v: i64) -> u64 {
        (v - root).unsigned_abs()
    }

    fn on_ray(&self, ray: (i64, i64), w: i64) -> bool {
        (w - ray.0) * (ray.1 - ray.0) >= 0
    }

    fn cover(&self, ray: (i64, i64), tail: (i64, i64)) -> Cover {
        line_cover(ray, tail)
    }

    fn translation_invariant(&self, _root: i64, _tail: (i64, i64)) -> bool {
        true
    }

    fn coordinate(&self, v: i64) -> Option<i64> {
        Some(v)
    }

    fn vertex_at(&self, x: i64) -> Option<i64> {
        Some(x)
    }
}

/// Walk on `ℤ` drifting away from 0: a vertex `v ≠ 0` lists `out` copies of
/// its outer neighbour, then `inward` copies of its inner neighbour; 0 lists
/// `−1, 1`. Every rotor starts at residue `r0` (reduced per vertex).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DriftLine {
    pub out: usize,
    pub inward: usize,
    pub r0: usize,
}

impl DriftLine {
    pub fn new(out: usize, inward: usize, r0: usize) -> Self {
        assert!(out > inward && inward >= 1, "drift must point outwards");
        DriftLine { out, inward, r0 }
    }

    fn degree(&self, v: i64) -> usize {
        if v == 0 {
            2
        } else {
            self.out + self.inward
        }
    }

    /// `ρ = inward / out`: the chance of ever moving one step inwards.
    pub fn rho(&self) -> BigRational {
        ratio(self.inward as i64, self.out as i64)
    }

    /// Smallest window `[−W, W]` that contains the given vertices two steps inside.
    pub fn window_for(vertices: &[i64]) -> i64 {
        vertices.iter().map(|v| v.abs()).max().unwrap_or(0) + 2
    }

    /// Solve `f(v) = source(v) + Σ p(v,w) f(w)` off `fixed`, with `f → 0` at
    /// both ends. Outside the window every non-fixed vertex is harmonic, so
    /// `f` is geometric there with ratio `ρ`, which closes the system exactly.
    fn solve_window(&self, window: i64, fixed: &[(i64, BigRational)], source: &[(i64, BigRational)]) -> WindowPotential {
        let n = (2 * window + 1) as usize;
        let idx = |v: i64| (v + window) as usize;
        let mut m = vec![vec![BigRational::zero(); n]; n];
        let mut rhs = vec![BigRational::zero(); n];
        let rho = self.rho();
        for v in -window..=window {
            let i = idx(v);
            m[i][i] = BigRational::one();
            if let Some((_, value)) = fixed.iter().find(|(w, _)| *w == v) {
                rhs[i] = value.clone();
            } else if v.abs() == window {
                let inner = if v > 0 { v - 1 } else { v + 1 };
                m[i][idx(inner)] -= &rho;
            } else {
                for (w, p) in self.transitions(v) {
                    m[i][idx(w)] -= p;
                }
                if let Some((_, s)) = source.iter().find(|(w, _)| *w == v) {
                    rhs[i] = s.clone();
                }
            }
        }
        let values = solve(&m, &rhs).expect("window system is nonsingular");
        WindowPotential { window, rho, values }
    }

    /// `h(v) = P_v(T_b < T_c)`.
    pub fn hitting_prob(&self, b: i64, c: i64) -> WindowPotential {
        let window = Self::window_for(&[b, c]);
        self.solve_window(window, &[(b, BigRational::one()), (c, BigRational::zero())], &[])
    }

    /// `g(v)`: expected number of visits to `b` from `v`, counting time zero.
    pub fn expected_visits(&self, b: i64) -> WindowPotential {
        let window = Self::window_for(&[b]);
        self.solve_window(window, &[], &[(b, BigRational::one())])
    }

    /// `½ Σ_{u ∈ us, list entries v} |f(u) − f(v)|` inside the window, plus
    /// the exact sum over `|u| ≥ W`, which is `out·(f(W) + f(−W))`.
    fn gradient(&self, f: &WindowPotential, skip: &[i64]) -> (Vec<Term>, BigRational) {
        let w = f.window;
        let mut terms = Vec::new();
        for u in (1 - w)..w {
            if skip.contains(&u) {
                continue;
            }
            let mut counts: Vec<(i64, usize)> = Vec::new();
            for v in self.successors(u) {
                match counts.iter_mut().find(|(x, _)| *x == v) {
                    Some(entry) => entry.1 += 1,
                    None => counts.push((v, 1)),
                }
            }
            for (v, k) in counts {
                let diff = (f.get(u) - f.get(v)).abs();
                if !diff.is_zero() {
                    terms.push(Term {
                        u: f.id(u),
                        v: Some(f.id(v)),
                        value: ratio(k as i64, 2) * diff,
                    });
                }
            }
        }
        let tail = int(self.out as i64) * (f.get(w) + f.get(-w));
        (terms, tail)
    }

    /// `K1` of the hitting probability `h` (vertex ids are window offsets `v + W`).
    pub fn k1(&self, h: &WindowPotential, b: i64, c: i64) -> BoundConstant {
        let (terms, tail) = self.gradient(h, &[b, c]);
        BoundConstant::new(ConstantKind::K1, BigRational::one(), terms, tail)
    }

    /// `K5 = sup g + ½(d(b) + Σ d(u)p(u,v)|g(u) − g(v)|)`.
    pub fn k5(&self, g: &WindowPotential, b: i64) -> BoundConstant {
        let (mut terms, tail) = self.gradient(g, &[]);
        terms.push(Term {
            u: g.id(b),
            v: None,
            value: ratio(self.degree(b) as i64, 2),
        });
        let sup = g.values.iter().max().cloned().unwrap_or_else(BigRational::zero);
        BoundConstant::new(ConstantKind::K5, sup, terms, tail)
    }
}

/// A potential on `[−W, W]`; it is geometric with ratio `ρ` beyond.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPotential {
    pub window: i64,
    pub rho: BigRational,
    pub values: Vec<BigRational>,
}

impl WindowPotential {
    /// Value inside the window.
    pub fn get(&self, v: i64) -> &BigRational {
        &self.values[(v + self.window) as usize]
    }

    /// Value anywhere, continuing geometrically outside the window.
    pub fn at(&self, v: i64) -> BigRational {
        let mut f = self.get(v.clamp(-self.window, self.window)).clone();
        for _ in self.window..v.abs() {
            f *= &self.rho;
        }
        f
    }

    fn id(&self, v: i64) -> VertexId {
        VertexId((v + self.window) as usize)
    }
}

impl ChainFamily for DriftLine {
    type Vertex = i64;

    fn transitions(&self, v: i64) -> Vec<(i64, BigRational)> {
        if v == 0 {
            return vec![(-1, ratio(1, 2)), (1, ratio(1, 2))];
        }
        let s = v.signum();
        let d = (self.out + self.inward) as i64;
        vec![
            (v + s, ratio(self.out as i64, d)),
            (v - s, ratio(self.inward as i64, d)),
        ]
    }

    fn label(&self, v: i64) -> String {
        v.to_string()
    }
}

impl RotorSystem for DriftLine {
    fn successors(&self, v: i64) -> Vec<i64> {
        if v == 0 {
            return vec![-1, 1];
        }
        let s = v.signum();
        let mut list = vec![v + s; self.out];
        list.extend(std::iter::repeat_n(v - s, self.inward));
        list
    }

    fn initial_rotor(&self, v: i64) -> usize {
        self.r0 % self.degree(v)
    }

    fn distance(&self, root: i64, v: i64) -> u64 {
        (v - root).unsigned_abs()
    }

    fn on_ray(&self, ray: (i64, i64), w: i64) -> bool {
        (w - ray.0) * (ray.1 - ray.0) >= 0
    }

    fn cover(&self, ray: (i64, i64), tail: (i64, i64)) -> Cover {
        line_cover(ray, tail)
    }

    fn translation_invariant(&self, _root: i64, tail: (i64, i64)) -> bool {
        // Rows repeat along a tail that stays on one side of 0.
        tail.0 != 0 && (tail.1 - tail.0).signum() == tail.0.signum()
    }

    fn coordinate(&self, v: i64) -> Option<i64> {
        Some(v)
    }

    fn vertex_at(&self, x: i64) -> Option<i64> {
        Some(x)
    }
}

/// Simple random walk on `ℤ²` with every rotor starting at the same residue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeRotors {
    pub r0: usize,
}

impl LatticeRotors {
    pub fn all_east() -> Self {
        LatticeRotors { r0: 0 }
    }
}

impl ChainFamily for LatticeRotors {
    type Vertex = LatticePoint;

    fn transitions(&self, v: LatticePoint) -> Vec<(LatticePoint, BigRational)> {
        v.neighbours().iter().map(|&w| (w, ratio(1, 4))).collect()
    }

    fn label(&self, v: LatticePoint) -> String {
        v.to_string()
    }
}

fn dot(p: LatticePoint, q: LatticePoint) -> i64 {
    p.x * q.x + p.y * q.y
}

fn cross(p: LatticePoint, q: LatticePoint) -> i64 {
    p.x * q.y - p.y * q.x
}

impl RotorSystem for LatticeRotors {
    fn successors(&self, v: LatticePoint) -> Vec<LatticePoint> {
        v.neighbours().to_vec()
    }

    fn initial_rotor(&self, _v: LatticePoint) -> usize {
        self.r0 % 4
    }

    fn distance(&self, root: LatticePoint, v: LatticePoint) -> u64 {
        (v - root).l1() as u64
    }

    fn on_ray(&self, ray: (LatticePoint, LatticePoint), w: LatticePoint) -> bool {
        let dir = ray.1 - ray.0;
        let off = w - ray.0;
        cross(off, dir) == 0 && dot(off, dir) >= 0
    }

    fn cover(&self, ray: (LatticePoint, LatticePoint), tail: (LatticePoint, LatticePoint)) -> Cover {
        let dr = ray.1 - ray.0;
        let dt = tail.1 - tail.0;
        let off = tail.0 - ray.0;
        if cross(dr, dt) == 0 {
            if cross(off, dr) != 0 {
                Cover::None
            } else if dr == dt {
                if dot(off, dr) >= 0 {
                    Cover::All
                } else {
                    Cover::Partial
                }
            } else if dot(off, dr) >= 0 {
                Cover::Partial
            } else {
                Cover::None
            }
        } else {
            // Perpendicular lines meet in one point; only that point can be shared.
            let meet = if dt.x == 0 {
                LatticePoint::new(tail.0.x, ray.0.y)
            } else {
                LatticePoint::new(ray.0.x, tail.0.y)
            };
            if self.on_ray(ray, meet) && self.on_ray(tail, meet) {
                Cover::Partial
            } else {
                Cover::None
            }
        }
    }

    fn translation_invariant(&self, _root: LatticePoint, tail: (LatticePoint, LatticePoint)) -> bool {
        DIRECTIONS.contains(&(tail.1 - tail.0))
    }
}

/// Doubling radius schedule `d0, 2d0, …, d_max` and a step budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EscapePolicy {
    pub d0: u64,
    pub d_max: u64,
    pub step_budget: u64,
}

impl Default for EscapePolicy {
    fn default() -> Self {
        EscapePolicy {
            d0: 4,
            d_max: 1 << 20,
            step_budget: 1 << 34,
        }
    }
}

impl EscapePolicy {
    pub fn levels(&self) -> Vec<u64> {
        let mut out = Vec::new();
        let mut d = self.d0.max(1);
        while d <= self.d_max {
            out.push(d);
            d *= 2;
        }
        out
    }

    /// Largest schedule level not exceeding `reach` (0 if there is none).
    pub fn level_reached(&self, reach: u64) -> u64 {
        self.levels().into_iter().take_while(|&d| d <= reach).last().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EscapeRecord {
    /// Index of the run that escaped (0 for the first).
    pub run: u64,
    /// Steps taken by that run before the certificate.
    pub steps: u64,
    /// Largest distance from `a` reached by the run before the certificate.
    pub reach: u64,
    /// Largest schedule level whose boundary the run was seen to hit.
    pub level: u64,
    /// Label of the first vertex of the escape ray.
    pub exit: String,
}

/// Outcome of a single run from `a` up to its first return or escape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Returned { steps: u64 },
    Escaped(EscapeRecord),
}

/// Summary of a transfinite walk.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TransfiniteState {
    /// `m`: completed escapes.
    pub runs: u64,
    /// Finite steps taken over all runs.
    pub steps: u64,
    /// `t` within the current run.
    pub run_steps: u64,
    /// `(I_n, R_n)` for `n = 1, 2, …`.
    pub series: Vec<(u64, u64)>,
    pub escapes: Vec<EscapeRecord>,
    /// Vertices with a stored rotor.
    pub visited: usize,
}

impl TransfiniteState {
    pub fn returns(&self) -> u64 {
        self.series.len() as u64
    }

    /// `I_n`, for `1 ≤ n ≤ returns()`.
    pub fn i_n(&self, n: u64) -> u64 {
        self.series[(n - 1) as usize].0
    }

    pub fn r_n(&self, n: u64) -> u64 {
        self.series[(n - 1) as usize].1
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SERIES_HEADER);
        out.push('\n');
        for (k, (i, r)) in self.series.iter().enumerate() {
            let n = k as u64 + 1;
            writeln!(out, "{n},{i},{r},{:.6}", *i as f64 / n as f64).unwrap();
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum TransfiniteError {
    #[error("run {run} undecided: distance {reach} reached d_max = {d_max} without an escape certificate")]
    Undecided {
        run: u64,
        reach: u64,
        d_max: u64,
        partial: Box<TransfiniteState>,
    },
    #[error("run {run}: no escape or return within the budget of {budget} steps")]
    Budget {
        run: u64,
        budget: u64,
        partial: Box<TransfiniteState>,
    },
    #[error("setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

/// What one call to [`TransfiniteWalk::advance`] did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Move<V> {
    Step { from: V, to: V },
    Escape(EscapeRecord),
}

/// Vertices along a frozen escape route, from `start` onwards in the
/// direction of `next`, each fired `fires` more times than before the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tail<V> {
    pub start: V,
    pub next: V,
    pub fires: u64,
}

/// The last first arrival at a fresh frontier of a walk on `ℤ`.
#[derive(Debug, Clone)]
struct Frontier<V> {
    side: i64,
    x: i64,
    /// Closest coordinate to the root visited since the arrival.
    low: i64,
    /// Rotor and visit count at the arrival of every vertex changed since.
    journal: HashMap<V, (usize, u64)>,
}

/// A transfinite rotor walk with sparse rotors: absent entries are still at
/// their initial value, advanced once for every firing recorded by a tail.
#[derive(Debug)]
pub struct TransfiniteWalk<'s, S: RotorSystem> {
    system: &'s S,
    root: S::Vertex,
    redirect: Vec<S::Vertex>,
    watched: Vec<S::Vertex>,
    rotors: HashMap<S::Vertex, usize>,
    departures: HashMap<S::Vertex, u64>,
    tails: Vec<Tail<S::Vertex>>,
    explored: u64,
    /// Coordinate range of stored and special vertices, for walks on `ℤ`.
    span: Option<(i64, i64)>,
    frontier: Option<Frontier<S::Vertex>>,
    position: S::Vertex,
    run_reach: u64,
    state: TransfiniteState,
}

impl<S: RotorSystem> Clone for TransfiniteWalk<'_, S> {
    fn clone(&self) -> Self {
        TransfiniteWalk {
            system: self.system,
            root: self.root,
            redirect: self.redirect.clone(),
            watched: self.watched.clone(),
            rotors: self.rotors.clone(),
            departures: self.departures.clone(),
            tails: self.tails.clone(),
            explored: self.explored,
            span: self.span,
            frontier: self.frontier.clone(),
            position: self.position,
            run_reach: self.run_reach,
            state: self.state.clone(),
        }
    }
}

impl<'s, S: RotorSystem> TransfiniteWalk<'s, S> {
    pub fn new(system: &'s S, root: S::Vertex) -> Self {
        let mut walk = TransfiniteWalk {
            system,
            root,
            redirect: Vec::new(),
            watched: Vec::new(),
            rotors: HashMap::new(),
            departures: HashMap::new(),
            tails: Vec::new(),
            explored: 0,
            span: None,
            frontier: None,
            position: root,
            run_reach: 0,
            state: TransfiniteState::default(),
        };
        walk.extend_span(root);
        walk
    }

    fn mark(&mut self, targets: &[S::Vertex]) {
        for &v in targets {
            self.explored = self.explored.max(self.system.distance(self.root, v));
            self.extend_span(v);
        }
    }

    /// Send the particle straight back to `a` from each of `targets`.
    pub fn with_redirect(mut self, targets: &[S::Vertex]) -> Self {
        self.mark(targets);
        self.redirect = targets.to_vec();
        self
    }

    /// Keep escape routes away from `targets`, so that their visit counts
    /// are sums of finitely many departures.
    pub fn with_watch(mut self, targets: &[S::Vertex]) -> Self {
        self.mark(targets);
        self.watched = targets.to_vec();
        self
    }

    fn extend_span(&mut self, v: S::Vertex) {
        if let Some(x) = self.system.coordinate(v) {
            self.span = Some(match self.span {
                Some((lo, hi)) => (lo.min(x), hi.max(x)),
                None => (x, x),
            });
        }
    }

    pub fn root(&self) -> S::Vertex {
        self.root
    }

    pub fn position(&self) -> S::Vertex {
        self.position
    }

    pub fn state(&self) -> &TransfiniteState {
        &self.state
    }

    pub fn tails(&self) -> &[Tail<S::Vertex>] {
        &self.tails
    }

    fn tail_fires(&self, v: S::Vertex) -> u64 {
        self.tails
            .iter()
            .filter(|t| self.system.on_ray((t.start, t.next), v))
            .map(|t| t.fires)
            .sum()
    }

    /// `r_τ(v)`.
    pub fn rotor(&self, v: S::Vertex) -> usize {
        match self.rotors.get(&v) {
            Some(&r) => r,
            None => {
                let d = self.system.successors(v).len() as u64;
                ((self.system.initial_rotor(v) as u64 + self.tail_fires(v)) % d) as usize
            }
        }
    }

    /// `n_τ(v)`: departures from `v` before the current time.
    pub fn visits(&self, v: S::Vertex) -> u64 {
        self.departures.get(&v).copied().unwrap_or(0) + self.tail_fires(v)
    }

    /// Vertices with a stored rotor, in no particular order.
    pub fn stored(&self) -> impl Iterator<Item = (S::Vertex, usize)> + '_ {
        self.rotors.iter().map(|(&v, &r)| (v, r))
    }

    fn special(&self, v: S::Vertex) -> bool {
        v == self.root || self.redirect.contains(&v) || self.watched.contains(&v)
    }

    /// Where a fresh firing of `v` sends the particle, given its current rotor.
    fn next_from(&self, v: S::Vertex) -> S::Vertex {
        let list = self.system.successors(v);
        list[(self.rotor(v) + 1) % list.len()]
    }

    fn uniform_beyond(&self, tail: (S::Vertex, S::Vertex)) -> bool {
        self.tails
            .iter()
            .all(|t| self.system.cover((t.start, t.next), tail) != Cover::Partial)
    }

    /// The straight escape ray starting at the particle's position, if certified.
    fn ray_certificate(&self) -> Option<(S::Vertex, S::Vertex)> {
        let sys = self.system;
        let start = self.position;
        if self.rotors.contains_key(&start) || self.special(start) {
            return None;
        }
        let ray = (start, self.next_from(start));
        let cap = 4 * self.explored + 64;
        let mut w = start;
        for _ in 0..=cap {
            if self.rotors.contains_key(&w) || self.special(w) {
                return None;
            }
            let nw = self.next_from(w);
            if !sys.on_ray(ray, nw) || sys.distance(self.root, nw) != sys.distance(self.root, w) + 1 {
                return None;
            }
            if sys.distance(self.root, w) > self.explored
                && sys.translation_invariant(self.root, (w, nw))
                && self.uniform_beyond((w, nw))
            {
                return Some(ray);
            }
            w = nw;
        }
        None
    }

    /// Side (`±1`) of the fresh frontier the particle stands on, for walks on `ℤ`.
    fn frontier_side(&self) -> Option<i64> {
        let sys = self.system;
        let x = sys.coordinate(self.position)?;
        let (lo, hi) = self.span?;
        let side = if x > hi {
            1
        } else if x < lo {
            -1
        } else {
            return None;
        };
        let ahead = sys.vertex_at(x + side)?;
        self.uniform_beyond((self.position, ahead)).then_some(side)
    }

    /// Escape by translation: the particle reached the frontier `x + s` from
    /// the frontier `x` without going below the cut `c`, and the rotors on
    /// `[c, x)` then match those on `[c + s, x + s)` now. Everything from `c`
    /// outwards then repeats shifted by `s` forever.
    fn shift_certificate(&self, side: i64) -> Option<(i64, i64)> {
        let sys = self.system;
        let f = self.frontier.as_ref()?;
        let x2 = sys.coordinate(self.position)?;
        if f.side != side || f.x + side != x2 {
            return None;
        }
        let c = f.low;
        let root = sys.coordinate(self.root)?;
        let specials = self.redirect.iter().chain(&self.watched).filter_map(|&v| sys.coordinate(v));
        if std::iter::once(root).chain(specials).any(|y| (c - y) * side <= 0) {
            return None;
        }
        if !sys.translation_invariant(self.root, (sys.vertex_at(c)?, sys.vertex_at(c + side)?)) {
            return None;
        }
        let mut y = c;
        while y != f.x {
            let then = sys.vertex_at(y)?;
            let now = sys.vertex_at(y + side)?;
            let before = f.journal.get(&then).map_or_else(|| self.rotor(then), |e| e.0);
            if before != self.rotor(now) {
                return None;
            }
            y += side;
        }
        Some((c, f.x))
    }

    /// Freeze the limit of a shift-certified escape.
    ///
    /// With `C1`, `C2` the visit counts at the two frontier arrivals, the final
    /// counts satisfy `N(c) = C2(c)` and `N(y + s) = C2(y + s) + N(y) − C1(y)`;
    /// they are constant from `x + s` on, and the final rotor is `r(c)` everywhere from `c`.
    fn freeze_shift(&mut self, side: i64, c: i64, x: i64) -> (S::Vertex, S::Vertex) {
        let sys = self.system;
        let f = self.frontier.take().expect("frontier record");
        let at = |y: i64| sys.vertex_at(y).expect("line vertex");
        let then_visits = |v: S::Vertex| f.journal.get(&v).map_or_else(|| self.visits(v), |e| e.1);
        let last = x + side;
        let mut counts = vec![(c, self.visits(at(c)))];
        let mut y = c;
        while y != last {
            let prev = counts.last().unwrap().1;
            let next = self.visits(at(y + side)) + prev - then_visits(at(y));
            counts.push((y + side, next));
            y += side;
        }
        let final_rotor = self.rotor(at(c));
        let (_, n_last) = *counts.last().unwrap();
        let start = at(last + side);
        let background = self.tail_fires(start);
        for (y, n) in counts {
            let v = at(y);
            let base = self.tail_fires(v);
            self.rotors.insert(v, final_rotor);
            self.departures.insert(v, n - base);
            self.extend_span(v);
        }
        let tail = Tail {
            start,
            next: at(last + 2 * side),
            fires: n_last - background,
        };
        debug_assert_eq!(
            ((sys.initial_rotor(start) as u64 + n_last) % sys.successors(start).len() as u64) as usize,
            final_rotor
        );
        self.tails.push(tail);
        (at(last), start)
    }

    fn snapshot(&self) -> Box<TransfiniteState> {
        let mut s = self.state.clone();
        s.visited = self.rotors.len();
        Box::new(s)
    }

    fn escape(&mut self, exit: S::Vertex, furthest: S::Vertex, policy: &EscapePolicy) -> EscapeRecord {
        let record = EscapeRecord {
            run: self.state.runs,
            steps: self.state.run_steps,
            reach: self.run_reach,
            level: policy.level_reached(self.run_reach),
            exit: self.system.label(exit),
        };
        self.explored = self.explored.max(self.system.distance(self.root, furthest));
        self.state.escapes.push(record.clone());
        self.state.runs += 1;
        self.state.run_steps = 0;
        self.run_reach = 0;
        self.frontier = None;
        self.position = self.root;
        self.push_return(true);
        record
    }

    /// Take one finite step, or escape and restart at `a`.
    pub fn advance(&mut self, policy: &EscapePolicy) -> Result<Move<S::Vertex>, TransfiniteError> {
        if let Some(ray) = self.ray_certificate() {
            self.tails.push(Tail {
                start: ray.0,
                next: ray.1,
                fires: 1,
            });
            let record = self.escape(ray.0, ray.0, policy);
            return Ok(Move::Escape(record));
        }
        if let Some(side) = self.frontier_side() {
            if let Some((c, x)) = self.shift_certificate(side) {
                let (exit, start) = self.freeze_shift(side, c, x);
                let record = self.escape(exit, start, policy);
                return Ok(Move::Escape(record));
            }
            let x = self.system.coordinate(self.position).unwrap();
            self.frontier = Some(Frontier {
                side,
                x,
                low: x,
                journal: HashMap::new(),
            });
        }
        if self.run_reach >= policy.d_max {
            return Err(TransfiniteError::Undecided {
                run: self.state.runs,
                reach: self.run_reach,
                d_max: policy.d_max,
                partial: self.snapshot(),
            });
        }
        if self.state.steps >= policy.step_budget {
            return Err(TransfiniteError::Budget {
                run: self.state.runs,
                budget: policy.step_budget,
                partial: self.snapshot(),
            });
        }
        Ok(self.step_once())
    }

    /// One rotor step with no escape checks.
    fn step_once(&mut self) -> Move<S::Vertex> {
        let from = self.position;
        if let Some(f) = &self.frontier {
            if !f.journal.contains_key(&from) {
                let entry = (self.rotor(from), self.visits(from));
                self.frontier.as_mut().unwrap().journal.insert(from, entry);
            }
        }
        let to = if self.redirect.contains(&from) {
            self.root
        } else {
            let list = self.system.successors(from);
            let r = (self.rotor(from) + 1) % list.len();
            self.rotors.insert(from, r);
            self.explored = self.explored.max(self.system.distance(self.root, from));
            self.extend_span(from);
            list[r]
        };
        *self.departures.entry(from).or_insert(0) += 1;
        self.position = to;
        self.state.steps += 1;
        self.state.run_steps += 1;
        self.run_reach = self.run_reach.max(self.system.distance(self.root, to));
        if let (Some(f), Some(y)) = (self.frontier.as_mut(), self.system.coordinate(to)) {
            if (y - f.low) * f.side < 0 {
                f.low = y;
            }
        }
        if to == self.root {
            self.push_return(false);
        }
        Move::Step { from, to }
    }

    fn push_return(&mut self, escaped: bool) {
        let (i, r) = self.state.series.last().copied().unwrap_or((0, 0));
        self.state.series.push(if escaped { (i + 1, r) } else { (i, r + 1) });
    }

    /// Advance until the `n`-th return to `a` (restarts count as returns).
    pub fn run_returns(&mut self, n: u64, policy: &EscapePolicy) -> Result<&TransfiniteState, TransfiniteError> {
        while self.state.returns() < n {
            self.advance(policy)?;
        }
        self.state.visited = self.rotors.len();
        Ok(&self.state)
    }

    /// Advance until `m` escapes have happened.
    pub fn run_escapes(&mut self, m: u64, policy: &EscapePolicy) -> Result<&TransfiniteState, TransfiniteError> {
        while self.state.runs < m {
            self.advance(policy)?;
        }
        self.state.visited = self.rotors.len();
        Ok(&self.state)
    }
}

/// The verdict on the first run from `a`.
pub fn detect_escape<S: RotorSystem>(system: &S, a: S::Vertex, policy: &EscapePolicy) -> Result<Verdict, TransfiniteError> {
    let mut walk = TransfiniteWalk::new(system, a);
    loop {
        match walk.advance(policy)? {
            Move::Escape(record) => return Ok(Verdict::Escaped(record)),
            Move::Step { to, .. } if to == a => {
                return Ok(Verdict::Returned {
                    steps: walk.state.run_steps,
                })
            }
            Move::Step { .. } => {}
        }
    }
}

/// Run the transfinite walk from `a` until its `n_returns`-th return.
pub fn transfinite_run<S: RotorSystem>(
    system: &S,
    a: S::Vertex,
    n_returns: u64,
    policy: &EscapePolicy,
) -> Result<TransfiniteState, TransfiniteError> {
    let mut walk = TransfiniteWalk::new(system, a);
    walk.run_returns(n_returns, policy)?;
    Ok(walk.state.clone())
}

/// The chain split at `a` and truncated at distance `d`, with rotor lists in
/// the system's order and the system's initial rotors; `a1` and boundary
/// vertices have a single successor.
pub fn truncated_mechanism<S: RotorSystem>(
    system: &S,
    a: S::Vertex,
    d: usize,
) -> Result<(SplitChain<S::Vertex>, RotorMechanism, RotorConfiguration), TransfiniteError> {
    let split = split_and_truncate(system, a, Some(d))?;
    let mut lists = Vec::with_capacity(split.chain.len());
    let mut residues = Vec::with_capacity(split.chain.len());
    for role in &split.roles {
        match *role {
            SplitRole::Outgoing(v) | SplitRole::Interior(v) => {
                lists.push(system.successors(v).into_iter().map(|w| split.target_of(a, w)).collect());
                residues.push(system.initial_rotor(v));
            }
            SplitRole::Incoming(_) | SplitRole::Boundary(_) => {
                lists.push(vec![split.a0]);
                residues.push(0);
            }
        }
    }
    let mech = RotorMechanism::from_lists(&split.chain, lists)?;
    let config = RotorConfiguration::from_residues(&mech, residues);
    Ok((split, mech, config))
}

/// `R_k^d` for `k = 1..=n`: hits of `a1` before the `k`-th return to `a0`.
pub fn truncated_return_series<S: RotorSystem>(
    system: &S,
    a: S::Vertex,
    d: usize,
    n: u64,
) -> Result<Vec<u64>, TransfiniteError> {
    let (split, mech, config) = truncated_mechanism(system, a, d)?;
    let mut state = WalkState::new(split.a0, config);
    let mut hits = 0;
    let mut out = Vec::with_capacity(n as usize);
    while (out.len() as u64) < n {
        state.step(&mech);
        if state.x == split.a1 {
            hits += 1;
        } else if state.x == split.a0 {
            out.push(hits);
        }
    }
    Ok(out)
}

/// `R_n^d`.
pub fn truncated_returns<S: RotorSystem>(system: &S, a: S::Vertex, d: usize, n: u64) -> Result<u64, TransfiniteError> {
    Ok(truncated_return_series(system, a, d, n)?.last().copied().unwrap_or(0))
}

/// `P_{a0}(T_{∂B(d)} < T_{a1})` on the chain split at `a` and truncated at `d`.
pub fn truncated_escape_prob<S: RotorSystem>(system: &S, a: S::Vertex, d: usize) -> Result<BigRational, TransfiniteError> {
    let split = split_and_truncate(system, a, Some(d))?;
    let h = solve_hitting_prob_sets(&split.chain, &split.boundary(), &[split.a1])?;
    Ok(h.get(split.a0).clone())
}

/// Escape frequency against the escape probability.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityReport {
    pub state: TransfiniteState,
    /// `(d, P_{a0}(T_{∂B(d)} < T_{a1}))` along the schedule; decreasing in `d`.
    pub truncations: Vec<(u64, BigRational)>,
    /// The value at the largest level, an upper bound on `P_a(T_a^+ = ∞)`.
    pub estimate: BigRational,
    /// `I_n / n` at the last return.
    pub ratio: f64,
    /// Largest `I_n − n·estimate` over the run.
    pub worst_excess: f64,
}

impl DensityReport {
    /// Whether the escape frequency ends below the estimate plus `slack/n`.
    pub fn within(&self, slack: f64) -> bool {
        let n = self.state.returns() as f64;
        self.ratio <= to_f64(&self.estimate) + slack / n
    }
}

/// Escape frequency `I_n/n` of the transfinite walk against escape
/// probabilities of the truncated chains at radii `levels`.
pub fn verify_escape_density<S: RotorSystem>(
    system: &S,
    a: S::Vertex,
    n: u64,
    levels: &[u64],
    policy: &EscapePolicy,
) -> Result<DensityReport, TransfiniteError> {
    if levels.is_empty() || n == 0 {
        return Err(TransfiniteError::Setup("need at least one level and one return".into()));
    }
    let state = transfinite_run(system, a, n, policy)?;
    let mut truncations = Vec::new();
    for &d in levels {
        truncations.push((d, truncated_escape_prob(system, a, d as usize)?));
    }
    let estimate = truncations.last().unwrap().1.clone();
    let p = to_f64(&estimate);
    let worst_excess = state
        .series
        .iter()
        .enumerate()
        .map(|(k, (i, _))| *i as f64 - (k + 1) as f64 * p)
        .fold(f64::NEG_INFINITY, f64::max);
    let ratio = state.i_n(n) as f64 / n as f64;
    Ok(DensityReport {
        state,
        truncations,
        estimate,
        ratio,
        worst_excess,
    })
}

/// Record `|lhs| ≤ k` in `report`.
fn record(report: &mut DiscrepancyReport, t: u64, lhs: BigRational) {
    let rhs = report.constant.value.clone();
    let lhs = lhs.abs();
    let ok = lhs <= rhs;
    if !rhs.is_zero() {
        let r = &lhs / &rhs;
        if r > report.worst_ratio {
            report.worst_ratio = r;
        }
    }
    if !ok {
        report.violations += 1;
    }
    report.steps_checked += 1;
    report.checkpoints.push(Checkpoint {
        t,
        lhs,
        rhs,
        ok,
        worst_ratio: report.worst_ratio.clone(),
    });
}

fn distinct(vs: &[i64]) -> bool {
    vs.iter().enumerate().all(|(i, v)| !vs[..i].contains(v))
}

/// `|h(a)(n_τ(b) + n_τ(c) + m) − n_τ(b)| ≤ K1` for the transfinite walk with
/// `b`, `c` sent back to `a`, checked whenever the left side changes: after
/// each departure from `b` or `c` and after each escape, for `checkpoints`
/// such times.
pub fn verify_hitting_from_infinity(
    system: &DriftLine,
    a: i64,
    b: i64,
    c: i64,
    checkpoints: u64,
    policy: &EscapePolicy,
) -> Result<DiscrepancyReport, TransfiniteError> {
    if !distinct(&[a, b, c]) {
        return Err(TransfiniteError::Setup("a, b and c must be distinct".into()));
    }
    let h = system.hitting_prob(b, c);
    let constant = system.k1(&h, b, c);
    let ha = h.get(a).clone();
    let mut report = DiscrepancyReport::empty(&format!("transfinite hitting a={a} b={b} c={c}"), constant);
    let mut walk = TransfiniteWalk::new(system, a).with_redirect(&[b, c]);
    let (mut nb, mut total) = (0i64, 0i64);
    while report.steps_checked < checkpoints {
        let changed = match walk.advance(policy)? {
            Move::Escape(_) => {
                total += 1;
                true
            }
            Move::Step { from, .. } if from == b || from == c => {
                total += 1;
                nb += i64::from(from == b);
                true
            }
            Move::Step { .. } => false,
        };
        if changed {
            let lhs = &ha * int(total) - int(nb);
            record(&mut report, walk.state.steps, lhs);
        }
    }
    Ok(report)
}

/// `|g(a)·m − n_τ(b)| ≤ K5`, checked after each departure from `b` and after
/// each escape, for `checkpoints` such times.
pub fn verify_visits_from_infinity(
    system: &DriftLine,
    a: i64,
    b: i64,
    checkpoints: u64,
    policy: &EscapePolicy,
) -> Result<DiscrepancyReport, TransfiniteError> {
    let g = system.expected_visits(b);
    let constant = system.k5(&g, b);
    let ga = g.get(a).clone();
    let mut report = DiscrepancyReport::empty(&format!("transfinite visits a={a} b={b}"), constant);
    let mut walk = TransfiniteWalk::new(system, a).with_watch(&[b]);
    let (mut nb, mut m) = (0i64, 0i64);
    while report.steps_checked < checkpoints {
        let changed = match walk.advance(policy)? {
            Move::Escape(_) => {
                m += 1;
                true
            }
            Move::Step { from, .. } if from == b => {
                nb += 1;
                true
            }
            Move::Step { .. } => false,
        };
        if changed {
            let lhs = &ga * int(m) - int(nb);
            record(&mut report, walk.state.steps, lhs);
        }
    }
    Ok(report)
}

/// Exact `P_x(hit N before 0)` for a walk stepping right with probability
/// `p = num/den`, used as an oracle for truncated escape probabilities.
pub fn gamblers_ruin(num: i64, den: i64, x: i64, big_n: i64) -> BigRational {
    let p = ratio(num, den);
    let q = BigRational::one() - &p;
    if p == q {
        return ratio(x, big_n);
    }
    let r = q / p;
    let pow = |k: i64| -> BigRational {
        let mut acc = BigRational::one();
        for _ in 0..k {
            acc *= &r;
        }
        acc
    };
    (BigRational::one() - pow(x)) / (BigRational::one() - pow(big_n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::examples;

    fn p(x: i64, y: i64) -> LatticePoint {
        LatticePoint::new(x, y)
    }

    #[test]
    fn line_all_right_escapes_left() {
        let sys = LineRotors::simple_all_right();
        let policy = EscapePolicy::default();
        match detect_escape(&sys, 0, &policy).unwrap() {
            Verdict::Escaped(rec) => {
                assert_eq!(rec.run, 0);
                assert_eq!(rec.exit, "-1");
                assert_eq!(rec.steps, 1);
            }
            other => panic!("expected an escape, got {other:?}"),
        }
        // The truncated walks agree at every radius: the first run hits ∂B(d).
        for d in 1..=20 {
            let (split, mech, config) = truncated_mechanism(&sys, 0, d).unwrap();
            let mut s = WalkState::new(split.a0, config);
            loop {
                s.step(&mech);
                if s.x == split.a1 {
                    panic!("returned at d={d}");
                }
                if split.boundary().contains(&s.x) {
                    assert_eq!(s.t as usize, d);
                    break;
                }
            }
        }
    }

    #[test]
    fn line_zigzag_after_one_escape() {
        let sys = LineRotors::simple_all_right();
        let state = transfinite_run(&sys, 0, 200, &EscapePolicy::default()).unwrap();
        assert_eq!(state.runs, 1);
        assert_eq!(state.i_n(1), 1);
        for n in 1..=200 {
            assert_eq!(state.i_n(n) + state.r_n(n), n);
        }
        assert_eq!(state.i_n(200), 1);
        // Frozen ray: every negative vertex was fired once.
        let mut walk = TransfiniteWalk::new(&sys, 0);
        walk.run_escapes(1, &EscapePolicy::default()).unwrap();
        assert_eq!(walk.rotor(-5), 0);
        assert_eq!(walk.visits(-1000), 1);
        assert_eq!(walk.rotor(5), 1);
    }

    #[test]
    fn lattice_all_east_first_escape_is_northward() {
        let sys = LatticeRotors::all_east();
        match detect_escape(&sys, p(0, 0), &EscapePolicy::default()).unwrap() {
            Verdict::Escaped(rec) => assert_eq!(rec.exit, "(0,1)"),
            other => panic!("expected an escape, got {other:?}"),
        }
        let mut walk = TransfiniteWalk::new(&sys, p(0, 0));
        walk.run_escapes(1, &EscapePolicy::default()).unwrap();
        assert_eq!(
            walk.tails(),
            &[Tail {
                start: p(0, 1),
                next: p(0, 2),
                fires: 1
            }]
        );
        assert_eq!(walk.rotor(p(0, 50)), 1);
        assert_eq!(walk.rotor(p(1, 50)), 0);
    }

    #[test]
    fn lattice_many_restarts() {
        let sys = LatticeRotors::all_east();
        let mut walk = TransfiniteWalk::new(&sys, p(0, 0));
        let state = walk.run_escapes(100, &EscapePolicy::default()).unwrap().clone();
        assert_eq!(state.runs, 100);
        assert_eq!(state.escapes.len(), 100);
        let n = state.returns();
        assert_eq!(state.i_n(n), 100);
        assert_eq!(state.i_n(n) + state.r_n(n), n);
        // Distinct escape rays.
        let mut exits: Vec<_> = state.escapes.iter().map(|e| e.exit.clone()).collect();
        exits.sort();
        exits.dedup();
        assert_eq!(exits.len(), 100);
    }

    /// Direct simulation of the ray: a certified escape must keep moving
    /// outwards for many more steps under the frozen-free rotors.
    #[test]
    fn certificates_are_followed_by_straight_runs() {
        let sys = LatticeRotors::all_east();
        let mut walk = TransfiniteWalk::new(&sys, p(0, 0));
        for _ in 0..40 {
            let before = walk.clone();
            walk.run_escapes(walk.state().runs + 1, &EscapePolicy::default()).unwrap();
            let tail = *walk.tails().last().unwrap();
            let ray = (tail.start, tail.next);
            // Replay from `before` with plain steps: the particle should walk the ray.
            let mut replay = before;
            while replay.position() != ray.0 || replay.ray_certificate().is_none() {
                replay.advance(&EscapePolicy::default()).unwrap();
            }
            let mut pos = ray.0;
            let mut probe = replay.clone();
            for _ in 0..300 {
                let list = sys.successors(pos);
                let r = (probe.rotor(pos) + 1) % 4;
                probe.rotors.insert(pos, r);
                let next = list[r];
                assert!(sys.on_ray(ray, next));
                assert_eq!(sys.distance(p(0, 0), next), sys.distance(p(0, 0), pos) + 1);
                pos = next;
            }
        }
    }

    /// Replay each certified escape on `ℤ` with plain rotor steps until the
    /// particle is far beyond the frontier, then compare with the frozen limit.
    fn frozen_limits_match_plain_steps<S: RotorSystem<Vertex = i64>>(sys: &S, escapes: u64) {
        let policy = EscapePolicy::default();
        let mut walk = TransfiniteWalk::new(sys, 0);
        while walk.state().runs < escapes {
            let before = walk.clone();
            walk.run_escapes(walk.state().runs + 1, &policy).unwrap();
            let mut plain = before.clone();
            // Reach the certificate point first.
            let steps = walk.state().steps - before.state().steps;
            for _ in 0..steps {
                plain.step_once();
            }
            let tail = *walk.tails().last().unwrap();
            let side = (tail.next - tail.start).signum();
            let far = tail.start + side * 300;
            let mut lowest = plain.position() * side;
            while plain.position() != far {
                plain.step_once();
                lowest = lowest.min(plain.position() * side);
            }
            assert!(lowest > 0, "plain run came back to the root");
            // Everything between the root and well past the exit is final.
            for k in 1..tail.start.abs() + 200 {
                let v = side * k;
                assert_eq!(plain.rotor(v), walk.rotor(v), "rotor at {v}");
                assert_eq!(plain.visits(v), walk.visits(v), "visits at {v}");
            }
        }
    }

    #[test]
    fn shift_certificates_match_plain_steps() {
        for r0 in 0..3 {
            frozen_limits_match_plain_steps(&DriftLine::new(2, 1, r0), 12);
        }
        frozen_limits_match_plain_steps(&DriftLine::new(3, 1, 1), 12);
        frozen_limits_match_plain_steps(&LineRotors::drifted_all_right(1, 2), 1);
    }

    #[test]
    fn drift_line_escapes_repeatedly() {
        let sys = DriftLine::new(2, 1, 0);
        let mut walk = TransfiniteWalk::new(&sys, 0);
        let state = walk.run_escapes(30, &EscapePolicy::default()).unwrap();
        assert_eq!(state.runs, 30);
    }

    #[test]
    fn truncated_returns_on_finite_chain_never_escape() {
        // A cycle family: every run returns, so R_n^d = n once d exceeds the diameter.
        #[derive(Clone, Copy)]
        struct Cycle(i64);
        impl ChainFamily for Cycle {
            type Vertex = i64;
            fn transitions(&self, v: i64) -> Vec<(i64, BigRational)> {
                vec![((v + self.0 - 1) % self.0, ratio(1, 2)), ((v + 1) % self.0, ratio(1, 2))]
            }
        }
        impl RotorSystem for Cycle {
            fn successors(&self, v: i64) -> Vec<i64> {
                vec![(v + self.0 - 1) % self.0, (v + 1) % self.0]
            }
            fn initial_rotor(&self, _v: i64) -> usize {
                0
            }
            fn distance(&self, root: i64, v: i64) -> u64 {
                let d = (v - root).rem_euclid(self.0);
                d.min(self.0 - d) as u64
            }
            fn on_ray(&self, _ray: (i64, i64), _w: i64) -> bool {
                false
            }
            fn cover(&self, _ray: (i64, i64), _tail: (i64, i64)) -> Cover {
                Cover::Partial
            }
            fn translation_invariant(&self, _root: i64, _tail: (i64, i64)) -> bool {
                false
            }
        }
        let sys = Cycle(7);
        assert_eq!(truncated_return_series(&sys, 0, 10, 30).unwrap(), (1..=30).collect::<Vec<_>>());
        let state = transfinite_run(&sys, 0, 50, &EscapePolicy::default()).unwrap();
        assert_eq!(state.i_n(50), 0);
        let _ = examples::two_cycle();
    }

    /// Monotonicity in d and domination by the infinite walk.
    fn monotone_and_dominated<S: RotorSystem>(sys: &S, a: S::Vertex) {
        let n = 50;
        let infinite = transfinite_run(sys, a, n, &EscapePolicy::default()).unwrap();
        let mut prev: Option<Vec<u64>> = None;
        for d in 1..=64usize {
            let series = truncated_return_series(sys, a, d, n).unwrap();
            for k in 1..=n {
                assert!(series[(k - 1) as usize] <= infinite.r_n(k), "d={d} n={k}");
            }
            if let Some(prev) = &prev {
                for k in 0..n as usize {
                    assert!(series[k] >= prev[k], "d={d} n={}", k + 1);
                }
            }
            prev = Some(series);
        }
    }

    #[test]
    fn monotone_on_line() {
        monotone_and_dominated(&LineRotors::simple_all_right(), 0);
    }

    #[test]
    fn monotone_on_lattice() {
        monotone_and_dominated(&LatticeRotors::all_east(), p(0, 0));
    }

    #[test]
    fn truncation_stabilises_to_infinite_walk() {
        let sys = LineRotors::simple_all_right();
        let n = 40;
        let infinite = transfinite_run(&sys, 0, n, &EscapePolicy::default()).unwrap();
        let series = truncated_return_series(&sys, 0, 200, n).unwrap();
        for k in 1..=n {
            assert_eq!(series[(k - 1) as usize], infinite.r_n(k));
        }
    }

    #[test]
    fn escape_probabilities_match_gamblers_ruin() {
        let srw = LineRotors::simple_all_right();
        for d in 1..=12 {
            assert_eq!(truncated_escape_prob(&srw, 0, d).unwrap(), ratio(1, d as i64));
        }
        let drift = LineRotors::drifted_all_right(1, 2);
        for d in 1..=12i64 {
            let right = gamblers_ruin(2, 3, 1, d);
            let left = gamblers_ruin(1, 3, 1, d);
            let expected = ratio(2, 3) * right + ratio(1, 3) * left;
            assert_eq!(truncated_escape_prob(&drift, 0, d as usize).unwrap(), expected);
        }
    }

    #[test]
    fn density_on_recurrent_line() {
        let sys = LineRotors::simple_all_right();
        let report = verify_escape_density(&sys, 0, 2000, &[2, 4, 8, 16, 32, 64], &EscapePolicy::default()).unwrap();
        assert!(report.ratio < 0.05);
        assert_eq!(report.estimate, ratio(1, 64));
        for pair in report.truncations.windows(2) {
            assert!(pair[1].1 <= pair[0].1);
        }
    }

    #[test]
    fn density_on_drifted_line() {
        let sys = LineRotors::drifted_all_right(1, 2);
        let report = verify_escape_density(&sys, 0, 2000, &[2, 4, 8, 16, 32, 64], &EscapePolicy::default()).unwrap();
        let limit = to_f64(&ratio(1, 3));
        assert!((to_f64(&report.estimate) - limit).abs() < 1e-12);
        assert!(report.within(2.0), "I_n/n = {}", report.ratio);
        assert!(report.ratio > 0.3, "escapes should be frequent: {}", report.ratio);
    }

    #[test]
    fn drift_potentials_closed_forms() {
        let sys = DriftLine::new(2, 1, 0);
        // h for b = 2, c = −1: h(0) = 2/5, h(1) = 4/5, geometric beyond b, zero beyond c.
        let h = sys.hitting_prob(2, -1);
        assert_eq!(h.get(0), &ratio(2, 5));
        assert_eq!(h.get(1), &ratio(4, 5));
        assert_eq!(h.at(3), ratio(1, 2));
        assert_eq!(h.at(4), ratio(1, 4));
        assert_eq!(h.at(9), ratio(1, 128));
        assert!(h.at(-3).is_zero());
        let k1 = sys.k1(&h, 2, -1);
        assert_eq!(k1.value, ratio(14, 5));
        // Expected visits to 0 from 0: 1 / P_0(never return) = 1/(1/2).
        let g = sys.expected_visits(0);
        assert_eq!(g.get(0), &int(2));
        assert_eq!(g.get(1), &int(1));
        assert_eq!(g.at(3), ratio(1, 4));
        assert_eq!(g.at(-3), ratio(1, 4));
    }

    /// The window potentials agree with absorbing truncations far out.
    #[test]
    fn drift_potentials_match_truncations() {
        use crate::chain::ChainBuilder;
        use crate::potential::{expected_visits, solve_hitting_prob_sets};
        let sys = DriftLine::new(2, 1, 0);
        let big = 40i64;
        let mut builder = ChainBuilder::new();
        for v in -big..=big {
            builder.vertex(&v.to_string()).unwrap();
        }
        for v in -big..=big {
            if v.abs() == big {
                builder.edge(&v.to_string(), &v.to_string(), int(1)).unwrap();
            } else {
                for (w, q) in sys.transitions(v) {
                    builder.edge(&v.to_string(), &w.to_string(), q).unwrap();
                }
            }
        }
        let chain = builder.build().unwrap();
        let id = |v: i64| chain.id(&v.to_string()).unwrap();
        let h = sys.hitting_prob(1, -2);
        let exact = solve_hitting_prob_sets(&chain, &[id(1)], &[id(-2), id(-big), id(big)]).unwrap();
        for v in -h.window..=h.window {
            assert!((to_f64(h.get(v)) - to_f64(exact.get(id(v)))).abs() < 1e-9, "h({v})");
        }
        let g = sys.expected_visits(1);
        let exact = expected_visits(&chain, id(1)).unwrap();
        for v in -g.window..=g.window {
            assert!((to_f64(g.get(v)) - to_f64(exact.get(id(v)))).abs() < 1e-9, "g({v})");
        }
    }

    #[test]
    fn hitting_from_infinity_holds() {
        let sys = DriftLine::new(2, 1, 0);
        let report = verify_hitting_from_infinity(&sys, 0, 2, -1, 1000, &EscapePolicy::default()).unwrap();
        assert_eq!(report.steps_checked, 1000);
        assert!(report.passed(), "{:?}", report.first_violation());
        for r0 in 1..3 {
            let sys = DriftLine::new(2, 1, r0);
            let report = verify_hitting_from_infinity(&sys, 1, 3, -2, 500, &EscapePolicy::default()).unwrap();
            assert!(report.passed());
        }
    }

    #[test]
    fn visits_from_infinity_holds() {
        for r0 in 0..3 {
            let sys = DriftLine::new(2, 1, r0);
            let report = verify_visits_from_infinity(&sys, 0, 1, 1000, &EscapePolicy::default()).unwrap();
            assert!(report.passed(), "r0={r0}: {:?}", report.first_violation());
        }
    }

    #[test]
    fn undecided_runs_are_reported() {
        // After its single escape the simple walk zig-zags with growing range
        // and never certifies again.
        let sys = LineRotors::simple_all_right();
        let policy = EscapePolicy {
            d0: 1,
            d_max: 4,
            step_budget: 1 << 20,
        };
        match transfinite_run(&sys, 0, 1000, &policy).unwrap_err() {
            TransfiniteError::Undecided { run, reach, partial, .. } => {
                assert_eq!(run, 1);
                assert_eq!(reach, 4);
                assert_eq!(partial.runs, 1);
                assert!(partial.returns() > 1);
            }
            other => panic!("unexpected {other}"),
        }
        let policy = EscapePolicy {
            step_budget: 50,
            ..EscapePolicy::default()
        };
        assert!(matches!(
            transfinite_run(&sys, 0, 1000, &policy),
            Err(TransfiniteError::Budget { budget: 50, .. })
        ));
    }

    #[test]
    fn csv_series() {
        let sys = LineRotors::simple_all_right();
        let state = transfinite_run(&sys, 0, 4, &EscapePolicy::default()).unwrap();
        let csv = state.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], SERIES_HEADER);
        assert_eq!(lines[1], "1,1,0,1.000000");
        assert_eq!(lines.len(), 5);
    }
}
