//! Rotor walk on `ℤ²` with targets `b`, `c` sent back to `a`.
//!
//! The walk uses the anticlockwise mechanism and the sector-shaped initial
//! rotors of [`z2_initial_rotor`]. Arriving at `b` or `c` counts a hit; the
//! next step returns the particle to `a`. When `a` coincides with `b` or `c`
//! the lattice point is split: arrivals land on the target copy and departures
//! leave from the outgoing copy, which carries the rotor.

use std::fmt::Write as _;

use thiserror::Error;

use crate::kernel::z2_hitting_prob;
use crate::lattice::{layer, z2_initial_rotor, z2_successor, Grid, LatticePoint};

/// Step budget used by [`run_z2_experiment`].
pub const DEFAULT_BUDGET: u64 = 2_000_000_000;

pub const CSV_HEADER: &str = "n,hits_b,t,abs_discrepancy,discrepancy_times_n_over_ln_n";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum Z2Error {
    #[error("b and c must differ")]
    SameTargets,
    #[error("step budget of {steps} exhausted after {hits} of {target} hits")]
    Budget { steps: u64, hits: u64, target: u64 },
}

/// Where the particle is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Site {
    /// An ordinary lattice point (the outgoing copy, if it is the split point).
    Point(LatticePoint),
    B,
    C,
}

const UNTOUCHED: u8 = u8::MAX;

/// The walk's state.
#[derive(Debug, Clone)]
pub struct Z2Walk {
    pub a: LatticePoint,
    pub b: LatticePoint,
    pub c: LatticePoint,
    pub t: u64,
    pub site: Site,
    pub hits_b: u64,
    pub hits_c: u64,
    rotors: Grid<u8>,
}

impl Z2Walk {
    pub fn new(a: LatticePoint, b: LatticePoint, c: LatticePoint) -> Result<Self, Z2Error> {
        if b == c {
            return Err(Z2Error::SameTargets);
        }
        Ok(Z2Walk {
            a,
            b,
            c,
            t: 0,
            site: Site::Point(a),
            hits_b: 0,
            hits_c: 0,
            rotors: Grid::new(UNTOUCHED),
        })
    }

    /// Whether `a` shares its point with a target.
    pub fn split(&self) -> bool {
        self.a == self.b || self.a == self.c
    }

    pub fn rotor(&self, p: LatticePoint) -> usize {
        match self.rotors.get(p) {
            UNTOUCHED => z2_initial_rotor(p),
            r => r as usize,
        }
    }

    /// Points whose rotor has been turned at least once.
    pub fn touched(&self) -> Vec<LatticePoint> {
        self.rotors.touched().map(|(p, _)| p).collect()
    }

    /// The lattice point under the particle.
    pub fn position(&self) -> LatticePoint {
        match self.site {
            Site::Point(p) => p,
            Site::B => self.b,
            Site::C => self.c,
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits_b + self.hits_c
    }

    fn arrive(&mut self, q: LatticePoint) -> Site {
        if q == self.b {
            self.hits_b += 1;
            Site::B
        } else if q == self.c {
            self.hits_c += 1;
            Site::C
        } else {
            Site::Point(q)
        }
    }

    pub fn step(&mut self) {
        self.t += 1;
        self.site = match self.site {
            Site::B | Site::C => Site::Point(self.a),
            Site::Point(p) => {
                let r = (self.rotor(p) + 1) % 4;
                self.rotors.set(p, r as u8);
                self.arrive(z2_successor(p, r))
            }
        };
    }
}

/// Layer bookkeeping: new layers are entered only after a visit to
/// `a`, and no site is visited more than four times between visits to `a`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LayerAudit {
    pub layers_entered: u64,
    pub entries_without_visit: u64,
    pub max_visits_between: u32,
    pub excess_visits: u64,
}

impl LayerAudit {
    pub fn passed(&self) -> bool {
        self.entries_without_visit == 0 && self.excess_visits == 0
    }
}

/// One row of the experiment: the state at the `n`-th hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Z2Sample {
    pub n: u64,
    pub hits_b: u64,
    pub t: u64,
}

#[derive(Debug, Clone)]
pub struct Z2Experiment {
    pub a: LatticePoint,
    pub b: LatticePoint,
    pub c: LatticePoint,
    pub target: u64,
    /// `h` at the departure copy of `a`.
    pub h_a: f64,
    pub samples: Vec<Z2Sample>,
    pub audit: LayerAudit,
    /// Largest `|LHS − RHS| / max(t, 1)` of the potential identity at the checked hits.
    pub identity_error: f64,
    pub identity_checks: u64,
    pub walk: Z2Walk,
}

impl Z2Experiment {
    /// `max |h(a)·n − n_t(b)| / ln n` over samples with `lo ≤ n ≤ hi`.
    pub fn fitted_c_over(&self, lo: u64, hi: u64) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.n >= lo.max(2) && s.n <= hi)
            .map(|s| (self.h_a * s.n as f64 - s.hits_b as f64).abs() / (s.n as f64).ln())
            .fold(0.0, f64::max)
    }

    /// `max t / n³` over samples with `lo ≤ n ≤ hi`.
    pub fn fitted_c_prime_over(&self, lo: u64, hi: u64) -> f64 {
        self.samples
            .iter()
            .filter(|s| s.n >= lo && s.n <= hi)
            .map(|s| s.t as f64 / (s.n as f64).powi(3))
            .fold(0.0, f64::max)
    }

    pub fn fitted_c(&self) -> f64 {
        self.fitted_c_over(10, self.target)
    }

    pub fn fitted_c_prime(&self) -> f64 {
        self.fitted_c_prime_over(10, self.target)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let n = s.n as f64;
            let disc = (self.h_a - s.hits_b as f64 / n).abs();
            let scaled = if s.n > 1 { disc * n / n.ln() } else { f64::INFINITY };
            writeln!(out, "{},{},{},{},{}", s.n, s.hits_b, s.t, disc, scaled).unwrap();
        }
        out
    }
}

/// `h` on the walk's sites.
struct Harmonic {
    b: LatticePoint,
    c: LatticePoint,
    a: LatticePoint,
    split: bool,
    h_a: f64,
}

impl Harmonic {
    fn new(walk: &Z2Walk) -> Self {
        let (a, b, c) = (walk.a, walk.b, walk.c);
        let split = walk.split();
        let h_a = if split {
            a.neighbours().iter().map(|&v| z2_hitting_prob(v, b, c)).sum::<f64>() / 4.0
        } else {
            z2_hitting_prob(a, b, c)
        };
        Harmonic { b, c, a, split, h_a }
    }

    fn at(&self, site: Site) -> f64 {
        match site {
            Site::B => 1.0,
            Site::C => 0.0,
            Site::Point(p) if self.split && p == self.a => self.h_a,
            Site::Point(p) => z2_hitting_prob(p, self.b, self.c),
        }
    }

    /// The site a particle leaving `p` in direction `i` lands on.
    fn target(&self, p: LatticePoint, i: usize) -> Site {
        let q = z2_successor(p, i);
        if q == self.b {
            Site::B
        } else if q == self.c {
            Site::C
        } else {
            Site::Point(q)
        }
    }

    /// `φ(p, k) = Σ_{i=1}^{k} [h(p) − h(p^(i))]` for the departure site at `p`.
    fn phi(&self, p: LatticePoint, k: usize) -> f64 {
        let hp = self.at(Site::Point(p));
        (1..=k).map(|i| hp - self.at(self.target(p, i))).sum()
    }
}

/// Both sides of the potential identity for `f = h`, with `lhs` the running sum of `Δh`.
fn identity_error(walk: &Z2Walk, h: &Harmonic, lhs: f64) -> f64 {
    let mut rhs = h.at(walk.site) - h.at(Site::Point(walk.a));
    for p in walk.touched() {
        rhs += h.phi(p, walk.rotor(p)) - h.phi(p, z2_initial_rotor(p));
    }
    (lhs - rhs).abs()
}

pub fn run_z2_experiment(a: LatticePoint, b: LatticePoint, c: LatticePoint, target: u64) -> Result<Z2Experiment, Z2Error> {
    run_z2_experiment_with(a, b, c, target, DEFAULT_BUDGET, true)
}

/// Run until `n_t(b) + n_t(c) = target`, recording a sample at every hit.
///
/// With `check_identity`, the potential identity is evaluated at hits that are
/// powers of two or multiples of 50, and at the end.
pub fn run_z2_experiment_with(
    a: LatticePoint,
    b: LatticePoint,
    c: LatticePoint,
    target: u64,
    budget: u64,
    check_identity: bool,
) -> Result<Z2Experiment, Z2Error> {
    let mut walk = Z2Walk::new(a, b, c)?;
    let h = Harmonic::new(&walk);
    let mut samples = Vec::with_capacity(target as usize);
    let mut audit = LayerAudit::default();

    let mut max_layer = layer(a);
    let mut visited_a_since_entry = true;
    // Per-excursion visit counts, reset lazily by excursion number.
    let mut counts: Grid<(u32, u32)> = Grid::new((0, 0));
    let mut excursion = 1u32;

    let mut lhs = 0.0;
    let mut identity_max = 0.0f64;
    let mut identity_checks = 0;

    while walk.hits() < target {
        if walk.t >= budget {
            return Err(Z2Error::Budget {
                steps: budget,
                hits: walk.hits(),
                target,
            });
        }
        match walk.site {
            Site::B => lhs += h.h_a - 1.0,
            Site::C => lhs += h.h_a,
            Site::Point(_) => {}
        }
        let before = walk.hits();
        walk.step();

        if walk.site == Site::Point(a) {
            visited_a_since_entry = true;
            excursion += 1;
        } else {
            let p = walk.position();
            let k = layer(p);
            if k > max_layer {
                max_layer = k;
                audit.layers_entered += 1;
                if !visited_a_since_entry {
                    audit.entries_without_visit += 1;
                }
                visited_a_since_entry = false;
            }
            if let Site::Point(p) = walk.site {
                let cell = counts.get_mut(p);
                if cell.0 != excursion {
                    *cell = (excursion, 0);
                }
                cell.1 += 1;
                audit.max_visits_between = audit.max_visits_between.max(cell.1);
                if cell.1 > 4 {
                    audit.excess_visits += 1;
                }
            }
        }

        if walk.hits() > before {
            let n = walk.hits();
            samples.push(Z2Sample {
                n,
                hits_b: walk.hits_b,
                t: walk.t,
            });
            if check_identity && (n.is_power_of_two() || n % 50 == 0 || n == target) {
                identity_checks += 1;
                identity_max = identity_max.max(identity_error(&walk, &h, lhs) / walk.t.max(1) as f64);
            }
        }
    }

    Ok(Z2Experiment {
        a,
        b,
        c,
        target,
        h_a: h.h_a,
        samples,
        audit,
        identity_error: identity_max,
        identity_checks,
        walk,
    })
}
