//! Many particles routed through a finite chain with absorbing sinks.
//!
//! Firing a vertex moves one of its particles one rotor step. Whatever order
//! the particles are fired in, the particles end up in the same sinks, the
//! rotors in the same positions and every vertex fires the same number of
//! times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chain::{ChainError, ChainSpec, MarkovChain, VertexId};
use crate::rotor::{MechanismError, OrderingPolicy, RotorConfiguration, RotorMechanism};

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("{0} is listed as a sink but p(s,s) != 1")]
    NotAbsorbing(String),
    #[error("{0} cannot reach a sink")]
    Trapped(String),
    #[error("no sinks given")]
    NoSinks,
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

/// A chain with absorbing sinks, particles on its vertices and a rotor configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinkSystem {
    pub chain: MarkovChain,
    pub mech: RotorMechanism,
    pub sinks: Vec<VertexId>,
    pub particles: Vec<u64>,
    pub rotors: RotorConfiguration,
}

impl SinkSystem {
    /// No particles, every rotor at residue 0.
    pub fn new(chain: MarkovChain, mech: RotorMechanism, sinks: Vec<VertexId>) -> Result<Self, SinkError> {
        if sinks.is_empty() {
            return Err(SinkError::NoSinks);
        }
        for &s in &sinks {
            if chain.row(s) != [(s, num::BigRational::from_integer(1.into()))] {
                return Err(SinkError::NotAbsorbing(chain.label(s).to_string()));
            }
        }
        if let Some(u) = chain.can_reach(&sinks).iter().position(|r| !r) {
            return Err(SinkError::Trapped(chain.label(VertexId(u)).to_string()));
        }
        let rotors = RotorConfiguration::uniform(&mech, 0);
        let particles = vec![0; chain.len()];
        Ok(SinkSystem {
            chain,
            mech,
            sinks,
            particles,
            rotors,
        })
    }

    /// Read the JSON chain format with its `sinks` list; rotors ordered by vertex id.
    pub fn from_json(text: &str) -> Result<Self, SinkError> {
        let spec = ChainSpec::from_json(text)?;
        let chain = spec.build()?;
        let sinks = spec
            .sinks
            .iter()
            .map(|s| chain.id(s))
            .collect::<Result<Vec<_>, _>>()?;
        let mech = RotorMechanism::derive(&chain, &OrderingPolicy::ById)?;
        SinkSystem::new(chain, mech, sinks)
    }

    pub fn with_particles(mut self, v: VertexId, n: u64) -> Self {
        self.particles[v.0] += n;
        self
    }

    pub fn with_rotors(mut self, rotors: RotorConfiguration) -> Self {
        self.rotors = rotors;
        self
    }

    fn is_sink(&self, v: VertexId) -> bool {
        self.sinks.contains(&v)
    }
}

/// Which active vertex fires next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiringOrder {
    /// The active vertex with the smallest id.
    LowestFirst,
    /// The active vertex with the largest id.
    HighestFirst,
    /// Follow one particle until it sinks before touching the next.
    OneAtATime,
    /// A uniformly random active vertex from a seeded generator.
    Random(u64),
}

/// The state once every particle sits in a sink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Routed {
    /// Particles per vertex; nonzero only at sinks.
    pub particles: Vec<u64>,
    pub rotors: RotorConfiguration,
    pub firings: Vec<u64>,
}

impl Routed {
    pub fn at(&self, v: VertexId) -> u64 {
        self.particles[v.0]
    }
}

/// Route every particle into a sink.
pub fn abelian_route(sys: &SinkSystem, order: FiringOrder) -> Routed {
    let mut particles = sys.particles.clone();
    let mut rotors = sys.rotors.clone();
    let mut firings = vec![0u64; sys.chain.len()];
    let mut rng = match order {
        FiringOrder::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let mut carried: Option<VertexId> = None;
    loop {
        let u = match order {
            FiringOrder::OneAtATime if carried.is_some() => carried.unwrap(),
            _ => {
                let active: Vec<VertexId> = sys
                    .chain
                    .vertices()
                    .filter(|&v| particles[v.0] > 0 && !sys.is_sink(v))
                    .collect();
                match (order, active.as_slice()) {
                    (_, []) => break,
                    (FiringOrder::HighestFirst, list) => *list.last().unwrap(),
                    (FiringOrder::Random(_), list) => list[rng.as_mut().unwrap().gen_range(0..list.len())],
                    (_, list) => list[0],
                }
            }
        };
        let d = sys.mech.degree(u);
        let r = &mut rotors.residues[u.0];
        *r = (*r + 1) % d;
        let v = sys.mech.successor(u, *r);
        particles[u.0] -= 1;
        particles[v.0] += 1;
        firings[u.0] += 1;
        carried = (!sys.is_sink(v)).then_some(v);
    }
    Routed {
        particles,
        rotors,
        firings,
    }
}

/// Whether all routing orders in `orders` agree.
pub fn orders_agree(sys: &SinkSystem, orders: &[FiringOrder]) -> bool {
    let mut results = orders.iter().map(|&o| abelian_route(sys, o));
    match results.next() {
        Some(first) => results.all(|r| r == first),
        None => true,
    }
}
