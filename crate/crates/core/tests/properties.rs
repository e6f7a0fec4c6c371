use num::{BigRational, Signed};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rotorwalk::abelian::{orders_agree, FiringOrder, SinkSystem};
use rotorwalk::bounds::{verify_theorem, CheckpointPolicy, Setup, Theorem};
use rotorwalk::chain::{ChainSpec, VertexId};
use rotorwalk::gen::{distinct_triple, random_chain, random_sink_chain, ChainShape};
use rotorwalk::lattice::LatticePoint;
use rotorwalk::ppm::{decode_rotors, render_ppm, PixelBox};
use rotorwalk::rational::ratio;
use rotorwalk::rotor::{OrderingPolicy, RotorConfiguration, RotorMechanism, WalkState};
use rotorwalk::stack::low_discrepancy_sequence;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotor_lists_realise_rows(seed in any::<u64>(), shuffle in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chain = random_chain(&mut rng, ChainShape::default());
        let mech = RotorMechanism::derive(&chain, &OrderingPolicy::Shuffled(shuffle)).unwrap();
        for u in chain.vertices() {
            let list = mech.successors(u);
            for (v, p) in chain.row(u) {
                let hits = list.iter().filter(|w| *w == v).count() as i64;
                prop_assert_eq!(ratio(hits, list.len() as i64), p.clone());
            }
        }
    }

    #[test]
    fn every_period_of_rotor_turns_emits_the_row(seed in any::<u64>()) {
        // Each block of d(u) departures from u uses every successor exactly p(u,v)·d(u) times.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chain = random_chain(&mut rng, ChainShape::default());
        let mech = RotorMechanism::derive(&chain, &OrderingPolicy::ById).unwrap();
        let r0 = RotorConfiguration::random(&mech, &mut rng);
        let mut state = WalkState::new(VertexId(0), r0.clone());
        let mut emitted = vec![vec![0usize; chain.len()]; chain.len()];
        for _ in 0..5000 {
            let u = state.x;
            state.step(&mech);
            emitted[u.0][state.x.0] += 1;
        }
        for u in chain.vertices() {
            let d = mech.degree(u) as u64;
            let full = state.visits(u) / d;
            for (v, p) in chain.row(u) {
                let expected = p * BigRational::from_integer((full * d).into());
                let got = BigRational::from_integer(emitted[u.0][v.0].into());
                let slack = BigRational::from_integer(d.into());
                prop_assert!((got - expected).abs() <= slack);
            }
        }
    }

    #[test]
    fn json_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chain = random_chain(&mut rng, ChainShape::default());
        let text = chain.to_spec().to_json();
        let back = ChainSpec::from_json(&text).unwrap().build().unwrap();
        prop_assert_eq!(back, chain);
    }

    #[test]
    fn hitting_bound_holds_from_any_rotor_configuration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chain = random_chain(&mut rng, ChainShape { min_vertices: 3, max_vertices: 8, max_den: 6 });
        let (a, b, c) = distinct_triple(&mut rng, chain.len());
        let setup = Setup { a, b, c: Some(c) };
        let prepared = Theorem::HittingProbability.prepare(&chain, &setup).unwrap();
        let mech = RotorMechanism::derive(&prepared, &OrderingPolicy::Shuffled(seed)).unwrap();
        let r0 = RotorConfiguration::random(&mech, &mut rng);
        let rep = verify_theorem(Theorem::HittingProbability, &prepared, &mech, &r0, a, &setup, 2000, CheckpointPolicy::summary()).unwrap();
        prop_assert!(rep.passed());
    }

    #[test]
    fn routing_is_order_independent(seed in any::<u64>(), particles in 1u64..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (chain, sinks) = random_sink_chain(&mut rng, 8, 6);
        let mech = RotorMechanism::derive(&chain, &OrderingPolicy::ById).unwrap();
        let sys = SinkSystem::new(chain, mech, sinks).unwrap();
        let rotors = RotorConfiguration::random(&sys.mech, &mut rng);
        let sys = sys.with_rotors(rotors).with_particles(VertexId(0), particles);
        let orders = [FiringOrder::LowestFirst, FiringOrder::HighestFirst, FiringOrder::OneAtATime, FiringOrder::Random(seed)];
        prop_assert!(orders_agree(&sys, &orders));
    }

    #[test]
    fn prefix_discrepancy_at_most_one(weights in prop::collection::vec(1i64..=10, 1..=6)) {
        let total: i64 = weights.iter().sum();
        let p: Vec<BigRational> = weights.iter().map(|&w| ratio(w, total)).collect();
        let seq = low_discrepancy_sequence(&p).unwrap();
        prop_assert!(seq.prefix_bound_holds(2));
        let g = weights.iter().fold(total, |g, &w| num::integer::gcd(g, w));
        prop_assert_eq!(seq.period() as i64 % (total / g), 0);
    }

    #[test]
    fn ppm_round_trip(x0 in -30i64..30, y0 in -30i64..30, w in 1i64..12, h in 1i64..12, salt in 0i64..4) {
        let area = PixelBox::new(LatticePoint::new(x0, y0), LatticePoint::new(x0 + w - 1, y0 + h - 1)).unwrap();
        let rotor = |v: LatticePoint| (v.x * 3 + v.y * 5 + salt).rem_euclid(4) as usize;
        let img = render_ppm(&area, rotor);
        let decoded = decode_rotors(&img, area.min).unwrap();
        prop_assert_eq!(decoded.len() as i64, w * h);
        for (v, r) in decoded {
            prop_assert_eq!(r, rotor(v));
        }
    }
}
