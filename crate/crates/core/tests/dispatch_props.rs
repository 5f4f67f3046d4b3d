mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use amod_core::dispatch::{dispatch_baseline, dispatch_eat, DispatchConfig};
use amod_core::fleet::Strategy;
use amod_core::zones::AdjacencySchedule;

use common::{assigned_vehicle, random_adjacency, random_instance};

fn strategy() -> impl proptest::strategy::Strategy<Value = Strategy> {
    prop_oneof![Just(Strategy::Nss), Just(Strategy::Sss), Just(Strategy::Oss)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn full_adjacency_gives_the_global_nearest(seed in any::<u64>(), s in strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng);
        let mut sched = AdjacencySchedule::complete(inst.zone_count);
        let d = dispatch_eat(&inst.call, inst.ctx(), &mut sched, &DispatchConfig::new(s, true));
        prop_assert_eq!(assigned_vehicle(&d.outcome), inst.global_argmin(s));
        prop_assert!(!d.adjacency_updated);
    }

    #[test]
    fn expansion_dominates_the_baseline(seed in any::<u64>(), s in strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng);
        let sched = random_adjacency(&mut rng, inst.zone_count);
        let base = dispatch_baseline(&inst.call, inst.ctx(), &sched, &DispatchConfig::new(s, false));
        let mut grown = sched.clone();
        let eat = dispatch_eat(&inst.call, inst.ctx(), &mut grown, &DispatchConfig::new(s, true));
        if let Some(b) = base.assigned() {
            let e = eat.assigned();
            prop_assert!(e.is_some());
            prop_assert!(e.unwrap().eta_s <= b.eta_s);
        }
    }

    #[test]
    fn adjacency_only_grows(seed in any::<u64>(), s in strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng);
        let before = random_adjacency(&mut rng, inst.zone_count);
        let mut after = before.clone();
        let d = dispatch_eat(&inst.call, inst.ctx(), &mut after, &DispatchConfig::new(s, true));
        let (old, new) = (before.pairs(), after.pairs());
        prop_assert!(old.iter().all(|p| new.contains(p)));
        prop_assert_eq!(new.len() > old.len(), d.adjacency_updated);
        prop_assert!(new.len() <= old.len() + 1);
        for w in d.zones_searched.windows(2) {
            prop_assert!(w[0].is_subset(&w[1]) && w[0] != w[1]);
        }
        if let Some(first) = d.zones_searched.first() {
            prop_assert!(first.contains(&inst.call.zone));
        }
    }

    #[test]
    fn assignments_respect_the_candidate_rule(seed in any::<u64>(), s in strategy(), eat in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng);
        let mut sched = random_adjacency(&mut rng, inst.zone_count);
        let cfg = DispatchConfig::new(s, eat);
        let d = if eat {
            dispatch_eat(&inst.call, inst.ctx(), &mut sched, &cfg)
        } else {
            dispatch_baseline(&inst.call, inst.ctx(), &sched, &cfg)
        };
        if let Some(e) = d.assigned() {
            prop_assert!(amod_core::fleet::is_candidate(inst.fleet.get(e.vehicle), s));
            prop_assert!(e.eta_s >= 0.0);
            prop_assert_eq!(e.route_to_pickup.destination(), inst.call.pickup);
        }
    }
}
