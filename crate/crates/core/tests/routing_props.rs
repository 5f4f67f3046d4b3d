mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use amod_core::road::{route_astar, route_dijkstra, NodeId, TrafficState};

use common::{dijkstra_times, random_graph};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn astar_matches_reference_dijkstra(seed in any::<u64>(), multiplier in 0.5f64..=2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_graph(&mut rng);
        let traffic = TrafficState::constant(multiplier).unwrap();
        let n = net.node_count() as u32;
        let src = NodeId(rng.random_range(0..n));
        let oracle = dijkstra_times(&net, multiplier, src);
        for t in 0..n {
            let got = route_astar(&net, &traffic, 0.0, src, NodeId(t)).map(|r| r.total_time_s());
            prop_assert_eq!(got, oracle[t as usize], "target {}", t);
        }
    }

    #[test]
    fn routes_follow_edges_and_accumulate_time(seed in any::<u64>(), multiplier in 0.5f64..=2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_graph(&mut rng);
        let traffic = TrafficState::constant(multiplier).unwrap();
        let n = net.node_count() as u32;
        for _ in 0..10 {
            let (s, t) = (NodeId(rng.random_range(0..n)), NodeId(rng.random_range(0..n)));
            let Some(route) = route_astar(&net, &traffic, 0.0, s, t) else {
                prop_assert!(route_dijkstra(&net, &traffic, 0.0, s, t).is_none());
                continue;
            };
            prop_assert_eq!(route.origin(), s);
            prop_assert_eq!(route.destination(), t);
            prop_assert_eq!(route.nodes().len(), route.arrival_offsets().len());
            prop_assert_eq!(route.arrival_offsets()[0], 0.0);
            let mut length = 0.0;
            for (w, off) in route.nodes().windows(2).zip(route.arrival_offsets().windows(2)) {
                let edge = net
                    .out_edges(w[0])
                    .iter()
                    .filter(|e| e.to == w[1])
                    .min_by(|a, b| (a.length_m / a.base_speed_mps).total_cmp(&(b.length_m / b.base_speed_mps)));
                prop_assert!(edge.is_some(), "no edge {:?} -> {:?}", w[0], w[1]);
                let e = edge.unwrap();
                prop_assert_eq!(off[1], off[0] + e.length_m / (e.base_speed_mps * multiplier));
                length += e.length_m;
            }
            prop_assert_eq!(route.total_time_s(), *route.arrival_offsets().last().unwrap());
            prop_assert!((route.total_length_m() - length).abs() <= 1e-6 * length.max(1.0));
        }
    }

    #[test]
    fn heavier_traffic_never_shortens_a_trip(seed in any::<u64>(), m1 in 0.5f64..=2.0, m2 in 0.5f64..=2.0) {
        let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_graph(&mut rng);
        let n = net.node_count() as u32;
        let (s, t) = (NodeId(rng.random_range(0..n)), NodeId(rng.random_range(0..n)));
        let slow = route_astar(&net, &TrafficState::constant(lo).unwrap(), 0.0, s, t);
        let fast = route_astar(&net, &TrafficState::constant(hi).unwrap(), 0.0, s, t);
        prop_assert_eq!(slow.is_some(), fast.is_some());
        if let (Some(a), Some(b)) = (slow, fast) {
            prop_assert!(a.total_time_s() >= b.total_time_s() - 1e-9 * a.total_time_s());
        }
    }
}
