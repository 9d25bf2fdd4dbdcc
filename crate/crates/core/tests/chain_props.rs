use std::collections::BTreeMap;

use lanebench_core::chain::{ChainConfig, ChainError, RawChain};
use proptest::prelude::*;

/// Random DAG: nodes are shuffled qids, edges only run from lower to higher
/// position in a hidden order.
fn dag() -> impl Strategy<Value = (Vec<u32>, Vec<(u32, u32)>)> {
    (1usize..=12)
        .prop_flat_map(|n| {
            let ids = proptest::sample::subsequence((1u32..=60).collect::<Vec<_>>(), n).prop_shuffle();
            let bits = proptest::collection::vec(any::<bool>(), n * (n - 1) / 2);
            (ids, bits, Just(n))
        })
        .prop_flat_map(|(hidden, bits, n)| {
            let mut edges = Vec::new();
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if bits[k] {
                        edges.push((hidden[i], hidden[j]));
                    }
                    k += 1;
                }
            }
            (Just(hidden).prop_shuffle(), Just(edges))
        })
}

fn raw(nodes: &[u32], edges: &[(u32, u32)]) -> RawChain {
    let mut map: BTreeMap<String, Vec<u32>> = BTreeMap::new();
    for (a, b) in edges {
        map.entry(a.to_string()).or_default().push(*b);
    }
    RawChain { nodes: nodes.to_vec(), edges: map, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn schedules_are_topological((nodes, edges) in dag()) {
        let cfg = ChainConfig::from_raw(&raw(&nodes, &edges)).unwrap();
        let plan = cfg.plan();
        prop_assert!(plan.respects(&cfg));
        let pos = |q: u32| plan.order.iter().position(|x| *x == q).unwrap();
        for (a, b) in &edges {
            prop_assert!(pos(*a) < pos(*b));
        }
        // Unconstrained prefix follows NODE order.
        if edges.is_empty() {
            prop_assert_eq!(&plan.order, &nodes);
        }
    }

    #[test]
    fn back_edges_are_rejected((nodes, edges) in dag(), pick in any::<prop::sample::Index>()) {
        prop_assume!(!edges.is_empty());
        let (a, b) = edges[pick.index(edges.len())];
        let mut with_cycle = edges.clone();
        with_cycle.push((b, a));
        match ChainConfig::from_raw(&raw(&nodes, &with_cycle)) {
            Err(ChainError::Cycle(c)) => {
                prop_assert!(c.len() >= 3);
                prop_assert_eq!(c.first(), c.last());
                for w in c.windows(2) {
                    prop_assert!(with_cycle.contains(&(w[0], w[1])));
                }
            }
            other => prop_assert!(false, "expected a cycle error, got {:?}", other),
        }
    }
}

#[test]
fn self_loop_is_a_cycle() {
    let e = ChainConfig::from_raw(&raw(&[4], &[(4, 4)])).unwrap_err();
    assert_eq!(e, ChainError::Cycle(vec![4, 4]));
}
