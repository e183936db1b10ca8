mod common;

use std::collections::HashSet;

use common::*;
use kgcoi::chains::{find_chains, render_chains, ChainQuery};
use kgcoi::MaskSpec;
use proptest::prelude::*;

#[test]
fn liver_chains_skip_masked_edge() {
    let g = liver_kg();
    let view = g.mask(&MaskSpec::edge(CCL4, "stimulate", SLC17A5)).unwrap();
    let chains = find_chains(&view, &ChainQuery::new(CCL4, SLC17A5)).unwrap();
    assert_eq!(chains.len(), 5);
    assert!(chains.iter().all(|c| c.len() == 2));
    let text = render_chains(&chains, &g).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "(Carbon Tetrachloride, cause, Chemical and Drug Induced Liver Injury), (Chemical and Drug Induced Liver Injury, associate, SLC17A5)"
    );
    let unmasked = find_chains(&g.view(), &ChainQuery::new(CCL4, SLC17A5)).unwrap();
    assert_eq!(unmasked.len(), 6);
    assert_eq!(unmasked[0].len(), 1);
}

#[test]
fn unknown_endpoint_is_an_error() {
    let g = liver_kg();
    assert!(find_chains(&g.view(), &ChainQuery::new(CCL4, "missing")).is_err());
}

proptest! {
    #[test]
    fn limit_keeps_a_prefix(seed in 0u64..3000, limit in 1usize..10) {
        let (g, _, n) = random_graph(seed, 12, 40);
        let (a, b) = (entity_id(seed as usize % n), entity_id((seed as usize / 7 + 1) % n));
        prop_assume!(a != b);
        let all = find_chains(&g.view(), &ChainQuery::new(a.clone(), b.clone()).max_hops(3).unlimited()).unwrap();
        let some = find_chains(&g.view(), &ChainQuery::new(a, b).max_hops(3).limit(Some(limit))).unwrap();
        prop_assert_eq!(&all[..limit.min(all.len())], &some[..]);
        prop_assert!(all.windows(2).all(|w| w[0].len() <= w[1].len()));
    }

    #[test]
    fn matches_exhaustive_search(seed in 0u64..3000, k in 1usize..4) {
        let (g, triples, n) = random_graph(seed, 10, 25);
        let (from, to) = (seed as usize % n, (seed as usize / 3 + 1) % n);
        prop_assume!(from != to);
        let got: HashSet<_> = find_chains(&g.view(), &ChainQuery::new(entity_id(from), entity_id(to)).max_hops(k).unlimited())
            .unwrap()
            .into_iter()
            .collect();
        prop_assert_eq!(got, brute_force_paths(&triples, &HashSet::new(), from, to, k));
    }
}
