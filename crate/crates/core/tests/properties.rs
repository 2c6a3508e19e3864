use culturenet::community::girvan_newman;
use culturenet::dynamics::{biased_step, neutral_step, transition_matrix, StepClock};
use culturenet::rng::seeded;
use culturenet::stats::conditional_chi_squared;
use culturenet::{
    chi_squared, connected_components, contingency_from_state, generate_planted_partition, mixing_summary,
    modularity, permutation_test_conditional, run, BiasMatrix, ConnectivityPolicy, CulturalState, GeneratorParams,
    Graph, Partition, RunConfig, SocialTypes, Stepper,
};
use proptest::prelude::*;

fn graph_strategy(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..=max_n).prop_flat_map(|n| {
        let pairs = n * (n - 1) / 2;
        proptest::collection::vec(any::<bool>(), pairs).prop_map(move |mask| {
            let all = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v)));
            Graph::from_edges(n, all.zip(mask).filter(|(_, keep)| *keep).map(|(e, _)| e)).unwrap()
        })
    })
}

fn labelled(max_n: usize) -> impl Strategy<Value = (Graph, SocialTypes, CulturalState)> {
    graph_strategy(max_n).prop_flat_map(|g| {
        let n = g.node_count();
        (
            Just(g),
            proptest::collection::vec(0u8..2, n),
            proptest::collection::vec(0u8..2, n),
        )
            .prop_map(|(g, t, s)| (g, SocialTypes::new(t).unwrap(), CulturalState::new(s).unwrap()))
    })
}

fn bias_strategy() -> impl Strategy<Value = BiasMatrix> {
    proptest::array::uniform2(proptest::array::uniform2(0.05f64..=1.0)).prop_map(|m| BiasMatrix::new(m).unwrap())
}

fn is_partition_of(p: &Partition, n: usize) -> bool {
    let mut seen = vec![false; n];
    for block in p.blocks() {
        if block.is_empty() {
            return false;
        }
        for &v in block {
            if v >= n || seen[v] {
                return false;
            }
            seen[v] = true;
        }
    }
    seen.into_iter().all(|s| s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_graphs_are_simple_and_symmetric(
        n in 2usize..60, pw in 0.0f64..=1.0, pb in 0.0f64..=1.0, seed in any::<u64>()
    ) {
        let mut params = GeneratorParams::new(n, pw, pb, seed);
        params.connectivity = ConnectivityPolicy::AllowDisconnected;
        let (g, types) = generate_planted_partition(&params).unwrap();
        prop_assert_eq!(types.len(), n);
        let degree_sum: usize = (0..n).map(|u| g.degree(u)).sum();
        prop_assert_eq!(degree_sum, 2 * g.edge_count());
        for u in 0..n {
            prop_assert!(!g.neighbors(u).contains(&u));
            let mut ns = g.neighbors(u).to_vec();
            ns.dedup();
            prop_assert_eq!(ns.len(), g.degree(u));
            for &v in g.neighbors(u) {
                prop_assert!(g.neighbors(v).contains(&u));
            }
        }
    }

    #[test]
    fn mixing_matrix_is_a_symmetric_distribution((g, types, _) in labelled(10)) {
        prop_assume!(g.edge_count() > 0);
        let m = mixing_summary(&g, &types).unwrap();
        let total: f64 = m.e.iter().flatten().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!((m.e[0][1] - m.e[1][0]).abs() < 1e-15);
        for i in 0..2 {
            prop_assert!((m.a[i] - m.e[i][0] - m.e[i][1]).abs() < 1e-15);
        }
        // relabelling the types permutes e but leaves r unchanged
        let swapped = mixing_summary(&g, &types.swapped()).unwrap();
        match (m.r, swapped.r) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a.is_none(), b.is_none()),
        }
        if let Some(r) = m.r {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn a_step_copies_at_most_one_neighbour(
        (g, types, state) in labelled(10), bias in bias_strategy(), seed in any::<u64>()
    ) {
        let mut rng = seeded(seed);
        let mut clock = StepClock::new(g.node_count());
        let mut s = state.clone();
        for _ in 0..50 {
            let before = s.clone();
            let changed = if seed % 2 == 0 {
                neutral_step(&g, &mut s, &mut clock, &mut rng)
            } else {
                biased_step(&g, &mut s, &types, &bias, &mut clock, &mut rng)
            };
            let diff: Vec<usize> = (0..g.node_count()).filter(|&i| s.get(i) != before.get(i)).collect();
            match changed {
                None => prop_assert!(diff.is_empty()),
                Some(v) => {
                    prop_assert_eq!(diff, vec![v]);
                    prop_assert!(g.neighbors(v).iter().any(|&u| before.get(u) == s.get(v)));
                }
            }
        }
        prop_assert_eq!(clock.steps, 50);
        prop_assert_eq!(clock.sweeps(), 50.0 / g.node_count() as f64);
    }

    #[test]
    fn componentwise_homogeneous_states_are_fixed(
        g in graph_strategy(10), bias in bias_strategy(), seed in any::<u64>()
    ) {
        let n = g.node_count();
        let mut traits = vec![0u8; n];
        for (k, comp) in connected_components(&g).iter().enumerate() {
            for &v in comp {
                traits[v] = (seed.rotate_left(k as u32) & 1) as u8;
            }
        }
        let types = SocialTypes::new((0..n).map(|i| (i % 2) as u8).collect()).unwrap();
        let mut s = CulturalState::new(traits).unwrap();
        let frozen = s.clone();
        let mut rng = seeded(seed);
        let mut clock = StepClock::new(n);
        for _ in 0..100 {
            prop_assert_eq!(biased_step(&g, &mut s, &types, &bias, &mut clock, &mut rng), None);
        }
        prop_assert_eq!(s, frozen);
    }

    #[test]
    fn all_ones_bias_has_the_neutral_transition_matrix((g, types, _) in labelled(6)) {
        let neutral = transition_matrix(&g, &types, &Stepper::Neutral).unwrap();
        let ones = Stepper::Biased { bias: BiasMatrix::new([[1.0; 2]; 2]).unwrap() };
        let biased = transition_matrix(&g, &types, &ones).unwrap();
        for (a, b) in neutral.iter().flatten().zip(biased.iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn trajectories_conserve_population(
        (g, types, state) in labelled(12), seed in any::<u64>(), budget in 1u64..400, every in 1u64..30
    ) {
        let n = g.node_count();
        let rec = run(&g, &types, state, Stepper::Neutral, RunConfig::new(budget, every), &mut seeded(seed)).unwrap();
        prop_assert!(rec.samples.windows(2).all(|w| w[0].step < w[1].step));
        for s in &rec.samples {
            prop_assert_eq!(s.table.total(), n as u64);
            prop_assert!(s.chi2 >= 0.0);
            prop_assert!(s.step <= budget);
        }
        if let Some(step) = rec.absorption_step() {
            prop_assert!(step <= budget);
            prop_assert_eq!(rec.last().unwrap().step, step);
        }
    }

    #[test]
    fn girvan_newman_history_is_consistent(g in graph_strategy(9)) {
        let n = g.node_count();
        let (dendrogram, chosen) = girvan_newman(&g);
        prop_assert!(is_partition_of(&chosen, n));
        prop_assert_eq!(dendrogram.removals.len(), g.edge_count());
        let mut last = connected_components(&g).len();
        prop_assert_eq!(dendrogram.partitions[0].len(), last);
        for step in &dendrogram.removals {
            prop_assert!(step.components >= last);
            last = step.components;
        }
        for p in &dendrogram.partitions {
            prop_assert!(is_partition_of(p, n));
        }
        prop_assert_eq!(dendrogram.partitions.last().unwrap().len(), if g.edge_count() == 0 { last } else { n });
        // every community lies inside one connected component
        let comp_of = Partition::from_blocks(n, connected_components(&g)).unwrap();
        for block in chosen.blocks() {
            prop_assert!(block.iter().all(|&v| comp_of.block_of(v) == comp_of.block_of(block[0])));
        }
        if g.edge_count() > 0 {
            let q = modularity(&g, &chosen).unwrap();
            prop_assert!(dendrogram.modularity.iter().all(|&m| m <= q + 1e-12));
            prop_assert!(modularity(&g, &Partition::single_block(n)).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_statistic_bounds((g, types, state) in labelled(12), seed in any::<u64>(), perms in 1u32..60) {
        let n = g.node_count();
        let (_, partition) = girvan_newman(&g);
        let single = conditional_chi_squared(&types, &state, &Partition::single_block(n));
        let plain = chi_squared(&contingency_from_state(&types, &state, None));
        prop_assert_eq!(single.statistic, plain.statistic);
        prop_assert_eq!(single.df, plain.df);
        let singletons = Partition::from_membership(&(0..n).collect::<Vec<_>>());
        prop_assert_eq!(conditional_chi_squared(&types, &state, &singletons).statistic, 0.0);

        let test = permutation_test_conditional(&types, &state, &partition, perms, seed).unwrap();
        prop_assert!(test.exceed <= test.permutations);
        prop_assert!(test.p_value > 0.0 && test.p_value <= 1.0);
        prop_assert_eq!(test.p_value, (test.exceed as f64 + 1.0) / (perms as f64 + 1.0));
    }
}
