mod common;

use gatar::agent::{default_specs, observe, AgentKind, AgentState};
use gatar::grid::{Cell, Dims};
use gatar::oracle::{brute_force_optimal, expert_greedy, random_select, CostMatrix};
use gatar::world::GridWorld;

#[test]
fn expert_against_exhaustive_enumeration() {
    let mut optimal = 0;
    for seed in 0..2000 {
        let inst = common::tiny_instance(seed);
        let (targets, costs) = common::pooled_costs(&inst);
        let matrix = CostMatrix::team(&inst.agents, &inst.observations).unwrap();
        assert_eq!(matrix.targets, targets);
        assert_eq!(matrix.costs, costs, "seed {seed}");

        let greedy = expert_greedy(&inst.agents, &inst.observations).unwrap();
        assert_eq!(greedy, expert_greedy(&inst.agents, &inst.observations).unwrap());
        assert!(greedy.is_valid());
        for (a, t) in greedy.targets.iter().enumerate() {
            match t {
                Some(t) => assert!(inst.observations.iter().any(|o| o.seen_targets.contains(t))),
                // an idle agent has no finite cost to any unclaimed target
                None => assert!(targets.iter().enumerate().all(|(k, c)| greedy.targets.contains(&Some(*c))
                    || !costs[a][k].is_finite())),
            }
        }

        let best = common::enumerate_optimum(&costs, targets.len());
        assert!(common::objective_not_better(greedy.objective(), best), "seed {seed}");
        let brute = brute_force_optimal(&inst.agents, &inst.observations).unwrap();
        assert_eq!(brute.assigned(), best.0);
        assert!((brute.total_cost() - best.1).abs() < 1e-9);
        optimal += usize::from(greedy.assigned() == best.0 && (greedy.total_cost() - best.1).abs() < 1e-9);
    }
    assert!(optimal > 1000, "greedy optimal on only {optimal} of 2000");
}

#[test]
fn random_select_is_uniform() {
    let targets: Vec<Cell> = (0..5).map(|i| Cell::new(i, 0)).collect();
    let world = GridWorld::new(Dims::new(5, 3), Default::default(), targets.clone(), None, 0).unwrap();
    let agent = AgentState::new(0, default_specs(AgentKind::Uav), Cell::new(2, 2));
    let obs = observe(&world, &agent);
    assert_eq!(obs.seen_targets, targets);
    let draws = 10_000;
    let mut counts = [0usize; 5];
    for seed in 0..draws {
        let t = random_select(&agent, &obs, seed).unwrap();
        counts[t.x] += 1;
    }
    let (p, n) = (0.2, draws as f64);
    let sigma = (n * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n * p).abs() <= 3.0 * sigma, "{counts:?}");
    }
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - n * p).powi(2) / (n * p)).sum();
    // 4 degrees of freedom, 99.9th percentile
    assert!(chi2 < 18.47, "chi2 {chi2}");
}
