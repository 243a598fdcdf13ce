//! Fixtures and independent oracles shared by integration tests and the
//! acceptance gate.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use gatar::agent::{default_specs, observe, AgentKind, AgentState, Observation};
use gatar::grid::{Cell, Dims};
use gatar::world::GridWorld;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct TinyInstance {
    pub world: GridWorld,
    pub agents: Vec<AgentState>,
    pub observations: Vec<Observation>,
}

/// A 7x7 map with random obstacles, 1-3 agents of mixed kinds and 1-4 targets.
pub fn tiny_instance(seed: u64) -> TinyInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = Dims::new(7, 7);
    let mut cells: Vec<Cell> = dims.cells().collect();
    cells.shuffle(&mut rng);
    let density = rng.random_range(0.0..0.35);
    let n_obs = (density * 49.0) as usize;
    let (n_agents, n_targets) = (rng.random_range(1..=3), rng.random_range(1..=4));
    let obstacles: BTreeSet<Cell> = cells[..n_obs].iter().copied().collect();
    let agent_cells = &cells[n_obs..n_obs + n_agents];
    let targets = cells[n_obs + n_agents..n_obs + n_agents + n_targets].to_vec();
    let world = GridWorld::new(dims, obstacles, targets, None, seed).unwrap();
    let agents: Vec<AgentState> = agent_cells
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let kind = if rng.random_bool(0.5) { AgentKind::Uav } else { AgentKind::Ugv };
            AgentState::new(i, default_specs(kind), c)
        })
        .collect();
    let observations = agents.iter().map(|a| observe(&world, a)).collect();
    TinyInstance { world, agents, observations }
}

/// Plain BFS over the pooled view; travel time per `(agent, target)`.
pub fn pooled_costs(inst: &TinyInstance) -> (Vec<Cell>, Vec<Vec<f64>>) {
    let dims = inst.world.dims();
    let mut visible = vec![false; dims.area()];
    let mut obstacles = BTreeSet::new();
    let mut targets = BTreeSet::new();
    for o in &inst.observations {
        for (v, &s) in visible.iter_mut().zip(&o.visible) {
            *v |= s;
        }
        obstacles.extend(o.seen_obstacles.iter().copied());
        targets.extend(o.seen_targets.iter().copied());
    }
    let targets: Vec<Cell> = targets.into_iter().collect();
    let costs = inst
        .agents
        .iter()
        .map(|a| {
            let flies = a.spec.flies();
            let mut dist = vec![u32::MAX; dims.area()];
            dist[dims.index(a.position)] = 0;
            let mut q = VecDeque::from([a.position]);
            while let Some(c) = q.pop_front() {
                let d = dist[dims.index(c)];
                if d == a.spec.op_range {
                    continue;
                }
                let (x, y) = (c.x as i64, c.y as i64);
                for (nx, ny) in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
                    if nx < 0 || ny < 0 || nx >= dims.width as i64 || ny >= dims.height as i64 {
                        continue;
                    }
                    let n = Cell::new(nx as usize, ny as usize);
                    let i = dims.index(n);
                    if visible[i] && (flies || !obstacles.contains(&n)) && dist[i] == u32::MAX {
                        dist[i] = d + 1;
                        q.push_back(n);
                    }
                }
            }
            targets
                .iter()
                .map(|t| match dist[dims.index(*t)] {
                    u32::MAX => f64::INFINITY,
                    l => l as f64 / a.spec.speed as f64,
                })
                .collect()
        })
        .collect();
    (targets, costs)
}

/// Best `(assigned count, total cost)` over every injective partial mapping,
/// enumerated as one choice per agent in `{none} + targets`.
pub fn enumerate_optimum(costs: &[Vec<f64>], n_targets: usize) -> (usize, f64) {
    let n = costs.len();
    let choices = n_targets + 1;
    let mut best = (0usize, 0.0f64);
    for code in 0..choices.pow(n as u32) {
        let mut c = code;
        let mut used = vec![false; n_targets];
        let (mut count, mut total, mut ok) = (0, 0.0, true);
        for row in costs {
            let pick = c % choices;
            c /= choices;
            if pick == n_targets {
                continue;
            }
            let t = pick;
            if used[t] || !row[t].is_finite() {
                ok = false;
                break;
            }
            used[t] = true;
            count += 1;
            total += row[t];
        }
        if ok && (count > best.0 || (count == best.0 && total < best.1)) {
            best = (count, total);
        }
    }
    best
}

/// Lexicographic `a >= b` on `(more assigned, then lower cost)`, with a
/// relative tolerance on cost.
pub fn objective_not_better(a: (usize, f64), b: (usize, f64)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 >= b.1 - 1e-9 * b.1.abs().max(1.0))
}

/// Nodes within `hops` of `source` by BFS on adjacency lists.
pub fn hop_ball(neighbors: &[Vec<usize>], source: usize, hops: usize) -> BTreeSet<usize> {
    let mut dist = vec![usize::MAX; neighbors.len()];
    dist[source] = 0;
    let mut q = VecDeque::from([source]);
    while let Some(u) = q.pop_front() {
        if dist[u] == hops {
            continue;
        }
        for &v in &neighbors[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    (0..neighbors.len()).filter(|&v| dist[v] != usize::MAX).collect()
}

/// Random symmetric adjacency lists on `n` nodes.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<Vec<usize>> {
    let mut nbrs = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                nbrs[i].push(j);
                nbrs[j].push(i);
            }
        }
    }
    nbrs
}
