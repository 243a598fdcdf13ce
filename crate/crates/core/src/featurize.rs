//! Heterogeneity-aware preprocessing: the four-channel per-agent feature map.
//!
//! | channel | content |
//! |---|---|
//! | 0 | extended cost map, `speed / (len + 1)` over mobility-respecting shortest paths |
//! | 1 | Gaussian target map, max-combined over seen targets |
//! | 2 | seen-obstacle mask |
//! | 3 | channel 0 times channel 1 |

use serde::{Deserialize, Serialize};

use crate::agent::{AgentState, Observation};
use crate::grid::{bfs_lengths, Cell, Dims};

pub const CHANNELS: usize = 4;
pub const DEFAULT_SIGMA: f64 = 1.0;

/// `4 x H x W` tensor, channel-major then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub dims: Dims,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(dims: Dims) -> Self {
        Self { dims, data: vec![0.0; CHANNELS * dims.area()] }
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let a = self.dims.area();
        &self.data[c * a..(c + 1) * a]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let a = self.dims.area();
        &mut self.data[c * a..(c + 1) * a]
    }

    pub fn at(&self, channel: usize, cell: Cell) -> f64 {
        self.channel(channel)[self.dims.index(cell)]
    }

    /// Channel 3 equals channel 0 times channel 1 exactly.
    pub fn product_identity_holds(&self) -> bool {
        let (c0, c1, c3) = (self.channel(0), self.channel(1), self.channel(3));
        (0..c0.len()).all(|i| c3[i] == c0[i] * c1[i])
    }
}

/// Shortest 4-connected path lengths from the agent through cells it can both
/// see and traverse, capped at its operational range.
pub fn reachable_lengths(obs: &Observation, agent: &AgentState) -> Vec<Option<u32>> {
    let flies = agent.spec.flies();
    bfs_lengths(obs.dims, agent.position, Some(agent.spec.op_range), |c| {
        obs.is_visible(c) && (flies || !obs.is_seen_obstacle(c))
    })
}

/// `speed / (len + 1)` on reachable cells, 0 elsewhere.
pub fn extended_cost_map(obs: &Observation, agent: &AgentState) -> Vec<f64> {
    let speed = agent.spec.speed as f64;
    reachable_lengths(obs, agent)
        .into_iter()
        .map(|len| len.map_or(0.0, |l| speed / (l as f64 + 1.0)))
        .collect()
}

/// Max over `targets` of `exp(-d^2 / (2 sigma^2))` at a continuous point.
pub fn target_gaussian_at(x: f64, y: f64, targets: &[Cell], sigma: f64) -> f64 {
    let denom = 2.0 * sigma * sigma;
    targets
        .iter()
        .map(|t| {
            let (dx, dy) = (x - t.x as f64, y - t.y as f64);
            (-(dx * dx + dy * dy) / denom).exp()
        })
        .fold(0.0, f64::max)
}

/// [`target_gaussian_at`] over seen targets, evaluated at every cell.
pub fn gaussian_target_map(obs: &Observation, sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    obs.dims
        .cells()
        .map(|c| target_gaussian_at(c.x as f64, c.y as f64, &obs.seen_targets, sigma))
        .collect()
}

pub fn build_feature_map(obs: &Observation, agent: &AgentState, sigma: f64) -> FeatureMap {
    let mut f = FeatureMap::zeros(obs.dims);
    f.channel_mut(0).copy_from_slice(&extended_cost_map(obs, agent));
    f.channel_mut(1).copy_from_slice(&gaussian_target_map(obs, sigma));
    for &c in &obs.seen_obstacles {
        let i = obs.dims.index(c);
        f.channel_mut(2)[i] = 1.0;
    }
    fill_product(&mut f);
    f
}

fn fill_product(f: &mut FeatureMap) {
    let a = f.dims.area();
    for i in 0..a {
        f.data[3 * a + i] = f.data[i] * f.data[a + i];
    }
}

/// Preprocessing components that can be switched off for ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureAblation {
    /// Targets become single-cell indicators instead of Gaussians.
    pub no_gaussian_targets: bool,
    /// Channel 3 is zeroed.
    pub no_product: bool,
    /// Channel 0 keeps only the ego cell (value `speed`).
    pub no_extended_cost: bool,
}

impl FeatureAblation {
    pub const NONE_OF_PREPROCESSING: Self =
        Self { no_gaussian_targets: true, no_product: true, no_extended_cost: true };

    pub fn is_full(&self) -> bool {
        *self == Self::default()
    }

    /// Rewrites a full feature map into its ablated form.
    pub fn apply(&self, fmap: &FeatureMap, agent: &AgentState) -> FeatureMap {
        if self.is_full() {
            return fmap.clone();
        }
        let mut f = fmap.clone();
        if self.no_extended_cost {
            let ego = f.dims.index(agent.position);
            let speed = agent.spec.speed as f64;
            let c0 = f.channel_mut(0);
            c0.fill(0.0);
            c0[ego] = speed;
        }
        if self.no_gaussian_targets {
            for v in f.channel_mut(1) {
                *v = if *v == 1.0 { 1.0 } else { 0.0 };
            }
        }
        fill_product(&mut f);
        if self.no_product {
            f.channel_mut(3).fill(0.0);
        }
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{default_specs, observe, AgentKind};
    use crate::world::{generate_world, place_entities, GridWorld, WorldConfig};
    use proptest::prelude::*;
    use std::collections::VecDeque;

    fn world(w: usize, h: usize, obstacles: &[Cell], targets: &[Cell]) -> GridWorld {
        GridWorld::new(Dims::new(w, h), obstacles.iter().copied().collect(), targets.to_vec(), None, 0)
            .unwrap()
    }

    fn agent(kind: AgentKind, at: Cell) -> AgentState {
        AgentState::new(0, default_specs(kind), at)
    }

    /// Standalone BFS oracle over an explicit passability grid.
    fn bfs_oracle(dims: Dims, start: Cell, pass: &[bool], budget: u32) -> Vec<Option<u32>> {
        let mut d = vec![None; dims.area()];
        d[start.y * dims.width + start.x] = Some(0u32);
        let mut q = VecDeque::new();
        q.push_back(start);
        while let Some(c) = q.pop_front() {
            let cur = d[c.y * dims.width + c.x].unwrap();
            let (x, y) = (c.x as i64, c.y as i64);
            for (nx, ny) in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
                if nx < 0 || ny < 0 || nx >= dims.width as i64 || ny >= dims.height as i64 {
                    continue;
                }
                let i = ny as usize * dims.width + nx as usize;
                if pass[i] && d[i].is_none() && cur < budget {
                    d[i] = Some(cur + 1);
                    q.push_back(Cell::new(nx as usize, ny as usize));
                }
            }
        }
        d
    }

    fn oracle_cost(obs: &Observation, a: &AgentState) -> Vec<f64> {
        let pass: Vec<bool> = obs
            .dims
            .cells()
            .map(|c| obs.is_visible(c) && (a.spec.flies() || !obs.seen_obstacles.contains(&c)))
            .collect();
        bfs_oracle(obs.dims, a.position, &pass, a.spec.op_range)
            .into_iter()
            .map(|l| l.map_or(0.0, |l| a.spec.speed as f64 / (l as f64 + 1.0)))
            .collect()
    }

    #[test]
    fn ego_cell_has_speed() {
        let w = world(9, 9, &[], &[]);
        for kind in [AgentKind::Uav, AgentKind::Ugv] {
            let a = agent(kind, Cell::new(4, 4));
            let c = extended_cost_map(&observe(&w, &a), &a);
            assert_eq!(c[w.dims().index(a.position)], a.spec.speed as f64);
        }
    }

    #[test]
    fn corridor_three_steps_is_quarter() {
        let w = world(9, 1, &[], &[]);
        let a = agent(AgentKind::Ugv, Cell::new(1, 0));
        let c = extended_cost_map(&observe(&w, &a), &a);
        assert_eq!(c[4], 0.25);
    }

    #[test]
    fn l_wall_matches_bfs_oracle() {
        // L-shaped wall on a 6x6 map
        let wall = [Cell::new(2, 1), Cell::new(2, 2), Cell::new(2, 3), Cell::new(3, 3), Cell::new(4, 3)];
        let w = world(6, 6, &wall, &[]);
        for kind in [AgentKind::Uav, AgentKind::Ugv] {
            let mut a = agent(kind, Cell::new(3, 2));
            a.spec.r_sense = 8.0;
            let obs = observe(&w, &a);
            assert_eq!(extended_cost_map(&obs, &a), oracle_cost(&obs, &a), "{kind}");
        }
    }

    #[test]
    fn gaussian_closed_forms() {
        let w = world(5, 5, &[], &[Cell::new(2, 2)]);
        let a = agent(AgentKind::Uav, Cell::new(0, 0));
        let obs = observe(&w, &a);
        let g = gaussian_target_map(&obs, 1.0);
        assert_eq!(g[w.dims().index(Cell::new(2, 2))], 1.0);
        assert!((g[w.dims().index(Cell::new(3, 2))] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((g[w.dims().index(Cell::new(3, 2))] - 0.6065).abs() < 1e-4);

        let none = world(5, 5, &[], &[]);
        assert!(gaussian_target_map(&observe(&none, &a), 1.0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn two_targets_combine_by_max() {
        let targets = [Cell::new(1, 0), Cell::new(2, 0)];
        let mid = target_gaussian_at(1.5, 0.0, &targets, 1.0);
        assert_eq!(mid, (-0.125f64).exp());
        let w = world(4, 1, &[], &targets);
        let a = agent(AgentKind::Uav, Cell::new(0, 0));
        let g = gaussian_target_map(&observe(&w, &a), 1.0);
        assert_eq!(&g[..3], &[(-0.5f64).exp(), 1.0, 1.0]);
        assert!(g.iter().all(|v| *v <= 1.0));
    }

    #[test]
    fn degenerate_observation() {
        let w = world(5, 5, &[], &[Cell::new(4, 4)]);
        let mut a = agent(AgentKind::Ugv, Cell::new(1, 1));
        a.spec.r_sense = 0.0;
        let f = build_feature_map(&observe(&w, &a), &a, 1.0);
        let ego = w.dims().index(a.position);
        for (i, v) in f.channel(0).iter().enumerate() {
            assert_eq!(*v, if i == ego { 1.0 } else { 0.0 });
        }
        assert!(f.channel(1).iter().all(|v| *v == 0.0));
        assert!(f.channel(3).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ablations_rewrite_channels() {
        let w = world(7, 7, &[Cell::new(3, 3)], &[Cell::new(5, 5)]);
        let a = agent(AgentKind::Ugv, Cell::new(4, 4));
        let full = build_feature_map(&observe(&w, &a), &a, 1.0);
        let none = FeatureAblation::NONE_OF_PREPROCESSING.apply(&full, &a);
        assert_eq!(none.channel(0).iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(none.channel(1).iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(none.channel(2), full.channel(2));
        assert!(none.channel(3).iter().all(|v| *v == 0.0));
        let no_pm = FeatureAblation { no_product: true, ..Default::default() }.apply(&full, &a);
        assert_eq!(no_pm.channel(0), full.channel(0));
        assert!(no_pm.channel(3).iter().all(|v| *v == 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn feature_map_invariants(seed in 0u64..1 << 40, op in 1u32..12) {
            let base = generate_world(&WorldConfig::default(), seed).unwrap();
            let (pos, t) = place_entities(&base, 1, 30, seed).unwrap();
            let w = base.with_targets(t).unwrap();
            let ugv = agent(AgentKind::Ugv, pos[0]);
            let uav = agent(AgentKind::Uav, pos[0]);
            let obs = observe(&w, &ugv);
            let f = build_feature_map(&obs, &ugv, 1.0);
            prop_assert!(f.product_identity_holds());
            prop_assert!(f.channel(0).iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(f.channel(1).iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(f.channel(2).iter().all(|v| *v == 0.0 || *v == 1.0));

            // flying reaches a superset of cells
            let fu = build_feature_map(&obs, &uav, 1.0);
            for i in 0..w.dims().area() {
                prop_assert!(f.channel(0)[i] == 0.0 || fu.channel(0)[i] > 0.0);
            }

            // shrinking the budget never raises a value
            let mut short = ugv;
            short.spec.op_range = op;
            let fs = extended_cost_map(&obs, &short);
            for i in 0..w.dims().area() {
                prop_assert!(fs[i] <= f.channel(0)[i]);
            }
            // zero exactly where unreachable
            let len = reachable_lengths(&obs, &ugv);
            for i in 0..w.dims().area() {
                prop_assert_eq!(f.channel(0)[i] == 0.0, len[i].is_none());
            }
        }
    }
}
