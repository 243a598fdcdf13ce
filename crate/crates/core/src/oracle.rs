//! Allocators: the centralized greedy expert that labels training data, an
//! exhaustive optimum for tiny instances, and two per-agent baselines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agent::{AgentState, Observation};
use crate::featurize::reachable_lengths;
use crate::grid::Cell;

pub const BRUTE_FORCE_MAX_AGENTS: usize = 5;
pub const BRUTE_FORCE_MAX_TARGETS: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("brute force limited to {max_agents} agents and {max_targets} targets, got {agents} and {targets}")]
    TooLarge { agents: usize, targets: usize, max_agents: usize, max_targets: usize },
    #[error("{agents} agents but {observations} observations")]
    Mismatch { agents: usize, observations: usize },
}

/// One optional target per agent, indexed like the agent slice.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub targets: Vec<Option<Cell>>,
    /// Travel time of each assigned pair (`None` where unassigned).
    pub costs: Vec<Option<f64>>,
}

impl Assignment {
    pub fn assigned(&self) -> usize {
        self.targets.iter().flatten().count()
    }

    pub fn total_cost(&self) -> f64 {
        self.costs.iter().flatten().sum()
    }

    /// Lexicographic quality key: more assigned agents first, then lower cost.
    pub fn objective(&self) -> (usize, f64) {
        (self.assigned(), self.total_cost())
    }

    /// No target is shared and every cost is finite.
    pub fn is_valid(&self) -> bool {
        let mut seen: Vec<Cell> = self.targets.iter().flatten().copied().collect();
        let n = seen.len();
        seen.sort();
        seen.dedup();
        seen.len() == n
            && self.targets.iter().zip(&self.costs).all(|(t, c)| t.is_some() == c.is_some_and(f64::is_finite))
    }
}

/// Pools observations: a cell is visible if anyone sees it, and every
/// seen obstacle and target is known to all.
pub fn union_observation(observations: &[Observation]) -> Option<Observation> {
    let first = observations.first()?;
    let mut out = first.clone();
    for o in &observations[1..] {
        for (v, w) in out.visible.iter_mut().zip(&o.visible) {
            *v |= *w;
        }
        out.seen_obstacles.extend(o.seen_obstacles.iter().copied());
        out.seen_targets.extend(o.seen_targets.iter().copied());
    }
    out.seen_targets.sort();
    out.seen_targets.dedup();
    Some(out)
}

/// Travel times `path_len / speed` from each agent to each candidate target
/// over a shared observation; `f64::INFINITY` when unreachable.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    pub targets: Vec<Cell>,
    pub costs: Vec<Vec<f64>>,
}

impl CostMatrix {
    pub fn from_observation(agents: &[AgentState], obs: &Observation) -> Self {
        let targets = obs.seen_targets.clone();
        let costs = agents
            .iter()
            .map(|a| {
                let lens = reachable_lengths(obs, a);
                targets
                    .iter()
                    .map(|t| lens[obs.dims.index(*t)].map_or(f64::INFINITY, |l| l as f64 / a.spec.speed as f64))
                    .collect()
            })
            .collect();
        Self { targets, costs }
    }

    /// Pooled-observation costs used by the expert and brute force.
    pub fn team(agents: &[AgentState], observations: &[Observation]) -> Result<Self, OracleError> {
        if agents.len() != observations.len() {
            return Err(OracleError::Mismatch { agents: agents.len(), observations: observations.len() });
        }
        Ok(match union_observation(observations) {
            Some(u) => Self::from_observation(agents, &u),
            None => Self { targets: Vec::new(), costs: Vec::new() },
        })
    }

    fn assignment(&self, picks: &[Option<usize>]) -> Assignment {
        Assignment {
            targets: picks.iter().map(|p| p.map(|t| self.targets[t])).collect(),
            costs: picks.iter().enumerate().map(|(a, p)| p.map(|t| self.costs[a][t])).collect(),
        }
    }

    /// Repeatedly takes the globally cheapest finite pair. Ties go to the
    /// lower agent id, then the lexicographically smaller target.
    pub fn greedy(&self) -> Assignment {
        let n = self.costs.len();
        let mut picks = vec![None; n];
        let mut agent_free = vec![true; n];
        let mut target_free = vec![true; self.targets.len()];
        loop {
            let mut best: Option<(f64, usize, usize)> = None;
            for (a, row) in self.costs.iter().enumerate() {
                if !agent_free[a] {
                    continue;
                }
                for (t, &c) in row.iter().enumerate() {
                    // strict `<` keeps the first pair in (agent, target) order
                    if target_free[t] && c.is_finite() && best.is_none_or(|(b, _, _)| c < b) {
                        best = Some((c, a, t));
                    }
                }
            }
            let Some((_, a, t)) = best else { break };
            picks[a] = Some(t);
            agent_free[a] = false;
            target_free[t] = false;
        }
        self.assignment(&picks)
    }

    /// Exhaustive search over injective partial mappings; maximizes the
    /// number of assigned agents, then minimizes total travel time.
    pub fn brute_force(&self) -> Result<Assignment, OracleError> {
        let (n, m) = (self.costs.len(), self.targets.len());
        if n > BRUTE_FORCE_MAX_AGENTS || m > BRUTE_FORCE_MAX_TARGETS {
            return Err(OracleError::TooLarge {
                agents: n,
                targets: m,
                max_agents: BRUTE_FORCE_MAX_AGENTS,
                max_targets: BRUTE_FORCE_MAX_TARGETS,
            });
        }
        let mut best: Option<(usize, f64, Vec<Option<usize>>)> = None;
        let mut picks = vec![None; n];
        let mut used = vec![false; m];
        self.search(0, 0, 0.0, &mut picks, &mut used, &mut best);
        let (_, _, picks) = best.expect("the empty assignment is always enumerated");
        Ok(self.assignment(&picks))
    }

    fn search(
        &self,
        a: usize,
        count: usize,
        cost: f64,
        picks: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        best: &mut Option<(usize, f64, Vec<Option<usize>>)>,
    ) {
        if a == picks.len() {
            if best.as_ref().is_none_or(|(bc, bcost, _)| count > *bc || (count == *bc && cost < *bcost)) {
                *best = Some((count, cost, picks.clone()));
            }
            return;
        }
        for t in 0..self.targets.len() {
            let c = self.costs[a][t];
            if !used[t] && c.is_finite() {
                used[t] = true;
                picks[a] = Some(t);
                self.search(a + 1, count + 1, cost + c, picks, used, best);
                picks[a] = None;
                used[t] = false;
            }
        }
        self.search(a + 1, count, cost, picks, used, best);
    }
}

/// The centralized greedy expert over the team's pooled observations.
pub fn expert_greedy(agents: &[AgentState], observations: &[Observation]) -> Result<Assignment, OracleError> {
    Ok(CostMatrix::team(agents, observations)?.greedy())
}

/// Optimal assignment by enumeration; guarded to tiny instances.
pub fn brute_force_optimal(agents: &[AgentState], observations: &[Observation]) -> Result<Assignment, OracleError> {
    CostMatrix::team(agents, observations)?.brute_force()
}

/// Nearest own-visible target by travel time on the agent's own view.
///
/// Targets it cannot reach rank after reachable ones, by Euclidean distance;
/// remaining ties go to the smaller `(x, y)`.
pub fn greedy_no_comm(agent: &AgentState, obs: &Observation) -> Option<Cell> {
    let lens = reachable_lengths(obs, agent);
    obs.seen_targets.iter().copied().min_by(|a, b| {
        let key = |t: &Cell| {
            let time = lens[obs.dims.index(*t)].map_or(f64::INFINITY, |l| l as f64 / agent.spec.speed as f64);
            (time, agent.position.dist_sq(*t), *t)
        };
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1)).then(ka.2.cmp(&kb.2))
    })
}

/// Uniformly random own-visible target, fixed by `seed`.
pub fn random_select(_agent: &AgentState, obs: &Observation, seed: u64) -> Option<Cell> {
    if obs.seen_targets.is_empty() {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Some(obs.seen_targets[rng.random_range(0..obs.seen_targets.len())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{default_specs, observe, AgentKind};
    use crate::grid::Dims;
    use crate::world::GridWorld;
    use std::collections::BTreeSet;

    fn world(w: usize, h: usize, obstacles: &[(usize, usize)], targets: &[(usize, usize)]) -> GridWorld {
        let obs: BTreeSet<Cell> = obstacles.iter().map(|&(x, y)| Cell::new(x, y)).collect();
        let t = targets.iter().map(|&(x, y)| Cell::new(x, y)).collect();
        GridWorld::new(Dims::new(w, h), obs, t, None, 0).unwrap()
    }

    fn agent(id: usize, kind: AgentKind, x: usize, y: usize) -> AgentState {
        AgentState::new(id, default_specs(kind), Cell::new(x, y))
    }

    fn matrix(costs: Vec<Vec<f64>>) -> CostMatrix {
        let m = costs.first().map_or(0, Vec::len);
        CostMatrix { targets: (0..m).map(|i| Cell::new(i, 0)).collect(), costs }
    }

    #[test]
    fn single_agent_single_target() {
        let w = world(7, 7, &[], &[(4, 0)]);
        let a = [agent(0, AgentKind::Ugv, 0, 0)];
        let obs: Vec<_> = a.iter().map(|x| observe(&w, x)).collect();
        let asg = expert_greedy(&a, &obs).unwrap();
        assert_eq!(asg.targets, vec![Some(Cell::new(4, 0))]);
        assert_eq!(asg.costs, vec![Some(4.0)]);
    }

    #[test]
    fn heterogeneity_fixture() {
        // A wall at x = 3 leaves only a gap at (3, 6), so the UGV reaches
        // target B only by a long detour; the UAV sits in the gap,
        // equidistant from A and B.
        let wall: Vec<(usize, usize)> = (0..7).filter(|&y| y != 6).map(|y| (3, y)).collect();
        let w = world(7, 7, &wall, &[(1, 3), (5, 3)]);
        let team = [agent(0, AgentKind::Uav, 3, 6), agent(1, AgentKind::Ugv, 1, 2)];
        let obs: Vec<_> = team.iter().map(|x| observe(&w, x)).collect();
        let cm = CostMatrix::team(&team, &obs).unwrap();
        assert_eq!(cm.costs[0][0], cm.costs[0][1], "UAV is equidistant");
        assert!(cm.costs[1][1] > 2.0 * cm.costs[0][1], "UGV detour is long");
        let asg = expert_greedy(&team, &obs).unwrap();
        assert_eq!(asg.targets, vec![Some(Cell::new(5, 3)), Some(Cell::new(1, 3))]);
        assert_eq!(brute_force_optimal(&team, &obs).unwrap().targets, asg.targets);
    }

    #[test]
    fn greedy_tie_breaks() {
        let asg = matrix(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).greedy();
        assert_eq!(asg.targets, vec![Some(Cell::new(0, 0)), Some(Cell::new(1, 0))]);
    }

    #[test]
    fn brute_force_prefers_non_crossing() {
        // crossing: 1 + 10 = 11 via greedy; optimal 2 + 2
        let cm = matrix(vec![vec![1.0, 2.0], vec![2.0, 10.0]]);
        assert_eq!(cm.greedy().total_cost(), 11.0);
        let bf = cm.brute_force().unwrap();
        assert_eq!(bf.total_cost(), 4.0);
        assert_eq!(bf.targets, vec![Some(Cell::new(1, 0)), Some(Cell::new(0, 0))]);
    }

    #[test]
    fn unreachable_row_gets_none() {
        let cm = matrix(vec![vec![f64::INFINITY, f64::INFINITY], vec![3.0, 1.0]]);
        for asg in [cm.greedy(), cm.brute_force().unwrap()] {
            assert_eq!(asg.targets[0], None);
            assert!(asg.is_valid());
        }
    }

    #[test]
    fn brute_force_guard() {
        let cm = matrix(vec![vec![1.0; 7]]);
        assert!(matches!(cm.brute_force(), Err(OracleError::TooLarge { .. })));
    }

    #[test]
    fn surplus_agents_unassigned() {
        let cm = matrix(vec![vec![2.0], vec![1.0], vec![3.0]]);
        assert_eq!(cm.greedy().targets, vec![None, Some(Cell::new(0, 0)), None]);
    }

    #[test]
    fn baselines_empty_and_single() {
        let w = world(7, 7, &[], &[]);
        let a = agent(0, AgentKind::Ugv, 3, 3);
        let o = observe(&w, &a);
        assert_eq!(greedy_no_comm(&a, &o), None);
        assert_eq!(random_select(&a, &o, 1), None);
        let w = world(7, 7, &[], &[(3, 5)]);
        let o = observe(&w, &a);
        assert_eq!(greedy_no_comm(&a, &o), Some(Cell::new(3, 5)));
        assert_eq!(random_select(&a, &o, 1), Some(Cell::new(3, 5)));
    }

    #[test]
    fn greedy_no_comm_prefers_travel_time_over_distance() {
        // (1, 1) is visible and Euclidean-closer but fenced in for ground agents
        let fence = [(0, 1), (1, 0), (2, 1), (1, 2)];
        let w = world(7, 7, &fence, &[(1, 1), (6, 3)]);
        let ugv = agent(0, AgentKind::Ugv, 3, 3);
        let o = observe(&w, &ugv);
        assert!(o.is_visible(Cell::new(1, 1)));
        assert_eq!(greedy_no_comm(&ugv, &o), Some(Cell::new(6, 3)));
        // with nothing reachable the Euclidean-nearest visible target is kept
        let w = world(7, 7, &fence, &[(1, 1)]);
        assert_eq!(greedy_no_comm(&ugv, &observe(&w, &ugv)), Some(Cell::new(1, 1)));
    }

    #[test]
    fn union_pools_targets() {
        let w = world(15, 15, &[], &[(0, 0), (14, 14)]);
        let team = [agent(0, AgentKind::Ugv, 1, 1), agent(1, AgentKind::Ugv, 13, 13)];
        let obs: Vec<_> = team.iter().map(|x| observe(&w, x)).collect();
        let u = union_observation(&obs).unwrap();
        assert_eq!(u.seen_targets, vec![Cell::new(0, 0), Cell::new(14, 14)]);
        let asg = expert_greedy(&team, &obs).unwrap();
        assert_eq!(asg.targets, vec![Some(Cell::new(0, 0)), Some(Cell::new(14, 14))]);
    }
}
