//! Heterogeneous agent capabilities and occlusion-aware local sensing.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{line_of_sight, Cell, Dims};
use crate::world::GridWorld;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Uav,
    Ugv,
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Uav => "uav",
            AgentKind::Ugv => "ugv",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Traversal {
    FliesOverObstacles,
    BlockedByObstacles,
}

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("invalid agent spec: {0}")]
    InvalidSpec(String),
    #[error("invalid team composition {0:?}, expected <m>A<n>G")]
    Composition(String),
    #[error("roster: {0}")]
    Roster(String),
}

/// Mobility and perception parameters of one agent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub kind: AgentKind,
    /// Cells per timestep.
    pub speed: u32,
    /// Euclidean sensing radius in cells.
    pub r_sense: f64,
    /// Euclidean communication radius in cells.
    pub r_comm: f64,
    /// Path-length budget in cells.
    pub op_range: u32,
    pub traversal: Traversal,
}

impl AgentSpec {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.speed < 1 {
            return Err(AgentError::InvalidSpec("speed must be at least 1".into()));
        }
        if !(self.r_sense >= 0.0) || !(self.r_comm >= 0.0) {
            return Err(AgentError::InvalidSpec("ranges must be non-negative".into()));
        }
        if self.op_range == 0 {
            return Err(AgentError::InvalidSpec("op_range must be positive".into()));
        }
        Ok(())
    }

    pub fn flies(&self) -> bool {
        self.traversal == Traversal::FliesOverObstacles
    }

    pub fn with_r_comm(self, r_comm: f64) -> Self {
        Self { r_comm, ..self }
    }
}

/// Training defaults: UAVs are faster with a shorter budget and fly over obstacles.
pub fn default_specs(kind: AgentKind) -> AgentSpec {
    match kind {
        AgentKind::Uav => AgentSpec {
            kind,
            speed: 2,
            r_sense: 4.0,
            r_comm: 6.0,
            op_range: 60,
            traversal: Traversal::FliesOverObstacles,
        },
        AgentKind::Ugv => AgentSpec {
            kind,
            speed: 1,
            r_sense: 4.0,
            r_comm: 6.0,
            op_range: 120,
            traversal: Traversal::BlockedByObstacles,
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: usize,
    pub spec: AgentSpec,
    pub position: Cell,
}

impl AgentState {
    pub fn new(id: usize, spec: AgentSpec, position: Cell) -> Self {
        Self { id, spec, position }
    }
}

/// Team made of `uav` UAVs followed by `ugv` UGVs, written `<m>A<n>G`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Composition {
    pub uav: usize,
    pub ugv: usize,
}

impl Composition {
    pub const fn new(uav: usize, ugv: usize) -> Self {
        Self { uav, ugv }
    }

    pub fn size(&self) -> usize {
        self.uav + self.ugv
    }

    /// Agent kinds in id order.
    pub fn kinds(&self) -> Vec<AgentKind> {
        std::iter::repeat_n(AgentKind::Uav, self.uav)
            .chain(std::iter::repeat_n(AgentKind::Ugv, self.ugv))
            .collect()
    }

    /// The six heterogeneous teams of two to four robots.
    pub fn generalization_grid() -> [Composition; 6] {
        [(1, 1), (2, 1), (1, 2), (3, 1), (2, 2), (1, 3)].map(|(a, g)| Composition::new(a, g))
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}A{}G", self.uav, self.ugv)
    }
}

impl FromStr for Composition {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AgentError::Composition(s.to_string());
        let upper = s.trim().to_ascii_uppercase();
        let (m, rest) = upper.split_once('A').ok_or_else(bad)?;
        let n = rest.strip_suffix('G').ok_or_else(bad)?;
        let uav = m.parse().map_err(|_| bad())?;
        let ugv = n.parse().map_err(|_| bad())?;
        if uav + ugv == 0 {
            return Err(bad());
        }
        Ok(Self { uav, ugv })
    }
}

/// What one agent perceives at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub dims: Dims,
    /// Row-major visibility mask.
    pub visible: Vec<bool>,
    pub seen_obstacles: BTreeSet<Cell>,
    /// Sorted by `(x, y)`.
    pub seen_targets: Vec<Cell>,
}

impl Observation {
    pub fn is_visible(&self, c: Cell) -> bool {
        self.visible[self.dims.index(c)]
    }

    pub fn is_seen_obstacle(&self, c: Cell) -> bool {
        self.seen_obstacles.contains(&c)
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|v| **v).count()
    }
}

/// Agents with default specs for `team` (UAVs first) at `positions`,
/// optionally with every communication radius replaced.
pub fn build_team(team: Composition, positions: &[Cell], r_comm: Option<f64>) -> Vec<AgentState> {
    team.kinds()
        .into_iter()
        .zip(positions)
        .enumerate()
        .map(|(id, (kind, &p))| {
            let spec = default_specs(kind);
            AgentState::new(id, r_comm.map_or(spec, |r| spec.with_r_comm(r)), p)
        })
        .collect()
}

/// Cells within `r_sense` whose line of sight from the agent is unobstructed.
///
/// Obstacles block cells strictly behind them; the obstacle cell itself is
/// visible. The agent's own cell is always visible.
pub fn observe(world: &GridWorld, agent: &AgentState) -> Observation {
    let dims = world.dims();
    let p = agent.position;
    let r = agent.spec.r_sense;
    let r_sq = r * r;
    let reach = r.floor().max(0.0) as usize;
    let mut visible = vec![false; dims.area()];
    let mut seen_obstacles = BTreeSet::new();

    let (x0, x1) = (p.x.saturating_sub(reach), (p.x + reach).min(dims.width - 1));
    let (y0, y1) = (p.y.saturating_sub(reach), (p.y + reach).min(dims.height - 1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            let c = Cell::new(x, y);
            if c != p && (p.dist_sq(c) as f64 > r_sq || !line_of_sight(p, c, |b| world.is_obstacle(b))) {
                continue;
            }
            visible[dims.index(c)] = true;
            if world.is_obstacle(c) {
                seen_obstacles.insert(c);
            }
        }
    }
    let mut seen_targets: Vec<Cell> =
        world.targets().iter().copied().filter(|t| visible[dims.index(*t)]).collect();
    seen_targets.sort();
    Observation { dims, visible, seen_obstacles, seen_targets }
}

/// Version written to and required from roster files.
pub const ROSTER_FORMAT: u32 = 1;

/// One roster line: a kind, a start cell and optional overrides of the kind defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterEntry {
    pub kind: Option<AgentKind>,
    pub position: Option<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_sense: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_comm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op_range: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traversal: Option<Traversal>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RosterFile {
    format: u32,
    agents: Vec<RosterEntry>,
}

/// Parses a TOML roster into agent states with ids in file order.
pub fn parse_roster(text: &str) -> Result<Vec<AgentState>, AgentError> {
    let file: RosterFile = toml::from_str(text).map_err(|e| AgentError::Roster(e.to_string()))?;
    if file.format != ROSTER_FORMAT {
        return Err(AgentError::Roster(format!("unsupported format {}", file.format)));
    }
    file.agents
        .into_iter()
        .enumerate()
        .map(|(id, e)| {
            let kind = e.kind.ok_or_else(|| AgentError::Roster(format!("agent {id}: missing kind")))?;
            let position =
                e.position.ok_or_else(|| AgentError::Roster(format!("agent {id}: missing position")))?;
            let d = default_specs(kind);
            let spec = AgentSpec {
                kind,
                speed: e.speed.unwrap_or(d.speed),
                r_sense: e.r_sense.unwrap_or(d.r_sense),
                r_comm: e.r_comm.unwrap_or(d.r_comm),
                op_range: e.op_range.unwrap_or(d.op_range),
                traversal: e.traversal.unwrap_or(d.traversal),
            };
            spec.validate()?;
            Ok(AgentState::new(id, spec, position))
        })
        .collect()
}

/// Writes a roster listing only the fields that differ from the kind defaults.
pub fn roster_to_toml(agents: &[AgentState]) -> String {
    let agents = agents
        .iter()
        .map(|a| {
            let d = default_specs(a.spec.kind);
            let s = a.spec;
            RosterEntry {
                kind: Some(s.kind),
                position: Some(a.position),
                speed: (s.speed != d.speed).then_some(s.speed),
                r_sense: (s.r_sense != d.r_sense).then_some(s.r_sense),
                r_comm: (s.r_comm != d.r_comm).then_some(s.r_comm),
                op_range: (s.op_range != d.op_range).then_some(s.op_range),
                traversal: (s.traversal != d.traversal).then_some(s.traversal),
            }
        })
        .collect();
    toml::to_string(&RosterFile { format: ROSTER_FORMAT, agents }).expect("roster serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_world, place_entities, WorldConfig};
    use proptest::prelude::*;

    fn empty_world(w: usize, h: usize, obstacles: &[Cell]) -> GridWorld {
        GridWorld::new(Dims::new(w, h), obstacles.iter().copied().collect(), vec![], None, 0).unwrap()
    }

    fn ugv_at(c: Cell) -> AgentState {
        AgentState::new(0, default_specs(AgentKind::Ugv), c)
    }

    #[test]
    fn empty_world_sees_full_disc() {
        let w = empty_world(15, 15, &[]);
        let a = ugv_at(Cell::new(7, 7));
        let o = observe(&w, &a);
        for c in w.dims().cells() {
            assert_eq!(o.is_visible(c), c.dist_sq(a.position) <= 16, "{c}");
        }
    }

    #[test]
    fn adjacent_obstacle_occludes_behind() {
        let w = empty_world(9, 9, &[Cell::new(5, 4)]);
        let o = observe(&w, &ugv_at(Cell::new(4, 4)));
        assert!(o.is_visible(Cell::new(5, 4)));
        assert!(o.seen_obstacles.contains(&Cell::new(5, 4)));
        assert!(!o.is_visible(Cell::new(6, 4)));
        assert!(!o.is_visible(Cell::new(7, 4)));
        assert!(o.is_visible(Cell::new(4, 4)));
    }

    /// Independent oracle: rounds the minor-axis offset with `f64::round` per cell.
    fn oracle_visible(world: &GridWorld, p: Cell, r: f64, c: Cell) -> bool {
        if c == p {
            return true;
        }
        if (p.dist_sq(c) as f64).sqrt() > r {
            return false;
        }
        let (dx, dy) = (c.x as i64 - p.x as i64, c.y as i64 - p.y as i64);
        let n = dx.abs().max(dy.abs());
        (1..n).all(|k| {
            let t = k as f64 / n as f64;
            let (ox, oy) = if dx.abs() >= dy.abs() {
                (k * dx.signum(), (t * dy as f64).round() as i64)
            } else {
                ((t * dx as f64).round() as i64, k * dy.signum())
            };
            !world.is_obstacle(Cell::new((p.x as i64 + ox) as usize, (p.y as i64 + oy) as usize))
        })
    }

    #[test]
    fn single_obstacle_matches_ray_oracle() {
        let w = empty_world(7, 7, &[Cell::new(3, 1)]);
        let a = ugv_at(Cell::new(3, 3));
        let o = observe(&w, &a);
        for c in w.dims().cells() {
            assert_eq!(o.is_visible(c), oracle_visible(&w, a.position, 4.0, c), "{c}");
        }
        assert!(!o.is_visible(Cell::new(3, 0)));
    }

    #[test]
    fn zero_sense_sees_own_cell_only() {
        let w = empty_world(5, 5, &[]);
        let mut a = ugv_at(Cell::new(2, 2));
        a.spec.r_sense = 0.0;
        let o = observe(&w, &a);
        assert_eq!(o.visible_count(), 1);
        assert!(o.is_visible(Cell::new(2, 2)));
    }

    #[test]
    fn default_spec_ordering() {
        let (uav, ugv) = (default_specs(AgentKind::Uav), default_specs(AgentKind::Ugv));
        assert!(uav.speed > ugv.speed);
        assert_eq!((uav.r_sense, uav.r_comm), (4.0, 6.0));
        assert_eq!((ugv.r_sense, ugv.r_comm), (4.0, 6.0));
        assert!(uav.flies() && !ugv.flies());
        assert!(uav.with_r_comm(0.0).validate().is_ok());
        assert!(AgentSpec { speed: 0, ..uav }.validate().is_err());
    }

    #[test]
    fn composition_notation() {
        let c: Composition = "2A2G".parse().unwrap();
        assert_eq!(c, Composition::new(2, 2));
        assert_eq!(c.to_string(), "2A2G");
        assert_eq!(c.kinds(), vec![AgentKind::Uav, AgentKind::Uav, AgentKind::Ugv, AgentKind::Ugv]);
        assert!("2X2G".parse::<Composition>().is_err());
        assert!("0A0G".parse::<Composition>().is_err());
    }

    #[test]
    fn roster_round_trip_with_overrides() {
        let mut team = vec![
            AgentState::new(0, default_specs(AgentKind::Uav), Cell::new(1, 2)),
            AgentState::new(1, default_specs(AgentKind::Ugv), Cell::new(3, 4)),
        ];
        team[1].spec.r_comm = 2.5;
        let text = roster_to_toml(&team);
        assert!(text.contains("r_comm = 2.5"));
        assert_eq!(parse_roster(&text).unwrap(), team);
        assert!(parse_roster("format = 1\n[[agents]]\nkind = \"uav\"\n").is_err());
    }

    fn mirror_x(c: Cell, width: usize) -> Cell {
        Cell::new(width - 1 - c.x, c.y)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn observation_invariants(seed in 0u64..1 << 40, r in 0.0f64..6.0) {
            let base = generate_world(&WorldConfig::default(), seed).unwrap();
            let (pos, t) = place_entities(&base, 1, 30, seed).unwrap();
            let w = base.with_targets(t).unwrap();
            let mut a = ugv_at(pos[0]);
            a.spec.r_sense = r;
            let o = observe(&w, &a);
            prop_assert!(o.is_visible(a.position));
            prop_assert!(o.seen_obstacles.iter().all(|c| o.is_visible(*c)));
            prop_assert!(o.seen_targets.iter().all(|c| o.is_visible(*c)));

            // larger radius never hides a cell
            let mut wide = a;
            wide.spec.r_sense = r + 1.5;
            let ow = observe(&w, &wide);
            prop_assert!(w.dims().cells().all(|c| !o.is_visible(c) || ow.is_visible(c)));

            // same pose, different kind: identical observation
            let uav = AgentState::new(0, AgentSpec { r_sense: r, ..default_specs(AgentKind::Uav) }, a.position);
            prop_assert_eq!(&observe(&w, &uav), &o);

            // reflection symmetry
            let width = w.width();
            let mirrored = GridWorld::new(
                w.dims(),
                w.obstacles().iter().map(|c| mirror_x(*c, width)).collect(),
                w.targets().iter().map(|c| mirror_x(*c, width)).collect(),
                None,
                0,
            ).unwrap();
            let ma = AgentState { position: mirror_x(a.position, width), ..a };
            let mo = observe(&mirrored, &ma);
            for c in w.dims().cells() {
                prop_assert_eq!(o.is_visible(c), mo.is_visible(mirror_x(c, width)));
            }
        }
    }
}
