//! Sequential missions: sense, allocate, plan and move until every target is
//! localized or the step budget runs out.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{build_team, observe, AgentKind, AgentState, Composition, Observation};
use crate::comms::{build_graph, CommGraph};
use crate::featurize::{build_feature_map, reachable_lengths, FeatureAblation, FeatureMap, DEFAULT_SIGMA};
use crate::grid::{Cell, Dims};
use crate::model::{denormalize, predict, ModelParams};
use crate::oracle::{greedy_no_comm, random_select, union_observation, CostMatrix};
use crate::seed::derive_seed;
use crate::world::{generate_world, place_entities, GridWorld, WorldConfig};

pub const DEFAULT_MAX_STEPS: usize = 40;

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Comms(#[from] crate::comms::CommsError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error(transparent)]
    World(#[from] crate::world::WorldError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("episode log is empty; nothing to render")]
    EmptyLog,
}

pub type Result<T, E = RolloutError> = std::result::Result<T, E>;

/// Who picks tasks for uncommitted agents.
#[derive(Clone, Debug)]
pub enum Allocator {
    /// The trained network; predictions snap to the nearest reachable target
    /// seen by the agent's comm component.
    Gatar { params: Box<ModelParams>, ablation: FeatureAblation },
    GreedyNoComm,
    Random { seed: u64 },
    Expert,
}

impl Allocator {
    pub fn name(&self) -> &'static str {
        match self {
            Allocator::Gatar { .. } => "gatar",
            Allocator::GreedyNoComm => "greedy_no_comm",
            Allocator::Random { .. } => "random",
            Allocator::Expert => "expert",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub max_steps: usize,
    /// Re-query the allocator for every agent at every step instead of
    /// holding tasks until they are localized or become unreachable.
    pub reallocate_every_step: bool,
    pub sigma: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self { max_steps: DEFAULT_MAX_STEPS, reallocate_every_step: false, sigma: DEFAULT_SIGMA }
    }
}

/// State after one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub step: usize,
    pub positions: Vec<Cell>,
    pub tasks: Vec<Option<Cell>>,
    pub remaining: Vec<Cell>,
    /// `(agent, target)` pairs localized during this step.
    pub localized: Vec<(usize, Cell)>,
}

#[derive(Clone, Debug)]
pub struct Episode {
    /// The map with its full initial target set.
    pub world: GridWorld,
    pub agents: Vec<AgentState>,
    pub remaining: BTreeSet<Cell>,
    pub tasks: Vec<Option<Cell>>,
    pub step: usize,
    /// Targets localized by each agent, in order.
    pub localized: Vec<Vec<Cell>>,
    pub log: Vec<Frame>,
}

impl Episode {
    pub fn new(world: GridWorld, agents: Vec<AgentState>) -> Self {
        let n = agents.len();
        Self {
            remaining: world.targets().iter().copied().collect(),
            world,
            agents,
            tasks: vec![None; n],
            step: 0,
            localized: vec![Vec::new(); n],
            log: Vec::new(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.remaining.is_empty()
    }

    pub fn total_localized(&self) -> usize {
        self.localized.iter().map(Vec::len).sum()
    }

    fn current_world(&self) -> Result<GridWorld> {
        Ok(self.world.with_targets(self.remaining.iter().copied().collect())?)
    }
}

/// Shortest 4-connected path on the true map, excluding `from`, or `None`.
///
/// Ground agents may not enter obstacles; flying agents may. Ties between
/// equal-cost frontier cells break on the smaller `(x, y)`, so paths are
/// deterministic.
pub fn astar(world: &GridWorld, agent: &AgentState, from: Cell, to: Cell) -> Option<Vec<Cell>> {
    let dims = world.dims();
    let flies = agent.spec.flies();
    let passable = |c: Cell| flies || !world.is_obstacle(c);
    if !passable(to) {
        return None;
    }
    let mut g = vec![u32::MAX; dims.area()];
    let mut parent: Vec<Option<Cell>> = vec![None; dims.area()];
    let mut open = BinaryHeap::new();
    g[dims.index(from)] = 0;
    open.push(Reverse((from.manhattan(to) as u32, 0u32, from)));
    while let Some(Reverse((_, gc, c))) = open.pop() {
        if gc > g[dims.index(c)] {
            continue;
        }
        if c == to {
            let mut path = vec![c];
            let mut cur = c;
            while let Some(p) = parent[dims.index(cur)] {
                if p == from {
                    break;
                }
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Some(if to == from { Vec::new() } else { path });
        }
        for n in dims.neighbors4(c) {
            let i = dims.index(n);
            if passable(n) && gc + 1 < g[i] {
                g[i] = gc + 1;
                parent[i] = Some(c);
                open.push(Reverse((gc + 1 + n.manhattan(to) as u32, gc + 1, n)));
            }
        }
    }
    None
}

/// Observations with targets claimed by other agents hidden.
fn unclaimed(obs: &[Observation], tasks: &[Option<Cell>], skip: &[bool]) -> Vec<Observation> {
    obs.iter()
        .enumerate()
        .map(|(i, o)| {
            let claimed: BTreeSet<Cell> =
                tasks.iter().enumerate().filter(|(j, _)| *j != i && !skip[*j]).filter_map(|(_, t)| *t).collect();
            let mut o = o.clone();
            o.seen_targets.retain(|t| !claimed.contains(t));
            o
        })
        .collect()
}

fn claimed_by_others(tasks: &[Option<Cell>], open: &[bool], me: usize, t: Cell) -> bool {
    tasks.iter().enumerate().any(|(j, task)| j != me && !open[j] && *task == Some(t))
}

/// Connected-component label per agent.
fn components(graph: &CommGraph) -> Vec<usize> {
    let mut label = vec![usize::MAX; graph.len()];
    for start in 0..graph.len() {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = start;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &v in graph.neighbors(u) {
                if label[v] == usize::MAX {
                    label[v] = start;
                    stack.push(v);
                }
            }
        }
    }
    label
}

fn nearest(point: [f64; 2], candidates: &[Cell]) -> Option<Cell> {
    candidates.iter().copied().min_by(|a, b| {
        let d = |c: &Cell| (c.x as f64 - point[0]).powi(2) + (c.y as f64 - point[1]).powi(2);
        d(a).total_cmp(&d(b)).then(a.cmp(b))
    })
}

fn allocate(
    ep: &Episode,
    allocator: &Allocator,
    obs: &[Observation],
    open: &[bool],
    sigma: f64,
) -> Result<Vec<Option<Cell>>> {
    let n = ep.agents.len();
    let view = unclaimed(obs, &ep.tasks, open);
    let mut picks = vec![None; n];
    match allocator {
        Allocator::GreedyNoComm => {
            for i in (0..n).filter(|&i| open[i]) {
                picks[i] = greedy_no_comm(&ep.agents[i], &view[i]);
            }
        }
        Allocator::Random { seed } => {
            let stream = derive_seed(*seed, ep.step as u64);
            for i in (0..n).filter(|&i| open[i]) {
                picks[i] = random_select(&ep.agents[i], &view[i], derive_seed(stream, i as u64));
            }
        }
        Allocator::Expert => {
            // Pool the whole team's view; only uncommitted agents get rows.
            let ids: Vec<usize> = (0..n).filter(|&i| open[i]).collect();
            let Some(mut pooled) = union_observation(obs) else { return Ok(picks) };
            pooled.seen_targets.retain(|&t| !ep.tasks.contains(&Some(t)));
            let agents: Vec<AgentState> = ids.iter().map(|&i| ep.agents[i]).collect();
            let asg = CostMatrix::from_observation(&agents, &pooled).greedy();
            for (k, &i) in ids.iter().enumerate() {
                picks[i] = asg.targets[k];
            }
        }
        Allocator::Gatar { params, ablation } => {
            let fmaps: Vec<FeatureMap> = ep
                .agents
                .iter()
                .zip(obs)
                .map(|(a, o)| ablation.apply(&build_feature_map(o, a, sigma), a))
                .collect();
            let refs: Vec<&FeatureMap> = fmaps.iter().collect();
            let graph = build_graph(&ep.agents)?;
            let preds = predict(params, &refs, &graph)?;
            let component = components(&graph);
            for i in (0..n).filter(|&i| open[i]) {
                // Targets known to the agent's connected team, unclaimed and
                // reachable on that team's pooled view.
                let team: Vec<Observation> =
                    (0..n).filter(|&j| component[j] == component[i]).map(|j| obs[j].clone()).collect();
                let pooled = union_observation(&team).expect("an agent is in its own component");
                let lens = reachable_lengths(&pooled, &ep.agents[i]);
                let candidates: Vec<Cell> = pooled
                    .seen_targets
                    .iter()
                    .copied()
                    .filter(|&t| lens[pooled.dims.index(t)].is_some() && !claimed_by_others(&ep.tasks, open, i, t))
                    .collect();
                picks[i] = nearest(denormalize(preds[i], &params.config), &candidates);
            }
        }
    }
    Ok(picks)
}

/// Advances the episode by one sense-allocate-move cycle.
pub fn step(ep: &mut Episode, allocator: &Allocator, config: &RolloutConfig) -> Result<()> {
    let n = ep.agents.len();
    let world = ep.current_world()?;
    let obs: Vec<Observation> = ep.agents.iter().map(|a| observe(&world, a)).collect();

    // Drop tasks that were localized or cannot be reached any more.
    let mut paths: Vec<Option<Vec<Cell>>> = vec![None; n];
    for i in 0..n {
        if let Some(t) = ep.tasks[i] {
            let path = if ep.remaining.contains(&t) { astar(&world, &ep.agents[i], ep.agents[i].position, t) } else { None };
            if path.is_none() || config.reallocate_every_step {
                ep.tasks[i] = None;
            }
            paths[i] = path;
        }
    }
    let open: Vec<bool> = ep.tasks.iter().map(Option::is_none).collect();
    if open.iter().any(|o| *o) {
        let picks = allocate(ep, allocator, &obs, &open, config.sigma)?;
        for i in (0..n).filter(|&i| open[i]) {
            ep.tasks[i] = picks[i];
            paths[i] = picks[i].and_then(|t| astar(&world, &ep.agents[i], ep.agents[i].position, t));
            if paths[i].is_none() {
                ep.tasks[i] = None;
            }
        }
    }

    // Interleaved unit moves: every agent takes its k-th cell before anyone takes a (k+1)-th.
    let mut localized = Vec::new();
    let max_speed = ep.agents.iter().map(|a| a.spec.speed).max().unwrap_or(0) as usize;
    for sub in 0..max_speed {
        for i in 0..n {
            if sub >= ep.agents[i].spec.speed as usize {
                continue;
            }
            let Some(task) = ep.tasks[i] else { continue };
            if !ep.remaining.contains(&task) {
                continue;
            }
            let Some(next) = paths[i].as_ref().and_then(|p| p.get(sub)).copied() else { continue };
            ep.agents[i].position = next;
            if ep.remaining.remove(&next) {
                ep.localized[i].push(next);
                localized.push((i, next));
            }
        }
    }
    for t in ep.tasks.iter_mut() {
        if t.is_some_and(|c| !ep.remaining.contains(&c)) {
            *t = None;
        }
    }
    ep.step += 1;
    ep.log.push(Frame {
        step: ep.step,
        positions: ep.agents.iter().map(|a| a.position).collect(),
        tasks: ep.tasks.clone(),
        remaining: ep.remaining.iter().copied().collect(),
        localized,
    });
    Ok(())
}

#[derive(Clone, Debug)]
pub struct CoverageReport {
    pub per_agent: Vec<Vec<Cell>>,
    pub total: usize,
    /// Steps taken to localize every target, if that happened.
    pub steps_to_completion: Option<usize>,
    pub episode: Episode,
}

/// A fresh map with a placed team and `targets` targets, deterministic per seed.
pub fn random_mission(
    world: &WorldConfig,
    team: Composition,
    targets: usize,
    seed: u64,
) -> Result<(GridWorld, Vec<AgentState>)> {
    let map = generate_world(world, derive_seed(seed, 0))?;
    let (positions, cells) = place_entities(&map, team.size(), targets, derive_seed(seed, 1))?;
    Ok((map.with_targets(cells)?, build_team(team, &positions, None)))
}

pub fn run_episode(
    world: GridWorld,
    team: Vec<AgentState>,
    allocator: &Allocator,
    config: &RolloutConfig,
) -> Result<CoverageReport> {
    let mut ep = Episode::new(world, team);
    while !ep.is_done() && ep.step < config.max_steps {
        step(&mut ep, allocator, config)?;
    }
    Ok(CoverageReport {
        per_agent: ep.localized.clone(),
        total: ep.total_localized(),
        steps_to_completion: ep.is_done().then_some(ep.step),
        episode: ep,
    })
}

#[derive(Serialize, Deserialize)]
struct EpisodeRecord {
    world: String,
    agents: Vec<AgentState>,
    localized: Vec<Vec<Cell>>,
    log: Vec<Frame>,
}

/// Stores the map, team and frame log as JSON.
pub fn save_episode(episode: &Episode, path: &Path) -> Result<()> {
    let record = EpisodeRecord {
        world: episode.world.to_toml()?,
        agents: episode.agents.clone(),
        localized: episode.localized.clone(),
        log: episode.log.clone(),
    };
    let text = serde_json::to_string(&record).expect("episode serializes");
    fs::write(path, text).map_err(|source| RolloutError::Io { path: path.to_path_buf(), source })
}

pub fn load_episode(path: &Path) -> Result<Episode> {
    let io = |source| RolloutError::Io { path: path.to_path_buf(), source };
    let text = fs::read_to_string(path).map_err(io)?;
    let record: EpisodeRecord =
        serde_json::from_str(&text).map_err(|e| io(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
    let world = GridWorld::from_toml(&record.world, &path.display().to_string())?;
    let mut ep = Episode::new(world, record.agents);
    ep.remaining = record.log.last().map_or(ep.remaining, |f| f.remaining.iter().copied().collect());
    ep.tasks = record.log.last().map_or(ep.tasks, |f| f.tasks.clone());
    ep.step = record.log.len();
    ep.localized = record.localized;
    ep.log = record.log;
    Ok(ep)
}

/// Binary RGB raster with a `scale x scale` pixel block per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Ppm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

pub const BACKGROUND: [u8; 3] = [255, 255, 255];
pub const OBSTACLE: [u8; 3] = [128, 128, 128];
pub const TARGET: [u8; 3] = [220, 0, 0];
pub const UGV: [u8; 3] = [0, 0, 220];
pub const UAV: [u8; 3] = [0, 170, 0];

impl Ppm {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }
}

/// Draws obstacles, remaining targets and agents (agents on top).
pub fn render_frame(world: &GridWorld, agents: &[AgentState], frame: Option<&Frame>, scale: usize) -> Ppm {
    let Dims { width, height } = world.dims();
    let scale = scale.max(1);
    let mut img = Ppm { width: width * scale, height: height * scale, pixels: vec![BACKGROUND; width * height * scale * scale] };
    let mut paint = |c: Cell, color: [u8; 3]| {
        for dy in 0..scale {
            for dx in 0..scale {
                img.pixels[(c.y * scale + dy) * width * scale + c.x * scale + dx] = color;
            }
        }
    };
    for &o in world.obstacles() {
        paint(o, OBSTACLE);
    }
    let remaining: Vec<Cell> = frame.map_or_else(|| world.targets().to_vec(), |f| f.remaining.clone());
    for t in remaining {
        paint(t, TARGET);
    }
    for (i, a) in agents.iter().enumerate() {
        let pos = frame.map_or(a.position, |f| f.positions[i]);
        paint(pos, if a.spec.kind == AgentKind::Uav { UAV } else { UGV });
    }
    img
}

/// Writes `frame_NNNN.ppm` per logged step and `coverage.csv`
/// (`step, agent_id, cumulative`). Returns the frame paths.
pub fn render_frames(episode: &Episode, out_dir: &Path, scale: usize) -> Result<Vec<PathBuf>> {
    if episode.log.is_empty() {
        return Err(RolloutError::EmptyLog);
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RolloutError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let mut paths = Vec::with_capacity(episode.log.len());
    for f in &episode.log {
        let path = out_dir.join(format!("frame_{:04}.ppm", f.step));
        fs::write(&path, render_frame(&episode.world, &episode.agents, Some(f), scale).to_bytes()).map_err(io(&path))?;
        paths.push(path);
    }
    let csv_path = out_dir.join("coverage.csv");
    let mut file = fs::File::create(&csv_path).map_err(io(&csv_path))?;
    let mut text = String::from("step,agent_id,cumulative\n");
    let mut counts = vec![0usize; episode.agents.len()];
    for f in &episode.log {
        for (a, _) in &f.localized {
            counts[*a] += 1;
        }
        for (a, c) in counts.iter().enumerate() {
            text.push_str(&format!("{},{},{}\n", f.step, a, c));
        }
    }
    file.write_all(text.as_bytes()).map_err(io(&csv_path))?;
    Ok(paths)
}
