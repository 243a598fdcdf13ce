//! Static gridworld: obstacles laid out in obstacle-rich sub-areas, plus targets.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{bfs_lengths, Cell, Dims};
use crate::seed::derive_seed;

/// Version written to and required from world files.
pub const WORLD_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("placement error: need {needed} free cells, map has {available}")]
    Placement { needed: usize, available: usize },
    #[error("could not generate a connected map after {0} attempts")]
    Disconnected(usize),
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Tiling of the map into `rows x cols` equal sub-areas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubareaLayout {
    pub rows: usize,
    pub cols: usize,
    pub rich_count: usize,
    /// Sub-area size in cells as `[width, height]`.
    pub cell_extent: [usize; 2],
}

impl SubareaLayout {
    pub fn new(dims: Dims, rows: usize, cols: usize, rich_count: usize) -> Result<Self, WorldError> {
        if rows == 0 || cols == 0 || dims.width % cols != 0 || dims.height % rows != 0 {
            return Err(WorldError::Config(format!(
                "{}x{} map cannot be tiled by {rows}x{cols} sub-areas",
                dims.width, dims.height
            )));
        }
        if rich_count > rows * cols {
            return Err(WorldError::Config(format!(
                "rich_count {rich_count} exceeds {} sub-areas",
                rows * cols
            )));
        }
        Ok(Self {
            rows,
            cols,
            rich_count,
            cell_extent: [dims.width / cols, dims.height / rows],
        })
    }

    pub fn count(&self) -> usize {
        self.rows * self.cols
    }

    /// Index of the sub-area containing `c`, row-major over sub-areas.
    pub fn subarea_of(&self, c: Cell) -> usize {
        (c.y / self.cell_extent[1]) * self.cols + c.x / self.cell_extent[0]
    }

    pub fn cells_of(&self, subarea: usize) -> impl Iterator<Item = Cell> + '_ {
        let [w, h] = self.cell_extent;
        let (x0, y0) = ((subarea % self.cols) * w, (subarea / self.cols) * h);
        (0..h).flat_map(move |dy| (0..w).map(move |dx| Cell::new(x0 + dx, y0 + dy)))
    }
}

/// Sub-area layout plus which sub-areas carry obstacles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subareas {
    pub layout: SubareaLayout,
    pub rich: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub width: usize,
    pub height: usize,
    pub subarea_rows: usize,
    pub subarea_cols: usize,
    pub rich_count: usize,
    pub density: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            width: 15,
            height: 15,
            subarea_rows: 3,
            subarea_cols: 3,
            rich_count: 4,
            density: 0.3,
        }
    }
}

const MAX_GENERATION_ATTEMPTS: usize = 100;

/// Immutable map. Construct through [`GridWorld::new`] so invariants are checked.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWorld {
    dims: Dims,
    obstacles: BTreeSet<Cell>,
    blocked: Vec<bool>,
    subareas: Option<Subareas>,
    targets: Vec<Cell>,
    seed: u64,
}

impl GridWorld {
    pub fn new(
        dims: Dims,
        obstacles: BTreeSet<Cell>,
        targets: Vec<Cell>,
        subareas: Option<Subareas>,
        seed: u64,
    ) -> Result<Self, WorldError> {
        if dims.width == 0 || dims.height == 0 {
            return Err(WorldError::Invariant("map dimensions must be positive".into()));
        }
        if let Some(c) = obstacles.iter().find(|c| !dims.contains(**c)) {
            return Err(WorldError::Invariant(format!("obstacle {c} outside map")));
        }
        let mut blocked = vec![false; dims.area()];
        for &c in &obstacles {
            blocked[dims.index(c)] = true;
        }
        let mut seen = BTreeSet::new();
        for &t in &targets {
            if !dims.contains(t) {
                return Err(WorldError::Invariant(format!("target {t} outside map")));
            }
            if blocked[dims.index(t)] {
                return Err(WorldError::Invariant(format!("target {t} on an obstacle")));
            }
            if !seen.insert(t) {
                return Err(WorldError::Invariant(format!("duplicate target {t}")));
            }
        }
        if let Some(s) = &subareas {
            let expect = SubareaLayout::new(dims, s.layout.rows, s.layout.cols, s.layout.rich_count)?;
            if expect != s.layout || s.rich.len() != s.layout.count() {
                return Err(WorldError::Invariant("sub-area layout does not tile the map".into()));
            }
            if let Some(c) = obstacles.iter().find(|c| !s.rich[s.layout.subarea_of(**c)]) {
                return Err(WorldError::Invariant(format!(
                    "obstacle {c} lies in an obstacle-free sub-area"
                )));
            }
        }
        Ok(Self { dims, obstacles, blocked, subareas, targets, seed })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn obstacles(&self) -> &BTreeSet<Cell> {
        &self.obstacles
    }

    pub fn targets(&self) -> &[Cell] {
        &self.targets
    }

    pub fn subareas(&self) -> Option<&Subareas> {
        self.subareas.as_ref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.blocked[self.dims.index(c)]
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.dims.cells().filter(|c| !self.is_obstacle(*c))
    }

    /// Same map with a different target set.
    pub fn with_targets(&self, targets: Vec<Cell>) -> Result<Self, WorldError> {
        Self::new(self.dims, self.obstacles.clone(), targets, self.subareas.clone(), self.seed)
    }

    /// Whether every obstacle-free cell is reachable from every other on foot.
    pub fn free_space_connected(&self) -> bool {
        let Some(start) = self.free_cells().next() else {
            return true;
        };
        let len = bfs_lengths(self.dims, start, None, |c| !self.is_obstacle(c));
        self.free_cells().all(|c| len[self.dims.index(c)].is_some())
    }

    pub fn to_toml(&self) -> Result<String, WorldError> {
        if self.seed > i64::MAX as u64 {
            return Err(WorldError::Config(format!("seed {} does not fit the file format", self.seed)));
        }
        let file = WorldFile {
            format: WORLD_FORMAT,
            width: self.dims.width,
            height: self.dims.height,
            seed: self.seed,
            obstacles: self.obstacles.iter().copied().collect(),
            targets: self.targets.clone(),
            subareas: self.subareas.as_ref().map(|s| SubareaFile {
                rows: s.layout.rows,
                cols: s.layout.cols,
                rich: (0..s.layout.count()).filter(|&i| s.rich[i]).collect(),
            }),
        };
        toml::to_string(&file).map_err(|e| WorldError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self, WorldError> {
        let file: WorldFile = toml::from_str(text).map_err(|e| WorldError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        if file.format != WORLD_FORMAT {
            return Err(WorldError::Parse {
                path: origin.to_string(),
                message: format!("unsupported format {}, expected {WORLD_FORMAT}", file.format),
            });
        }
        let dims = Dims::new(file.width, file.height);
        let subareas = match file.subareas {
            None => None,
            Some(s) => {
                let layout = SubareaLayout::new(dims, s.rows, s.cols, s.rich.len())?;
                let mut rich = vec![false; layout.count()];
                for i in s.rich {
                    if i >= rich.len() || rich[i] {
                        return Err(WorldError::Invariant(format!("bad rich sub-area index {i}")));
                    }
                    rich[i] = true;
                }
                Some(Subareas { layout, rich })
            }
        };
        let obstacles: BTreeSet<Cell> = file.obstacles.iter().copied().collect();
        if obstacles.len() != file.obstacles.len() {
            return Err(WorldError::Invariant("duplicate obstacle cell".into()));
        }
        Self::new(dims, obstacles, file.targets, subareas, file.seed)
    }
}

/// On-disk world schema (TOML).
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldFile {
    format: u32,
    width: usize,
    height: usize,
    #[serde(default)]
    seed: u64,
    obstacles: Vec<Cell>,
    targets: Vec<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subareas: Option<SubareaFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubareaFile {
    rows: usize,
    cols: usize,
    rich: Vec<usize>,
}

pub fn save_world(world: &GridWorld, path: &Path) -> Result<(), WorldError> {
    let text = world.to_toml()?;
    fs::write(path, text).map_err(|source| WorldError::Io { path: path.display().to_string(), source })
}

pub fn load_world(path: &Path) -> Result<GridWorld, WorldError> {
    let text = fs::read_to_string(path)
        .map_err(|source| WorldError::Io { path: path.display().to_string(), source })?;
    GridWorld::from_toml(&text, &path.display().to_string())
}

fn obstacles_per_subarea(density: f64, area: usize) -> usize {
    // guard against products like 0.6 * 5 = 2.9999999999999996
    ((density * area as f64) + 1e-9).floor() as usize
}

/// Random map with `rich_count` obstacle-rich sub-areas. Deterministic per seed.
///
/// Maps whose free space is disconnected for ground vehicles are rejected and
/// regenerated from a derived seed.
pub fn generate_world(config: &WorldConfig, seed: u64) -> Result<GridWorld, WorldError> {
    if !(0.0..=1.0).contains(&config.density) {
        return Err(WorldError::Config(format!("density {} outside [0, 1]", config.density)));
    }
    let dims = Dims::new(config.width, config.height);
    let layout = SubareaLayout::new(dims, config.subarea_rows, config.subarea_cols, config.rich_count)?;
    let [w, h] = layout.cell_extent;
    let per_area = obstacles_per_subarea(config.density, w * h);

    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, attempt as u64));
        let mut rich = vec![false; layout.count()];
        for i in sample(&mut rng, layout.count(), layout.rich_count) {
            rich[i] = true;
        }
        let mut obstacles = BTreeSet::new();
        for area in (0..layout.count()).filter(|&i| rich[i]) {
            let cells: Vec<Cell> = layout.cells_of(area).collect();
            for i in sample(&mut rng, cells.len(), per_area) {
                obstacles.insert(cells[i]);
            }
        }
        let world = GridWorld::new(dims, obstacles, Vec::new(), Some(Subareas { layout, rich }), seed)?;
        if world.free_space_connected() {
            return Ok(world);
        }
    }
    Err(WorldError::Disconnected(MAX_GENERATION_ATTEMPTS))
}

/// Random distinct free cells for agents and targets. Deterministic per seed.
pub fn place_entities(
    world: &GridWorld,
    n_agents: usize,
    n_targets: usize,
    seed: u64,
) -> Result<(Vec<Cell>, Vec<Cell>), WorldError> {
    let free: Vec<Cell> = world.free_cells().collect();
    let needed = n_agents + n_targets;
    if needed > free.len() {
        return Err(WorldError::Placement { needed, available: free.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<Cell> = sample(&mut rng, free.len(), needed).into_iter().map(|i| free[i]).collect();
    let (agents, targets) = picks.split_at(n_agents);
    Ok((agents.to_vec(), targets.to_vec()))
}
