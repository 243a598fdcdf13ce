//! Labelled samples and their on-disk container.
//!
//! File layout, integers and floats little-endian:
//!
//! ```text
//! magic       8 bytes  "GATARDS\0"
//! version     u32      1
//! header_len  u32, header (UTF-8 JSON: generation config, seed, stream)
//! count       u32      number of samples
//! per sample:
//!   meta_len  u32, meta (UTF-8 JSON: world, agents, labels)
//!   features  f64 x (agents * 4 * height * width), agent-major then channel-major
//! ```

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::agent::{build_team, observe, AgentState, Composition, Observation};
use crate::comms::{build_graph, CommGraph};
use crate::featurize::{build_feature_map, FeatureMap, CHANNELS, DEFAULT_SIGMA};
use crate::grid::{Cell, Dims};
use crate::oracle::expert_greedy;
use crate::seed::derive_seed;
use crate::world::{generate_world, place_entities, GridWorld, SubareaLayout, Subareas, WorldConfig};

pub const DATASET_MAGIC: &[u8; 8] = b"GATARDS\0";
pub const DATASET_VERSION: u32 = 1;

const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub world: WorldConfig,
    pub maps: usize,
    pub samples_per_map: usize,
    pub team: Composition,
    /// Targets per sample are `targets_per_agent * team size`.
    pub targets_per_agent: usize,
    /// Overrides every agent's communication radius when set.
    pub r_comm: Option<f64>,
    pub sigma: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            maps: 100,
            samples_per_map: 10,
            team: Composition::new(2, 2),
            targets_per_agent: 10,
            r_comm: None,
            sigma: DEFAULT_SIGMA,
        }
    }
}

impl DatasetConfig {
    pub fn targets(&self) -> usize {
        self.targets_per_agent * self.team.size()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub config: DatasetConfig,
    pub seed: u64,
    /// Seed stream the maps were drawn from; test sets use a separate one.
    pub stream: u64,
}

/// One team snapshot with full-preprocessing features and expert labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Seed of the map this sample was placed on.
    pub world_id: u64,
    pub world: GridWorld,
    pub agents: Vec<AgentState>,
    pub features: Vec<FeatureMap>,
    /// Expert target per agent; `None` agents are excluded from loss and metrics.
    pub labels: Vec<Option<Cell>>,
}

impl Sample {
    /// Observes, featurizes and labels a team in a world.
    pub fn build(world_id: u64, world: GridWorld, agents: Vec<AgentState>, sigma: f64) -> Result<Self> {
        let obs: Vec<Observation> = agents.iter().map(|a| observe(&world, a)).collect();
        let features = agents.iter().zip(&obs).map(|(a, o)| build_feature_map(o, a, sigma)).collect();
        let labels = expert_greedy(&agents, &obs)?.targets;
        Ok(Self { world_id, world, agents, features, labels })
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.agents.iter().map(|a| observe(&self.world, a)).collect()
    }

    /// Communication graph, optionally with every radius replaced by `r_comm`.
    pub fn graph(&self, r_comm: Option<f64>) -> Result<CommGraph> {
        match r_comm {
            None => Ok(build_graph(&self.agents)?),
            Some(r) => {
                let agents: Vec<AgentState> =
                    self.agents.iter().map(|a| AgentState { spec: a.spec.with_r_comm(r), ..*a }).collect();
                Ok(build_graph(&agents)?)
            }
        }
    }

    pub fn labelled(&self) -> usize {
        self.labels.iter().flatten().count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
}

fn generate(config: &DatasetConfig, seed: u64, stream: u64) -> Result<Dataset> {
    if config.maps == 0 || config.samples_per_map == 0 {
        return Err(PipelineError::Config("maps and samples per map must be positive".into()));
    }
    if config.team.size() == 0 {
        return Err(PipelineError::Config("team must have at least one agent".into()));
    }
    let base = derive_seed(seed, stream);
    let per_map: Vec<Vec<Sample>> = (0..config.maps as u64)
        .into_par_iter()
        .map(|m| {
            let map_seed = derive_seed(base, m);
            let wrap = |e: PipelineError| PipelineError::Generation { seed: map_seed, source: Box::new(e) };
            let world = generate_world(&config.world, map_seed).map_err(|e| wrap(e.into()))?;
            (0..config.samples_per_map as u64)
                .map(|k| {
                    let (agents, targets) =
                        place_entities(&world, config.team.size(), config.targets(), derive_seed(map_seed, k + 1))
                            .map_err(|e| wrap(e.into()))?;
                    let w = world.with_targets(targets).map_err(|e| wrap(e.into()))?;
                    let agents = build_team(config.team, &agents, config.r_comm);
                    Sample::build(map_seed, w, agents, config.sigma).map_err(wrap)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        header: DatasetHeader { config: config.clone(), seed, stream },
        samples: per_map.into_iter().flatten().collect(),
    })
}

/// Training pool: `maps x samples_per_map` samples. Deterministic per seed.
pub fn generate_dataset(config: &DatasetConfig, seed: u64) -> Result<Dataset> {
    generate(config, seed, TRAIN_STREAM)
}

/// Held-out samples on maps drawn from a separate seed stream.
pub fn generate_test_set(config: &DatasetConfig, seed: u64) -> Result<Dataset> {
    generate(config, seed, TEST_STREAM)
}

#[derive(Serialize, Deserialize)]
struct SampleMeta {
    world_id: u64,
    width: usize,
    height: usize,
    obstacles: Vec<Cell>,
    targets: Vec<Cell>,
    subareas: Option<SubareaMeta>,
    agents: Vec<AgentState>,
    labels: Vec<Option<Cell>>,
}

#[derive(Serialize, Deserialize)]
struct SubareaMeta {
    rows: usize,
    cols: usize,
    rich: Vec<bool>,
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let io = |source| PipelineError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let mut buf = Vec::new();
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    let header = serde_json::to_string(&dataset.header).expect("header serializes");
    put_u32(&mut buf, header.len());
    buf.extend_from_slice(header.as_bytes());
    put_u32(&mut buf, dataset.samples.len());
    w.write_all(&buf).map_err(io)?;
    for s in &dataset.samples {
        buf.clear();
        let meta = SampleMeta {
            world_id: s.world_id,
            width: s.world.width(),
            height: s.world.height(),
            obstacles: s.world.obstacles().iter().copied().collect(),
            targets: s.world.targets().to_vec(),
            subareas: s.world.subareas().map(|a| SubareaMeta {
                rows: a.layout.rows,
                cols: a.layout.cols,
                rich: a.rich.clone(),
            }),
            agents: s.agents.clone(),
            labels: s.labels.clone(),
        };
        let meta = serde_json::to_string(&meta).expect("sample serializes");
        put_u32(&mut buf, meta.len());
        buf.extend_from_slice(meta.as_bytes());
        for f in &s.features {
            for v in &f.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf).map_err(io)?;
    }
    w.flush().map_err(io)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, message: impl Into<String>) -> PipelineError {
        PipelineError::Format { path: self.path.to_path_buf(), message: message.into() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.fail(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn json<T: for<'de> Deserialize<'de>>(&mut self) -> Result<T> {
        let n = self.u32()?;
        let bytes = self.take(n)?;
        serde_json::from_slice(bytes).map_err(|e| self.fail(e.to_string()))
    }
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let io = |source| PipelineError::Io { path: path.to_path_buf(), source };
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(io)?).read_to_end(&mut bytes).map_err(io)?;
    let mut r = Reader { buf: &bytes, pos: 0, path };
    if r.take(8)? != DATASET_MAGIC {
        return Err(r.fail("not a dataset file (bad magic)"));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(r.fail(format!("unsupported dataset version {version}")));
    }
    let header: DatasetHeader = r.json()?;
    let count = r.u32()?;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let meta: SampleMeta = r.json()?;
        let dims = Dims::new(meta.width, meta.height);
        let obstacles: BTreeSet<Cell> = meta.obstacles.into_iter().collect();
        let subareas = match meta.subareas {
            None => None,
            Some(a) => {
                let rich_count = a.rich.iter().filter(|r| **r).count();
                let layout = SubareaLayout::new(dims, a.rows, a.cols, rich_count).map_err(|e| r.fail(e.to_string()))?;
                Some(Subareas { layout, rich: a.rich })
            }
        };
        let world = GridWorld::new(dims, obstacles, meta.targets, subareas, meta.world_id)
            .map_err(|e| r.fail(e.to_string()))?;
        if meta.labels.len() != meta.agents.len() {
            return Err(r.fail("label count differs from agent count"));
        }
        let per_agent = CHANNELS * dims.area();
        let mut features = Vec::with_capacity(meta.agents.len());
        for _ in &meta.agents {
            let raw = r.take(per_agent * 8)?;
            let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
            features.push(FeatureMap { dims, data });
        }
        samples.push(Sample { world_id: meta.world_id, world, agents: meta.agents, features, labels: meta.labels });
    }
    if r.pos != bytes.len() {
        return Err(r.fail(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Dataset { header, samples })
}
