//! Applications, fixed-size data blocks, map tasks and seeded workload
//! generation.

use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;

/// Default cycles spent per input MB (20 Mcycles/MB).
pub const DEFAULT_CYCLES_PER_MB: f64 = 2.0e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AppId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskId(pub usize);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Application {
    pub id: AppId,
    pub input_mb: f64,
    pub block_size_mb: f64,
    pub replication_factor: u32,
    /// Normalized CPU demand of the app's map tasks, in (0, 1].
    pub demand: f64,
    pub cycles_per_mb: f64,
    pub arrival_s: f64,
    pub deadline_s: Option<f64>,
}

impl Application {
    pub fn new(id: usize, input_mb: f64, block_size_mb: f64, replication_factor: u32) -> Self {
        Application {
            id: AppId(id),
            input_mb,
            block_size_mb,
            replication_factor,
            demand: 0.5,
            cycles_per_mb: DEFAULT_CYCLES_PER_MB,
            arrival_s: 0.0,
            deadline_s: None,
        }
    }

    pub fn block_count(&self) -> usize {
        (self.input_mb / self.block_size_mb).ceil() as usize
    }

    fn validate(&self) -> Result<(), WorkloadError> {
        let ok = self.input_mb > 0.0
            && self.input_mb.is_finite()
            && self.block_size_mb > 0.0
            && self.block_size_mb.is_finite()
            && self.replication_factor >= 1
            && self.demand > 0.0
            && self.demand <= 1.0
            && self.cycles_per_mb > 0.0;
        if ok {
            Ok(())
        } else {
            Err(WorkloadError::InvalidApp(self.id.0))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataBlock {
    pub id: BlockId,
    pub app: AppId,
    pub size_mb: f64,
}

/// One map task per block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub block: BlockId,
    pub app: AppId,
    pub size_mb: f64,
    pub resource_demand: f64,
    pub compute_cycles: f64,
    /// Earliest start time (the app's arrival).
    pub release_s: f64,
    pub deadline_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkloadError {
    #[error("workload profile has no applications")]
    EmptyProfile,
    #[error("application {0} has invalid parameters")]
    InvalidApp(usize),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("replication factor {rf} exceeds node count {nodes}")]
    ReplicationTooHigh { rf: u32, nodes: usize },
    #[error("cannot read workload profile: {0}")]
    Io(String),
    #[error("cannot parse workload profile: {0}")]
    Parse(String),
}

/// Splits an application's input into `ceil(input / b)` blocks. All blocks but
/// the last have size `b`. Block ids are local to the application (0..B).
pub fn partition(app: &Application) -> Vec<DataBlock> {
    let count = app.block_count();
    (0..count)
        .map(|k| {
            let size_mb = if k + 1 < count {
                app.block_size_mb
            } else {
                app.input_mb - app.block_size_mb * (count - 1) as f64
            };
            DataBlock { id: BlockId(k), app: app.id, size_mb }
        })
        .collect()
}

/// Applications with their blocks and map tasks. Block and task ids are dense
/// and task `i` reads block `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub apps: Vec<Application>,
    pub blocks: Vec<DataBlock>,
    pub tasks: Vec<TaskSpec>,
}

impl Workload {
    pub fn from_apps(apps: Vec<Application>) -> Result<Self, WorkloadError> {
        if apps.is_empty() {
            return Err(WorkloadError::EmptyProfile);
        }
        let mut blocks = Vec::new();
        let mut tasks = Vec::new();
        for app in &apps {
            app.validate()?;
            for local in partition(app) {
                let id = blocks.len();
                tasks.push(TaskSpec {
                    id: TaskId(id),
                    block: BlockId(id),
                    app: app.id,
                    size_mb: local.size_mb,
                    resource_demand: app.demand,
                    compute_cycles: local.size_mb * app.cycles_per_mb,
                    release_s: app.arrival_s,
                    deadline_s: app.deadline_s,
                });
                blocks.push(DataBlock { id: BlockId(id), ..local });
            }
        }
        Ok(Workload { apps, blocks, tasks })
    }

    pub fn app(&self, id: AppId) -> &Application {
        &self.apps[id.0]
    }

    pub fn block(&self, id: BlockId) -> &DataBlock {
        &self.blocks[id.0]
    }

    pub fn replication_of(&self, block: BlockId) -> u32 {
        self.apps[self.blocks[block.0].app.0].replication_factor
    }

    pub fn total_mb(&self) -> f64 {
        self.blocks.iter().map(|b| b.size_mb).sum()
    }

    pub fn check_nodes(&self, nodes: usize) -> Result<(), WorkloadError> {
        match self.apps.iter().map(|a| a.replication_factor).max() {
            Some(rf) if rf as usize > nodes => Err(WorkloadError::ReplicationTooHigh { rf, nodes }),
            _ => Ok(()),
        }
    }
}

/// A scalar drawn per application. `5` is fixed, `{"min":1,"max":2}` is
/// uniform, `{"choice":[..]}` picks one value uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dist {
    Fixed(f64),
    Uniform { min: f64, max: f64 },
    Choice { choice: Vec<f64> },
}

impl Dist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64, WorkloadError> {
        match self {
            Dist::Fixed(v) => Ok(*v),
            Dist::Uniform { min, max } if min <= max && min.is_finite() && max.is_finite() => {
                Ok(if min == max { *min } else { rng.random_range(*min..*max) })
            }
            Dist::Uniform { min, max } => Err(WorkloadError::InvalidDistribution(format!("uniform [{min}, {max}]"))),
            Dist::Choice { choice } if !choice.is_empty() => Ok(choice[rng.random_range(0..choice.len())]),
            Dist::Choice { .. } => Err(WorkloadError::InvalidDistribution("empty choice".into())),
        }
    }
}

fn one() -> u32 {
    1
}

fn default_block() -> f64 {
    64.0
}

fn default_demand() -> Dist {
    Dist::Fixed(0.5)
}

fn default_intensity() -> Dist {
    Dist::Fixed(DEFAULT_CYCLES_PER_MB)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppProfile {
    #[serde(default = "one")]
    pub count: u32,
    pub input_mb: Dist,
    #[serde(default = "default_block")]
    pub block_size_mb: f64,
    #[serde(default = "one")]
    pub replication: u32,
    #[serde(default = "default_demand")]
    pub demand: Dist,
    #[serde(default = "default_intensity")]
    pub cycles_per_mb: Dist,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_s: Option<f64>,
}

/// Workload profile file: `apps[]` plus an optional Poisson arrival rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    pub apps: Vec<AppProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival_rate_per_s: Option<f64>,
}

/// One entry of a JSON job-profile list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobProfile {
    pub input_mb: f64,
    #[serde(default = "default_block")]
    pub block_size_mb: f64,
    #[serde(default = "one")]
    pub replication: u32,
    #[serde(default = "half")]
    pub demand: f64,
}

fn half() -> f64 {
    0.5
}

impl WorkloadProfile {
    /// `count` identical apps of `input_mb` each.
    pub fn uniform_apps(count: u32, input_mb: f64, block_size_mb: f64, replication: u32) -> Self {
        WorkloadProfile {
            apps: vec![AppProfile {
                count,
                input_mb: Dist::Fixed(input_mb),
                block_size_mb,
                replication,
                demand: default_demand(),
                cycles_per_mb: default_intensity(),
                deadline_s: None,
            }],
            arrival_rate_per_s: None,
        }
    }

    pub fn single_app(input_mb: f64, block_size_mb: f64, replication: u32) -> Self {
        Self::uniform_apps(1, input_mb, block_size_mb, replication)
    }

    pub fn from_job_profiles(jobs: &[JobProfile]) -> Self {
        WorkloadProfile {
            apps: jobs
                .iter()
                .map(|j| AppProfile {
                    count: 1,
                    input_mb: Dist::Fixed(j.input_mb),
                    block_size_mb: j.block_size_mb,
                    replication: j.replication,
                    demand: Dist::Fixed(j.demand),
                    cycles_per_mb: default_intensity(),
                    deadline_s: None,
                })
                .collect(),
            arrival_rate_per_s: None,
        }
    }

    /// Parses either a profile object (`{"apps": [...]}`) or a bare job-profile
    /// list (`[{"input_mb": ...}, ...]`).
    pub fn from_json(text: &str) -> Result<Self, WorkloadError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| WorkloadError::Parse(e.to_string()))?;
        if value.is_array() {
            let jobs: Vec<JobProfile> = serde_json::from_value(value).map_err(|e| WorkloadError::Parse(e.to_string()))?;
            Ok(Self::from_job_profiles(&jobs))
        } else {
            serde_json::from_value(value).map_err(|e| WorkloadError::Parse(e.to_string()))
        }
    }

    pub fn load(path: &Path) -> Result<Self, WorkloadError> {
        let text = std::fs::read_to_string(path).map_err(|e| WorkloadError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Draws a workload from `profile`. A pure function of `(seed, profile)`.
pub fn generate_workload(seed: u64, profile: &WorkloadProfile) -> Result<Workload, WorkloadError> {
    if profile.apps.iter().all(|a| a.count == 0) {
        return Err(WorkloadError::EmptyProfile);
    }
    let mut rng = seed::rng(seed::derive(seed, &[seed::label("workload")]));
    let mut apps = Vec::new();
    let mut clock = 0.0;
    for ap in &profile.apps {
        for _ in 0..ap.count {
            let id = apps.len();
            let arrival_s = match profile.arrival_rate_per_s {
                Some(rate) if rate > 0.0 => {
                    // exponential inter-arrival; the first app arrives at 0
                    if id > 0 {
                        let u: f64 = rng.random::<f64>();
                        clock += -(1.0 - u).ln() / rate;
                    }
                    clock
                }
                _ => 0.0,
            };
            apps.push(Application {
                id: AppId(id),
                input_mb: ap.input_mb.sample(&mut rng)?,
                block_size_mb: ap.block_size_mb,
                replication_factor: ap.replication,
                demand: ap.demand.sample(&mut rng)?,
                cycles_per_mb: ap.cycles_per_mb.sample(&mut rng)?,
                arrival_s,
                deadline_s: ap.deadline_s,
            });
        }
    }
    Workload::from_apps(apps)
}
