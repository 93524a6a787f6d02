use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chaoskit::{Atom, LevyModel};
use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const MAX_LEVEL: u32 = 6;
pub const MAX_SAMPLES: u64 = 10_000_000;
pub const SEED_ENV: &str = "CHAOSKIT_SEED";
pub const DEFAULT_SAMPLES: u64 = 100_000;
/// `extract` tests hundreds of coefficients at once, some of them with strongly skewed estimators.
pub const DEFAULT_EXTRACT_SAMPLES: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub exact: f64,
    pub mc_sigmas: f64,
    pub extract_sigmas: f64,
    pub parseval: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            exact: 1e-12,
            mc_sigmas: 3.0,
            extract_sigmas: 4.0,
            parseval: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: LevyModel,
    pub level: u32,
    pub seed: u64,
    /// Monte Carlo sample count; unset means the command's own default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    pub tolerances: Tolerances,
    pub simulate: SimulateArgs,
    pub verify_diagram: DiagramArgs,
    pub isometry: IsometryArgs,
    pub extract: ExtractArgs,
    pub project: ProjectArgs,
    pub reduce: ReduceArgs,
    pub check_ergodic: ErgodicArgs,
    pub ns_transform: NsArgs,
    pub bsde: BsdeArgs,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: LevyModel::new(1.0, vec![Atom { x: 1.0, lambda: 1.0 }]).expect("valid default model"),
            level: 3,
            seed: 0,
            samples: None,
            tolerances: Tolerances::default(),
            simulate: Default::default(),
            verify_diagram: Default::default(),
            isometry: Default::default(),
            extract: Default::default(),
            project: Default::default(),
            reduce: Default::default(),
            check_ergodic: Default::default(),
            ns_transform: Default::default(),
            bsde: Default::default(),
        }
    }
}

/// Fills every unset field of `self` from `fallback`.
pub trait Merge {
    fn merge(self, fallback: &Self) -> Self;
}

macro_rules! args_block {
    ($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident : $ty:ty),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct $name {
            $($(#[$fmeta])* #[arg(long)] pub $field: Option<$ty>,)*
        }

        impl Merge for $name {
            fn merge(self, fallback: &Self) -> Self {
                $name { $($field: self.$field.or_else(|| fallback.$field.clone()),)* }
            }
        }
    };
}

args_block!(SimulateArgs {
    /// Number of paths to draw.
    paths: u64,
});

args_block!(DiagramArgs {
    paths: u64,
    /// Degree of the random kernels when no kernel file is given.
    degree: usize,
    kernel: PathBuf,
    map: PathBuf,
});

args_block!(IsometryArgs {
    degree: usize,
    kernel: PathBuf,
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Functional {
    /// Product of `1 + X_cell` over the cells `[a_cell, t_cell)`.
    Exponential,
    /// Increment of the process over the cells `[a_cell, t_cell)`.
    Increment,
}

args_block!(ExtractArgs {
    functional: Functional,
    n_max: usize,
    a_cell: usize,
    t_cell: usize,
});

args_block!(ProjectArgs {
    kernel: PathBuf,
    group: PathBuf,
});

args_block!(ReduceArgs {
    kernel: PathBuf,
    partition: PathBuf,
    /// Group file; defaults to the block group of the partition.
    group: PathBuf,
});

args_block!(ErgodicArgs {
    /// Cell set as `L:a..b` or `L:c1,c2,...`.
    set: String,
    /// Group file; defaults to all permutations of the set's cells.
    group: PathBuf,
    d_max: u32,
});

args_block!(NsArgs {
    kernel: PathBuf,
    /// Map for the covariance check.
    map: PathBuf,
});

args_block!(BsdeArgs {
    terminal: PathBuf,
    generator: PathBuf,
    iters: usize,
    tol: f64,
    /// Partition for the invariance propagation check.
    partition: PathBuf,
});

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Global overrides taken from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub model: Option<PathBuf>,
    pub seed: Option<u64>,
    pub level: Option<u32>,
    pub samples: Option<u64>,
    pub force: bool,
}

/// Loads the config file (if any), then applies seed precedence flag > environment > file.
pub fn resolve(path: Option<&Path>, overrides: &Overrides, env_seed: Option<String>) -> Result<RunConfig> {
    let mut config: RunConfig = match path {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    let env_seed = env_seed
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("{SEED_ENV}={s:?} is not a u64")))
        .transpose()?;
    if let Some(seed) = overrides.seed.or(env_seed) {
        config.seed = seed;
    }
    if let Some(model) = &overrides.model {
        config.model = read_json(model)?;
    }
    if let Some(level) = overrides.level {
        config.level = level;
    }
    if overrides.samples.is_some() {
        config.samples = overrides.samples;
    }
    if !overrides.force {
        if config.level > MAX_LEVEL {
            bail!("level {} exceeds {MAX_LEVEL}; pass --force to run anyway", config.level);
        }
        if let Some(samples) = config.samples.filter(|&s| s > MAX_SAMPLES) {
            bail!("samples {samples} exceeds {MAX_SAMPLES}; pass --force to run anyway");
        }
    }
    Ok(config)
}
