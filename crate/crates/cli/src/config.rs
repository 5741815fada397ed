//! JSON config schemas for the three subcommands. Scalars that also exist as
//! command-line flags (seed, output directory, threads) are overridden by the
//! flags; everything else lives in the file.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use priorlearn::eval::{Method, Protocol};
use priorlearn::task::SyntheticSpec;

/// Where the task environment comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Generate tasks in memory from a synthetic spec (its `seed` field is
    /// ignored; the top-level seed drives generation).
    Synthetic(SyntheticSpec),
    /// Load a task environment from a manifest file.
    Manifest(PathBuf),
}

/// Config for `priorlearn run`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream in the run derives from it.
    pub seed: u64,
    pub data: DataSource,
    pub methods: Vec<Method>,
    pub sigma: f64,
    pub delta: f64,
    pub protocol: Protocol,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// How the prior object is supplied to `priorlearn bound`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSpec {
    /// The zero hyperposterior mean.
    Zero,
    /// Inline hyperposterior mean vector.
    Gaussian(Vec<f64>),
    /// Serialized hyperposterior mean (JSON file).
    GaussianFile(PathBuf),
    /// Serialized subspace mode (JSON file, row-major matrix).
    SubspaceFile(PathBuf),
}

/// Config for `priorlearn bound`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundCmdConfig {
    #[serde(default)]
    pub seed: u64,
    pub data: DataSource,
    pub sigma: f64,
    pub delta: f64,
    pub c: f64,
    #[serde(default)]
    pub relaxed: bool,
    pub prior: PriorSpec,
}

/// Config for `priorlearn synth`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    #[serde(flatten)]
    pub spec: SyntheticSpec,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// splitmix64 step; derives independent sub-seeds from the master seed so
/// data generation and protocol shuffling never share ChaCha streams.
pub fn derive_seed(master: u64, domain: u64) -> u64 {
    let mut z = master ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
