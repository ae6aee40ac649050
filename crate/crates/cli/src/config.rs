//! The run configuration file. The three keys of the original tutorial
//! (`dataset_mode`, `node_num`, `split_mode`) are required; every other block
//! is optional and falls back to the defaults below.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fednoniid_core::fedsim::{FedConfig, ModelArch, Weighting};
use fednoniid_core::grid::{Axis, GridSpec, SkewKind};
use fednoniid_core::nei::EncoderHyper;
use fednoniid_core::partition::{
    NoiseKind, NoiseSpec, PartitionSpec, QualitySpec, SizeProfile, SplitMode,
};
use fednoniid_core::DatasetName;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetMode {
    #[serde(rename = "MNIST")]
    Mnist,
    #[serde(rename = "CIFAR10")]
    Cifar10,
}

impl DatasetMode {
    pub fn name(&self) -> DatasetName {
        match self {
            DatasetMode::Mnist => DatasetName::Mnist,
            DatasetMode::Cifar10 => DatasetName::Cifar10,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    /// Dataset root; falls back to `$FEDNONIID_DATA_DIR`, then `./data`.
    pub data_dir: Option<PathBuf>,
    /// Output root; `--out` overrides it. Defaults to `./output`.
    pub out_dir: Option<PathBuf>,
    /// Shard directory read by `nei` and `train`; defaults to `<out>/shards`.
    pub shards_dir: Option<PathBuf>,
    /// Base URL or local directory `fetch` downloads from instead of the
    /// public mirrors.
    pub source_url: Option<String>,
    /// Expected SHA-256 digests keyed by file name, checked by `fetch`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub digests: BTreeMap<String, String>,
}

/// Optional caps applied to the loaded train and test sets (first samples).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetConfig {
    pub train: Option<usize>,
    pub test: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub labels_per_node: usize,
    pub overlap: f64,
    pub error: f64,
    /// Apply the noise block in prior mode too.
    pub noise: bool,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            labels_per_node: 2,
            overlap: 0.0,
            error: 0.0,
            noise: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConceptConfig {
    pub groups: usize,
    pub permutations: Option<Vec<Vec<u8>>>,
}

impl Default for ConceptConfig {
    fn default() -> Self {
        ConceptConfig {
            groups: 2,
            permutations: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityConfig {
    #[serde(alias = "N")]
    pub n: f64,
    #[serde(alias = "E")]
    pub e: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FedBlock {
    pub rounds: usize,
    pub lr: f64,
    pub batch: usize,
    pub local_epochs: usize,
    pub weighting: Weighting,
    pub clients_per_round: Option<usize>,
    pub eval_every: usize,
    pub model: ModelArch,
    pub checkpoints: Vec<usize>,
}

impl Default for FedBlock {
    fn default() -> Self {
        let d = FedConfig::new(1, 100, 0);
        FedBlock {
            rounds: d.rounds,
            lr: d.lr,
            batch: d.batch_size,
            local_epochs: d.local_epochs,
            weighting: d.weighting,
            clients_per_round: None,
            eval_every: d.eval_every,
            model: d.model,
            checkpoints: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeiConfig {
    /// Fractions of shifted data for the nei grid axis when `grid.values` is
    /// not given.
    pub fractions: Vec<f64>,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Autoencoder training samples, taken from the head of the train set.
    pub train_samples: usize,
    /// Noise ladder maximum of the covariate row in the nei grid.
    pub covariate_sigma: f64,
    /// Label-error fraction of the prior row in the nei grid.
    pub prior_error: f64,
    pub concept_groups: usize,
}

impl Default for NeiConfig {
    fn default() -> Self {
        let h = EncoderHyper::default();
        let p = fednoniid_core::grid::default_nei_partition(1);
        NeiConfig {
            fractions: vec![0.3, 0.5, 0.7, 0.9],
            epochs: h.epochs,
            batch: h.batch,
            lr: h.lr,
            train_samples: 1000,
            covariate_sigma: p.noise.max,
            prior_error: p.error_frac,
            concept_groups: p.group_count,
        }
    }
}

impl NeiConfig {
    pub fn hyper(&self) -> EncoderHyper {
        EncoderHyper {
            epochs: self.epochs,
            batch: self.batch,
            lr: self.lr,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub axis: Axis,
    #[serde(default)]
    pub values: Vec<f64>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_n_levels")]
    pub n_levels: Vec<f64>,
    #[serde(default = "default_skews")]
    pub skews: Vec<SkewKind>,
    /// Defaults to the top-level seed.
    #[serde(default)]
    pub seed_base: Option<u64>,
    #[serde(default = "default_alpha")]
    pub power_law_alpha: f64,
}

fn default_repetitions() -> usize {
    3
}
fn default_n_levels() -> Vec<f64> {
    vec![0.0]
}
fn default_skews() -> Vec<SkewKind> {
    vec![SkewKind::QuantitySkew, SkewKind::LabelSkew]
}
fn default_alpha() -> f64 {
    1.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_mode: DatasetMode,
    pub node_num: usize,
    pub split_mode: SplitMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub subset: SubsetConfig,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub concept: ConceptConfig,
    #[serde(default)]
    pub sizes: SizeProfile,
    #[serde(default)]
    pub quality: Option<QualityConfig>,
    #[serde(default)]
    pub fed: FedBlock,
    #[serde(default)]
    pub nei: NeiConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
}

/// Reads a YAML file, or JSON when the extension is `.json`, and validates it.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    parse_config_str(&text, json).map_err(|e| CliError {
        message: format!("{}: {}", path.display(), e.message),
        ..e
    })
}

pub fn parse_config_str(text: &str, json: bool) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = if json {
        serde_json::from_str(text).map_err(|e| CliError::usage(e.to_string()))?
    } else {
        serde_yaml::from_str(text).map_err(|e| CliError::usage(e.to_string()))?
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |e: fednoniid_core::Error| CliError::usage(e.to_string());
        self.partition_spec().validate().map_err(bad)?;
        self.fed_config().validate().map_err(bad)?;
        if let Some(q) = self.quality {
            QualitySpec::new(q.n, q.e).map_err(bad)?;
        }
        if self.nei.train_samples == 0 || self.nei.epochs == 0 || self.nei.batch == 0 {
            return Err(CliError::usage(
                "nei.train_samples, nei.epochs and nei.batch must be positive",
            ));
        }
        if let Some(g) = &self.grid {
            self.grid_spec(g).validate().map_err(bad)?;
        }
        Ok(())
    }

    pub fn partition_spec(&self) -> PartitionSpec {
        let mut p = PartitionSpec::new(self.split_mode, self.node_num, self.seed);
        p.noise = self.noise.clone();
        p.labels_per_node = self.prior.labels_per_node;
        p.overlap_frac = self.prior.overlap;
        p.error_frac = self.prior.error;
        p.prior_noise = self.prior.noise;
        p.group_count = self.concept.groups;
        p.permutations = self.concept.permutations.clone();
        p.size_profile = self.sizes.clone();
        p
    }

    pub fn quality_spec(&self) -> Option<QualitySpec> {
        self.quality.map(|q| QualitySpec {
            n_frac: q.n,
            e_frac: q.e,
        })
    }

    pub fn fed_config(&self) -> FedConfig {
        let f = &self.fed;
        let mut c = FedConfig::new(self.node_num, f.rounds, self.seed);
        c.lr = f.lr;
        c.batch_size = f.batch;
        c.local_epochs = f.local_epochs;
        c.weighting = f.weighting;
        c.clients_per_round = f.clients_per_round;
        c.eval_every = f.eval_every;
        c.model = f.model;
        c.checkpoints = f.checkpoints.clone();
        c
    }

    /// The grid described by `g`, with the nei axis reading its partition
    /// parameters from the `nei` block.
    pub fn grid_spec(&self, g: &GridConfig) -> GridSpec {
        let values = if g.values.is_empty() && g.axis == Axis::Nei {
            self.nei.fractions.clone()
        } else {
            g.values.clone()
        };
        let partition = if g.axis == Axis::Nei {
            let mut p = fednoniid_core::grid::default_nei_partition(self.node_num);
            p.seed = self.seed;
            p.noise = if self.noise.kind == NoiseKind::None {
                NoiseSpec::gaussian(self.nei.covariate_sigma)
            } else {
                self.noise.clone()
            };
            p.error_frac = self.nei.prior_error;
            p.group_count = self.nei.concept_groups;
            p.labels_per_node = self.prior.labels_per_node;
            p
        } else {
            self.partition_spec()
        };
        let mut spec = GridSpec::new(g.axis, values, self.fed_config(), partition);
        spec.n_levels = g.n_levels.clone();
        spec.skews = g.skews.clone();
        spec.repetitions = g.repetitions;
        spec.seed_base = g.seed_base.unwrap_or(self.seed);
        spec.power_law_alpha = g.power_law_alpha;
        spec.labels_per_node = self.prior.labels_per_node;
        spec
    }

    pub fn data_dir(&self) -> PathBuf {
        self.paths
            .data_dir
            .clone()
            .or_else(|| std::env::var_os("FEDNONIID_DATA_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("output"))
    }

    pub fn shards_dir(&self) -> PathBuf {
        self.paths
            .shards_dir
            .clone()
            .unwrap_or_else(|| self.out_dir().join("shards"))
    }

    /// The resolved configuration as embedded in output artifacts.
    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
