//! Non-IID federated-learning benchmark toolkit: dataset I/O, a small neural
//! network engine, non-IID partitioners, the NEI shift metric, a FedAvg
//! simulator, and experiment grids.

pub mod data;
pub mod error;
pub mod fedsim;
pub mod grid;
pub mod nei;
pub mod nn;
pub mod partition;
pub mod rng;

pub use data::{Dataset, DatasetName, ImageDims, MaterializedShard};
pub use error::{Error, Result};
pub use fedsim::{run_federated, FedConfig, FedRun, Metrics, RoundLog, Weighting};
pub use grid::{Axis, GridSpec, ResultTable};
pub use nei::{nei_report, Encoder, EncodingCache, NeiReport};
pub use nn::{LayerSpec, Loss, Network, ParamSet, Tensor};
pub use partition::{ClientShard, PartitionSpec, QualitySpec, SplitMode};
pub use rng::Rng;
