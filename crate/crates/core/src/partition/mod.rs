//! Non-IID partitioners: covariate, prior-probability and concept shift,
//! unbalanced sizes, and shared-data / label-error quality injection.
//!
//! Partitioners return [`ClientShard`]s that reference the source dataset by
//! index; [`materialize`] applies label maps, overrides and noise to produce
//! standalone data. All randomness flows from `spec.seed` through tagged
//! substreams, so every shard is independent of how many others exist.

mod modes;
mod noise;
mod quality;

pub use modes::{
    partition, partition_concept, partition_covariate, partition_prior, partition_unbalanced,
    power_law_sizes, split_sizes,
};
pub use noise::{apply_gaussian, apply_salt_pepper};
pub use quality::inject_quality;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MaterializedShard};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum SplitMode {
    Covariate = 0,
    Prior = 1,
    Concept = 2,
}

impl TryFrom<u8> for SplitMode {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(SplitMode::Covariate),
            1 => Ok(SplitMode::Prior),
            2 => Ok(SplitMode::Concept),
            _ => Err(format!("split_mode {v} is not one of {{0, 1, 2}}")),
        }
    }
}

impl From<SplitMode> for u8 {
    fn from(m: SplitMode) -> u8 {
        m as u8
    }
}

impl SplitMode {
    pub const ALL: [SplitMode; 3] = [SplitMode::Covariate, SplitMode::Prior, SplitMode::Concept];

    pub fn name(&self) -> &'static str {
        match self {
            SplitMode::Covariate => "covariate",
            SplitMode::Prior => "prior",
            SplitMode::Concept => "concept",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    Gaussian,
    SaltPepper,
}

/// Per-node noise schedule. Node `i` of `K` gets `max * i / (K - 1)` unless
/// explicit `levels` are given. Gaussian levels are standard deviations in
/// pixel units; salt-pepper levels are the fraction of spatial positions hit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub kind: NoiseKind,
    #[serde(default)]
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
}

impl NoiseSpec {
    pub fn gaussian(max: f64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Gaussian,
            max,
            levels: None,
        }
    }

    pub fn salt_pepper(max: f64) -> Self {
        NoiseSpec {
            kind: NoiseKind::SaltPepper,
            max,
            levels: None,
        }
    }

    pub fn level(&self, node: usize, node_num: usize) -> f64 {
        match &self.levels {
            Some(l) => l[node],
            None if node_num <= 1 => 0.0,
            None => self.max * node as f64 / (node_num - 1) as f64,
        }
    }

    fn validate(&self, node_num: usize) -> Result<()> {
        let mut all = vec![self.max];
        if let Some(l) = &self.levels {
            if l.len() != node_num {
                return Err(Error::spec(format!(
                    "noise ladder has {} levels for {node_num} nodes",
                    l.len()
                )));
            }
            all.extend_from_slice(l);
        }
        for v in all {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::spec(format!(
                    "noise level {v} must be a non-negative number"
                )));
            }
            if self.kind == NoiseKind::SaltPepper && v > 1.0 {
                return Err(Error::spec(format!("salt-pepper rate {v} exceeds 1")));
            }
        }
        Ok(())
    }

    /// Descriptor for node `node`, with its own noise stream.
    pub(crate) fn descriptor(&self, node: usize, node_num: usize, seed: u64) -> NoiseDescriptor {
        let level = self.level(node, node_num);
        let seed = crate::rng::derive(seed, &[crate::rng::tags::NOISE, node as u64]);
        match self.kind {
            NoiseKind::None => NoiseDescriptor::None,
            _ if level == 0.0 => NoiseDescriptor::None,
            NoiseKind::Gaussian => NoiseDescriptor::Gaussian { sigma: level, seed },
            NoiseKind::SaltPepper => NoiseDescriptor::SaltPepper { rate: level, seed },
        }
    }
}

/// How shard sizes are chosen in covariate and concept modes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SizeProfile {
    /// Near-equal sizes covering the whole dataset (differ by at most 1).
    #[default]
    Equal,
    Explicit {
        sizes: Vec<usize>,
    },
    /// Sizes proportional to `k^-alpha`, `k = 1..=node_num`, covering the dataset.
    PowerLaw {
        alpha: f64,
    },
}

fn default_labels_per_node() -> usize {
    2
}

fn default_group_count() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub split_mode: SplitMode,
    pub node_num: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "default_labels_per_node")]
    pub labels_per_node: usize,
    #[serde(default)]
    pub overlap_frac: f64,
    #[serde(default)]
    pub error_frac: f64,
    /// Apply the noise ladder in prior mode too.
    #[serde(default)]
    pub prior_noise: bool,
    #[serde(default = "default_group_count")]
    pub group_count: usize,
    /// One permutation per concept group; cyclic shifts when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutations: Option<Vec<Vec<u8>>>,
    #[serde(default)]
    pub size_profile: SizeProfile,
}

impl PartitionSpec {
    pub fn new(split_mode: SplitMode, node_num: usize, seed: u64) -> Self {
        PartitionSpec {
            split_mode,
            node_num,
            seed,
            noise: NoiseSpec::default(),
            labels_per_node: default_labels_per_node(),
            overlap_frac: 0.0,
            error_frac: 0.0,
            prior_noise: false,
            group_count: default_group_count(),
            permutations: None,
            size_profile: SizeProfile::Equal,
        }
    }

    /// Checks everything that does not depend on the dataset.
    pub fn validate(&self) -> Result<()> {
        if self.node_num == 0 {
            return Err(Error::spec("node_num must be at least 1"));
        }
        self.noise.validate(self.node_num)?;
        check_frac("overlap_frac", self.overlap_frac)?;
        check_frac("error_frac", self.error_frac)?;
        if self.labels_per_node == 0 {
            return Err(Error::spec("labels_per_node must be at least 1"));
        }
        if self.group_count == 0 {
            return Err(Error::spec("group_count must be at least 1"));
        }
        if let Some(p) = &self.permutations {
            if p.len() != self.group_count {
                return Err(Error::spec(format!(
                    "{} permutations given for {} groups",
                    p.len(),
                    self.group_count
                )));
            }
        }
        match &self.size_profile {
            SizeProfile::Explicit { sizes } => {
                if sizes.len() != self.node_num {
                    return Err(Error::spec(format!(
                        "{} explicit sizes for {} nodes",
                        sizes.len(),
                        self.node_num
                    )));
                }
            }
            SizeProfile::PowerLaw { alpha } if !(alpha.is_finite() && *alpha >= 0.0) => {
                return Err(Error::spec(format!(
                    "power-law exponent {alpha} must be non-negative"
                )));
            }
            _ => {}
        }
        Ok(())
    }
}

pub(crate) fn check_frac(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::spec(format!("{name} = {v} is outside [0, 1]")))
    }
}

/// `floor(frac * n)`, robust to representation error such as `0.1 * 100`.
pub(crate) fn frac_count(frac: f64, n: usize) -> usize {
    let x = frac * n as f64;
    let r = x.round();
    if (x - r).abs() < 1e-9 * n.max(1) as f64 {
        r as usize
    } else {
        x.floor() as usize
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseDescriptor {
    #[default]
    None,
    Gaussian {
        sigma: f64,
        seed: u64,
    },
    SaltPepper {
        rate: f64,
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualitySpec {
    /// Fraction of the source shared by every shard.
    pub n_frac: f64,
    /// Fraction of each shard's labels replaced by a wrong label.
    pub e_frac: f64,
}

impl QualitySpec {
    pub fn new(n_frac: f64, e_frac: f64) -> Result<Self> {
        let q = QualitySpec { n_frac, e_frac };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        check_frac("n_frac", self.n_frac)?;
        check_frac("e_frac", self.e_frac)
    }
}

/// One node's data as references into a source dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClientShard {
    pub node_id: usize,
    pub indices: Vec<usize>,
    /// Whole-shard relabeling: source label `l` reads as `label_map[l]`.
    pub label_map: Option<Vec<u8>>,
    /// Per-sample labels keyed by position in `indices`; applied last.
    pub overrides: BTreeMap<usize, u8>,
    pub noise: NoiseDescriptor,
}

impl ClientShard {
    pub fn new(node_id: usize, indices: Vec<usize>) -> Self {
        ClientShard {
            node_id,
            indices,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Label before per-sample overrides.
    pub fn mapped_label(&self, ds: &Dataset, pos: usize) -> u8 {
        let l = ds.label(self.indices[pos]);
        match &self.label_map {
            Some(m) => m[l as usize],
            None => l,
        }
    }

    pub fn effective_label(&self, ds: &Dataset, pos: usize) -> u8 {
        match self.overrides.get(&pos) {
            Some(&l) => l,
            None => self.mapped_label(ds, pos),
        }
    }

    pub fn effective_labels(&self, ds: &Dataset) -> Vec<u8> {
        (0..self.len())
            .map(|p| self.effective_label(ds, p))
            .collect()
    }

    /// Bounds, duplicates, and label ranges against `ds`.
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        let mut seen = std::collections::HashSet::with_capacity(self.indices.len());
        for &i in &self.indices {
            if i >= ds.len() {
                return Err(Error::spec(format!(
                    "node {}: index {i} out of bounds",
                    self.node_id
                )));
            }
            if !seen.insert(i) {
                return Err(Error::spec(format!(
                    "node {}: duplicate index {i}",
                    self.node_id
                )));
            }
        }
        let k = ds.num_classes();
        if let Some(m) = &self.label_map {
            if m.len() != k || m.iter().any(|&l| l as usize >= k) {
                return Err(Error::spec(format!(
                    "node {}: invalid label map",
                    self.node_id
                )));
            }
        }
        for (&p, &l) in &self.overrides {
            if p >= self.len() || l as usize >= k {
                return Err(Error::spec(format!(
                    "node {}: override {p} -> {l} out of range",
                    self.node_id
                )));
            }
        }
        Ok(())
    }
}

/// Copies a shard's samples out of `ds`, applying labels and noise.
pub fn materialize(ds: &Dataset, shard: &ClientShard) -> Result<MaterializedShard> {
    shard.validate(ds)?;
    let mut data = ds.subset(&shard.indices);
    let labels = shard.effective_labels(ds);
    let dims = data.dims();
    let mut images = data.images().to_vec();
    match shard.noise {
        NoiseDescriptor::None => {}
        NoiseDescriptor::Gaussian { sigma, seed } => apply_gaussian(&mut images, sigma, seed),
        NoiseDescriptor::SaltPepper { rate, seed } => {
            apply_salt_pepper(&mut images, dims, rate, seed)
        }
    }
    data = Dataset::from_parts_unchecked(data.name(), dims, data.num_classes(), images, labels);
    Ok(MaterializedShard {
        node_id: shard.node_id,
        data,
    })
}

pub fn materialize_all(ds: &Dataset, shards: &[ClientShard]) -> Result<Vec<MaterializedShard>> {
    shards.iter().map(|s| materialize(ds, s)).collect()
}
