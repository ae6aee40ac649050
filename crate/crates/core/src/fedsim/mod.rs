//! FedAvg simulation: local SGD on each participating client, weighted
//! parameter averaging at the server, byte accounting and evaluation.

mod metrics;

pub use metrics::{evaluate, evaluate_predictions, Metrics};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ImageDims, MaterializedShard};
use crate::error::{Error, Result};
use crate::nn::{sgd_step, LayerSpec, Loss, Network, ParamSet, Tensor};
use crate::rng::{derive, tags, Rng};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Every participating node counts the same.
    Equal,
    /// Nodes count in proportion to their sample counts.
    #[default]
    SizeProportional,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelArch {
    /// `Mlp` for single-channel images, `Cnn` otherwise.
    #[default]
    Auto,
    Mlp,
    Cnn,
}

/// Layers of the client model for images of `dims` and `classes` outputs.
pub fn model_layers(arch: ModelArch, dims: ImageDims, classes: usize) -> Result<Vec<LayerSpec>> {
    let arch = match arch {
        ModelArch::Auto if dims.channels == 1 => ModelArch::Mlp,
        ModelArch::Auto => ModelArch::Cnn,
        a => a,
    };
    Ok(match arch {
        ModelArch::Mlp => vec![
            LayerSpec::Flatten,
            LayerSpec::dense(dims.len(), 128),
            LayerSpec::Relu,
            LayerSpec::dense(128, classes),
        ],
        ModelArch::Cnn => {
            if dims.height % 4 != 0 || dims.width % 4 != 0 {
                return Err(Error::spec(format!(
                    "cnn needs sides divisible by 4, got {dims:?}"
                )));
            }
            vec![
                LayerSpec::conv(dims.channels, 16, 3, 2, 1),
                LayerSpec::Relu,
                LayerSpec::conv(16, 32, 3, 2, 1),
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::dense(32 * (dims.height / 4) * (dims.width / 4), classes),
            ]
        }
        ModelArch::Auto => unreachable!(),
    })
}

pub fn build_model(
    arch: ModelArch,
    dims: ImageDims,
    classes: usize,
    seed: u64,
) -> Result<Network<f32>> {
    Network::new(&dims.chw(), model_layers(arch, dims, classes)?, seed)
}

fn default_rounds() -> usize {
    100
}
fn default_local_epochs() -> usize {
    1
}
fn default_batch_size() -> usize {
    32
}
fn default_lr() -> f64 {
    0.05
}
fn default_eval_every() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedConfig {
    pub node_num: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    /// Defaults to every node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clients_per_round: Option<usize>,
    #[serde(default = "default_local_epochs")]
    pub local_epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default)]
    pub model: ModelArch,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Extra rounds to evaluate besides every `eval_every`-th and the last.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl FedConfig {
    pub fn new(node_num: usize, rounds: usize, seed: u64) -> Self {
        FedConfig {
            node_num,
            rounds,
            clients_per_round: None,
            local_epochs: default_local_epochs(),
            batch_size: default_batch_size(),
            lr: default_lr(),
            weighting: Weighting::default(),
            model: ModelArch::default(),
            eval_every: default_eval_every(),
            checkpoints: Vec::new(),
            seed,
        }
    }

    pub fn participants(&self) -> usize {
        self.clients_per_round.unwrap_or(self.node_num)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.participants();
        if self.node_num == 0 || k == 0 || k > self.node_num {
            return Err(Error::spec(format!(
                "clients_per_round {k} must lie in 1..={}",
                self.node_num
            )));
        }
        if self.rounds == 0 {
            return Err(Error::spec("rounds must be at least 1"));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::spec("batch_size and eval_every must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::spec(format!(
                "learning rate {} must be non-negative",
                self.lr
            )));
        }
        if let Some(&c) = self
            .checkpoints
            .iter()
            .find(|&&c| c == 0 || c > self.rounds)
        {
            return Err(Error::spec(format!(
                "checkpoint {c} outside rounds 1..={}",
                self.rounds
            )));
        }
        Ok(())
    }

    fn evaluates(&self, round: usize) -> bool {
        round % self.eval_every == 0 || round == self.rounds || self.checkpoints.contains(&round)
    }

    pub fn local(&self) -> LocalHyper {
        LocalHyper {
            epochs: self.local_epochs,
            batch_size: self.batch_size,
            lr: self.lr,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

/// One-hot targets for `indices` of `ds`.
pub fn one_hot(ds: &Dataset, indices: &[usize]) -> Tensor<f32> {
    let k = ds.num_classes();
    let mut v = vec![0.0f32; indices.len() * k];
    for (b, &i) in indices.iter().enumerate() {
        v[b * k + ds.label(i) as usize] = 1.0;
    }
    Tensor::from_vec(vec![indices.len(), k], v).expect("non-empty batch")
}

/// Local SGD from `global`. Epoch `e` visits the shard in the order given by
/// the `(SHUFFLE, e)` substream of `shuffle_seed`; the last batch may be short.
pub fn client_update(
    global: &Network<f32>,
    shard: &Dataset,
    hyper: LocalHyper,
    shuffle_seed: u64,
) -> Result<(ParamSet<f32>, usize)> {
    if shard.is_empty() {
        return Err(Error::Empty("client shard"));
    }
    if hyper.batch_size == 0 {
        return Err(Error::spec("batch_size must be positive"));
    }
    if hyper.epochs == 0 || hyper.lr == 0.0 {
        return Ok((global.params().clone(), shard.len()));
    }
    let mut net = global.clone();
    let lr = hyper.lr as f32;
    let mut order: Vec<usize> = (0..shard.len()).collect();
    for epoch in 0..hyper.epochs {
        Rng::substream(shuffle_seed, &[tags::SHUFFLE, epoch as u64]).shuffle(&mut order);
        for batch in order.chunks(hyper.batch_size) {
            let x = shard.tensor::<f32>(batch);
            let t = one_hot(shard, batch);
            let (_, g) = net.backward(&x, &t, Loss::SoftmaxCe)?;
            sgd_step(net.params_mut(), &g, lr)?;
        }
    }
    Ok((net.params().clone(), shard.len()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClientUpdate {
    pub node_id: usize,
    pub params: ParamSet<f32>,
    pub count: usize,
}

/// Weighted mean of client parameters, reduced in ascending node-id order.
/// Sums run in `f64` with integer weights (1 or the sample count) and are
/// divided once at the end, so averaging identical models is exact.
pub fn aggregate(updates: &[ClientUpdate], weighting: Weighting) -> Result<ParamSet<f32>> {
    let first = updates.first().ok_or(Error::Empty("update list"))?;
    if updates.iter().any(|u| !u.params.same_layout(&first.params)) {
        return Err(Error::Layout(
            "client updates have different layouts".into(),
        ));
    }
    let mut order: Vec<&ClientUpdate> = updates.iter().collect();
    order.sort_by_key(|u| u.node_id);
    let weight = |u: &ClientUpdate| match weighting {
        Weighting::Equal => 1.0,
        Weighting::SizeProportional => u.count as f64,
    };
    let total: f64 = order.iter().map(|u| weight(u)).sum();
    if total <= 0.0 {
        return Err(Error::spec("aggregation weights sum to zero"));
    }
    let mut acc = vec![0.0f64; first.params.len()];
    for u in &order {
        let w = weight(u);
        for (a, &p) in acc.iter_mut().zip(u.params.values()) {
            *a += w * p as f64;
        }
    }
    let mut out = first.params.zeros_like();
    for (o, a) in out.values_mut().iter_mut().zip(acc) {
        *o = (a / total) as f32;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    /// 1-based.
    pub round: usize,
    pub participants: Vec<usize>,
    pub sample_counts: Vec<usize>,
    /// Present on evaluated rounds only.
    pub metrics: Option<Metrics>,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

pub const ROUND_CSV_HEADER: &str = "round,accuracy,precision,recall,bytes_up,bytes_down";

impl RoundLog {
    /// One CSV line; metric cells are empty on rounds without evaluation.
    pub fn csv_line(&self) -> String {
        let (a, p, r) = match &self.metrics {
            Some(m) => (
                m.accuracy.to_string(),
                m.precision.to_string(),
                m.recall.to_string(),
            ),
            None => Default::default(),
        };
        format!(
            "{},{a},{p},{r},{},{}",
            self.round, self.bytes_up, self.bytes_down
        )
    }
}

pub fn round_logs_csv(logs: &[RoundLog]) -> String {
    let mut s = String::from(ROUND_CSV_HEADER);
    s.push('\n');
    for l in logs {
        s.push_str(&l.csv_line());
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug)]
pub struct FedRun {
    pub initial: Metrics,
    pub logs: Vec<RoundLog>,
    pub model: Network<f32>,
}

impl FedRun {
    /// Metrics of the last evaluated round.
    pub fn final_metrics(&self) -> Metrics {
        self.logs
            .iter()
            .rev()
            .find_map(|l| l.metrics)
            .unwrap_or(self.initial)
    }

    pub fn metrics_at(&self, round: usize) -> Option<Metrics> {
        if round == 0 {
            return Some(self.initial);
        }
        self.logs.get(round - 1).and_then(|l| l.metrics)
    }
}

/// JSON record of a run with its configuration embedded.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: FedConfig,
    pub param_count: usize,
    pub initial: Metrics,
    pub logs: Vec<RoundLog>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

/// Shuffle seed shared by every client in `round`.
pub fn round_seed(seed: u64, round: usize) -> u64 {
    derive(seed, &[tags::SHUFFLE, round as u64])
}

/// Runs `cfg.rounds` FedAvg rounds starting from a freshly initialized model.
pub fn run_federated(
    shards: &[MaterializedShard],
    test_set: &Dataset,
    cfg: &FedConfig,
) -> Result<FedRun> {
    cfg.validate()?;
    let first = shards.first().ok_or(Error::Empty("shard list"))?;
    let model = build_model(
        cfg.model,
        first.data.dims(),
        first.data.num_classes(),
        cfg.seed,
    )?;
    run_federated_from(model, shards, test_set, cfg)
}

pub fn run_federated_from(
    mut model: Network<f32>,
    shards: &[MaterializedShard],
    test_set: &Dataset,
    cfg: &FedConfig,
) -> Result<FedRun> {
    cfg.validate()?;
    if shards.len() != cfg.node_num {
        return Err(Error::spec(format!(
            "{} shards for node_num {}",
            shards.len(),
            cfg.node_num
        )));
    }
    if let Some(s) = shards.iter().find(|s| s.data.is_empty()) {
        return Err(Error::spec(format!("shard of node {} is empty", s.node_id)));
    }
    let bytes = (cfg.participants() * 4 * model.param_count()) as u64;
    let initial = evaluate(&model, test_set)?;
    let mut logs = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let mut chosen: Vec<usize> = if cfg.participants() == cfg.node_num {
            (0..cfg.node_num).collect()
        } else {
            Rng::substream(cfg.seed, &[tags::CLIENTS, round as u64])
                .sample(cfg.node_num, cfg.participants())
        };
        chosen.sort_unstable();
        let seed = round_seed(cfg.seed, round);
        let hyper = cfg.local();
        let updates = chosen
            .par_iter()
            .map(|&k| {
                let (params, count) = client_update(&model, &shards[k].data, hyper, seed)?;
                Ok(ClientUpdate {
                    node_id: shards[k].node_id,
                    params,
                    count,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        model.set_params(aggregate(&updates, cfg.weighting)?)?;
        let metrics = if cfg.evaluates(round) {
            Some(evaluate(&model, test_set)?)
        } else {
            None
        };
        logs.push(RoundLog {
            round,
            sample_counts: updates.iter().map(|u| u.count).collect(),
            participants: updates.iter().map(|u| u.node_id).collect(),
            metrics,
            bytes_up: bytes,
            bytes_down: bytes,
        });
    }
    Ok(FedRun {
        initial,
        logs,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(v: &[f32]) -> ParamSet<f32> {
        let slot = crate::nn::ParamSlot {
            layer: 0,
            offset: 0,
            len: v.len(),
        };
        ParamSet::from_parts(v.to_vec(), vec![slot]).unwrap()
    }

    fn upd(node_id: usize, v: &[f32], count: usize) -> ClientUpdate {
        ClientUpdate {
            node_id,
            params: ps(v),
            count,
        }
    }

    #[test]
    fn aggregation_arithmetic() {
        let one = aggregate(&[upd(0, &[1.5, -2.0], 7)], Weighting::Equal).unwrap();
        assert_eq!(one.values(), &[1.5, -2.0]);
        let eq = aggregate(
            &[upd(0, &[1.0, 3.0], 1), upd(1, &[3.0, 5.0], 9)],
            Weighting::Equal,
        )
        .unwrap();
        assert_eq!(eq.values(), &[2.0, 4.0]);
        let w = aggregate(
            &[upd(0, &[1.0, 2.0], 100), upd(1, &[5.0, -2.0], 300)],
            Weighting::SizeProportional,
        )
        .unwrap();
        assert!((w.values()[0] - (0.25 * 1.0 + 0.75 * 5.0)).abs() < 1e-7);
        assert!((w.values()[1] - (0.25 * 2.0 + 0.75 * -2.0)).abs() < 1e-7);
        assert!(aggregate(&[], Weighting::Equal).is_err());
        let bad = ClientUpdate {
            node_id: 1,
            params: Network::<f32>::zeroed(&[2], vec![LayerSpec::dense(2, 2)])
                .unwrap()
                .params()
                .clone(),
            count: 1,
        };
        assert!(aggregate(&[upd(0, &[1.0, 2.0], 1), bad], Weighting::Equal).is_err());
    }

    #[test]
    fn identical_updates_are_exact() {
        let v = [0.1f32, -3.7, 1e-7, 12345.678];
        let updates: Vec<ClientUpdate> = (0..7).map(|k| upd(k, &v, 13 + k)).collect();
        for w in [Weighting::Equal, Weighting::SizeProportional] {
            assert_eq!(aggregate(&updates, w).unwrap().values(), &v);
        }
    }

    #[test]
    fn linear_model_single_full_batch_step() {
        // Dense(1->2) softmax model with zero params, x = {0.2, 1.0},
        // labels {0, 1}. Uniform softmax gives dL/dy = (0.5 - t) / 2.
        let ds = Dataset::new(
            crate::data::DatasetName::Synthetic,
            ImageDims::new(1, 1, 1),
            2,
            vec![51, 255],
            vec![0, 1],
        )
        .unwrap();
        let net =
            Network::<f32>::zeroed(&[1, 1, 1], vec![LayerSpec::Flatten, LayerSpec::dense(1, 2)])
                .unwrap();
        let hyper = LocalHyper {
            epochs: 1,
            batch_size: 2,
            lr: 0.5,
        };
        let (p, n) = client_update(&net, &ds, hyper, 3).unwrap();
        assert_eq!(n, 2);
        // dy0 = [-0.25, 0.25], dy1 = [0.25, -0.25]
        // grad_w = 0.2 * dy0 + 1.0 * dy1 = [0.2, -0.2], grad_b = [0, 0]
        let want = [-0.1, 0.1, 0.0, 0.0];
        for (a, b) in p.values().iter().zip(want) {
            assert!((*a as f64 - b).abs() < 1e-6, "{:?} vs {want:?}", p.values());
        }
    }

    #[test]
    fn frozen_updates() {
        let ds = Dataset::synthetic(10, ImageDims::new(2, 2, 1), 2, 0);
        let net = build_model(ModelArch::Mlp, ds.dims(), 2, 1).unwrap();
        for hyper in [
            LocalHyper {
                epochs: 0,
                batch_size: 4,
                lr: 0.1,
            },
            LocalHyper {
                epochs: 2,
                batch_size: 4,
                lr: 0.0,
            },
        ] {
            let (p, _) = client_update(&net, &ds, hyper, 0).unwrap();
            assert_eq!(&p, net.params());
        }
        let empty = ds.subset(&[]);
        assert!(client_update(
            &net,
            &empty,
            LocalHyper {
                epochs: 1,
                batch_size: 1,
                lr: 0.1
            },
            0
        )
        .is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = FedConfig::new(3, 5, 0);
        assert!(c.validate().is_ok());
        c.clients_per_round = Some(4);
        assert!(c.validate().is_err());
        c.clients_per_round = Some(0);
        assert!(c.validate().is_err());
        c.clients_per_round = None;
        c.rounds = 0;
        assert!(c.validate().is_err());
        c.rounds = 5;
        c.checkpoints = vec![6];
        assert!(c.validate().is_err());
    }

    #[test]
    fn default_models() {
        let m = model_layers(ModelArch::Auto, ImageDims::MNIST, 10).unwrap();
        assert_eq!(m[1], LayerSpec::dense(784, 128));
        let c = model_layers(ModelArch::Auto, ImageDims::CIFAR10, 10).unwrap();
        assert_eq!(c[5], LayerSpec::dense(2048, 10));
        let net = build_model(ModelArch::Cnn, ImageDims::CIFAR10, 10, 0).unwrap();
        assert_eq!(net.output_shape(), &[10]);
    }
}
