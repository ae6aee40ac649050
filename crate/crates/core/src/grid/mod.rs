//! Experiment grids over node count, communication rounds, data quality and
//! NEI-by-fraction, plus CSV / aligned-text rendering.

mod render;

pub use render::{parse_csv, render, write_table, CsvTable, Format, TableFiles};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MaterializedShard};
use crate::error::{Error, Result};
use crate::fedsim::{run_federated, FedConfig, FedRun};
use crate::nei::{nei_report, Encoder, EncodingCache};
use crate::partition::{
    check_frac, frac_count, inject_quality, materialize_all, partition, partition_unbalanced,
    power_law_sizes, NoiseSpec, PartitionSpec, QualitySpec, SplitMode,
};
use crate::rng::{tags, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Nodes,
    Rounds,
    Quality,
    Nei,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Nodes => "nodes",
            Axis::Rounds => "rounds",
            Axis::Quality => "quality",
            Axis::Nei => "nei",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkewKind {
    /// Power-law shard sizes.
    QuantitySkew,
    /// Label-shard assignment with `labels_per_node` labels each.
    LabelSkew,
}

impl SkewKind {
    pub fn label(&self) -> &'static str {
        match self {
            SkewKind::QuantitySkew => "quantity_skew",
            SkewKind::LabelSkew => "label_skew",
        }
    }
}

fn default_skews() -> Vec<SkewKind> {
    vec![SkewKind::QuantitySkew, SkewKind::LabelSkew]
}
fn default_repetitions() -> usize {
    3
}
fn default_alpha() -> f64 {
    1.2
}
fn default_lpn() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub axis: Axis,
    /// Node counts, round checkpoints, E levels (quality) or fractions (nei).
    pub values: Vec<f64>,
    /// N levels of the quality grid.
    #[serde(default)]
    pub n_levels: Vec<f64>,
    #[serde(default = "default_skews")]
    pub skews: Vec<SkewKind>,
    pub fed: FedConfig,
    /// Base partition settings; the nei axis takes noise, error and group
    /// parameters from here.
    pub partition: PartitionSpec,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default = "default_alpha")]
    pub power_law_alpha: f64,
    #[serde(default = "default_lpn")]
    pub labels_per_node: usize,
}

impl GridSpec {
    pub fn new(axis: Axis, values: Vec<f64>, fed: FedConfig, partition: PartitionSpec) -> Self {
        GridSpec {
            axis,
            values,
            n_levels: vec![0.0],
            skews: default_skews(),
            fed,
            partition,
            repetitions: default_repetitions(),
            seed_base: 0,
            power_law_alpha: default_alpha(),
            labels_per_node: default_lpn(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::spec("grid axis values are empty"));
        }
        if self.repetitions == 0 {
            return Err(Error::spec("repetitions must be at least 1"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::spec("grid axis values must be finite"));
        }
        let increasing = self.values.windows(2).all(|w| w[0] < w[1]);
        match self.axis {
            Axis::Nodes | Axis::Rounds => {
                if !increasing {
                    return Err(Error::spec("axis values must be strictly increasing"));
                }
                if self.values.iter().any(|&v| v < 1.0 || v.fract() != 0.0) {
                    return Err(Error::spec(
                        "node counts and checkpoints must be positive integers",
                    ));
                }
            }
            Axis::Quality => {
                for &v in self.values.iter().chain(&self.n_levels) {
                    check_frac("quality level", v)?;
                }
                if self.n_levels.is_empty() {
                    return Err(Error::spec("quality grid needs at least one N level"));
                }
            }
            Axis::Nei => {
                if !increasing {
                    return Err(Error::spec("fractions must be strictly increasing"));
                }
                for &v in &self.values {
                    check_frac("fraction", v)?;
                }
            }
        }
        if self.axis != Axis::Nei && self.skews.is_empty() {
            return Err(Error::spec("no skew rows requested"));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repetitions as u64)
            .map(|r| self.seed_base.wrapping_add(r))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Accuracy,
    Nei,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Cell {
    fn from_values(values: Vec<f64>, seeds: Vec<u64>) -> Cell {
        Cell {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            values,
            seeds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub dataset: String,
    pub grid: GridSpec,
    pub wall_time_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder_fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub title: String,
    pub axis: Axis,
    pub kind: ValueKind,
    pub corner: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// `cells[row][col]`.
    pub cells: Vec<Vec<Cell>>,
    pub meta: TableMeta,
}

impl ResultTable {
    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.cells[row][col]
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        self.cells
            .iter()
            .map(|r| r.iter().map(|c| c.mean).collect())
            .collect()
    }
}

fn percent_label(v: f64) -> String {
    format!("{}%", (v * 1000.0).round() / 10.0)
}

/// Shards for one grid cell: the skew partition, then quality injection.
pub fn cell_shards(
    source: &Dataset,
    skew: SkewKind,
    nodes: usize,
    quality: QualitySpec,
    spec: &GridSpec,
    seed: u64,
) -> Result<Vec<MaterializedShard>> {
    let shards = match skew {
        SkewKind::QuantitySkew => {
            let sizes = power_law_sizes(source.len(), nodes, spec.power_law_alpha)?;
            partition_unbalanced(source, &sizes, seed)?
        }
        SkewKind::LabelSkew => {
            let mut p = PartitionSpec::new(SplitMode::Prior, nodes, seed);
            p.labels_per_node = spec.labels_per_node;
            partition(source, &p)?
        }
    };
    let shards = inject_quality(&shards, source, quality, seed)?;
    materialize_all(source, &shards)
}

/// One federated run of a grid cell. Nodes-table and quality-table cells with
/// the same coordinates share this path, so `(N, E) = (0, 0)` reproduces the
/// nodes-table cell exactly.
#[allow(clippy::too_many_arguments)]
pub fn run_cell(
    source: &Dataset,
    test: &Dataset,
    spec: &GridSpec,
    skew: SkewKind,
    nodes: usize,
    quality: QualitySpec,
    seed: u64,
    checkpoints: &[usize],
) -> Result<FedRun> {
    let shards = cell_shards(source, skew, nodes, quality, spec, seed)?;
    let mut cfg = spec.fed.clone();
    cfg.node_num = nodes;
    cfg.seed = seed;
    if cfg.clients_per_round.is_some_and(|k| k > nodes) {
        cfg.clients_per_round = Some(nodes);
    }
    if let Some(&last) = checkpoints.last() {
        cfg.rounds = last;
        cfg.checkpoints = checkpoints.to_vec();
    }
    run_federated(&shards, test, &cfg)
}

fn at(e: Error, row: &str, col: &str) -> Error {
    e.context(format!("cell ({row}, {col})"))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    spec: &GridSpec,
    title: &str,
    kind: ValueKind,
    corner: &str,
    rows: Vec<String>,
    cols: Vec<String>,
    cells: Vec<Vec<Cell>>,
    dataset: &Dataset,
    start: Instant,
) -> ResultTable {
    ResultTable {
        title: title.into(),
        axis: spec.axis,
        kind,
        corner: corner.into(),
        row_labels: rows,
        col_labels: cols,
        cells,
        meta: TableMeta {
            dataset: dataset.name().to_string(),
            grid: spec.clone(),
            wall_time_secs: start.elapsed().as_secs_f64(),
            encoder_fingerprint: None,
            run_config: None,
        },
    }
}

fn expect_axis(spec: &GridSpec, axis: Axis) -> Result<()> {
    spec.validate()?;
    if spec.axis != axis {
        return Err(Error::spec(format!(
            "{} table needs axis {}",
            axis.name(),
            axis.name()
        )));
    }
    Ok(())
}

/// Rows are skew kinds, columns node counts; cells hold final accuracy.
pub fn run_nodes_table(spec: &GridSpec, source: &Dataset, test: &Dataset) -> Result<ResultTable> {
    expect_axis(spec, Axis::Nodes)?;
    let start = Instant::now();
    let seeds = spec.seeds();
    let nodes: Vec<usize> = spec.values.iter().map(|&v| v as usize).collect();
    let cols: Vec<String> = nodes.iter().map(|n| format!("{n} nodes")).collect();
    let jobs: Vec<(usize, usize, u64)> = (0..spec.skews.len())
        .flat_map(|r| {
            (0..nodes.len()).flat_map(move |c| (0..spec.repetitions).map(move |k| (r, c, k as u64)))
        })
        .map(|(r, c, k)| (r, c, seeds[k as usize]))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(r, c, seed)| {
            run_cell(
                source,
                test,
                spec,
                spec.skews[r],
                nodes[c],
                QualitySpec::default(),
                seed,
                &[],
            )
            .map(|run| run.final_metrics().accuracy)
            .map_err(|e| at(e, spec.skews[r].label(), &cols[c]))
        })
        .collect::<Result<Vec<f64>>>()?;
    let cells = group(&results, spec.skews.len(), nodes.len(), &seeds);
    let rows = spec.skews.iter().map(|s| s.label().to_string()).collect();
    Ok(finish(
        spec,
        "Data nodes number",
        ValueKind::Accuracy,
        "skew",
        rows,
        cols,
        cells,
        source,
        start,
    ))
}

/// One run per (skew, repetition) with `rounds = max checkpoint`; cells read
/// the accuracy at each checkpoint of that run.
pub fn run_rounds_table(spec: &GridSpec, source: &Dataset, test: &Dataset) -> Result<ResultTable> {
    expect_axis(spec, Axis::Rounds)?;
    let start = Instant::now();
    let seeds = spec.seeds();
    let checkpoints: Vec<usize> = spec.values.iter().map(|&v| v as usize).collect();
    let cols: Vec<String> = checkpoints.iter().map(|c| format!("{c} rounds")).collect();
    let jobs: Vec<(usize, u64)> = (0..spec.skews.len())
        .flat_map(|r| seeds.iter().map(move |&s| (r, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(r, seed)| {
            let run = run_cell(
                source,
                test,
                spec,
                spec.skews[r],
                spec.fed.node_num,
                QualitySpec::default(),
                seed,
                &checkpoints,
            )
            .map_err(|e| at(e, spec.skews[r].label(), "all checkpoints"))?;
            Ok(checkpoints
                .iter()
                .map(|&c| run.metrics_at(c).expect("checkpoint evaluated").accuracy)
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let mut flat = Vec::new();
    for r in 0..spec.skews.len() {
        for c in 0..checkpoints.len() {
            for k in 0..spec.repetitions {
                flat.push(runs[r * spec.repetitions + k][c]);
            }
        }
    }
    let cells = group(&flat, spec.skews.len(), checkpoints.len(), &seeds);
    let rows = spec.skews.iter().map(|s| s.label().to_string()).collect();
    Ok(finish(
        spec,
        "Communication rounds",
        ValueKind::Accuracy,
        "skew",
        rows,
        cols,
        cells,
        source,
        start,
    ))
}

/// Rows are `(skew, N)` pairs, columns E levels; node count from `spec.fed`.
pub fn run_quality_table(spec: &GridSpec, source: &Dataset, test: &Dataset) -> Result<ResultTable> {
    expect_axis(spec, Axis::Quality)?;
    let start = Instant::now();
    let seeds = spec.seeds();
    let rows: Vec<(SkewKind, f64)> = spec
        .skews
        .iter()
        .flat_map(|&s| spec.n_levels.iter().map(move |&n| (s, n)))
        .collect();
    let row_labels: Vec<String> = rows
        .iter()
        .map(|(s, n)| format!("{} N={}", s.label(), percent_label(*n)))
        .collect();
    let cols: Vec<String> = spec
        .values
        .iter()
        .map(|&e| format!("E={}", percent_label(e)))
        .collect();
    let jobs: Vec<(usize, usize, u64)> = (0..rows.len())
        .flat_map(|r| {
            (0..cols.len()).flat_map(move |c| (0..spec.repetitions).map(move |k| (r, c, k)))
        })
        .map(|(r, c, k)| (r, c, seeds[k]))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(r, c, seed)| {
            let q = QualitySpec::new(rows[r].1, spec.values[c])?;
            run_cell(
                source,
                test,
                spec,
                rows[r].0,
                spec.fed.node_num,
                q,
                seed,
                &[],
            )
            .map(|run| run.final_metrics().accuracy)
            .map_err(|e| at(e, &row_labels[r], &cols[c]))
        })
        .collect::<Result<Vec<f64>>>()?;
    let cells = group(&results, rows.len(), cols.len(), &seeds);
    Ok(finish(
        spec,
        "Quality of data nodes",
        ValueKind::Accuracy,
        "N\\E",
        row_labels,
        cols,
        cells,
        source,
        start,
    ))
}

/// Node datasets for one NEI cell. A seeded `fraction` of `source` goes
/// through the shift partitioner; the untouched rest is dealt evenly to the
/// same nodes, so every cell covers the whole source and only the share of
/// shifted data changes along a row.
pub fn nei_cell_shards(
    source: &Dataset,
    base: &PartitionSpec,
    mode: SplitMode,
    fraction: f64,
    seed: u64,
) -> Result<Vec<MaterializedShard>> {
    check_frac("fraction", fraction)?;
    let mut spec = base.clone();
    spec.split_mode = mode;
    spec.seed = seed;
    spec.validate()?;
    let nodes = spec.node_num;
    let perm = Rng::substream(seed, &[tags::FRACTION]).permutation(source.len());
    let k = frac_count(fraction, source.len());
    let mut shifted: Vec<Dataset> = if k == 0 {
        vec![source.subset(&[]); nodes]
    } else {
        let part = source.subset(&perm[..k]);
        let shards = partition(&part, &spec)?;
        materialize_all(&part, &shards)?
            .into_iter()
            .map(|m| m.data)
            .collect()
    };
    let rest = &perm[k..];
    let mut start = 0;
    let mut out = Vec::with_capacity(nodes);
    for (node, data) in shifted.iter_mut().enumerate() {
        let len = rest.len() / nodes + usize::from(node < rest.len() % nodes);
        let mut idx = rest[start..start + len].to_vec();
        start += len;
        idx.sort_unstable();
        let clean = source.subset(&idx);
        out.push(MaterializedShard {
            node_id: node,
            data: Dataset::concat(&[data, &clean])?,
        });
    }
    Ok(out)
}

/// Base partition for the NEI table: a Gaussian ladder up to σ = 4 for the
/// covariate row, 30% label errors on the shifted part of the prior row, and
/// two concept groups.
pub fn default_nei_partition(node_num: usize) -> PartitionSpec {
    let mut p = PartitionSpec::new(SplitMode::Covariate, node_num, 0);
    p.noise = NoiseSpec::gaussian(4.0);
    p.error_frac = 0.3;
    p.group_count = 2;
    p
}

/// Rows are the three shift modes, columns fractions; cells hold the report
/// aggregate NEI against `test`.
pub fn run_nei_table(
    spec: &GridSpec,
    encoder: &Encoder,
    source: &Dataset,
    test: &Dataset,
) -> Result<ResultTable> {
    expect_axis(spec, Axis::Nei)?;
    let start = Instant::now();
    let seeds = spec.seeds();
    let cache = EncodingCache::new(encoder);
    let modes = SplitMode::ALL;
    let cols: Vec<String> = spec.values.iter().map(|&f| percent_label(f)).collect();
    let mut results = Vec::new();
    for mode in modes {
        for (c, &f) in spec.values.iter().enumerate() {
            for &seed in &seeds {
                let v = nei_cell_shards(source, &spec.partition, mode, f, seed)
                    .and_then(|shards| nei_report(encoder, &shards, test, Some(&cache)))
                    .map(|r| r.aggregate)
                    .map_err(|e| at(e, mode.name(), &cols[c]))?;
                results.push(v);
            }
        }
    }
    let cells = group(&results, modes.len(), cols.len(), &seeds);
    let rows = modes.iter().map(|m| m.name().to_string()).collect();
    let mut t = finish(
        spec,
        "NEI by fraction",
        ValueKind::Nei,
        "mode",
        rows,
        cols,
        cells,
        source,
        start,
    );
    t.meta.encoder_fingerprint = Some(encoder.fingerprint());
    Ok(t)
}

/// Groups a row-major, repetition-minor result list into cells.
fn group(results: &[f64], rows: usize, cols: usize, seeds: &[u64]) -> Vec<Vec<Cell>> {
    let reps = seeds.len();
    debug_assert_eq!(results.len(), rows * cols * reps);
    (0..rows)
        .map(|r| {
            (0..cols)
                .map(|c| {
                    let base = (r * cols + c) * reps;
                    Cell::from_values(results[base..base + reps].to_vec(), seeds.to_vec())
                })
                .collect()
        })
        .collect()
}

/// True when `seq` never decreases, except for at most one step down of no
/// more than `tolerance`.
pub fn nearly_non_decreasing(seq: &[f64], tolerance: f64) -> bool {
    let drops: Vec<f64> = seq
        .windows(2)
        .map(|w| w[0] - w[1])
        .filter(|&d| d > 0.0)
        .collect();
    drops.is_empty() || (drops.len() == 1 && drops[0] <= tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ImageDims;

    fn small_spec(axis: Axis, values: Vec<f64>) -> GridSpec {
        let mut fed = FedConfig::new(2, 2, 0);
        fed.eval_every = 1;
        let mut g = GridSpec::new(
            axis,
            values,
            fed,
            PartitionSpec::new(SplitMode::Covariate, 2, 0),
        );
        g.repetitions = 2;
        g
    }

    fn data() -> (Dataset, Dataset) {
        let all = Dataset::synthetic(120, ImageDims::new(4, 4, 1), 4, 5);
        all.split_at(80)
    }

    #[test]
    fn validation() {
        assert!(small_spec(Axis::Nodes, vec![]).validate().is_err());
        assert!(small_spec(Axis::Nodes, vec![5.0, 3.0]).validate().is_err());
        assert!(small_spec(Axis::Nodes, vec![2.5]).validate().is_err());
        assert!(small_spec(Axis::Quality, vec![0.0, 1.5])
            .validate()
            .is_err());
        assert!(small_spec(Axis::Nei, vec![0.3, 0.5]).validate().is_ok());
        let mut g = small_spec(Axis::Nodes, vec![2.0]);
        g.repetitions = 0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn quality_origin_matches_nodes_cell() {
        let (src, test) = data();
        let nodes = run_nodes_table(&small_spec(Axis::Nodes, vec![2.0]), &src, &test).unwrap();
        let mut q = small_spec(Axis::Quality, vec![0.0, 0.1]);
        q.fed.node_num = 2;
        let quality = run_quality_table(&q, &src, &test).unwrap();
        // rows: quantity N=0, label N=0
        assert_eq!(quality.cell(0, 0).values, nodes.cell(0, 0).values);
        assert_eq!(quality.cell(1, 0).values, nodes.cell(1, 0).values);
        assert_eq!(quality.cells.len(), 2);
        assert_eq!(quality.cells[0].len(), 2);
    }

    #[test]
    fn rounds_cells_share_a_trajectory() {
        let (src, test) = data();
        let a = run_rounds_table(&small_spec(Axis::Rounds, vec![1.0, 3.0]), &src, &test).unwrap();
        let b =
            run_rounds_table(&small_spec(Axis::Rounds, vec![1.0, 2.0, 3.0]), &src, &test).unwrap();
        for r in 0..2 {
            assert_eq!(a.cell(r, 0), b.cell(r, 0));
            assert_eq!(a.cell(r, 1), b.cell(r, 2));
        }
    }

    #[test]
    fn nei_cells_cover_source() {
        let (src, _) = data();
        let base = PartitionSpec::new(SplitMode::Covariate, 4, 0);
        for f in [0.0, 0.3, 1.0] {
            let shards = nei_cell_shards(&src, &base, SplitMode::Concept, f, 2).unwrap();
            assert_eq!(
                shards.iter().map(|s| s.data.len()).sum::<usize>(),
                src.len()
            );
        }
    }

    #[test]
    fn monotone_helper() {
        assert!(nearly_non_decreasing(&[0.1, 0.2, 0.3], 0.005));
        assert!(nearly_non_decreasing(&[0.1, 0.3, 0.297], 0.005));
        assert!(!nearly_non_decreasing(&[0.1, 0.3, 0.2], 0.005));
        assert!(!nearly_non_decreasing(&[0.3, 0.299, 0.298], 0.005));
    }
}
