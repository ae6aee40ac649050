//! The Non-IID Encoder Index: for one class, the 2-norm of the gap between
//! mean train and mean test encodings, each dimension scaled by the
//! population standard deviation over the union of both sides.
//!
//! Statistics are accumulated in `f64` over rows sorted lexicographically, so
//! the mean of a side depends only on its multiset of rows. Equal multisets
//! therefore give exactly zero.

mod encoder;

pub use encoder::{
    build_encoder, holdout_split, reconstruction_mse, train_autoencoder, Encoder, EncoderHyper,
    EncodingCache, FeatureMatrix, ENCODER_LAYERS,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MaterializedShard};
use crate::error::{Error, Result};
use crate::nn::Scalar;

/// Added to a zero standard deviation when the mean gap is nonzero.
pub const STD_EPS: f64 = 1e-8;

/// Count, mean and sum of squared deviations of one side of a split.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassStats {
    pub n: usize,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl ClassStats {
    pub fn from_rows<T: Scalar>(rows: &[&[T]]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("class split side"))?;
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("feature rows differ in length".into()));
        }
        let mut order: Vec<&[T]> = rows.to_vec();
        order.sort_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.as_f64().total_cmp(&y.as_f64()))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let n = order.len();
        // Offsets from the first row keep constant features exactly constant.
        let origin: Vec<f64> = order[0].iter().map(|v| v.as_f64()).collect();
        let mut mean = vec![0.0f64; d];
        for r in &order {
            for ((m, v), o) in mean.iter_mut().zip(r.iter()).zip(&origin) {
                *m += v.as_f64() - o;
            }
        }
        for (m, o) in mean.iter_mut().zip(&origin) {
            *m = o + *m / n as f64;
        }
        let mut m2 = vec![0.0f64; d];
        for r in &order {
            for ((s, &m), v) in m2.iter_mut().zip(&mean).zip(r.iter()) {
                let dv = v.as_f64() - m;
                *s += dv * dv;
            }
        }
        Ok(ClassStats { n, mean, m2 })
    }
}

/// NEI from the statistics of the two sides.
pub fn nei_from_stats(train: &ClassStats, test: &ClassStats) -> Result<f64> {
    if train.mean.len() != test.mean.len() {
        return Err(Error::Shape(format!(
            "train features have {} dims, test features {}",
            train.mean.len(),
            test.mean.len()
        )));
    }
    let (na, nb) = (train.n as f64, test.n as f64);
    let n = na + nb;
    let mut sq = 0.0;
    for j in 0..train.mean.len() {
        let delta = train.mean[j] - test.mean[j];
        if delta == 0.0 {
            continue;
        }
        let var = (train.m2[j] + test.m2[j] + na * nb / n * delta * delta) / n;
        let std = var.max(0.0).sqrt();
        let z = if std == 0.0 {
            delta / (std + STD_EPS)
        } else {
            delta / std
        };
        sq += z * z;
    }
    Ok(sq.sqrt())
}

/// NEI over precomputed feature rows (an identity encoder, in effect).
pub fn nei_from_features<T: Scalar>(train: &[&[T]], test: &[&[T]]) -> Result<f64> {
    nei_from_stats(
        &ClassStats::from_rows(train)?,
        &ClassStats::from_rows(test)?,
    )
}

/// Train and test samples of a single class.
#[derive(Clone, Debug)]
pub struct ClassSplit {
    pub class: u8,
    pub train: Dataset,
    pub test: Dataset,
}

impl ClassSplit {
    /// The samples of `class` from each dataset.
    pub fn of_class(class: u8, train: &Dataset, test: &Dataset) -> Self {
        let pick = |ds: &Dataset| {
            let idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.label(i) == class).collect();
            ds.subset(&idx)
        };
        ClassSplit {
            class,
            train: pick(train),
            test: pick(test),
        }
    }
}

fn stats_of(enc: &Encoder, ds: &Dataset, cache: Option<&EncodingCache>) -> Result<ClassStats> {
    match cache {
        Some(c) => {
            let rows = c.encode(enc, ds)?;
            let refs: Vec<&[f32]> = rows.iter().map(|r| &r[..]).collect();
            ClassStats::from_rows(&refs)
        }
        None => {
            let m = enc.encode_all(ds)?;
            let refs: Vec<&[f32]> = (0..m.rows()).map(|i| m.row(i)).collect();
            ClassStats::from_rows(&refs)
        }
    }
}

pub fn nei(enc: &Encoder, split: &ClassSplit) -> Result<f64> {
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::Empty("class split side"));
    }
    for ds in [&split.train, &split.test] {
        if ds.labels().iter().any(|&l| l != split.class) {
            return Err(Error::spec(format!(
                "split for class {} holds other labels",
                split.class
            )));
        }
    }
    nei_from_stats(
        &stats_of(enc, &split.train, None)?,
        &stats_of(enc, &split.test, None)?,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeiEntry {
    pub node_id: usize,
    pub class: u8,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedClass {
    pub node_id: usize,
    pub class: u8,
    pub train_count: usize,
    pub test_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardNei {
    pub node_id: usize,
    /// Mean over this shard's evaluated classes; 0 when none were evaluated.
    pub aggregate: f64,
    pub per_class: BTreeMap<u8, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeiReport {
    /// Mean of every `(shard, class)` value in `entries`; 0 when empty.
    pub aggregate: f64,
    /// Per class, the mean over the shards that evaluated it.
    pub per_class: BTreeMap<u8, f64>,
    pub shards: Vec<ShardNei>,
    pub entries: Vec<NeiEntry>,
    pub skipped: Vec<SkippedClass>,
    pub encoder_fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<serde_json::Value>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// NEI of every shard against `test_set`, class by class. Classes missing
/// from either side are recorded as skipped.
pub fn nei_report(
    enc: &Encoder,
    shards: &[MaterializedShard],
    test_set: &Dataset,
    cache: Option<&EncodingCache>,
) -> Result<NeiReport> {
    if !enc.is_frozen() {
        return Err(Error::spec("encoder must be frozen before computing NEI"));
    }
    let k = test_set.num_classes();
    let mut test_stats: Vec<Option<ClassStats>> = Vec::with_capacity(k);
    let test_counts = test_set.class_counts();
    for c in 0..k {
        test_stats.push(if test_counts[c] == 0 {
            None
        } else {
            Some(stats_of(
                enc,
                &ClassSplit::of_class(c as u8, test_set, test_set).test,
                cache,
            )?)
        });
    }
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    let mut shard_out = Vec::with_capacity(shards.len());
    for shard in shards {
        let counts = shard.data.class_counts();
        let mut per_class = BTreeMap::new();
        for c in 0..k.max(counts.len()) {
            let train_count = counts.get(c).copied().unwrap_or(0);
            let test_count = test_counts.get(c).copied().unwrap_or(0);
            let Some(Some(ts)) = test_stats.get(c).filter(|_| train_count > 0) else {
                skipped.push(SkippedClass {
                    node_id: shard.node_id,
                    class: c as u8,
                    train_count,
                    test_count,
                });
                continue;
            };
            let split = ClassSplit::of_class(c as u8, &shard.data, &shard.data);
            let value = nei_from_stats(&stats_of(enc, &split.train, cache)?, ts)?;
            per_class.insert(c as u8, value);
            entries.push(NeiEntry {
                node_id: shard.node_id,
                class: c as u8,
                value,
            });
        }
        shard_out.push(ShardNei {
            node_id: shard.node_id,
            aggregate: mean(per_class.values().copied()),
            per_class,
        });
    }
    let mut per_class = BTreeMap::new();
    for c in 0..k as u8 {
        let vals: Vec<f64> = entries
            .iter()
            .filter(|e| e.class == c)
            .map(|e| e.value)
            .collect();
        if !vals.is_empty() {
            per_class.insert(c, mean(vals));
        }
    }
    Ok(NeiReport {
        aggregate: mean(entries.iter().map(|e| e.value)),
        per_class,
        shards: shard_out,
        entries,
        skipped,
        encoder_fingerprint: enc.fingerprint(),
        spec: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ImageDims;

    fn rows(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(|r| &r[..]).collect()
    }

    #[test]
    fn hand_case() {
        // means 1 and 2; population std of {0,1,2,3} is sqrt(1.25)
        let a = rows(&[0.0, 2.0]);
        let b = rows(&[1.0, 3.0]);
        let v = nei_from_features(&refs(&a), &refs(&b)).unwrap();
        assert!((v - 1.0 / 1.25f64.sqrt()).abs() < 1e-12);
        assert!((v - 0.894427).abs() < 1e-6);
    }

    #[test]
    fn equal_multisets_give_zero() {
        let a = vec![
            vec![0.1, 0.7, 3.0],
            vec![1e-3, 5.5, -2.0],
            vec![0.3, 0.3, 0.3],
        ];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(nei_from_features(&refs(&a), &refs(&b)).unwrap(), 0.0);
    }

    #[test]
    fn zero_variance_dimensions() {
        // dim 0 constant and equal: contributes 0; dim 1 constant but shifted
        let a = vec![vec![1.0, 0.0]];
        let b = vec![vec![1.0, 0.0]];
        assert_eq!(nei_from_features(&refs(&a), &refs(&b)).unwrap(), 0.0);
        let c = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        let d = vec![vec![1.0, 4.0]];
        let v = nei_from_features(&refs(&c), &refs(&d)).unwrap();
        let var: f64 = (2.0 * (2.0f64 - 8.0 / 3.0).powi(2) + (4.0f64 - 8.0 / 3.0).powi(2)) / 3.0;
        assert!((v - 2.0 / var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_column_with_inexact_mean() {
        // 0.1 summed seven times and divided by seven is not 0.1
        let a = vec![vec![0.1, 1.0]; 7];
        let mut b = vec![vec![0.1, 2.0]; 3];
        b.push(vec![0.1, 3.0]);
        let v = nei_from_features(&refs(&a), &refs(&b)).unwrap();
        let w = nei_from_features(
            &refs(&a.iter().map(|r| vec![r[1]]).collect::<Vec<_>>()),
            &refs(&b.iter().map(|r| vec![r[1]]).collect::<Vec<_>>()),
        )
        .unwrap();
        assert_eq!(v, w);
    }

    #[test]
    fn empty_side_is_error() {
        let a = rows(&[1.0]);
        assert!(nei_from_features(&refs(&a), &[] as &[&[f64]]).is_err());
    }

    #[test]
    fn report_skips_missing_classes_and_zero_on_copy() {
        let test = Dataset::synthetic(40, ImageDims::new(4, 4, 1), 4, 9);
        let enc = build_encoder(test.dims(), 0).unwrap().freeze();
        let copy = MaterializedShard {
            node_id: 0,
            data: test.clone(),
        };
        let idx: Vec<usize> = (0..40).filter(|&i| test.label(i) != 3).collect();
        let partial = MaterializedShard {
            node_id: 1,
            data: test.subset(&idx),
        };
        let r = nei_report(&enc, &[copy, partial], &test, None).unwrap();
        assert!(r.shards[0].per_class.values().all(|&v| v == 0.0));
        assert_eq!(r.shards[0].per_class.len(), 4);
        assert!(r.skipped.iter().any(|s| s.node_id == 1 && s.class == 3));
        let m = r.entries.iter().map(|e| e.value).sum::<f64>() / r.entries.len() as f64;
        assert_eq!(r.aggregate, m);
        let cache = EncodingCache::new(&enc);
        let again = nei_report(
            &enc,
            &[MaterializedShard {
                node_id: 0,
                data: test.clone(),
            }],
            &test,
            Some(&cache),
        )
        .unwrap();
        assert_eq!(again.aggregate, 0.0);
    }

    #[test]
    fn nei_checks_split_labels() {
        let ds = Dataset::synthetic(12, ImageDims::new(4, 4, 1), 3, 1);
        let enc = build_encoder(ds.dims(), 0).unwrap().freeze();
        let split = ClassSplit::of_class(1, &ds, &ds);
        assert_eq!(nei(&enc, &split).unwrap(), 0.0);
        let bad = ClassSplit {
            class: 2,
            ..split.clone()
        };
        assert!(nei(&enc, &bad).is_err());
        let empty = ClassSplit::of_class(1, &ds.subset(&[0]), &ds);
        assert!(nei(&enc, &empty).is_err());
    }
}
