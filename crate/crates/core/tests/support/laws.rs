//! Partition laws checked against randomized specs. Shared by the property
//! tests and the acceptance runner.

use std::collections::{BTreeSet, HashSet};

use fednoniid_core::data::ImageDims;
use fednoniid_core::partition::{
    apply_gaussian, inject_quality, materialize_all, partition, partition_unbalanced, NoiseSpec,
    PartitionSpec, QualitySpec, SplitMode,
};
use fednoniid_core::{Dataset, Rng};
use proptest::prelude::*;

pub type Law = std::result::Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Law {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn source(n: usize, classes: usize, seed: u64) -> Dataset {
    Dataset::synthetic(n, ImageDims::new(3, 3, 1), classes, seed)
}

#[derive(Clone, Debug)]
pub struct SplitCase {
    pub n: usize,
    pub classes: usize,
    pub mode: SplitMode,
    pub nodes: usize,
    pub seed: u64,
    pub sigma: f64,
    pub groups: usize,
}

pub fn split_case() -> impl Strategy<Value = SplitCase> {
    (
        20usize..200,
        2usize..11,
        prop_oneof![Just(SplitMode::Covariate), Just(SplitMode::Concept)],
        1usize..20,
        any::<u64>(),
        0.0f64..80.0,
        1usize..4,
    )
        .prop_map(|(n, classes, mode, nodes, seed, sigma, groups)| SplitCase {
            n,
            classes,
            mode,
            nodes,
            seed,
            sigma,
            groups,
        })
}

/// Covariate and concept modes partition the index set exactly, with equal
/// sizes up to one; concept shards keep image bytes and relabel through a
/// bijection.
pub fn split_law(c: &SplitCase) -> Law {
    let ds = source(c.n, c.classes, c.seed ^ 1);
    let mut spec = PartitionSpec::new(c.mode, c.nodes, c.seed);
    spec.group_count = c.groups;
    if c.mode == SplitMode::Covariate {
        spec.noise = NoiseSpec::gaussian(c.sigma);
    }
    let shards = partition(&ds, &spec).map_err(|e| e.to_string())?;
    ensure(shards.len() == c.nodes, || {
        format!("{} shards for {} nodes", shards.len(), c.nodes)
    })?;
    let mut seen = vec![false; c.n];
    for s in &shards {
        for &i in &s.indices {
            ensure(!std::mem::replace(&mut seen[i], true), || {
                format!("index {i} in two shards")
            })?;
        }
    }
    ensure(seen.iter().all(|&b| b), || "indices not covered".into())?;
    let sizes: Vec<usize> = shards.iter().map(|s| s.len()).collect();
    let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
    ensure(hi - lo <= 1, || format!("unequal sizes {sizes:?}"))?;
    let mats = materialize_all(&ds, &shards).map_err(|e| e.to_string())?;
    for (s, m) in shards.iter().zip(&mats) {
        if c.mode == SplitMode::Concept {
            let g = s.node_id % c.groups;
            for (pos, &i) in s.indices.iter().enumerate() {
                ensure(m.data.image(pos) == ds.image(i), || {
                    "concept shard changed pixels".into()
                })?;
                let want = ((ds.label(i) as usize + g) % c.classes) as u8;
                ensure(m.data.label(pos) == want, || {
                    format!("label {} expected {want}", m.data.label(pos))
                })?;
            }
        } else {
            ensure(m.data.labels() == ds.subset(&s.indices).labels(), || {
                "covariate changed labels".into()
            })?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct PriorCase {
    pub n: usize,
    pub classes: usize,
    pub nodes: usize,
    pub lpn: usize,
    pub overlap: f64,
    pub seed: u64,
}

pub fn prior_case() -> impl Strategy<Value = PriorCase> {
    (2usize..11, 1usize..16, any::<u64>(), 0.0f64..0.3)
        .prop_flat_map(|(classes, nodes, seed, overlap)| {
            let min_lpn = classes.div_ceil(nodes).max(1);
            (
                Just(classes),
                Just(nodes),
                min_lpn..=classes,
                Just(seed),
                Just(overlap),
                (nodes * 4)..300,
            )
        })
        .prop_map(|(classes, nodes, lpn, seed, overlap, n)| PriorCase {
            n,
            classes,
            nodes,
            lpn,
            overlap,
            seed,
        })
}

/// Prior shards hold at most `labels_per_node` labels, are disjoint outside
/// the overlap pool, cover every non-pool sample, and all contain the pool.
pub fn prior_law(c: &PriorCase) -> Law {
    let ds = source(c.n, c.classes, c.seed ^ 2);
    let mut spec = PartitionSpec::new(SplitMode::Prior, c.nodes, c.seed);
    spec.labels_per_node = c.lpn;
    spec.overlap_frac = c.overlap;
    let shards = partition(&ds, &spec).map_err(|e| e.to_string())?;
    let pool_len = (c.overlap * c.n as f64).floor() as usize;
    let pool: BTreeSet<usize> = shards[0].indices[shards[0].len() - pool_len..]
        .iter()
        .copied()
        .collect();
    ensure(pool.len() == pool_len, || "pool has duplicates".into())?;
    let mut covered = HashSet::new();
    for s in &shards {
        let labels: BTreeSet<u8> = s
            .indices
            .iter()
            .filter(|i| !pool.contains(i))
            .map(|&i| ds.label(i))
            .collect();
        ensure(labels.len() <= c.lpn, || {
            format!("node {} has {} labels", s.node_id, labels.len())
        })?;
        let held: BTreeSet<usize> = s.indices.iter().copied().collect();
        ensure(held.len() == s.len(), || "duplicate index in shard".into())?;
        ensure(pool.is_subset(&held), || "pool missing from shard".into())?;
        for i in held.difference(&pool) {
            ensure(covered.insert(*i), || format!("index {i} in two shards"))?;
        }
    }
    ensure(covered.len() + pool_len == c.n, || {
        "prior shards do not cover the source".into()
    })
}

pub fn unbalanced_case() -> impl Strategy<Value = (Vec<usize>, usize, u64)> {
    (
        prop::collection::vec(1usize..60, 1..12),
        0usize..50,
        any::<u64>(),
    )
}

/// Shard sizes match the request exactly and shards are disjoint.
pub fn unbalanced_law(sizes: &[usize], spare: usize, seed: u64) -> Law {
    let n = sizes.iter().sum::<usize>() + spare;
    let ds = source(n, 10, seed);
    let shards = partition_unbalanced(&ds, sizes, seed).map_err(|e| e.to_string())?;
    let got: Vec<usize> = shards.iter().map(|s| s.len()).collect();
    ensure(got == sizes, || format!("sizes {got:?} != {sizes:?}"))?;
    let all: HashSet<usize> = shards
        .iter()
        .flat_map(|s| s.indices.iter().copied())
        .collect();
    ensure(all.len() == sizes.iter().sum::<usize>(), || {
        "unbalanced shards overlap".into()
    })
}

pub fn quality_case() -> impl Strategy<Value = (Vec<usize>, f64, f64, u64)> {
    (
        prop::collection::vec(1usize..80, 1..8),
        0.0f64..=0.5,
        0.0f64..=1.0,
        any::<u64>(),
    )
}

/// Exactly `floor(E * |shard|)` labels change, each to a different label, and
/// the shared pool sits in every shard.
pub fn quality_law(sizes: &[usize], n_frac: f64, e_frac: f64, seed: u64) -> Law {
    let n: usize = sizes.iter().sum();
    let ds = source(n, 10, seed ^ 3);
    let shards = partition_unbalanced(&ds, sizes, seed).map_err(|e| e.to_string())?;
    let q = QualitySpec::new(n_frac, e_frac).map_err(|e| e.to_string())?;
    let out = inject_quality(&shards, &ds, q, seed).map_err(|e| e.to_string())?;
    let pool_len = (n_frac * n as f64).floor() as usize;
    let mut in_all: Option<BTreeSet<usize>> = None;
    for (before, after) in shards.iter().zip(&out) {
        let held: BTreeSet<usize> = after.indices.iter().copied().collect();
        ensure(held.len() == after.len(), || "duplicate after pool".into())?;
        ensure(after.indices[..before.len()] == before.indices[..], || {
            "original indices moved".into()
        })?;
        in_all = Some(match in_all {
            None => held,
            Some(acc) => acc.intersection(&held).copied().collect(),
        });
        let want = (e_frac * after.len() as f64).floor() as usize;
        let mats = materialize_all(&ds, std::slice::from_ref(after)).map_err(|e| e.to_string())?;
        let changed = after
            .indices
            .iter()
            .enumerate()
            .filter(|&(p, &i)| mats[0].data.label(p) != ds.label(i))
            .count();
        ensure(after.overrides.len() == want, || {
            format!("{} overrides, want {want}", after.overrides.len())
        })?;
        ensure(changed == want, || {
            format!("{changed} labels changed, want {want}")
        })?;
    }
    let common = in_all.unwrap_or_default().len();
    ensure(common >= pool_len, || {
        format!("only {common} samples shared, pool is {pool_len}")
    })
}

pub fn gaussian_case() -> impl Strategy<Value = (Vec<u8>, f64, u64)> {
    (
        prop::collection::vec(any::<u8>(), 1..300),
        0.0f64..400.0,
        any::<u64>(),
    )
}

/// Gaussian noise equals the rounded, clamped sum of pixel and draw.
pub fn gaussian_law(pixels: &[u8], sigma: f64, seed: u64) -> Law {
    let mut got = pixels.to_vec();
    apply_gaussian(&mut got, sigma, seed);
    let mut rng = Rng::new(seed);
    for (k, (&p, &g)) in pixels.iter().zip(&got).enumerate() {
        let want = if sigma == 0.0 {
            p
        } else {
            (p as f64 + sigma * rng.gaussian())
                .round()
                .clamp(0.0, 255.0) as u8
        };
        ensure(g == want, || format!("pixel {k}: {g} != {want}"))?;
    }
    Ok(())
}
