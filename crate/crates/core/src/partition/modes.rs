use super::quality::{flip_labels, shared_pool};
use super::{ClientShard, NoiseKind, PartitionSpec, SizeProfile, SplitMode};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{tags, Rng};

/// Runs the partitioner selected by `spec.split_mode`.
pub fn partition(ds: &Dataset, spec: &PartitionSpec) -> Result<Vec<ClientShard>> {
    match spec.split_mode {
        SplitMode::Covariate => partition_covariate(ds, spec),
        SplitMode::Prior => partition_prior(ds, spec),
        SplitMode::Concept => partition_concept(ds, spec),
    }
}

fn expect_mode(spec: &PartitionSpec, mode: SplitMode) -> Result<()> {
    spec.validate()?;
    if spec.split_mode != mode {
        return Err(Error::spec(format!(
            "{} partitioner called with split_mode {}",
            mode.name(),
            spec.split_mode as u8
        )));
    }
    Ok(())
}

/// `k^-alpha` weights over `nodes` shards scaled to `n` samples. Remainders go
/// to the largest shards first; every shard keeps at least one sample.
pub fn power_law_sizes(n: usize, nodes: usize, alpha: f64) -> Result<Vec<usize>> {
    if nodes == 0 || n < nodes {
        return Err(Error::spec(format!(
            "cannot give {nodes} nodes at least one of {n} samples"
        )));
    }
    let w: Vec<f64> = (1..=nodes).map(|k| (k as f64).powf(-alpha)).collect();
    let total: f64 = w.iter().sum();
    let mut sizes: Vec<usize> = w
        .iter()
        .map(|x| (n as f64 * x / total).floor() as usize)
        .collect();
    let assigned: usize = sizes.iter().sum();
    for s in sizes.iter_mut().take(n - assigned) {
        *s += 1;
    }
    for i in (0..nodes).rev() {
        if sizes[i] == 0 {
            let donor = (0..nodes)
                .max_by_key(|&j| (sizes[j], std::cmp::Reverse(j)))
                .unwrap();
            sizes[donor] -= 1;
            sizes[i] = 1;
        }
    }
    Ok(sizes)
}

/// Per-node sizes for covariate and concept modes.
pub fn split_sizes(n: usize, spec: &PartitionSpec) -> Result<Vec<usize>> {
    let k = spec.node_num;
    if k > n {
        return Err(Error::spec(format!(
            "node_num {k} exceeds dataset size {n}"
        )));
    }
    match &spec.size_profile {
        SizeProfile::Equal => Ok((0..k).map(|i| n / k + usize::from(i < n % k)).collect()),
        SizeProfile::Explicit { sizes } => {
            check_sizes(n, sizes)?;
            Ok(sizes.clone())
        }
        SizeProfile::PowerLaw { alpha } => power_law_sizes(n, k, *alpha),
    }
}

fn check_sizes(n: usize, sizes: &[usize]) -> Result<()> {
    if sizes.contains(&0) {
        return Err(Error::spec("shard sizes must be positive"));
    }
    let total: usize = sizes.iter().sum();
    if total > n {
        return Err(Error::spec(format!(
            "shard sizes sum to {total}, dataset has {n}"
        )));
    }
    Ok(())
}

/// Consecutive runs of one seeded permutation, each sorted ascending.
fn shuffled_chunks(n: usize, sizes: &[usize], seed: u64) -> Vec<Vec<usize>> {
    let perm = Rng::substream(seed, &[tags::SPLIT]).permutation(n);
    let mut start = 0;
    sizes
        .iter()
        .map(|&len| {
            let mut c = perm[start..start + len].to_vec();
            start += len;
            c.sort_unstable();
            c
        })
        .collect()
}

pub fn partition_covariate(ds: &Dataset, spec: &PartitionSpec) -> Result<Vec<ClientShard>> {
    expect_mode(spec, SplitMode::Covariate)?;
    let sizes = split_sizes(ds.len(), spec)?;
    Ok(shuffled_chunks(ds.len(), &sizes, spec.seed)
        .into_iter()
        .enumerate()
        .map(|(node, indices)| ClientShard {
            noise: spec.noise.descriptor(node, spec.node_num, spec.seed),
            ..ClientShard::new(node, indices)
        })
        .collect())
}

pub fn partition_unbalanced(ds: &Dataset, sizes: &[usize], seed: u64) -> Result<Vec<ClientShard>> {
    if sizes.is_empty() {
        return Err(Error::spec("no shard sizes given"));
    }
    check_sizes(ds.len(), sizes)?;
    Ok(shuffled_chunks(ds.len(), sizes, seed)
        .into_iter()
        .enumerate()
        .map(|(node, indices)| ClientShard::new(node, indices))
        .collect())
}

fn group_permutations(spec: &PartitionSpec, k: usize) -> Result<Vec<Vec<u8>>> {
    match &spec.permutations {
        Some(perms) => {
            for (g, p) in perms.iter().enumerate() {
                let mut seen = vec![false; k];
                let ok = p.len() == k
                    && p.iter().all(|&l| {
                        (l as usize) < k && !std::mem::replace(&mut seen[l as usize], true)
                    });
                if !ok {
                    return Err(Error::spec(format!(
                        "permutation for group {g} is not a bijection on 0..{k}"
                    )));
                }
            }
            Ok(perms.clone())
        }
        None => Ok((0..spec.group_count)
            .map(|g| (0..k).map(|l| ((l + g) % k) as u8).collect())
            .collect()),
    }
}

/// Covariate-style split without noise; node `i` reads labels through the
/// permutation of group `i mod group_count`.
pub fn partition_concept(ds: &Dataset, spec: &PartitionSpec) -> Result<Vec<ClientShard>> {
    expect_mode(spec, SplitMode::Concept)?;
    let perms = group_permutations(spec, ds.num_classes())?;
    let sizes = split_sizes(ds.len(), spec)?;
    Ok(shuffled_chunks(ds.len(), &sizes, spec.seed)
        .into_iter()
        .enumerate()
        .map(|(node, indices)| {
            let p = &perms[node % spec.group_count];
            let identity = p.iter().enumerate().all(|(l, &m)| l == m as usize);
            ClientShard {
                label_map: (!identity).then(|| p.clone()),
                ..ClientShard::new(node, indices)
            }
        })
        .collect())
}

/// Label-shard assignment. After removing the optional overlap pool, samples
/// are shuffled and stably grouped by label, each present class is cut into
/// near-equal label-pure pieces (`node_num * labels_per_node` in total,
/// spread over classes in label order), and pieces are dealt round-robin so
/// node `i` takes pieces `i, i + node_num, ...`.
pub fn partition_prior(ds: &Dataset, spec: &PartitionSpec) -> Result<Vec<ClientShard>> {
    expect_mode(spec, SplitMode::Prior)?;
    let k = ds.num_classes();
    let nodes = spec.node_num;
    let lpn = spec.labels_per_node;
    if lpn > k {
        return Err(Error::spec(format!(
            "labels_per_node {lpn} exceeds {k} classes"
        )));
    }
    let pool = shared_pool(ds.len(), spec.overlap_frac, spec.seed);
    let mut in_pool = vec![false; ds.len()];
    for &i in &pool {
        in_pool[i] = true;
    }
    let mut rest: Vec<usize> = (0..ds.len()).filter(|&i| !in_pool[i]).collect();
    if rest.len() < nodes {
        return Err(Error::spec(format!(
            "node_num {nodes} exceeds the {} samples left outside the overlap pool",
            rest.len()
        )));
    }
    Rng::substream(spec.seed, &[tags::SPLIT]).shuffle(&mut rest);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for i in rest {
        by_class[ds.label(i) as usize].push(i);
    }
    let present: Vec<usize> = (0..k).filter(|&c| !by_class[c].is_empty()).collect();
    let pieces_total = nodes * lpn;
    if pieces_total < present.len() {
        return Err(Error::spec(format!(
            "{nodes} nodes x {lpn} labels cannot cover {} classes",
            present.len()
        )));
    }
    let mut pieces: Vec<&[usize]> = Vec::with_capacity(pieces_total);
    for (rank, &c) in present.iter().enumerate() {
        let count = pieces_total / present.len() + usize::from(rank < pieces_total % present.len());
        let members = &by_class[c];
        let mut start = 0;
        for j in 0..count {
            let len = members.len() / count + usize::from(j < members.len() % count);
            pieces.push(&members[start..start + len]);
            start += len;
        }
    }
    let with_noise = spec.prior_noise && spec.noise.kind != NoiseKind::None;
    let mut shards = Vec::with_capacity(nodes);
    for node in 0..nodes {
        let mut indices: Vec<usize> = pieces
            .iter()
            .skip(node)
            .step_by(nodes)
            .flat_map(|p| p.iter().copied())
            .collect();
        indices.sort_unstable();
        indices.extend_from_slice(&pool);
        let mut shard = ClientShard::new(node, indices);
        if with_noise {
            shard.noise = spec.noise.descriptor(node, nodes, spec.seed);
        }
        flip_labels(&mut shard, ds, spec.error_frac, spec.seed);
        shards.push(shard);
    }
    Ok(shards)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ImageDims;
    use crate::partition::{materialize, NoiseSpec};
    use std::collections::BTreeSet;

    fn ds(n: usize, classes: usize) -> Dataset {
        Dataset::synthetic(n, ImageDims::new(3, 3, 1), classes, 11)
    }

    #[test]
    fn single_node_is_source() {
        let d = ds(50, 5);
        let mut spec = PartitionSpec::new(SplitMode::Covariate, 1, 4);
        spec.noise = NoiseSpec::gaussian(0.0);
        let s = partition_covariate(&d, &spec).unwrap();
        assert_eq!(materialize(&d, &s[0]).unwrap().data, d);
    }

    #[test]
    fn equal_profile_sizes() {
        let spec = PartitionSpec::new(SplitMode::Covariate, 10, 0);
        assert_eq!(split_sizes(60000, &spec).unwrap(), vec![6000; 10]);
        let spec = PartitionSpec::new(SplitMode::Covariate, 3, 0);
        assert_eq!(split_sizes(10, &spec).unwrap(), vec![4, 3, 3]);
        let spec = PartitionSpec::new(SplitMode::Covariate, 11, 0);
        assert!(split_sizes(10, &spec).is_err());
    }

    #[test]
    fn prior_one_label_per_node_is_ordered() {
        let d = ds(200, 10);
        let mut spec = PartitionSpec::new(SplitMode::Prior, 10, 3);
        spec.labels_per_node = 1;
        let shards = partition_prior(&d, &spec).unwrap();
        for (i, s) in shards.iter().enumerate() {
            assert_eq!(s.len(), 20);
            assert!(s.indices.iter().all(|&j| d.label(j) as usize == i));
        }
    }

    #[test]
    fn prior_two_labels_each_used_twice() {
        let d = ds(1000, 10);
        let spec = PartitionSpec::new(SplitMode::Prior, 10, 3);
        let shards = partition_prior(&d, &spec).unwrap();
        let mut uses = [0; 10];
        for s in &shards {
            let labels: BTreeSet<u8> = s.indices.iter().map(|&j| d.label(j)).collect();
            assert_eq!(labels.len(), 2);
            for l in labels {
                uses[l as usize] += 1;
            }
        }
        assert_eq!(uses, [2; 10]);
    }

    #[test]
    fn prior_overlap_pool_in_every_shard() {
        let d = ds(1000, 10);
        let mut spec = PartitionSpec::new(SplitMode::Prior, 4, 3);
        spec.labels_per_node = 3;
        spec.overlap_frac = 0.1;
        let shards = partition_prior(&d, &spec).unwrap();
        let pool = shared_pool(1000, 0.1, 3);
        assert_eq!(pool.len(), 100);
        for s in &shards {
            assert!(pool.iter().all(|p| s.indices.contains(p)));
        }
    }

    #[test]
    fn prior_errors() {
        let d = ds(100, 10);
        let mut spec = PartitionSpec::new(SplitMode::Prior, 3, 0);
        spec.labels_per_node = 11;
        assert!(partition_prior(&d, &spec).is_err());
        spec.labels_per_node = 2;
        assert!(partition_prior(&d, &spec).is_err());
        spec.labels_per_node = 4;
        assert!(partition_prior(&d, &spec).is_ok());
    }

    #[test]
    fn concept_identity_and_swap() {
        let d = ds(100, 4);
        let mut spec = PartitionSpec::new(SplitMode::Concept, 4, 2);
        spec.permutations = Some(vec![vec![0, 1, 2, 3], vec![1, 0, 2, 3]]);
        let shards = partition_concept(&d, &spec).unwrap();
        let mut cov = spec.clone();
        cov.split_mode = SplitMode::Covariate;
        cov.permutations = None;
        let plain = partition_covariate(&d, &cov).unwrap();
        for (s, p) in shards.iter().zip(&plain) {
            assert_eq!(s.indices, p.indices);
            let m = materialize(&d, s).unwrap();
            assert_eq!(m.data.images(), d.subset(&s.indices).images());
            for (pos, &src) in s.indices.iter().enumerate() {
                let want = match (s.node_id % 2, d.label(src)) {
                    (1, 0) => 1,
                    (1, 1) => 0,
                    (_, l) => l,
                };
                assert_eq!(m.data.label(pos), want);
            }
        }
        spec.permutations = Some(vec![vec![0, 1, 2, 3], vec![0, 0, 2, 3]]);
        assert!(partition_concept(&d, &spec).is_err());
    }

    #[test]
    fn unbalanced_sizes() {
        let d = ds(1000, 10);
        let s = partition_unbalanced(&d, &[100, 900], 1).unwrap();
        assert_eq!(s[0].len(), 100);
        assert_eq!(s[1].len(), 900);
        let all: BTreeSet<usize> = s.iter().flat_map(|x| x.indices.iter().copied()).collect();
        assert_eq!(all.len(), 1000);
        assert!(partition_unbalanced(&d, &[500, 501], 1).is_err());
        assert!(partition_unbalanced(&d, &[0, 10], 1).is_err());
        let whole = partition_unbalanced(&d, &[1000], 1).unwrap();
        assert_eq!(whole[0].indices, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn power_law_profile() {
        let sizes = power_law_sizes(10000, 10, 1.5).unwrap();
        // oracle: 10000 * k^-1.5 / sum_j j^-1.5
        let total: f64 = (1..=10).map(|k| (k as f64).powf(-1.5)).sum();
        for (i, &s) in sizes.iter().enumerate() {
            let ideal = 10000.0 * ((i + 1) as f64).powf(-1.5) / total;
            assert!((s as f64 - ideal).abs() <= 1.0, "{i}: {s} vs {ideal}");
        }
        assert_eq!(sizes.iter().sum::<usize>(), 10000);
        assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        assert!(sizes[0] as f64 / sizes[9] as f64 >= 5.0);
        let tiny = power_law_sizes(5, 5, 3.0).unwrap();
        assert_eq!(tiny, vec![1; 5]);
    }

    #[test]
    fn wrong_mode_rejected() {
        let d = ds(10, 2);
        let spec = PartitionSpec::new(SplitMode::Prior, 2, 0);
        assert!(partition_covariate(&d, &spec).is_err());
    }
}
