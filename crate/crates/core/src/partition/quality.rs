use std::collections::HashSet;

use super::{frac_count, ClientShard, QualitySpec};
use crate::data::Dataset;
use crate::error::Result;
use crate::rng::{tags, Rng};

/// Appends a shared pool of `floor(n_frac * N)` source samples to every shard
/// (skipping ones a shard already holds), then overrides exactly
/// `floor(e_frac * |shard|)` labels per shard with a uniformly drawn wrong
/// label. Positions that already carry an override are not picked again.
pub fn inject_quality(
    shards: &[ClientShard],
    ds: &Dataset,
    q: QualitySpec,
    seed: u64,
) -> Result<Vec<ClientShard>> {
    q.validate()?;
    for s in shards {
        s.validate(ds)?;
    }
    let pool = shared_pool(ds.len(), q.n_frac, seed);
    let mut out = Vec::with_capacity(shards.len());
    for s in shards {
        let mut s = s.clone();
        if !pool.is_empty() {
            let have: HashSet<usize> = s.indices.iter().copied().collect();
            s.indices.extend(pool.iter().filter(|i| !have.contains(i)));
        }
        flip_labels(&mut s, ds, q.e_frac, seed);
        out.push(s);
    }
    Ok(out)
}

/// Sorted pool of `floor(frac * n)` indices from the `POOL` substream.
pub(crate) fn shared_pool(n: usize, frac: f64, seed: u64) -> Vec<usize> {
    let k = frac_count(frac, n);
    if k == 0 {
        return Vec::new();
    }
    let mut pool = Rng::substream(seed, &[tags::POOL]).sample(n, k);
    pool.sort_unstable();
    pool
}

pub(crate) fn flip_labels(shard: &mut ClientShard, ds: &Dataset, frac: f64, seed: u64) {
    let k = ds.num_classes();
    let want = frac_count(frac, shard.len());
    if want == 0 || k < 2 {
        return;
    }
    let free: Vec<usize> = (0..shard.len())
        .filter(|p| !shard.overrides.contains_key(p))
        .collect();
    let mut rng = Rng::substream(seed, &[tags::LABEL_ERROR, shard.node_id as u64]);
    let mut picked: Vec<usize> = rng
        .sample(free.len(), want.min(free.len()))
        .into_iter()
        .map(|j| free[j])
        .collect();
    picked.sort_unstable();
    for pos in picked {
        let truth = shard.mapped_label(ds, pos) as usize;
        let r = rng.below_usize(k - 1);
        let wrong = if r >= truth { r + 1 } else { r };
        shard.overrides.insert(pos, wrong as u8);
    }
}
