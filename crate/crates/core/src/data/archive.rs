//! FNID shard archives and their JSON manifest.
//!
//! Archive layout, all integers little-endian:
//!
//! ```text
//! "FNID" | version u16 | count u32 | H u16 | W u16 | C u8 | labels[count] | pixels[count*H*W*C]
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetName, ImageDims, MaterializedShard};
use crate::error::{Error, Result};
use crate::partition::{
    materialize, ClientShard, NoiseDescriptor, PartitionSpec, QualitySpec, SplitMode,
};

pub const ARCHIVE_MAGIC: [u8; 4] = *b"FNID";
pub const ARCHIVE_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 2 + 2 + 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardEntry {
    pub node_id: usize,
    pub file: String,
    pub count: usize,
    pub noise: NoiseDescriptor,
    pub overridden_labels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardManifest {
    pub format: String,
    pub version: u16,
    pub dataset: DatasetName,
    pub dims: ImageDims,
    pub num_classes: usize,
    pub seed: u64,
    pub split_mode: SplitMode,
    pub partition: PartitionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualitySpec>,
    pub shard_count: usize,
    pub shards: Vec<ShardEntry>,
    /// The resolved run configuration that produced these shards, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

fn u16_field(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v)
        .map_err(|_| Error::format("shard archive", format!("{what} {v} does not fit in u16")))
}

pub fn encode_archive(data: &Dataset) -> Result<Vec<u8>> {
    let dims = data.dims();
    let count = u32::try_from(data.len())
        .map_err(|_| Error::format("shard archive", "more than u32::MAX samples"))?;
    let channels = u8::try_from(dims.channels)
        .map_err(|_| Error::format("shard archive", "more than 255 channels"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + data.labels().len() + data.images().len());
    out.extend_from_slice(&ARCHIVE_MAGIC);
    out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&u16_field(dims.height, "height")?.to_le_bytes());
    out.extend_from_slice(&u16_field(dims.width, "width")?.to_le_bytes());
    out.push(channels);
    out.extend_from_slice(data.labels());
    out.extend_from_slice(data.images());
    Ok(out)
}

/// Parses an archive. Name and class count are not stored in the archive and
/// come from the manifest.
pub fn decode_archive(bytes: &[u8], name: DatasetName, num_classes: usize) -> Result<Dataset> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(
            "shard archive",
            format!("{} bytes is shorter than the header", bytes.len()),
        ));
    }
    if bytes[..4] != ARCHIVE_MAGIC {
        return Err(Error::WrongMagic {
            what: "shard archive",
            expected: "FNID".into(),
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != ARCHIVE_VERSION {
        return Err(Error::format(
            "shard archive",
            format!("unsupported version {version}"),
        ));
    }
    let count = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    let h = u16::from_le_bytes([bytes[10], bytes[11]]) as usize;
    let w = u16::from_le_bytes([bytes[12], bytes[13]]) as usize;
    let c = bytes[14] as usize;
    let dims = ImageDims::new(h, w, c);
    let want = count
        .checked_mul(dims.len() + 1)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format("shard archive", "declared size overflows"))?;
    if bytes.len() != want {
        return Err(Error::format(
            "shard archive",
            format!("header declares {want} bytes, file has {}", bytes.len()),
        ));
    }
    let labels = bytes[HEADER_LEN..HEADER_LEN + count].to_vec();
    let images = bytes[HEADER_LEN + count..].to_vec();
    Dataset::new(name, dims, num_classes, images, labels)
}

pub fn write_archive(path: &Path, data: &Dataset) -> Result<()> {
    fs::write(path, encode_archive(data)?).map_err(|e| Error::io(path, e))
}

pub fn read_archive(path: &Path, name: DatasetName, num_classes: usize) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_archive(&bytes, name, num_classes).map_err(|e| e.context(path.display().to_string()))
}

fn archive_name(node_id: usize) -> String {
    format!("node_{node_id:04}.fnid")
}

/// Materializes `shards` and writes one archive per node plus `manifest.json`.
pub fn write_shards(
    shards: &[ClientShard],
    ds: &Dataset,
    dir: &Path,
    spec: &PartitionSpec,
) -> Result<ShardManifest> {
    write_shards_annotated(shards, ds, dir, spec, None, None)
}

/// [`write_shards`] with the quality settings and the run configuration
/// recorded in the manifest. Archives left in `dir` by an earlier run are
/// removed first.
pub fn write_shards_annotated(
    shards: &[ClientShard],
    ds: &Dataset,
    dir: &Path,
    spec: &PartitionSpec,
    quality: Option<QualitySpec>,
    run_config: Option<serde_json::Value>,
) -> Result<ShardManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for entry in fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
    {
        let path = entry.path();
        if path.extension().is_some_and(|x| x == "fnid") {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    let mut entries = Vec::with_capacity(shards.len());
    for shard in shards {
        let m = materialize(ds, shard)?;
        let file = archive_name(shard.node_id);
        write_archive(&dir.join(&file), &m.data)?;
        entries.push(ShardEntry {
            node_id: shard.node_id,
            file,
            count: m.data.len(),
            noise: shard.noise.clone(),
            overridden_labels: shard.overrides.len(),
        });
    }
    let manifest = ShardManifest {
        format: "FNID".into(),
        version: ARCHIVE_VERSION,
        dataset: ds.name(),
        dims: ds.dims(),
        num_classes: ds.num_classes(),
        seed: spec.seed,
        split_mode: spec.split_mode,
        partition: spec.clone(),
        quality,
        shard_count: entries.len(),
        shards: entries,
        run_config,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<ShardManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
}

/// Reads a directory written by [`write_shards`].
pub fn load_shards(dir: &Path) -> Result<(Vec<MaterializedShard>, ShardManifest)> {
    let manifest = read_manifest(dir)?;
    if manifest.format != "FNID" || manifest.version != ARCHIVE_VERSION {
        return Err(Error::Manifest(format!(
            "unsupported format {} v{}",
            manifest.format, manifest.version
        )));
    }
    if manifest.shard_count != manifest.shards.len() {
        return Err(Error::Manifest(format!(
            "manifest claims {} shards but lists {}",
            manifest.shard_count,
            manifest.shards.len()
        )));
    }
    let mut out = Vec::with_capacity(manifest.shards.len());
    for entry in &manifest.shards {
        let path = dir.join(&entry.file);
        if !path.is_file() {
            return Err(Error::Manifest(format!(
                "archive {} for node {} is missing",
                entry.file, entry.node_id
            )));
        }
        let data = read_archive(&path, manifest.dataset, manifest.num_classes)?;
        if data.len() != entry.count || data.dims() != manifest.dims {
            return Err(Error::Manifest(format!(
                "archive {} holds {} samples of {:?}, manifest says {} of {:?}",
                entry.file,
                data.len(),
                data.dims(),
                entry.count,
                manifest.dims
            )));
        }
        out.push(MaterializedShard {
            node_id: entry.node_id,
            data,
        });
    }
    let archives = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "fnid"))
        .count();
    if archives != manifest.shard_count {
        return Err(Error::Manifest(format!(
            "directory holds {archives} archives, manifest claims {}",
            manifest.shard_count
        )));
    }
    Ok((out, manifest))
}
