//! Single-file checkpoint: a tar archive holding `manifest.json` plus one raw
//! little-endian array per parameter and running statistic.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NdError, Result};
use crate::graph::{Graph, GraphSpec};
use crate::scalar::{Precision, Scalar};

pub const FORMAT_NAME: &str = "ndgrad-checkpoint";
pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayKind {
    Param,
    Buffer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub kind: ArrayKind,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub precision: Precision,
    pub seed: u64,
    pub topology: GraphSpec,
    pub arrays: Vec<ArrayEntry>,
    /// Caller-defined metadata (task, preprocessing, architecture knobs).
    pub metadata: serde_json::Value,
}

fn append<W: Write>(builder: &mut tar::Builder<W>, name: &str, bytes: &[u8]) -> Result<()> {
    let mut header = tar::Header::new_gnu();
    header.set_size(bytes.len() as u64);
    header.set_mode(0o644);
    header.set_mtime(0);
    header.set_uid(0);
    header.set_gid(0);
    header.set_cksum();
    builder.append_data(&mut header, name, bytes)?;
    Ok(())
}

pub fn write_checkpoint<T: Scalar, W: Write>(writer: W, graph: &Graph<T>, metadata: &serde_json::Value) -> Result<()> {
    let mut arrays = Vec::new();
    let mut blobs = Vec::new();
    for (kind, list) in [(ArrayKind::Param, graph.params()), (ArrayKind::Buffer, graph.buffers())] {
        for p in list {
            let file = format!(
                "{}/{}.bin",
                if kind == ArrayKind::Param { "params" } else { "buffers" },
                p.name
            );
            let mut bytes = Vec::with_capacity(p.value.len() * T::PRECISION.byte_width());
            p.value.data().iter().for_each(|v| v.write_le(&mut bytes));
            arrays.push(ArrayEntry {
                name: p.name.clone(),
                kind: kind.clone(),
                shape: p.value.shape().to_vec(),
                trainable: p.trainable,
                file: file.clone(),
            });
            blobs.push((file, bytes));
        }
    }
    let manifest = CheckpointManifest {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        precision: T::PRECISION,
        seed: graph.seed(),
        topology: graph.spec(),
        arrays,
        metadata: metadata.clone(),
    };
    let mut builder = tar::Builder::new(writer);
    append(&mut builder, MANIFEST, &serde_json::to_vec_pretty(&manifest)?)?;
    for (file, bytes) in &blobs {
        append(&mut builder, file, bytes)?;
    }
    builder.into_inner()?.flush()?;
    Ok(())
}

pub fn save_checkpoint<T: Scalar>(path: &Path, graph: &Graph<T>, metadata: &serde_json::Value) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    write_checkpoint(f, graph, metadata)
}

fn decode(bytes: &[u8], precision: Precision) -> Vec<f64> {
    match precision {
        Precision::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Precision::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
    }
}

/// Reads a checkpoint, converting stored values to `T` if the precisions
/// differ. Every array shape is validated against both the manifest and the
/// shape implied by the rebuilt topology.
pub fn read_checkpoint<T: Scalar, R: Read>(reader: R) -> Result<(Graph<T>, CheckpointManifest)> {
    let mut archive = tar::Archive::new(reader);
    let mut files: HashMap<String, Vec<u8>> = HashMap::new();
    for entry in archive.entries()? {
        let mut entry = entry?;
        let name = entry.path()?.to_string_lossy().into_owned();
        let mut buf = Vec::new();
        entry.read_to_end(&mut buf)?;
        files.insert(name, buf);
    }
    let manifest_bytes = files
        .get(MANIFEST)
        .ok_or_else(|| NdError::Checkpoint("archive has no manifest.json".into()))?;
    let manifest: CheckpointManifest = serde_json::from_slice(manifest_bytes)?;
    if manifest.format != FORMAT_NAME || manifest.version != FORMAT_VERSION {
        return Err(NdError::Checkpoint(format!(
            "unsupported format {} v{}",
            manifest.format, manifest.version
        )));
    }
    let mut graph = Graph::<T>::from_spec(&manifest.topology, manifest.seed)?;
    let width = manifest.precision.byte_width();
    let expected_arrays = graph.params().len() + graph.buffers().len();
    if manifest.arrays.len() != expected_arrays {
        return Err(NdError::Checkpoint(format!(
            "manifest lists {} arrays, topology implies {expected_arrays}",
            manifest.arrays.len()
        )));
    }
    for entry in &manifest.arrays {
        let bytes = files
            .get(&entry.file)
            .ok_or_else(|| NdError::Checkpoint(format!("missing array file {}", entry.file)))?;
        let numel: usize = entry.shape.iter().product();
        if bytes.len() != numel * width {
            return Err(NdError::Checkpoint(format!(
                "{}: {} bytes, expected {} for shape {:?}",
                entry.name,
                bytes.len(),
                numel * width,
                entry.shape
            )));
        }
        let slot = match entry.kind {
            ArrayKind::Param => graph.params_mut().iter_mut().find(|p| p.name == entry.name),
            ArrayKind::Buffer => graph.buffers_mut().iter_mut().find(|p| p.name == entry.name),
        }
        .ok_or_else(|| NdError::Checkpoint(format!("array {} not in topology", entry.name)))?;
        if slot.value.shape() != entry.shape.as_slice() {
            return Err(NdError::Checkpoint(format!(
                "{}: manifest shape {:?} != topology shape {:?}",
                entry.name,
                entry.shape,
                slot.value.shape()
            )));
        }
        for (dst, v) in slot.value.data_mut().iter_mut().zip(decode(bytes, manifest.precision)) {
            *dst = T::from_f64_lossy(v);
        }
        slot.trainable = entry.trainable;
    }
    Ok((graph, manifest))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(Graph<T>, CheckpointManifest)> {
    let f = File::open(path)
        .map_err(|e| NdError::Checkpoint(format!("cannot open {}: {e}", path.display())))?;
    read_checkpoint(BufReader::new(f))
}
