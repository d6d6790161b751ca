use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    parse_instance_file, serialize_instance, GeneratorConfig, InstanceError, Metric, Provenance, RoutingInstance,
    SampledParams,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    pub file: String,
    pub seed: u64,
    pub index: u64,
    pub params: SampledParams,
}

/// `manifest.json` of a synthetic dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub generator: GeneratorConfig,
    pub instances: Vec<DatasetEntry>,
}

pub const MANIFEST_FORMAT: &str = "zoosel-dataset/1";

fn io_err(path: &Path, source: std::io::Error) -> InstanceError {
    InstanceError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes one keyword-format file per instance plus `manifest.json`.
pub fn save_dataset(dir: &Path, generator: &GeneratorConfig, instances: &[RoutingInstance]) -> Result<(), InstanceError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let ext = match generator.kind {
        super::ProblemKind::Tsp => "tsp",
        super::ProblemKind::Cvrp => "vrp",
    };
    let mut entries = Vec::with_capacity(instances.len());
    for inst in instances {
        let Provenance::Synthetic { seed, index, params } = &inst.provenance else {
            return Err(InstanceError::Manifest(format!("{} is not synthetic", inst.id)));
        };
        let file = format!("{}.{ext}", inst.id);
        let path = dir.join(&file);
        fs::write(&path, serialize_instance(inst)).map_err(|e| io_err(&path, e))?;
        entries.push(DatasetEntry {
            id: inst.id.clone(),
            file,
            seed: *seed,
            index: *index,
            params: params.clone(),
        });
    }
    let manifest = DatasetManifest {
        format: MANIFEST_FORMAT.into(),
        generator: generator.clone(),
        instances: entries,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| InstanceError::Manifest(e.to_string()))?;
    fs::write(&path, text).map_err(|e| io_err(&path, e))
}

/// Reads a directory written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<RoutingInstance>), InstanceError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| InstanceError::Manifest(format!("{}: {e}", path.display())))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(InstanceError::Manifest(format!("unknown format `{}`", manifest.format)));
    }
    let mut out = Vec::with_capacity(manifest.instances.len());
    for entry in &manifest.instances {
        let p = dir.join(&entry.file);
        let text = fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
        let mut inst = parse_instance_file(&text)?;
        if inst.kind != manifest.generator.kind {
            return Err(InstanceError::Manifest(format!("{}: kind mismatch", entry.file)));
        }
        // synthetic coordinates already live in the unit square and are costed exactly
        inst.id = entry.id.clone();
        inst.coords = inst.raw.coords.clone();
        inst.raw.offset = [0.0, 0.0];
        inst.raw.scale = 1.0;
        inst.metric = Metric::Euclidean;
        inst.provenance = Provenance::Synthetic {
            seed: entry.seed,
            index: entry.index,
            params: entry.params.clone(),
        };
        inst.check()?;
        out.push(inst);
    }
    Ok((manifest, out))
}
