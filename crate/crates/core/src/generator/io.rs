use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GeneratedGraph, InteractionMode, NodeProfile};
use crate::error::{Error, Result};
use crate::graph::{read_features, write_dataset, write_features, Dataset, DatasetMeta};

pub const PROFILES_FILE: &str = "profiles.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const GENERATION_FILE: &str = "generation.json";

#[derive(Debug, Serialize, Deserialize)]
struct GenerationRecord {
    mode: InteractionMode,
    num_profiles: usize,
    interactions: Vec<Vec<u32>>,
}

/// Writes the graph dataset plus profiles, embeddings and raw interactions.
pub fn write_generated(dir: impl AsRef<Path>, gen: &GeneratedGraph, name: Option<&str>) -> Result<()> {
    let dir = dir.as_ref();
    gen.validate()?;
    std::fs::create_dir_all(dir)?;
    let graph = gen.to_graph()?;
    let meta = DatasetMeta {
        num_nodes: graph.num_nodes(),
        num_classes: None,
        partition: (gen.mode == InteractionMode::PersonEntity).then_some(gen.profiles.len()),
        name: name.map(String::from),
    };
    write_dataset(
        dir,
        &Dataset {
            meta,
            graph,
            test_edges: Vec::new(),
            test_labels: Vec::new(),
        },
    )?;
    let mut w = BufWriter::new(File::create(dir.join(PROFILES_FILE))?);
    for p in &gen.profiles {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    if !gen.profiles.is_empty() {
        write_features(dir.join(EMBEDDINGS_FILE), &gen.embeddings()?)?;
    }
    let record = GenerationRecord {
        mode: gen.mode,
        num_profiles: gen.profiles.len(),
        interactions: gen.interactions.clone(),
    };
    std::fs::write(dir.join(GENERATION_FILE), serde_json::to_vec(&record)?)?;
    Ok(())
}

/// Reads back what [`write_generated`] wrote. Embeddings are re-normalized after the f32 round trip.
pub fn read_generated(dir: impl AsRef<Path>) -> Result<GeneratedGraph> {
    let dir = dir.as_ref();
    let mut profiles = Vec::new();
    let path = dir.join(PROFILES_FILE);
    for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: NodeProfile =
            serde_json::from_str(&line).map_err(|e| Error::format(&path, format!("line {}: {e}", i + 1)))?;
        profiles.push(p);
    }
    let gpath = dir.join(GENERATION_FILE);
    let record: GenerationRecord = serde_json::from_slice(&std::fs::read(&gpath)?)?;
    if record.num_profiles != profiles.len() {
        return Err(Error::format(
            &gpath,
            format!("{} profiles recorded, {} found", record.num_profiles, profiles.len()),
        ));
    }
    if !profiles.is_empty() {
        let epath = dir.join(EMBEDDINGS_FILE);
        let h = read_features(&epath)?;
        if h.nrows() != profiles.len() {
            return Err(Error::format(&epath, "embedding rows do not match profiles"));
        }
        for (p, row) in profiles.iter_mut().zip(h.rows()) {
            let norm = row.dot(&row).sqrt();
            p.embedding = row.iter().map(|v| v / norm).collect();
        }
    }
    let gen = GeneratedGraph {
        profiles,
        interactions: record.interactions,
        mode: record.mode,
    };
    gen.validate()?;
    Ok(gen)
}
