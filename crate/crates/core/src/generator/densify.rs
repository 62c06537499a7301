use super::{GeneratedGraph, InteractionMode};
use crate::error::Result;
use crate::graph::SparseGraph;

/// Nodes of the `k`-core, ascending.
pub fn k_core(g: &SparseGraph, k: usize) -> Vec<u32> {
    let n = g.num_nodes();
    let mut degree = g.degree_vector();
    let mut removed = vec![false; n];
    let mut queue: Vec<u32> = (0..n as u32).filter(|&v| degree[v as usize] < k).collect();
    for &v in &queue {
        removed[v as usize] = true;
    }
    while let Some(v) = queue.pop() {
        for &u in g.neighbors(v) {
            let u = u as usize;
            if !removed[u] {
                degree[u] -= 1;
                if degree[u] < k {
                    removed[u] = true;
                    queue.push(u as u32);
                }
            }
        }
    }
    (0..n as u32).filter(|&v| !removed[v as usize]).collect()
}

/// Repeatedly drops graph nodes of degree below `min_degree` and reindexes what remains.
/// Returns the densified graph and the number of removed graph nodes.
pub fn densify(gen: &GeneratedGraph, min_degree: usize) -> Result<(GeneratedGraph, usize)> {
    gen.validate()?;
    let g = gen.to_graph()?;
    let keep = k_core(&g, min_degree);
    let removed = g.num_nodes() - keep.len();
    let n = gen.profiles.len();
    let mut new_id = vec![u32::MAX; n];
    let mut profiles = Vec::new();
    for &v in keep.iter().take_while(|&&v| (v as usize) < n) {
        new_id[v as usize] = profiles.len() as u32;
        profiles.push(gen.profiles[v as usize].clone());
    }
    let remap = |inter: &Vec<u32>| -> Vec<u32> {
        inter
            .iter()
            .map(|&e| new_id[e as usize])
            .filter(|&e| e != u32::MAX)
            .collect()
    };
    let interactions = match gen.mode {
        InteractionMode::PersonEntity => keep
            .iter()
            .filter(|&&v| v as usize >= n)
            .map(|&v| remap(&gen.interactions[v as usize - n]))
            .collect(),
        InteractionMode::EntityEntity => gen
            .interactions
            .iter()
            .map(remap)
            .filter(|p| p.len() == 2)
            .collect(),
    };
    if keep.is_empty() {
        log::warn!("densification with min degree {min_degree} removed every node");
    }
    Ok((
        GeneratedGraph {
            profiles,
            interactions,
            mode: gen.mode,
        },
        removed,
    ))
}
