//! Synthetic hierarchical knowledge graphs.
//!
//! A complete `branching`-ary tree of the given depth, with WordNet-style
//! relations: `_hypernym` (child to parent), `_member_meronym` (parent to
//! child) and, optionally, symmetric `_similar_to` links between leaves that
//! share a parent.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{build_bundle, DatasetBundle, RawTriple};
use crate::error::{HakeError, Result};

pub const HYPERNYM: &str = "_hypernym";
pub const MEMBER_MERONYM: &str = "_member_meronym";
pub const SIMILAR_TO: &str = "_similar_to";

const MAX_NODES: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub depth: usize,
    pub branching: usize,
    pub seed: u64,
    pub sibling_fraction: f64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(HakeError::Config(format!("depth must be >= 2, got {}", self.depth)));
        }
        if self.branching < 2 {
            return Err(HakeError::Config(format!(
                "branching must be >= 2, got {}",
                self.branching
            )));
        }
        if !(0.0..=1.0).contains(&self.sibling_fraction) {
            return Err(HakeError::Config(format!(
                "sibling_fraction must be in [0, 1], got {}",
                self.sibling_fraction
            )));
        }
        Ok(())
    }

    /// Node count of the complete tree, if it fits under the size cap.
    pub fn node_count(&self) -> Option<usize> {
        let mut total = 0usize;
        let mut level = 1usize;
        for _ in 0..=self.depth {
            total = total.checked_add(level)?;
            level = level.checked_mul(self.branching)?;
        }
        (total <= MAX_NODES).then_some(total)
    }
}

/// A generated bundle plus the ground truth used by the diagnostics.
#[derive(Debug, Clone)]
pub struct SyntheticKg {
    pub bundle: DatasetBundle,
    /// Tree depth of each entity, indexed by entity id.
    pub levels: Vec<usize>,
    /// Parent entity id of each entity (`None` for the root).
    pub parents: Vec<Option<usize>>,
    pub hypernym: usize,
    pub member_meronym: usize,
    pub similar_to: Option<usize>,
}

impl SyntheticKg {
    pub fn depth(&self) -> usize {
        self.levels.iter().copied().max().unwrap_or(0)
    }

    /// Writes the three split files plus `levels.tsv` (`entity<TAB>level`).
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        self.bundle.write_dir(dir)?;
        let mut text = String::new();
        for (id, level) in self.levels.iter().enumerate() {
            let name = self.bundle.vocab.entities.name(id).unwrap_or_default();
            text.push_str(&format!("{name}\t{level}\n"));
        }
        let path = dir.join("levels.tsv");
        fs::write(&path, text).map_err(|e| HakeError::io(&path, e))
    }
}

fn node_name(idx: usize) -> String {
    format!("n{idx}")
}

pub fn generate_synthetic_kg(spec: &SynthSpec) -> Result<SyntheticKg> {
    spec.validate()?;
    let n_nodes = spec.node_count().ok_or_else(|| {
        HakeError::Config(format!(
            "tree with depth {} and branching {} exceeds {MAX_NODES} nodes",
            spec.depth, spec.branching
        ))
    })?;

    // Breadth-first numbering: children of node i are b*i+1 ..= b*i+b.
    let b = spec.branching;
    let parent_of = |i: usize| (i > 0).then(|| (i - 1) / b);
    let mut level_of = vec![0usize; n_nodes];
    for i in 1..n_nodes {
        level_of[i] = level_of[(i - 1) / b] + 1;
    }

    let mut triples = Vec::with_capacity(3 * n_nodes);
    for child in 1..n_nodes {
        let parent = (child - 1) / b;
        triples.push(RawTriple::new(&node_name(child), HYPERNYM, &node_name(parent)));
        triples.push(RawTriple::new(&node_name(parent), MEMBER_MERONYM, &node_name(child)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let first_leaf = n_nodes - b.pow(spec.depth as u32);
    let mut pairs = Vec::new();
    for family in (first_leaf..n_nodes).step_by(b) {
        for x in family..family + b {
            for y in x + 1..family + b {
                pairs.push((x, y));
            }
        }
    }
    let n_pairs = (spec.sibling_fraction * pairs.len() as f64).round() as usize;
    pairs.shuffle(&mut rng);
    let mut chosen = pairs[..n_pairs].to_vec();
    chosen.sort_unstable();
    for (x, y) in chosen {
        triples.push(RawTriple::new(&node_name(x), SIMILAR_TO, &node_name(y)));
        triples.push(RawTriple::new(&node_name(y), SIMILAR_TO, &node_name(x)));
    }

    let (train, valid, test) = split_covering(triples, &mut rng)?;
    let bundle = build_bundle(&train, &valid, &test)?;

    let entity_node = |id: usize| -> usize {
        bundle.vocab.entities.name(id).expect("id in range")[1..]
            .parse()
            .expect("generated name")
    };
    let ne = bundle.num_entities();
    let node_to_id: Vec<usize> = {
        let mut v = vec![usize::MAX; n_nodes];
        for id in 0..ne {
            v[entity_node(id)] = id;
        }
        v
    };
    let levels = (0..ne).map(|id| level_of[entity_node(id)]).collect();
    let parents = (0..ne)
        .map(|id| parent_of(entity_node(id)).map(|p| node_to_id[p]))
        .collect();
    let rel = |name: &str| bundle.vocab.relations.id(name);
    Ok(SyntheticKg {
        hypernym: rel(HYPERNYM).expect("hypernym relation present"),
        member_meronym: rel(MEMBER_MERONYM).expect("meronym relation present"),
        similar_to: rel(SIMILAR_TO),
        levels,
        parents,
        bundle,
    })
}

type Splits = (Vec<RawTriple>, Vec<RawTriple>, Vec<RawTriple>);

/// 80/10/10 split after a seeded shuffle. A triple only leaves train if
/// each of its tokens still occurs in some other train triple.
fn split_covering(mut triples: Vec<RawTriple>, rng: &mut ChaCha8Rng) -> Result<Splits> {
    triples.shuffle(rng);
    let n = triples.len();
    let n_held = n / 10;
    let mut counts: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    let key = |kind: char, s: &str| format!("{kind}:{s}");
    for t in &triples {
        *counts.entry(key('e', &t.head)).or_default() += 1;
        *counts.entry(key('e', &t.tail)).or_default() += 1;
        *counts.entry(key('r', &t.relation)).or_default() += 1;
    }
    let mut held: HashSet<usize> = HashSet::new();
    let mut valid = Vec::with_capacity(n_held);
    let mut test = Vec::with_capacity(n_held);
    for (i, t) in triples.iter().enumerate() {
        if valid.len() == n_held && test.len() == n_held {
            break;
        }
        let keys = [key('e', &t.head), key('e', &t.tail), key('r', &t.relation)];
        // a self-loop counts its entity twice
        let removable = keys.iter().all(|k| {
            let uses = keys.iter().filter(|o| *o == k).count();
            counts[k] > uses
        });
        if !removable {
            continue;
        }
        for k in &keys {
            *counts.get_mut(k).expect("counted") -= 1;
        }
        held.insert(i);
        if valid.len() < n_held {
            valid.push(t.clone());
        } else {
            test.push(t.clone());
        }
    }
    if valid.len() < n_held || test.len() < n_held || n_held == 0 {
        return Err(HakeError::Data(format!(
            "cannot hold out {n_held}+{n_held} of {n} triples while keeping every entity and relation in train"
        )));
    }
    let train = triples
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !held.contains(i))
        .map(|(_, t)| t)
        .collect();
    Ok((train, valid, test))
}
