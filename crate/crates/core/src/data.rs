//! Triple files, vocabulary, splits and the filter index.
//!
//! Files are the usual benchmark layout: one `head<TAB>relation<TAB>tail`
//! fact per line, UTF-8, split into `train.txt`, `valid.txt` and `test.txt`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{HakeError, Result};

/// A fact as it appears in a file, before id assignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl RawTriple {
    pub fn new(head: &str, relation: &str, tail: &str) -> Self {
        Self {
            head: head.to_string(),
            relation: relation.to_string(),
            tail: tail.to_string(),
        }
    }
}

/// Integer-indexed fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub h: usize,
    pub r: usize,
    pub t: usize,
}

impl Triple {
    pub const fn new(h: usize, r: usize, t: usize) -> Self {
        Self { h, r, t }
    }
}

/// Dense string <-> id bijection for one token kind.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Interner {
    pub fn get_or_insert(&mut self, token: &str) -> usize {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.names.len();
        self.names.push(token.to_string());
        self.ids.insert(token.to_string(), id);
        id
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub entities: Interner,
    pub relations: Interner,
}

impl Vocabulary {
    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Resolves a relation given either its name or its numeric id.
    pub fn resolve_relation(&self, token: &str) -> Result<usize> {
        resolve(&self.relations, token, "relation")
    }

    pub fn resolve_entity(&self, token: &str) -> Result<usize> {
        resolve(&self.entities, token, "entity")
    }
}

fn resolve(interner: &Interner, token: &str, kind: &str) -> Result<usize> {
    if let Some(id) = interner.id(token) {
        return Ok(id);
    }
    match token.parse::<usize>() {
        Ok(id) if id < interner.len() => Ok(id),
        _ => Err(HakeError::Data(format!("unknown {kind} `{token}`"))),
    }
}

/// Vocabulary, the three splits, and the filter of every known true fact.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub vocab: Vocabulary,
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    filter: HashSet<Triple>,
    train_set: HashSet<Triple>,
    // (h, r) -> known tails and (r, t) -> known heads, over all splits
    tails_of: HashMap<(usize, usize), Vec<usize>>,
    heads_of: HashMap<(usize, usize), Vec<usize>>,
}

impl DatasetBundle {
    /// Assembles a bundle from already-indexed splits. Every id must be
    /// covered by `vocab`.
    pub fn from_parts(
        vocab: Vocabulary,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        let (ne, nr) = (vocab.num_entities(), vocab.num_relations());
        for tr in train.iter().chain(&valid).chain(&test) {
            check_id("entity", tr.h, ne)?;
            check_id("relation", tr.r, nr)?;
            check_id("entity", tr.t, ne)?;
        }
        let filter: HashSet<Triple> = train.iter().chain(&valid).chain(&test).copied().collect();
        let train_set: HashSet<Triple> = train.iter().copied().collect();
        let mut ordered: Vec<Triple> = filter.iter().copied().collect();
        ordered.sort_unstable();
        let mut tails_of: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        let mut heads_of: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for tr in ordered {
            tails_of.entry((tr.h, tr.r)).or_default().push(tr.t);
            heads_of.entry((tr.r, tr.t)).or_default().push(tr.h);
        }
        Ok(Self {
            vocab,
            train,
            valid,
            test,
            filter,
            train_set,
            tails_of,
            heads_of,
        })
    }

    pub fn empty() -> Self {
        Self::from_parts(Vocabulary::default(), vec![], vec![], vec![])
            .expect("empty bundle is valid")
    }

    pub fn num_entities(&self) -> usize {
        self.vocab.num_entities()
    }

    pub fn num_relations(&self) -> usize {
        self.vocab.num_relations()
    }

    /// Is the triple a known fact in any split?
    pub fn is_known(&self, triple: &Triple) -> bool {
        self.filter.contains(triple)
    }

    pub fn in_train(&self, triple: &Triple) -> bool {
        self.train_set.contains(triple)
    }

    pub fn filter_len(&self) -> usize {
        self.filter.len()
    }

    pub fn filter(&self) -> &HashSet<Triple> {
        &self.filter
    }

    /// Known tails `t` with `(h, r, t)` in the filter, ascending.
    pub fn known_tails(&self, h: usize, r: usize) -> &[usize] {
        self.tails_of.get(&(h, r)).map_or(&[], Vec::as_slice)
    }

    /// Known heads `h` with `(h, r, t)` in the filter, ascending.
    pub fn known_heads(&self, r: usize, t: usize) -> &[usize] {
        self.heads_of.get(&(r, t)).map_or(&[], Vec::as_slice)
    }

    pub fn stats(&self) -> DatasetStats {
        dataset_stats(self)
    }

    /// Serializes one split back to tab-separated text.
    pub fn split_to_text(&self, split: &[Triple]) -> String {
        let mut out = String::new();
        for tr in split {
            let h = self.vocab.entities.name(tr.h).unwrap_or_default();
            let r = self.vocab.relations.name(tr.r).unwrap_or_default();
            let t = self.vocab.entities.name(tr.t).unwrap_or_default();
            out.push_str(h);
            out.push('\t');
            out.push_str(r);
            out.push('\t');
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    /// Writes `train.txt`, `valid.txt` and `test.txt` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| HakeError::io(dir, e))?;
        for (name, split) in [
            ("train.txt", &self.train),
            ("valid.txt", &self.valid),
            ("test.txt", &self.test),
        ] {
            let path = dir.join(name);
            fs::write(&path, self.split_to_text(split)).map_err(|e| HakeError::io(&path, e))?;
        }
        Ok(())
    }
}

fn check_id(kind: &'static str, id: usize, len: usize) -> Result<()> {
    if id >= len {
        return Err(HakeError::IdOutOfRange { kind, id, len });
    }
    Ok(())
}

/// Parses tab-separated `head relation tail` lines. Blank lines are skipped.
pub fn parse_triple_file(text: &str) -> Result<Vec<RawTriple>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(HakeError::Parse {
                line: line_no,
                msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let (h, r, t) = (fields[0].trim(), fields[1].trim(), fields[2].trim());
        if h.is_empty() || r.is_empty() || t.is_empty() {
            return Err(HakeError::Parse {
                line: line_no,
                msg: "empty field".into(),
            });
        }
        out.push(RawTriple::new(h, r, t));
    }
    if out.is_empty() {
        return Err(HakeError::Parse {
            line: 0,
            msg: "file contains no triples".into(),
        });
    }
    Ok(out)
}

/// Reads and parses one triple file, tagging errors with its path.
pub fn read_triple_file(path: &Path) -> Result<Vec<RawTriple>> {
    let text = fs::read_to_string(path).map_err(|e| HakeError::io(path, e))?;
    parse_triple_file(&text).map_err(|e| match e {
        HakeError::Parse { line, msg } => {
            HakeError::Data(format!("{}:{}: {}", path.display(), line, msg))
        }
        other => other,
    })
}

/// Builds ids by first appearance over train, then valid, then test.
///
/// Tokens that only occur in valid/test are rejected.
pub fn build_bundle(
    train: &[RawTriple],
    valid: &[RawTriple],
    test: &[RawTriple],
) -> Result<DatasetBundle> {
    let mut vocab = Vocabulary::default();
    let train_ids = train
        .iter()
        .map(|raw| Triple {
            h: vocab.entities.get_or_insert(&raw.head),
            r: vocab.relations.get_or_insert(&raw.relation),
            t: vocab.entities.get_or_insert(&raw.tail),
        })
        .collect();
    let lookup = |raws: &[RawTriple], split: &'static str| -> Result<Vec<Triple>> {
        raws.iter()
            .map(|raw| {
                let ent = |tok: &str| {
                    vocab.entities.id(tok).ok_or_else(|| HakeError::UnseenToken {
                        kind: "entity",
                        token: tok.to_string(),
                        split,
                    })
                };
                let r = vocab
                    .relations
                    .id(&raw.relation)
                    .ok_or_else(|| HakeError::UnseenToken {
                        kind: "relation",
                        token: raw.relation.clone(),
                        split,
                    })?;
                Ok(Triple {
                    h: ent(&raw.head)?,
                    r,
                    t: ent(&raw.tail)?,
                })
            })
            .collect()
    };
    let valid_ids = lookup(valid, "valid")?;
    let test_ids = lookup(test, "test")?;
    DatasetBundle::from_parts(vocab, train_ids, valid_ids, test_ids)
}

/// Loads `train.txt`, `valid.txt` and `test.txt` from a directory.
pub fn load_dir(dir: &Path) -> Result<DatasetBundle> {
    let train = read_triple_file(&dir.join("train.txt"))?;
    let valid = read_triple_file(&dir.join("valid.txt"))?;
    let test = read_triple_file(&dir.join("test.txt"))?;
    build_bundle(&train, &valid, &test)
}

/// Table-2-style counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DatasetStats {
    pub entities: usize,
    pub relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

pub fn dataset_stats(bundle: &DatasetBundle) -> DatasetStats {
    DatasetStats {
        entities: bundle.num_entities(),
        relations: bundle.num_relations(),
        train: bundle.train.len(),
        valid: bundle.valid.len(),
        test: bundle.test.len(),
    }
}

impl DatasetStats {
    const FIELDS: [&'static str; 5] = ["entities", "relations", "train", "valid", "test"];

    fn values(&self) -> [usize; 5] {
        [self.entities, self.relations, self.train, self.valid, self.test]
    }

    /// `entities=40493 relations=11 ...`, one pair per line.
    pub fn to_kv(&self) -> String {
        Self::FIELDS
            .iter()
            .zip(self.values())
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>10} {:>10} {:>10} {:>10} {:>10}", "#E", "#R", "#TR", "#VA", "#TE")?;
        let v = self.values();
        writeln!(f, "{:>10} {:>10} {:>10} {:>10} {:>10}", v[0], v[1], v[2], v[3], v[4])
    }
}

/// Published counts for the three standard benchmarks.
pub const REFERENCE_STATS: [(&str, DatasetStats); 3] = [
    (
        "WN18RR",
        DatasetStats {
            entities: 40_493,
            relations: 11,
            train: 86_835,
            valid: 3_034,
            test: 3_134,
        },
    ),
    (
        "FB15k-237",
        DatasetStats {
            entities: 14_541,
            relations: 237,
            train: 272_115,
            valid: 17_535,
            test: 20_466,
        },
    ),
    (
        "YAGO3-10",
        DatasetStats {
            entities: 123_182,
            relations: 37,
            train: 1_079_040,
            valid: 5_000,
            test: 5_000,
        },
    ),
];

/// Looks up reference counts by name, ignoring case and `-`/`_`.
pub fn reference_stats(name: &str) -> Option<(&'static str, DatasetStats)> {
    let norm = |s: &str| {
        s.chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase()
    };
    let key = norm(name);
    REFERENCE_STATS
        .iter()
        .find(|(n, _)| norm(n) == key)
        .map(|(n, s)| (*n, *s))
}

/// One field that differs from the published count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatMismatch {
    pub field: &'static str,
    pub file: usize,
    pub reference: usize,
}

/// Compares file-derived counts with reference counts. Mismatches are
/// reported, never treated as errors.
pub fn compare_stats(file: &DatasetStats, reference: &DatasetStats) -> Vec<StatMismatch> {
    DatasetStats::FIELDS
        .iter()
        .zip(file.values().into_iter().zip(reference.values()))
        .filter(|(_, (a, b))| a != b)
        .map(|(field, (a, b))| StatMismatch {
            field,
            file: a,
            reference: b,
        })
        .collect()
}
