//! Filtered link-prediction ranking.
//!
//! Each evaluation triple yields two queries (replace head, replace tail).
//! Every entity is a candidate; candidates that form a known fact (any
//! split) are dropped, except the query triple itself. Ties count half:
//! `rank = 1 + #higher + #tied / 2`.

use std::fmt;

use rayon::prelude::*;

use crate::data::{DatasetBundle, Triple};
use crate::error::{HakeError, Result};
use crate::model::ModelParams;

pub const HITS_AT: [usize; 3] = [1, 3, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    ReplaceHead,
    ReplaceTail,
}

impl std::str::FromStr for Direction {
    type Err = HakeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "head" | "replace_head" => Ok(Direction::ReplaceHead),
            "tail" | "replace_tail" => Ok(Direction::ReplaceTail),
            other => Err(HakeError::Config(format!("invalid direction `{other}`"))),
        }
    }
}

fn candidate(query: &Triple, dir: Direction, e: usize) -> Triple {
    match dir {
        Direction::ReplaceHead => Triple { h: e, ..*query },
        Direction::ReplaceTail => Triple { t: e, ..*query },
    }
}

/// Filtered mean-tie rank of `query` among all candidate entities.
pub fn rank_one(params: &ModelParams, query: &Triple, direction: Direction, bundle: &DatasetBundle) -> Result<f64> {
    params.check_triple(query)?;
    if params.num_entities() != bundle.num_entities() {
        return Err(HakeError::Data(format!(
            "model has {} entities, dataset has {}",
            params.num_entities(),
            bundle.num_entities()
        )));
    }
    let mut filtered = vec![false; bundle.num_entities()];
    Ok(rank_with_buffer(params, query, direction, bundle, &mut filtered))
}

fn rank_with_buffer(
    params: &ModelParams,
    query: &Triple,
    direction: Direction,
    bundle: &DatasetBundle,
    filtered: &mut [bool],
) -> f64 {
    let (known, own) = match direction {
        Direction::ReplaceHead => (bundle.known_heads(query.r, query.t), query.h),
        Direction::ReplaceTail => (bundle.known_tails(query.h, query.r), query.t),
    };
    for &e in known {
        filtered[e] = true;
    }
    filtered[own] = false;

    let target = -params.distance_unchecked(query);
    let mut higher = 0usize;
    let mut ties = 0usize;
    for e in 0..params.num_entities() {
        if e == own || filtered[e] {
            continue;
        }
        let s = -params.distance_unchecked(&candidate(query, direction, e));
        if s > target {
            higher += 1;
        } else if s == target {
            ties += 1;
        }
    }
    for &e in known {
        filtered[e] = false;
    }
    1.0 + higher as f64 + ties as f64 / 2.0
}

/// MRR and Hits@{1,3,10} over a set of ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct RankMetrics {
    pub mrr: f64,
    pub hits: [f64; 3],
    pub count: usize,
}

impl RankMetrics {
    pub fn from_ranks(ranks: &[f64]) -> Self {
        let n = ranks.len();
        if n == 0 {
            return Self { mrr: 0.0, hits: [0.0; 3], count: 0 };
        }
        let inv = 1.0 / n as f64;
        let mrr = ranks.iter().map(|r| 1.0 / r).sum::<f64>() * inv;
        let hits = HITS_AT.map(|k| ranks.iter().filter(|&&r| r <= k as f64).count() as f64 * inv);
        Self { mrr, hits, count: n }
    }

    pub fn hits_at(&self, n: usize) -> Option<f64> {
        HITS_AT.iter().position(|&k| k == n).map(|i| self.hits[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Pooled over both directions.
    pub overall: RankMetrics,
    pub head: RankMetrics,
    pub tail: RankMetrics,
    /// Per evaluation triple: (replace-head rank, replace-tail rank).
    pub ranks: Vec<(f64, f64)>,
}

impl MetricsReport {
    pub fn mrr(&self) -> f64 {
        self.overall.mrr
    }

    pub fn hits_at(&self, n: usize) -> Option<f64> {
        self.overall.hits_at(n)
    }

    pub fn count(&self) -> usize {
        self.overall.count
    }

    /// `mrr=0.497000 hits1=0.452000 hits3=0.516000 hits10=0.582000`
    pub fn to_kv(&self) -> String {
        let m = &self.overall;
        format!(
            "mrr={:.6} hits1={:.6} hits3={:.6} hits10={:.6} count={}",
            m.mrr, m.hits[0], m.hits[1], m.hits[2], m.count
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>8} {:>8} {:>8} {:>8} {:>8}", "direction", "MRR", "H@1", "H@3", "H@10", "queries")?;
        for (name, m) in [("head", &self.head), ("tail", &self.tail), ("both", &self.overall)] {
            writeln!(
                f,
                "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8}",
                name, m.mrr, m.hits[0], m.hits[1], m.hits[2], m.count
            )?;
        }
        Ok(())
    }
}

/// Ranks both directions of every triple in `split`.
///
/// `workers > 1` spreads queries over a thread pool; results do not depend
/// on the worker count.
pub fn evaluate(params: &ModelParams, split: &[Triple], bundle: &DatasetBundle, workers: usize) -> Result<MetricsReport> {
    if split.is_empty() {
        return Err(HakeError::Data("evaluation split is empty".into()));
    }
    if params.num_entities() != bundle.num_entities() || params.num_relations() != bundle.num_relations() {
        return Err(HakeError::Data(format!(
            "model has {} entities / {} relations, dataset has {} / {}",
            params.num_entities(),
            params.num_relations(),
            bundle.num_entities(),
            bundle.num_relations()
        )));
    }
    for t in split {
        params.check_triple(t)?;
    }
    let ne = bundle.num_entities();
    let rank_pair = |filtered: &mut Vec<bool>, t: &Triple| {
        (
            rank_with_buffer(params, t, Direction::ReplaceHead, bundle, filtered),
            rank_with_buffer(params, t, Direction::ReplaceTail, bundle, filtered),
        )
    };
    let ranks: Vec<(f64, f64)> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| HakeError::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| {
            split
                .par_iter()
                .map_init(|| vec![false; ne], rank_pair)
                .collect()
        })
    } else {
        let mut buf = vec![false; ne];
        split.iter().map(|t| rank_pair(&mut buf, t)).collect()
    };
    let heads: Vec<f64> = ranks.iter().map(|r| r.0).collect();
    let tails: Vec<f64> = ranks.iter().map(|r| r.1).collect();
    let all: Vec<f64> = ranks.iter().flat_map(|&(h, t)| [h, t]).collect();
    Ok(MetricsReport {
        overall: RankMetrics::from_ranks(&all),
        head: RankMetrics::from_ranks(&heads),
        tail: RankMetrics::from_ranks(&tails),
        ranks,
    })
}
