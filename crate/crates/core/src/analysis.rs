//! Embedding diagnostics: histograms of relation moduli and phases, polar
//! export of entity rows, sign agreement between entity pairs, entity
//! modulus dispersion, and residuals of the symmetry / inversion /
//! composition identities. Everything is written out as CSV.

use std::collections::HashSet;
use std::f64::consts::{PI, TAU};
use std::io::Write;

use rand::Rng;

use crate::data::DatasetBundle;
use crate::error::{HakeError, Result};
use crate::model::ModelParams;

/// Floor applied before taking `log10` of a modulus.
pub const LOG_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
}

/// Which side of each bin interval is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinClosure {
    /// `[e_i, e_{i+1})`, last bin closed on both ends. Used for angles on
    /// `[0, 2π)`.
    Left,
    /// `(e_i, e_{i+1}]`, first bin closed on both ends. Used for magnitudes,
    /// whose natural grid values (0.1, 0.2, ...) sit on upper edges.
    Right,
}

/// Values within this fraction of a bin width of an edge count as on it, so
/// `0.1 * 3.0` and `0.3` land in the same bin.
const EDGE_SNAP: f64 = 1e-9;

impl Histogram {
    /// Equal-width left-closed bins on `[lo, hi]`; the last bin includes
    /// `hi`. Values outside the range are an error.
    pub fn from_values(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        Self::with_closure(values, lo, hi, bins, BinClosure::Left)
    }

    pub fn with_closure(values: &[f64], lo: f64, hi: f64, bins: usize, closure: BinClosure) -> Result<Self> {
        if bins == 0 {
            return Err(HakeError::Config("bins must be >= 1".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(HakeError::Config(format!("bad histogram range [{lo}, {hi}]")));
        }
        let width = hi - lo;
        let edges: Vec<f64> = (0..=bins)
            .map(|i| if i == bins { hi } else { lo + width * i as f64 / bins as f64 })
            .collect();
        let snap = EDGE_SNAP * width / bins as f64;
        let mut counts = vec![0u64; bins];
        for &x in values {
            if !(x >= lo - snap && x <= hi + snap) {
                return Err(HakeError::Numeric(format!("value {x} outside histogram range [{lo}, {hi}]")));
            }
            // position in bin units, with near-edge values pulled onto the edge
            let pos = ((x - lo) / width) * bins as f64;
            let nearest = pos.round();
            let pos = if (pos - nearest).abs() * width / bins as f64 <= snap { nearest } else { pos };
            let idx = match closure {
                BinClosure::Left => pos.floor(),
                BinClosure::Right => pos.ceil() - 1.0,
            };
            counts[idx.clamp(0.0, (bins - 1) as f64) as usize] += 1;
        }
        Ok(Self {
            bin_edges: edges,
            counts,
            total: values.len() as u64,
        })
    }

    /// Range spanning the data; a constant sample gets a unit-wide range.
    pub fn spanning(values: &[f64], bins: usize, closure: BinClosure) -> Result<Self> {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() {
            return Self::with_closure(values, 0.0, 1.0, bins, closure);
        }
        if lo == hi {
            return Self::with_closure(values, lo - 0.5, hi + 0.5, bins, closure);
        }
        Self::with_closure(values, lo, hi, bins, closure)
    }

    /// Index of the fullest bin (first on ties).
    pub fn mode_bin(&self) -> usize {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        self.counts.iter().position(|&c| c == max).unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_lo", "bin_hi", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([
                self.bin_edges[i].to_string(),
                self.bin_edges[i + 1].to_string(),
                c.to_string(),
            ])?;
        }
        w.flush().map_err(|e| HakeError::io("<csv>", e))?;
        Ok(())
    }
}

fn check_relation(params: &ModelParams, r: usize) -> Result<()> {
    if r >= params.num_relations() {
        return Err(HakeError::IdOutOfRange { kind: "relation", id: r, len: params.num_relations() });
    }
    Ok(())
}

fn check_entity(params: &ModelParams, e: usize) -> Result<()> {
    if e >= params.num_entities() {
        return Err(HakeError::IdOutOfRange { kind: "entity", id: e, len: params.num_entities() });
    }
    Ok(())
}

/// Effective moduli `|raw|` of one relation.
pub fn relation_moduli(params: &ModelParams, r: usize) -> Result<Vec<f64>> {
    check_relation(params, r)?;
    Ok(params.rel_mod.row(r).iter().map(|x| x.abs()).collect())
}

/// Histogram over the `k` effective moduli of relation `r`. Without a range
/// the bins span the data.
pub fn relation_modulus_histogram(params: &ModelParams, r: usize, bins: usize, range: Option<(f64, f64)>) -> Result<Histogram> {
    let values = relation_moduli(params, r)?;
    match range {
        Some((lo, hi)) => Histogram::with_closure(&values, lo, hi, bins, BinClosure::Right),
        None => Histogram::spanning(&values, bins, BinClosure::Right),
    }
}

/// `x mod 2π` in `[0, 2π)`.
pub fn wrap_phase(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Histogram over relation phases reduced into `[0, 2π)`.
pub fn relation_phase_histogram(params: &ModelParams, r: usize, bins: usize) -> Result<Histogram> {
    check_relation(params, r)?;
    let values: Vec<f64> = params.rel_phase.row(r).iter().map(|&x| wrap_phase(x)).collect();
    Histogram::from_values(&values, 0.0, TAU, bins)
}

/// Histogram over every entity modulus magnitude `|e_m|`.
pub fn entity_modulus_histogram(params: &ModelParams, bins: usize, range: Option<(f64, f64)>) -> Result<Histogram> {
    let values: Vec<f64> = params.ent_mod.as_slice().iter().map(|x| x.abs()).collect();
    match range {
        Some((lo, hi)) => Histogram::with_closure(&values, lo, hi, bins, BinClosure::Right),
        None => {
            let hi = values.iter().copied().fold(0.0, f64::max);
            Histogram::with_closure(&values, 0.0, if hi > 0.0 { hi } else { 1.0 }, bins, BinClosure::Right)
        }
    }
}

/// Mean of `|e_m|` over each entity's row.
pub fn entity_mean_moduli(params: &ModelParams) -> Vec<f64> {
    let k = params.k() as f64;
    (0..params.num_entities())
        .map(|e| params.ent_mod.row(e).iter().map(|x| x.abs()).sum::<f64>() / k)
        .collect()
}

/// Coefficient of variation (std / mean) of the per-entity mean modulus.
pub fn modulus_dispersion(params: &ModelParams) -> f64 {
    let means = entity_mean_moduli(params);
    let n = means.len() as f64;
    let mu = means.iter().sum::<f64>() / n;
    let var = means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / n;
    var.sqrt() / mu
}

/// Mean per-entity modulus grouped by a level label (e.g. tree depth).
pub fn mean_modulus_by_level(params: &ModelParams, levels: &[usize]) -> Vec<f64> {
    let depth = levels.iter().copied().max().map_or(0, |d| d + 1);
    let mut sum = vec![0.0; depth];
    let mut cnt = vec![0usize; depth];
    for (e, m) in entity_mean_moduli(params).into_iter().enumerate() {
        sum[levels[e]] += m;
        cnt[levels[e]] += 1;
    }
    sum.iter().zip(&cnt).map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarRow {
    pub entity: usize,
    pub dim: usize,
    pub radius: f64,
    pub angle: f64,
}

/// One row per (entity, dimension). With `log_scale` the radius is
/// `−log10(max(|m|, 1e-8))`, so smaller moduli plot further out.
pub fn entity_polar_export(params: &ModelParams, entities: &[usize], log_scale: bool) -> Result<Vec<PolarRow>> {
    let mut rows = Vec::with_capacity(entities.len() * params.k());
    for &e in entities {
        check_entity(params, e)?;
        for (dim, (&m, &p)) in params.ent_mod.row(e).iter().zip(params.ent_phase.row(e)).enumerate() {
            let radius = if log_scale { -(m.abs().max(LOG_FLOOR)).log10() } else { m.abs() };
            rows.push(PolarRow { entity: e, dim, radius, angle: wrap_phase(p) });
        }
    }
    Ok(rows)
}

/// Writes polar rows as `entity,dim,radius,angle`; `names` maps ids to labels.
pub fn write_polar_csv<W: Write>(rows: &[PolarRow], names: Option<&[String]>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["entity", "dim", "radius", "angle"])?;
    for r in rows {
        let entity = names.and_then(|n| n.get(r.entity)).cloned().unwrap_or_else(|| r.entity.to_string());
        w.write_record([entity, r.dim.to_string(), r.radius.to_string(), r.angle.to_string()])?;
    }
    w.flush().map_err(|e| HakeError::io("<csv>", e))?;
    Ok(())
}

/// Number of dimensions where the two entities' moduli have opposite signs.
pub fn differing_signs(params: &ModelParams, a: usize, b: usize) -> Result<usize> {
    check_entity(params, a)?;
    check_entity(params, b)?;
    Ok(params
        .ent_mod
        .row(a)
        .iter()
        .zip(params.ent_mod.row(b))
        .filter(|(x, y)| *x * *y < 0.0)
        .count())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairLabel {
    Linked,
    Unlinked,
}

impl PairLabel {
    pub fn name(&self) -> &'static str {
        match self {
            PairLabel::Linked => "linked",
            PairLabel::Unlinked => "unlinked",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignRow {
    pub pair_id: usize,
    pub head: usize,
    pub tail: usize,
    pub label: PairLabel,
    pub diff_signs: usize,
}

/// Linked entity pairs: distinct, unordered `(h, t)` of train triples.
pub fn linked_pairs(bundle: &DatasetBundle) -> Vec<(usize, usize)> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for t in &bundle.train {
        if t.h == t.t {
            continue;
        }
        let key = (t.h.min(t.t), t.h.max(t.t));
        if seen.insert(key) {
            out.push((t.h, t.t));
        }
    }
    out
}

/// `count` uniformly drawn pairs of distinct entities with no triple between
/// them in any split. Unlinked does not mean false: the graph is incomplete.
pub fn sample_unlinked_pairs<R: Rng + ?Sized>(bundle: &DatasetBundle, count: usize, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    let ne = bundle.num_entities();
    let linked: HashSet<(usize, usize)> = bundle.filter().iter().map(|t| (t.h.min(t.t), t.h.max(t.t))).collect();
    let possible = ne * ne.saturating_sub(1) / 2;
    if possible <= linked.len() && count > 0 {
        return Err(HakeError::Data("every entity pair is linked; nothing to sample".into()));
    }
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1000 * (count + 10) {
            return Err(HakeError::Data("could not sample enough unlinked pairs".into()));
        }
        let (a, b) = (rng.gen_range(0..ne), rng.gen_range(0..ne));
        if a == b || linked.contains(&(a.min(b), a.max(b))) {
            continue;
        }
        out.push((a, b));
    }
    Ok(out)
}

/// Differing-sign counts for linked train pairs and an equal-size sample of
/// unlinked pairs.
pub fn sign_agreement_counts<R: Rng + ?Sized>(params: &ModelParams, bundle: &DatasetBundle, rng: &mut R) -> Result<Vec<SignRow>> {
    let linked = linked_pairs(bundle);
    let unlinked = sample_unlinked_pairs(bundle, linked.len(), rng)?;
    let mut rows = Vec::with_capacity(2 * linked.len());
    for (label, pairs) in [(PairLabel::Linked, &linked), (PairLabel::Unlinked, &unlinked)] {
        for &(h, t) in pairs {
            rows.push(SignRow {
                pair_id: rows.len(),
                head: h,
                tail: t,
                label,
                diff_signs: differing_signs(params, h, t)?,
            });
        }
    }
    Ok(rows)
}

/// Mean differing-sign count per label: `(linked, unlinked)`.
pub fn mean_differing_signs(rows: &[SignRow]) -> (f64, f64) {
    let mean = |label| {
        let v: Vec<f64> = rows.iter().filter(|r| r.label == label).map(|r| r.diff_signs as f64).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    (mean(PairLabel::Linked), mean(PairLabel::Unlinked))
}

/// `pair_id,label,diff_signs`. Unlinked pairs may still be true facts
/// missing from the graph.
pub fn write_sign_csv<W: Write>(rows: &[SignRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["pair_id", "label", "diff_signs"])?;
    for r in rows {
        w.write_record([r.pair_id.to_string(), r.label.name().to_string(), r.diff_signs.to_string()])?;
    }
    w.flush().map_err(|e| HakeError::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    Symmetry,
    Inversion,
    Composition,
}

impl Pattern {
    pub fn arity(&self) -> usize {
        match self {
            Pattern::Symmetry => 1,
            Pattern::Inversion => 2,
            Pattern::Composition => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Pattern::Symmetry => "symmetry",
            Pattern::Inversion => "inversion",
            Pattern::Composition => "composition",
        }
    }
}

impl std::str::FromStr for Pattern {
    type Err = HakeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetry" => Ok(Pattern::Symmetry),
            "inversion" => Ok(Pattern::Inversion),
            "composition" => Ok(Pattern::Composition),
            other => Err(HakeError::Config(format!("unknown pattern `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternResidual {
    pub pattern: Pattern,
    pub modulus_residual: Vec<f64>,
    /// Circular distance to 0, in `[0, π]`.
    pub phase_residual: Vec<f64>,
}

/// Distance of an angle from 0 on the circle.
pub fn circular_distance_to_zero(x: f64) -> f64 {
    let w = wrap_phase(x);
    w.min(TAU - w).clamp(0.0, PI)
}

/// Residuals of the relation-pattern identities on raw rows:
///
/// * symmetry: `m∘m = 1`, `2p ≡ 0`
/// * inversion: `m1 = 1/m2`, `p1 + p2 ≡ 0`
/// * composition: `m1 = m2∘m3`, `p1 − p2 − p3 ≡ 0`
pub fn pattern_residual_rows(pattern: Pattern, moduli: &[&[f64]], phases: &[&[f64]]) -> Result<PatternResidual> {
    if moduli.len() != pattern.arity() || phases.len() != pattern.arity() {
        return Err(HakeError::Config(format!(
            "{} takes {} relation(s), got {}",
            pattern.name(),
            pattern.arity(),
            moduli.len()
        )));
    }
    let k = moduli[0].len();
    let (mut mres, mut pres) = (Vec::with_capacity(k), Vec::with_capacity(k));
    for i in 0..k {
        let (m, p) = match pattern {
            Pattern::Symmetry => (moduli[0][i] * moduli[0][i] - 1.0, 2.0 * phases[0][i]),
            Pattern::Inversion => (moduli[0][i] - 1.0 / moduli[1][i], phases[0][i] + phases[1][i]),
            Pattern::Composition => (
                moduli[0][i] - moduli[1][i] * moduli[2][i],
                phases[0][i] - phases[1][i] - phases[2][i],
            ),
        };
        mres.push(m.abs());
        pres.push(circular_distance_to_zero(p));
    }
    Ok(PatternResidual { pattern, modulus_residual: mres, phase_residual: pres })
}

/// Pattern residuals for trained relations, using each relation's effective
/// multiplicative modulus (which accounts for the mixture bias).
pub fn pattern_residual(params: &ModelParams, relations: &[usize], pattern: Pattern) -> Result<PatternResidual> {
    if relations.len() != pattern.arity() {
        return Err(HakeError::Config(format!(
            "{} takes {} relation(s), got {}",
            pattern.name(),
            pattern.arity(),
            relations.len()
        )));
    }
    for &r in relations {
        check_relation(params, r)?;
    }
    let moduli: Vec<Vec<f64>> = relations.iter().map(|&r| params.effective_rel_modulus(r)).collect();
    let m: Vec<&[f64]> = moduli.iter().map(Vec::as_slice).collect();
    let p: Vec<&[f64]> = relations.iter().map(|&r| params.rel_phase.row(r)).collect();
    pattern_residual_rows(pattern, &m, &p)
}

/// `pattern,dim,mod_residual,phase_residual`.
pub fn write_pattern_csv<W: Write>(res: &PatternResidual, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["pattern", "dim", "mod_residual", "phase_residual"])?;
    for (i, (m, p)) in res.modulus_residual.iter().zip(&res.phase_residual).enumerate() {
        w.write_record([res.pattern.name().to_string(), i.to_string(), m.to_string(), p.to_string()])?;
    }
    w.flush().map_err(|e| HakeError::io("<csv>", e))?;
    Ok(())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
