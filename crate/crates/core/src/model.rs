//! Embedding tables, HAKE / ModE distances and their analytic gradients.
//!
//! Every entity has a modulus row and a phase row of width `k`; every
//! relation has a modulus row, a mixture-bias row and a phase row. Raw
//! values are stored unconstrained and mapped at use time: relation moduli
//! through `|x|`, biases through a clamp into `(BIAS_EPS, 1 - BIAS_EPS)`.
//! Phases stay unwrapped; the half-angle sine distance is 2π-periodic.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::data::Triple;
use crate::error::{HakeError, Result};
use crate::trainer::TrainConfig;

/// Lower/upper margin of the clamped mixture bias.
pub const BIAS_EPS: f64 = 1e-6;

/// Initial raw mixture bias. Small enough to be inert, but inside the clamp
/// interval so the bias still receives gradient.
pub const BIAS_INIT: f64 = 1e-3;

/// Which distance terms the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parts {
    Full,
    ModulusOnly,
    PhaseOnly,
    /// Modulus-style distance with sign-unrestricted relation entries.
    ModE,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Variant {
    pub parts: Parts,
    pub bias: bool,
}

impl Variant {
    pub const HAKE: Variant = Variant {
        parts: Parts::Full,
        bias: true,
    };

    pub fn uses_modulus(&self) -> bool {
        !matches!(self.parts, Parts::PhaseOnly)
    }

    pub fn uses_phase(&self) -> bool {
        matches!(self.parts, Parts::Full | Parts::PhaseOnly)
    }

    /// Bias only exists for the HAKE modulus term.
    pub fn bias_active(&self) -> bool {
        self.bias && matches!(self.parts, Parts::Full | Parts::ModulusOnly)
    }

    pub fn parts_name(&self) -> &'static str {
        match self.parts {
            Parts::Full => "full",
            Parts::ModulusOnly => "modulus_only",
            Parts::PhaseOnly => "phase_only",
            Parts::ModE => "mode",
        }
    }
}

impl Default for Variant {
    fn default() -> Self {
        Variant::HAKE
    }
}

impl FromStr for Parts {
    type Err = HakeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Parts::Full),
            "modulus_only" | "modulus" => Ok(Parts::ModulusOnly),
            "phase_only" | "phase" => Ok(Parts::PhaseOnly),
            "mode" => Ok(Parts::ModE),
            other => Err(HakeError::Config(format!(
                "unknown variant `{other}` (expected full, modulus_only, phase_only or mode)"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.parts_name())?;
        if self.bias_active() {
            write!(f, "+bias")?;
        }
        Ok(())
    }
}

/// Row-major `rows x cols` matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Table {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(HakeError::Data(format!(
                "table data has {} values, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Names the five parameter tables, in checkpoint order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TableId {
    EntMod,
    EntPhase,
    RelMod,
    RelBias,
    RelPhase,
}

impl TableId {
    pub const ALL: [TableId; 5] = [
        TableId::EntMod,
        TableId::EntPhase,
        TableId::RelMod,
        TableId::RelBias,
        TableId::RelPhase,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TableId::EntMod => "ent_mod",
            TableId::EntPhase => "ent_phase",
            TableId::RelMod => "rel_mod",
            TableId::RelBias => "rel_bias",
            TableId::RelPhase => "rel_phase",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub ent_mod: Table,
    pub ent_phase: Table,
    pub rel_mod: Table,
    pub rel_bias: Table,
    pub rel_phase: Table,
    pub lambda_mod: f64,
    pub lambda_phase: f64,
    pub variant: Variant,
}

impl ModelParams {
    /// All-zero tables; mostly useful for tests and hand-built examples.
    pub fn zeros(num_entities: usize, num_relations: usize, k: usize, variant: Variant) -> Self {
        Self {
            ent_mod: Table::zeros(num_entities, k),
            ent_phase: Table::zeros(num_entities, k),
            rel_mod: Table::zeros(num_relations, k),
            rel_bias: Table::zeros(num_relations, k),
            rel_phase: Table::zeros(num_relations, k),
            lambda_mod: 1.0,
            lambda_phase: 1.0,
            variant,
        }
    }

    pub fn k(&self) -> usize {
        self.ent_mod.cols()
    }

    pub fn num_entities(&self) -> usize {
        self.ent_mod.rows()
    }

    pub fn num_relations(&self) -> usize {
        self.rel_mod.rows()
    }

    pub fn table(&self, id: TableId) -> &Table {
        match id {
            TableId::EntMod => &self.ent_mod,
            TableId::EntPhase => &self.ent_phase,
            TableId::RelMod => &self.rel_mod,
            TableId::RelBias => &self.rel_bias,
            TableId::RelPhase => &self.rel_phase,
        }
    }

    pub fn table_mut(&mut self, id: TableId) -> &mut Table {
        match id {
            TableId::EntMod => &mut self.ent_mod,
            TableId::EntPhase => &mut self.ent_phase,
            TableId::RelMod => &mut self.rel_mod,
            TableId::RelBias => &mut self.rel_bias,
            TableId::RelPhase => &mut self.rel_phase,
        }
    }

    pub fn check_triple(&self, triple: &Triple) -> Result<()> {
        let (ne, nr) = (self.num_entities(), self.num_relations());
        for (kind, id, len) in [
            ("entity", triple.h, ne),
            ("relation", triple.r, nr),
            ("entity", triple.t, ne),
        ] {
            if id >= len {
                return Err(HakeError::IdOutOfRange { kind, id, len });
            }
        }
        Ok(())
    }

    /// Structural checks: shared width, matching row counts, valid lambdas.
    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if TableId::ALL.iter().any(|&id| self.table(id).cols() != k) {
            return Err(HakeError::Data("parameter tables disagree on k".into()));
        }
        if self.ent_phase.rows() != self.num_entities()
            || self.rel_bias.rows() != self.num_relations()
            || self.rel_phase.rows() != self.num_relations()
        {
            return Err(HakeError::Data("parameter tables disagree on row counts".into()));
        }
        for (name, v) in [("lambda_mod", self.lambda_mod), ("lambda_phase", self.lambda_phase)] {
            if !v.is_finite() || v < 0.0 {
                return Err(HakeError::Data(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Modulus and phase distances of a triple, without the lambda weights.
    /// Unused parts are reported as 0.
    pub fn distance_parts(&self, triple: &Triple) -> (f64, f64) {
        let v = self.variant;
        let (h, r, t) = (triple.h, triple.r, triple.t);
        let dm = if !v.uses_modulus() {
            0.0
        } else if v.parts == Parts::ModE {
            mode_distance(self.ent_mod.row(h), self.rel_mod.row(r), self.ent_mod.row(t))
        } else {
            modulus_distance(
                self.ent_mod.row(h),
                self.rel_mod.row(r),
                self.rel_bias.row(r),
                self.ent_mod.row(t),
                v.bias_active(),
            )
        };
        let dp = if v.uses_phase() {
            phase_distance(self.ent_phase.row(h), self.rel_phase.row(r), self.ent_phase.row(t))
        } else {
            0.0
        };
        (dm, dp)
    }

    /// Weighted distance `λ1·d_m + λ2·d_p`; ids are not checked.
    pub fn distance_unchecked(&self, triple: &Triple) -> f64 {
        let (dm, dp) = self.distance_parts(triple);
        let mut d = 0.0;
        if self.variant.uses_modulus() {
            d += self.lambda_mod * dm;
        }
        if self.variant.uses_phase() {
            d += self.lambda_phase * dp;
        }
        d
    }

    /// Relation modulus as a multiplicative map `t ≈ h ∘ m`.
    ///
    /// With the mixture bias, `h∘r + (h+t)∘b − t = (r+b)∘h − (1−b)∘t`, so
    /// the map is `(r+b)/(1−b)`. Without it, `|raw|`; ModE uses the raw row.
    pub fn effective_rel_modulus(&self, r: usize) -> Vec<f64> {
        let raw = self.rel_mod.row(r);
        match self.variant.parts {
            Parts::ModE => raw.to_vec(),
            _ if self.variant.bias_active() => raw
                .iter()
                .zip(self.rel_bias.row(r))
                .map(|(&x, &b)| {
                    let b = clamp_bias(b);
                    (x.abs() + b) / (1.0 - b)
                })
                .collect(),
            _ => raw.iter().map(|x| x.abs()).collect(),
        }
    }
}

/// Problem sizes for `init_params`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub entities: usize,
    pub relations: usize,
    pub k: usize,
}

/// Random initialisation.
///
/// Entity moduli ~ U[−b, b] with `b = γ/k` (random signs), relation moduli
/// ~ U[0, b], phases ~ U[0, 2π).
pub fn init_params<R: Rng + ?Sized>(dims: Dims, config: &TrainConfig, rng: &mut R) -> Result<ModelParams> {
    if dims.k == 0 {
        return Err(HakeError::Config("k must be >= 1".into()));
    }
    if dims.entities == 0 || dims.relations == 0 {
        return Err(HakeError::Data(format!(
            "cannot initialise a model with {} entities and {} relations",
            dims.entities, dims.relations
        )));
    }
    let k = dims.k;
    let b = config.gamma / k as f64;
    let mut p = ModelParams::zeros(dims.entities, dims.relations, k, config.variant);
    p.lambda_mod = config.lambda_mod;
    p.lambda_phase = config.lambda_phase;
    for x in p.ent_mod.as_mut_slice() {
        *x = rng.gen_range(-b..=b);
    }
    for x in p.ent_phase.as_mut_slice() {
        *x = rng.gen_range(0.0..TAU);
    }
    for x in p.rel_mod.as_mut_slice() {
        *x = rng.gen_range(0.0..=b);
    }
    p.rel_bias.as_mut_slice().fill(BIAS_INIT);
    for x in p.rel_phase.as_mut_slice() {
        *x = rng.gen_range(0.0..TAU);
    }
    p.validate()?;
    Ok(p)
}

#[inline]
pub fn clamp_bias(raw: f64) -> f64 {
    raw.clamp(BIAS_EPS, 1.0 - BIAS_EPS)
}

#[inline]
fn bias_passes_gradient(raw: f64) -> bool {
    raw > BIAS_EPS && raw < 1.0 - BIAS_EPS
}

/// `‖h∘|r| + (h+t)∘b − t‖₂`, or `‖h∘|r| − t‖₂` when `bias_on` is false.
pub fn modulus_distance(h: &[f64], r: &[f64], bias: &[f64], t: &[f64], bias_on: bool) -> f64 {
    let mut acc = 0.0;
    for i in 0..h.len() {
        let mut v = h[i] * r[i].abs() - t[i];
        if bias_on {
            v += (h[i] + t[i]) * clamp_bias(bias[i]);
        }
        acc += v * v;
    }
    acc.sqrt()
}

/// `Σ |sin((h + r − t)/2)|`.
pub fn phase_distance(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    h.iter()
        .zip(r)
        .zip(t)
        .map(|((&h, &r), &t)| ((h + r - t) / 2.0).sin().abs())
        .sum()
}

/// ModE distance `‖h∘r − t‖₂` with `r` unrestricted in sign.
pub fn mode_distance(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    h.iter()
        .zip(r)
        .zip(t)
        .map(|((&h, &r), &t)| {
            let v = h * r - t;
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// Plausibility `−(λ1·d_m + λ2·d_p)`; higher is better, 0 is the maximum.
pub fn score(params: &ModelParams, triple: &Triple) -> Result<f64> {
    params.check_triple(triple)?;
    Ok(-params.distance_unchecked(triple))
}

/// Gradient of `score` for every parameter row one triple touches.
///
/// When `h == t` the head and tail slices refer to the same rows and must be
/// summed by the consumer.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSlices {
    pub triple: Triple,
    pub ent_mod_h: Vec<f64>,
    pub ent_phase_h: Vec<f64>,
    pub ent_mod_t: Vec<f64>,
    pub ent_phase_t: Vec<f64>,
    pub rel_mod: Vec<f64>,
    pub rel_bias: Vec<f64>,
    pub rel_phase: Vec<f64>,
    pub lambda_mod: f64,
    pub lambda_phase: f64,
}

impl GradSlices {
    fn zeros(triple: Triple, k: usize) -> Self {
        Self {
            triple,
            ent_mod_h: vec![0.0; k],
            ent_phase_h: vec![0.0; k],
            ent_mod_t: vec![0.0; k],
            ent_phase_t: vec![0.0; k],
            rel_mod: vec![0.0; k],
            rel_bias: vec![0.0; k],
            rel_phase: vec![0.0; k],
            lambda_mod: 0.0,
            lambda_phase: 0.0,
        }
    }

    /// `(table, row, slice)` for each of the seven row slices.
    pub fn rows(&self) -> [(TableId, usize, &[f64]); 7] {
        let Triple { h, r, t } = self.triple;
        [
            (TableId::EntMod, h, &self.ent_mod_h),
            (TableId::EntPhase, h, &self.ent_phase_h),
            (TableId::EntMod, t, &self.ent_mod_t),
            (TableId::EntPhase, t, &self.ent_phase_t),
            (TableId::RelMod, r, &self.rel_mod),
            (TableId::RelBias, r, &self.rel_bias),
            (TableId::RelPhase, r, &self.rel_phase),
        ]
    }
}

/// Analytic gradient of [`score`].
///
/// Subgradient conventions: `d|x|/dx = 0` at 0, the ℓ2 norm contributes 0
/// at a zero residual, `|sin|` contributes 0 where the sine is 0, and the
/// bias clamp passes gradient only strictly inside `(ε, 1−ε)`.
pub fn score_gradients(params: &ModelParams, triple: &Triple) -> Result<GradSlices> {
    params.check_triple(triple)?;
    Ok(score_gradients_unchecked(params, triple))
}

pub(crate) fn score_gradients_unchecked(params: &ModelParams, triple: &Triple) -> GradSlices {
    let k = params.k();
    let v = params.variant;
    let mut g = GradSlices::zeros(*triple, k);
    let Triple { h, r, t } = *triple;

    if v.uses_modulus() {
        let hm = params.ent_mod.row(h);
        let tm = params.ent_mod.row(t);
        let rm = params.rel_mod.row(r);
        let rb = params.rel_bias.row(r);
        let mode = v.parts == Parts::ModE;
        let bias_on = v.bias_active();
        let mut resid = vec![0.0; k];
        let mut norm2 = 0.0;
        for i in 0..k {
            let rel = if mode { rm[i] } else { rm[i].abs() };
            let mut x = hm[i] * rel - tm[i];
            if bias_on {
                x += (hm[i] + tm[i]) * clamp_bias(rb[i]);
            }
            resid[i] = x;
            norm2 += x * x;
        }
        let dm = norm2.sqrt();
        g.lambda_mod = -dm;
        if dm > 0.0 {
            // d(score)/d(resid_i) = −λ1 · resid_i / d_m
            let scale = -params.lambda_mod / dm;
            for i in 0..k {
                let up = scale * resid[i];
                let (rel, drel) = if mode {
                    (rm[i], 1.0)
                } else {
                    (rm[i].abs(), sign0(rm[i]))
                };
                let b = if bias_on { clamp_bias(rb[i]) } else { 0.0 };
                g.ent_mod_h[i] = up * (rel + b);
                g.ent_mod_t[i] = up * (b - 1.0);
                g.rel_mod[i] = up * hm[i] * drel;
                if bias_on && bias_passes_gradient(rb[i]) {
                    g.rel_bias[i] = up * (hm[i] + tm[i]);
                }
            }
        }
    }

    if v.uses_phase() {
        let hp = params.ent_phase.row(h);
        let tp = params.ent_phase.row(t);
        let rp = params.rel_phase.row(r);
        let mut dp = 0.0;
        for i in 0..k {
            let half = (hp[i] + rp[i] - tp[i]) / 2.0;
            let s = half.sin();
            dp += s.abs();
            // sin(nπ) is not exactly 0 in floating point; treat rounding-level
            // values as the kink itself
            let s = if s.abs() <= 4.0 * f64::EPSILON * half.abs().max(1.0) { 0.0 } else { s };
            // d|sin(a/2)|/da = sign(sin) · cos(a/2) / 2
            let d = -params.lambda_phase * sign0(s) * half.cos() * 0.5;
            g.ent_phase_h[i] = d;
            g.rel_phase[i] = d;
            g.ent_phase_t[i] = -d;
        }
        g.lambda_phase = -dp;
    }
    g
}

#[inline]
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
