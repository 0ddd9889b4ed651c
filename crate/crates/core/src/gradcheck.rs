//! Central finite-difference check of the analytic gradients.
//!
//! The oracle only ever calls the value functions (`score`, `loss_value`);
//! it never looks at the analytic derivatives it is checking. Draws are
//! resampled until they sit away from the non-smooth points of the model:
//! `|raw r_m| ≤ 1e-3`, `d_m ≤ 1e-3`, a half-angle within 1e-3 of a
//! multiple of π, or a bias within 1e-3 of its clamp bounds.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Triple;
use crate::error::Result;
use crate::model::{score, score_gradients, ModelParams, Parts, TableId, Variant, BIAS_EPS};
use crate::trainer::{loss_and_grads, loss_value, negative_weights, Gradients, TrainConfig};

pub const FD_STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-5;
/// Gradients below this magnitude are compared on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-2;
const SMOOTH_MARGIN: f64 = 1e-3;

const ENTITIES: usize = 6;
const RELATIONS: usize = 3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Largest relative error between `analytic` and central differences of `f`
/// over every touched row (and the lambdas).
fn compare<F>(params: &ModelParams, analytic: &Gradients, rows: &[(TableId, usize)], f: F) -> f64
where
    F: Fn(&ModelParams) -> f64,
{
    let mut work = params.clone();
    let mut worst = 0.0f64;
    let k = params.k();
    for &(table, row) in rows {
        for i in 0..k {
            let orig = work.table(table).row(row)[i];
            work.table_mut(table).row_mut(row)[i] = orig + FD_STEP;
            let up = f(&work);
            work.table_mut(table).row_mut(row)[i] = orig - FD_STEP;
            let down = f(&work);
            work.table_mut(table).row_mut(row)[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic.get(table, row).map_or(0.0, |g| g[i]);
            worst = worst.max(relative_error(a, numeric));
        }
    }
    for which in 0..2 {
        let base = if which == 0 { work.lambda_mod } else { work.lambda_phase };
        let set = |p: &mut ModelParams, v: f64| {
            if which == 0 {
                p.lambda_mod = v
            } else {
                p.lambda_phase = v
            }
        };
        set(&mut work, base + FD_STEP);
        let up = f(&work);
        set(&mut work, base - FD_STEP);
        let down = f(&work);
        set(&mut work, base);
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = if which == 0 { analytic.lambda_mod } else { analytic.lambda_phase };
        worst = worst.max(relative_error(a, numeric));
    }
    worst
}

fn touched_rows(triples: &[Triple]) -> Vec<(TableId, usize)> {
    let mut rows: Vec<(TableId, usize)> = triples
        .iter()
        .flat_map(|t| {
            [
                (TableId::EntMod, t.h),
                (TableId::EntPhase, t.h),
                (TableId::EntMod, t.t),
                (TableId::EntPhase, t.t),
                (TableId::RelMod, t.r),
                (TableId::RelBias, t.r),
                (TableId::RelPhase, t.r),
            ]
        })
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows
}

/// Max relative error of `score_gradients` against central differences.
pub fn check_score(params: &ModelParams, triple: &Triple) -> Result<f64> {
    let mut analytic = Gradients::new();
    analytic.add_slices(&score_gradients(params, triple)?, 1.0);
    Ok(compare(params, &analytic, &touched_rows(&[*triple]), |p| {
        score(p, triple).expect("ids checked")
    }))
}

/// Max relative error of `loss_and_grads` against central differences of
/// the loss with the adversarial weights held at their base values.
pub fn check_loss(params: &ModelParams, pos: &Triple, negs: &[Triple], config: &TrainConfig) -> Result<f64> {
    let (_, analytic) = loss_and_grads(params, pos, negs, config)?;
    let dneg: Vec<f64> = negs.iter().map(|n| params.distance_unchecked(n)).collect();
    let weights = negative_weights(&dneg, config);
    let mut all = vec![*pos];
    all.extend_from_slice(negs);
    Ok(compare(params, &analytic, &touched_rows(&all), |p| {
        loss_value(p, pos, negs, config, Some(&weights)).expect("ids checked")
    }))
}

/// Is the triple at least `SMOOTH_MARGIN` away from every kink?
pub fn is_smooth(params: &ModelParams, t: &Triple) -> bool {
    let v = params.variant;
    if v.uses_modulus() {
        let (dm, _) = params.distance_parts(t);
        if dm <= SMOOTH_MARGIN {
            return false;
        }
        if v.parts != Parts::ModE && params.rel_mod.row(t.r).iter().any(|x| x.abs() <= SMOOTH_MARGIN) {
            return false;
        }
        if v.bias_active()
            && params
                .rel_bias
                .row(t.r)
                .iter()
                .any(|&b| b <= BIAS_EPS + SMOOTH_MARGIN || b >= 1.0 - BIAS_EPS - SMOOTH_MARGIN)
        {
            return false;
        }
    }
    if v.uses_phase() {
        let (hp, rp, tp) = (params.ent_phase.row(t.h), params.rel_phase.row(t.r), params.ent_phase.row(t.t));
        for i in 0..params.k() {
            let half = ((hp[i] + rp[i] - tp[i]) / 2.0).rem_euclid(PI);
            if half.min(PI - half) < SMOOTH_MARGIN {
                return false;
            }
        }
    }
    true
}

const VARIANTS: [Variant; 5] = [
    Variant { parts: Parts::Full, bias: true },
    Variant { parts: Parts::Full, bias: false },
    Variant { parts: Parts::ModulusOnly, bias: true },
    Variant { parts: Parts::PhaseOnly, bias: false },
    Variant { parts: Parts::ModE, bias: false },
];

/// Random parameters on a small vocabulary, spread over the whole domain.
pub fn random_params<R: Rng + ?Sized>(rng: &mut R, k: usize, variant: Variant) -> ModelParams {
    let mut p = ModelParams::zeros(ENTITIES, RELATIONS, k, variant);
    p.ent_mod.as_mut_slice().iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    p.ent_phase.as_mut_slice().iter_mut().for_each(|x| *x = rng.gen_range(0.0..TAU));
    p.rel_mod.as_mut_slice().iter_mut().for_each(|x| *x = rng.gen_range(-2.0..2.0));
    p.rel_bias.as_mut_slice().iter_mut().for_each(|x| *x = rng.gen_range(0.05..0.95));
    p.rel_phase.as_mut_slice().iter_mut().for_each(|x| *x = rng.gen_range(-TAU..TAU));
    p.lambda_mod = rng.gen_range(0.2..2.0);
    p.lambda_phase = rng.gen_range(0.2..2.0);
    p
}

fn random_triple<R: Rng + ?Sized>(rng: &mut R) -> Triple {
    Triple::new(rng.gen_range(0..ENTITIES), rng.gen_range(0..RELATIONS), rng.gen_range(0..ENTITIES))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub k: usize,
    pub draws: usize,
    pub max_score_error: f64,
    pub max_loss_error: f64,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.max_score_error.max(self.max_loss_error)
    }

    pub fn passed(&self) -> bool {
        self.max_error() < TOLERANCE
    }
}

/// `draws` random (params, triple, negatives) draws at width `k`, cycling
/// over all model variants. Each draw checks the score gradient and the
/// full self-adversarial loss gradient.
pub fn run_gradient_check(seed: u64, k: usize, draws: usize) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport { k, draws, max_score_error: 0.0, max_loss_error: 0.0 };
    for d in 0..draws {
        let variant = VARIANTS[d % VARIANTS.len()];
        let (params, pos, negs, config) = loop {
            let params = random_params(&mut rng, k, variant);
            let pos = random_triple(&mut rng);
            let negs: Vec<Triple> = (0..4).map(|_| random_triple(&mut rng)).collect();
            let config = TrainConfig {
                k,
                gamma: rng.gen_range(0.5..8.0),
                alpha: rng.gen_range(0.0..2.0),
                self_adversarial: d % 3 != 2,
                variant,
                ..TrainConfig::default()
            };
            if std::iter::once(&pos).chain(&negs).all(|t| is_smooth(&params, t)) {
                break (params, pos, negs, config);
            }
        };
        report.max_score_error = report.max_score_error.max(check_score(&params, &pos)?);
        report.max_loss_error = report.max_loss_error.max(check_loss(&params, &pos, &negs, &config)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_check_passes() {
        for k in [2, 8] {
            let r = run_gradient_check(7, k, 20).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_params(&mut rng, 4, Variant::HAKE);
        let t = Triple::new(0, 1, 2);
        let mut wrong = Gradients::new();
        wrong.add_slices(&score_gradients(&p, &t).unwrap(), 1.1);
        let err = compare(&p, &wrong, &touched_rows(&[t]), |q| score(q, &t).unwrap());
        assert!(err > 1e-3);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0) - 1e-7).abs() < 1e-20);
    }
}
