//! Negative-sampling loss with self-adversarial weights.
//!
//! ```text
//! L = −log σ(γ − d⁺) − Σᵢ pᵢ · log σ(dᵢ⁻ − γ)
//! ```
//!
//! where `d = λ1·d_m + λ2·d_p` and `p = softmax(α · (−d⁻))`. The weights are
//! sampling probabilities: no gradient flows through them.

use crate::data::Triple;
use crate::error::{HakeError, Result};
use crate::model::{score_gradients_unchecked, ModelParams};

use super::config::TrainConfig;
use super::grads::Gradients;

/// `softmax(alpha · scores)`, computed with max subtraction.
pub fn adversarial_weights(scores: &[f64], alpha: f64) -> Vec<f64> {
    if scores.is_empty() {
        return Vec::new();
    }
    let scaled: Vec<f64> = scores.iter().map(|s| alpha * s).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weights used for the negative term: adversarial or uniform.
pub fn negative_weights(neg_distances: &[f64], config: &TrainConfig) -> Vec<f64> {
    let n = neg_distances.len();
    if config.self_adversarial {
        let scores: Vec<f64> = neg_distances.iter().map(|d| -d).collect();
        adversarial_weights(&scores, config.alpha)
    } else {
        vec![1.0 / n as f64; n]
    }
}

/// Loss from precomputed distances and weights.
pub fn loss_from_distances(pos_distance: f64, neg_distances: &[f64], weights: &[f64], gamma: f64) -> f64 {
    let neg: f64 = neg_distances
        .iter()
        .zip(weights)
        .map(|(d, w)| w * softplus(gamma - d))
        .sum();
    softplus(pos_distance - gamma) + neg
}

/// Loss value only. With `frozen_weights`, those weights replace the
/// adversarial ones (used to check gradients, which treat them as constants).
pub fn loss_value(
    params: &ModelParams,
    pos: &Triple,
    negs: &[Triple],
    config: &TrainConfig,
    frozen_weights: Option<&[f64]>,
) -> Result<f64> {
    if negs.is_empty() {
        return Err(HakeError::Data("negative list is empty".into()));
    }
    params.check_triple(pos)?;
    for n in negs {
        params.check_triple(n)?;
    }
    let dpos = params.distance_unchecked(pos);
    let dneg: Vec<f64> = negs.iter().map(|n| params.distance_unchecked(n)).collect();
    let weights = match frozen_weights {
        Some(w) => w.to_vec(),
        None => negative_weights(&dneg, config),
    };
    Ok(loss_from_distances(dpos, &dneg, &weights, config.gamma))
}

/// Loss and its gradient for one positive and its negatives.
pub fn loss_and_grads(
    params: &ModelParams,
    pos: &Triple,
    negs: &[Triple],
    config: &TrainConfig,
) -> Result<(f64, Gradients)> {
    if negs.is_empty() {
        return Err(HakeError::Data("negative list is empty".into()));
    }
    params.check_triple(pos)?;
    for n in negs {
        params.check_triple(n)?;
    }
    Ok(loss_and_grads_unchecked(params, pos, negs, config))
}

pub(crate) fn loss_and_grads_unchecked(
    params: &ModelParams,
    pos: &Triple,
    negs: &[Triple],
    config: &TrainConfig,
) -> (f64, Gradients) {
    let gamma = config.gamma;
    let dpos = params.distance_unchecked(pos);
    let dneg: Vec<f64> = negs.iter().map(|n| params.distance_unchecked(n)).collect();
    let weights = negative_weights(&dneg, config);
    let loss = loss_from_distances(dpos, &dneg, &weights, gamma);
    debug_assert!(loss >= 0.0);

    // dL/dθ = (dL/dd) · dd/dθ and dd/dθ = −dscore/dθ
    let mut grads = Gradients::new();
    let dl_dpos = sigmoid(dpos - gamma);
    grads.add_slices(&score_gradients_unchecked(params, pos), -dl_dpos);
    for ((neg, d), w) in negs.iter().zip(&dneg).zip(&weights) {
        let dl_dneg = -w * sigmoid(gamma - d);
        if dl_dneg != 0.0 {
            grads.add_slices(&score_gradients_unchecked(params, neg), -dl_dneg);
        }
    }
    (loss, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Parts, Variant};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn weight_examples() {
        assert_eq!(adversarial_weights(&[3.0, -1.0, 7.0, 0.0], 0.0), vec![0.25; 4]);
        let w = adversarial_weights(&[2.5; 3], 4.0);
        for x in w {
            assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-15);
        }
        let w = adversarial_weights(&[1.0, 0.0], 1.0);
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(w[0], e / (e + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(w[0], 0.73106, epsilon = 1e-5);
        assert_abs_diff_eq!(w[1], 0.26894, epsilon = 1e-5);
        // no overflow for huge scores
        let w = adversarial_weights(&[1e6, 1e6 - 1.0], 1.0);
        assert!(w.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn closed_form_examples() {
        let gamma = 6.0;
        let l = loss_from_distances(gamma, &[gamma], &[1.0], gamma);
        assert_abs_diff_eq!(l, 2.0 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(l, 1.38629, epsilon = 1e-5);
        let l = loss_from_distances(0.0, &[1e6], &[1.0], 1.0);
        assert_abs_diff_eq!(l, -(1.0 / (1.0 + (-1f64).exp())).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(l, 0.31326, epsilon = 1e-5);
    }

    #[test]
    fn empty_negatives_rejected() {
        let p = ModelParams::zeros(2, 1, 2, Variant { parts: Parts::Full, bias: false });
        let c = TrainConfig::default();
        assert!(loss_and_grads(&p, &Triple::new(0, 0, 1), &[], &c).is_err());
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_and_permute(
            scores in prop::collection::vec(-50.0f64..50.0, 1..20),
            alpha in 0.0f64..5.0,
            rot in 0usize..20,
        ) {
            let w = adversarial_weights(&scores, alpha);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let r = rot % scores.len();
            let mut rotated = scores.clone();
            rotated.rotate_left(r);
            let mut w_rot = w.clone();
            w_rot.rotate_left(r);
            let w2 = adversarial_weights(&rotated, alpha);
            for (a, b) in w2.iter().zip(&w_rot) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }

        #[test]
        fn loss_monotone_in_distances(
            dpos in 0.0f64..20.0,
            dneg in prop::collection::vec(0.0f64..20.0, 1..8),
            bump in 0.0f64..5.0,
            which in 0usize..8,
        ) {
            let gamma = 6.0;
            let w = vec![1.0 / dneg.len() as f64; dneg.len()];
            let base = loss_from_distances(dpos, &dneg, &w, gamma);
            prop_assert!(base >= 0.0);
            prop_assert!(loss_from_distances(dpos + bump, &dneg, &w, gamma) >= base);
            let mut more = dneg.clone();
            let i = which % more.len();
            more[i] += bump;
            prop_assert!(loss_from_distances(dpos, &more, &w, gamma) <= base);
        }
    }
}
