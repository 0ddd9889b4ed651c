use std::f64::consts::PI;

use hake_core::data::{build_bundle, parse_triple_file, RawTriple, Triple};
use hake_core::eval::{rank_one, Direction};
use hake_core::gradcheck::{is_smooth, random_params};
use hake_core::model::{modulus_distance, phase_distance, score, score_gradients, ModelParams, Parts, TableId, Variant};
use hake_core::trainer::{adam_step, adversarial_weights, loss_and_grads, loss_value, Gradients, OptimizerState, TrainConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn token() -> impl Strategy<Value = String> {
    "[a-z0-9_.]{1,6}"
}

fn raw_triples(max: usize) -> impl Strategy<Value = Vec<RawTriple>> {
    prop::collection::vec((token(), token(), token()), 1..max)
        .prop_map(|v| v.into_iter().map(|(h, r, t)| RawTriple::new(&h, &r, &t)).collect())
}

fn params_for(seed: u64, k: usize, variant: Variant, entities: usize, relations: usize) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::zeros(entities, relations, k, variant);
    let mut fill = |t: &mut hake_core::model::Table, lo: f64, hi: f64| {
        t.as_mut_slice().iter_mut().for_each(|x| *x = rng.gen_range(lo..hi));
    };
    fill(&mut p.ent_mod, -1.5, 1.5);
    fill(&mut p.ent_phase, 0.0, 2.0 * PI);
    fill(&mut p.rel_mod, -2.0, 2.0);
    fill(&mut p.rel_bias, 0.05, 0.95);
    fill(&mut p.rel_phase, -2.0 * PI, 2.0 * PI);
    p.lambda_mod = rng.gen_range(0.3..1.5);
    p.lambda_phase = rng.gen_range(0.3..1.5);
    p
}

fn variant() -> impl Strategy<Value = Variant> {
    prop::sample::select(vec![
        Variant::HAKE,
        Variant { parts: Parts::Full, bias: false },
        Variant { parts: Parts::ModulusOnly, bias: true },
        Variant { parts: Parts::PhaseOnly, bias: false },
        Variant { parts: Parts::ModE, bias: false },
    ])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn triple_files_round_trip(train in raw_triples(30)) {
        let bundle = build_bundle(&train, &train[..1], &[]).unwrap();
        let text = bundle.split_to_text(&bundle.train);
        let parsed = parse_triple_file(&text).unwrap();
        prop_assert_eq!(&parsed, &train);
        let again = build_bundle(&parsed, &train[..1], &[]).unwrap();
        prop_assert_eq!(again.train, bundle.train);
        prop_assert_eq!(again.vocab.num_entities(), bundle.vocab.num_entities());
    }

    #[test]
    fn ids_follow_first_appearance(train in raw_triples(30)) {
        let bundle = build_bundle(&train, &[], &[]).unwrap();
        let mut seen: Vec<&str> = Vec::new();
        for raw in &train {
            for e in [&raw.head, &raw.tail] {
                if !seen.contains(&e.as_str()) {
                    seen.push(e);
                }
            }
        }
        prop_assert_eq!(bundle.vocab.entities.names().to_vec(), seen.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    }

    #[test]
    fn adversarial_weights_form_a_distribution(
        scores in prop::collection::vec(-50.0f64..50.0, 1..40),
        alpha in 0.0f64..3.0,
        shift in -100.0f64..100.0,
    ) {
        let w = adversarial_weights(&scores, alpha);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        for (a, b) in w.iter().zip(adversarial_weights(&shifted, alpha)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if scores[i] > scores[j] {
                    prop_assert!(w[i] >= w[j]);
                }
            }
        }
    }

    #[test]
    fn modulus_distance_is_homogeneous_in_entities(
        seed in any::<u64>(),
        k in 1usize..12,
        c in 0.01f64..20.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_params(&mut rng, k, Variant::HAKE);
        let (h, r, b, t) = (p.ent_mod.row(0), p.rel_mod.row(0), p.rel_bias.row(0), p.ent_mod.row(1));
        let hs: Vec<f64> = h.iter().map(|x| x * c).collect();
        let ts: Vec<f64> = t.iter().map(|x| x * c).collect();
        let d = modulus_distance(h, r, b, t, true);
        let ds = modulus_distance(&hs, r, b, &ts, true);
        prop_assert!((ds - c * d).abs() <= 1e-10 * (1.0 + c * d));
        // sign of the relation modulus is irrelevant
        let neg: Vec<f64> = r.iter().map(|x| -x).collect();
        prop_assert_eq!(modulus_distance(h, &neg, b, t, true), d);
    }

    #[test]
    fn phase_distance_is_periodic_and_bounded(
        seed in any::<u64>(),
        k in 1usize..12,
        turns in prop::collection::vec(-3i32..3, 12),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_params(&mut rng, k, Variant::HAKE);
        let (h, r, t) = (p.ent_phase.row(0), p.rel_phase.row(0), p.ent_phase.row(1));
        let d = phase_distance(h, r, t);
        prop_assert!((0.0..=k as f64).contains(&d));
        let moved: Vec<f64> = h.iter().zip(&turns).map(|(x, n)| x + 2.0 * PI * *n as f64).collect();
        prop_assert!((phase_distance(&moved, r, t) - d).abs() < 1e-9);
    }

    #[test]
    fn score_gradient_matches_central_differences(seed in any::<u64>(), k in 1usize..10, v in variant()) {
        let p = params_for(seed, k, v, 2, 1);
        let tr = Triple::new(0, 0, 1);
        prop_assume!(is_smooth(&p, &tr));
        let g = score_gradients(&p, &tr).unwrap();
        let eps = 1e-6;
        for (table, row, analytic) in g.rows() {
            for i in 0..k {
                let mut plus = p.clone();
                let mut minus = p.clone();
                plus.table_mut(table).row_mut(row)[i] += eps;
                minus.table_mut(table).row_mut(row)[i] -= eps;
                let numeric = (score(&plus, &tr).unwrap() - score(&minus, &tr).unwrap()) / (2.0 * eps);
                let err = (analytic[i] - numeric).abs() / numeric.abs().max(analytic[i].abs()).max(1e-2);
                prop_assert!(err < 1e-5, "{} row {row} dim {i}: {} vs {numeric}", table.name(), analytic[i]);
            }
        }
        let dl = {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus.lambda_mod += eps;
            minus.lambda_mod -= eps;
            (score(&plus, &tr).unwrap() - score(&minus, &tr).unwrap()) / (2.0 * eps)
        };
        prop_assert!((dl - g.lambda_mod).abs() < 1e-6 * (1.0 + dl.abs()));
    }

    #[test]
    fn loss_is_positive_and_its_gradient_descends(seed in any::<u64>(), k in 2usize..8) {
        let p = params_for(seed, k, Variant::HAKE, 6, 2);
        let cfg = TrainConfig { k, self_adversarial: false, ..TrainConfig::default() };
        let pos = Triple::new(0, 0, 1);
        let negs = [Triple::new(0, 0, 2), Triple::new(3, 0, 1), Triple::new(0, 0, 5)];
        let (loss, grads) = loss_and_grads(&p, &pos, &negs, &cfg).unwrap();
        prop_assert!(loss > 0.0);
        prop_assert!((loss - loss_value(&p, &pos, &negs, &cfg, None).unwrap()).abs() < 1e-12);
        let norm2: f64 = grads.iter().flat_map(|(_, _, v)| v.iter()).map(|x| x * x).sum();
        prop_assume!(norm2 > 1e-8);
        let mut stepped = p.clone();
        let step = 1e-4 / norm2.sqrt();
        for (table, row, v) in grads.iter() {
            for (x, g) in stepped.table_mut(table).row_mut(row).iter_mut().zip(v) {
                *x -= step * g;
            }
        }
        prop_assert!(loss_value(&stepped, &pos, &negs, &cfg, None).unwrap() < loss);
    }
}

/// Reference dense Adam over every parameter, with all gradients present.
fn dense_adam(p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], t: i32, cfg: &TrainConfig) {
    for i in 0..p.len() {
        m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
        v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
        let mh = m[i] / (1.0 - cfg.adam_beta1.powi(t));
        let vh = v[i] / (1.0 - cfg.adam_beta2.powi(t));
        p[i] -= cfg.lr * mh / (vh.sqrt() + cfg.adam_eps);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sparse_adam_matches_dense_when_every_row_is_touched(seed in any::<u64>(), steps in 1usize..6) {
        let cfg = TrainConfig { k: 3, lr: 0.05, ..TrainConfig::default() };
        let mut params = params_for(seed, 3, Variant::HAKE, 4, 2);
        let mut state = OptimizerState::new(&params);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut dense: Vec<Vec<f64>> = TableId::ALL.iter().map(|&id| params.table(id).as_slice().to_vec()).collect();
        let mut m: Vec<Vec<f64>> = dense.iter().map(|t| vec![0.0; t.len()]).collect();
        let mut v = m.clone();
        for step in 1..=steps {
            let mut grads = Gradients::new();
            let mut flat: Vec<Vec<f64>> = Vec::new();
            for &id in TableId::ALL.iter() {
                let t = params.table(id);
                let g: Vec<f64> = (0..t.rows() * t.cols()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                for row in 0..t.rows() {
                    grads.add_row(id, row, &g[row * t.cols()..(row + 1) * t.cols()], 1.0);
                }
                flat.push(g);
            }
            adam_step(&mut params, &mut state, &grads, &cfg).unwrap();
            for i in 0..dense.len() {
                dense_adam(&mut dense[i], &mut m[i], &mut v[i], &flat[i], step as i32, &cfg);
            }
        }
        for (i, &id) in TableId::ALL.iter().enumerate() {
            for (a, b) in params.table(id).as_slice().iter().zip(&dense[i]) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
            for (a, b) in state.first_moment(id).as_slice().iter().zip(&m[i]) {
                prop_assert!((a - b).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn untouched_rows_keep_values_and_moments(seed in any::<u64>()) {
        let cfg = TrainConfig { k: 3, lr: 0.05, ..TrainConfig::default() };
        let mut params = params_for(seed, 3, Variant::HAKE, 5, 2);
        let mut state = OptimizerState::new(&params);
        let mut g = Gradients::new();
        g.add_row(TableId::EntMod, 1, &[1.0, -2.0, 0.5], 1.0);
        adam_step(&mut params, &mut state, &g, &cfg).unwrap();
        let snapshot = (params.clone(), state.clone());
        let mut g = Gradients::new();
        g.add_row(TableId::EntMod, 3, &[0.1, 0.2, 0.3], 1.0);
        adam_step(&mut params, &mut state, &g, &cfg).unwrap();
        for row in [0, 1, 2, 4] {
            prop_assert_eq!(params.ent_mod.row(row), snapshot.0.ent_mod.row(row));
            prop_assert_eq!(state.first_moment(TableId::EntMod).row(row), snapshot.1.first_moment(TableId::EntMod).row(row));
            prop_assert_eq!(state.second_moment(TableId::EntMod).row(row), snapshot.1.second_moment(TableId::EntMod).row(row));
        }
        prop_assert_eq!(&params.rel_phase, &snapshot.0.rel_phase);
        prop_assert_ne!(params.ent_mod.row(3), snapshot.0.ent_mod.row(3));
    }
}

fn chain_bundle(n: usize) -> hake_core::DatasetBundle {
    let names: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
    let train: Vec<RawTriple> = (0..n - 1).map(|i| RawTriple::new(&names[i], "r", &names[i + 1])).collect();
    let test = vec![RawTriple::new(&names[0], "r", &names[n - 1])];
    build_bundle(&train, &[], &test).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ranks_are_bounded_and_ties_take_the_mean(n in 3usize..15, seed in any::<u64>()) {
        let bundle = chain_bundle(n);
        let q = bundle.test[0];
        let p = params_for(seed, 4, Variant::HAKE, n, 1);
        for dir in [Direction::ReplaceHead, Direction::ReplaceTail] {
            let r = rank_one(&p, &q, dir, &bundle).unwrap();
            prop_assert!((1.0..=n as f64).contains(&r));
        }
        // constant embeddings: every unfiltered candidate ties
        let flat = ModelParams::zeros(n, 1, 4, Variant::HAKE);
        let filtered_tails = bundle.known_tails(q.h, q.r).iter().filter(|&&e| e != q.t).count();
        let candidates = n - 1 - filtered_tails;
        prop_assert_eq!(rank_one(&flat, &q, Direction::ReplaceTail, &bundle).unwrap(), 1.0 + candidates as f64 / 2.0);
    }

    #[test]
    fn ranks_survive_scaling_the_modulus_space(n in 3usize..12, seed in any::<u64>(), c in 0.1f64..10.0) {
        let bundle = chain_bundle(n);
        let q = bundle.test[0];
        let variant = Variant { parts: Parts::ModulusOnly, bias: true };
        let p = params_for(seed, 3, variant, n, 1);
        let mut scaled = p.clone();
        for x in scaled.ent_mod.as_mut_slice() {
            *x *= c;
        }
        for dir in [Direction::ReplaceHead, Direction::ReplaceTail] {
            let a = rank_one(&p, &q, dir, &bundle).unwrap();
            let b = rank_one(&scaled, &q, dir, &bundle).unwrap();
            // exact ties can split under rounding, so compare to within half a place
            prop_assert!((a - b).abs() <= 0.5, "{a} vs {b}");
        }
    }

    #[test]
    fn filtering_never_hurts(n in 4usize..12, seed in any::<u64>()) {
        let names: Vec<String> = (0..n).map(|i| format!("e{i}")).collect();
        let base: Vec<RawTriple> = (0..n - 1).map(|i| RawTriple::new(&names[i], "r", &names[i + 1])).collect();
        let test = vec![RawTriple::new(&names[0], "r", &names[n - 1])];
        let p = params_for(seed, 4, Variant::HAKE, n, 1);
        let plain = build_bundle(&base, &[], &test).unwrap();
        let mut more = base.clone();
        more.push(RawTriple::new(&names[0], "r", &names[2]));
        more.push(RawTriple::new(&names[0], "r", &names[n / 2]));
        let extra = build_bundle(&more, &[], &test).unwrap();
        let q = plain.test[0];
        prop_assert_eq!(extra.test[0], q);
        let a = rank_one(&p, &q, Direction::ReplaceTail, &plain).unwrap();
        let b = rank_one(&p, &q, Direction::ReplaceTail, &extra).unwrap();
        prop_assert!(b <= a);
    }
}
