use rand::Rng;

use crate::data::{DatasetBundle, Triple};

/// Side of the triple replaced by a random entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptSide {
    Head,
    Tail,
}

const MAX_ATTEMPTS: usize = 100;

/// Draws `n` corrupted copies of `triple`.
///
/// Replacement entities are uniform over the vocabulary. A candidate that is
/// a train fact is redrawn, up to 100 attempts, after which the last draw is
/// kept. The relation is never corrupted.
pub fn sample_negatives<R: Rng + ?Sized>(
    triple: &Triple,
    n: usize,
    side: CorruptSide,
    bundle: &DatasetBundle,
    rng: &mut R,
) -> Vec<Triple> {
    let ne = bundle.num_entities();
    (0..n)
        .map(|_| {
            let mut cand = *triple;
            for _ in 0..MAX_ATTEMPTS {
                let e = rng.gen_range(0..ne);
                cand = match side {
                    CorruptSide::Head => Triple { h: e, ..*triple },
                    CorruptSide::Tail => Triple { t: e, ..*triple },
                };
                if !bundle.in_train(&cand) {
                    break;
                }
            }
            cand
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_bundle, RawTriple};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn only_non_train_candidate_is_chosen() {
        let b = build_bundle(&[RawTriple::new("e0", "r", "e1")], &[], &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let negs = sample_negatives(&Triple::new(0, 0, 1), 50, CorruptSide::Tail, &b, &mut rng);
        assert_eq!(negs.len(), 50);
        assert!(negs.iter().all(|t| *t == Triple::new(0, 0, 0)));
    }

    #[test]
    fn head_mode_keeps_relation_and_tail() {
        let raws: Vec<_> = (0..10).map(|i| RawTriple::new(&format!("a{i}"), "r", &format!("b{i}"))).collect();
        let b = build_bundle(&raws, &[], &[]).unwrap();
        let pos = b.train[3];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let negs = sample_negatives(&pos, 5, CorruptSide::Head, &b, &mut rng);
        assert_eq!(negs.len(), 5);
        assert!(negs.iter().all(|t| t.t == pos.t && t.r == pos.r));
        assert!(negs.iter().all(|t| !b.in_train(t)));
    }

    #[test]
    fn gives_up_after_budget() {
        // every candidate is a train fact
        let b = build_bundle(
            &[RawTriple::new("x", "r", "x"), RawTriple::new("x", "r", "y"), RawTriple::new("y", "r", "y"), RawTriple::new("y", "r", "x")],
            &[],
            &[],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let negs = sample_negatives(&b.train[0], 3, CorruptSide::Tail, &b, &mut rng);
        assert_eq!(negs.len(), 3);
    }
}
