"""Smoke test for the `hake` extension module.

Build and run from the workspace root:

    cargo build --release -p hake-py --features extension-module
    cp target/release/libhake.so crates/python/python/hake.so
    python3 crates/python/python/smoke_test.py
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import hake  # noqa: E402


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    # primitives
    assert close(hake.modulus_distance([1.0, 2.0], [2.0, 0.5], [2.0, 1.0]), 0.0)
    assert close(hake.modulus_distance([1.0], [-3.0], [0.0]), 3.0)
    assert close(hake.phase_distance([0.0], [math.pi], [0.0]), 1.0)
    w = hake.adversarial_weights([1.0, 0.0], 1.0)
    assert close(w[0], 0.7310585786, 1e-9) and close(sum(w), 1.0, 1e-12)
    assert hake.adversarial_weights([3.0, -2.0, 7.0], 0.0) == [1 / 3] * 3

    # datasets
    ds = hake.Dataset.from_triples(
        [("a", "r", "b"), ("b", "r", "c"), ("c", "s", "a")],
        valid=[("a", "s", "b")],
        test=[("b", "s", "c")],
    )
    assert ds.stats() == {"entities": 3, "relations": 2, "train": 3, "valid": 1, "test": 1}
    assert ds.entity_names == ["a", "b", "c"]
    try:
        hake.Dataset.from_triples([("a", "r", "b")], test=[("a", "r", "zzz")])
    except ValueError as e:
        assert "zzz" in str(e)
    else:
        raise AssertionError("unseen token accepted")

    syn = hake.Dataset.synthetic(depth=3, branching=2, seed=1)
    assert syn.num_entities == 15 and len(syn.levels) == 15

    # config
    cfg = hake.TrainConfig(k=8, max_steps=300, batch_size=16, n_neg=8, lr=0.01, seed=3, self_adversarial=True)
    assert cfg.to_dict()["k"] == "8"
    try:
        hake.TrainConfig(gamma=-1)
    except ValueError:
        pass
    else:
        raise AssertionError("negative gamma accepted")

    # training, scoring, evaluation
    model = hake.Model.train(syn, cfg)
    assert model.k == 8 and model.step == 300
    losses = [loss for _, loss in model.losses]
    assert losses[-1] < losses[0], losses
    h, r, t = syn.split("test")[0]
    s = model.score(h, r, t)
    dm, dp = model.distance_parts(h, r, t)
    lm, lp = model.lambdas
    assert close(s, -(lm * dm + lp * dp))
    metrics = model.evaluate(syn, "test")
    assert 0.0 < metrics["mrr"] <= 1.0 and metrics["count"] == 2 * len(syn.split("test"))
    assert model.rank(syn, h, r, t, "tail") >= 1.0

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "m.ckpt")
        model.save(path)
        again = hake.Model.load(path)
        assert again.score(h, r, t) == s
        assert again.evaluate(syn)["mrr"] == metrics["mrr"]
        try:
            hake.Model.load(os.path.join(tmp, "missing.ckpt"))
        except OSError:
            pass
        else:
            raise AssertionError("missing checkpoint loaded")

    grad = hake.check_grad(seed=7, k=4, draws=10)
    assert grad["passed"] == 1.0 and grad["max_error"] < 1e-5

    print(f"smoke test ok: {model!r}, test mrr={metrics['mrr']:.3f}")


if __name__ == "__main__":
    main()
