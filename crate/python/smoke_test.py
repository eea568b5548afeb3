"""Smoke test for the fiducial_forest extension module.

Build and run from the repository root:

    cargo build --release -p fiducial-forest-py --features extension-module
    cp target/release/libfiducial_forest.so python/fiducial_forest.so
    python3 python/smoke_test.py
"""
import math
import os
import random
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import fiducial_forest as ff  # noqa: E402


def main():
    rng = random.Random(0)
    rows = [[rng.random(), rng.random()] for _ in range(200)]
    y = [ff.test_function("cosine", r) + rng.gauss(0.0, 1.0) for r in rows]
    data = ff.Dataset(rows, y, feature_names=["a", "b"])
    assert data.n_rows == 200 and data.feature_names == ["a", "b"]

    train, test = data.split(0.2, seed=1)
    assert (train.n_rows, test.n_rows) == (160, 40)

    params = ff.ForestParams(n_trees=100, min_node_size=1, mtry=2)
    model = ff.FiducialModel.fit(train, params, draws=200, seed=7)
    x = [0.3, 0.4]
    point = model.point_estimate(x)
    lo, hi = model.confidence_interval(x, 0.95)
    plo, phi = model.prediction_interval(x, 0.95)
    slo, shi = model.sigma_interval(0.95)
    assert lo <= point <= hi
    assert phi - plo >= hi - lo
    assert 0.0 < slo <= shi
    assert abs(sum(model.tree_weights()) - 1.0) < 1e-9
    print(f"f({x}) ~ {point:.3f}, CI [{lo:.3f}, {hi:.3f}], PI [{plo:.3f}, {phi:.3f}], "
          f"sigma in [{slo:.3f}, {shi:.3f}]")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.json")
        model.save(path)
        again = ff.FiducialModel.load(path)
        assert again.point_estimate(x) == point
        assert again.prediction_interval(x, 0.95) == (plo, phi)

    expected = math.lgamma(3.5) - math.log(10) - 3 * math.log(5) - 4 * math.log(math.pi)
    assert abs(ff.log_weight(10, 2, 5.0) - expected) < 1e-12
    assert ff.percentile([1.0, 2.0, 3.0, 4.0], 0.5) == 2.5
    assert ff.normalize_weights([0.0, math.log(3.0)]) == [0.25, 0.75]

    try:
        ff.log_weight(4, 2, 1.0)
    except ArithmeticError:
        pass
    else:
        raise AssertionError("too many leaves should raise")
    try:
        model.confidence_interval(x, 1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("bad level should raise")

    records = ff.run_coverage("cosine", 100, 2, reps=4, level=0.9, seed=3,
                              params=ff.ForestParams(n_trees=30), draws=50)
    assert [r["target"] for r in records] == ["conditional-mean", "sigma", "future-response"]
    masses = ff.minimal_tree_mass([100, 1000], seed=1)
    assert len(masses) == 2 and all(0.0 <= m <= 1.0 for m in masses)
    print("smoke test passed")


if __name__ == "__main__":
    main()
