import numpy as np
import pytest

from arnet import gradcheck as G
from arnet import tensor as T


def test_rel_error():
    assert G.rel_error([1.0, 2.0], [1.0, 2.0]) == 0
    assert G.rel_error([0.0], [0.0]) == 0
    assert G.rel_error([1.0, -2.0], [1.0, 2.0]) == 2.0


@pytest.mark.parametrize("dtype", ["float32", "float64"])
def test_fresh_build_passes(dtype):
    results = G.run(dtype, instances=20)
    assert {r.op for r in results} >= set(G.LAYER_CASES) | {"l2_loss", "arnet"}
    for r in results:
        assert r.passed, r


def test_model_check_samples_at_most_30(monkeypatch):
    seen = []
    orig = G.rel_error
    monkeypatch.setattr(G, "rel_error", lambda a, n: seen.append(len(a)) or orig(a, n))
    G.check_model("float32", seed=3)
    assert seen == [30]


def test_sign_flip_names_conv(monkeypatch):
    orig = T.conv3x3_backward

    def flipped(dout, cache):
        dx, dw, db = orig(dout, cache)
        return dx, -dw, db

    monkeypatch.setattr(T, "conv3x3_backward", flipped)
    failed = {r.op for r in G.run("float32", instances=3) if not r.passed}
    assert "conv3x3" in failed
    assert failed <= {"conv3x3", "arnet"}


def test_results_machine_readable():
    d = G.run("float64", instances=2, model=False)[0].to_dict()
    assert set(d) == {"op", "max_rel_error", "tolerance", "instances", "passed"}
