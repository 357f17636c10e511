"""Tests for the anomaly witnesses."""

import numpy as np
import pytest

from demos import (
    DEMOS,
    demo_anomaly_subspace,
    demo_counterexample_norm,
    demo_overcount,
    demo_parasitic,
    run_demo,
    search_norm_witness,
)
from errors import InvalidInput, WitnessNotFound
from linalg import DataMatrix


def test_demo_registry():
    assert set(DEMOS) == {"parasitic", "counterexample-norm", "anomaly-subspace", "overcount"}
    with pytest.raises(InvalidInput):
        run_demo("missing")


def test_anomaly_subspace():
    out = demo_anomaly_subspace()
    a, b = out["orthogonal_loadings"], out["orthogonal_components"]
    assert a["subspace_var"] == pytest.approx(13.0, rel=1e-12)
    assert a["total_var_Y"] == pytest.approx(13.0, rel=1e-12)
    assert abs(a["component_correlation"]) > 0.1
    assert b["subspace_var"] == pytest.approx(13.0, rel=1e-12)
    assert b["total_var_Y"] < 12.0
    assert out["verified"]


def test_overcount():
    out = demo_overcount()
    assert out["report"]["total_var_Y"] > out["total_var_A"] == pytest.approx(14.0)
    assert max(out["report"]["values"].values()) <= 13.0 + 1e-7
    with pytest.raises(InvalidInput):
        demo_overcount(angle=2.0)


def test_overcount_fails_for_wide_angles():
    # at 60 degrees the pair no longer stacks on v_1
    with pytest.raises(WitnessNotFound):
        demo_overcount(angle=np.pi / 3)


def test_counterexample_norm():
    out = demo_counterexample_norm(budget=50)
    for rule in ("qr", "up"):
        w = out[rule]
        assert w["normalized_var"] > w["total_var_Y"]
        assert w["normalized_var"] <= w["subspace_var"] + 1e-8


def test_norm_search_fails_on_orthogonal_columns():
    # with p = m every draw has Y spanning R^2, yet a single column never exceeds ||y||^2
    with pytest.raises(WitnessNotFound):
        search_norm_witness(DataMatrix(np.diag([3.0, 2.0])), 1, "qr", budget=20)


@pytest.mark.slow
def test_parasitic_demo():
    out = demo_parasitic(restarts=32)
    d = np.asarray(out["diag_XtY"])
    assert d[0] == pytest.approx(d[1], rel=1e-6)
    assert out["objective"] == pytest.approx(13.0, rel=1e-6)
    assert out["cartan_corner_norm_sq"] == pytest.approx(13.0, rel=1e-6)


def test_parasitic_demo_without_restarts():
    with pytest.raises(WitnessNotFound):
        demo_parasitic(restarts=0)
