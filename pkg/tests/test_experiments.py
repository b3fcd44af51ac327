import json
import math

import jsonschema
import numpy as np
import pytest

from kreinlab.cli import report_schema
from kreinlab.experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    dirichlet_oracle,
    offdiagonal_singular_values,
    random_L,
    run_experiment,
    with_overrides,
)
from kreinlab.grid import build_grid
from kreinlab.krein import TSpec, l_from_T, poisson_mode
from kreinlab.mode_ops import Coefficients

SMALL = dict(R=12.0, N=160, grading=2.0, M=16, ladder=(8, 12, 16), bih_ladder=(8, 12, 16))


def small(kind, **kw):
    return ExperimentConfig(name=kind, **{**SMALL, **kw})


@pytest.mark.parametrize(
    "kw,match",
    [
        (dict(a=0.0), "invertible"),
        (dict(a=1.5), "outside"),
        (dict(M=4), "M"),
        (dict(r0=40.0), "r0"),
        (dict(ladder=(64, 32)), "increasing"),
        (dict(tolerances={"nonsense": 1.0}), "nonsense"),
        (dict(kind="weil"), "unknown"),
        (dict(t_values=(0.4, 0.0)), "t_values"),
        (dict(N=8), "N"),
    ],
)
def test_config_validation(kw, match):
    with pytest.raises(ValueError, match=match):
        ExperimentConfig(name="union", **kw)


def test_config_tolerance_override_and_dict():
    cfg = ExperimentConfig(name="union", tolerances={"cluster_halfwidth": 0.02})
    assert cfg.tol("cluster_halfwidth") == 0.02
    assert cfg.tol("identity") == 1e-8
    d = cfg.to_dict()
    assert d["kind"] == "union" and d["a"] == 0.5
    json.dumps(d)
    assert with_overrides(cfg, M=32).M == 32


def test_registry_has_five_experiments():
    assert set(EXPERIMENTS) == {"krein_identity", "weyl", "negligibility", "union", "biharmonic"}
    assert all(e.anchor for e in EXPERIMENTS.values())


def test_random_L_is_seeded_and_nonzero():
    a = random_L(np.random.default_rng(3), range(10))
    b = random_L(np.random.default_rng(3), range(10))
    assert a.values == b.values
    assert all(0.1 <= abs(v) <= 10 for v in a.values.values())


def test_dirichlet_oracle_boundary_values():
    r = np.array([1.0, 5.0, 30.0])
    u = dirichlet_oracle(r, 30.0)
    assert u[0] == pytest.approx(0.0, abs=1e-14)
    assert u[-1] == pytest.approx(0.0, abs=1e-12)
    assert 0 < u[1] < 1


def test_offdiagonal_reduction_matches_dense_svd():
    g = build_grid(1.0, 12.0, 160, 2.0)
    co = Coefficients(2, 1.0)
    r0 = 2.0
    for m in (0, 3):
        nd = poisson_mode(m, g, co)
        y = nd.y
        far = np.append(g.nodes[:-1] > r0, False)[: len(y)]
        L = l_from_T(TSpec.constant(0.5), nd)
        full = np.outer(y, y) / L
        full[np.ix_(~far, ~far)] = 0.0
        dense = np.linalg.svd(full, compute_uv=False)[:2]
        y_hi = nd.restricted_norm(r0)
        assert y_hi == pytest.approx(np.linalg.norm(y[far]), rel=1e-12)
        y_lo = math.sqrt(nd.Lambda - y_hi**2)
        np.testing.assert_allclose(offdiagonal_singular_values(y_lo, y_hi, L), dense, rtol=1e-10)


@pytest.mark.parametrize("kind", sorted(EXPERIMENTS))
def test_small_runs_validate_against_schema(kind):
    kw = dict(n_random=2, oracle_ladder=(100, 200), p1_modes=16, p1_inner_nodes=60)
    if kind in ("negligibility", "weyl"):
        kw.update(M=64, ladder=(32, 48, 64))
    rep = run_experiment(small(kind, **kw))
    assert rep.error is None, rep.error
    doc = rep.to_json()
    jsonschema.validate(doc, report_schema())
    assert doc["kind"] == kind and doc["passed"]
    assert rep.series


def test_runs_are_deterministic_and_thread_count_invariant():
    cfg = small("krein_identity", n_random=3, oracle_ladder=(100, 200))
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    c = run_experiment(with_overrides(cfg, jobs=2))
    assert a.measured == b.measured == c.measured


def test_union_counts_monotone_in_M():
    rep = run_experiment(small("union", M=24, ladder=(8, 16, 24)))
    counts = [rep.measured["cluster_counts"][str(k)] for k in (8, 16, 24)]
    assert counts == sorted(counts)
    assert rep.measured["dirichlet_count"] == 0


def test_error_is_captured_in_report(monkeypatch):
    import kreinlab.experiments as ex

    def boom(cfg, rep):
        raise RuntimeError("boom")

    monkeypatch.setitem(ex.EXPERIMENTS, "union", ex.ExperimentEntry(boom, "x"))
    rep = run_experiment(ExperimentConfig(name="union"))
    assert "boom" in rep.error and not rep.all_passed


def test_neumann_robin_difference_decays_faster_than_weyl(default_run):
    rep = default_run("weyl")
    assert rep.measured["fits"]["N_R"]["slope"] < -2.5
