import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from kreinlab.grid import build_grid
from kreinlab.mode_ops import (
    BiharmonicNormal,
    Coefficients,
    Dirichlet,
    ModeMatrix,
    band_from_dense,
    realization,
)
from kreinlab.krein import default_g1
from kreinlab.spectra import (
    SingularValueSeries,
    SpectrumReport,
    cluster_count,
    counting_function,
    default_window,
    eigs_from_inverse,
    eigs_sym,
    find_clusters,
    negligibility_test,
    spectrum_report,
    sv_merge,
    weyl_fit,
)


def _series(values):
    v = np.asarray(values, dtype=float)
    return SingularValueSeries(v, "", np.zeros(v.size, dtype=int), np.ones(v.size, dtype=int))


def test_eigs_sym_diagonal():
    g = build_grid(1.0, 2.0, 16, 1.0)
    w = g.weights[:2]
    S = np.diag([1.0, 2.0]) * w[:, None]
    mm = ModeMatrix(0, g, 2, band_from_dense(S, 1), 1, np.arange(2))
    assert_allclose(eigs_sym(mm), [1.0, 2.0], rtol=1e-14)


def test_eigs_sym_rejects_asymmetric_band():
    g = build_grid(1.0, 2.0, 16, 1.0)
    S = np.array([[2.0, -1.0], [-0.5, 2.0]])
    mm = ModeMatrix(0, g, 2, band_from_dense(S, 1), 1, np.arange(2))
    with pytest.raises(ValueError, match="symmetry"):
        eigs_sym(mm)


def test_eigs_sym_matches_dense_for_dirichlet_mode():
    g = build_grid(1.0, 10.0, 80, 2.0)
    mm = realization(3, g, Coefficients(2, 1.0), Dirichlet())
    ev = eigs_sym(mm)
    dense = np.sort(np.linalg.eigvals(mm.matrix).real)
    assert_allclose(ev, dense, rtol=1e-9)
    assert ev[0] > 1.0


def test_eigs_sym_flux_path_agrees_with_dense():
    g = build_grid(1.0, 6.0, 60, 1.0)
    mm = realization(2, g, Coefficients(4, 1.0), BiharmonicNormal(default_g1(1.0, range(3))))
    assert mm.flux is not None
    ev = eigs_sym(mm)
    dense = np.sort(np.linalg.eigvals(mm.matrix).real)
    assert_allclose(ev[:20], dense[:20], rtol=1e-7)
    assert ev[0] >= 1.0 - 1e-12


def test_eigs_from_inverse_floor():
    mu = np.diag([2.0, 0.5, 1e-15, -0.25])
    assert_allclose(eigs_from_inverse(mu), [-4.0, 0.5, 2.0])


def test_sv_merge_multiplicity():
    s = sv_merge({0: [3.0], 1: [2.0]})
    assert_allclose(s.values, [3.0, 2.0, 2.0])
    assert list(s.modes) == [0, 1, 1]
    assert list(s.multiplicity) == [1, 2, 2]
    assert list(s.rows())[0] == (1, 3.0, 0, 1)


def test_sv_merge_empty():
    assert len(sv_merge({})) == 0
    assert len(sv_merge({0: []})) == 0


def test_sv_merge_drops_noise_floor():
    s = sv_merge({0: [1.0, 1e-15], 1: [1e-13]})
    assert_allclose(s.values, [1.0, 1e-13, 1e-13])


def test_sv_merge_complete_cuts_at_smallest_top():
    s = sv_merge({0: [5.0, 1.0], 1: [2.0, 0.5]}, complete=True)
    assert_allclose(s.values, [5.0, 2.0, 2.0])


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.integers(0, 20), st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=5), min_size=1))
def test_sv_merge_permutation_invariant(per_mode):
    a = sv_merge(per_mode)
    b = sv_merge(dict(reversed(list(per_mode.items()))))
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.modes, b.modes)
    assert np.all(np.diff(a.values) <= 0)
    assert len(a) == sum(len(v) * (1 if m == 0 else 2) for m, v in per_mode.items())


def test_symbol_a_over_m_squared_gives_slope_minus_two():
    s = sv_merge({m: [3.0 / m**2] for m in range(1, 400)})
    fit = weyl_fit(s)
    assert fit.slope == pytest.approx(-2.0, abs=0.02)
    # Doubling the multiplicity makes s_l ~ 4 a / l**2 asymptotically.
    assert fit.constant == pytest.approx(12.0, rel=0.05)


def test_weyl_fit_exact_power_law():
    l = np.arange(1, 201)
    fit = weyl_fit(_series(7.0 * l**-1.5))
    assert fit.slope == pytest.approx(-1.5, abs=1e-12)
    assert fit.constant == pytest.approx(7.0, rel=1e-10)
    assert fit.residual < 1e-12
    assert fit.window == default_window(200) == (20, 160)


def test_weyl_fit_window_checks():
    s = _series(np.arange(1, 101, dtype=float) ** -2)
    with pytest.raises(ValueError):
        weyl_fit(s, (5, 60))
    with pytest.raises(ValueError):
        weyl_fit(s, (20, 90))
    with pytest.raises(ValueError):
        weyl_fit(s, (20, 30))
    with pytest.raises(ValueError):
        weyl_fit(_series(np.ones(20)))


def test_negligibility_exponential_passes():
    l = np.arange(1, 201)
    v = negligibility_test(_series(np.exp(-l / 4.0)), 6)
    assert v.passed and v.sustained_p >= 6
    assert v.window == (50, 100)


def test_negligibility_power_law_fails():
    l = np.arange(1, 201)
    v = negligibility_test(_series(l**-2.0), 6)
    assert not v.passed
    assert v.sustained_p == 2


def test_negligibility_needs_enough_entries():
    with pytest.raises(ValueError):
        negligibility_test(_series(np.exp(-np.arange(39.0))), 6)


def test_cluster_count_and_counting_function():
    rep = spectrum_report({0: [0.4, 1.0, 2.0], 1: [0.45, 3.0]})
    assert list(rep.eigenvalues) == [0.4, 0.45, 1.0, 2.0, 3.0]
    assert list(rep.modes) == [0, 1, 0, 0, 1]
    assert cluster_count(rep, 0.42, 0.05) == 2
    assert list(counting_function(rep, [0.0, 1.0, 10.0])) == [0, 3, 5]
    with pytest.raises(ValueError):
        counting_function(rep, [2.0, 1.0])
    with pytest.raises(ValueError):
        cluster_count(rep, 0.4, 0.0)


def test_find_clusters_ties_go_to_lower_center():
    rep = SpectrumReport(np.array([0.45, 0.5, 0.55, 0.9]), np.zeros(4, dtype=int))
    out = find_clusters(rep, [0.6, 0.4], 0.1)
    assert [c.center for c in out.clusters] == [0.4, 0.6]
    assert [c.count for c in out.clusters] == [2, 1]
    assert sum(c.count for c in out.clusters) <= len(rep)


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 30), st.integers(0, 2**31 - 1))
def test_rank_one_update_interlaces(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    A = A + A.T
    y = rng.standard_normal(n)
    a = np.linalg.eigvalsh(A)
    b = np.linalg.eigvalsh(A + np.outer(y, y))
    tol = 1e-9 * max(1.0, np.abs(b).max())
    assert np.all(b >= a - tol)
    assert np.all(b[:-1] <= a[1:] + tol)
