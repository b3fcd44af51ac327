"""Acceptance criteria at the default configuration (c0=1, R=30, N=600, M=128).

Each test records one summary line through the ``acceptance`` fixture; the
lines are printed in the terminal summary under "acceptance criteria".
Thresholds are written out here rather than read from the experiment
tolerances, so loosening a default cannot silently turn a criterion green.
"""

import math

import pytest


def test_01_krein_identity_robin(default_run, acceptance):
    rep = default_run("krein_identity")
    err = rep.measured["identity_max_error"]
    modes = len(rep.measured["P_symbol"])
    ok = err < 1e-8 and rep.inputs["M"] == 128 and tuple(rep.inputs["b_values"]) == (0.0, 1.0, 10.0)
    acceptance(1, "Krein identity, Robin b in {0,1,10}", ok, f"max rel err {err:.2e} < 1e-08 over modes 0..{modes - 1}")
    assert ok


def test_02_neumann_type_equivalence(default_run, acceptance):
    rep = default_run("krein_identity")
    err = rep.measured["equivalence_max_error"]
    n = rep.measured["equivalence_instances"]
    ok = err < 1e-8 and n == 20
    acceptance(2, "Neumann-type equivalence C = L + P", ok, f"max rel err {err:.2e} < 1e-08 over {n} random L")
    assert ok


def test_03_weyl_exponent_second_order(default_run, acceptance):
    rep = default_run("weyl")
    slopes = {p: rep.measured["fits"][p]["slope"] for p in ("D_N", "D_R", "N_R")}
    in_band = {p: -2.15 <= s <= -1.85 for p, s in slopes.items()}
    ladder = rep.measured["ladder_slopes"]
    tighten = {}
    for p, by_m in ladder.items():
        dev = [abs(by_m[str(k)] + 2.0) for k in (32, 64, 128)]
        tighten[p] = dev[0] > dev[1] > dev[2]
    ok = all(in_band.values()) and all(tighten.values())
    detail = ", ".join(f"{p} {s:+.3f}{'' if in_band[p] else ' (out of band)'}" for p, s in slopes.items())
    detail += "; ladder tightens: " + ", ".join(f"{p} {'yes' if t else 'no'}" for p, t in tighten.items())
    acceptance(3, "Weyl slopes in [-2.15, -1.85]", ok, detail)
    assert ok, detail


def test_04_weyl_exponent_p1(default_run, acceptance):
    rep = default_run("weyl")
    s = rep.measured["p1_fit"]["slope"]
    ok = -1.2 <= s <= -0.8
    acceptance(4, "Weyl slope of the whole-plane difference", ok, f"slope {s:+.3f} in [-1.2, -0.8]")
    assert ok


def test_05_spectral_negligibility(default_run, acceptance):
    rep = default_run("negligibility")
    far = rep.measured["far_poisson"]
    off = rep.measured["offdiagonal"]
    ok = far["sustained_p"] >= 6 and off["sustained_p"] >= 4 and rep.inputs["r0"] == 2.0
    acceptance(
        5,
        "Spectral negligibility",
        ok,
        f"far-field Poisson p = {far['sustained_p']} >= 6, off-diagonal p = {off['sustained_p']} >= 4",
    )
    assert ok


def test_06_essential_spectrum_augmentation(default_run, acceptance):
    rep = default_run("union")
    counts = {int(k): v for k, v in rep.measured["cluster_counts"].items()}
    ladder = sorted(counts)
    size = all(counts[m] >= m - 4 for m in ladder)
    growth = all(counts[b] - counts[a] >= (b - a) - 2 for a, b in zip(ladder, ladder[1:]))
    empty = rep.measured["dirichlet_count"] == 0
    ok = ladder == [32, 64, 128] and size and growth and empty and rep.inputs["a"] == 0.5
    detail = f"counts {[counts[m] for m in ladder]} for M = {ladder}, Dirichlet count {rep.measured['dirichlet_count']}"
    acceptance(6, "Cluster at a = 0.5", ok, detail)
    assert ok


def test_07_non_diminishing(default_run, acceptance):
    rep = default_run("union")
    d = rep.measured["counting_max_difference"]
    ok = d <= 128 and rep.inputs["thresholds"] == 50
    acceptance(7, "Counting functions differ by at most M", ok, f"max |N_perturbed - N_Dirichlet| = {d} <= 128")
    assert ok


def test_08_two_point_essential_spectrum(default_run, acceptance):
    rep = default_run("union")
    cl = rep.measured["two_point_clusters"]
    ok = len(cl) == 2 and all(c["count"] >= 128 / 2 - 4 for c in cl)
    detail = ", ".join(f"{c['count']} near {c['center']:g}" for c in cl) + " (need >= 60 each)"
    acceptance(8, "Two-point essential spectrum", ok, detail)
    assert ok


def test_09_biharmonic(default_run, acceptance):
    rep = default_run("biharmonic")
    zero = rep.measured["zero_perturbation_error"]
    floor = rep.measured["unperturbed_min_eigenvalue"]
    counts = {int(k): v for k, v in rep.measured["cluster_counts"].items()}
    ladder = sorted(counts)
    growth = ladder == [16, 32, 64] and all(counts[m] >= m - 4 for m in ladder)
    growth = growth and all(counts[b] - counts[a] >= (b - a) - 2 for a, b in zip(ladder, ladder[1:]))
    ok = zero < 1e-10 and floor >= 1 - 1e-4 and growth
    detail = f"zero-perturbation err {zero:.1e}, min eigenvalue {floor:.5f}, cluster counts {[counts[m] for m in ladder]}"
    acceptance(9, "Biharmonic normal condition", ok, detail)
    assert ok


def test_10_oracles(default_run, acceptance):
    rep = default_run("krein_identity")
    o = rep.measured["oracle"]
    p_ref = o["P0_reference"]
    p_err, l_err = o["P0_error"][-1], o["Lambda0_error"][-1]
    order = o["P0_order"]
    ok = (
        p_err < 1e-5
        and l_err < 1e-4
        and abs(order - 2.0) <= 0.3
        and math.isclose(p_ref, -1.4296, abs_tol=1e-4)
    )
    detail = f"P0 err {p_err:.1e} (ref {p_ref:.6f}), Lambda0 err {l_err:.1e}, order {order:.2f}"
    acceptance(10, "Oracle agreement", ok, detail)
    assert ok


@pytest.mark.parametrize("kind", ["krein_identity", "weyl", "negligibility", "union", "biharmonic"])
def test_default_reports_are_complete(default_run, kind):
    rep = default_run(kind)
    assert rep.error is None
    assert rep.passed and rep.series
