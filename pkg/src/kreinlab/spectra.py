"""Spectral measurement: eigenvalues, merged singular values, fits, clusters.

Operators on the exterior split into independent Fourier modes, so global
spectra are unions of per-mode spectra.  Singular-value series of operator
differences count the modes ``+m`` and ``-m`` separately (multiplicity 2
for ``m >= 1``); eigenvalue counts of a single realization use one copy per
folded mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal, eigvalsh, svdvals

from .mode_ops import SYMMETRY_TOL, ModeMatrix

NOISE_FLOOR = 1e-14
INVERSE_FLOOR = 1e-12
MIN_FIT_POINTS = 20
MIN_TEST_ENTRIES = 40
MAX_REPORTED_P = 64


# --- eigenvalues -----------------------------------------------------------


def eigs_sym(mm: ModeMatrix) -> np.ndarray:
    """Ascending eigenvalues of a weighted-symmetric mode matrix.

    Order-2 matrices are reduced to a symmetric tridiagonal problem.  Order-4
    matrices that carry their flux factor ``F`` use ``1 + sigma(F W^-1/2)**2``,
    which keeps full accuracy despite the large condition number of ``S``.
    """
    err = mm.symmetry_error()
    if err > SYMMETRY_TOL:
        raise ValueError(f"mode matrix violates weighted symmetry ({err:.2e} > {SYMMETRY_TOL:g})")
    w = mm.weights
    if mm.order == 2 and mm.bandwidth == 1:
        d = mm.band[1] / w
        e = mm.band[0, 1:] / np.sqrt(w[:-1] * w[1:])
        return eigh_tridiagonal(d, e, eigvals_only=True)
    if mm.flux is not None:
        s = svdvals(mm.flux / np.sqrt(w)[None, :])
        return np.sort(1.0 + s**2)
    sw = np.sqrt(w)
    B = mm.stiffness / sw[:, None] / sw[None, :]
    return eigvalsh(0.5 * (B + B.T))


def eigs_from_inverse(inv_sym: np.ndarray, floor: float = INVERSE_FLOOR) -> np.ndarray:
    """Eigenvalues of an operator from the symmetric form of its inverse.

    Inverse eigenvalues with ``|mu| <= floor`` are excluded before inversion.
    """
    mu = eigvalsh(inv_sym)
    mu = mu[np.abs(mu) > floor]
    return np.sort(1.0 / mu)


# --- singular-value series -------------------------------------------------


@dataclass(frozen=True)
class WeylFit:
    slope: float
    intercept: float
    residual: float
    window: tuple

    @property
    def constant(self) -> float:
        """``C = exp(intercept)``, the estimate of ``lim s_l l**(-slope)``."""
        return math.exp(self.intercept)

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "constant": self.constant,
            "residual": self.residual,
            "window": list(self.window),
        }


@dataclass(frozen=True, eq=False)
class SingularValueSeries:
    """Descending singular values with the mode each one came from.

    ``multiplicity`` records the multiplicity of the mode a value belongs to
    (1 for ``m = 0``, 2 otherwise); a value of multiplicity 2 appears twice
    in ``values``.
    """

    values: np.ndarray
    source: str = ""
    modes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    multiplicity: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    fit: Optional[WeylFit] = None

    def __len__(self) -> int:
        return len(self.values)

    def with_fit(self, fit: WeylFit) -> "SingularValueSeries":
        return SingularValueSeries(self.values, self.source, self.modes, self.multiplicity, fit)

    def rows(self):
        """CSV rows ``(l, value, mode, multiplicity)`` with 1-based ``l``."""
        for i, v in enumerate(self.values):
            yield i + 1, float(v), int(self.modes[i]), int(self.multiplicity[i])


def _default_multiplicity(m: int) -> int:
    return 1 if m == 0 else 2


def sv_merge(
    per_mode: Mapping[int, Sequence[float]],
    multiplicities: Optional[Mapping[int, int]] = None,
    source: str = "",
    complete: bool = False,
) -> SingularValueSeries:
    """Merge per-mode singular values into one descending series.

    Values of mode ``m`` are repeated ``multiplicities[m]`` times (default 1
    for ``m = 0`` and 2 otherwise).  Values below ``1e-14`` times the largest
    one are dropped.  With ``complete=True`` the series is also cut at the
    smallest per-mode maximum, below which modes beyond the truncation would
    contribute and the ordering is no longer trustworthy.
    """
    vals, modes, mult = [], [], []
    tops = []
    for m in sorted(per_mode):
        s = np.asarray(per_mode[m], dtype=float)
        if s.size == 0:
            continue
        k = multiplicities[m] if multiplicities is not None else _default_multiplicity(m)
        tops.append(s.max())
        rep = np.repeat(s, k)
        vals.append(rep)
        modes.append(np.full(rep.size, m, dtype=int))
        mult.append(np.full(rep.size, k, dtype=int))
    if not vals:
        return SingularValueSeries(np.zeros(0), source, np.zeros(0, dtype=int), np.zeros(0, dtype=int))
    v = np.concatenate(vals)
    md = np.concatenate(modes)
    mu = np.concatenate(mult)
    # Stable sort on (-value, mode) so permuting the input dict is harmless.
    order = np.lexsort((md, -v))
    v, md, mu = v[order], md[order], mu[order]
    keep = v >= NOISE_FLOOR * v[0]
    if complete:
        keep &= v >= min(tops)
    return SingularValueSeries(v[keep], source, md[keep], mu[keep])


def default_window(n: int) -> tuple:
    """1-based inclusive l-window ``[0.1 n, 0.8 n]``."""
    return (max(1, math.ceil(0.1 * n)), math.floor(0.8 * n))


def weyl_fit(s: SingularValueSeries, window: Optional[tuple] = None) -> WeylFit:
    """Least-squares fit of ``log s_l`` against ``log l`` over ``window``.

    ``window`` is a 1-based inclusive ``(l_lo, l_hi)`` and must avoid the
    first 10% and last 20% of the series.
    """
    n = len(s)
    lo, hi = default_window(n) if window is None else window
    if lo < 0.1 * n or hi > 0.8 * n:
        raise ValueError(f"fit window {lo}..{hi} overlaps the polluted ends of a series of length {n}")
    if hi - lo + 1 < MIN_FIT_POINTS:
        raise ValueError(f"fit window {lo}..{hi} has fewer than {MIN_FIT_POINTS} points")
    l = np.arange(lo, hi + 1)
    y = np.log(s.values[lo - 1 : hi])
    x = np.log(l)
    slope, intercept = np.polyfit(x, y, 1)
    res = y - (slope * x + intercept)
    return WeylFit(float(slope), float(intercept), float(np.sqrt(np.mean(res**2))), (int(lo), int(hi)))


@dataclass(frozen=True)
class NegligibilityVerdict:
    passed: bool
    sustained_p: int
    p_max: int
    window: tuple
    worst_ratio: float

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "sustained_p": self.sustained_p,
            "p_max": self.p_max,
            "window": list(self.window),
            "worst_ratio": self.worst_ratio,
        }


def negligibility_test(s: SingularValueSeries, p_max: int) -> NegligibilityVerdict:
    """Superpolynomial-decay test by dyadic ratios.

    A series ``s_l ~ l**-p`` has ``s_(2l) / s_l -> 2**-p``.  Over the window
    ``l in [len/4, len/2]`` the largest ``p`` with ``s_(2l) <= 2**-p s_l``
    everywhere is reported; the verdict passes when it reaches ``p_max``.
    """
    n = len(s)
    if n < MIN_TEST_ENTRIES:
        raise ValueError(f"negligibility test needs >= {MIN_TEST_ENTRIES} entries above the floor, got {n}")
    lo, hi = math.ceil(n / 4), n // 2
    l = np.arange(lo, hi + 1)
    ratios = s.values[2 * l - 1] / s.values[l - 1]
    worst = float(ratios.max())
    if worst <= 0:
        p = MAX_REPORTED_P
    else:
        p = int(min(MAX_REPORTED_P, math.floor(-math.log2(worst))))
    return NegligibilityVerdict(p >= p_max, p, int(p_max), (int(lo), int(hi)), worst)


# --- eigenvalue reports ----------------------------------------------------


@dataclass(frozen=True)
class Cluster:
    center: float
    halfwidth: float
    count: int


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    """Ascending eigenvalues with mode provenance, plus detected clusters."""

    eigenvalues: np.ndarray
    modes: np.ndarray
    clusters: tuple = ()
    counting: Optional[dict] = None

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def rows(self):
        for i, v in enumerate(self.eigenvalues):
            yield i + 1, float(v), int(self.modes[i]), 1


def spectrum_report(per_mode: Mapping[int, Sequence[float]]) -> SpectrumReport:
    """Union of per-mode spectra, one copy per folded mode."""
    vals, modes = [], []
    for m in sorted(per_mode):
        v = np.asarray(per_mode[m], dtype=float)
        vals.append(v)
        modes.append(np.full(v.size, m, dtype=int))
    if not vals:
        return SpectrumReport(np.zeros(0), np.zeros(0, dtype=int))
    v = np.concatenate(vals)
    md = np.concatenate(modes)
    order = np.lexsort((md, v))
    return SpectrumReport(v[order], md[order])


def cluster_count(rep: SpectrumReport, center: float, halfwidth: float) -> int:
    """Number of eigenvalues in ``[center - halfwidth, center + halfwidth]``."""
    if not halfwidth > 0:
        raise ValueError(f"halfwidth must be > 0, got {halfwidth}")
    ev = rep.eigenvalues
    return int(np.count_nonzero((ev >= center - halfwidth) & (ev <= center + halfwidth)))


def counting_function(rep: SpectrumReport, thresholds: Sequence[float]) -> np.ndarray:
    """``N(Lambda)``: number of eigenvalues ``<= Lambda`` for each threshold."""
    t = np.asarray(thresholds, dtype=float)
    if np.any(np.diff(t) < 0):
        raise ValueError("thresholds must be ascending")
    return np.searchsorted(rep.eigenvalues, t, side="right")


def find_clusters(rep: SpectrumReport, centers: Iterable[float], halfwidth: float) -> SpectrumReport:
    """Assign eigenvalues within ``halfwidth`` of a center to the nearest one.

    Equidistant eigenvalues go to the lower center, so clusters never share
    an eigenvalue even when their windows overlap.
    """
    if not halfwidth > 0:
        raise ValueError(f"halfwidth must be > 0, got {halfwidth}")
    c = np.sort(np.asarray(list(centers), dtype=float))
    ev = rep.eigenvalues
    counts = np.zeros(len(c), dtype=int)
    if len(c) and len(ev):
        dist = np.abs(ev[:, None] - c[None, :])
        nearest = np.argmin(dist, axis=1)  # argmin returns the first, i.e. lower, center on ties
        inside = dist[np.arange(len(ev)), nearest] <= halfwidth
        counts = np.bincount(nearest[inside], minlength=len(c))
    clusters = tuple(Cluster(float(ci), float(halfwidth), int(k)) for ci, k in zip(c, counts))
    return SpectrumReport(rep.eigenvalues, rep.modes, clusters, rep.counting)
