"""Null solutions, boundary symbols and the Kreĭn resolvent formula per mode.

Every operator on the boundary circle commutes with rotations, so it is a
diagonal sequence over Fourier modes: a :class:`BoundarySymbol`.  For the
second-order problem the key per-mode objects are

* the null solution ``zhat`` of the mode operator with ``zhat(1) = 1`` and
  ``zhat(R) = 0`` (the Poisson operator applied to the unit mode),
* the Dirichlet-to-Neumann value ``P_m``, read off the same half-cell flux
  balance that defines the Robin boundary row,
* ``Lambda_m = |zhat|_W**2``.

With those, any realization whose boundary row reads ``u'(1) = C_m u(1)``
has inverse ``A1^-1 + zhat zhat^T W / L_m`` with ``L_m = C_m - P_m``.  The
identity is exact in the discrete algebra (it is a Schur complement), not
only in the continuum limit.

The boundary circle is the unit circle; the Kreĭn routines reject grids
with ``r_inner != 1`` because the boundary pairing would pick up a factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.linalg import qr, solve_triangular

from .grid import RadialGrid
from .mode_ops import (
    Coefficients,
    Dirichlet,
    ModeMatrix,
    _check_mode,
    apply_bc,
    assemble_second_order,
    boundary_flux_column,
    discrete_laplacian,
    inverse_sym,
)


@dataclass(frozen=True)
class BoundarySymbol:
    """Real per-mode values of a rotation-invariant operator on the circle.

    ``order_hint`` is the expected growth exponent in ``m`` (``+1`` for
    ``P`` and ``C``, ``-1`` for ``Lambda``).  ``invertible`` requests that
    no stored value is zero.
    """

    values: Mapping[int, float]
    order_hint: int = 0
    invertible: bool = False

    def __post_init__(self):
        clean = {}
        for m, v in dict(self.values).items():
            if int(m) != m or m < 0:
                raise ValueError(f"symbol modes must be non-negative integers, got {m!r}")
            if isinstance(v, complex) or np.iscomplexobj(v):
                raise ValueError(f"symbol value at mode {m} must be real, got {v!r}")
            v = float(v)
            if not math.isfinite(v):
                raise ValueError(f"symbol value at mode {m} is not finite")
            if self.invertible and v == 0.0:
                raise ValueError(f"symbol tagged invertible has a zero at mode {m}")
            clean[int(m)] = v
        object.__setattr__(self, "values", MappingProxyType(dict(sorted(clean.items()))))

    def __getitem__(self, m: int) -> float:
        return self.values[m]

    def __contains__(self, m) -> bool:
        return m in self.values

    def __len__(self) -> int:
        return len(self.values)

    @property
    def modes(self) -> tuple:
        return tuple(self.values)

    def as_array(self) -> np.ndarray:
        return np.array(list(self.values.values()))

    @classmethod
    def constant(cls, value: float, modes: Iterable[int], order_hint: int = 0) -> "BoundarySymbol":
        return cls({m: value for m in modes}, order_hint, invertible=value != 0)

    @classmethod
    def from_function(cls, fn: Callable[[int], float], modes: Iterable[int], order_hint: int = 0) -> "BoundarySymbol":
        return cls({m: fn(m) for m in modes}, order_hint)


def _same_modes(*syms: BoundarySymbol) -> tuple:
    modes = syms[0].modes
    for s in syms[1:]:
        if s.modes != modes:
            raise ValueError(f"boundary symbols have different mode sets ({len(modes)} vs {len(s.modes)} modes)")
    return modes


@dataclass(frozen=True)
class TSpec:
    """Diagonal operator ``T`` on the null space, one real value per mode.

    Build with :meth:`constant` (``T = aI``), :meth:`diagonal` or
    :meth:`alternating`.  Zero entries are rejected since ``T`` must be
    invertible for the realization to be.
    """

    kind: str
    a: Optional[float] = None
    t: Optional[Mapping[int, float]] = field(default=None, repr=False)
    period: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "diagonal", "periodic"):
            raise ValueError(f"unknown TSpec kind {self.kind!r}")
        if self.kind == "constant":
            if self.a is None or not math.isfinite(self.a) or self.a == 0:
                raise ValueError(f"T = aI needs a finite nonzero a (a in R \\ {{0}}), got {self.a}")
        if self.kind == "periodic":
            if not self.period or any(not math.isfinite(v) or v == 0 for v in self.period):
                raise ValueError(f"periodic T needs finite nonzero values, got {self.period}")
        if self.kind == "diagonal":
            vals = dict(self.t or {})
            for m, v in vals.items():
                if not math.isfinite(v) or v == 0:
                    raise ValueError(f"T entry at mode {m} must be finite and nonzero, got {v}")
            object.__setattr__(self, "t", MappingProxyType(vals))

    @classmethod
    def constant(cls, a: float) -> "TSpec":
        return cls("constant", a=float(a))

    @classmethod
    def diagonal(cls, t: Mapping[int, float]) -> "TSpec":
        return cls("diagonal", t={int(m): float(v) for m, v in t.items()})

    @classmethod
    def alternating(cls, values: Sequence[float]) -> "TSpec":
        """``t_m = values[m % len(values)]``; every value recurs infinitely often."""
        return cls("periodic", period=tuple(float(v) for v in values))

    def __getitem__(self, m: int) -> float:
        if self.kind == "constant":
            return self.a
        if self.kind == "periodic":
            return self.period[m % len(self.period)]
        return self.t[m]

    def essential_points(self) -> tuple:
        """Accumulation set of ``{t_m}`` when it is a finite set of points.

        Exact for the constant and periodic kinds; for a finite diagonal
        table only the recurring values can be identified, so the distinct
        values are returned as candidates.
        """
        if self.kind == "constant":
            return (self.a,)
        if self.kind == "periodic":
            return tuple(sorted(set(self.period)))
        return tuple(sorted(set(self.t.values())))


@dataclass(frozen=True, eq=False)
class ModeNullData:
    """Discrete null solution of one mode and its boundary scalars.

    ``zhat`` is given on all grid nodes (``zhat[0] = 1``, ``zhat[-1] = 0``).
    """

    m: int
    zhat: np.ndarray
    P: float
    Lambda: float
    grid: RadialGrid = field(repr=False)

    def __post_init__(self):
        self.zhat.flags.writeable = False

    @property
    def y(self) -> np.ndarray:
        """``W^(1/2) zhat`` on the nodes ``0 .. N-2``: the symmetric-form vector."""
        return np.sqrt(self.grid.weights[:-1]) * self.zhat[:-1]

    def restricted_norm(self, r0: float) -> float:
        """``|zhat|_W`` over the nodes with ``r > r0``."""
        idx = self.grid.index_beyond(r0)
        return math.sqrt(float(np.dot(self.grid.weights[idx], self.zhat[idx] ** 2)))


def _require_unit_circle(g: RadialGrid):
    if g.is_whole_plane:
        raise ValueError("null solutions are defined on exterior grids")
    if g.r_inner != 1.0:
        raise ValueError(f"boundary symbols are normalized on the unit circle; grid has r_inner = {g.r_inner}")


def poisson_mode(m: int, g: RadialGrid, co: Coefficients, dirichlet: Optional[ModeMatrix] = None) -> ModeNullData:
    """Null solution with unit boundary value, plus ``P_m`` and ``Lambda_m``.

    ``dirichlet`` may pass an already factorized Dirichlet mode matrix of the
    same mode and grid.
    """
    _require_unit_circle(g)
    if co.order != 2:
        raise ValueError("poisson_mode is defined for order 2")
    m = _check_mode(m)
    raw = assemble_second_order(m, g, co)
    if dirichlet is None:
        dirichlet = apply_bc(raw, Dirichlet())
    elif dirichlet.m != m or dirichlet.grid is not g or not isinstance(dirichlet.spec, Dirichlet):
        raise ValueError("dirichlet matrix does not match mode/grid")
    # ab[1] is the diagonal, ab[2, 0] = S[1, 0] couples node 1 to the boundary node.
    d0 = raw.band[1, 0]
    s10 = raw.band[2, 0]
    rhs = np.zeros(dirichlet.size)
    rhs[0] = -s10
    inner = dirichlet.solve_stiffness(rhs)
    zhat = np.concatenate(([1.0], inner, [0.0]))
    P = -(d0 + s10 * zhat[1]) / g.nodes[0]
    Lam = float(np.dot(g.weights, zhat**2))
    return ModeNullData(m, zhat, float(P), Lam, g)


def l_from_T(t: TSpec, nd: ModeNullData) -> float:
    """``L_m = t_m Lambda_m``: the per-mode value of ``(gamma_Z^*)^-1 T gamma_Z^-1``."""
    return t[nd.m] * nd.Lambda


def c_from_L(L: BoundarySymbol, P: BoundarySymbol) -> BoundarySymbol:
    """``C = L + P``: the Neumann-type boundary symbol belonging to ``L``."""
    modes = _same_modes(L, P)
    return BoundarySymbol({m: L[m] + P[m] for m in modes}, order_hint=max(L.order_hint, P.order_hint))


def _check_pair(dirichlet: ModeMatrix, nd: ModeNullData, L_m: float):
    if not isinstance(dirichlet.spec, Dirichlet) or dirichlet.order != 2:
        raise ValueError("krein_inverse needs the order-2 Dirichlet realization")
    if dirichlet.m != nd.m:
        raise ValueError(f"mode mismatch: Dirichlet m={dirichlet.m}, null data m={nd.m}")
    if L_m == 0 or not math.isfinite(L_m):
        raise ValueError(f"L_m = {L_m}: the perturbed realization is not invertible")


def krein_inverse(m: int, dirichlet: ModeMatrix, nd: ModeNullData, L_m: float) -> np.ndarray:
    """Operator matrix of ``A1^-1 + K1 L^-1 K1^*`` on the nodes ``0 .. N-2``.

    ``A1^-1`` is padded with a zero row and column at the boundary node.
    The result is self-adjoint in the weighted inner product for real
    ``L_m``; :func:`krein_inverse_sym` returns its symmetric form directly.
    """
    if m != nd.m:
        raise ValueError(f"mode mismatch: m={m}, null data m={nd.m}")
    _check_pair(dirichlet, nd, L_m)
    n = dirichlet.size + 1
    w = nd.grid.weights[:n]
    out = np.zeros((n, n))
    out[1:, 1:] = dirichlet.solve_stiffness(np.diag(dirichlet.weights))
    z = nd.zhat[:n]
    out += np.outer(z, z * w) / L_m
    return out


def pad_boundary(a1_sym: np.ndarray) -> np.ndarray:
    """Zero-extend a matrix on the nodes ``1 .. N-2`` to ``0 .. N-2``."""
    n = a1_sym.shape[0] + 1
    out = np.zeros((n, n))
    out[1:, 1:] = a1_sym
    return out


def krein_inverse_sym(
    dirichlet: ModeMatrix, nd: ModeNullData, L_m: float, a1_sym: Optional[np.ndarray] = None
) -> np.ndarray:
    """Symmetric form ``W^(1/2) (A1^-1 + zhat zhat^T W / L) W^(-1/2)``.

    Pass ``a1_sym = inverse_sym(dirichlet)`` to reuse it across several ``L``.
    """
    _check_pair(dirichlet, nd, L_m)
    if a1_sym is None:
        a1_sym = inverse_sym(dirichlet)
    y = nd.y
    return pad_boundary(a1_sym) + np.outer(y, y) / L_m


def symmetric_form(op: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``W^(1/2) op W^(-1/2)``."""
    sw = np.sqrt(weights)
    return sw[:, None] * op / sw[None, :]


# --- biharmonic ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BiharmonicNullData:
    """Clamped inverse and boundary data of ``Delta_m**2 + 1`` in one mode.

    ``uhat`` is the null solution with ``u(1) = 0`` and ``u'(1) = 1`` on all
    grid nodes.  ``Pgc`` is the 2x2 map from the traces ``(u, u')`` to the
    conormal pair, ordered ``(gamma_0, gamma_1)``.  ``a1_sym`` is the
    symmetric form of the clamped inverse on the nodes ``1 .. N-2``.
    """

    m: int
    uhat: np.ndarray = field(repr=False)
    Pgc: np.ndarray
    Lambda: float
    a1_sym: np.ndarray = field(repr=False)
    grid: RadialGrid = field(repr=False)

    @property
    def Pgammachi(self) -> float:
        return float(self.Pgc[1, 1])

    @property
    def y(self) -> np.ndarray:
        return np.sqrt(self.grid.weights[1:-1]) * self.uhat[1:-1]


def biharmonic_null_data(m: int, g: RadialGrid) -> BiharmonicNullData:
    """Solve the two clamped null problems of ``Delta_m**2 + 1``.

    The stiffness ``B^T B`` with ``B = [F_u; W_u^(1/2)]`` is badly conditioned
    on graded meshes, so everything goes through a QR factorization of ``B``
    instead of the normal equations: null solutions are least-squares
    solutions and the trace-to-conormal map is a Gram matrix of residuals.
    """
    _require_unit_circle(g)
    m = _check_mode(m)
    n = g.size
    sw = np.sqrt(g.weights)
    F = sw[:, None] * discrete_laplacian(m, g)
    inner = slice(1, n - 1)
    B = np.vstack([F[:, inner], np.diag(sw[inner])])
    Q, R = qr(B, mode="economic")
    # Boundary columns: the trace u(1) (Laplacian and mass rows) and u'(1).
    cols = np.zeros((B.shape[0], 2))
    cols[:n, 0] = F[:, 0]
    cols[:n, 1] = boundary_flux_column(g)
    extra = np.array([sw[0], 0.0])  # mass row of the boundary node itself
    coef = Q.T @ cols
    resid = cols - Q @ coef
    schur = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            schur[i, j] = np.dot(resid[:, j], cols[:, i]) + extra[i] * extra[j]
    uhat_inner = -solve_triangular(R, coef[:, 1])
    uhat = np.concatenate(([0.0], uhat_inner, [0.0]))
    X = solve_triangular(R, np.diag(sw[inner]), trans="T")
    a1 = X.T @ X
    a1 = 0.5 * (a1 + a1.T)
    Lam = float(np.dot(g.weights, uhat**2))
    return BiharmonicNullData(m, uhat, -schur, Lam, a1, g)


def biharmonic_symbols(m: int, g: RadialGrid, g1: BoundarySymbol, data: Optional[BiharmonicNullData] = None):
    """``(L1_m, Pgammachi_m)`` with ``L1_m = G1_m - Pgammachi_m``."""
    if data is None:
        data = biharmonic_null_data(m, g)
    p = data.Pgammachi
    return g1[m] - p, p


def biharmonic_perturbed(g1: BoundarySymbol, L1: BoundarySymbol, Ltilde: BoundarySymbol) -> BoundarySymbol:
    """``G1tilde = G1 + L1tilde - L1``."""
    modes = _same_modes(g1, L1, Ltilde)
    for m in modes:
        if Ltilde[m] == 0:
            raise ValueError(f"L1tilde must be invertible; zero at mode {m}")
    return BoundarySymbol({m: g1[m] + Ltilde[m] - L1[m] for m in modes}, order_hint=g1.order_hint)


def biharmonic_krein_inverse_sym(data: BiharmonicNullData, L1_m: float) -> np.ndarray:
    """Symmetric form of ``A_gamma^-1 + uhat L1^-1 uhat^* `` on nodes ``1 .. N-2``.

    With ``L1_m = G_m - Pgammachi_m`` this is the inverse of the normal
    realization with boundary symbol ``G_m``.
    """
    if L1_m == 0 or not math.isfinite(L1_m):
        raise ValueError(f"L1_m = {L1_m}: the realization is not invertible")
    y = data.y
    return data.a1_sym + np.outer(y, y) / L1_m


def default_g1(kappa: float, modes: Iterable[int]) -> BoundarySymbol:
    """Self-adjoint first-order family ``G1_m = kappa (1 + m)``."""
    if not (math.isfinite(kappa) and kappa > 0):
        raise ValueError(f"kappa must be > 0, got {kappa}")
    return BoundarySymbol.from_function(lambda m: kappa * (1 + m), modes, order_hint=1)
