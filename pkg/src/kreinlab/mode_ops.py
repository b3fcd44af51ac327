"""Per-Fourier-mode radial operators and their boundary realizations.

Order 2 is ``A = -Delta + c0``; in mode ``m`` the radial form is
``-(1/r)(r u')' + (m**2/r**2 + c0) u``.  It is assembled in flux form on the
cells of a :class:`~kreinlab.grid.RadialGrid`: with ``W = diag(weights)`` the
discrete operator is ``W^-1 S`` for a symmetric tridiagonal stiffness ``S``.

Order 4 is ``A = Delta**2 + 1`` on an exterior grid.  With the discrete mode
Laplacian ``L`` (``W L`` symmetric) the stiffness is ``S = F^T F + W`` where
``F = W^(1/2) L``.  The first-order trace ``u'(1)`` enters ``L`` as an extra
boundary unknown, which the biharmonic realizations either clamp or
eliminate against the normal condition.

The conormal derivative at the obstacle is ``+d/dr`` at ``r = r_inner``.  The
outermost node always carries a homogeneous Dirichlet condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded, lapack
from scipy.sparse.linalg import splu

from .grid import RadialGrid

if TYPE_CHECKING:
    from .krein import BoundarySymbol

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class Coefficients:
    """Constant coefficients: ``-Delta + c0`` (order 2) or ``Delta**2 + c0`` (order 4)."""

    order: int = 2
    c0: float = 1.0

    def __post_init__(self):
        if self.order not in (2, 4):
            raise ValueError(f"order must be 2 or 4, got {self.order}")
        if not (math.isfinite(self.c0) and self.c0 > 0):
            raise ValueError(f"c0 must be finite and > 0, got {self.c0}")


# --- realization specs -----------------------------------------------------


def _check_real(name: str, value) -> float:
    if isinstance(value, complex) or np.iscomplexobj(value):
        raise ValueError(f"{name} must be real, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    return value


@dataclass(frozen=True)
class Dirichlet:
    order = 2

    def __str__(self):
        return "Dirichlet"


@dataclass(frozen=True)
class Neumann:
    order = 2

    def __str__(self):
        return "Neumann"


@dataclass(frozen=True)
class Robin:
    """``u'(1) = b u(1)``."""

    b: float
    order = 2

    def __post_init__(self):
        object.__setattr__(self, "b", _check_real("Robin b", self.b))

    def __str__(self):
        return f"Robin({self.b:g})"


@dataclass(frozen=True)
class NeumannType:
    """``u'(1) = C_m u(1)`` with a mode-diagonal boundary symbol ``C``."""

    C: "BoundarySymbol"
    order = 2

    def __str__(self):
        return "NeumannType"


@dataclass(frozen=True)
class BiharmonicNormal:
    """``u(1) = 0`` and ``(Delta_m u)(1) = G1_m u'(1)``."""

    G1: "BoundarySymbol"
    order = 4

    def __str__(self):
        return "BiharmonicNormal"


@dataclass(frozen=True)
class BiharmonicPerturbed:
    """Same boundary form as :class:`BiharmonicNormal` with a perturbed ``G1``."""

    G1tilde: "BoundarySymbol"
    order = 4

    def __str__(self):
        return "BiharmonicPerturbed"


RealizationSpec = Union[Dirichlet, Neumann, Robin, NeumannType, BiharmonicNormal, BiharmonicPerturbed]


def _symbol_value(sym, m: int, what: str) -> float:
    try:
        v = sym[m]
    except KeyError:
        raise ValueError(f"{what} symbol has no value for mode {m}") from None
    return _check_real(f"{what}[{m}]", v)


# --- banded storage --------------------------------------------------------


def band_from_dense(S: np.ndarray, bw: int) -> np.ndarray:
    """Full-band layout of ``scipy.linalg.solve_banded``: ``ab[bw + i - j, j] = S[i, j]``."""
    n = S.shape[0]
    ab = np.zeros((2 * bw + 1, n))
    for k in range(-bw, bw + 1):
        diag = np.diagonal(S, k)
        if k >= 0:
            ab[bw - k, k:] = diag
        else:
            ab[bw - k, : n + k] = diag
    return ab


def dense_from_band(ab: np.ndarray, bw: int) -> np.ndarray:
    n = ab.shape[1]
    S = np.zeros((n, n))
    for k in range(-bw, bw + 1):
        if k >= 0:
            S += np.diag(ab[bw - k, k:], k)
        else:
            S += np.diag(ab[bw - k, : n + k], k)
    return S


def _tridiag_band(d: np.ndarray, o_up: np.ndarray, o_lo: Optional[np.ndarray] = None) -> np.ndarray:
    o_lo = o_up if o_lo is None else o_lo
    ab = np.zeros((3, len(d)))
    ab[0, 1:] = o_up
    ab[1] = d
    ab[2, :-1] = o_lo
    return ab


# --- the mode matrix -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ModeMatrix:
    """Discrete mode operator ``W^-1 S`` on the unknowns ``dofs``.

    ``band`` holds the stiffness ``S`` in full-band layout.  ``flux`` is set
    for order-4 operators whose stiffness factors as ``F^T F + W``; it feeds
    the accurate singular-value path in :func:`kreinlab.spectra.eigs_sym`.
    ``definite`` records that the realization is positive by construction, so
    a failed Cholesky factorization is an error rather than a fallback.
    """

    m: int
    grid: RadialGrid
    order: int
    band: np.ndarray
    bandwidth: int
    dofs: np.ndarray
    spec: Optional[RealizationSpec] = None
    flux: Optional[np.ndarray] = field(default=None, repr=False)
    definite: bool = False

    @property
    def size(self) -> int:
        return len(self.dofs)

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights[self.dofs]

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes[self.dofs]

    @property
    def stiffness(self) -> np.ndarray:
        return dense_from_band(self.band, self.bandwidth)

    @property
    def matrix(self) -> np.ndarray:
        """Dense operator matrix ``W^-1 S``."""
        return self.stiffness / self.weights[:, None]

    def apply(self, u: np.ndarray) -> np.ndarray:
        """``W^-1 S u`` without forming a dense matrix."""
        u = np.asarray(u, dtype=float)
        bw = self.bandwidth
        n = self.size
        out = np.zeros(n)
        for k in range(-bw, bw + 1):
            if k >= 0:
                out[: n - k] += self.band[bw - k, k:] * u[k:]
            else:
                out[-k:] += self.band[bw - k, : n + k] * u[: n + k]
        return out / self.weights

    def symmetry_error(self) -> float:
        """``|B - B^T| / |M|`` with ``B = W^(1/2) M W^(-1/2)`` (Frobenius norms)."""
        M = self.matrix
        sw = np.sqrt(self.weights)
        B = sw[:, None] * M / sw[None, :]
        return float(np.linalg.norm(B - B.T) / np.linalg.norm(M))

    def embed(self, u: np.ndarray) -> np.ndarray:
        """Zero-extend a vector on the unknowns to all grid nodes."""
        out = np.zeros(self.grid.size)
        out[self.dofs] = u
        return out

    @cached_property
    def _factor(self):
        bw = self.bandwidth
        if bw == 1:
            d = self.band[1]
            e = self.band[0, 1:]
            df, ef, info = lapack.dpttrf(d, e)
            if info == 0:
                return "pt", (df, ef)
        else:
            try:
                return "chol", cholesky_banded(self.band[: bw + 1], lower=False)
            except LinAlgError:
                pass
        if self.definite:
            raise LinAlgError(
                f"Cholesky factorization failed for a realization that should be positive "
                f"(mode {self.m}, {self.spec}); the realization is mis-specified"
            )
        if bw == 1:
            dl, d, du, du2, ipiv, info = lapack.dgttrf(self.band[2, :-1], self.band[1], self.band[0, 1:])
            if info != 0:
                raise LinAlgError(f"singular mode matrix (mode {self.m}, {self.spec})")
            return "gt", (dl, d, du, du2, ipiv)
        S = sp.diags(
            [self.band[bw - k, max(k, 0) : self.size + min(k, 0)] for k in range(-bw, bw + 1)],
            list(range(-bw, bw + 1)),
            format="csc",
        )
        try:
            return "lu", splu(S)
        except RuntimeError as exc:
            raise LinAlgError(f"singular mode matrix (mode {self.m}, {self.spec}): {exc}") from None

    def solve_stiffness(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``S x = rhs`` for one or several right-hand sides."""
        kind, fac = self._factor
        rhs = np.asarray(rhs, dtype=float)
        if kind == "pt":
            x, info = lapack.dpttrs(*fac, rhs)
        elif kind == "gt":
            x, info = lapack.dgttrs(*fac, rhs)
        elif kind == "chol":
            return cho_solve_banded((fac, False), rhs, check_finite=False)
        else:
            return fac.solve(rhs)
        if info != 0:
            raise LinAlgError(f"tridiagonal solve failed with info={info}")
        return x


# --- assembly --------------------------------------------------------------


def _flux_coefficients(g: RadialGrid) -> np.ndarray:
    """Face conductances ``r_(i+1/2) / h_i``."""
    r = g.nodes
    return 0.5 * (r[1:] + r[:-1]) / np.diff(r)


def _stiffness_second_order(g: RadialGrid, m: int, c0: float):
    a = _flux_coefficients(g)
    r = g.nodes
    d = np.zeros(g.size)
    d[:-1] += a
    d[1:] += a
    d += g.weights * (c0 + m * m / r**2)
    return d, -a


def _check_mode(m) -> int:
    if int(m) != m or m < 0:
        raise ValueError(f"mode index must be a non-negative integer, got {m}")
    return int(m)


def assemble_second_order(m: int, g: RadialGrid, co: Coefficients) -> ModeMatrix:
    """Raw flux-form discretization of ``-(1/r)(r u')' + (m^2/r^2 + c0) u``.

    Every node is an unknown and both end rows carry zero flux across the
    outer cell faces, so :func:`apply_bc` only has to modify or drop them.
    """
    if co.order != 2:
        raise ValueError(f"assemble_second_order needs order 2 coefficients, got order {co.order}")
    m = _check_mode(m)
    d, o = _stiffness_second_order(g, m, co.c0)
    return ModeMatrix(m, g, 2, _tridiag_band(d, o), 1, np.arange(g.size))


def discrete_laplacian(m: int, g: RadialGrid) -> np.ndarray:
    """Dense flux-form ``Delta_m`` on all nodes with zero end fluxes.

    ``W @ discrete_laplacian`` is symmetric.  The flux through the inner face
    ``r = r_inner`` is absent; realizations add it through the boundary
    unknown ``u'(r_inner)`` (see :func:`boundary_flux_column`).
    """
    a = _flux_coefficients(g)
    K = np.diag(np.r_[a, 0.0] + np.r_[0.0, a]) - np.diag(a, 1) - np.diag(a, -1)
    return -K / g.weights[:, None] - np.diag(m * m / g.nodes**2)


def boundary_flux_column(g: RadialGrid) -> np.ndarray:
    """Column of ``W^(1/2) Delta_m`` multiplying ``u'(r_inner)``."""
    col = np.zeros(g.size)
    col[0] = -g.nodes[0] / math.sqrt(g.weights[0])
    return col


def assemble_biharmonic(m: int, g: RadialGrid) -> ModeMatrix:
    """Raw discretization of ``(Delta_m)**2 + 1`` as ``W^-1 (F^T F + W)``."""
    if g.is_whole_plane:
        raise ValueError("assemble_biharmonic needs an exterior grid")
    m = _check_mode(m)
    F = np.sqrt(g.weights)[:, None] * discrete_laplacian(m, g)
    S = F.T @ F + np.diag(g.weights)
    return ModeMatrix(m, g, 4, band_from_dense(S, 2), 2, np.arange(g.size), flux=F)


def apply_bc(raw: ModeMatrix, spec: RealizationSpec) -> ModeMatrix:
    """Impose a realization on a raw mode matrix.

    Order 2: ``Dirichlet`` drops the boundary node; ``Neumann``, ``Robin(b)``
    and ``NeumannType(C)`` keep the half-cell flux balance at ``r_inner``
    and add ``b r_inner`` (resp. ``C_m r_inner``) to its diagonal, which is
    the symmetric form of ``u'(r_inner) = b u(r_inner)``.

    Order 4: ``Dirichlet`` clamps ``u = u' = 0``; the normal realizations
    set ``u = 0`` and eliminate ``u'`` against ``Delta_m u = G_m u'``.
    """
    if raw.spec is not None or raw.size != raw.grid.size:
        raise ValueError("apply_bc expects a raw mode matrix")
    if getattr(spec, "order", None) is not None and not isinstance(spec, Dirichlet) and spec.order != raw.order:
        raise ValueError(f"{spec} does not apply to an order-{raw.order} operator")
    if raw.order == 2:
        return _bc_second_order(raw, spec)
    return _bc_biharmonic(raw, spec)


def _bc_second_order(raw: ModeMatrix, spec) -> ModeMatrix:
    g = raw.grid
    n = g.size
    if g.is_whole_plane:
        raise ValueError("boundary realizations need an exterior grid; use whole_plane_operator")
    r0 = g.nodes[0]
    ab = raw.band
    if isinstance(spec, Dirichlet):
        band = ab[:, 1 : n - 1].copy()
        band[0, 0] = 0.0
        band[2, -1] = 0.0
        return ModeMatrix(raw.m, g, 2, band, 1, np.arange(1, n - 1), spec, definite=True)
    if isinstance(spec, Neumann):
        beta, definite = 0.0, True
    elif isinstance(spec, Robin):
        beta, definite = spec.b, spec.b >= 0
    elif isinstance(spec, NeumannType):
        beta, definite = _symbol_value(spec.C, raw.m, "C"), False
    else:
        raise ValueError(f"{spec} is not an order-2 realization")
    band = ab[:, : n - 1].copy()
    band[2, -1] = 0.0
    band[1, 0] += beta * r0
    return ModeMatrix(raw.m, g, 2, band, 1, np.arange(n - 1), spec, definite=definite)


def _bc_biharmonic(raw: ModeMatrix, spec) -> ModeMatrix:
    g = raw.grid
    n = g.size
    keep = np.arange(1, n - 1)
    Fu = raw.flux[:, keep]
    Wu = np.diag(g.weights[keep])
    if isinstance(spec, Dirichlet):
        S = Fu.T @ Fu + Wu
        return ModeMatrix(raw.m, g, 4, band_from_dense(S, 2), 2, keep, spec, flux=Fu, definite=True)
    if isinstance(spec, BiharmonicNormal):
        G = _symbol_value(spec.G1, raw.m, "G1")
    elif isinstance(spec, BiharmonicPerturbed):
        G = _symbol_value(spec.G1tilde, raw.m, "G1tilde")
    else:
        raise ValueError(f"{spec} is not an order-4 realization")
    c2 = g.nodes[0] ** 2 / g.weights[0]
    if c2 + G == 0:
        raise ValueError(f"G = {G} makes the eliminated boundary unknown undetermined")
    # Eliminating u' from the row-0 residual (F0 u - c u')**2 + G u'**2 scales
    # that row by sqrt(G / (c**2 + G)).
    scale = G / (c2 + G)
    S = Fu.T @ Fu + Wu
    f0 = Fu[0]
    S = S - (1.0 - scale) * np.outer(f0, f0)
    flux = None
    if scale >= 0:
        flux = Fu.copy()
        flux[0] *= math.sqrt(scale)
    definite = isinstance(spec, BiharmonicNormal) and G >= 0
    return ModeMatrix(raw.m, g, 4, band_from_dense(S, 2), 2, keep, spec, flux=flux, definite=definite)


def realization(m: int, g: RadialGrid, co: Coefficients, spec: RealizationSpec) -> ModeMatrix:
    """Assemble and impose ``spec`` in one call."""
    raw = assemble_second_order(m, g, co) if co.order == 2 else assemble_biharmonic(m, g)
    return apply_bc(raw, spec)


def whole_plane_operator(m: int, g: RadialGrid, co: Coefficients) -> ModeMatrix:
    """Mode operator of ``-Delta + c0`` on ``[0, R]`` with far Dirichlet.

    The origin needs no boundary row: the innermost cell extends to ``r = 0``
    where the face measure vanishes, so the stencil is regular for ``m = 0``
    and the ``m**2 / r**2`` term drives ``u(0) -> 0`` for ``m >= 1``.
    """
    if not g.is_whole_plane:
        raise ValueError("whole_plane_operator needs a grid with r_inner = 0")
    if co.order != 2:
        raise ValueError("whole_plane_operator is defined for order 2 only")
    raw = assemble_second_order(m, g, co)
    n = g.size
    band = raw.band[:, : n - 1].copy()
    band[2, -1] = 0.0
    return ModeMatrix(raw.m, g, 2, band, 1, np.arange(n - 1), None, definite=True)


# --- solvers ---------------------------------------------------------------


def solve(mm: ModeMatrix, f: np.ndarray) -> np.ndarray:
    """Solve ``W^-1 S u = f`` on the unknowns of ``mm``.

    The banded factorization is computed once per :class:`ModeMatrix` and
    reused.  Positive realizations use Cholesky; others fall back to a sparse
    LU.  Raises ``LinAlgError`` on a singular or mis-specified operator.
    """
    f = np.asarray(f, dtype=float)
    if f.shape[0] != mm.size:
        raise ValueError(f"right-hand side has length {f.shape[0]}, expected {mm.size}")
    w = mm.weights if f.ndim == 1 else mm.weights[:, None]
    return mm.solve_stiffness(w * f)


def inverse(mm: ModeMatrix) -> np.ndarray:
    """Dense operator inverse ``S^-1 W``."""
    return mm.solve_stiffness(np.diag(mm.weights))


def inverse_sym(mm: ModeMatrix) -> np.ndarray:
    """Symmetric form ``W^(1/2) S^-1 W^(1/2)`` of the inverse."""
    sw = np.sqrt(mm.weights)
    X = mm.solve_stiffness(np.diag(sw))
    X *= sw[:, None]
    return X
