"""Dirichlet sine eigenbasis on intervals and rectangles.

Fields are stored as flat coefficient vectors in the canonical ordering of
the basis (eigenvalues nondecreasing, ties broken by mode index).  Nodal
values live on a tensor Gauss-Legendre grid; with ``grid_factor = K`` the
quadrature integrates trigonometric products of total degree ``K * N`` to
roundoff, so polynomial nonlinearities of degree ``K - 1`` are projected
without aliasing.  Uniform-grid rules are not used because products of
three sine-type factors are odd about the boundary and uniform rules do not
integrate them exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

#: extra Gauss points per direction on top of ``grid_factor * N``
QUAD_MARGIN = 16


class ValidationError(ValueError):
    """Raised when a specification or input violates a precondition."""


@dataclass(frozen=True)
class DomainSpec:
    """Interval ``(0, Lx)`` or rectangle ``(0, Lx) x (0, Ly)``."""

    dimension: int = 1
    Lx: float = math.pi
    Ly: float = math.pi
    Nx: int = 16
    Ny: int = 1
    grid_factor: float = 4.0

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValidationError(f"dimension must be 1 or 2, got {self.dimension}")
        if not (self.Lx > 0 and (self.dimension == 1 or self.Ly > 0)):
            raise ValidationError("domain lengths must be positive")
        if self.Nx < 1 or (self.dimension == 2 and self.Ny < 1):
            raise ValidationError("mode counts must be >= 1")
        if self.grid_factor < 1.5:
            raise ValidationError("grid_factor must be >= 3/2")

    @property
    def n_modes(self) -> int:
        return self.Nx if self.dimension == 1 else self.Nx * self.Ny

    @property
    def area(self) -> float:
        return self.Lx if self.dimension == 1 else self.Lx * self.Ly

    def quad_points(self, n: int) -> int:
        return int(math.ceil(self.grid_factor * n)) + QUAD_MARGIN

    def refined(self, factor: int = 2) -> "DomainSpec":
        """Same domain with ``factor`` times as many modes per direction."""
        ny = self.Ny * factor if self.dimension == 2 else 1
        return DomainSpec(self.dimension, self.Lx, self.Ly, self.Nx * factor, ny, self.grid_factor)


def _gauss(n: int, L: float):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * L * (x + 1.0), 0.5 * L * w


def _sine_tables(k: np.ndarray, x: np.ndarray, L: float):
    """Normalized sine modes and their first/second derivatives at ``x``."""
    q = k * np.pi / L
    arg = np.outer(x, q)
    s = math.sqrt(2.0 / L) * np.sin(arg)
    c = math.sqrt(2.0 / L) * np.cos(arg) * q
    return s, c, -s * q**2


@dataclass(eq=False)
class ModalBasis:
    """Eigenpairs of ``-Laplacian`` with zero Dirichlet data plus quadrature.

    Attributes
    ----------
    eigenvalues : ndarray
        ``lambda_k`` in canonical order.
    jx, ly : ndarray
        Mode indices (``ly`` is all ones in 1D).
    """

    domain: DomainSpec
    eigenvalues: np.ndarray = field(init=False)
    jx: np.ndarray = field(init=False)
    ly: np.ndarray = field(init=False)

    def __post_init__(self):
        d = self.domain
        if d.dimension == 1:
            j = np.arange(1, d.Nx + 1)
            l = np.ones_like(j)
            lam = (j * np.pi / d.Lx) ** 2
        else:
            J, Lm = np.meshgrid(np.arange(1, d.Nx + 1), np.arange(1, d.Ny + 1), indexing="ij")
            j, l = J.ravel(), Lm.ravel()
            lam = (j * np.pi / d.Lx) ** 2 + (l * np.pi / d.Ly) ** 2
        order = np.lexsort((l, j, lam))
        self.jx, self.ly = j[order], l[order]
        self.eigenvalues = lam[order]
        for arr in (self.jx, self.ly, self.eigenvalues):
            arr.setflags(write=False)

        self.x, self.wx = _gauss(d.quad_points(d.Nx), d.Lx)
        self.Sx, self.Dx, self.D2x = _sine_tables(np.arange(1, d.Nx + 1), self.x, d.Lx)
        if d.dimension == 2:
            self.y, self.wy = _gauss(d.quad_points(d.Ny), d.Ly)
            self.Sy, self.Dy, self.D2y = _sine_tables(np.arange(1, d.Ny + 1), self.y, d.Ly)
            self.weights = np.outer(self.wx, self.wy)
        else:
            self.weights = self.wx
        self._xtab = {0: self.Sx, 1: self.Dx, 2: self.D2x}
        if d.dimension == 2:
            self._ytab = {0: self.Sy, 1: self.Dy, 2: self.D2y}

    # -- layout -------------------------------------------------------------
    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def size(self) -> int:
        return self.eigenvalues.size

    @property
    def grid_shape(self) -> tuple:
        if self.dimension == 1:
            return (self.x.size,)
        return (self.x.size, self.y.size)

    def _to_matrix(self, c: np.ndarray) -> np.ndarray:
        m = np.zeros((self.domain.Nx, self.domain.Ny))
        m[self.jx - 1, self.ly - 1] = c
        return m

    def _check(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        if c.shape != (self.size,):
            raise ValidationError(f"expected {self.size} coefficients, got shape {c.shape}")
        return c

    def mode(self, j: int, l: int = 1) -> np.ndarray:
        """Unit coefficient vector of mode ``(j, l)``."""
        hit = np.flatnonzero((self.jx == j) & (self.ly == l))
        if hit.size == 0:
            raise ValidationError(f"mode ({j}, {l}) not in basis")
        c = np.zeros(self.size)
        c[hit[0]] = 1.0
        return c

    def index(self, j: int, l: int = 1) -> int:
        return int(np.flatnonzero(self.mode(j, l))[0])

    # -- transforms ---------------------------------------------------------
    def to_grid(self, c, dx: int = 0, dy: int = 0) -> np.ndarray:
        """Nodal values of ``d^dx/dx d^dy/dy u`` on the quadrature grid."""
        c = self._check(c)
        if self.dimension == 1:
            return self._xtab[dx] @ c
        return self._xtab[dx] @ self._to_matrix(c) @ self._ytab[dy].T

    def project(self, g, dx: int = 0, dy: int = 0) -> np.ndarray:
        """Quadrature inner products ``(g, d^dx d^dy e_k)`` for every mode."""
        g = np.asarray(g, dtype=float)
        if self.dimension == 1:
            return self._xtab[dx].T @ (self.wx * g)
        m = self._xtab[dx].T @ (g * self.weights) @ self._ytab[dy]
        return m[self.jx - 1, self.ly - 1]

    def to_modal(self, g) -> np.ndarray:
        return self.project(g)

    def integrate(self, g) -> float:
        return float(np.sum(np.asarray(g) * self.weights))

    def gradient(self, c):
        """Grid values of the gradient components (one array in 1D)."""
        if self.dimension == 1:
            return (self.to_grid(c, 1),)
        return self.to_grid(c, 1, 0), self.to_grid(c, 0, 1)

    def project_gradient(self, comps) -> np.ndarray:
        """``(G, grad e_k)`` for a grid vector field ``G``."""
        if self.dimension == 1:
            return self.project(comps[0], 1)
        return self.project(comps[0], 1, 0) + self.project(comps[1], 0, 1)

    def evaluate(self, c, points) -> np.ndarray:
        """Point values of the sine series at arbitrary ``points``."""
        c = self._check(c)
        d = self.domain
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if d.dimension == 1:
            pts = pts.reshape(-1, 1)
        vals = math.sqrt(2.0 / d.Lx) * np.sin(np.outer(pts[:, 0], self.jx * np.pi / d.Lx))
        if d.dimension == 2:
            vals = vals * math.sqrt(2.0 / d.Ly) * np.sin(np.outer(pts[:, 1], self.ly * np.pi / d.Ly))
        return vals @ c

    # -- operators ----------------------------------------------------------
    def neg_laplacian(self, c) -> np.ndarray:
        return self.eigenvalues * self._check(c)

    def bilaplacian(self, c) -> np.ndarray:
        return self.eigenvalues * (self.eigenvalues * self._check(c))

    def biharmonic_inverse(self, f) -> np.ndarray:
        """Solve ``Laplacian^2 z = f`` with hinged (u = Laplacian u = 0) data."""
        return self._check(f) / self.eigenvalues**2

    def sobolev_norm(self, c, s: float) -> float:
        """Spectral ``H^s`` norm ``(sum lambda_k^s c_k^2)^(1/2)``."""
        if not -2.0 <= s <= 4.0:
            raise ValidationError(f"Sobolev order {s} outside [-2, 4]")
        c = self._check(c)
        return float(np.sqrt(np.sum(self.eigenvalues**s * c * c)))

    def project_low(self, c, N: int) -> np.ndarray:
        """Zero every coefficient beyond canonical rank ``N``."""
        c = self._check(c)
        if not 1 <= N <= self.size:
            raise ValidationError(f"projection rank {N} outside [1, {self.size}]")
        out = c.copy()
        out[N:] = 0.0
        return out


def build_basis(domain: DomainSpec) -> ModalBasis:
    return ModalBasis(domain)


def verify_log_projection(trials: int, N_ladder, seed=0, domain: DomainSpec | None = None) -> dict:
    """Growth of ``max |P_N f| / ||f||_1`` against ``log(1 + lambda_N)``.

    Each trial draws a random centre ``x0`` and uses the ``H^1``-Riesz
    representer of point evaluation at ``x0`` restricted to the first ``N``
    modes, ``f = sum_k e_k(x0) e_k / lambda_k``.  This is the worst case of
    ``|P_N f(x0)|`` over ``||f||_1 = 1``, so the maximum over trials tracks
    the sharp constant.  A few random smooth fields are mixed in as well.
    The exponent ``beta`` is the least-squares slope of ``log ratio``
    against ``log log(1 + lambda_N)``.
    """
    N_ladder = sorted(int(n) for n in N_ladder)
    if trials <= 0:
        return {"N": N_ladder, "ratios": [], "beta": None}
    if domain is None:
        side = int(math.ceil(math.sqrt(4 * max(N_ladder))))
        domain = DomainSpec(2, math.pi, math.pi, side, side, grid_factor=2.0)
    if domain.dimension != 2:
        raise ValidationError("verify_log_projection needs a 2D domain")
    basis = build_basis(domain)
    rng = np.random.default_rng(seed)
    lam = basis.eigenvalues
    centres = rng.uniform(0.05, 0.95, size=(trials, 2)) * [domain.Lx, domain.Ly]
    point_vals = math.sqrt(4.0 / domain.area) * (
        np.sin(np.outer(centres[:, 0], basis.jx * np.pi / domain.Lx))
        * np.sin(np.outer(centres[:, 1], basis.ly * np.pi / domain.Ly))
    )
    n_smooth = max(1, trials // 10)
    smooth = rng.standard_normal((n_smooth, basis.size)) / lam**1.5

    ratios = []
    for N in N_ladder:
        best = 0.0
        for k in range(trials):
            f = np.zeros(basis.size)
            f[:N] = point_vals[k, :N] / lam[:N]
            f /= basis.sobolev_norm(f, 1.0)
            best = max(best, abs(f[:N] @ point_vals[k, :N]))
        for f in smooth:
            f = f / basis.sobolev_norm(f, 1.0)
            best = max(best, np.max(np.abs(basis.to_grid(basis.project_low(f, N)))))
        ratios.append(best)
    x = np.log(np.log1p(lam[np.array(N_ladder) - 1]))
    beta = float(np.polyfit(x, np.log(ratios), 1)[0]) if len(N_ladder) > 1 else None
    return {"N": N_ladder, "ratios": ratios, "beta": beta}
