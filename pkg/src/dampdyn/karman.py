"""Von Karman bracket, Airy stress function and the two plate lemmas.

For sine-series fields every term of the bracket ``[u, w]`` is a product of
two functions that are both sine-sine or both cosine-cosine, so ``[u, w]``
is exactly a double cosine series of degree ``2N``.  We compute those
coefficients with a type-I DCT on an endpoint-inclusive uniform grid (exact
for that degree) and project onto the sine basis with the closed-form
integrals of ``cos * sin``.  No quadrature error enters, which keeps the
trilinear symmetry ``([u, v], w) = ([u, w], v)`` and the plate energy
identity exact in the Galerkin system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dct

from .spectral import DomainSpec, ModalBasis, ValidationError, build_basis


def _cos_sin_matrix(n_sine: int, n_cos: int, L: float) -> np.ndarray:
    """``I[j-1, n] = int_0^L sqrt(2/L) sin(j pi x/L) cos(n pi x/L) dx``."""
    j = np.arange(1, n_sine + 1)[:, None].astype(float)
    n = np.arange(0, n_cos + 1)[None, :].astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = j * (1.0 - (-1.0) ** (j + n)) / (j * j - n * n)
    val[j == n] = 0.0
    return math.sqrt(2.0 / L) * (L / np.pi) * val


def _uniform_tables(N: int, M: int, L: float):
    """sin/cos derivative tables of the normalized modes on ``x_i = i L/M``."""
    x = np.linspace(0.0, L, M + 1)
    q = np.arange(1, N + 1) * np.pi / L
    arg = np.outer(x, q)
    s = math.sqrt(2.0 / L) * np.sin(arg)
    c = math.sqrt(2.0 / L) * np.cos(arg)
    return {0: s, 1: c * q, 2: -s * q**2}


@lru_cache(maxsize=16)
def _tables(domain: DomainSpec):
    Mx, My = 2 * domain.Nx, 2 * domain.Ny
    return (
        _uniform_tables(domain.Nx, Mx, domain.Lx),
        _uniform_tables(domain.Ny, My, domain.Ly),
        _cos_sin_matrix(domain.Nx, Mx, domain.Lx),
        _cos_sin_matrix(domain.Ny, My, domain.Ly),
    )


def _dct_coeffs(values: np.ndarray) -> np.ndarray:
    """Exact cosine coefficients of grid values on an endpoint grid."""
    a = dct(dct(values, type=1, axis=0), type=1, axis=1)
    Mx, My = values.shape[0] - 1, values.shape[1] - 1
    a /= Mx * My
    a[0, :] *= 0.5
    a[-1, :] *= 0.5
    a[:, 0] *= 0.5
    a[:, -1] *= 0.5
    return a


@dataclass(frozen=True)
class CosineField:
    """``sum_{n,m} A[n, m] cos(n pi x/Lx) cos(m pi y/Ly)``."""

    coeffs: np.ndarray
    Lx: float
    Ly: float

    def __call__(self, x, y) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        n = np.arange(self.coeffs.shape[0])
        m = np.arange(self.coeffs.shape[1])
        cx = np.cos(np.outer(x, n) * np.pi / self.Lx)
        cy = np.cos(np.outer(y, m) * np.pi / self.Ly)
        return np.einsum("pn,nm,pm->p", cx, self.coeffs, cy)

    def l2_norm(self) -> float:
        w_n = np.where(np.arange(self.coeffs.shape[0]) == 0, 1.0, 0.5)
        w_m = np.where(np.arange(self.coeffs.shape[1]) == 0, 1.0, 0.5)
        return float(np.sqrt(self.Lx * self.Ly * np.sum(np.outer(w_n, w_m) * self.coeffs**2)))


def _require_2d(basis: ModalBasis):
    if basis.dimension != 2:
        raise ValidationError("the von Karman bracket needs a 2D domain")


def bracket_field(basis: ModalBasis, u, w) -> CosineField:
    """``[u, w] = u_xx w_yy + u_yy w_xx - 2 u_xy w_xy`` as an exact cosine series."""
    _require_2d(basis)
    tx, ty, _, _ = _tables(basis.domain)
    U = basis._to_matrix(basis._check(u))
    W = basis._to_matrix(basis._check(w))

    def d(C, a, b):
        return tx[a] @ C @ ty[b].T

    vals = d(U, 2, 0) * d(W, 0, 2) + d(U, 0, 2) * d(W, 2, 0) - 2.0 * d(U, 1, 1) * d(W, 1, 1)
    return CosineField(_dct_coeffs(vals), basis.domain.Lx, basis.domain.Ly)


def to_sine(basis: ModalBasis, field: CosineField) -> np.ndarray:
    """Exact L2 projection of a cosine series onto the sine basis."""
    _, _, Ix, Iy = _tables(basis.domain)
    m = Ix @ field.coeffs @ Iy.T
    return m[basis.jx - 1, basis.ly - 1]


def vk_bracket(basis: ModalBasis, u, w) -> np.ndarray:
    """Sine-mode coefficients of ``[u, w]`` (Galerkin projection)."""
    return to_sine(basis, bracket_field(basis, u, w))


def airy_stress(basis: ModalBasis, w) -> np.ndarray:
    """Airy function ``F`` with ``Laplacian^2 F = -[w, w]`` (hinged data)."""
    return basis.biharmonic_inverse(-vk_bracket(basis, w, w))


def _w2inf(basis: ModalBasis, z, n_eval: int = 129) -> float:
    """Max over a uniform grid of ``|z|``, first and second derivatives."""
    d = basis.domain
    tx = _uniform_tables(d.Nx, n_eval - 1, d.Lx)
    ty = _uniform_tables(d.Ny, n_eval - 1, d.Ly)
    Z = basis._to_matrix(z)
    best = 0.0
    for a, b in [(0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1)]:
        best = max(best, float(np.max(np.abs(tx[a] @ Z @ ty[b].T))))
    return best


def hidden_regularity_ratio(trials: int, seed=0, domain: DomainSpec | None = None) -> dict:
    """Sup of ``||Delta^-2 [u, v]||_{W^{2,inf}} / (||u||_2 ||v||_2)`` at N and 2N.

    The same random low-mode content is used at both resolutions; the fine
    basis adds higher modes with the same spectral decay.
    """
    if domain is None:
        domain = DomainSpec(2, 1.0, 1.0, 16, 16)
    coarse, fine = build_basis(domain), build_basis(domain.refined(2))
    out = {"N": [domain.Nx, 2 * domain.Nx], "sup_ratio": [0.0, 0.0]}
    if trials <= 0:
        return out
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        raw = rng.standard_normal((2, fine.size))
        for slot, basis in enumerate((coarse, fine)):
            pair = []
            for r in raw:
                c = _lift(fine, basis, r) / basis.eigenvalues**2.5
                n2 = basis.sobolev_norm(c, 2.0)
                pair.append(c / n2 if n2 > 0 else c)
            z = basis.biharmonic_inverse(vk_bracket(basis, *pair))
            out["sup_ratio"][slot] = max(out["sup_ratio"][slot], _w2inf(basis, z))
    return out


def _lift(fine: ModalBasis, basis: ModalBasis, r: np.ndarray) -> np.ndarray:
    """Restrict a random vector indexed by the fine basis to ``basis`` modes."""
    if basis is fine:
        return r.copy()
    key = {(j, l): i for i, (j, l) in enumerate(zip(fine.jx, fine.ly))}
    return np.array([r[key[(j, l)]] for j, l in zip(basis.jx, basis.ly)])


def pair_ratio(basis: ModalBasis, u, v) -> float:
    """Hidden-regularity ratio for one pair; 0 when either field vanishes."""
    nu, nv = basis.sobolev_norm(u, 2.0), basis.sobolev_norm(v, 2.0)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    z = basis.biharmonic_inverse(vk_bracket(basis, u, v))
    return _w2inf(basis, z) / (nu * nv)


def low_freq_control_check(eps: float, trials: int, seed=0, domain: DomainSpec | None = None,
                           fields=None) -> float:
    """Smallest ``M`` with ``||u||^2 <= eps (||Lap u||^2 + ||Lap F(u)||^2) + M`` over trials.

    Random fields span amplitudes from 1e-2 to 1e2 so that both the linear
    and the quartic Airy term are exercised.  Explicit ``fields`` replace
    the random draws.
    """
    if eps <= 0:
        raise ValidationError("eps must be positive")
    if domain is None:
        domain = DomainSpec(2, Nx=8, Ny=8)
    basis = build_basis(domain)
    if fields is None:
        rng = np.random.default_rng(seed)
        fields = []
        for amp in np.logspace(-2, 2, max(trials, 0)):
            c = rng.standard_normal(basis.size) / basis.eigenvalues**1.5
            fields.append(amp * c / np.linalg.norm(c))
    lam = basis.eigenvalues
    M = 0.0
    for u in fields:
        F = airy_stress(basis, u)
        lhs = float(u @ u)
        rhs = eps * (float(np.sum(lam**2 * u * u)) + float(np.sum(lam**2 * F * F)))
        M = max(M, lhs - rhs)
    return M
