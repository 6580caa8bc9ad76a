"""The four damped hyperbolic models in modal (Galerkin) coordinates.

Every model exposes the same small surface used by the integrator and the
analysis modules:

``force(u, v)``
    ``M u_tt`` for the Galerkin system (mass ``M`` is diagonal).
``energy(u, v)``, ``damping_power(u, v)``, ``work_rate(u, v)``
    so that ``dE/dt = -damping_power + work_rate`` along exact solutions.
``phase_norm(u, v)``
    norm of the natural phase space.
``linear_diagonals(u)``
    diagonal mass/stiffness/damping used to precondition implicit solves.

Nonlinear terms are evaluated on the Gauss grid of the basis and projected
back with the same rule, so each discrete force is exactly the gradient of
the discrete potential it is paired with.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import quad

from . import karman
from .spectral import DomainSpec, ModalBasis, ValidationError, build_basis

Coefficient = Union[float, Callable, np.ndarray]


# -- constitutive laws ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DampingLaw:
    """``g(s) = g1 s + power |s|^(m-1) s`` weighted by a coefficient ``a(x) >= 0``.

    ``power = 1`` reproduces the usual damping structure; ``power = 0`` gives
    purely linear damping.  ``a`` may be a scalar, a callable of the grid
    coordinates, or an array of grid values.
    """

    g1: float = 0.0
    m: float = 1.0
    power: float = 1.0
    a: Coefficient = 1.0

    def __post_init__(self):
        if self.m < 1:
            raise ValidationError(f"damping exponent m={self.m} must be >= 1")
        if self.g1 < 0 or self.power < 0:
            raise ValidationError("damping coefficients must be nonnegative")

    def g(self, s):
        s = np.asarray(s, dtype=float)
        out = self.g1 * s
        if self.power:
            out = out + self.power * np.abs(s) ** (self.m - 1.0) * s
        return out

    def dg(self, s):
        s = np.asarray(s, dtype=float)
        out = np.full_like(s, self.g1)
        if self.power:
            out = out + self.power * self.m * np.abs(s) ** (self.m - 1.0)
        return out

    @property
    def exponential(self) -> bool:
        """True iff ``g'(0) > 0``."""
        return self.g1 > 0 or (self.power > 0 and self.m == 1.0)

    @property
    def is_zero(self) -> bool:
        return self.g1 == 0 and self.power == 0

    def coefficient_grid(self, basis: ModalBasis) -> np.ndarray:
        a = self.a
        if callable(a):
            if basis.dimension == 1:
                vals = a(basis.x)
            else:
                X, Y = np.meshgrid(basis.x, basis.y, indexing="ij")
                vals = a(X, Y)
            return np.broadcast_to(np.asarray(vals, dtype=float), basis.grid_shape).copy()
        arr = np.asarray(a, dtype=float)
        if arr.ndim == 0:
            return np.full(basis.grid_shape, float(arr))
        if arr.shape != basis.grid_shape:
            raise ValidationError(f"damping coefficient has shape {arr.shape}, grid is {basis.grid_shape}")
        return arr.copy()


@dataclass(frozen=True)
class WaveSource:
    """``f(s) = mu s - kappa |s|^(p-1) s + c s^2``.

    ``kappa > 0`` is defocusing, ``kappa < 0`` focusing.  ``mu`` adds a
    linear term for bifurcation experiments.
    """

    kappa: float = 1.0
    p: float = 3.0
    c: float = 0.0
    mu: float = 0.0

    def f(self, s):
        s = np.asarray(s, dtype=float)
        return self.mu * s - self.kappa * np.abs(s) ** (self.p - 1.0) * s + self.c * s * s

    def df(self, s):
        s = np.asarray(s, dtype=float)
        return self.mu - self.kappa * self.p * np.abs(s) ** (self.p - 1.0) + 2.0 * self.c * s

    def antiderivative(self, s):
        s = np.asarray(s, dtype=float)
        return (0.5 * self.mu * s * s - self.kappa * np.abs(s) ** (self.p + 1.0) / (self.p + 1.0)
                + self.c * s**3 / 3.0)


@dataclass(frozen=True, eq=False)
class PlateLoad:
    """``P(w) = [F0, w] - p`` with sine coefficients for ``F0`` and ``p``."""

    F0: Optional[np.ndarray] = None
    p_load: Optional[np.ndarray] = None


@dataclass(frozen=True)
class KBSource:
    """``P(w) = sigma Lap[w^2] - rho |w|^(l-1) w``."""

    sigma: float = 0.0
    rho: float = 0.0
    l: float = 3.0


@dataclass
class State:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != self.v.shape:
            raise ValidationError("displacement and velocity must have the same shape")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise ValidationError("state has non-finite entries")

    def copy(self) -> "State":
        return State(self.u.copy(), self.v.copy())


# -- models -----------------------------------------------------------------

class Model:
    """Shared plumbing; subclasses fill in the physics."""

    name = "model"
    domain: DomainSpec
    damping: DampingLaw

    def _setup(self):
        self.basis = build_basis(self.domain)
        self.a_grid = self.damping.coefficient_grid(self.basis)
        if np.any(self.a_grid < 0):
            raise ValidationError("damping coefficient a(x) must be nonnegative")
        self.lam = np.asarray(self.basis.eigenvalues)

    # defaults overridden where needed
    def work_rate(self, u, v) -> float:
        return 0.0

    def acceleration(self, u, v) -> np.ndarray:
        M, _, _ = self.linear_diagonals(u)
        return self.force(u, v) / M

    def zero_state(self) -> State:
        z = np.zeros(self.basis.size)
        return State(z, z.copy())

    def _interior_damping(self, v):
        """``(a g(v), e_k)`` and the matching power ``(a g(v), v)``."""
        if self.damping.is_zero:
            return np.zeros_like(v), 0.0
        vg = self.basis.to_grid(v)
        q = self.a_grid * self.damping.g(vg)
        return self.basis.project(q), self.basis.integrate(q * vg)


@dataclass(eq=False)
class Wave(Model):
    """``w_tt - Lap w + a g(w_t) = f(w)`` with Dirichlet data."""

    domain: DomainSpec = field(default_factory=DomainSpec)
    damping: DampingLaw = field(default_factory=DampingLaw)
    source: WaveSource = field(default_factory=WaveSource)
    name = "wave"

    def __post_init__(self):
        self._setup()
        self._E = None

    def linear_diagonals(self, u):
        a_mean = float(np.mean(self.a_grid))
        return np.ones_like(self.lam), self.lam, np.full_like(self.lam, a_mean * self.damping.g1)

    def source_force(self, u):
        return self.basis.project(self.source.f(self.basis.to_grid(u)))

    def force(self, u, v):
        d, _ = self._interior_damping(v)
        return -self.lam * u - d + self.source_force(u)

    def energy(self, u, v) -> float:
        pot = self.basis.integrate(self.source.antiderivative(self.basis.to_grid(u)))
        return 0.5 * float(v @ v) + 0.5 * float(np.sum(self.lam * u * u)) - pot

    def damping_power(self, u, v) -> float:
        return self._interior_damping(v)[1]

    def phase_norm(self, u, v) -> float:
        return math.sqrt(float(np.sum(self.lam * u * u) + v @ v))

    def stationary_residual(self, w):
        return self.lam * w - self.source_force(w)

    def _weighted_gram(self, q):
        """``(q e_j, e_k)`` for grid values ``q``."""
        if self._E is None:
            self._E = _eval_matrix(self.basis)
        E = self._E
        return E.T @ ((self.basis.weights * q).ravel()[:, None] * E)

    def stationary_jacobian(self, w):
        return np.diag(self.lam) - self._weighted_gram(self.source.df(self.basis.to_grid(w)))

    def force_jacobian(self, u, v):
        """``(d force/du, d force/dv)``."""
        Ju = -self.stationary_jacobian(u)
        if self.damping.is_zero:
            return Ju, np.zeros_like(Ju)
        Jv = -self._weighted_gram(self.a_grid * self.damping.dg(self.basis.to_grid(v)))
        return Ju, Jv


class _PlateBase(Model):
    alpha: float
    rot_damping: Optional[DampingLaw]

    def _plate_setup(self):
        self._setup()
        if self.domain.dimension != 2:
            raise ValidationError(f"{self.name} needs a 2D domain")
        if not (self.alpha == 0 or 0 < self.alpha <= 1):
            raise ValidationError("alpha must be 0 or in (0, 1]")
        self.mass = 1.0 + self.alpha * self.lam

    def linear_diagonals(self, u):
        a_mean = float(np.mean(self.a_grid))
        c = a_mean * self.damping.g1
        if self.alpha and self.rot_damping is not None:
            c = c + self.alpha * a_mean * self.rot_damping.g1 * self.lam
        return self.mass, self.lam**2, np.full_like(self.lam, 1.0) * c

    def _damping(self, v):
        d, pw = self._interior_damping(v)
        if self.alpha and self.rot_damping is not None and not self.rot_damping.is_zero:
            comps = self.basis.gradient(v)
            G = [self.a_grid * self.rot_damping.g(c) for c in comps]
            d = d + self.alpha * self.basis.project_gradient(G)
            pw += self.alpha * sum(self.basis.integrate(Gi * ci) for Gi, ci in zip(G, comps))
        return d, pw

    def damping_power(self, u, v) -> float:
        return self._damping(v)[1]

    def kinetic(self, v) -> float:
        return 0.5 * float(np.sum(self.mass * v * v))

    def phase_norm(self, u, v) -> float:
        return math.sqrt(float(np.sum(self.lam**2 * u * u) + np.sum(self.mass * v * v)))


@dataclass(eq=False)
class KarmanPlate(_PlateBase):
    """``M_alpha w_tt + Lap^2 w + a[g(w_t) - alpha div G(grad w_t)] = [F(w), w] + P(w)``."""

    domain: DomainSpec = field(default_factory=lambda: DomainSpec(2, Nx=8, Ny=8))
    damping: DampingLaw = field(default_factory=DampingLaw)
    load: PlateLoad = field(default_factory=PlateLoad)
    alpha: float = 0.0
    rot_damping: Optional[DampingLaw] = None
    name = "karman"

    def __post_init__(self):
        self._plate_setup()
        self._F0 = None if self.load.F0 is None else self.basis._check(self.load.F0)
        self._p = None if self.load.p_load is None else self.basis._check(self.load.p_load)

    def airy(self, u):
        return karman.airy_stress(self.basis, u)

    def load_force(self, u):
        out = np.zeros_like(u)
        if self._F0 is not None:
            out = out + karman.vk_bracket(self.basis, self._F0, u)
        if self._p is not None:
            out = out - self._p
        return out

    def nonlinear_force(self, u):
        F = self.airy(u)
        return karman.vk_bracket(self.basis, F, u) + self.load_force(u)

    def force(self, u, v):
        d, _ = self._damping(v)
        return -self.lam**2 * u - d + self.nonlinear_force(u)

    def load_potential(self, u) -> float:
        out = 0.0
        if self._F0 is not None:
            out -= 0.5 * float(karman.vk_bracket(self.basis, self._F0, u) @ u)
        if self._p is not None:
            out += float(self._p @ u)
        return out

    def energy(self, u, v) -> float:
        F = self.airy(u)
        return (self.kinetic(v) + 0.5 * float(np.sum(self.lam**2 * u * u))
                + 0.25 * float(np.sum(self.lam**2 * F * F)) + self.load_potential(u))

    def stationary_residual(self, w):
        return self.lam**2 * w - self.nonlinear_force(w)


@dataclass(eq=False)
class KirchhoffBoussinesq(_PlateBase):
    """``M_alpha w_tt + Lap^2 w + a[...] = div(|grad w|^2 grad w) + P(w)``."""

    domain: DomainSpec = field(default_factory=lambda: DomainSpec(2, Nx=8, Ny=8))
    damping: DampingLaw = field(default_factory=DampingLaw)
    source: KBSource = field(default_factory=KBSource)
    alpha: float = 0.0
    rot_damping: Optional[DampingLaw] = None
    name = "kirchhoff_boussinesq"

    def __post_init__(self):
        self._plate_setup()

    def _grad(self, u):
        comps = self.basis.gradient(u)
        return comps, sum(c * c for c in comps)

    def nonlinear_force(self, u):
        comps, g2 = self._grad(u)
        out = -self.basis.project_gradient([g2 * c for c in comps])
        s = self.source
        if s.sigma or s.rho:
            ug = self.basis.to_grid(u)
            if s.sigma:
                out = out - s.sigma * self.lam * self.basis.project(ug * ug)
            if s.rho:
                out = out - s.rho * self.basis.project(np.abs(ug) ** (s.l - 1.0) * ug)
        return out

    def force(self, u, v):
        d, _ = self._damping(v)
        return -self.lam**2 * u - d + self.nonlinear_force(u)

    def energy(self, u, v) -> float:
        _, g2 = self._grad(u)
        e = (self.kinetic(v) + 0.5 * float(np.sum(self.lam**2 * u * u))
             + 0.25 * self.basis.integrate(g2 * g2))
        if self.source.rho:
            ug = self.basis.to_grid(u)
            e += self.source.rho / (self.source.l + 1.0) * self.basis.integrate(np.abs(ug) ** (self.source.l + 1.0))
        return e

    def work_rate(self, u, v) -> float:
        """``sigma (Lap[w^2], w_t)``: the non-conservative Boussinesq power."""
        if not self.source.sigma:
            return 0.0
        ug = self.basis.to_grid(u)
        return -self.source.sigma * float(np.sum(self.lam * v * self.basis.project(ug * ug)))

    def stationary_residual(self, w):
        return self.lam**2 * w - self.nonlinear_force(w)


@dataclass(eq=False)
class KirchhoffWave(Model):
    """``u_tt - sigma(|grad u|^2) Lap u_t - phi(|grad u|^2) Lap u = f(u) + h``.

    ``source`` is the restoring force written on the right-hand side, so the
    usual left-hand ``f`` equals ``-source.f``.  ``Phi`` is the antiderivative
    of ``phi``; when omitted it is computed by adaptive quadrature.
    """

    domain: DomainSpec = field(default_factory=DomainSpec)
    phi: Callable = lambda s: 1.0 + s
    sigma: Callable = lambda s: 1.0
    source: WaveSource = field(default_factory=lambda: WaveSource(kappa=0.0))
    h: Optional[np.ndarray] = None
    Phi: Optional[Callable] = None
    damping: DampingLaw = field(default_factory=lambda: DampingLaw(power=0.0))
    name = "kirchhoff_wave"

    def __post_init__(self):
        self._setup()
        self._h = np.zeros(self.basis.size) if self.h is None else self.basis._check(self.h)

    @classmethod
    def linear_coefficients(cls, domain=None, phi0=1.0, phi1=1.0, sigma0=1.0, sigma1=0.0, **kw):
        """``phi(s) = phi0 + phi1 s`` and ``sigma(s) = sigma0 + sigma1 s``."""
        return cls(domain=domain or DomainSpec(), phi=lambda s: phi0 + phi1 * s,
                   sigma=lambda s: sigma0 + sigma1 * s, Phi=lambda s: phi0 * s + 0.5 * phi1 * s * s, **kw)

    def _Phi(self, s: float) -> float:
        if self.Phi is not None:
            return float(self.Phi(s))
        return quad(self.phi, 0.0, s, epsabs=0.0, epsrel=1e-13)[0]

    def grad_sq(self, u) -> float:
        return float(np.sum(self.lam * u * u))

    def linear_diagonals(self, u):
        s = self.grad_sq(u)
        return np.ones_like(self.lam), self.phi(s) * self.lam, self.sigma(s) * self.lam

    def source_force(self, u):
        return self.basis.project(self.source.f(self.basis.to_grid(u))) + self._h

    def force(self, u, v):
        s = self.grad_sq(u)
        return -self.phi(s) * self.lam * u - self.sigma(s) * self.lam * v + self.source_force(u)

    def energy(self, u, v) -> float:
        pot = self.basis.integrate(self.source.antiderivative(self.basis.to_grid(u)))
        return 0.5 * float(v @ v) + 0.5 * self._Phi(self.grad_sq(u)) - pot - float(self._h @ u)

    def damping_power(self, u, v) -> float:
        return self.sigma(self.grad_sq(u)) * float(np.sum(self.lam * v * v))

    def phase_norm(self, u, v) -> float:
        return math.sqrt(self.grad_sq(u) + float(v @ v))

    def stationary_residual(self, w):
        return self.phi(self.grad_sq(w)) * self.lam * w - self.source_force(w)


def _eval_matrix(basis: ModalBasis) -> np.ndarray:
    """Dense map from coefficients to flattened grid values."""
    if basis.dimension == 1:
        return basis.Sx
    return np.einsum("ij,kl->ikjl", basis.Sx, basis.Sy).reshape(
        basis.x.size * basis.y.size, -1)[:, (basis.jx - 1) * basis.domain.Ny + (basis.ly - 1)]


ModelSpec = Union[Wave, KarmanPlate, KirchhoffBoussinesq, KirchhoffWave]


# -- module-level operations ------------------------------------------------

def validate(spec: ModelSpec) -> dict:
    """Well-posedness and attractor flags; raises on inadmissible exponents."""
    d = spec.damping
    _check_g(d)
    report = {"model": spec.name}
    if isinstance(spec, Wave):
        p, m = spec.source.p, d.m
        if not 1.0 <= p < 6.0:
            raise ValidationError(f"source exponent p={p} outside [1, 6)")
        supercrit_cap = 6.0 * m / (m + 1.0)
        if p > 3.0 and p > supercrit_cap:
            raise ValidationError(
                f"compatibility growth condition violated: p={p} > 6m/(m+1)={supercrit_cap:g} "
                "(supercritical sources need p <= 6m/(m+1))")
        a = spec.a_grid
        growth_ok = (d.g1 > 0 or d.power > 0) and (d.power == 0 or d.m <= 5.0)
        report.update(
            wellposed_subcritical=p <= 3.0,
            wellposed_supercritical=3.0 < p <= min(5.0, supercrit_cap),
            attractor_ready=bool(p <= 3.0 and growth_ok and float(a.min()) > 0
                                 and _dissipative(spec.source, spec.lam[0])),
            global_guaranteed=bool(p <= m or _dissipative(spec.source, spec.lam[0])),
        )
    elif isinstance(spec, (KarmanPlate, KirchhoffBoussinesq)):
        if spec.rot_damping is not None and spec.rot_damping.m != d.m and spec.rot_damping.power:
            raise ValidationError("rotational damping must share the exponent m of g")
        report.update(alpha=spec.alpha, attractor_ready=bool(spec.a_grid.min() > 0))
        if isinstance(spec, KirchhoffBoussinesq):
            k = float(spec.a_grid.min())
            report["gradient"] = spec.source.sigma == 0
            report["sigma_admissible"] = spec.source.sigma**2 < 0.25 * k * min(1.0, k)
        else:
            report["gradient"] = True
    elif isinstance(spec, KirchhoffWave):
        s = np.linspace(0.0, 100.0, 1001)
        phi = np.array([spec.phi(x) for x in s], dtype=float)
        sig = np.array([spec.sigma(x) for x in s], dtype=float)
        if np.any(phi <= 0) or np.any(sig <= 0):
            raise ValidationError("phi and sigma must be positive")
        report.update(gradient=True, attractor_ready=True)
    else:
        raise ValidationError(f"unknown model {type(spec).__name__}")
    return report


def _check_g(d: DampingLaw, n: int = 1000):
    s = np.linspace(-10.0, 10.0, n)
    g = d.g(s)
    if not np.allclose(g, -d.g(-s), rtol=1e-12, atol=1e-12):
        raise ValidationError("damping law must be odd")
    if np.any(np.diff(g) < -1e-12):
        raise ValidationError("damping law must be nondecreasing")


def _dissipative(src: WaveSource, lam1: float) -> bool:
    """``liminf_{|s|->inf} -f(s)/s > -lambda_1`` for the polynomial source."""
    if src.kappa > 0 and src.p > 2.0:
        return True
    if src.kappa > 0 and src.p == 2.0:
        return src.kappa > abs(src.c)
    if src.c != 0:
        return False
    lead = -src.mu + (src.kappa if src.p == 1.0 else 0.0)
    if src.kappa < 0 and src.p > 1.0:
        return False
    return lead > -lam1


def vk_bracket(spec_or_basis, u, w):
    basis = getattr(spec_or_basis, "basis", spec_or_basis)
    return karman.vk_bracket(basis, u, w)


def airy_stress(spec_or_basis, w):
    basis = getattr(spec_or_basis, "basis", spec_or_basis)
    return karman.airy_stress(basis, w)


def energy(state: State, spec: ModelSpec) -> float:
    return spec.energy(state.u, state.v)


def damping_power(state: State, spec: ModelSpec) -> float:
    return spec.damping_power(state.u, state.v)


def acceleration(state: State, spec: ModelSpec) -> np.ndarray:
    return spec.acceleration(state.u, state.v)


def phase_norm(state: State, spec: ModelSpec) -> float:
    return spec.phase_norm(state.u, state.v)
