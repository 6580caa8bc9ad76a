"""Stationary states: Newton solves, multistart enumeration, hyperbolicity."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from . import karman
from .models import KarmanPlate, State, Wave
from .spectral import ValidationError

#: H^1 distance below which two equilibria are considered the same
DEDUP_TOL = 1e-6
#: spectral margins below this are reported as undetermined
MARGIN_FLOOR = 1e-6


class NewtonFailure(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


@dataclass
class Equilibrium:
    w: np.ndarray
    residual: float
    margin: float = math.nan
    hyperbolic: bool = False
    status: str = "undetermined"
    iterations: int = 0


@dataclass
class EquilibriumSet:
    members: List[Equilibrium] = field(default_factory=list)
    spec: object = None
    starts: int = 0
    seed: int = 0
    failures: int = 0

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


def stationary_jacobian(spec, w) -> np.ndarray:
    """Jacobian of the stationary residual (analytic where available)."""
    if hasattr(spec, "stationary_jacobian"):
        return spec.stationary_jacobian(w)
    if isinstance(spec, KarmanPlate):
        return _karman_jacobian(spec, w)
    n = w.size
    J = np.empty((n, n))
    h = 1e-6 * max(1.0, float(np.max(np.abs(w))))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        J[:, k] = (spec.stationary_residual(w + e) - spec.stationary_residual(w - e)) / (2 * h)
    return J


def _karman_jacobian(spec: KarmanPlate, w) -> np.ndarray:
    """Columns ``lam^2 e - [F(w), e] + 2 [Lap^-2 [w, e], w] - [F0, e]``."""
    basis = spec.basis
    F = spec.airy(w)
    n = w.size
    J = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        dF = -2.0 * basis.biharmonic_inverse(karman.vk_bracket(basis, w, e))
        col = karman.vk_bracket(basis, F, e) + karman.vk_bracket(basis, dF, w)
        if spec._F0 is not None:
            col = col + karman.vk_bracket(basis, spec._F0, e)
        J[:, k] = spec.lam[k] ** 2 * e - col
    return J


def newton_solve(spec, guess, tol: float = 1e-10, max_iter: int = 100) -> Equilibrium:
    """Damped Newton on the stationary residual with a halving line search."""
    w = np.array(guess, dtype=float)
    r = spec.stationary_residual(w)
    rn = float(np.linalg.norm(r))
    for it in range(max_iter):
        if rn <= tol:
            eq = Equilibrium(w, rn, iterations=it)
            _classify(spec, eq, tol)
            return eq
        J = stationary_jacobian(spec, w)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -r, rcond=None)[0]
        t = 1.0
        while t > 1e-8:
            trial = w + t * step
            with np.errstate(all="ignore"):
                r_new = spec.stationary_residual(trial)
            rn_new = float(np.linalg.norm(r_new))
            if np.isfinite(rn_new) and rn_new < (1.0 - 1e-4 * t) * rn:
                break
            t *= 0.5
        else:
            raise NewtonFailure(f"line search stalled at residual {rn:.3e}", rn)
        w, r, rn = trial, r_new, rn_new
    if rn <= tol:
        eq = Equilibrium(w, rn, iterations=max_iter)
        _classify(spec, eq, tol)
        return eq
    raise NewtonFailure(f"no convergence in {max_iter} iterations (residual {rn:.3e})", rn)


def linearized_spectrum(spec, eq: Equilibrium, count: int = 8, tol: float = 1e-10):
    """Smallest-magnitude eigenvalues of the linearized stationary operator.

    Returns ``(eigenvalues, hyperbolic)`` with eigenvalues sorted by modulus.
    """
    J = stationary_jacobian(spec, eq.w)
    if np.allclose(J, J.T, rtol=1e-9, atol=1e-9 * max(1.0, float(np.max(np.abs(J))))):
        ev = np.linalg.eigvalsh(0.5 * (J + J.T))
    else:
        ev = np.linalg.eigvals(J)
    ev = ev[np.argsort(np.abs(ev))]
    margin = float(np.abs(ev[0]))
    return ev[:count], margin > 10.0 * tol


def _classify(spec, eq: Equilibrium, tol: float):
    ev, hyp = linearized_spectrum(spec, eq, 1, tol)
    eq.margin = float(abs(ev[0]))
    eq.hyperbolic = bool(hyp)
    if eq.margin < MARGIN_FLOOR:
        eq.status = "undetermined"
    else:
        eq.status = "hyperbolic"


def h1_distance(spec, a, b) -> float:
    d = np.asarray(a) - np.asarray(b)
    return float(np.sqrt(np.sum(spec.lam * d * d)))


def _starts(spec, n: int, rng) -> list:
    size = spec.basis.size
    scale = max(1.0, apriori_amplitude(spec))
    out = [np.zeros(size)]
    for k in range(min(size, 4)):
        for amp in (0.5, 1.0):
            for sgn in (1.0, -1.0):
                c = np.zeros(size)
                c[k] = sgn * amp * scale
                out.append(c)
    while len(out) < n:
        c = rng.standard_normal(size) / np.sqrt(spec.lam / spec.lam[0])
        out.append(c * scale * rng.uniform(0.1, 1.5) / max(np.linalg.norm(c), 1e-300))
    return out[:n]


def multistart_enumerate(spec, starts: int = 64, seed: int = 0, tol: float = 1e-10) -> EquilibriumSet:
    """Best-effort enumeration from structured (0, +-modes) and random starts."""
    out = EquilibriumSet(spec=spec, starts=starts, seed=seed)
    if starts <= 0:
        return out
    rng = np.random.default_rng(seed)
    for w0 in _starts(spec, starts, rng):
        try:
            eq = newton_solve(spec, w0, tol)
        except NewtonFailure:
            out.failures += 1
            continue
        if all(h1_distance(spec, eq.w, m.w) > DEDUP_TOL for m in out.members):
            out.members.append(eq)
    out.members.sort(key=lambda e: (h1_distance(spec, e.w, 0 * e.w), float(e.w[0])))
    return out


def distance_to_set(state: State, eqset: EquilibriumSet, spec=None) -> float:
    """Phase-space distance from ``state`` to the nearest ``(w, 0)``."""
    spec = spec if spec is not None else eqset.spec
    if not eqset.members:
        raise ValidationError("distance to an empty equilibrium set")
    return min(spec.phase_norm(state.u - e.w, state.v) for e in eqset.members)


def nearest(state: State, eqset: EquilibriumSet, spec=None):
    spec = spec if spec is not None else eqset.spec
    d = [spec.phase_norm(state.u - e.w, state.v) for e in eqset.members]
    i = int(np.argmin(d))
    return eqset.members[i], d[i]


def certify(spec, eq: Equilibrium, factor: float = 2.0) -> float:
    """Residual of ``eq`` recomputed on a quadrature grid ``factor`` times finer."""
    dom = dataclasses.replace(spec.domain, grid_factor=spec.domain.grid_factor * factor)
    fine = dataclasses.replace(spec, domain=dom)
    return float(np.linalg.norm(fine.stationary_residual(eq.w)))


def apriori_amplitude(spec) -> float:
    """Crude coefficient scale used to place structured starts."""
    if isinstance(spec, Wave):
        b = apriori_h1_bound(spec)
        if math.isfinite(b):
            return b / math.sqrt(spec.lam[0])
    return 1.0


def apriori_h1_bound(spec) -> float:
    """``||grad w|| <= sqrt(|Omega| max_s f(s) s)`` for wave equilibria.

    Testing the stationary equation with ``w`` gives
    ``||grad w||^2 = (f(w), w)``; the bound is infinite when ``f(s) s`` is
    unbounded above.
    """
    if not isinstance(spec, Wave):
        raise ValidationError("a-priori bound implemented for the wave model only")
    src = spec.source
    s = np.logspace(-6, 4, 20001)
    s = np.concatenate([-s[::-1], s])
    fs = src.f(s) * s
    k = int(np.argmax(fs))
    if k in (0, s.size - 1) and fs[k] > 0:
        return math.inf
    lo, hi = s[max(k - 1, 0)], s[min(k + 1, s.size - 1)]
    res = minimize_scalar(lambda x: -float(src.f(x) * x), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-14})
    best = max(0.0, float(fs[k]), -float(res.fun))
    return math.sqrt(best * spec.domain.area)
