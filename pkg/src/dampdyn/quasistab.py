"""Trajectory pairs and the quasi-stability inequality.

For two solutions with difference ``z`` the inequality under test is::

    |z(t)|_H^2 <= b(t) |z(0)|_H^2 + c sup_{s <= t} mu_X(z(s))^2,
    b(t) = b0 exp(-2 omega t)

so ``omega`` is the decay rate of the *amplitude* ``|z|_H``.  ``mu_X`` is the
``H^{2-eps}`` norm of the first ``K`` displacement modes, a finite-rank and
hence compact seminorm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .integrator import StepConfig, Trajectory, integrate
from .models import KarmanPlate, KirchhoffBoussinesq, KirchhoffWave, State
from .spectral import ValidationError

#: numerator/denominator ratio above which a stabilizability constant is flagged
C_T_FLAG = 1e6


@dataclass
class PairRun:
    times: np.ndarray
    first: Trajectory
    second: Trajectory
    zu: np.ndarray
    zv: np.ndarray
    znorm: np.ndarray
    mu: np.ndarray
    K: int
    eps: float

    @property
    def spec(self):
        return self.first.spec


def mu_x(spec, zu, K: int = 16, eps: float = 0.25) -> float:
    """``||P_K z||_{2 - eps}``."""
    basis = spec.basis
    return basis.sobolev_norm(basis.project_low(zu, min(K, basis.size)), 2.0 - eps)


def pair_from_trajectories(first: Trajectory, second: Trajectory, K: int = 16, eps: float = 0.25) -> PairRun:
    if first.times.shape != second.times.shape or not np.array_equal(first.times, second.times):
        raise ValidationError("pair trajectories must share sample times")
    if first.dt != second.dt:
        raise ValidationError("pair trajectories must share dt")
    spec = first.spec
    zu, zv = first.u - second.u, first.v - second.v
    znorm = np.array([spec.phase_norm(a, b) for a, b in zip(zu, zv)])
    mu = np.array([mu_x(spec, a, K, eps) for a in zu])
    return PairRun(first.times, first, second, zu, zv, znorm, mu, K, eps)


def evolve_pair(spec, state1: State, state2: State, config: StepConfig, T: float,
                stride: int = 1, K: int = 16, eps: float = 0.25) -> PairRun:
    """Integrate both states with identical settings and form ``z = y1 - y2``."""
    if state1.u.shape != state2.u.shape:
        raise ValidationError("pair states live on different bases")
    first = integrate(state1, spec, config, T, stride)
    second = integrate(state2, spec, config, T, stride)
    if first.blowup or second.blowup:
        raise ValidationError("blow-up in a pair member; pair run aborted")
    return pair_from_trajectories(first, second, K, eps)


@dataclass
class QuasiFit:
    b0: float
    omega: float
    c_bar: float
    residual: float
    slack: float
    verdict: str
    K: int = 16
    eps: float = 0.25

    def b(self, t):
        return self.b0 * np.exp(-2.0 * self.omega * np.asarray(t, dtype=float))


def _right_max(x: np.ndarray) -> np.ndarray:
    """``R_i = max_{j >= i} x_j``."""
    return np.maximum.accumulate(x[::-1])[::-1]


def fit_8_4_2(pair: PairRun, floor: float = 1e-24) -> QuasiFit:
    """Fit ``b0``, ``omega`` and the constant ``c`` of the quasi-stability inequality.

    The decreasing envelope ``R`` (running maximum from the right) of
    ``r = |z|^2/|z0|^2`` removes the rotational oscillation of the wave
    phase; its log-linear least-squares slope gives ``-2 omega``.  ``b0``
    makes ``b`` dominate ``R`` on the first half of the run, and ``c`` is the
    smallest constant closing the inequality at every sample, so the
    residual is zero by construction and ``slack`` reports how tight it is.
    """
    z0 = pair.znorm[0]
    if z0 == 0.0:
        return QuasiFit(0.0, 0.0, 0.0, 0.0, 0.0, "degenerate", pair.K, pair.eps)
    t = pair.times
    r = (pair.znorm / z0) ** 2
    m = np.maximum.accumulate((pair.mu / z0) ** 2)
    R = _right_max(r)
    ok = R > floor
    if ok.sum() >= 2:
        slope = float(np.polyfit(t[ok], np.log(R[ok]), 1)[0])
    else:
        slope = 0.0
    omega = -0.5 * slope
    half = max(1, t.size // 2)
    b0 = float(np.max(R[:half] * np.exp(2.0 * omega * t[:half])))
    b = b0 * np.exp(-2.0 * omega * t)
    excess = r - b
    pos = m > 0
    c_bar = float(np.max(np.where(pos, np.maximum(excess, 0.0) / np.where(pos, m, 1.0), 0.0)))
    if np.any((~pos) & (excess > 0)):
        c_bar = math.inf
    bound = b + c_bar * m
    residual = float(np.max(np.maximum(r - bound, 0.0))) if math.isfinite(c_bar) else math.inf
    slack = float(np.min((bound - r) / np.maximum(bound, 1e-300))) if math.isfinite(c_bar) else -math.inf
    verdict = "stable" if omega > 0 and math.isfinite(c_bar) else "not-stable"
    return QuasiFit(b0, omega, c_bar, residual, slack, verdict, pair.K, pair.eps)


def abstract_constants(fit: QuasiFit, pair: PairRun, T_grid=None) -> dict:
    """Inputs ``(eta, K, L, dimP1, dimP2)`` of the abstract dimension bound.

    ``eta^2 = b(T) + int_T^{2T} b`` at the smallest grid horizon with
    ``eta < 1``; ``K = sqrt(c)``; ``L`` is the largest observed growth
    ``|z(t)|/|z(0)|`` on ``[0, T]``; both projector ranks equal the seminorm
    rank.
    """
    if fit.verdict != "stable":
        return {"eta": None, "T": None}
    if T_grid is None:
        T_grid = np.linspace(pair.times[-1] / 200.0, pair.times[-1] / 2.0, 200)
    w2 = 2.0 * fit.omega
    for T in T_grid:
        eta2 = fit.b0 * math.exp(-w2 * T) + fit.b0 / w2 * (math.exp(-w2 * T) - math.exp(-2.0 * w2 * T))
        if eta2 < 1.0:
            sel = pair.times <= T
            L = float(np.max(pair.znorm[sel]) / pair.znorm[0])
            rank = min(pair.K, pair.spec.basis.size)
            return {"T": float(T), "eta": math.sqrt(eta2), "K": math.sqrt(fit.c_bar),
                    "L": L, "dimP1": rank, "dimP2": rank}
    return {"eta": None, "T": None}


# -- energy-type audits -----------------------------------------------------

def _difference_damping(spec, u1, v1, u2, v2) -> float:
    """``D~_z = ((a (g(v1) - g(v2)), v1 - v2))`` (plus rotational part for plates)."""
    if isinstance(spec, KirchhoffWave):
        s1, s2 = spec.grad_sq(u1), spec.grad_sq(u2)
        lam = spec.lam
        return float((spec.sigma(s1) * lam * v1 - spec.sigma(s2) * lam * v2) @ (v1 - v2))
    basis, d = spec.basis, spec.damping
    g1, g2 = basis.to_grid(v1), basis.to_grid(v2)
    out = basis.integrate(spec.a_grid * (d.g(g1) - d.g(g2)) * (g1 - g2))
    rot = getattr(spec, "rot_damping", None)
    if getattr(spec, "alpha", 0) and rot is not None:
        for c1, c2 in zip(basis.gradient(v1), basis.gradient(v2)):
            out += spec.alpha * basis.integrate(spec.a_grid * (rot.g(c1) - rot.g(c2)) * (c1 - c2))
    return out


def _trapz(y, t) -> float:
    return float(np.trapezoid(y, t)) if hasattr(np, "trapezoid") else float(np.trapz(y, t))


@dataclass
class StabilizabilityReport:
    C_T: float
    numerator: float
    damping_integral: float
    LOT: float
    holds: bool
    flagged: bool


def stabilizability_audit(pair: PairRun, T: Optional[float] = None) -> StabilizabilityReport:
    """Smallest ``C_T`` with ``E_z(T) + int_0^T E_z <= C_T (int_0^T D~_z + LOT_z)``.

    ``E_z = |z|_H^2 / 2``; ``LOT_z`` is the sup of ``||z||^2`` in ``L2`` for
    wave-type models and in ``H^1`` for plates.  Time integrals use the
    trapezoid rule on the sample grid.
    """
    spec = pair.spec
    t = pair.times
    n = t.size if T is None else int(np.searchsorted(t, T + 1e-12, side="right"))
    n = max(n, 1)
    tt = t[:n]
    Ez = 0.5 * pair.znorm[:n] ** 2
    num = float(Ez[-1] + (_trapz(Ez, tt) if n > 1 else 0.0))
    Dz = np.array([_difference_damping(spec, pair.first.u[i], pair.first.v[i],
                                       pair.second.u[i], pair.second.v[i]) for i in range(n)])
    dint = _trapz(Dz, tt) if n > 1 else 0.0
    order = 1.0 if isinstance(spec, (KarmanPlate, KirchhoffBoussinesq)) else 0.0
    lot = float(max(spec.basis.sobolev_norm(z, order) ** 2 for z in pair.zu[:n]))
    den = dint + lot
    if num == 0.0:
        return StabilizabilityReport(0.0, 0.0, dint, lot, True, False)
    if den <= 0.0:
        return StabilizabilityReport(math.inf, num, dint, lot, False, True)
    C = num / den
    flagged = dint <= 1e-12 * num or C > C_T_FLAG
    return StabilizabilityReport(C, num, dint, lot, True, bool(flagged))


def dissipativity_integral(traj: Trajectory) -> float:
    """``int_0^T ||u_t||^2 dt`` (midpoint sums collected during integration)."""
    return float(traj.integrals["v_sq"][-1])


@dataclass
class SingleDecayReport:
    C: float
    factor: float
    window: float
    energies: np.ndarray
    ratios: np.ndarray
    flagged: bool
    C_all: float = math.nan


def single_decay_audit(traj: Trajectory, T: float) -> SingleDecayReport:
    """Smallest ``C`` with ``E(T) <= C (E(0) - E(T))`` and the implied factor ``C/(1+C)``.

    ``C`` uses the first window; ``C_all`` is the smallest constant valid for
    every window ``[nT, (n+1)T]`` of the run.
    """
    times, E = traj.times, traj.energy
    idx = [int(np.argmin(np.abs(times - k * T))) for k in range(int(times[-1] / T + 1e-9) + 1)]
    En = E[idx]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = En[1:] / En[:-1] if En.size > 1 else np.array([])
    if En.size < 2:
        raise ValidationError("trajectory shorter than one window")
    if En[1] == 0.0:
        return SingleDecayReport(0.0, 0.0, T, En, ratios, False)
    drop = En[0] - En[1]
    if drop <= 0.0:
        return SingleDecayReport(math.inf, 1.0, T, En, ratios, True)
    C = En[1] / drop
    drops = En[:-1] - En[1:]
    live = En[1:] > 0
    C_all = float(np.max(En[1:][live] / drops[live])) if np.all(drops[live] > 0) else math.inf
    return SingleDecayReport(C, C / (1.0 + C), T, En, ratios, False, C_all)
