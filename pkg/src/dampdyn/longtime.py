"""Convergence to equilibria and the convex-analysis decay machinery.

The decay law follows the Lasiecka-Tataru construction: a concave ``k0``
that dominates ``s^2 + g(s)^2`` as a function of ``s g(s)`` near the origin,
its linear extension ``k``, the composite rate ``Q`` and the scalar ODE
``sigma' = -Q(sigma)``.  The resulting ``sigma`` bounds the *energy-level*
distance to the limit equilibrium, so envelopes are fitted to the squared
phase distance by default.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize.elementwise import find_root

from .equilibria import Equilibrium, EquilibriumSet
from .integrator import Trajectory, boussinesq_functional
from .models import DampingLaw, KirchhoffBoussinesq
from .spectral import ValidationError

#: dyadic ladder of envelope time scales
T_LADDER = tuple(2.0**k for k in range(-3, 6))


# -- k0, k ------------------------------------------------------------------

def _upper_hull(y: np.ndarray, z: np.ndarray):
    """Upper concave hull (monotone chain) of points sorted by ``y``."""
    hull = []
    for p in zip(y, z):
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    h = np.array(hull)
    return h[:, 0], h[:, 1]


@dataclass
class DecayLaw:
    """Tabulated ``k0`` and the linear slope ``c`` of ``k(s) = k0(s) + c s``."""

    hull_y: np.ndarray
    hull_z: np.ndarray
    c: float
    exponential: bool
    samples_y: np.ndarray = field(repr=False, default=None)
    samples_z: np.ndarray = field(repr=False, default=None)

    @property
    def y_max(self) -> float:
        return float(self.hull_y[-1])

    def k0(self, y):
        """Concave majorant; constant beyond the sampled range."""
        y = np.asarray(y, dtype=float)
        return np.interp(y, self.hull_y, self.hull_z)

    def k(self, y):
        return self.k0(y) + self.c * np.asarray(y, dtype=float)

    def certify(self) -> float:
        """``max(z - k0(y))`` over the samples (nonpositive when certified)."""
        return float(np.max(self.samples_z - self.k0(self.samples_y)))


def build_k0(damping: DampingLaw, samples: int = 10_000) -> DecayLaw:
    """Least concave majorant of ``(s g(s), s^2 + g(s)^2)`` for ``|s| <= 1``.

    ``g`` is odd so ``s`` in ``[0, 1]`` suffices.  The slope ``c`` of the
    linear part is the smallest value for which ``s^2 <= c s g(s)`` on the
    sampled range ``1 <= |s| <= 1e3``.
    """
    s = np.linspace(0.0, 1.0, samples + 1)
    s = np.union1d(s, np.logspace(-8, 0, samples // 4))
    g = damping.g(s)
    if np.any(np.diff(g) < 0) or g[0] != 0:
        raise ValidationError("damping law must be nondecreasing with g(0) = 0")
    if damping.g(1.0) <= 0:
        raise ValidationError("decay law needs g(1) > 0")
    y, z = s * g, s * s + g * g
    order = np.lexsort((-z, y))
    hy, hz = _upper_hull(y[order], z[order])
    big = np.logspace(0, 3, 2000)
    c = float(np.max(big / damping.g(big)))
    return DecayLaw(hy, hz, c, damping.exponential, y, z)


# -- Q ----------------------------------------------------------------------

def _invert_increasing(fn, x: np.ndarray) -> np.ndarray:
    """Solve ``r + fn(r) = x`` for ``r`` in ``[0, x]`` (``fn >= 0`` increasing)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    if np.any(pos):
        xp = x[pos]
        res = find_root(lambda r, t: r + fn(r) - t, (np.zeros_like(xp), xp), args=(xp,),
                        tolerances=dict(xatol=1e-300, xrtol=1e-14, fatol=0.0, frtol=0.0),
                        maxiter=200)
        out[pos] = res.x
    return out


@dataclass
class QLaw:
    """``H0``, ``G0`` and ``Q`` for given constants ``c1, c2, c3``."""

    decay: Optional[DecayLaw]
    c1: float
    c2: float
    c3: float
    H0_override: Optional[object] = None

    def H0(self, s):
        if self.H0_override is not None:
            return self.H0_override(np.asarray(s, dtype=float))
        return self.decay.k(np.asarray(s, dtype=float) / self.c3)

    def G0(self, s):
        return self.c1 * _invert_increasing(self.H0, self.c2 * np.asarray(s, dtype=float))

    def inv_I_G0(self, s):
        return _invert_increasing(self.G0, s)

    def Q(self, s):
        # s - (I + G0)^-1 s == G0((I + G0)^-1 s), without the cancellation
        return self.G0(self.inv_I_G0(np.asarray(s, dtype=float)))

    __call__ = Q

    def tabulate(self, s_max: float, n: int = 4000, s_min: float = 1e-30):
        """Log-log interpolant of ``Q`` on ``[s_min, s_max]``."""
        grid = np.logspace(math.log10(s_min), math.log10(s_max), n)
        vals = self.Q(grid)
        if np.any(np.diff(vals) <= 0) or vals[0] <= 0:
            raise ValidationError("Q table is not strictly increasing")
        return QTable(np.log(grid), np.log(vals))


@dataclass
class QTable:
    log_s: np.ndarray
    log_q: np.ndarray

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        pos = s > 0
        ls = np.log(s[pos])
        lo_slope = (self.log_q[1] - self.log_q[0]) / (self.log_s[1] - self.log_s[0])
        hi_slope = (self.log_q[-1] - self.log_q[-2]) / (self.log_s[-1] - self.log_s[-2])
        v = np.interp(ls, self.log_s, self.log_q)
        below, above = ls < self.log_s[0], ls > self.log_s[-1]
        v[below] = self.log_q[0] + lo_slope * (ls[below] - self.log_s[0])
        v[above] = self.log_q[-1] + hi_slope * (ls[above] - self.log_s[-1])
        out[pos] = np.exp(v)
        return out


def build_Q(decay: Optional[DecayLaw], c1: float = 1.0, c2: float = 1.0, c3: float = 1.0,
            H0=None) -> QLaw:
    """``H0(s) = k(s/c3)``, ``G0 = c1 (I + H0)^-1(c2 s)``, ``Q = s - (I + G0)^-1 s``.

    ``H0`` may be supplied directly (vectorized callable) for testing.
    """
    if min(c1, c2, c3) <= 0:
        raise ValidationError("c1, c2, c3 must be positive")
    if decay is None and H0 is None:
        raise ValidationError("need a decay law or an explicit H0")
    return QLaw(decay, c1, c2, c3, H0)


def solve_sigma_ode(Q, sigma0: float, T: float, dt: float = 1e-3):
    """RK4 for ``sigma' = -Q(sigma)``; returns ``(times, sigma)``."""
    if sigma0 < 0:
        raise ValidationError("sigma0 must be nonnegative")
    n = int(math.ceil(T / dt - 1e-9))
    t = np.arange(n + 1) * dt
    sig = np.empty(n + 1)
    sig[0] = s = float(sigma0)

    def rhs(x):
        return -float(np.asarray(Q(np.array([max(x, 0.0)])))[0])

    for i in range(n):
        if s == 0.0:
            sig[i + 1:] = 0.0
            break
        k1 = rhs(s)
        k2 = rhs(s + 0.5 * dt * k1)
        k3 = rhs(s + 0.5 * dt * k2)
        k4 = rhs(s + dt * k3)
        s = min(max(s + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), 0.0), s)
        sig[i + 1] = s
    return t, sig


# -- trajectory-level analysis ---------------------------------------------

def distances_to(traj: Trajectory, w: np.ndarray, spec=None) -> np.ndarray:
    spec = spec if spec is not None else traj.spec
    return np.array([spec.phase_norm(u - w, v) for u, v in zip(traj.u, traj.v)])


@dataclass
class ConvergenceReport:
    converged: bool
    limit: Optional[Equilibrium]
    hit_time: Optional[float]
    stays: bool
    distance: np.ndarray


def converge_trajectory(traj: Trajectory, eqset: EquilibriumSet, tol: float) -> ConvergenceReport:
    """First time within ``tol`` of the equilibrium nearest the final state."""
    if not eqset.members:
        raise ValidationError("empty equilibrium set")
    spec = traj.spec
    final = [spec.phase_norm(traj.u[-1] - e.w, traj.v[-1]) for e in eqset.members]
    limit = eqset.members[int(np.argmin(final))]
    d = distances_to(traj, limit.w)
    hit = np.flatnonzero(d <= tol)
    if hit.size == 0:
        return ConvergenceReport(False, limit, None, False, d)
    i = int(hit[0])
    stays = bool(np.all(d[i:] <= 2.0 * tol))
    return ConvergenceReport(stays, limit, float(traj.times[i]), stays, d)


@dataclass
class DecayEnvelope:
    """``q(t) <= C sigma(floor((t - t_b)/T))`` with ``q`` the (squared) distance."""

    C: float
    T: float
    constants: tuple
    burn_in: float
    violations: int
    checked: int
    times: np.ndarray
    sigma: np.ndarray
    q: np.ndarray
    rate: Optional[float] = None
    energy_level: bool = True


def _log_slope(t, d):
    ok = d > 1e-300
    if ok.sum() < 2:
        return None
    return float(np.polyfit(t[ok], np.log(d[ok]), 1)[0])


def exponential_rate(times, d, floor: float = 1e-12) -> Optional[float]:
    """Least-squares decay rate of ``log d`` while ``d`` stays above ``floor * d[0]``."""
    times, d = np.asarray(times), np.asarray(d)
    if d.size < 2 or d[0] == 0:
        return None
    keep = d > floor * d[0]
    last = np.flatnonzero(~keep)
    n = last[0] if last.size else d.size
    s = _log_slope(times[:n], d[:n])
    return None if s is None else -s


def fit_envelope(traj: Trajectory, limit, sigma=None, decay: Optional[DecayLaw] = None,
                 burn_in: float = 0.1, energy_level: bool = True,
                 constants: Sequence[tuple] = ((1.0, 1.0, 1.0), (1.0, 1.0, 0.1), (1.0, 1.0, 10.0)),
                 T_ladder: Sequence[float] = T_LADDER) -> DecayEnvelope:
    """Fit the decay envelope to a converged trajectory.

    Parameters
    ----------
    limit : Equilibrium or ndarray
        Limit displacement.
    sigma : (times, values), optional
        A fixed ``sigma`` profile.  Otherwise ``sigma`` is recomputed from
        ``decay`` for each constant triple with ``sigma0`` equal to the
        distance at the end of the burn-in window.
    burn_in : float
        Fraction of the samples discarded as transient.

    Candidates ``(constants, T)`` are ranked by the least-squares misfit of
    ``log q - log sigma`` over the first half of the post-burn-in window,
    excluding envelopes whose log-slope there is steeper than the data's.
    ``C`` is raised just enough to dominate that half; the
    violation count is over the whole post-burn-in window, so the second
    half is an out-of-sample check.  ``rate`` is the least-squares
    exponential rate of the (unsquared) distance.
    """
    w = limit.w if isinstance(limit, Equilibrium) else np.asarray(limit)
    d = distances_to(traj, w)
    q = d * d if energy_level else d
    t = traj.times
    b = int(math.floor(burn_in * t.size))
    tb = t[b]
    tt, qq = t[b:] - tb, q[b:]
    rate = exponential_rate(t[b:], d[b:])
    empty = DecayEnvelope(0.0, T_ladder[0], (), tb, 0, tt.size, tt, np.zeros_like(tt), qq, rate, energy_level)
    if tt.size == 0 or qq[0] == 0.0:
        return empty
    half = max(1, tt.size // 2)

    profiles = []
    if sigma is not None:
        profiles.append(((), np.asarray(sigma[0]), np.asarray(sigma[1])))
    else:
        if decay is None:
            raise ValidationError("fit_envelope needs sigma samples or a decay law")
        n_max = int(tt[-1] / min(T_ladder)) + 2
        for cs in constants:
            Ql = build_Q(decay, *cs).tabulate(10.0 * float(qq[0]))
            dt_sig = min(0.05, 1.0 / max(1.0, float(Ql(np.array([qq[0]]))[0] / qq[0])) / 20.0)
            st, sv = solve_sigma_ode(Ql, float(qq[0]), n_max, dt_sig)
            profiles.append((cs, st, sv))

    lq = np.log(np.maximum(qq[:half], 1e-300))
    data_slope = float(np.polyfit(tt[:half], lq, 1)[0]) if half >= 2 else -math.inf
    best = None
    for cs, st, sv in profiles:
        for T in T_ladder:
            env = np.interp(np.floor(tt / T), st, sv, right=sv[-1])
            if np.any(env[:half] <= 0):
                continue
            lenv = np.log(env[:half])
            logr = lq - lenv
            off = float(np.mean(logr))
            err = float(np.mean((logr - off) ** 2))
            C = float(np.exp(np.max(logr)))
            # a majorant cannot decay faster than the data it bounds
            steeper = half >= 2 and float(np.polyfit(tt[:half], lenv, 1)[0]) < data_slope
            key = (steeper, err)
            if best is None or key < best[0]:
                best = (key, C, T, cs, env)
    if best is None:
        return empty
    _, C, T, cs, env = best
    viol = int(np.sum(qq > C * env * (1.0 + 1e-9)))
    return DecayEnvelope(C, T, cs, tb, viol, tt.size, tt, env, qq, rate, energy_level)


# -- Ball identity ----------------------------------------------------------

def _ball_setup(spec):
    if not isinstance(spec, KirchhoffBoussinesq):
        raise ValidationError("the Ball identity audit applies to the Kirchhoff-Boussinesq model")
    d = spec.damping
    if spec.alpha != 0 or d.m != 1.0 or (spec.rot_damping is not None):
        raise ValidationError("the Ball identity audit needs alpha = 0 and linear damping")
    a_eff = spec.a_grid * (d.g1 + d.power)
    k = float(a_eff.min())
    if k <= 0:
        raise ValidationError("the Ball identity needs inf a > 0")
    return a_eff, k


def psi(spec, u, v) -> float:
    """``Psi = E + (k/2)(w, w_t)`` with the energy including ``sigma ((w, |grad w|^2))``."""
    _, k = _ball_setup(spec)
    return spec.energy(u, v) + spec.source.sigma * boussinesq_functional(spec, u) + 0.5 * k * float(u @ v)


def ball_K(spec, u, v) -> float:
    """The right-hand side ``K(w)`` of the Ball identity."""
    a_eff, k = _ball_setup(spec)
    basis, src = spec.basis, spec.source
    ug, vg = basis.to_grid(u), basis.to_grid(v)
    g2 = sum(c * c for c in basis.gradient(u))
    out = basis.integrate((src.sigma * g2 - 0.5 * k * (a_eff - k) * ug) * vg)
    out -= 0.25 * k * basis.integrate(g2 * g2)
    if src.rho:
        out -= k * src.rho * (src.l - 1.0) / (2.0 * src.l + 2.0) * basis.integrate(np.abs(ug) ** (src.l + 1.0))
    return out


def ball_monitors(spec):
    """``(monitors, snapshot_series)`` to pass to :func:`integrator.integrate`."""
    a_eff, k = _ball_setup(spec)
    basis = spec.basis

    def integrand(u, v):
        vg = basis.to_grid(v)
        return k * psi(spec, u, v) + basis.integrate((a_eff - k) * vg * vg) - ball_K(spec, u, v)

    return {"ball": integrand}, {"ball_psi": lambda u, v: psi(spec, u, v)}


def ball_identity_audit(traj: Trajectory, spec=None) -> np.ndarray:
    """Per-interval residual of ``Psi' + k Psi + int (a - k)|w_t|^2 = K(w)``."""
    spec = spec if spec is not None else traj.spec
    _ball_setup(spec)
    if "ball" not in traj.integrals:
        raise ValidationError("trajectory lacks Ball monitors; integrate with ball_monitors(spec)")
    return np.diff(traj.series["ball_psi"]) + np.diff(traj.integrals["ball"])
