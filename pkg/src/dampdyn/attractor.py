"""Attractor sampling, box counting and the abstract dimension bound."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import stats

from .equilibria import EquilibriumSet
from .integrator import StepConfig, integrate
from .models import KarmanPlate, KirchhoffBoussinesq, State
from .spectral import ValidationError


@dataclass
class AttractorSample:
    """Post burn-in snapshots of an ensemble.

    ``points`` holds the projection ``(u_1..u_{d/2}, v_1..v_{d/2})``;
    ``u``/``v`` keep the full modal snapshots and ``member`` the ensemble
    index of each row (rows of one member are in time order).
    """

    points: np.ndarray
    u: np.ndarray
    v: np.ndarray
    member: np.ndarray
    times: np.ndarray
    ensemble: int
    burn_in: float
    stride: int
    seed: int
    dropped: List[int] = field(default_factory=list)


def project(u: np.ndarray, v: np.ndarray, d: int) -> np.ndarray:
    h = d // 2
    return np.hstack([np.atleast_2d(u)[:, :h], np.atleast_2d(v)[:, :h]])


def random_state(spec, rng, radius: float) -> State:
    """Random smooth state with phase norm uniform in ``[0, radius]``."""
    n = spec.basis.size
    u = rng.standard_normal(n) / spec.lam
    v = rng.standard_normal(n) / np.sqrt(spec.lam)
    nrm = spec.phase_norm(u, v)
    s = radius * rng.uniform() / nrm if nrm > 0 else 0.0
    return State(u * s, v * s)


def sample(spec, ensemble: int, burn_in: float, T: float, stride: int, seed: int = 0,
           config: Optional[StepConfig] = None, d: int = 6, radius: float = 2.0,
           initial_states: Optional[list] = None) -> AttractorSample:
    """Integrate ``ensemble`` random states and keep snapshots after ``burn_in``.

    Members that blow up are dropped and listed in ``dropped``.
    """
    if d % 2 or d < 2 or d > 2 * spec.basis.size:
        raise ValidationError(f"projection dimension d={d} must be even and <= 2 * modes")
    if ensemble <= 0:
        raise ValidationError("empty sample: ensemble must be positive")
    config = config or StepConfig()
    rng = np.random.default_rng(seed)
    if initial_states is None:
        initial_states = [random_state(spec, rng, radius) for _ in range(ensemble)]
    rows_u, rows_v, member, times, dropped = [], [], [], [], []
    for i, s0 in enumerate(initial_states[:ensemble]):
        tr = integrate(s0, spec, config, burn_in + T, stride)
        if tr.blowup:
            dropped.append(i)
            continue
        keep = tr.times >= burn_in - 1e-12
        rows_u.append(tr.u[keep])
        rows_v.append(tr.v[keep])
        member.append(np.full(int(keep.sum()), i))
        times.append(tr.times[keep])
    if not rows_u:
        raise ValidationError("empty sample: every ensemble member blew up")
    U, V = np.vstack(rows_u), np.vstack(rows_v)
    return AttractorSample(project(U, V, d), U, V, np.concatenate(member), np.concatenate(times),
                           ensemble, burn_in, stride, seed, dropped)


# -- box counting -----------------------------------------------------------

@dataclass
class DimensionEstimate:
    eps: np.ndarray
    counts: np.ndarray
    slope: float
    halfwidth: float
    usable: np.ndarray
    intercept: float = 0.0


def box_counts(points: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Occupied boxes at each ``eps`` after isotropic normalization to the unit cube."""
    pts = np.asarray(points, dtype=float)
    lo = pts.min(axis=0)
    scale = float(np.max(pts.max(axis=0) - lo))
    x = (pts - lo) / scale if scale > 0 else np.zeros_like(pts)
    out = []
    for e in eps:
        keys = np.floor(x / e).astype(np.int64)
        out.append(np.unique(keys, axis=0).shape[0])
    return np.array(out)


def box_counting(points, eps_ladder=None, rungs: int = 12, trim: int = 2,
                 saturation: float = 0.25) -> DimensionEstimate:
    """Box-counting dimension by regression of ``ln n`` on ``ln(1/eps)``.

    The ladder is ``2^-i`` relative to the sample diameter.  The regression
    range drops ``trim`` rungs at each end and every rung whose count exceeds
    ``saturation`` times the number of points (counts there flatten out
    because the sample is finite).  The half-width is the 95% t-interval of
    the slope.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if not np.all(np.isfinite(pts)):
        raise ValidationError("points must be finite")
    eps = np.asarray(eps_ladder if eps_ladder is not None else 2.0 ** -np.arange(rungs), dtype=float)
    if np.max(pts.max(axis=0) - pts.min(axis=0)) == 0.0:
        return DimensionEstimate(eps, np.ones(eps.size, dtype=int), 0.0, 0.0, np.zeros(eps.size, bool))
    if pts.shape[0] < 100:
        raise ValidationError("box counting needs at least 100 points")
    counts = box_counts(pts, eps)
    usable = np.zeros(eps.size, bool)
    usable[trim:eps.size - trim] = True
    usable &= counts <= saturation * pts.shape[0]
    if usable.sum() < 3:
        usable = counts <= saturation * pts.shape[0]
    if usable.sum() < 2:
        usable[:] = True
    x, y = np.log(1.0 / eps[usable]), np.log(counts[usable])
    fit = stats.linregress(x, y)
    dof = usable.sum() - 2
    half = float(stats.t.ppf(0.975, dof) * fit.stderr) if dof > 0 else math.inf
    return DimensionEstimate(eps, counts, max(float(fit.slope), 0.0), half, usable, float(fit.intercept))


def cantor_points(depth: int = 10) -> np.ndarray:
    """Left endpoints of the middle-thirds construction at ``depth``."""
    pts = np.array([0.0])
    for k in range(1, depth + 1):
        pts = np.concatenate([pts, pts + 2.0 * 3.0**-k])
    return pts[:, None]


# -- dimension bound --------------------------------------------------------

def dim_bound_eval(eta: float, L: float, K: float, dimP1: int, dimP2: int) -> float:
    """``(dim P1 + dim P2) ln(1 + 8 (1 + L) sqrt(2) K / (1 - eta)) / ln(2 / (1 + eta))``."""
    if not 0.0 < eta < 1.0:
        raise ValidationError(f"eta={eta} must lie in (0, 1)")
    if L <= 0 or K < 0:
        raise ValidationError("L must be positive and K nonnegative")
    if dimP1 < 1 or dimP2 < 1:
        raise ValidationError("projector dimensions must be >= 1")
    num = math.log1p(8.0 * (1.0 + L) * math.sqrt(2.0) * K / (1.0 - eta))
    return (dimP1 + dimP2) * num / math.log(2.0 / (1.0 + eta))


# -- reports ----------------------------------------------------------------

def _plate(spec) -> bool:
    return isinstance(spec, (KarmanPlate, KirchhoffBoussinesq))


def regularity_sups(sample: AttractorSample, spec) -> dict:
    b = spec.basis
    if _plate(spec):
        return {"u_H4": max((b.sobolev_norm(u, 4.0) for u in sample.u), default=0.0),
                "v_H2": max((b.sobolev_norm(v, 2.0) for v in sample.v), default=0.0)}
    return {"u_H2": max((b.sobolev_norm(u, 2.0) for u in sample.u), default=0.0)}


def regularity_report(sample: AttractorSample, spec, refined: Optional[tuple] = None) -> dict:
    """Sup of the higher Sobolev norms over the sample.

    Norm orders follow the regularity of the attractor: ``||u||_2`` for the
    wave and ``||u||_4``, ``||v||_2`` for plates.  ``refined`` is an optional
    ``(sample, spec)`` pair on twice the modes; the report then carries the
    fine/coarse ratios and ``stable = all ratios <= 1.5``.
    """
    out = {"sups": regularity_sups(sample, spec)}
    if refined is not None:
        fine = regularity_sups(*refined)
        ratios = {k: (fine[k] / v if v > 0 else (1.0 if fine[k] == 0 else math.inf))
                  for k, v in out["sups"].items()}
        out["refined"] = fine
        out["ratios"] = ratios
        out["stable"] = all(r <= 1.5 for r in ratios.values())
    return out


def structure_report(sample: AttractorSample, eqset: EquilibriumSet, spec=None, tol: float = 1e-2,
                     bins: int = 20) -> dict:
    """Distance-to-equilibria histogram and candidate heteroclinic arcs.

    An arc is a member whose first and last snapshots sit nearest to
    different equilibria and which leaves the ``tol`` neighbourhood of the
    set in between.
    """
    if not eqset.members:
        raise ValidationError("structure report needs a nonempty equilibrium set")
    spec = spec if spec is not None else eqset.spec
    W = [e.w for e in eqset.members]
    D = np.array([[spec.phase_norm(u - w, v) for w in W] for u, v in zip(sample.u, sample.v)])
    dist = D.min(axis=1)
    near = D.argmin(axis=1)
    hist, edges = np.histogram(np.log10(np.maximum(dist, 1e-16)), bins=bins)
    arcs = []
    for m in np.unique(sample.member):
        rows = np.flatnonzero(sample.member == m)
        a, b = int(near[rows[0]]), int(near[rows[-1]])
        if a != b and np.any(dist[rows] > tol):
            arcs.append({"member": int(m), "from": a, "to": b})
    return {"distance": dist, "nearest": near, "fraction_within": float(np.mean(dist <= tol)),
            "histogram": hist, "bin_edges": edges, "arcs": arcs}
