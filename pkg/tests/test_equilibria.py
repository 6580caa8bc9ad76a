"""Stationary solutions: Newton, multistart, linearization and distances."""
import math

import numpy as np
import pytest

from dampdyn.equilibria import (DEDUP_TOL, EquilibriumSet, Equilibrium, NewtonFailure, apriori_h1_bound,
                                certify, distance_to_set, h1_distance, linearized_spectrum,
                                multistart_enumerate, nearest, newton_solve, stationary_jacobian)
from dampdyn.models import DampingLaw, KarmanPlate, PlateLoad, State, Wave, WaveSource
from dampdyn.spectral import DomainSpec, ValidationError, build_basis

AMP = 1.1547005383792515  # sqrt(4/3): lam1 a = mu a - (3/4) a^3 with lam1 = 1, mu = 2


def pitchfork(N=32, mu=2.0):
    return Wave(DomainSpec(Nx=N), DampingLaw(0.5), WaveSource(kappa=1.0, p=3.0, mu=mu))


def amplitude(spec, w):
    """Coefficient of sin(x): e_1 = sqrt(2/pi) sin(x)."""
    return abs(w[0]) * math.sqrt(2.0 / math.pi)


def test_trivial_linear():
    spec = Wave(DomainSpec(Nx=8), DampingLaw(), WaveSource(kappa=0.0))
    eq = newton_solve(spec, np.zeros(8))
    assert not np.any(eq.w) and eq.residual == 0.0


def test_single_mode_oracle():
    eq = newton_solve(pitchfork(1), np.array([1.0]))
    assert amplitude(None, eq.w) == pytest.approx(AMP, rel=1e-12)


def test_refined_amplitude():
    spec = pitchfork(32)
    eq = newton_solve(spec, 1.0 * spec.basis.mode(1))
    assert amplitude(spec, eq.w) == pytest.approx(AMP, rel=0.02)
    assert eq.residual <= 1e-10
    assert certify(spec, eq) <= 1e-10


def test_multistart_pitchfork():
    spec = pitchfork(32)
    es = multistart_enumerate(spec, 64, seed=0)
    assert len(es) == 3
    norms = sorted(h1_distance(spec, e.w, 0 * e.w) for e in es)
    assert norms[0] == 0.0 and norms[1] == pytest.approx(norms[2], rel=1e-10)
    for e in es:
        # symmetry: -w is also in the set
        assert min(h1_distance(spec, -e.w, m.w) for m in es) <= DEDUP_TOL
        assert certify(spec, e) <= 1e-10


def test_defocusing_unique():
    spec = Wave(DomainSpec(Nx=16), DampingLaw(0.5), WaveSource(kappa=1.0, p=3.0))
    es = multistart_enumerate(spec, 32, seed=1)
    assert len(es) == 1 and not np.any(es.members[0].w)


def test_empty_budget():
    assert len(multistart_enumerate(pitchfork(8), 0)) == 0


def test_apriori_bound_holds():
    spec = pitchfork(16)
    bound = apriori_h1_bound(spec)
    assert math.isfinite(bound)
    for e in multistart_enumerate(spec, 32, seed=2):
        assert h1_distance(spec, e.w, 0 * e.w) <= bound


def test_spectrum_at_zero():
    mu = 0.5
    spec = pitchfork(8, mu)
    ev, hyp = linearized_spectrum(spec, Equilibrium(np.zeros(8), 0.0), count=8)
    np.testing.assert_allclose(np.sort(ev), spec.lam - mu, rtol=1e-12)
    assert hyp


def test_nonhyperbolic_at_threshold():
    spec = pitchfork(8, mu=1.0)
    eq = newton_solve(spec, np.zeros(8))
    assert eq.margin < 1e-6 and eq.status == "undetermined" and not eq.hyperbolic


def test_spectrum_dense_oracle():
    spec = pitchfork(16)
    eq = newton_solve(spec, spec.basis.mode(1))
    h = 1e-5
    J = np.column_stack([(spec.stationary_residual(eq.w + h * e) - spec.stationary_residual(eq.w - h * e)) / (2 * h)
                         for e in np.eye(16)])
    ref = np.min(np.abs(np.linalg.eigvalsh(0.5 * (J + J.T))))
    ev, _ = linearized_spectrum(spec, eq, 1)
    assert abs(abs(ev[0]) - ref) <= 1e-8


def test_karman_jacobian():
    dom = DomainSpec(2, 1.0, 1.0, 4, 4)
    b = build_basis(dom)
    spec = KarmanPlate(dom, DampingLaw(0.5), PlateLoad(F0=b.mode(1, 2), p_load=0.5 * b.mode(1, 1)))
    w = np.random.default_rng(0).standard_normal(b.size) * 0.1
    h = 1e-6
    J = np.column_stack([(spec.stationary_residual(w + h * e) - spec.stationary_residual(w - h * e)) / (2 * h)
                         for e in np.eye(b.size)])
    np.testing.assert_allclose(stationary_jacobian(spec, w), J, atol=1e-6 * np.max(np.abs(J)))


def test_newton_failure():
    spec = pitchfork(4)
    with pytest.raises(NewtonFailure):
        newton_solve(spec, np.ones(4), max_iter=1, tol=1e-30)


def test_distances():
    spec = pitchfork(16)
    es = multistart_enumerate(spec, 16, seed=0)
    w = es.members[1].w
    assert distance_to_set(State(w, np.zeros(16)), es) == 0.0
    v = np.random.default_rng(1).standard_normal(16)
    only = EquilibriumSet([es.members[1]], spec)
    assert distance_to_set(State(w, v), only) == pytest.approx(np.linalg.norm(v), rel=1e-14)
    zero = EquilibriumSet([Equilibrium(np.zeros(16), 0.0)], spec)
    u = np.random.default_rng(2).standard_normal(16) / spec.lam
    assert distance_to_set(State(u, v), zero) == pytest.approx(spec.phase_norm(u, v), rel=1e-15)
    eq, d = nearest(State(w, np.zeros(16)), es)
    assert d == 0.0 and eq is es.members[1]
    with pytest.raises(ValidationError):
        distance_to_set(State(u, v), EquilibriumSet([], spec))
