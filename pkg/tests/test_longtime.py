"""Decay law k0, the Q construction, sigma ODE, convergence and envelopes, Ball identity."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from dampdyn import longtime
from dampdyn.equilibria import Equilibrium, EquilibriumSet, multistart_enumerate
from dampdyn.integrator import StepConfig, integrate
from dampdyn.models import DampingLaw, KBSource, KirchhoffBoussinesq, State, Wave, WaveSource
from dampdyn.spectral import DomainSpec, ValidationError, build_basis


# -- k0 -----------------------------------------------------------------------

def test_k0_cubic_certifies_and_dominates_samples():
    dec = longtime.build_k0(DampingLaw(0.0, 3.0))
    assert dec.certify() <= 1e-12
    y = np.linspace(0.01, 1.0, 200)
    # the concave majorant sits below the candidate 2 sqrt(y) everywhere
    assert np.all(dec.k0(y) <= 2.0 * np.sqrt(y) + 1e-12)
    assert not dec.exponential


def test_k0_cubic_against_explicit_hull():
    # y = s^4, z = s^2 + s^6: z(y) = sqrt(y) + y^1.5 is concave on [0, y*] then convex;
    # beyond the tangency the hull is the chord to (1, 2)
    dec = longtime.build_k0(DampingLaw(0.0, 3.0))
    y = np.linspace(1e-4, 1e-2, 50)
    np.testing.assert_allclose(dec.k0(y), np.sqrt(y) + y**1.5, rtol=1e-3)
    assert dec.k0(1.0) == pytest.approx(2.0, rel=1e-12)


def test_k0_linear():
    g1 = 0.7
    dec = longtime.build_k0(DampingLaw(g1, power=0.0))
    y = np.linspace(0.0, g1, 100)
    np.testing.assert_allclose(dec.k0(y), (1 + g1 * g1) / g1 * y, rtol=1e-10, atol=1e-14)
    assert dec.exponential


@pytest.mark.parametrize("law", [DampingLaw(0.0, 3.0), DampingLaw(0.5, 2.0), DampingLaw(0.2, 5.0)])
def test_k0_concave(law):
    dec = longtime.build_k0(law)
    dy = np.diff(dec.hull_y)
    slopes = np.diff(dec.hull_z) / dy
    assert np.all(np.diff(slopes) <= 1e-12)
    assert dec.certify() <= 1e-12


# -- Q ------------------------------------------------------------------------

def test_Q_closed_form():
    q = longtime.build_Q(None, 2.0, 2.0, 1.0, H0=lambda s: s)
    s = np.logspace(-6, 2, 40)
    np.testing.assert_allclose(q.G0(s), 2 * s, rtol=1e-10)
    np.testing.assert_allclose(q.inv_I_G0(3 * s), s, rtol=1e-10)
    np.testing.assert_allclose(q(s), 2 * s / 3, rtol=1e-10)
    assert q(np.array([0.0]))[0] == 0.0


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 5), st.floats(0.2, 5), st.floats(0.2, 5))
def test_Q_monotone_and_inverse(c1, c2, c3):
    dec = longtime.build_k0(DampingLaw(0.0, 3.0), samples=2000)
    q = longtime.build_Q(dec, c1, c2, c3)
    s = np.logspace(-8, 1, 60)
    vals = q(s)
    assert vals[0] >= 0 and np.all(np.diff(vals) > 0)
    r = q.inv_I_G0(s)
    np.testing.assert_allclose(r + q.G0(r), s, rtol=1e-10)


def test_Q_linear_for_linear_damping():
    dec = longtime.build_k0(DampingLaw(0.5, power=0.0))
    q = longtime.build_Q(dec)
    s = np.logspace(-8, -2, 20)
    ratio = q(s) / s
    assert np.ptp(ratio) <= 1e-8 * ratio.mean()


# -- sigma ODE ----------------------------------------------------------------

def test_sigma_ode_oracles():
    t, s = longtime.solve_sigma_ode(lambda x: x, 1.0, 5.0, 1e-3)
    assert np.max(np.abs(s - np.exp(-t))) <= 1e-8
    t, s = longtime.solve_sigma_ode(lambda x: x * x, 1.0, 5.0, 1e-3)
    assert np.max(np.abs(s - 1 / (1 + t))) <= 1e-6
    t, s = longtime.solve_sigma_ode(lambda x: x, 0.0, 1.0, 1e-2)
    assert not np.any(s)


def test_Q_table_interpolates():
    q = longtime.build_Q(longtime.build_k0(DampingLaw(0.0, 3.0), samples=2000))
    tab = q.tabulate(1.0)
    s = np.array([1e-9, 3.3e-5, 0.02, 0.7])
    np.testing.assert_allclose(tab(s), q(s), rtol=1e-4)


def test_sigma_ode_against_solve_ivp():
    dec = longtime.build_k0(DampingLaw(0.0, 3.0), samples=2000)
    q = longtime.build_Q(dec).tabulate(1.0)
    t, s = longtime.solve_sigma_ode(q, 0.5, 4.0, 1e-2)
    ref = solve_ivp(lambda _, y: -q(y), (0, 4.0), [0.5], t_eval=t, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(s, ref.y[0], rtol=1e-6)


# -- trajectories -------------------------------------------------------------

def _run(spec, s, T=20.0, dt=5e-3, stride=20):
    return integrate(s, spec, StepConfig(dt=dt), T, stride)


def test_converge_from_equilibrium():
    spec = Wave(DomainSpec(Nx=8), DampingLaw(0.5), WaveSource(1.0, 3.0, mu=2.0))
    es = multistart_enumerate(spec, 16)
    w = es.members[1].w
    rep = longtime.converge_trajectory(_run(spec, State(w, np.zeros(8)), T=1.0), es, 1e-6)
    assert rep.converged and rep.hit_time == 0.0


def test_converge_defocusing_to_zero():
    spec = Wave(DomainSpec(Nx=8), DampingLaw(0.5), WaveSource(1.0, 3.0))
    es = multistart_enumerate(spec, 16)
    rep = longtime.converge_trajectory(_run(spec, State(spec.basis.mode(1), np.zeros(8))), es, 1e-2)
    assert rep.converged and not np.any(rep.limit.w)


def test_converge_pitchfork_basin():
    spec = Wave(DomainSpec(Nx=8), DampingLaw(0.5), WaveSource(1.0, 3.0, mu=2.0))
    es = multistart_enumerate(spec, 16)
    plus = max(es.members, key=lambda e: e.w[0])
    rep = longtime.converge_trajectory(_run(spec, State(0.9 * plus.w, np.zeros(8))), es, 1e-2)
    assert rep.converged and rep.limit is plus


def test_envelope_zero_distance():
    spec = Wave(DomainSpec(Nx=8), DampingLaw(0.5), WaveSource(1.0, 3.0))
    tr = _run(spec, spec.zero_state(), T=1.0)
    env = longtime.fit_envelope(tr, np.zeros(8), decay=longtime.build_k0(spec.damping))
    assert env.C == 0.0 and env.violations == 0


def test_envelope_linear_rate():
    g1 = 0.4
    spec = Wave(DomainSpec(Nx=8), DampingLaw(g1, power=0.0), WaveSource(kappa=0.0))
    tr = _run(spec, State(spec.basis.mode(1), np.zeros(8)), T=40.0)
    env = longtime.fit_envelope(tr, np.zeros(8), decay=longtime.build_k0(spec.damping))
    assert env.violations == 0
    assert env.rate == pytest.approx(g1 / 2, rel=0.25)


def test_envelope_cubic_damping():
    spec = Wave(DomainSpec(Nx=8), DampingLaw(0.0, 3.0), WaveSource(1.0, 3.0))
    tr = _run(spec, State(spec.basis.mode(1), np.zeros(8)), T=40.0)
    env = longtime.fit_envelope(tr, np.zeros(8), decay=longtime.build_k0(spec.damping))
    assert env.violations == 0 and env.checked > 100


def test_fixed_sigma_profile():
    g1 = 0.4
    spec = Wave(DomainSpec(Nx=8), DampingLaw(g1, power=0.0), WaveSource(kappa=0.0))
    tr = _run(spec, State(spec.basis.mode(1), np.zeros(8)), T=20.0)
    n = np.arange(200.0)
    env = longtime.fit_envelope(tr, np.zeros(8), sigma=(n, np.exp(-0.5 * g1 * n)))
    assert env.violations == 0


def test_envelope_needs_law():
    spec = Wave(DomainSpec(Nx=4), DampingLaw(0.5), WaveSource(1.0, 3.0))
    tr = _run(spec, State(spec.basis.mode(1), np.zeros(4)), T=1.0)
    with pytest.raises(ValidationError):
        longtime.fit_envelope(tr, np.zeros(4))


# -- Ball identity ------------------------------------------------------------

SQ = DomainSpec(2, 1.0, 1.0, 5, 5)


def _kb(a=1.0):
    return KirchhoffBoussinesq(SQ, DampingLaw(0.5, power=0.0, a=a), KBSource(sigma=0.1, rho=1.0))


def test_ball_constant_coefficient_term_vanishes():
    spec = _kb()
    a_eff, k = longtime._ball_setup(spec)
    v = np.random.default_rng(0).standard_normal(spec.basis.size)
    vg = spec.basis.to_grid(v)
    assert spec.basis.integrate((a_eff - k) * vg * vg) == 0.0


def test_ball_identity_second_order():
    spec = _kb(a=lambda x, y: 1.0 + 0.5 * np.sin(np.pi * x) * np.sin(np.pi * y))
    b = spec.basis
    s = State(0.4 * b.mode(1, 1), 0.3 * b.mode(1, 2))
    mon, ser = longtime.ball_monitors(spec)
    res = []
    for dt in (2e-3, 1e-3):
        tr = integrate(s, spec, StepConfig(dt=dt), 1.0, int(round(0.1 / dt)), monitors=mon, snapshot_series=ser)
        res.append(np.max(np.abs(longtime.ball_identity_audit(tr))))
    assert 3.5 <= res[0] / res[1] <= 4.5


def test_ball_zero_trajectory():
    spec = _kb()
    mon, ser = longtime.ball_monitors(spec)
    tr = integrate(spec.zero_state(), spec, StepConfig(dt=1e-2), 0.5, 5, monitors=mon, snapshot_series=ser)
    assert np.max(np.abs(longtime.ball_identity_audit(tr))) <= 1e-12


def test_ball_preconditions():
    with pytest.raises(ValidationError):
        longtime.ball_monitors(Wave(DomainSpec(Nx=4)))
    with pytest.raises(ValidationError):
        longtime.ball_monitors(KirchhoffBoussinesq(SQ, DampingLaw(0.5, 3.0)))
