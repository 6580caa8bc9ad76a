"""Time stepping, energy audits, Boussinesq identity and blow-up detection."""
import math

import numpy as np
import pytest

from dampdyn.integrator import (StepConfig, StepFailure, audit_boussinesq_identity, audit_energy,
                                detect_blowup, energy_monotone, integrate, step)
from dampdyn.models import (DampingLaw, KarmanPlate, KBSource, KirchhoffBoussinesq, KirchhoffWave,
                            PlateLoad, State, Wave, WaveSource)
from dampdyn.spectral import DomainSpec, ValidationError, build_basis

SQ = DomainSpec(2, 1.0, 1.0, 5, 5)


def linear_wave(g1=0.0, N=8):
    return Wave(DomainSpec(Nx=N), DampingLaw(g1, power=0.0), WaveSource(kappa=0.0))


def modal_solution(lam, g1, c, t):
    """z'' + g1 z' + lam z = 0, z(0) = c, z'(0) = 0 (underdamped)."""
    wd = math.sqrt(lam - 0.25 * g1 * g1)
    e = np.exp(-0.5 * g1 * t)
    z = c * e * (np.cos(wd * t) + 0.5 * g1 / wd * np.sin(wd * t))
    zt = -c * e * (lam / wd) * np.sin(wd * t)
    return z, zt


def test_config_validation():
    with pytest.raises(ValidationError):
        StepConfig(dt=0.0)
    with pytest.raises(ValidationError):
        StepConfig(scheme="euler")
    assert StepConfig(dt=0.1).halved().dt == 0.05


def test_zero_state_fixed_point():
    spec = Wave(DomainSpec(Nx=6), DampingLaw(0.5, 3.0), WaveSource(1.0, 3.0))
    out = step(spec.zero_state(), spec, StepConfig())
    assert not np.any(out.u) and not np.any(out.v)


def test_linear_step_conserves_energy():
    spec = linear_wave()
    s = State(spec.basis.mode(3), np.zeros(8))
    E0 = spec.energy(s.u, s.v)
    s1 = step(s, spec, StepConfig(dt=1e-2))
    assert abs(spec.energy(s1.u, s1.v) - E0) <= 1e-12


def test_second_order_state_error():
    spec = Wave(DomainSpec(Nx=8), DampingLaw(0.2), WaveSource(1.0, 3.0))
    s = State(0.8 * spec.basis.mode(1) + 0.2 * spec.basis.mode(2), np.zeros(8))
    ref = integrate(s, spec, StepConfig(dt=1.25e-4), 0.5).state()
    errs = []
    for dt in (4e-3, 2e-3):
        x = integrate(s, spec, StepConfig(dt=dt), 0.5).state()
        errs.append(np.linalg.norm(np.concatenate([x.u - ref.u, x.v - ref.v])))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_rk4_cross_check():
    spec = Wave(DomainSpec(Nx=6), DampingLaw(0.3), WaveSource(1.0, 3.0))
    s = State(0.5 * spec.basis.mode(1), np.zeros(6))
    a = integrate(s, spec, StepConfig(dt=1e-3), 1.0).state()
    b = integrate(s, spec, StepConfig("rk4", dt=1e-3), 1.0).state()
    assert np.linalg.norm(a.u - b.u) <= 1e-6


def test_zero_horizon():
    spec = linear_wave()
    tr = integrate(State(spec.basis.mode(1), np.zeros(8)), spec, StepConfig(), 0.0)
    assert len(tr) == 1 and tr.steps == 0


def test_stride_sampling():
    spec = linear_wave()
    tr = integrate(State(spec.basis.mode(1), np.zeros(8)), spec, StepConfig(dt=0.01), 1.0, stride=10)
    np.testing.assert_allclose(tr.times, np.linspace(0, 1, 11), atol=1e-12)


def test_damped_linear_monotone_and_modal():
    g1, c = 0.5, 0.7
    spec = linear_wave(g1)
    s = State(c * spec.basis.mode(2), np.zeros(8))
    tr = integrate(s, spec, StepConfig(dt=1e-3), 20.0, stride=100)
    assert np.all(np.diff(tr.energy) < 0)
    assert audit_energy(tr).max_residual <= 1e-8
    z, zt = modal_solution(4.0, g1, c, tr.times)
    E_exact = 0.5 * zt**2 + 0.5 * 4.0 * z**2
    np.testing.assert_allclose(tr.energy, E_exact, atol=1e-5)


def test_undamped_linear_audit():
    spec = linear_wave()
    rng = np.random.default_rng(0)
    s = State(rng.standard_normal(8) / spec.lam, rng.standard_normal(8) / np.sqrt(spec.lam))
    tr = integrate(s, spec, StepConfig(dt=1e-3), 1.0, stride=10)
    assert audit_energy(tr).max_residual <= 1e-10


def test_long_conservation():
    spec = linear_wave()
    s = State(spec.basis.mode(1) + 0.3 * spec.basis.mode(4), np.zeros(8))
    tr = integrate(s, spec, StepConfig(dt=1e-3), 10.0, stride=1000)
    assert np.max(np.abs(tr.energy - tr.energy[0])) <= 1e-9


def _audit_ratio(spec, s, dt=2e-3, T=1.0, sample=0.1):
    cfg = StepConfig(dt=dt)
    coarse = integrate(s, spec, cfg, T, int(round(sample / dt)))
    fine = integrate(s, spec, cfg.halved(), T, int(round(sample / (dt / 2))))
    return audit_energy(coarse, fine)


def test_karman_audit_second_order():
    b = build_basis(SQ)
    spec = KarmanPlate(SQ, DampingLaw(0.3), PlateLoad(p_load=0.5 * b.mode(1, 1)))
    a = _audit_ratio(spec, State(0.4 * b.mode(1, 1), 0.3 * b.mode(1, 2)))
    assert a.ratio >= 3.5


def test_boussinesq_identity():
    b = build_basis(SQ)
    spec = KirchhoffBoussinesq(SQ, DampingLaw(0.3), KBSource(sigma=0.4, rho=1.0))
    s = State(0.4 * b.mode(1, 1), 0.3 * b.mode(2, 1))
    res = [np.max(np.abs(audit_boussinesq_identity(integrate(s, spec, StepConfig(dt=dt), 1.0,
                                                                   int(round(0.1 / dt))))))
           for dt in (2e-3, 1e-3)]
    assert res[0] <= 1e-3
    assert 3.5 <= res[0] / res[1] <= 4.5
    zero = integrate(spec.zero_state(), spec, StepConfig(dt=1e-2), 0.5, 5)
    assert np.max(np.abs(audit_boussinesq_identity(zero))) == 0.0


def test_boussinesq_identity_needs_sigma():
    spec = KirchhoffBoussinesq(SQ)
    with pytest.raises(ValidationError):
        audit_boussinesq_identity(integrate(spec.zero_state(), spec, StepConfig(), 0.01))


def test_kirchhoff_wave_audit():
    spec = KirchhoffWave.linear_coefficients(DomainSpec(Nx=8), 1.0, 1.0, 0.3, 0.3,
                                             source=WaveSource(1.0, 3.0))
    a = _audit_ratio(spec, State(0.8 * spec.basis.mode(1), np.zeros(8)))
    assert 3.2 <= a.ratio <= 4.8


def test_determinism():
    spec = Wave(DomainSpec(Nx=8), DampingLaw(0.3, 3.0), WaveSource(1.0, 3.0))
    s = State(spec.basis.mode(1), 0.5 * spec.basis.mode(2))
    a = integrate(s, spec, StepConfig(dt=1e-2), 2.0, 10)
    b = integrate(s, spec, StepConfig(dt=1e-2), 2.0, 10)
    assert a.u.tobytes() == b.u.tobytes() and a.energy.tobytes() == b.energy.tobytes()


def test_energy_monotone_helper():
    spec = Wave(DomainSpec(Nx=8), DampingLaw(0.4, 3.0), WaveSource(1.0, 3.0))
    tr = integrate(State(spec.basis.mode(1), np.zeros(8)), spec, StepConfig(dt=5e-3), 5.0, 10)
    assert energy_monotone(tr, 10 * audit_energy(tr).max_residual)


def test_defocusing_no_blowup():
    spec = Wave(DomainSpec(Nx=8), DampingLaw(0.5), WaveSource(1.0, 3.0))
    tr = integrate(State(5 * spec.basis.mode(1), np.zeros(8)), spec, StepConfig(dt=2e-3), 5.0, 50)
    assert detect_blowup(tr) == (False, None)


def test_focusing_blowup_flag():
    spec = Wave(DomainSpec(Nx=16), DampingLaw(1.0, 1.0), WaveSource(-1.0, 3.0))
    s = State(30 * spec.basis.mode(1), np.zeros(16))
    assert spec.energy(s.u, s.v) < 0
    tr = integrate(s, spec, StepConfig(dt=1e-3), 50.0, 100)
    flag, t = detect_blowup(tr)
    assert flag and t < 50.0
    assert np.all(np.isfinite(tr.u))


def test_step_failure_is_runtime_error():
    assert issubclass(StepFailure, RuntimeError)
