"""Attractor sampling, box counting, the dimension bound and reports."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dampdyn import attractor
from dampdyn.equilibria import Equilibrium, EquilibriumSet, multistart_enumerate
from dampdyn.integrator import StepConfig
from dampdyn.models import DampingLaw, KarmanPlate, PlateLoad, Wave, WaveSource
from dampdyn.spectral import DomainSpec, ValidationError, build_basis

CFG = StepConfig(dt=1e-2)


def defocusing(N=8):
    return Wave(DomainSpec(Nx=N), DampingLaw(0.5), WaveSource(1.0, 3.0))


def pitchfork(N=8):
    return Wave(DomainSpec(Nx=N), DampingLaw(0.5), WaveSource(1.0, 3.0, mu=2.0))


# -- box counting ---------------------------------------------------------------

def test_single_point_dimension_zero():
    est = attractor.box_counting(np.ones((500, 3)))
    assert est.slope == 0.0


def test_segment_fixture():
    t = np.random.default_rng(0).uniform(size=10_000)
    d = np.random.default_rng(1).standard_normal(6)
    est = attractor.box_counting(np.outer(t, d))
    assert est.slope == pytest.approx(1.0, abs=0.05)


def test_cantor_fixture():
    est = attractor.box_counting(attractor.cantor_points(10))
    assert est.slope == pytest.approx(0.6309297535714574, abs=0.05)
    assert est.halfwidth < 0.1


def test_square_fixture():
    pts = np.random.default_rng(2).uniform(size=(20_000, 2))
    assert attractor.box_counting(pts).slope == pytest.approx(2.0, abs=0.1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4))
def test_counts_monotone_and_slope_bounded(seed, d):
    pts = np.random.default_rng(seed).standard_normal((400, d))
    est = attractor.box_counting(pts)
    assert np.all(np.diff(est.counts) >= 0)  # eps decreasing along the ladder
    assert est.slope <= d + 0.1


def test_box_counting_preconditions():
    with pytest.raises(ValidationError):
        attractor.box_counting(np.random.default_rng(0).uniform(size=(50, 2)))
    bad = np.ones((200, 2))
    bad[3, 0] = np.inf
    with pytest.raises(ValidationError):
        attractor.box_counting(bad)


# -- dimension bound ------------------------------------------------------------

def test_dim_bound_value():
    assert attractor.dim_bound_eval(0.5, 1.0, 1.0, 10, 10) == pytest.approx(266.5557811545932, rel=1e-9)


def test_dim_bound_limits():
    vals = [attractor.dim_bound_eval(0.5, 1.0, K, 10, 10) for K in (1e-2, 1e-4, 1e-8, 1e-12)]
    assert vals[0] > vals[1] > vals[2] > vals[3] > 0 and vals[3] < 1e-8
    near = [attractor.dim_bound_eval(eta, 1.0, 1.0, 1, 1) for eta in (0.9, 0.99, 0.999)]
    assert near[0] < near[1] < near[2]
    for eta in (0.0, 1.0, 1.5):
        with pytest.raises(ValidationError):
            attractor.dim_bound_eval(eta, 1.0, 1.0, 1, 1)


# -- sampling -------------------------------------------------------------------

def test_sample_shape_and_determinism():
    spec = defocusing()
    a = attractor.sample(spec, 3, 1.0, 2.0, 10, seed=4, config=CFG, d=4)
    b = attractor.sample(spec, 3, 1.0, 2.0, 10, seed=4, config=CFG, d=4)
    assert a.points.shape[1] == 4 and np.all(a.times >= 1.0 - 1e-12)
    assert a.points.tobytes() == b.points.tobytes()


def test_sample_errors():
    spec = defocusing()
    with pytest.raises(ValidationError):
        attractor.sample(spec, 0, 1.0, 1.0, 10, config=CFG)
    with pytest.raises(ValidationError):
        attractor.sample(spec, 2, 1.0, 1.0, 10, config=CFG, d=3)


def test_sample_drops_blowup_members():
    spec = Wave(DomainSpec(Nx=8), DampingLaw(1.0), WaveSource(-1.0, 3.0))
    s = spec.basis.mode(1)
    from dampdyn.models import State
    inits = [State(30 * s, np.zeros(8)), State(0.01 * s, np.zeros(8))]
    smp = attractor.sample(spec, 2, 0.5, 0.5, 10, config=StepConfig(dt=1e-3), initial_states=inits)
    assert smp.dropped == [0]
    with pytest.raises(ValidationError):
        attractor.sample(spec, 1, 0.5, 0.5, 10, config=StepConfig(dt=1e-3), initial_states=inits[:1])


def test_defocusing_collapses_to_origin():
    spec = defocusing()
    es = multistart_enumerate(spec, 8)
    smp = attractor.sample(spec, 4, 40.0, 2.0, 20, config=StepConfig(dt=2e-2))
    rep = attractor.structure_report(smp, es, tol=1e-2)
    assert rep["fraction_within"] == 1.0


def test_gradient_attraction_ladder():
    spec = pitchfork()
    es = multistart_enumerate(spec, 16)
    fr = [attractor.structure_report(attractor.sample(spec, 6, b, 2.0, 10, seed=1, config=CFG), es,
                                     tol=0.05)["fraction_within"] for b in (2.0, 8.0, 20.0)]
    assert fr[0] <= fr[1] <= fr[2]


def test_structure_arcs_pitchfork():
    spec = pitchfork()
    es = multistart_enumerate(spec, 16)
    from dampdyn.models import State
    e = spec.basis.mode(1)
    inits = [State(1e-3 * e, np.zeros(8)), State(-1e-3 * e, np.zeros(8))]
    smp = attractor.sample(spec, 2, 0.0, 40.0, 20, config=StepConfig(dt=2e-2), initial_states=inits)
    rep = attractor.structure_report(smp, es, tol=1e-2)
    zero = [i for i, m in enumerate(es.members) if not np.any(m.w)][0]
    ends = {(a["from"], a["to"]) for a in rep["arcs"]}
    assert len(ends) == 2 and all(a == zero and b != zero for a, b in ends)


def test_structure_equilibria_only():
    spec = pitchfork()
    es = multistart_enumerate(spec, 16)
    from dampdyn.models import State
    inits = [State(m.w, np.zeros(8)) for m in es]
    smp = attractor.sample(spec, 3, 0.0, 1.0, 10, config=CFG, initial_states=inits)
    assert attractor.structure_report(smp, es)["fraction_within"] == 1.0
    with pytest.raises(ValidationError):
        attractor.structure_report(smp, EquilibriumSet([], spec))


# -- regularity -----------------------------------------------------------------

def test_regularity_zero_sample():
    spec = defocusing()
    from dampdyn.models import State
    smp = attractor.sample(spec, 1, 0.0, 1.0, 10, config=CFG, initial_states=[spec.zero_state()])
    assert attractor.regularity_report(smp, spec)["sups"] == {"u_H2": 0.0}


def test_regularity_refinement_wave():
    coarse, fine = defocusing(8), defocusing(16)
    a = attractor.sample(coarse, 3, 2.0, 3.0, 10, seed=2, config=CFG)
    b = attractor.sample(fine, 3, 2.0, 3.0, 10, seed=2, config=CFG)
    rep = attractor.regularity_report(a, coarse, refined=(b, fine))
    assert rep["sups"]["u_H2"] < 10.0 and rep["stable"]


def _embed(coarse, fine, c):
    out = np.zeros(fine.basis.size)
    for k, (j, l) in enumerate(zip(coarse.basis.jx, coarse.basis.ly)):
        out[fine.basis.index(j, l)] = c[k]
    return out


def test_regularity_refinement_plate():
    def plate(n):
        dom = DomainSpec(2, 1.0, 1.0, n, n)
        return KarmanPlate(dom, DampingLaw(1.0), PlateLoad(p_load=build_basis(dom).mode(1, 1)))
    from dampdyn.models import State
    coarse, fine = plate(4), plate(8)
    rng = np.random.default_rng(3)
    inits = [attractor.random_state(coarse, rng, 0.5) for _ in range(2)]
    lifted = [State(_embed(coarse, fine, s.u), _embed(coarse, fine, s.v)) for s in inits]
    cfg = StepConfig(dt=2e-3)
    a = attractor.sample(coarse, 2, 0.5, 0.5, 25, config=cfg, d=4, initial_states=inits)
    b = attractor.sample(fine, 2, 0.5, 0.5, 25, config=cfg, d=4, initial_states=lifted)
    rep = attractor.regularity_report(a, coarse, refined=(b, fine))
    assert all(math.isfinite(v) for v in rep["sups"].values()) and rep["stable"]
