"""Quasi-stability fit for pairs of trajectories."""
import numpy as np

from dampdyn import quasistab
from dampdyn.attractor import random_state
from dampdyn.integrator import StepConfig
from dampdyn.models import DampingLaw, Wave, WaveSource
from dampdyn.spectral import DomainSpec

rng = np.random.default_rng(0)
for label, spec in (("linear", Wave(DomainSpec(Nx=16), DampingLaw(0.5, power=0.0), WaveSource(kappa=0.0))),
                    ("nonlinear", Wave(DomainSpec(Nx=16), DampingLaw(0.5), WaveSource(1.0, 3.0, c=0.5)))):
    for _ in range(3):
        p = quasistab.evolve_pair(spec, random_state(spec, rng, 1.0), random_state(spec, rng, 1.0),
                                  StepConfig(dt=5e-3), 30.0, 20)
        fit = quasistab.fit_8_4_2(p)
        st = quasistab.stabilizability_audit(p)
        print(f"{label:9s} omega = {fit.omega:.4f}  c_bar = {fit.c_bar:.2e}  {fit.verdict}  C_T = {st.C_T:.3f}")
print("linear reference omega = g1/2 = 0.25")
