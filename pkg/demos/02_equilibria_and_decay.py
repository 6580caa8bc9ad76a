"""Stationary set of a pitchfork source and convergence of a trajectory to it."""
import math

import numpy as np

from dampdyn import longtime
from dampdyn.equilibria import h1_distance, linearized_spectrum, multistart_enumerate
from dampdyn.integrator import StepConfig, integrate
from dampdyn.models import DampingLaw, State, Wave, WaveSource
from dampdyn.spectral import DomainSpec

spec = Wave(DomainSpec(Nx=16), DampingLaw(0.5), WaveSource(1.0, 3.0, mu=2.0))
es = multistart_enumerate(spec, 32, seed=0)
print(f"{len(es)} equilibria")
for e in es:
    ev, hyp = linearized_spectrum(spec, e, 1)
    print(f"  |w|_H1 = {h1_distance(spec, e.w, 0 * e.w):.4f}  sin-amplitude = {e.w[0] * math.sqrt(2 / math.pi):+.4f}"
          f"  smallest eigenvalue {ev[0]:+.4f}  hyperbolic {hyp}")

s = State(0.8 * spec.basis.mode(1), 0.2 * spec.basis.mode(1))
tr = integrate(s, spec, StepConfig(dt=5e-3), 40.0, 20)
conv = longtime.converge_trajectory(tr, es, 1e-2)
print(f"converged {conv.converged} at t = {conv.hit_time}")

decay = longtime.build_k0(spec.damping)
env = longtime.fit_envelope(tr, conv.limit, decay=decay, burn_in=0.1)
print(f"envelope C = {env.C:.3g}, violations {env.violations}/{env.checked}, rate {env.rate:.4f}"
      f" (linearization predicts {0.5 * spec.damping.dg(0.0):.4f})")

cubic = longtime.build_k0(DampingLaw(0.0, 3.0))
y = np.array([1e-4, 1e-2, 0.5])
print("cubic damping k0(y):", np.round(cubic.k0(y), 5), "exponential" if cubic.exponential else "sub-exponential")
