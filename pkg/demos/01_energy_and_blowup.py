"""Energy balance of the damped wave and the blow-up dichotomy.

A focusing cubic source with negative initial energy blows up under linear
damping, while a strong damping exponent keeps the same data global.
"""
import numpy as np

from dampdyn.integrator import StepConfig, audit_energy, integrate
from dampdyn.models import DampingLaw, State, Wave, WaveSource
from dampdyn.spectral import DomainSpec

dom = DomainSpec(Nx=16)

# Defocusing wave: energy decreases and the discrete balance closes.
spec = Wave(dom, DampingLaw(0.3, 3.0), WaveSource(1.0, 3.0))
s = State(spec.basis.mode(1), 0.5 * spec.basis.mode(2))
cfg = StepConfig(dt=2e-3)
coarse = integrate(s, spec, cfg, 2.0, 50)
fine = integrate(s, spec, cfg.halved(), 2.0, 100)
audit = audit_energy(coarse, fine)
print(f"E(0) = {coarse.energy[0]:.6f}  E(2) = {coarse.energy[-1]:.6f}")
print(f"balance residual {audit.max_residual:.2e}, dt-halving ratio {audit.ratio:.2f}")

# Focusing source, negative energy.
src = WaveSource(-1.0, 3.0)
s = State(30 * spec.basis.mode(1), np.zeros(16))
for m, dt in ((1.0, 1e-3), (5.0, 5e-3)):
    model = Wave(dom, DampingLaw(1.0, m), src)
    tr = integrate(s, model, StepConfig(dt=dt), 50.0, 100)
    status = f"blow-up at t = {tr.blowup_time:.3f}" if tr.blowup else f"global, max norm {tr.norm.max():.1f}"
    print(f"m = {m:g}: E(0) = {model.energy(s.u, s.v):.1f}, {status}")
