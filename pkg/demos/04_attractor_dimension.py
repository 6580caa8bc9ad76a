"""Box counting on fixtures and on a sampled attractor."""
import math

from dampdyn import attractor
from dampdyn.equilibria import multistart_enumerate
from dampdyn.integrator import StepConfig
from dampdyn.models import DampingLaw, Wave, WaveSource
from dampdyn.spectral import DomainSpec

est = attractor.box_counting(attractor.cantor_points(10))
print(f"Cantor set: slope {est.slope:.3f} +- {est.halfwidth:.3f} (exact {math.log(2) / math.log(3):.3f})")

spec = Wave(DomainSpec(Nx=8), DampingLaw(0.5), WaveSource(1.0, 3.0, mu=2.0))
smp = attractor.sample(spec, 8, 20.0, 10.0, 10, seed=1, config=StepConfig(dt=1e-2), d=4)
print(f"pitchfork attractor sample: {smp.points.shape[0]} points, dropped {smp.dropped}")
print("regularity sups:", attractor.regularity_report(smp, spec)["sups"])
rep = attractor.structure_report(smp, multistart_enumerate(spec, 16), tol=0.05)
print(f"fraction within 0.05 of an equilibrium: {rep['fraction_within']:.2f}")
print(f"dimension bound example: {attractor.dim_bound_eval(0.5, 1.0, 1.0, 10, 10):.4f}")
