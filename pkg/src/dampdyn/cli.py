"""Command-line drivers: ``dampdyn {simulate,equilibria,decay,quasistab,dimension,audit}``.

Exit codes: 0 success, 2 validation error, 3 blow-up (with
``--fail-on-blowup``), 4 internal error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import attractor, equilibria, integrator, longtime, quasistab
from .config import RunConfig, build_initial, build_model, build_step, load_config
from .spectral import ValidationError

EXIT_OK, EXIT_VALIDATION, EXIT_BLOWUP, EXIT_INTERNAL = 0, 2, 3, 4


class BlowupExit(Exception):
    pass


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "0+unknown"


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


class Output:
    """Output directory; the manifest checksums every file found in it."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self.files = []

    def _register(self, name):
        if name not in self.files:
            self.files.append(name)

    def csv(self, name, header, rows):
        with open(self.root / name, "w", newline="", encoding="ascii") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_num(v) for v in r])
        self._register(name)

    def json(self, name, obj):
        with open(self.root / name, "w", encoding="ascii") as fh:
            json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")
        self._register(name)

    def snapshots(self, traj, name="snapshots.bin"):
        data = np.hstack([traj.u, traj.v]).astype("<f8", copy=False)
        np.ascontiguousarray(data).tofile(self.root / name)
        self._register(name)
        self.json(name.replace(".bin", ".json"), {
            "dtype": "<f8", "order": "row-major", "shape": list(data.shape),
            "layout": "each row: u coefficients then v coefficients",
            "times": traj.times, "dt": traj.dt, "modes": traj.u.shape[1],
            "basis": {"jx": traj.spec.basis.jx, "ly": traj.spec.basis.ly,
                      "eigenvalues": traj.spec.basis.eigenvalues},
        })

    def manifest(self, cfg: RunConfig, command: str, seed: int, wall: float, extra=None):
        entries = []
        names = sorted(str(f.relative_to(self.root)) for f in self.root.rglob("*")
                       if f.is_file() and f.name != "manifest.json")
        for name in names:
            digest = hashlib.sha256((self.root / name).read_bytes()).hexdigest()
            entries.append({"file": name, "sha256": digest})
        man = {"command": command, "config_hash": cfg.hash, "version": _version(), "seed": seed,
               "wall_time_s": round(wall, 3), "files": entries}
        if extra:
            man.update(extra)
        with open(self.root / "manifest.json", "w", encoding="ascii") as fh:
            json.dump(_jsonable(man), fh, indent=2, sort_keys=True)
            fh.write("\n")


# -- commands ---------------------------------------------------------------

def _run(cfg, spec, state=None):
    it = cfg.sections["integrator"]
    state = state if state is not None else build_initial(cfg, spec, np.random.default_rng(cfg.seed))
    return integrator.integrate(state, spec, build_step(cfg), it["T"], it["stride"])


def cmd_simulate(cfg, out: Output, args, spec, report):
    traj = _run(cfg, spec)
    res = integrator.energy_residual(traj)
    out.csv("energy.csv", ["t", "E", "dissipated", "work", "residual"],
            zip(traj.times, traj.energy, traj.dissipation, traj.work, res))
    out.snapshots(traj)
    audit = {"validation": report, "max_residual": float(np.max(np.abs(res))), "dt": traj.dt,
             "steps": traj.steps, "blowup": traj.blowup, "blowup_time": traj.blowup_time,
             "final_norm": float(traj.norm[-1])}
    if "kb_lap" in traj.integrals:
        audit["boussinesq_identity_max"] = float(np.max(np.abs(integrator.audit_boussinesq_identity(traj)), initial=0.0))
    out.json("audit.json", audit)
    return traj.blowup


def cmd_equilibria(cfg, out: Output, args, spec, report):
    ex = cfg.sections["experiment"]
    es = equilibria.multistart_enumerate(spec, ex["starts"], cfg.seed, ex["tol"])
    rows = []
    for i, e in enumerate(es):
        rows.append([i, e.residual, equilibria.certify(spec, e), e.margin, e.status,
                     equilibria.h1_distance(spec, e.w, 0 * e.w)] + list(e.w))
    out.csv("equilibria.csv", ["index", "residual", "certified_residual", "margin", "status", "h1_norm"]
            + [f"w{k}" for k in range(spec.basis.size)], rows)
    out.json("equilibria.json", {"validation": report, "count": len(es), "starts": es.starts,
                                 "seed": es.seed, "failures": es.failures,
                                 "members": [{"residual": e.residual, "margin": e.margin,
                                              "hyperbolic": e.hyperbolic, "status": e.status}
                                             for e in es]})
    return False


def cmd_decay(cfg, out: Output, args, spec, report):
    ex = cfg.sections["experiment"]
    traj = _run(cfg, spec)
    if traj.blowup:
        out.json("decay.json", {"validation": report, "blowup": True, "blowup_time": traj.blowup_time})
        return True
    es = equilibria.multistart_enumerate(spec, ex["starts"], cfg.seed, ex["tol"])
    conv = longtime.converge_trajectory(traj, es, ex["converge_tol"])
    if conv.limit is None:
        out.csv("decay.csv", ["t", "distance"], zip(traj.times, conv.distance))
        out.json("decay.json", {"validation": report, "converged": False, "equilibria": len(es)})
        return False
    decay = longtime.build_k0(spec.damping)
    env = longtime.fit_envelope(traj, conv.limit, decay=decay, burn_in=ex["burn_in"],
                                energy_level=ex["energy_level"])
    zero = conv.limit is not None and not np.any(conv.limit.w)
    out.csv("decay.csv", ["t", "distance", "envelope"],
            zip(traj.times, conv.distance,
                np.concatenate([np.full(traj.times.size - env.times.size, np.nan), env.C * env.sigma])))
    out.json("decay.json", {
        "validation": report, "converged": conv.converged, "hit_time": conv.hit_time,
        "limit": "zero equilibrium" if zero else "nonzero equilibrium",
        "limit_h1_norm": equilibria.h1_distance(spec, conv.limit.w, 0 * conv.limit.w),
        "equilibria": len(es), "envelope": {"C": env.C, "T": env.T, "constants": env.constants,
                                            "violations": env.violations, "checked": env.checked,
                                            "burn_in_time": env.burn_in, "energy_level": env.energy_level},
        "exponential_flag": decay.exponential, "exponential_rate": env.rate,
    })
    return False


def cmd_quasistab(cfg, out: Output, args, spec, report):
    ex, it = cfg.sections["experiment"], cfg.sections["integrator"]
    rng = np.random.default_rng(cfg.seed)
    radius = cfg.sections["initial"]["radius"]
    starts = [(attractor.random_state(spec, rng, radius), attractor.random_state(spec, rng, radius))
              for _ in range(ex["pairs"])]
    step = build_step(cfg)

    def job(pair):
        p = quasistab.evolve_pair(spec, pair[0], pair[1], step, it["T"], it["stride"], ex["K"], ex["eps"])
        return quasistab.fit_8_4_2(p), quasistab.stabilizability_audit(p)

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        results = list(pool.map(job, starts))
    rows = [[i, f.b0, f.omega, f.c_bar, f.residual, f.slack, f.verdict, s.C_T, s.flagged]
            for i, (f, s) in enumerate(results)]
    out.csv("quasistab.csv", ["pair", "b0", "omega", "c_bar", "residual", "slack", "verdict", "C_T", "C_T_flagged"], rows)
    omegas = [f.omega for f, _ in results]
    out.json("quasistab.json", {"validation": report, "pairs": len(results), "K": ex["K"], "eps": ex["eps"],
                                "omega_min": min(omegas), "omega_median": float(np.median(omegas)),
                                "c_bar_max": max(f.c_bar for f, _ in results),
                                "linear_reference_omega": (0.5 * float(spec.damping.dg(0.0))
                                                           if spec.damping.m == 1 or spec.damping.power == 0 else None),
                                "fits": [{"b0": f.b0, "omega": f.omega, "c_bar": f.c_bar, "verdict": f.verdict}
                                         for f, _ in results]})
    return False


def cmd_dimension(cfg, out: Output, args, spec, report):
    ex = cfg.sections["experiment"]
    extra = {}
    if ex["points_file"]:
        path = Path(ex["points_file"])
        if not path.is_absolute() and cfg.source:
            path = Path(cfg.source).parent / path
        try:
            pts = np.loadtxt(path, delimiter=",", ndmin=2)
        except OSError as exc:
            raise ValidationError(f"cannot read points file {path}: {exc}") from exc
        extra["source"] = str(ex["points_file"])
    else:
        smp = attractor.sample(spec, ex["ensemble"], ex["sample_burn_in"], ex["sample_T"],
                               cfg.sections["integrator"]["stride"], cfg.seed, build_step(cfg), ex["d"],
                               cfg.sections["initial"]["radius"])
        pts = smp.points
        extra.update(source="ensemble", ensemble=smp.ensemble, dropped=smp.dropped,
                     regularity=attractor.regularity_report(smp, spec)["sups"])
    est = attractor.box_counting(pts, rungs=ex["rungs"])
    out.csv("dimension.csv", ["eps", "count", "usable"], zip(est.eps, est.counts, est.usable))
    out.json("dimension.json", dict(validation=report, points=int(pts.shape[0]), slope=est.slope,
                                    halfwidth=est.halfwidth, **extra))
    return False


def cmd_audit(cfg, out: Output, args, spec, report):
    it = cfg.sections["integrator"]
    state = build_initial(cfg, spec, np.random.default_rng(cfg.seed))
    step = build_step(cfg)
    coarse = integrator.integrate(state, spec, step, it["T"], it["stride"])
    fine = integrator.integrate(state, spec, step.halved(), it["T"], 2 * it["stride"])
    a = integrator.audit_energy(coarse, fine)
    rep = {"validation": report, "dt": a.dt, "max_residual": a.max_residual,
           "max_residual_half_dt": integrator.audit_energy(fine).max_residual, "ratio": a.ratio,
           "blowup": coarse.blowup or fine.blowup}
    if "kb_lap" in coarse.integrals:
        bc = np.max(np.abs(integrator.audit_boussinesq_identity(coarse)), initial=0.0)
        bf = np.max(np.abs(integrator.audit_boussinesq_identity(fine)), initial=0.0)
        rep.update(boussinesq_max=bc, boussinesq_max_half_dt=bf, boussinesq_ratio=bc / bf if bf else None)
    out.csv("audit.csv", ["t", "residual"], zip(a.times, a.residual))
    out.json("audit.json", rep)
    return bool(rep["blowup"])


COMMANDS = {"simulate": cmd_simulate, "equilibria": cmd_equilibria, "decay": cmd_decay,
            "quasistab": cmd_quasistab, "dimension": cmd_dimension, "audit": cmd_audit}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dampdyn", description="Damped hyperbolic dynamics experiments.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--out", default=None, help="output directory (default: config 'out' or ./out)")
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads for independent runs")
    p.add_argument("--fail-on-blowup", action="store_true", help="exit with status 3 on blow-up")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.sections[""]["seed"] = args.seed
        out = Output(Path(args.out or cfg.sections[""]["out"] or "out"))
        spec, report = build_model(cfg)
        blew = COMMANDS[args.command](cfg, out, args, spec, report)
        out.manifest(cfg, args.command, cfg.seed, time.perf_counter() - t0,
                     {"threads": args.threads, "blowup": bool(blew)})
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - report and map to the internal-error code
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    if blew:
        print("blow-up detected", file=sys.stderr)
        if args.fail_on_blowup:
            return EXIT_BLOWUP
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
