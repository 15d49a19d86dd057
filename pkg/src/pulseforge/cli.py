"""Command-line front end.

A run is described by a flat ``key = value`` file with dotted keys, for
example::

    mode = design-pop
    rates.t1_01 = 9.5
    target.p1 = 0.3
    target.p2 = 0.2
    t_f = 3

Every key can be overridden on the command line, either with a dedicated
flag (``--tf 5``) or generically (``--set target.p1=0.4``). Each run writes
its data files plus ``manifest.json``, which echoes the fully resolved
configuration so the run can be repeated exactly.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, _csv, analysis, coherence, feasibility, population, tomography
from .core import DecoherenceRates, DensityParams, basis_state, params_to_matrix
from .errors import ConfigError, InfeasibleTarget, PulseForgeError
from .lindblad import DEFAULT_DT, PulseSchedule, evolve

log = logging.getLogger("pulseforge")

MODES = ("design-pop", "design-coh", "simulate", "feasibility-pop", "feasibility-coh", "tomo", "qb")

# key -> (type, default); None marks "required by some modes, no default".
KEYS = {
    "mode": (str, None),
    "out": (str, "out"),
    "rates.t1_01": (float, 9.5),
    "rates.t1_12": (float, 4.6),
    "rates.t2_01": (float, 6.0),
    "rates.t2_12": (float, 1.9),
    "target.p1": (float, None),
    "target.p2": (float, None),
    "target.h2": (float, None),
    "target.h3": (float, None),
    "t_f": (float, 3.0),
    "a": (float, None),
    "dt": (float, DEFAULT_DT),
    "omega_cap": (float, population.DEFAULT_OMEGA_CAP),
    "grid_step": (float, feasibility.DEFAULT_GRID_STEP),
    "scan.t_f": (str, "3,5,10"),
    "seed": (int, 0),
    "simulate.pulses": (str, None),
    "simulate.omega01": (float, 0.0),
    "simulate.omega12": (float, 0.0),
    "simulate.initial": (int, 0),
    "trajectory.sample_every": (int, 1),
    "tomo.state": (str, "0.3,0.2,0.05,0.1,0.15"),
    "tomo.reads": (str, None),
    "tomo.calibration": (str, None),
    "tomo.shots": (int, 0),
    "qb.charge_level": (float, 0.8),
    "qb.t_charge": (float, 0.3),
    "qb.t_store": (float, 1.2),
    "qb.t_discharge": (float, 0.3),
    "qb.discharge_level": (float, 0.2),
    "qb.omega10": (float, analysis.QBConfig.omega10),
}

POSITIVE = ("rates.t1_01", "rates.t1_12", "rates.t2_01", "rates.t2_12", "t_f", "dt",
            "omega_cap", "grid_step", "trajectory.sample_every", "qb.t_charge",
            "qb.t_store", "qb.t_discharge", "qb.omega10")

FLAG_KEYS = {
    "mode": "mode", "out": "out", "dt": "dt", "omega_cap": "omega_cap",
    "grid_step": "grid_step", "tf": "t_f", "target_p1": "target.p1",
    "target_p2": "target.p2", "target_h2": "target.h2", "target_h3": "target.h3",
}

EXIT_CODES = {
    "config": 2,
    "infeasible": 3,
    "denominator_collapse": 4,
    "unphysical": 5,
    "outside_family": 6,
    "negative_rate": 7,
    "singular_matrix": 8,
    "column_sum_mismatch": 9,
    "io": 10,
    "error": 1,
}


class RunConfig:
    """Resolved run configuration: every known key with a typed value."""

    def __init__(self, values):
        self.values = dict(values)

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def resolve(cls, raw):
        """Type-convert and validate ``raw`` (dotted key -> string or value)."""
        unknown = sorted(set(raw) - set(KEYS))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        values = {}
        for key, (typ, default) in KEYS.items():
            value = raw.get(key, default)
            if value is not None:
                try:
                    value = typ(value)
                except (TypeError, ValueError):
                    raise ConfigError(f"{key}: cannot read {value!r} as {typ.__name__}") from None
            values[key] = value
        if values["mode"] not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}; got {values['mode']!r}")
        for key in POSITIVE:
            if not values[key] > 0:
                raise ConfigError(f"{key} must be positive, got {values[key]}")
        for key in ("simulate.pulses", "tomo.reads", "tomo.calibration"):
            if values[key] is not None and not Path(values[key]).is_file():
                raise ConfigError(f"{key}: file {values[key]!r} does not exist")
        return cls(values)

    def require(self, *keys):
        missing = [k for k in keys if self.values[k] is None]
        if missing:
            raise ConfigError(f"mode {self['mode']} needs {', '.join(missing)}")
        return [self.values[k] for k in keys]

    def rates(self):
        return DecoherenceRates.from_times(
            self["rates.t1_01"], self["rates.t1_12"], self["rates.t2_01"], self["rates.t2_12"]
        )

    def float_list(self, key):
        try:
            return [float(x) for x in self[key].split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"{key}: expected comma-separated numbers, got {self[key]!r}") from None

    def as_dict(self):
        return dict(self.values)


def parse_config_text(text, source="<config>"):
    raw = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{n}: empty key")
        raw[key] = value
    return raw


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _design_run(cfg, out, kind):
    r = cfg.rates()
    if kind == "pop":
        p1, p2 = cfg.require("target.p1", "target.p2")
        target = population.PopulationTarget(p1, p2, cfg["t_f"], cfg["a"])
        design = population.design_population_pulses(target, r, dt=cfg["dt"],
                                                      omega_cap=cfg["omega_cap"])
    else:
        h2, h3 = cfg.require("target.h2", "target.h3")
        target = coherence.CoherenceTarget(h2, h3, cfg["t_f"], cfg["a"])
        design = coherence.design_coherence_pulses(target, r, dt=cfg["dt"],
                                                   omega_cap=cfg["omega_cap"])
    design.pulses.to_csv(out / "pulses.csv")
    traj = evolve(basis_state(0), design.pulses, r, sample_every=cfg["trajectory.sample_every"])
    traj.to_csv(out / "trajectory.csv")
    final = traj.populations()[-1]
    h = traj.coherences()[-1]
    result = design.manifest(cfg["dt"])
    result["final"] = {"P0": float(final[0]), "P1": float(final[1]), "P2": float(final[2]),
                       "h1": float(h[0]), "h2": float(h[1]), "h3": float(h[2])}
    return result, ["pulses.csv", "trajectory.csv"]


def _simulate_run(cfg, out):
    r = cfg.rates()
    if cfg["simulate.pulses"] is not None:
        pulses = PulseSchedule.from_csv(cfg["simulate.pulses"])
    else:
        pulses = PulseSchedule.constant(cfg["simulate.omega01"], cfg["simulate.omega12"],
                                        cfg["t_f"], cfg["dt"])
    level = cfg["simulate.initial"]
    if level not in (0, 1, 2):
        raise ConfigError(f"simulate.initial must be 0, 1 or 2, got {level}")
    traj = evolve(basis_state(level), pulses, r, dt=cfg["dt"],
                  sample_every=cfg["trajectory.sample_every"])
    traj.to_csv(out / "trajectory.csv")
    result = {
        "rates": r.as_dict(),
        "max_trace_deviation": float(traj.trace_deviation().max()),
        "min_eigenvalue": float(traj.min_eigenvalues().min()),
        "final_populations": [float(x) for x in traj.populations()[-1]],
    }
    return result, ["trajectory.csv"]


def _feasibility_run(cfg, out, kind):
    r = cfg.rates()
    scan = feasibility.population_feasible_region if kind == "pop" else \
        feasibility.coherence_feasible_region
    maps, files = {}, []
    for t_f in cfg.float_list("scan.t_f"):
        fmap = scan(t_f, r, grid_step=cfg["grid_step"], omega_cap=cfg["omega_cap"], dt=cfg["dt"])
        name = f"region_{kind}_tf{t_f:g}.csv"
        fmap.to_csv(out / name)
        maps[t_f] = fmap
        files.append(name)
    order = sorted(maps)
    inclusion = {
        f"{a:g}_in_{b:g}": maps[a].is_subset_of(maps[b]) for a, b in zip(order, order[1:])
    }
    result = {
        "rates": r.as_dict(),
        "feasible_counts": {f"{t:g}": maps[t].feasible_count() for t in order},
        "cells": {f"{t:g}": len(maps[t].cells) for t in order},
        "shorter_in_longer": inclusion,
    }
    return result, files


def _tomo_run(cfg, out):
    F = None
    if cfg["tomo.calibration"] is not None:
        F = tomography.CalibrationMatrix.load(cfg["tomo.calibration"])
    result = {}
    if cfg["tomo.reads"] is not None:
        # four lines "P0,P1,P2", one per rotation setting; '#' starts a comment
        measured = np.loadtxt(cfg["tomo.reads"], delimiter=",", ndmin=2)
    else:
        try:
            p = DensityParams(*(float(x) for x in cfg["tomo.state"].split(",")))
        except (TypeError, ValueError):
            raise ConfigError("tomo.state must be five numbers f1,f2,h1,h2,h3") from None
        ideal = tomography.tomo_rotations(params_to_matrix(p)).values
        measured = ideal if F is None else np.array([F.apply(row) for row in ideal])
        if cfg["tomo.shots"] > 0:
            rng = np.random.default_rng(cfg["seed"])
            probs = np.clip(measured, 0.0, None)
            probs = probs / probs.sum(axis=1, keepdims=True)
            measured = np.array([rng.multinomial(cfg["tomo.shots"], q) for q in probs]) \
                / cfg["tomo.shots"]
        result["state"] = dict(zip(("f1", "f2", "h1", "h2", "h3"), p.as_tuple()))
    if measured.shape != (4, 3):
        raise ConfigError(f"tomography reads must be 4 rows of P0,P1,P2; got {measured.shape}")
    corrected = measured if F is None else np.array([tomography.calibrate(m, F) for m in measured])
    reads = tomography.DiagonalReads(corrected)
    h1, h2, h3 = tomography.reconstruct_coherences(reads)
    header = ["setting", "P0", "P1", "P2"]
    _csv.write(out / "reads.csv", header,
               ([k + 1, *map(float, row)] for k, row in enumerate(corrected)))
    result["reconstructed"] = {"h1": h1, "h2": h2, "h3": h3}
    result["calibrated"] = F is not None
    return result, ["reads.csv"]


def _qb_run(cfg, out):
    qcfg = analysis.QBConfig(
        omega10=cfg["qb.omega10"],
        charge_level=cfg["qb.charge_level"],
        t_charge=cfg["qb.t_charge"],
        t_store=cfg["qb.t_store"],
        t_discharge=cfg["qb.t_discharge"],
        discharge_level=cfg["qb.discharge_level"],
        rates=analysis.two_level_rates(cfg["rates.t1_01"], cfg["rates.t2_01"]),
    )
    res = analysis.qb_scenario(qcfg, dt=cfg["dt"], omega_cap=cfg["omega_cap"])
    res.pulses.to_csv(out / "pulses.csv")
    res.traj.to_csv(out / "trajectory.csv")
    res.energy_csv(out / "energy.csv")
    result = {
        "report": res.report.as_dict(),
        "hold_variation": res.hold_variation(),
        "free_decay_retention": analysis.free_decay_retention(qcfg.t_store, qcfg.rates),
    }
    return result, ["pulses.csv", "trajectory.csv", "energy.csv"]


def run(cfg):
    """Execute one configured run; returns the manifest dictionary."""
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOError(f"cannot create output directory {out}: {exc}") from exc
    mode = cfg["mode"]
    if mode == "design-pop":
        result, files = _design_run(cfg, out, "pop")
    elif mode == "design-coh":
        result, files = _design_run(cfg, out, "coh")
    elif mode == "simulate":
        result, files = _simulate_run(cfg, out)
    elif mode == "feasibility-pop":
        result, files = _feasibility_run(cfg, out, "pop")
    elif mode == "feasibility-coh":
        result, files = _feasibility_run(cfg, out, "coh")
    elif mode == "tomo":
        result, files = _tomo_run(cfg, out)
    else:
        result, files = _qb_run(cfg, out)
    manifest = {
        "pulseforge_version": __version__,
        "config": cfg.as_dict(),
        "outputs": files,
        "result": result,
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


def build_parser():
    p = argparse.ArgumentParser(prog="pulseforge", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--out", help="output directory")
    p.add_argument("--dt", help="time step, us")
    p.add_argument("--omega-cap", dest="omega_cap", help="drive cap, rad/us")
    p.add_argument("--grid-step", dest="grid_step", help="feasibility grid step")
    p.add_argument("--tf", help="final time, us")
    p.add_argument("--target-p1", dest="target_p1")
    p.add_argument("--target-p2", dest="target_p2")
    p.add_argument("--target-h2", dest="target_h2")
    p.add_argument("--target-h3", dest="target_h3")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key; may be repeated")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _fail(category, message, reason=None):
    payload = {"error": category, "message": message}
    if reason is not None:
        payload["reason"] = reason
    print(json.dumps(payload), file=sys.stderr)
    return EXIT_CODES.get(category, 1)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = {}
        if args.config:
            path = Path(args.config)
            try:
                text = path.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
            raw.update(parse_config_text(text, str(path)))
        for flag, key in FLAG_KEYS.items():
            value = getattr(args, flag)
            if value is not None:
                raw[key] = value
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = (s.strip() for s in item.split("=", 1))
            raw[key] = value
        cfg = RunConfig.resolve(raw)
        manifest = run(cfg)
    except InfeasibleTarget as exc:
        return _fail(exc.category, str(exc), exc.reason)
    except PulseForgeError as exc:
        return _fail(exc.category, str(exc))
    except (OSError, ValueError) as exc:
        return _fail("io" if isinstance(exc, OSError) else "error", str(exc))
    print(json.dumps({"out": str(cfg["out"]), "outputs": manifest["outputs"]}))
    return 0

