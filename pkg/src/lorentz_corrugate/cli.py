"""Command-line surface: bounds, decompose, corrugate, run, verify, info."""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .bounds import compute_constants
from .corrugation import cp_step, remainder_quadrature, select_corrugation_number
from .decomp import MAX_FORMS, build_dictionary, decompose, resolve_threads
from .errors import ConfigError, EngineError
from .fields import (
    FLOAT_FMT,
    Grid,
    LinearForm,
    export_obj,
    read_metric_csv,
    read_scalar_csv,
)
from .scenarios import SCENARIOS, flat_inclusion, scenario, strip_eta_field
from .scheduler import run_nash_kuiper
from .verify import run_checks

MODES = ("practical", "theoretical")


@dataclass
class RunConfig:
    """Keys of run.json; every field is echoed into config.resolved.json."""

    grid: int = 257
    stages: int = 6
    mode: str = "practical"
    eps: float = 0.05
    dictionary_k: int = 5
    scenario: str = "flat-shrink"
    quadrature_samples: int = 64
    n_cap: int = 2**20
    select_start: int = 16
    alpha_max_hint: float = 2.0
    threads: int = 0  # 0 means: env override or machine parallelism

    def validate(self):
        if self.grid < 2:
            raise ConfigError("grid must be at least 2")
        if self.stages < 1:
            raise ConfigError("stages must be positive")
        if self.mode not in MODES:
            raise ConfigError("mode must be one of %s" % (MODES,))
        if not 0.0 < self.eps:
            raise ConfigError("eps must be positive")
        if not 3 <= self.dictionary_k <= MAX_FORMS:
            raise ConfigError("dictionary_k must be in [3, %d]" % MAX_FORMS)
        if self.scenario not in SCENARIOS:
            raise ConfigError(
                "scenario %r not registered (%s)" % (self.scenario, ", ".join(sorted(SCENARIOS)))
            )
        if self.quadrature_samples < 2:
            raise ConfigError("quadrature_samples must be at least 2")
        if self.n_cap < self.select_start or self.select_start < 1:
            raise ConfigError("need 1 <= select_start <= n_cap")
        if self.alpha_max_hint <= 0.0:
            raise ConfigError("alpha_max_hint must be positive")
        if self.threads < 0:
            raise ConfigError("threads must be nonnegative")

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError("cannot read config: %s" % exc) from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config is not valid JSON: %s" % exc) from None
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError("unknown config keys: %s" % ", ".join(sorted(unknown)))
        kinds = {"int": int, "float": (int, float), "str": str}
        for key, value in raw.items():
            want = cls.__dataclass_fields__[key].type
            if isinstance(value, bool) or not isinstance(value, kinds[want]):
                raise ConfigError("config key %r expects %s" % (key, want))
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def resolved_threads(self):
        if self.threads:
            return self.threads
        env = os.environ.get("LORENTZ_CORRUGATE_THREADS")
        if env:
            return resolve_threads(env)
        return os.cpu_count() or 1


def _parse_ell(text):
    try:
        a, b = (float(p) for p in text.split(","))
    except ValueError:
        raise ConfigError("--ell expects 'a,b' with two floats") from None
    if a == 0.0 and b == 0.0:
        raise ConfigError("--ell must be nonzero")
    return LinearForm(a, b)


def _cmd_bounds(args):
    bc = compute_constants(args.alpha_max, args.k)
    if args.scenario is not None:
        gr = Grid(args.grid, args.grid)
        sc = scenario(args.scenario)
        f0, g = sc.build(gr)
        from .fields import isometric_default

        dec = decompose(isometric_default(f0, g), build_dictionary(args.k))
        bc = compute_constants(args.alpha_max, args.k, decomposition=dec, f0=f0, g=g)
    rows = bc.rows()
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print("%-*s  %s" % (width, name, FLOAT_FMT % value))
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("name,value\n")
            for name, value in rows:
                fh.write(("%s," + FLOAT_FMT + "\n") % (name, value))
    return 0


def _cmd_decompose(args):
    delta = read_metric_csv(args.metric)
    dic = build_dictionary(args.k)
    dec = decompose(delta, dic, threads=args.threads)
    nx, ny = delta.shape
    with open(args.out, "w") as fh:
        header = ",".join("eta_%d" % (j + 1) for j in range(dic.k))
        fh.write("x_idx,y_idx,%s\n" % header)
        for i in range(nx):
            for j in range(ny):
                vals = ",".join(FLOAT_FMT % dec.etas[q][i, j] for q in range(dic.k))
                fh.write("%d,%d,%s\n" % (i, j, vals))
    print("decomposed %dx%d field over %d forms, residual %.3e" % (nx, ny, dic.k, dec.residual))
    return 0


def _cmd_corrugate(args):
    gr = Grid(args.grid, args.grid)
    f = flat_inclusion(gr)
    eta = read_scalar_csv(args.eta_file) if args.eta_file else strip_eta_field(gr)
    if eta.shape != gr.shape:
        raise ConfigError("eta field shape %s does not match --grid %d" % (eta.shape, args.grid))
    ell = _parse_ell(args.ell)
    if args.N is not None:
        out, rec = cp_step(f, eta, ell, args.N)
    else:
        out, rec = select_corrugation_number(f, eta, ell, args.eps)
    export_obj(out, args.out)
    print(
        "corrugated at N=%d: sup default %.3e, alpha_max %.6f, C0 shift %.3e"
        % (rec.N, rec.sup_default, rec.alpha_max, rec.c0_shift)
    )
    if args.record:
        _write_record(args.record, rec, args.quadrature_samples)
    return 0


def _write_record(path, rec, samples):
    rows = [
        ("N", rec.N),
        ("alpha_max", rec.alpha_max),
        ("orders", rec.orders),
        ("eta_max", rec.eta_max),
        ("sup_default", rec.sup_default),
        ("c0_shift", rec.c0_shift),
        ("c1_shift", rec.c1_shift),
        ("c1_shift_euclid", rec.c1_shift_euclid),
        ("spacelike_min", rec.spacelike_min),
    ]
    rows += sorted(rec.audits.items())
    qc, qs = remainder_quadrature(rec.alpha_max, 0.37, samples_per_period=samples)
    rows.append(("quadrature_crosscheck_Ac", qc))
    rows.append(("quadrature_crosscheck_As", qs))
    with open(path, "w") as fh:
        fh.write("name,value\n")
        for name, value in rows:
            if isinstance(value, (int, np.integer)):
                fh.write("%s,%d\n" % (name, value))
            else:
                fh.write(("%s," + FLOAT_FMT + "\n") % (name, value))


def _cmd_run(args):
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    cfg.validate()
    gr = Grid(cfg.grid, cfg.grid)
    sc = scenario(cfg.scenario)
    f0, g = sc.build(gr)
    os.makedirs(args.outdir, exist_ok=True)
    resolved = asdict(cfg)
    resolved["threads"] = cfg.resolved_threads()
    resolved["outdir"] = args.outdir
    with open(os.path.join(args.outdir, "config.resolved.json"), "w") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)
        fh.write("\n")
    final, ledger = run_nash_kuiper(
        f0,
        g,
        stages=cfg.stages,
        mode=cfg.mode,
        eps=cfg.eps,
        dictionary=build_dictionary(cfg.dictionary_k),
        alpha_max_hint=cfg.alpha_max_hint,
        outdir=args.outdir,
        select_start=cfg.select_start,
        n_cap=cfg.n_cap,
        threads=resolved["threads"],
    )
    s = ledger.summary
    print("stages: %d (%s), grid %dx%d" % (cfg.stages, cfg.mode, cfg.grid, cfg.grid))
    print("final sup default: %.6e (initial %.6e)" % (s["final_sup_default"], s["initial_sup_default"]))
    print("C0 drift: %.6e of budget %.6e" % (s["c0_total"], s["c0_budget_total"]))
    print("summability partial sum: %.6e" % s["summability_partial_sum"])
    print("artifacts in %s" % args.outdir)
    return 0


def _cmd_verify(args):
    results = run_checks(level=args.level)
    failed = 0
    for res in results:
        print(res.line())
        failed += 0 if res.passed else 1
    print("%d/%d checks passed" % (len(results) - failed, len(results)))
    return 0 if failed == 0 else 1


def _cmd_info(args):
    print("lorentz-corrugate %s" % __version__)
    print("scenarios:")
    for name in sorted(SCENARIOS):
        print("  %-16s %s" % (name, SCENARIOS[name].description))
    print("defaults: grid 257, stages 6, mode practical, eps 0.05, dictionary k=5")
    print("threads: LORENTZ_CORRUGATE_THREADS overrides the worker pool size")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="lorentz-corrugate", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", help="print the constants table")
    b.add_argument("--alpha-max", type=float, required=True)
    b.add_argument("--k", type=int, required=True)
    b.add_argument("--csv", default=None)
    b.add_argument("--scenario", default=None, help="also measure c and T on this scenario")
    b.add_argument("--grid", type=int, default=65)
    b.set_defaults(fn=_cmd_bounds)

    d = sub.add_parser("decompose", help="decompose a metric CSV over the dictionary")
    d.add_argument("--metric", required=True)
    d.add_argument("--k", type=int, default=5)
    d.add_argument("--out", required=True)
    d.add_argument("--threads", type=int, default=None)
    d.set_defaults(fn=_cmd_decompose)

    c = sub.add_parser("corrugate", help="single corrugation step on the flat plane")
    c.add_argument("--eta-file", default=None)
    c.add_argument("--ell", default="1,0")
    c.add_argument("--N", type=int, default=None)
    c.add_argument("--eps", type=float, default=None)
    c.add_argument("--grid", type=int, default=257)
    c.add_argument("--out", required=True)
    c.add_argument("--record", default=None)
    c.add_argument("--quadrature-samples", type=int, default=64)
    c.set_defaults(fn=_cmd_corrugate)

    r = sub.add_parser("run", help="staged run toward the target metric")
    r.add_argument("--config", default=None)
    r.add_argument("--outdir", required=True)
    r.set_defaults(fn=_cmd_run)

    v = sub.add_parser("verify", help="run the audit suite")
    v.add_argument("--level", choices=("quick", "full"), default="quick")
    v.set_defaults(fn=_cmd_verify)

    i = sub.add_parser("info", help="version, scenarios and defaults")
    i.set_defaults(fn=_cmd_info)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "corrugate" and (args.N is None) == (args.eps is None):
        print("error: give exactly one of --N or --eps", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except OSError as exc:
        # unreadable inputs and unwritable outputs are usage errors
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except EngineError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
