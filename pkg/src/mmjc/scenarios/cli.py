"""Command-line entry point.

    mmjc run --preset lossy-cavity --sigma 1e11 --out results/cav
    mmjc run --config my.ini --variant ma --cache .cache --threads 4
    mmjc sweep --preset pec-mirror --param h --values 0.25,0.375,0.5 --out results/purcell
    mmjc show --preset esd --env free-space --p 1.5      # print the INI config
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

from .. import plotting
from . import presets
from .config import ConfigError, ScenarioConfig
from .outputs import write_table
from .pipeline import StageError, run

PRESET_ARGS = ("h", "sigma", "N", "d", "env", "p", "a")


def _add_common(p):
    p.add_argument("--config", help="INI scenario file")
    p.add_argument("--preset", choices=sorted(presets.PRESETS), help="built-in scenario")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--variant", choices=["bama", "ma", "ba"], help="field-mode variant")
    p.add_argument("--cache", default=None, help="mode-cache directory")
    p.add_argument("--threads", type=int, default=1, help="parallel frequency solves")
    p.add_argument("--t-final", type=float, default=None, help="override the simulated time")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any config entry (repeatable)")
    g = p.add_argument_group("preset parameters (lengths in wavelengths)")
    g.add_argument("--h", type=float, help="pec-mirror: atom-mirror distance")
    g.add_argument("--sigma", type=float, help="lossy-cavity / esd: wall conductivity")
    g.add_argument("--N", type=int, help="superradiance: number of atoms")
    g.add_argument("--d", type=float, help="superradiance: atom spacing")
    g.add_argument("--env", choices=["free-space", "lossy-cavity"], help="esd: environment")
    g.add_argument("--p", type=float, help="esd: atom (cavity) separation")
    g.add_argument("--a", type=float, help="esd: initial |ee> parameter")


def build_config(args, overrides=None) -> ScenarioConfig:
    kw = {k: getattr(args, k) for k in PRESET_ARGS if getattr(args, k, None) is not None}
    kw.update(overrides or {})
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        if kw:
            raise ConfigError("preset parameters only apply with --preset")
        cfg = ScenarioConfig.load(args.config)
    elif args.preset:
        if args.preset in ("lossy-cavity", "esd") and args.variant:
            kw["variant"] = args.variant
        if args.t_final is not None:
            kw["t_final"] = args.t_final
        allowed = presets.PRESETS[args.preset].__code__.co_varnames
        bad = [k for k in kw if k not in allowed]
        if bad:
            raise ConfigError(f"preset {args.preset} does not take {bad}")
        try:
            cfg = presets.build(args.preset, **kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        raise ConfigError("one of --config or --preset is required")
    if args.variant:
        cfg.model.variant = args.variant
    if args.t_final is not None:
        cfg.propagation.t_final = args.t_final
    for item in args.set:
        key, _, value = item.partition("=")
        cfg.set(key.strip(), value.strip())
    return cfg.validate()


def cmd_run(args):
    cfg = build_config(args)
    out = args.out or os.path.join("results", cfg.digest())
    rec = run(cfg, out_dir=out, cache_dir=args.cache, threads=args.threads)
    print(f"{cfg.outputs.label or 'run'}: wrote {len(rec.outputs)} outputs to {out} "
          f"({rec.wall_clock:.1f} s)")
    for key in ("decay", "omega_c", "kappa", "rate_ratio", "concurrence_first_zero"):
        if key in rec.summary:
            print(f"  {key}: {rec.summary[key]}")
    return 0


SWEEP_COLUMNS = ("gamma", "tau", "omega_c", "fwhm", "kappa", "visibility", "rate_ratio",
                 "concurrence_first_zero")


def _num(v):
    if v is None:
        return math.nan
    if v == "inf":
        return math.inf
    return float(v)


def cmd_sweep(args):
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values needs at least one number")
    out = args.out or os.path.join("results", f"sweep-{args.param}")
    rows = {c: [] for c in SWEEP_COLUMNS}
    for v in values:
        if args.param in PRESET_ARGS:
            value = int(v) if args.param == "N" else v
            cfg = build_config(args, {args.param: value})
        else:
            cfg = build_config(args)
            cfg.set(args.param, v)
            cfg.validate()
        sub = os.path.join(out, f"{args.param}={v:g}")
        rec = run(cfg, out_dir=sub, cache_dir=args.cache, threads=args.threads)
        s = rec.summary
        rows["gamma"].append(_num(s.get("decay", {}).get("gamma")))
        rows["tau"].append(_num(s.get("decay", {}).get("tau")))
        for c in SWEEP_COLUMNS[2:]:
            rows[c].append(_num(s.get(c)))
        print(f"{args.param}={v:g}: gamma={rows['gamma'][-1]:.6g}")
    path = write_table(os.path.join(out, "sweep.csv"), [args.param, *SWEEP_COLUMNS],
                       [values] + [rows[c] for c in SWEEP_COLUMNS])
    plotting.plot_sweep(path, os.path.join(out, "sweep.png"), args.param, "gamma",
                        ylabel="decay rate", title=f"sweep over {args.param}")
    body = "d = read('sweep.csv')\nplt.plot(d[%r], d['gamma'], 'o-')\nplt.xlabel(%r); plt.ylabel('decay rate')" % (
        args.param, args.param)
    plotting.write_plot_script(os.path.join(out, "plot_sweep.py"), "the sweep", ["sweep.csv"], body, "sweep.png")
    print(f"sweep table: {path}")
    return 0


def cmd_show(args):
    sys.stdout.write(build_config(args).to_ini())
    return 0


def make_parser():
    ap = argparse.ArgumentParser(prog="mmjc", description="Multimode Jaynes/Tavis-Cummings scenarios in 1D.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one scenario")
    _add_common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", help="run a scenario over a list of parameter values")
    _add_common(p)
    p.add_argument("--param", required=True, help="preset parameter (h, sigma, ...) or SECTION.KEY")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("show", help="print the resolved configuration as INI")
    _add_common(p)
    p.set_defaults(func=cmd_show)
    return ap


def main(argv=None):
    ap = make_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
