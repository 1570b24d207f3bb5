"""CSV, summary and figure emission for a finished run."""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from .. import plotting


def _f(v):
    return f"{float(v):.17g}"


def write_table(path, header, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_f(v) for v in row])
    return path


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return None if math.isnan(v) else ("inf" if math.isinf(v) else v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def emit_outputs(rec, out_dir):
    """Write time series, field profiles, spectrum, summary, plot scripts and PNGs."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir!r}: {exc}") from exc
    if not os.access(out_dir, os.W_OK):
        raise OSError(f"output directory {out_dir!r} is not writable")
    out = rec.outputs
    s = rec.series
    t_rabi = rec.diagnostics["t_rabi"]

    cols = [k for k in s if k != "t"]
    out["timeseries"] = write_table(os.path.join(out_dir, "timeseries.csv"), ["t"] + cols,
                                    [s["t"]] + [s[k] for k in cols])
    pop_cols = [c for c in cols if c.startswith("P")]
    body = "d = read('timeseries.csv')\n"
    body += "for c in %r:\n    plt.plot(d['t'], d[c], label=c)\n" % pop_cols
    body += "plt.xlabel('t'); plt.ylabel('population'); plt.legend()"
    plotting.write_plot_script(os.path.join(out_dir, "plot_population.py"), "atomic populations",
                               ["timeseries.csv"], body, "population.png")
    out["population_png"] = plotting.plot_timeseries(out["timeseries"], os.path.join(out_dir, "population.png"),
                                                     pop_cols, ylabel="population", title=rec.config.outputs.label)
    if "C" in s:
        body = "d = read('timeseries.csv')\nplt.plot(d['t'] / %r, d['C'])\n" % t_rabi
        body += "plt.xlabel('t / T_Rabi'); plt.ylabel('concurrence')"
        plotting.write_plot_script(os.path.join(out_dir, "plot_concurrence.py"), "the concurrence",
                                   ["timeseries.csv"], body, "concurrence.png")
        out["concurrence_png"] = plotting.plot_timeseries(
            out["timeseries"], os.path.join(out_dir, "concurrence.png"), ["C"], t_scale=t_rabi,
            xlabel="t / T_Rabi", ylabel="concurrence", title=rec.config.outputs.label)

    if rec.fields:
        names = []
        for t_req, (t_got, x, E) in sorted(rec.fields.items()):
            name = f"field_t{t_req:g}.csv"
            write_table(os.path.join(out_dir, name), ["x", "E"], [x, E])
            names.append((f"t={t_got:.4g}", name))
        out["fields"] = [n for _, n in names]
        body = "for lab, name in %r:\n    d = read(name)\n    plt.plot(d['x'], d['E'], lw=0.8, label=lab)\n" % names
        body += "plt.xlabel('x'); plt.ylabel('one-photon field'); plt.legend()"
        plotting.write_plot_script(os.path.join(out_dir, "plot_field.py"), "one-photon field profiles",
                                   [n for _, n in names], body, "field.png")
        out["field_png"] = plotting.plot_field([(lab, os.path.join(out_dir, n)) for lab, n in names],
                                               os.path.join(out_dir, "field.png"), rec.config.outputs.label)

    if rec.spectrum is not None:
        sp = rec.spectrum
        a = sp.amplitudes
        out["spectrum"] = write_table(os.path.join(out_dir, "spectrum.csv"), ["omega", "re", "im", "power"],
                                      [sp.omegas, a.real, a.imag, np.abs(a) ** 2])
        body = "d = read('spectrum.csv')\nplt.semilogy(d['omega'], d['power'], '.-')\n"
        body += "plt.xlabel('omega'); plt.ylabel('|G|^2')"
        plotting.write_plot_script(os.path.join(out_dir, "plot_spectrum.py"), "the spectral response",
                                   ["spectrum.csv"], body, "spectrum.png")
        out["spectrum_png"] = plotting.plot_spectrum(out["spectrum"], os.path.join(out_dir, "spectrum.png"),
                                                     rec.config.outputs.label)

    with open(os.path.join(out_dir, "config.ini"), "w", encoding="utf-8") as fh:
        fh.write(rec.config.to_ini())
    summary = dict(rec.summary)
    summary["wall_clock"] = rec.wall_clock
    summary["diagnostics"] = rec.diagnostics
    summary["mode_cache"] = rec.cache_path
    summary["outputs"] = dict(out)
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
    out["summary"] = path
    return out
