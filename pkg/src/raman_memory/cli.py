"""Command-line entry point: ``raman-memory <verb> --config cfg.json --out dir``.

Exit code 1 flags invalid input (config, data, arguments or output
directory) and exit code 2 a numerical failure.  Every verb computes all of its outputs in
memory first and only then writes them, each through a temp file and a
rename, followed by a ``run.json`` manifest.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from . import io as rio
from ._kernels import backend
from .config import ConfigError, Resolved, apply_overrides, validate_config
from .fitting import (FitError, RankDeficiencyError, fit_exponential, fit_g2_model,
                      fit_linear_noise_vs_alpha)
from .greens import extract_greens, kernel_texts, noise_numbers
from .medium import TWO_PI, absorption_spectrum
from .photon_stats import (PREDICTION_HEADER, G2Model, StatPoint, crossing_photon_number,
                           fock_prediction, heralding_threshold)
from .runner import ScanSpec, plot_tables, run_scan
from .solver import TRACE_HEADER, SolverError, check_grid, memory_run, trace_rows

VERBS = ("spectrum", "simulate", "greens", "scan", "g2-fit", "g2-predict",
         "lifetime-fit", "noise-vs-pumping")

log = logging.getLogger("raman_memory")


class UsageError(Exception):
    pass


class InputError(Exception):
    """Bad input detected after config validation (data files, presets)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="raman-memory", description="Raman memory simulations and noise analysis.")
    p.add_argument("verb", help=", ".join(VERBS))
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", default="out", help="output directory (created if missing)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted override, e.g. medium.alpha=0.002 (value parsed as JSON)")
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads (default: $RMS_WORKERS or CPU count)")
    p.add_argument("--emit-plot-data", action="store_true", help="scan: write per-figure CSVs")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--strict", dest="strict", action="store_true", default=True)
    g.add_argument("--lenient", dest="strict", action="store_false")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


# ---------------------------------------------------------------------------
# helpers

def _workers(args):
    if args.workers is not None:
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        return args.workers
    env = os.environ.get("RMS_WORKERS", "")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"RMS_WORKERS={env!r} is not an integer") from None
        if n < 1:
            raise UsageError("RMS_WORKERS must be >= 1")
        return n
    return None


def _load_document(path):
    if path is None:
        return {}, None
    if not os.path.isfile(path):
        raise InputError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise InputError("config must be a JSON object")
    return doc, os.path.dirname(os.path.abspath(path))


def _resolve_data_path(doc, base):
    data = doc.get("data")
    if isinstance(data, dict) and isinstance(data.get("path"), str) and base:
        if not os.path.isabs(data["path"]):
            data["path"] = os.path.normpath(os.path.join(base, data["path"]))
    return doc


def _prepare_out_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {path}: {exc.strerror}") from None
    if not os.path.isdir(path) or not os.access(path, os.W_OK | os.X_OK):
        raise InputError(f"output directory is not writable: {path}")


def _read_table(path, required, optional=()):
    if path is None:
        raise InputError("data.path is required for this verb")
    if not os.path.isfile(path):
        raise InputError(f"data file not found: {path}")
    try:
        header, arr = rio.read_csv(path)
    except (ValueError, StopIteration) as exc:
        raise InputError(f"cannot parse {path}: {exc}") from None
    missing = [c for c in required if c not in header]
    if missing:
        raise InputError(f"{path}: missing column(s) {missing}; expected {list(required) + list(optional)}")
    cols = {c: arr[:, header.index(c)] for c in list(required) + list(optional) if c in header}
    return cols


def _require(cfg, section, keys):
    missing = [k for k in keys if cfg[section][k] is None]
    if missing:
        raise InputError(f"{section}: missing {', '.join(missing)} (or set {section}.preset)")


# ---------------------------------------------------------------------------
# verbs: each returns (outputs, summary) with outputs = [(filename, text)]

def cmd_spectrum(res: Resolved, args, workers):
    medium = res.medium()
    sp = res.config["spectrum"]
    grid = np.linspace(sp["lo"], sp["hi"], sp["n_points"])
    # both line centres always sampled
    grid = np.unique(np.concatenate([grid, [0.0, medium.Delta_hf]]))
    grid = grid[(grid >= sp["lo"]) & (grid <= sp["hi"])]
    spec = absorption_spectrum(medium, grid)
    rows = [(D / (TWO_PI * 1e3), od) for D, od in spec]
    peak_pop = float(absorption_spectrum(medium, [0.0])[0, 1])
    peak_store = float(absorption_spectrum(medium, [medium.Delta_hf])[0, 1])
    # line strengths exclude the overlapping Lorentzian tail of the other line
    s_pop, s_store = medium.d * (1.0 - medium.alpha), medium.d * medium.alpha
    summary = {"peak_OD_populated": peak_pop, "peak_OD_storage": peak_store,
               "peak_ratio": peak_pop / peak_store if peak_store > 0 else float("inf"),
               "line_strength_populated": s_pop, "line_strength_storage": s_store,
               "line_strength_ratio": s_pop / s_store if s_store > 0 else float("inf")}
    return [("spectrum.csv", rio.csv_text(("detuning_GHz", "optical_depth"), rows)),
            ("spectrum_summary.json", rio.to_json(summary))], summary


def _physics(res):
    medium = res.medium()
    try:
        seq = res.sequence()
        cfg = res.detuning(medium)
        opts = res.solver_options()
    except ValueError as exc:
        raise InputError(str(exc)) from None
    return medium, seq, cfg, opts


def cmd_simulate(res: Resolved, args, workers):
    medium, seq, cfg, opts = _physics(res)
    grid = res.grid(seq)
    try:
        check_grid(seq, grid)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    r = memory_run(medium, cfg, seq, grid, opts)
    summary = r.summary()
    summary.update({"Delta_s": cfg.Delta_s, "Delta_s_GHz": cfg.Delta_s / (TWO_PI * 1e3),
                    "backend": backend()})
    return [("trace.csv", rio.csv_text(TRACE_HEADER, trace_rows(r))),
            ("result.json", rio.to_json(summary))], {"eta": r.eta_total, "iterations": r.iterations}


def cmd_greens(res: Resolved, args, workers):
    medium, seq, cfg, opts = _physics(res)
    grid = res.grid(seq, which="greens")
    try:
        check_grid(seq, grid)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    modes = tuple(res.config["greens"]["modes"])
    G = extract_greens(medium, cfg, seq, grid, opts, modes=modes, workers=workers)
    N_F = res.config["g2"]["N_F"]
    s_in = seq.signal.sample(grid.t) if "s" in modes and seq.N_in > 0 else None
    noise = {}
    for name in ("input", "retrieval"):
        nb = noise_numbers(G, medium.alpha, window=name, s_in=s_in, N_F=N_F)
        noise[name] = nb.to_dict()
    csv_txt, json_txt = kernel_texts(G)
    return [("kernels.csv", csv_txt), ("kernels.json", json_txt),
            ("noise.json", rio.to_json(noise))], {k: v["N_SRS"] for k, v in noise.items()}


def cmd_scan(res: Resolved, args, workers):
    c = res.config
    if c["preset"] is None:
        raise InputError("scan needs a base preset")
    try:
        spec = ScanSpec(scan_variable=c["scan"]["scan_variable"], range=tuple(c["scan"]["range"]),
                        cases=tuple(c["scan"]["cases"]), base_preset=c["preset"],
                        outputs=tuple(c["scan"]["outputs"]), n_z=c["grid"]["n_z"],
                        n_t=c["grid"]["n_t"], tol=c["grid"]["tol"], N_F=c["scan"]["N_F"],
                        greens_grid=(c["greens"]["n_z"], c["greens"]["n_t"]))
    except ValueError as exc:
        raise InputError(str(exc)) from None
    table = run_scan(spec, workers=workers)
    n_err = sum(1 for r in table.rows if r.get("error"))
    if n_err == len(table.rows):
        raise SolverError(f"all {n_err} scan points failed; first: {table.rows[0]['error']}")
    outputs = [("scan.csv", rio.csv_text(table.header(), table.as_rows()))]
    if args.emit_plot_data:
        for stem, (header, rows) in plot_tables(table).items():
            outputs.append((f"{stem}.csv", rio.csv_text(header, rows)))
    return outputs, {"points": len(table.rows), "failed_points": n_err}


def cmd_g2_fit(res: Resolved, args, workers):
    c = res.config
    cols = _read_table(c["data"]["path"], ("N_out", "g2"), ("g2_err",))
    err = cols.get("g2_err", np.full(cols["N_out"].size, np.nan))
    try:
        points = [StatPoint(float(n), float(g), float(e)) for n, g, e in zip(cols["N_out"], cols["g2"], err)]
    except ValueError as exc:
        raise InputError(f"data: {exc}") from None
    f = c["fit"]
    try:
        fit = fit_g2_model(points, f["fixed"], g2_F=f["g2_F"], bootstrap=f["bootstrap"],
                           n_boot=f["n_boot"], seed=f["seed"], workers=workers)
    except RankDeficiencyError as exc:
        raise InputError(f"data: {exc}") from None
    doc = fit.to_dict()
    return [("fit.json", rio.to_json(doc))], {"params": fit.params, "converged": fit.converged}


def cmd_g2_predict(res: Resolved, args, workers):
    g = res.config["g2"]
    _require(res.config, "g2", ("N_SRS", "N_F", "eta"))
    model = G2Model(a=g["a"], N_SRS=g["N_SRS"], N_F=g["N_F"], g2_F=g["g2_F"])
    eta_h = np.linspace(0.0, 1.0, g["n_eta_h"])
    eta_h[-1] = 1.0
    g2 = np.atleast_1d(fock_prediction(model, g["eta"], eta_h))
    thr = heralding_threshold(model, g["eta"])
    n_star = crossing_photon_number(model.fock())
    summary = {"model": model.to_dict(), "eta": g["eta"],
               "heralding_threshold": thr,
               "threshold_reachable": thr is not None,
               "N_out_crossing": n_star,
               "g2_at_unit_herald": float(g2[-1]),
               "g2_min": float(g2.min()),
               "nonclassical": bool(g2.min() < 1.0)}
    rows = list(zip(eta_h, g2))
    return [("g2_prediction.csv", rio.csv_text(PREDICTION_HEADER, rows)),
            ("threshold.json", rio.to_json(summary))], {
        "heralding_threshold": thr, "g2_at_unit_herald": float(g2[-1])}


def cmd_lifetime_fit(res: Resolved, args, workers):
    c = res.config
    outputs = []
    if c["data"]["path"] is not None:
        cols = _read_table(c["data"]["path"], ("t_ns", "value"), ("sigma",))
        t, y, sig = cols["t_ns"], cols["value"], cols.get("sigma")
    else:
        # simulated storage-time scan for the configured case
        if c["preset"] is None:
            raise InputError("lifetime-fit without data needs a preset")
        rng = c["scan"]["range"] if c["scan"]["scan_variable"] == "storage_time" else [50.0, 1000.0, 11]
        try:
            spec = ScanSpec("storage_time", tuple(rng), cases=(c["detuning"]["case"],),
                            base_preset=c["preset"], outputs=("eta",), n_z=c["grid"]["n_z"],
                            n_t=c["grid"]["n_t"], tol=c["grid"]["tol"])
        except ValueError as exc:
            raise InputError(str(exc)) from None
        table = run_scan(spec, workers=workers)
        bad = [r["error"] for r in table.rows if r.get("error")]
        if bad:
            raise SolverError(f"{len(bad)} storage-time points failed; first: {bad[0]}")
        t, y = table.column(c["detuning"]["case"], "eta")
        sig = None
        outputs.append(("lifetime_data.csv", rio.csv_text(("t_ns", "value"), zip(t, y))))
    try:
        fit = fit_exponential(t, y, sig)
    except RankDeficiencyError as exc:
        raise InputError(f"data: {exc}") from None
    except ValueError as exc:
        raise InputError(f"data: {exc}") from None
    doc = fit.to_dict()
    doc["tau_ns"] = fit.params["tau"]
    outputs.append(("lifetime.json", rio.to_json(doc)))
    return outputs, {"tau_ns": fit.params["tau"], "flags": fit.flags}


def cmd_noise_vs_pumping(res: Resolved, args, workers):
    c = res.config
    outputs = []
    if c["data"]["path"] is not None:
        cols = _read_table(c["data"]["path"], ("alpha", "N_noise"))
        alpha, noise = cols["alpha"], cols["N_noise"]
    else:
        medium, seq, cfg, opts = _physics(res)
        grid = res.grid(seq, which="greens")
        try:
            check_grid(seq, grid)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        alpha = np.array(c["pumping"]["alphas"], float)
        noise = []
        for a in alpha:
            m = medium.with_(alpha=float(a))
            G = extract_greens(m, cfg, seq, grid, opts, modes=("a", "b"), workers=workers)
            nb = noise_numbers(G, m.alpha, window=c["pumping"]["window"])
            noise.append(nb.N_SRS + c["pumping"]["N_F"])
        noise = np.array(noise)
        outputs.append(("noise_vs_pumping.csv", rio.csv_text(("alpha", "N_noise"), zip(alpha, noise))))
    try:
        fit = fit_linear_noise_vs_alpha(alpha, noise)
    except ValueError as exc:
        raise InputError(f"data: {exc}") from None
    outputs.append(("fit.json", rio.to_json(fit.to_dict())))
    return outputs, {"offset": fit.params["offset"], "slope": fit.params["slope"]}


COMMANDS = {
    "spectrum": cmd_spectrum, "simulate": cmd_simulate, "greens": cmd_greens,
    "scan": cmd_scan, "g2-fit": cmd_g2_fit, "g2-predict": cmd_g2_predict,
    "lifetime-fit": cmd_lifetime_fit, "noise-vs-pumping": cmd_noise_vs_pumping,
}


# ---------------------------------------------------------------------------

def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def run_command(argv=None) -> int:
    t0 = time.perf_counter()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        _err(f"usage: {exc}")
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.verb not in COMMANDS:
        _err(f"unknown verb {args.verb!r}; expected one of {', '.join(VERBS)}")
        return 1
    try:
        workers = _workers(args)
        doc, base = _load_document(args.config)
        doc = apply_overrides(doc, args.overrides)
        doc = _resolve_data_path(doc, base)
        res = validate_config(doc, strict=args.strict)
    except (UsageError, InputError) as exc:
        _err(str(exc))
        return 1
    except ConfigError as exc:
        for w in exc.warnings:
            print(f"warning: {w}", file=sys.stderr)
        for e in exc.errors:
            _err(f"config: {e}")
        return 1
    for w in res.warnings:
        print(f"warning: {w}", file=sys.stderr)
    try:
        _prepare_out_dir(args.out)
    except InputError as exc:
        _err(str(exc))
        return 1

    status, code, summary, outputs = "ok", 0, {}, []
    try:
        outputs, summary = COMMANDS[args.verb](res, args, workers)
    except InputError as exc:
        _err(str(exc))
        return 1
    except (SolverError, FitError, np.linalg.LinAlgError) as exc:
        status, code = f"numerical failure: {type(exc).__name__}: {exc}", 2
        _err(status)

    written = []
    try:
        for name, text in outputs:
            rio.atomic_write_text(os.path.join(args.out, name), text)
            written.append(name)
        manifest = {
            "verb": args.verb, "argv": argv, "version": __version__, "backend": backend(),
            "config": res.config, "notes": res.notes, "warnings": res.warnings,
            "overrides": args.overrides, "workers": workers, "status": status,
            "outputs": written, "summary": summary,
            "wall_time_s": time.perf_counter() - t0,
        }
        rio.write_json(os.path.join(args.out, "run.json"), manifest)
    except OSError as exc:
        _err(f"cannot write outputs to {args.out}: {exc.strerror}")
        return 1
    if code == 0:
        print(json.dumps({"verb": args.verb, "outputs": written, **_jsonable(summary)}, default=str))
    return code


def _jsonable(d):
    return json.loads(rio.to_json(d))


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
