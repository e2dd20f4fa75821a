"""Config-driven scans over detuning, pulse energy, storage time and pumping."""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import io as rio
from .greens import extract_greens, noise_numbers
from .medium import field_kappa, ghz, phase_mismatch
from .photon_stats import G2Model, g2_out
from .presets import CASES, case_setup, get_preset, ideal_case
from .solver import (GridError, SimGrid, SolverError, memory_run, window_photons)

log = logging.getLogger(__name__)

SCAN_VARIABLES = ("detuning", "energy", "storage_time", "alpha")
OBSERVABLES = ("eta", "eta_minus_ideal", "delta_k", "anti_stokes_OD",
               "N_noise_by_window", "mu1", "g2_curve")
ETA_ONLY = ("eta", "eta_minus_ideal", "delta_k", "anti_stokes_OD")
# units of the scan variable as given in ScanSpec.range
UNITS = {"detuning": "GHz", "energy": "pJ", "storage_time": "ns", "alpha": ""}


@dataclass(frozen=True)
class ScanSpec:
    """One scan; ``range`` is ``(lo, hi, n_points)`` in the units of ``UNITS``.

    The detuning variable is the magnitude ``|Delta_s|`` in GHz; each case
    places it on its own side of resonance.
    """

    scan_variable: str
    range: tuple
    cases: tuple = ("BNS", "FWM_off")
    base_preset: str = "sim750"
    outputs: tuple = ("eta",)
    n_z: int = 200
    n_t: int = 2000
    tol: float = 1e-8
    N_F: float = 0.0
    greens_grid: tuple = (40, 1000)

    def __post_init__(self):
        object.__setattr__(self, "range", tuple(self.range))
        object.__setattr__(self, "cases", tuple(self.cases))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self):
        out = []
        if self.scan_variable not in SCAN_VARIABLES:
            out.append(f"scan_variable must be one of {SCAN_VARIABLES}")
        if len(self.range) != 3 or int(self.range[2]) < 2:
            out.append("range must be (lo, hi, n_points) with n_points >= 2")
        if not self.cases:
            out.append("cases must be non-empty")
        for c in self.cases:
            if c not in CASES:
                out.append(f"unknown case {c!r}")
        for o in self.outputs:
            if o not in OBSERVABLES:
                out.append(f"unknown observable {o!r}")
        if any(c.startswith("FWM_off") for c in self.cases):
            bad = [o for o in self.outputs if o not in ETA_ONLY]
            if bad:
                out.append(f"FWM_off cases only support eta-type observables, not {bad}")
        return out

    def values(self):
        lo, hi, n = self.range
        return np.linspace(float(lo), float(hi), int(n))


def default_detuning_spec(**kw):
    """101 points over +-5 GHz around |Delta_s| = 2 Delta_hf."""
    centre = 2 * 9.192631770
    base = dict(scan_variable="detuning", range=(centre - 5.0, centre + 5.0, 101),
                cases=("BNS", "STD", "FWM_off", "FWM_off_blue"),
                outputs=("eta", "eta_minus_ideal", "delta_k", "anti_stokes_OD"))
    base.update(kw)
    return ScanSpec(**base)


# ---------------------------------------------------------------------------
# single point

def point_setup(spec: ScanSpec, case, value):
    """``(medium, cfg, seq, opts)`` for one case at one scan value."""
    p = get_preset(spec.base_preset)
    medium = p.medium_params()
    mag = None
    changes = {}
    if spec.scan_variable == "detuning":
        mag = ghz(value)
    elif spec.scan_variable == "energy":
        changes = {"read_in_pJ": value, "read_out_pJ": value}
    elif spec.scan_variable == "storage_time":
        changes = {"storage_ns": value}
    elif spec.scan_variable == "alpha":
        medium = medium.with_(alpha=float(value))
    cfg, opts = case_setup(case, medium, detuning_magnitude=mag, with_decay=p.with_decay)
    seq = p.sequence(**changes)
    return medium, cfg, seq, opts


def scan_grid(spec: ScanSpec, seq, n_z=None, n_t=None):
    """Grid at the scan's resolution, lengthened to keep the base time step."""
    n_z = n_z or spec.n_z
    n_t = n_t or spec.n_t
    ref = SimGrid.for_sequence(get_preset(spec.base_preset).sequence(), n_z, n_t, tol=spec.tol)
    grid = SimGrid.for_sequence(seq, n_z, n_t, tol=spec.tol)
    span = grid.t_span[1] - grid.t_span[0]
    need = int(math.ceil(span / ref.dt - 1e-9)) + 1
    if need > n_t:
        grid = grid.with_(n_t=need)
    return grid


def _anti_stokes_od(medium, cfg):
    """Single-pass intensity exponent of the anti-Stokes field, ``2 Re(kappa_a) L / c``."""
    return 2.0 * field_kappa(medium, cfg.Delta_a).real * medium.L / medium.c


def evaluate_point(spec: ScanSpec, case, value):
    row = {"case": case, spec.scan_variable: float(value), "error": ""}
    try:
        medium, cfg, seq, opts = point_setup(spec, case, value)
        need_eta = any(o in spec.outputs for o in ("eta", "eta_minus_ideal", "mu1"))
        grid = scan_grid(spec, seq)
        if need_eta:
            r = memory_run(medium, cfg, seq, grid, opts)
            row["eta"] = r.eta_total
            row["leakage"] = r.leakage
            row["iterations"] = r.iterations
            row["residual"] = r.residual
        if "eta_minus_ideal" in spec.outputs:
            ic = ideal_case(case)
            if ic == case:
                row["eta_minus_ideal"] = 0.0
            else:
                m2, c2, s2, o2 = point_setup(spec, ic, value)
                row["eta_minus_ideal"] = r.eta_total - memory_run(m2, c2, s2, grid, o2).eta_total
        if "delta_k" in spec.outputs:
            row["delta_k"] = phase_mismatch(medium, cfg)
        if "anti_stokes_OD" in spec.outputs:
            row["anti_stokes_OD"] = _anti_stokes_od(medium, cfg)
        if any(o in spec.outputs for o in ("N_noise_by_window", "mu1", "g2_curve")):
            gz, gt = spec.greens_grid
            ggrid = scan_grid(spec, seq, gz, gt)
            G = extract_greens(medium, cfg, seq, ggrid, opts, modes=("a", "b"), workers=1)
            nb_in = noise_numbers(G, medium.alpha, window="input")
            nb_ret = noise_numbers(G, medium.alpha, window="retrieval")
            row["N_noise_input"] = nb_in.N_SRS + spec.N_F
            row["N_noise_retrieval"] = nb_ret.N_SRS + spec.N_F
            row["N_SRS_AS"] = nb_ret.N_SRS_AS
            row["N_SRS_P"] = nb_ret.N_SRS_P
            if "mu1" in spec.outputs:
                row["mu1"] = mu1(row["N_noise_retrieval"], row["eta"]) if row.get("eta", 0) > 0 else float("nan")
            if "g2_curve" in spec.outputs:
                model = G2Model(a=-1.0, N_SRS=nb_ret.N_SRS, N_F=spec.N_F)
                eta = row.get("eta")
                row["g2_fock_unit_herald"] = g2_out(model, eta) if eta else float("nan")
    except (SolverError, GridError, ValueError) as exc:
        log.warning("scan point %s=%s case %s failed: %s", spec.scan_variable, value, case, exc)
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


# ---------------------------------------------------------------------------
# scans

@dataclass
class ScanTable:
    spec: ScanSpec
    rows: list = field(default_factory=list)

    def header(self):
        keys = ["case", self.spec.scan_variable]
        for r in self.rows:
            for k in r:
                if k not in keys and k != "error":
                    keys.append(k)
        return keys + ["error"]

    def as_rows(self):
        h = self.header()
        return [[r.get(k, float("nan")) if k != "error" else r.get(k, "") for k in h] for r in self.rows]

    def column(self, case, key):
        rs = [r for r in self.rows if r["case"] == case]
        return (np.array([r[self.spec.scan_variable] for r in rs]),
                np.array([r.get(key, np.nan) for r in rs], dtype=float))

    def write_csv(self, path):
        return rio.write_csv(path, self.header(), self.as_rows())


def run_scan(spec: ScanSpec, workers=None) -> ScanTable:
    """Evaluate every (case, value) pair, concurrently; row order is fixed by the spec."""
    tasks = [(c, v) for c in spec.cases for v in spec.values()]
    workers = workers or int(os.environ.get("RMS_WORKERS", "0") or 0) or (os.cpu_count() or 1)
    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda cv: evaluate_point(spec, *cv), tasks))
    else:
        rows = [evaluate_point(spec, c, v) for c, v in tasks]
    return ScanTable(spec, rows)


def plot_tables(table: ScanTable):
    """Per-figure tables ``{stem: (header, rows)}``, one column per case."""
    spec = table.spec
    var = spec.scan_variable
    if var == "detuning":
        names = {"eta": "figA1a", "eta_minus_ideal": "figA1b", "delta_k": "figA1c",
                 "anti_stokes_OD": "figA1d"}
        xname = "abs_detuning_GHz"
    else:
        stem = {"energy": "fig3", "storage_time": "fig_storage", "alpha": "figA2"}[var]
        names = {o: f"{stem}_{o}" for o in ("eta", "eta_minus_ideal", "N_noise_retrieval",
                                              "N_noise_input", "mu1")}
        xname = f"{var}_{UNITS[var]}" if UNITS[var] else var
    out = {}
    x = spec.values()
    for key, stem in names.items():
        cols = []
        for case in spec.cases:
            _, y = table.column(case, key)
            if np.all(np.isnan(y)):
                continue
            cols.append((case, y))
        if not cols:
            continue
        header = [xname] + [c for c, _ in cols]
        out[stem] = (header, [[x[i]] + [y[i] for _, y in cols] for i in range(len(x))])
    return out


def emit_plot_data(table: ScanTable, out_dir):
    """Write ``plot_tables`` as ``<stem>.csv`` files; returns the paths."""
    written = []
    for stem, (header, rows) in plot_tables(table).items():
        path = os.path.join(out_dir, f"{stem}.csv")
        rio.write_csv(path, header, rows)
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# windows and figures of merit

def compare_windows(medium, cfg, seq, grid, opts, *, windows=None, greens_grid=None,
                    workers=None, N_F=0.0):
    """Noise photons per window (vacuum-seeded, via kernels) next to a signal run.

    Returns rows ``(window, lo_ns, hi_ns, N_noise, N_SRS_AS, N_SRS_P, N_run)``
    where ``N_run`` is the photon number a memory run with the sequence's
    signal puts in that window.  ``N_F`` is a per-pulse fluorescence floor
    added to every window.
    """
    windows = windows or seq.windows()
    ggrid = greens_grid or grid
    t0, t1 = ggrid.t_span
    for name, (lo, hi) in windows.items():
        if lo < t0 or hi > t1:
            raise ValueError(f"window {name} outside the grid span")
    G = extract_greens(medium, cfg, seq, ggrid, opts, modes=("a", "b"), workers=workers)
    run = memory_run(medium, cfg, seq, grid, opts) if seq.N_in > 0 else None
    rows = []
    for name, win in windows.items():
        nb = noise_numbers(G, medium.alpha, window=win)
        n_run = window_photons(run.t, run.trace_S, win, grid.dt) if run is not None else 0.0
        rows.append({"window": name, "lo_ns": win[0] * 1e3, "hi_ns": win[1] * 1e3,
                     "N_noise": nb.N_SRS + N_F, "N_SRS_AS": nb.N_SRS_AS, "N_SRS_P": nb.N_SRS_P,
                     "N_run": n_run})
    return rows


def mu1(noise, eta):
    """Noise photons per unit efficiency."""
    if not eta > 0:
        raise ValueError("eta must be > 0")
    return noise / eta
