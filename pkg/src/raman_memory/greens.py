"""Green's-function kernels of the linear memory and the noise budget.

Kernels are stored as sample matrices: ``out_i = sum_j G[i, j] @ in_j`` with
inputs and outputs sampled on the solver grid.  Mode labels are

    "s"  signal (time samples at the cell entrance / exit)
    "a"  anti-Stokes in conjugate form, i.e. the a-dagger input
    "b"  spin wave (z samples at the first / last time sample)

A continuous kernel is recovered as ``G[i, j] / w_j`` with ``w_j`` the input
quadrature weight (``dt`` for time modes, ``dz`` for the spin wave).
"""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import io as rio
from .solver import (SimGrid, SolverOptions, build_coefficients, check_grid,
                     evolve_batch, window_mask)

log = logging.getLogger(__name__)

MODES = ("s", "a", "b")


@dataclass(frozen=True)
class GreensFunctionSet:
    G: dict
    t: np.ndarray
    z: np.ndarray
    dt: float
    dz: float
    windows: dict
    meta: dict = field(default_factory=dict)

    def weights(self, mode):
        if mode == "b":
            return np.full(self.z.size, self.dz)
        return np.full(self.t.size, self.dt)

    def size(self, mode):
        return self.z.size if mode == "b" else self.t.size

    def kernel(self, i, j):
        try:
            return self.G[(i, j)]
        except KeyError:
            raise KeyError(f"kernel ({i},{j}) was not extracted") from None

    def apply(self, s_in=None, a_in=None, b_in=None):
        """Outputs ``(s_out, a_out, b_out)`` for the given inputs (vacuum if None)."""
        inputs = {"s": s_in, "a": a_in, "b": b_in}
        out = {}
        for i in MODES:
            acc = np.zeros(self.size(i), complex)
            for j, x in inputs.items():
                if x is None:
                    continue
                acc = acc + self.kernel(i, j) @ np.asarray(x, complex)
            out[i] = acc
        return out["s"], out["a"], out["b"]


@dataclass(frozen=True)
class NoiseBudget:
    N_mem: float
    N_SRS_AS: float
    N_SRS_P: float
    eta: float
    N_F: Optional[float] = None
    window: tuple = ()

    @property
    def N_SRS(self):
        return self.N_SRS_AS + self.N_SRS_P

    @property
    def N_out(self):
        return self.N_mem + self.N_SRS_AS + self.N_SRS_P

    @property
    def N_noise(self):
        return self.N_SRS + (self.N_F or 0.0)

    @property
    def mu1(self):
        if self.N_F is None or not self.eta > 0:
            return float("nan")
        return (self.N_SRS_AS + self.N_SRS_P + self.N_F) / self.eta

    def to_dict(self):
        return {"N_mem": self.N_mem, "N_SRS_AS": self.N_SRS_AS, "N_SRS_P": self.N_SRS_P,
                "N_SRS": self.N_SRS, "N_out": self.N_out, "eta": self.eta,
                "N_F": self.N_F, "mu1": self.mu1, "window": list(self.window)}


# ---------------------------------------------------------------------------
# extraction

def _chunks(n, size):
    return [(k, min(k + size, n)) for k in range(0, n, size)]


def extract_greens(medium, cfg, seq, grid: SimGrid, opts: SolverOptions = SolverOptions(), *,
                   modes=MODES, chunk=16, workers=None) -> GreensFunctionSet:
    """Build the kernels column by column from unit inputs.

    Each time-mode column ``k`` is a single-sample input at ``t_k`` which, by
    causality, leaves all earlier samples at zero; a chunk of columns starts
    its sweeps at its earliest ``k``.  Chunks are solved concurrently.
    """
    check_grid(seq, grid)
    co = build_coefficients(medium, cfg, seq, grid, opts)
    nz, nt = grid.n_z, grid.n_t
    workers = workers or int(os.environ.get("RMS_WORKERS", "0") or 0) or (os.cpu_count() or 1)

    tasks = []
    for mode in modes:
        if mode not in MODES:
            raise ValueError(f"unknown input mode {mode!r}")
        n = nz if mode == "b" else nt
        for lo, hi in _chunks(n, chunk):
            tasks.append((mode, lo, hi))

    cols = {(i, j): np.zeros((nz if i == "b" else nt, nz if j == "b" else nt), complex)
            for j in modes for i in MODES}
    diag = {"iterations_max": 0, "residual_max": 0.0}

    def run(task):
        mode, lo, hi = task
        m = hi - lo
        s_in = np.zeros((m, nt), complex)
        a_in = np.zeros((m, nt), complex)
        b_in = np.zeros((m, nz), complex)
        idx = np.arange(m)
        if mode == "s":
            s_in[idx, lo + idx] = 1.0
        elif mode == "a":
            a_in[idx, lo + idx] = 1.0
        else:
            b_in[idx, lo + idx] = 1.0
        n0 = max(lo - 1, 0) if mode != "b" else 0
        S, A, B, it, res = evolve_batch(co, s_in, a_in, b_in, grid, n0=n0,
                                        acceleration=opts.acceleration)
        return task, S[:, -1, :].T.copy(), A[:, -1, :].T.copy(), B[:, :, -1].T.copy(), it, res

    def store(result):
        (mode, lo, hi), s_out, a_out, b_out, it, res = result
        cols[("s", mode)][:, lo:hi] = s_out
        cols[("a", mode)][:, lo:hi] = a_out
        cols[("b", mode)][:, lo:hi] = b_out
        diag["iterations_max"] = max(diag["iterations_max"], it)
        diag["residual_max"] = max(diag["residual_max"], res)

    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for r in pool.map(run, tasks):
                store(r)
    else:
        for task in tasks:
            store(run(task))

    meta = {"n_z": nz, "n_t": nt, "t_span": list(grid.t_span), "tol": grid.tol,
            "modes": list(modes), "Delta_s": cfg.Delta_s, "alpha": medium.alpha,
            "fwm_enabled": opts.fwm_enabled, **diag}
    return GreensFunctionSet(G=cols, t=grid.t, z=grid.z, dt=grid.dt, dz=grid.dz,
                             windows=seq.windows(), meta=meta)


# ---------------------------------------------------------------------------
# observables

def _window(G, window):
    if window is None:
        window = "retrieval"
    if isinstance(window, str):
        return G.windows[window]
    return tuple(window)


def output_photons(G: GreensFunctionSet, s_out, window=None):
    win = _window(G, window)
    mask = window_mask(G.t, win)
    return float(np.sum(np.abs(s_out[mask]) ** 2) * G.dt)


def efficiency_from_greens(G: GreensFunctionSet, input_mode, window=None):
    """Fraction of the input photons found in ``window`` of the signal output."""
    s_in = np.asarray(input_mode, complex)
    N_in = float(np.sum(np.abs(s_in) ** 2) * G.dt)
    if not N_in > 0:
        raise ValueError("input mode has zero norm")
    return output_photons(G, G.kernel("s", "s") @ s_in, window) / N_in


def vacuum_noise(G: GreensFunctionSet, source, window=None):
    """Photons in ``window`` seeded by one unit-occupation input mode family.

    ``sum_{i in window} sum_j (w_i / w_j) |G_sj[i, j]|^2``.
    """
    K = G.kernel("s", source)
    mask = window_mask(G.t, _window(G, window))
    w_in = G.weights(source)
    return float(G.dt * np.sum(np.abs(K[mask]) ** 2 / w_in[None, :]))


def noise_numbers(G: GreensFunctionSet, alpha, *, window=None, s_in=None, N_F=None) -> NoiseBudget:
    """Noise decomposition in one output window.

    Anti-Stokes enters as vacuum (one quantum per mode in the anti-normally
    ordered product), the spin wave as a thermal state of occupation alpha.
    Without ``s_in`` the memory term is zero (noise-only run).
    """
    if not 0 <= alpha <= 1:
        raise ValueError("alpha out of [0,1]")
    win = _window(G, window)
    n_as = vacuum_noise(G, "a", win) if ("s", "a") in G.G else 0.0
    n_p = alpha * vacuum_noise(G, "b", win) if alpha > 0 else 0.0
    if s_in is not None:
        s_in = np.asarray(s_in, complex)
        N_in = float(np.sum(np.abs(s_in) ** 2) * G.dt)
        n_mem = output_photons(G, G.kernel("s", "s") @ s_in, win)
        eta = n_mem / N_in if N_in > 0 else float("nan")
    else:
        n_mem, eta = 0.0, float("nan")
    return NoiseBudget(N_mem=n_mem, N_SRS_AS=n_as, N_SRS_P=n_p, eta=eta, N_F=N_F, window=win)


def quartic_integrals(G: GreensFunctionSet, power=4, pairs=None):
    """Discrete ``sum_ij w_i w_j |G[i, j]|^power`` for every kernel block.

    ``power=4`` is the definition used by the g2 model; ``power=2`` is
    offered for sensitivity checks.  Note the value depends on the sample
    spacing because G holds sample matrices.
    """
    if power not in (2, 4):
        raise ValueError("power must be 2 or 4")
    out = {}
    for (i, j), K in G.G.items():
        if pairs is not None and (i, j) not in pairs:
            continue
        wi = G.weights(i)
        wj = G.weights(j)
        out[(i, j)] = float(np.einsum("i,ij,j->", wi, np.abs(K) ** power, wj))
    return out


# ---------------------------------------------------------------------------
# serialisation

def kernel_rows(G: GreensFunctionSet, pairs=None):
    for (i, j), K in sorted(G.G.items()):
        if pairs is not None and (i, j) not in pairs:
            continue
        rows, cols = np.nonzero(K)
        for r, c in zip(rows, cols):
            v = K[r, c]
            yield (i, j, int(r), int(c), float(v.real), float(v.imag))


def kernel_texts(G: GreensFunctionSet, pairs=None):
    """``(csv, json)`` text of the nonzero kernel entries and their metadata."""
    csv_txt = rio.csv_text(("i", "j", "t_index", "tprime_index", "re", "im"), kernel_rows(G, pairs))
    meta = dict(G.meta)
    meta.update({"dt": G.dt, "dz": G.dz, "windows": {k: list(v) for k, v in G.windows.items()},
                 "layout": "out_i = sum_j G[i,j] @ in_j (sample matrices); a = anti-Stokes dagger",
                 "omitted": "entries equal to zero"})
    return csv_txt, rio.to_json(meta)


def write_kernels(G: GreensFunctionSet, csv_path, json_path, pairs=None):
    """Dump nonzero kernel entries as CSV plus a JSON metadata sidecar."""
    csv_txt, json_txt = kernel_texts(G, pairs)
    rio.atomic_write_text(csv_path, csv_txt)
    rio.atomic_write_text(json_path, json_txt)


def read_kernels(csv_path, json_path) -> GreensFunctionSet:
    with open(json_path) as fh:
        meta = json.load(fh)
    nz, nt = meta["n_z"], meta["n_t"]
    t = np.linspace(meta["t_span"][0], meta["t_span"][1], nt)
    z = np.linspace(0.0, 1.0, nz)
    G = {(i, j): np.zeros((nz if i == "b" else nt, nz if j == "b" else nt), complex)
         for j in meta["modes"] for i in MODES}
    import csv
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for i, j, r, c, re, im in reader:
            G[(i, j)][int(r), int(c)] = complex(float(re), float(im))
    windows = {k: tuple(v) for k, v in meta["windows"].items()}
    return GreensFunctionSet(G=G, t=t, z=z, dt=meta["dt"], dz=meta["dz"], windows=windows, meta=meta)
