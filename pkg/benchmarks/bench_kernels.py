"""Numba kernels against the pure-numpy fallback.

Times the three sweep kernels on solver-sized arrays and one full memory run
per backend, and checks that both backends agree.

    python3 benchmarks/bench_kernels.py [--nz 200 --nt 2000 --batch 1 --repeat 5]
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from raman_memory import _kernels
from raman_memory.medium import DetuningConfig
from raman_memory.presets import case_setup, get_preset
from raman_memory.solver import SimGrid, build_coefficients, memory_run


def best_of(fn, repeat):
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return min(ts)


def kernel_inputs(nz, nt, batch, seed=0):
    p = get_preset("sim750")
    medium = p.medium_params()
    seq = p.sequence()
    cfg, opts = case_setup("BNS", medium, with_decay=False)
    grid = SimGrid.for_sequence(seq, nz, nt)
    co = build_coefficients(medium, cfg, seq, grid, opts)
    rng = np.random.default_rng(seed)
    shape = (batch, nz, nt)
    B = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    s_in = np.tile(seq.signal.sample(grid.t), (batch, 1))
    a_in = np.zeros_like(s_in)
    b_in = np.zeros((batch, nz), complex)
    return co, B, s_in, a_in, b_in


def bench(nz, nt, batch, repeat):
    co, B, s_in, a_in, b_in = kernel_inputs(nz, nt, batch)
    out = {}
    results = {}
    for name, (zs, ts, rc) in {
        "numba": (_kernels.z_sweep_numba, _kernels.tau_sweep_numba, _kernels.rel_change_numba),
        "numpy": (_kernels.z_sweep_numpy, _kernels.tau_sweep_numpy, _kernels.rel_change_numpy),
    }.items():
        if zs is None:
            continue
        S = np.zeros_like(B)
        A = np.zeros_like(B)
        TB = np.zeros_like(B)
        # warm-up (JIT compile or cache load)
        zs(B, s_in, a_in, co.sigS, co.sigA, co.etd_s, co.etd_a, 0, S, A)
        ts(S, A, b_in, co.cS, co.cSh, co.cA, co.cAh, co.R, co.Rh, co.dt, 0, TB)
        rc(TB, B, 0)
        out[name] = {
            "z_sweep_s": best_of(lambda: zs(B, s_in, a_in, co.sigS, co.sigA, co.etd_s, co.etd_a,
                                            0, S, A), repeat),
            "tau_sweep_s": best_of(lambda: ts(S, A, b_in, co.cS, co.cSh, co.cA, co.cAh, co.R,
                                              co.Rh, co.dt, 0, TB), repeat),
            "rel_change_s": best_of(lambda: rc(TB, B, 0), repeat),
        }
        results[name] = (S.copy(), A.copy(), TB.copy())

    p = get_preset("sim750")
    medium = p.medium_params()
    seq = p.sequence()
    cfg = DetuningConfig.bns(medium)
    _, opts = case_setup("BNS", medium, with_decay=False)
    grid = SimGrid.for_sequence(seq, nz, nt)
    etas = {}
    for name in out:
        with _kernels.use_backend(name):
            memory_run(medium, cfg, seq, grid, opts)
            t0 = time.perf_counter()
            r = memory_run(medium, cfg, seq, grid, opts)
            out[name]["memory_run_s"] = time.perf_counter() - t0
            out[name]["iterations"] = r.iterations
            etas[name] = r.eta_total
    if len(results) == 2:
        diff = max(float(np.max(np.abs(x - y))) for x, y in zip(results["numba"], results["numpy"]))
        out["max_abs_kernel_diff"] = diff
        out["eta_diff"] = abs(etas["numba"] - etas["numpy"])
        out["speedup"] = {k: out["numpy"][k] / out["numba"][k]
                          for k in out["numba"] if k.endswith("_s")}
    out["grid"] = {"n_z": nz, "n_t": nt, "batch": batch}
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nz", type=int, default=200)
    ap.add_argument("--nt", type=int, default=2000)
    ap.add_argument("--batch", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(json.dumps(bench(args.nz, args.nt, args.batch, args.repeat), indent=2))


if __name__ == "__main__":
    main()
