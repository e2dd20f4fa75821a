import numpy as np
import pytest

from raman_memory import _kernels
from raman_memory.medium import DetuningConfig, MediumParams, field_kappa, ghz
from raman_memory.presets import case_setup, get_preset
from raman_memory.pulses import build_sequence
from raman_memory.solver import (ConvergenceError, GridError, SimGrid, SolverOptions,
                                 TRACE_HEADER, evolve, memory_run, trace_rows, window_photons)

from conftest import rel, setup


def test_free_propagation_is_identity(sim750):
    medium, _ = sim750
    seq = build_sequence(0.0, 0.0, 0.05, 1.0)
    grid = SimGrid.for_sequence(seq, 16, 400)
    st = evolve(medium, DetuningConfig.bns(medium), seq, grid, SolverOptions(linear_loss=False))
    s0 = seq.signal.sample(grid.t)
    assert np.array_equal(st.S_out, s0)
    assert not np.any(st.A) and not np.any(st.B)


def test_zero_control_gives_zero_efficiency_and_beer_lambert_leakage(sim750):
    medium, _ = sim750
    seq = build_sequence(0.0, 0.0, 0.05, 1.0)
    grid = SimGrid.for_sequence(seq, 40, 800)
    cfg, opts = setup("FWM_off", medium)
    r = memory_run(medium, cfg, seq, grid, opts)
    assert r.eta_total < 1e-12
    # intensity exponent of the solver: 2 * (2 kappa) L / c
    k = field_kappa(medium, cfg.Delta_s).real * medium.L / medium.c
    s0 = np.abs(seq.signal.sample(grid.t)) ** 2
    in_window = window_photons(grid.t, s0, r.windows["input"], grid.dt)
    assert r.leakage == pytest.approx(np.exp(-4 * k) * in_window, rel=1e-12)
    assert r.leakage > 0.9


def test_linearity(coarse):
    medium, seq, grid = coarse
    cfg, opts = setup("STD", medium)
    rng = np.random.default_rng(1)
    s1 = rng.normal(size=grid.n_t) + 1j * rng.normal(size=grid.n_t)
    s2 = rng.normal(size=grid.n_t) + 1j * rng.normal(size=grid.n_t)
    lam = 2.5 - 0.7j
    a = evolve(medium, cfg, seq, grid, opts, s_in=s1).S_out
    b = evolve(medium, cfg, seq, grid, opts, s_in=s2).S_out
    c = evolve(medium, cfg, seq, grid, opts, s_in=lam * s1 + s2).S_out
    assert np.max(np.abs(c - (lam * a + b))) / np.max(np.abs(c)) < 1e-10


def test_bns_close_to_ideal_and_std_gain(sim750):
    medium, seq = sim750
    grid = SimGrid.for_sequence(seq, 200, 2000)
    eta = {}
    for case in ("BNS", "FWM_off", "STD", "FWM_off_blue"):
        cfg, opts = setup(case, medium)
        eta[case] = memory_run(medium, cfg, seq, grid, opts).eta_total
    assert rel(eta["BNS"], eta["FWM_off"]) <= 0.01
    assert eta["STD"] > eta["FWM_off_blue"]
    assert eta["STD"] > eta["FWM_off"]


def test_fwm_off_passivity_random_draws():
    rng = np.random.default_rng(7)
    medium = get_preset("sim750").medium_params()
    for _ in range(25):
        side = rng.choice([-1.0, 1.0])
        D = side * rng.uniform(1.0, 4.0) * medium.Delta_hf
        E = rng.uniform(50.0, 1000.0)
        seq = build_sequence(E, E, 0.05, 1.0)
        grid = SimGrid.for_sequence(seq, 30, 1000)
        opts = SolverOptions(fwm_enabled=False)
        r = memory_run(medium, DetuningConfig(D, medium.Delta_hf), seq, grid, opts)
        assert r.eta_total + r.leakage <= 1 + 1e-6


def test_grid_convergence(sim750):
    medium, seq = sim750
    cfg, opts = setup("BNS", medium)
    a = memory_run(medium, cfg, seq, SimGrid.for_sequence(seq, 200, 2000), opts).eta_total
    b = memory_run(medium, cfg, seq, SimGrid.for_sequence(seq, 400, 3999), opts).eta_total
    assert rel(a, b) < 1e-3


def test_bitwise_determinism(coarse):
    medium, seq, grid = coarse
    cfg, opts = setup("BNS", medium)
    a = memory_run(medium, cfg, seq, grid, opts)
    b = memory_run(medium, cfg, seq, grid, opts)
    assert np.array_equal(a.trace_S, b.trace_S) and a.eta_total == b.eta_total


@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")
def test_backends_agree(coarse):
    medium, seq, grid = coarse
    cfg, opts = setup("STD", medium)
    out = {}
    for name in ("numba", "numpy"):
        with _kernels.use_backend(name):
            assert _kernels.backend() == name
            out[name] = memory_run(medium, cfg, seq, grid, opts)
    assert np.max(np.abs(out["numba"].trace_S - out["numpy"].trace_S)) < 1e-12
    assert out["numba"].iterations == out["numpy"].iterations


def test_acceleration_modes_agree(coarse):
    medium, seq, grid = coarse
    cfg, _ = setup("STD", medium)
    a = memory_run(medium, cfg, seq, grid, SolverOptions(acceleration="chebyshev"))
    b = memory_run(medium, cfg, seq, grid, SolverOptions(acceleration="none"))
    assert abs(a.eta_total - b.eta_total) < 1e-9


def test_spinwave_decay_scaling(coarse):
    medium, seq, grid = coarse
    cfg, _ = setup("FWM_off", medium)
    rate = 1 / 0.625
    r0 = memory_run(medium, cfg, seq, grid, SolverOptions(fwm_enabled=False)).eta_total
    r1 = memory_run(medium, cfg, seq, grid,
                    SolverOptions(fwm_enabled=False, spinwave_decay_rate=rate)).eta_total
    # population decay over the read-in/read-out separation
    assert r1 / r0 == pytest.approx(np.exp(-rate * seq.storage_time), rel=2e-2)


def test_noise_only_run_is_flagged(sim750):
    medium, _ = sim750
    seq = build_sequence(330.0, 330.0, 0.05, 0.0)
    grid = SimGrid.for_sequence(seq, 16, 600)
    cfg, opts = setup("BNS", medium)
    r = memory_run(medium, cfg, seq, grid, opts)
    assert np.isnan(r.eta_total) and "eta undefined: N_in = 0" in r.flags
    assert r.N_retrieved == 0.0


def test_convergence_error_carries_residual(coarse):
    medium, seq, grid = coarse
    cfg, opts = setup("STD", medium)
    with pytest.raises(ConvergenceError) as exc:
        memory_run(medium, cfg, seq, grid.with_(max_iter=2), opts)
    assert exc.value.residual > 0 and exc.value.iterations == 2


def test_unresolved_grid_rejected(sim750):
    medium, seq = sim750
    cfg, opts = setup("BNS", medium)
    with pytest.raises(GridError, match="exceeds"):
        memory_run(medium, cfg, seq, SimGrid.for_sequence(seq, 20, 200), opts)
    with pytest.raises(GridError, match="outside"):
        memory_run(medium, cfg, seq, SimGrid(20, 2000, t_span=(-0.01, 0.06)), opts)


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(langevin="full")
    with pytest.raises(ValueError):
        SolverOptions(spinwave_decay_rate=-1.0)
    with pytest.raises(ValueError):
        SimGrid(n_z=1)


def test_trace_rows_and_window_additivity(coarse):
    medium, seq, grid = coarse
    cfg, opts = setup("BNS", medium)
    r = memory_run(medium, cfg, seq, grid, opts)
    rows = trace_rows(r)
    assert len(rows) == grid.n_t and len(rows[0]) == len(TRACE_HEADER)
    assert rows[0][0] == pytest.approx(grid.t[0] * 1e3)
    lo, hi = r.windows["retrieval"]
    mid = 0.5 * (lo + hi)
    parts = (window_photons(r.t, r.trace_S, (lo, mid), grid.dt)
             + window_photons(r.t, r.trace_S, (mid, hi), grid.dt))
    assert parts == pytest.approx(r.N_retrieved, rel=1e-14)
