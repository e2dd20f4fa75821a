"""Retarded-frame Maxwell-Bloch solver for the Raman memory with FWM.

Amplitude equations on the normalised cell ``zeta = z/L in [0, 1]`` and the
retarded time ``tau``; the anti-Stokes field is carried in conjugate form
``a = A*`` so the whole system stays complex-linear in its inputs::

    dS/dzeta = i g (Om c_z / Gs) B - Ks S
    da/dzeta = -i g conj(Om c_z) / conj(Gac) B - conj(Ka) a
    dB/dtau  = -i g conj(Om c_z) cs S + i g Om c_z ca a
               - (|Om|^2 (1/conj(Gac) + 1/Gs) + r/2) B

with ``g = sqrt(d gamma)``, ``Kx = kappa_x L / c``, ``cs = (1-alpha)/Gs +
alpha/conj(Gs)`` (likewise ``ca``), ``c_z`` the control's own dispersive
phase and ``r`` the storage decay rate of the spin-wave population.
Langevin operators are dropped.

Outer loop: z-sweep of (S, a) with B from the previous iterate, then a
tau-sweep of B with the new (S, a).  Because S and a at a given tau depend
only on earlier B, the map is of Volterra type and plain iteration converges
in a handful of passes; a Chebyshev extrapolation of B is applied when the
observed contraction is slow.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from . import _kernels
from .medium import (DetuningConfig, MediumParams, field_kappa, raman_detunings)
from .pulses import PulseSequence

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Numerical failure inside the solver."""


class ConvergenceError(SolverError):
    def __init__(self, residual, iterations):
        super().__init__(f"no convergence after {iterations} iterations (residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


class GridError(ValueError):
    """The grid does not resolve the pulse sequence."""


@dataclass(frozen=True)
class SimGrid:
    n_z: int = 200
    n_t: int = 2000
    t_span: tuple = (-0.02, 0.07)
    tol: float = 1e-8
    max_iter: int = 200

    def __post_init__(self):
        if self.n_z < 2 or self.n_t < 2:
            raise ValueError("n_z and n_t must be >= 2")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        t0, t1 = self.t_span
        if not t1 > t0:
            raise ValueError("t_span must be increasing")
        object.__setattr__(self, "t_span", (float(t0), float(t1)))

    @property
    def t(self):
        return np.linspace(self.t_span[0], self.t_span[1], self.n_t)

    @property
    def z(self):
        return np.linspace(0.0, 1.0, self.n_z)

    @property
    def dt(self):
        return (self.t_span[1] - self.t_span[0]) / (self.n_t - 1)

    @property
    def dz(self):
        return 1.0 / (self.n_z - 1)

    @classmethod
    def for_sequence(cls, seq: PulseSequence, n_z=200, n_t=2000, pad_fwhm=2.0, **kw):
        """Grid spanning both integration windows and +-pad_fwhm around each pulse."""
        h = seq.integration_window / 2.0
        t0 = min(seq.read_in.center - h, seq.read_in.center - pad_fwhm * seq.read_in.fwhm)
        t1 = max(seq.read_out.center + h, seq.read_out.center + pad_fwhm * seq.read_out.fwhm)
        return cls(n_z=n_z, n_t=n_t, t_span=(t0, t1), **kw)

    def with_(self, **changes):
        from dataclasses import replace
        return replace(self, **changes)


@dataclass
class FieldState:
    """Solution on the (z, t) grid; ``A`` is held in conjugate form ``a = A*``."""

    S: np.ndarray
    A: np.ndarray
    B: np.ndarray
    iterations: int = 0
    residual: float = 0.0

    @property
    def S_out(self):
        return self.S[-1]

    @property
    def A_out(self):
        return self.A[-1]

    @property
    def B_out(self):
        return self.B[:, -1]


@dataclass(frozen=True)
class SolverOptions:
    fwm_enabled: bool = True
    spinwave_decay_rate: float = 0.0  # 1/us, acts on |B|^2
    langevin: str = "vacuum-dropped"
    linear_loss: bool = True
    control_dispersion: bool = True
    include_populated_tail: bool = True
    acceleration: str = "chebyshev"

    def __post_init__(self):
        if self.spinwave_decay_rate < 0:
            raise ValueError("spinwave_decay_rate must be >= 0")
        if self.langevin != "vacuum-dropped":
            raise ValueError("only langevin='vacuum-dropped' is supported")
        if self.acceleration not in ("chebyshev", "none"):
            raise ValueError("acceleration must be 'chebyshev' or 'none'")


@dataclass
class MemoryResult:
    eta_total: float
    eta_readin: float
    leakage: float
    N_in: float
    N_retrieved: float
    t: np.ndarray
    trace_S: np.ndarray
    trace_A: np.ndarray
    windows: dict
    iterations: int
    residual: float
    flags: list = field(default_factory=list)
    noise: Optional[object] = None

    @property
    def mu1(self):
        if self.noise is None or not self.eta_total > 0:
            return float("nan")
        return self.noise.N_noise / self.eta_total

    def summary(self):
        out = {k: v for k, v in asdict(self).items()
               if k not in ("t", "trace_S", "trace_A", "noise")}
        if self.noise is not None:
            out["noise"] = self.noise.to_dict()
        return out


# ---------------------------------------------------------------------------
# setup

def check_grid(seq: PulseSequence, grid: SimGrid):
    dt = grid.dt
    problems = []
    fwhm = min(seq.read_in.fwhm, seq.read_out.fwhm, seq.signal.fwhm)
    if dt > fwhm / 20.0 * (1 + 1e-12):
        problems.append(f"dt = {dt:.3e} us exceeds fwhm/20 = {fwhm / 20:.3e} us")
    om = seq.max_rabi()
    if dt * om > 0.1 * (1 + 1e-12):
        problems.append(f"dt*max|Omega| = {dt * om:.3f} exceeds 0.1")
    t0, t1 = grid.t_span
    for name, (lo, hi) in seq.windows().items():
        if lo < t0 - 1e-12 or hi > t1 + 1e-12:
            problems.append(f"{name} window [{lo}, {hi}] outside t_span")
    if problems:
        raise GridError("; ".join(problems))


@dataclass
class Coefficients:
    """Pre-tabulated coefficient arrays for one (medium, detuning, sequence, grid)."""

    t: np.ndarray
    sigS: np.ndarray
    sigA: np.ndarray
    cS: np.ndarray
    cSh: np.ndarray
    cA: np.ndarray
    cAh: np.ndarray
    R: np.ndarray
    Rh: np.ndarray
    etd_s: tuple
    etd_a: tuple
    dt: float
    dz: float


def build_coefficients(medium: MediumParams, cfg: DetuningConfig, seq: PulseSequence,
                       grid: SimGrid, opts: SolverOptions) -> Coefficients:
    t = grid.t
    dt = grid.dt
    z = grid.z
    th = t[:-1] + 0.5 * dt
    g = np.sqrt(medium.d * medium.gamma)
    Gs, Gac = raman_detunings(cfg, medium)
    al = medium.alpha
    cs = (1 - al) / Gs + al / np.conj(Gs)
    ca = (1 - al) / Gac + al / np.conj(Gac)
    # amplitude rates 2 kappa: with coupling sqrt(d gamma) the Raman and the
    # absorptive terms then derive from the same depth d
    tof = 2.0 * medium.L / medium.c

    if opts.control_dispersion:
        Kc = field_kappa(medium, cfg.Delta_c) * tof
        cz = np.exp(-1j * Kc.imag * z)
    else:
        cz = np.ones_like(z, dtype=complex)

    om_t = seq.control(t).astype(complex)
    om_h = seq.control(th).astype(complex)
    W = cz[:, None] * om_t[None, :]
    Wh = cz[:, None] * om_h[None, :]

    sigS = 1j * g * W / Gs
    cS = -1j * g * np.conj(W) * cs
    cSh = -1j * g * np.conj(Wh) * cs
    if opts.fwm_enabled:
        sigA = -1j * g * np.conj(W) / np.conj(Gac)
        cA = 1j * g * W * ca
        cAh = 1j * g * Wh * ca
    else:
        sigA = np.zeros_like(W)
        cA = np.zeros_like(W)
        cAh = np.zeros_like(Wh)

    stark = 1.0 / np.conj(Gac) + 1.0 / Gs
    r = 0.5 * opts.spinwave_decay_rate
    R = np.abs(om_t) ** 2 * stark + r
    Rh = np.abs(om_h) ** 2 * stark + r

    if opts.linear_loss:
        Ks = field_kappa(medium, cfg.Delta_s, populated=opts.include_populated_tail) * tof
        Ka = np.conj(field_kappa(medium, cfg.Delta_a) * tof)
    else:
        Ks = Ka = 0j
    h = grid.dz
    c = np.ascontiguousarray
    return Coefficients(t=t, sigS=c(sigS), sigA=c(sigA), cS=c(cS), cSh=c(cSh),
                        cA=c(cA), cAh=c(cAh), R=c(R.astype(complex)),
                        Rh=c(Rh.astype(complex)),
                        etd_s=_kernels.etd_coefficients(Ks, h),
                        etd_a=_kernels.etd_coefficients(Ka, h), dt=dt, dz=h)


# ---------------------------------------------------------------------------
# iteration

def evolve_batch(co: Coefficients, s_in, a_in, b_in, grid: SimGrid, *, n0=0,
                 acceleration="chebyshev"):
    """Solve a batch of inputs sharing one set of coefficients.

    ``s_in``/``a_in`` are ``(nb, n_t)`` boundary values at ``zeta = 0``,
    ``b_in`` is ``(nb, n_z)`` spin wave at the first retarded time sample.
    Columns with no input before time index ``n0`` may skip those samples
    (causality); ``b_in`` must then be zero.
    Returns ``(S, A, B, iterations, residual)``.
    """
    s_in = np.ascontiguousarray(np.atleast_2d(s_in), dtype=complex)
    a_in = np.ascontiguousarray(np.atleast_2d(a_in), dtype=complex)
    b_in = np.ascontiguousarray(np.atleast_2d(b_in), dtype=complex)
    nb = s_in.shape[0]
    nz, nt = grid.n_z, grid.n_t
    if s_in.shape != (nb, nt) or a_in.shape != (nb, nt) or b_in.shape != (nb, nz):
        raise ValueError("input shapes do not match the grid")
    if n0 and np.any(b_in != 0):
        raise ValueError("a causal start index requires b_in = 0")
    if not (np.all(np.isfinite(s_in)) and np.all(np.isfinite(a_in)) and np.all(np.isfinite(b_in))):
        raise ValueError("non-finite input")

    S = np.zeros((nb, nz, nt), complex)
    A = np.zeros((nb, nz, nt), complex)
    B = np.zeros((nb, nz, nt), complex)
    B_prev = None  # iterate k-1, for the Chebyshev step
    S_old = np.zeros_like(S)
    A_old = np.zeros_like(A)
    TB = np.zeros_like(B)
    residual = np.inf
    res_hist = []
    rho = None
    omega = 1.0
    use_cheb = False
    z_sweep, tau_sweep = _kernels.z_sweep, _kernels.tau_sweep
    rel = _kernels.rel_change

    for it in range(1, grid.max_iter + 1):
        S_old, S = S, S_old
        A_old, A = A, A_old
        z_sweep(B, s_in, a_in, co.sigS, co.sigA, co.etd_s, co.etd_a, n0, S, A)
        tau_sweep(S, A, b_in, co.cS, co.cSh, co.cA, co.cAh, co.R, co.Rh, co.dt, n0, TB)
        # blow-ups propagate forward in both t and z, so the far edges suffice
        if not (np.all(np.isfinite(TB[:, :, -1])) and np.all(np.isfinite(S[:, -1, :]))):
            raise SolverError(f"non-finite fields at iteration {it}")
        residual = max(rel(TB, B, n0), rel(S, S_old, n0), rel(A, A_old, n0))
        if residual < grid.tol:
            B = TB
            break
        res_hist.append(residual)

        # Chebyshev semi-iteration on B once the contraction rate is visible
        # (only worthwhile for steady linear contraction; the usual Volterra
        # behaviour is superlinear with shrinking ratios)
        if acceleration == "chebyshev" and len(res_hist) >= 4 and not use_cheb and rho is None:
            r1 = res_hist[-1] / res_hist[-2] if res_hist[-2] > 0 else 0.0
            r2 = res_hist[-2] / res_hist[-3] if res_hist[-3] > 0 else 0.0
            if 0.5 < r1 < 1.0 and r1 >= 0.9 * r2:
                rho = r1
                use_cheb = True
                omega = 1.0
        if use_cheb and len(res_hist) >= 2 and res_hist[-1] > res_hist[-2]:
            # extrapolation is hurting: drop back to plain iteration
            use_cheb = False
            log.debug("chebyshev disabled at iteration %d", it)
        if use_cheb and B_prev is not None:
            omega = 1.0 / (1.0 - 0.25 * rho * rho * omega) if omega != 1.0 else 1.0 / (1.0 - 0.5 * rho * rho)
            nxt = omega * (TB - B_prev) + B_prev
            B_prev, B = B, nxt
        else:
            # rotate buffers: B_prev <- B, B <- TB, TB reuses the oldest array
            spare = B_prev if B_prev is not None else np.empty_like(B)
            B_prev, B, TB = B, TB, spare
    else:
        raise ConvergenceError(residual, grid.max_iter)

    # final consistent (S, a) for the converged spin wave
    z_sweep(B, s_in, a_in, co.sigS, co.sigA, co.etd_s, co.etd_a, n0, S, A)
    return S, A, B, it, residual


def _signal_input(seq, grid, s_in):
    if s_in is None:
        return seq.signal.sample(grid.t)
    s_in = np.asarray(s_in, dtype=complex)
    if s_in.shape != (grid.n_t,):
        raise ValueError("s_in must have shape (n_t,)")
    return s_in


def evolve(medium: MediumParams, cfg: DetuningConfig, seq: PulseSequence,
           grid: SimGrid, opts: SolverOptions = SolverOptions(), *,
           s_in=None, a_in=None, b_in=None) -> FieldState:
    """Solve for one input; the signal defaults to the sequence's own pulse."""
    check_grid(seq, grid)
    co = build_coefficients(medium, cfg, seq, grid, opts)
    s = _signal_input(seq, grid, s_in)
    a = np.zeros(grid.n_t, complex) if a_in is None else np.asarray(a_in, complex)
    b = np.zeros(grid.n_z, complex) if b_in is None else np.asarray(b_in, complex)
    S, A, B, it, res = evolve_batch(co, s[None], a[None], b[None], grid,
                                    acceleration=opts.acceleration)
    return FieldState(S[0], A[0], B[0], it, res)


def window_mask(t, window):
    lo, hi = window
    return (t >= lo) & (t < hi)


def window_photons(t, trace, window, dt):
    return float(np.sum(trace[window_mask(t, window)]) * dt)


def memory_run(medium: MediumParams, cfg: DetuningConfig, seq: PulseSequence,
               grid: SimGrid, opts: SolverOptions = SolverOptions(), *,
               s_in=None) -> MemoryResult:
    """Efficiency, read-in leakage and output traces for one sequence."""
    state = evolve(medium, cfg, seq, grid, opts, s_in=s_in)
    return result_from_state(state, seq, grid)


def result_from_state(state: FieldState, seq: PulseSequence, grid: SimGrid) -> MemoryResult:
    t, dt = grid.t, grid.dt
    trace_S = np.abs(state.S_out) ** 2
    trace_A = np.abs(state.A_out) ** 2
    win = seq.windows()
    n_ret = window_photons(t, trace_S, win["retrieval"], dt)
    n_leak = window_photons(t, trace_S, win["input"], dt)
    N_in = seq.N_in
    flags = []
    if N_in > 0:
        eta = n_ret / N_in
        leak = n_leak / N_in
        eta_in = 1.0 - leak
    else:
        eta = leak = eta_in = float("nan")
        flags.append("eta undefined: N_in = 0")
    return MemoryResult(eta_total=eta, eta_readin=eta_in, leakage=leak, N_in=N_in,
                        N_retrieved=n_ret, t=t, trace_S=trace_S, trace_A=trace_A,
                        windows=win, iterations=state.iterations,
                        residual=state.residual, flags=flags)


def trace_rows(result: MemoryResult):
    return [(t * 1e3, s, a) for t, s, a in zip(result.t, result.trace_S, result.trace_A)]


TRACE_HEADER = ("t_ns", "abs2_S_out", "abs2_A_out")
