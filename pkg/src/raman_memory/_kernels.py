"""Sweep kernels of the retarded-frame solver.

Two interchangeable implementations share one calling convention: numba
``@njit`` loops and a pure-numpy path vectorised across the non-marching
axes.  ``RMS_DISABLE_NUMBA=1`` in the environment (read at import) forces the
numpy path; it is also used automatically when numba is missing.

Array layout is ``(batch, n_z, n_t)`` C-contiguous complex128 throughout, so
both sweeps walk the time axis innermost.

z sweep
    Exponential integrator for ``dX/dz = -K X + sigma(z, t) B(z, t)`` with
    the source linear across each cell; exact for constant ``K`` and
    piecewise-linear sources, so stiff absorption (``K dz >> 1``) is stable.

tau sweep
    Classical RK4 for ``dB/dt = cS S + cA A - R B`` with ``S`` and ``A``
    linearly interpolated to the half step.

rel change
    Convergence measure ``max|new - old| / max|new|`` per batch member,
    maximised over the batch.
"""
from __future__ import annotations

import contextlib
import os
import warnings

import numpy as np

_DISABLE = os.environ.get("RMS_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba ships with the environment
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLE


def etd_coefficients(K, h):
    """Coefficients ``(E, p0, p1)`` of one exponential-integrator step.

    ``X1 = E X0 + p0 f0 + p1 (f1 - f0)`` integrates ``X' = -K X + f`` over a
    step ``h`` with ``f`` linear in between.
    """
    K = complex(K)
    x = K * h
    E = np.exp(-x)
    if abs(x) < 1e-3:
        # series avoids cancellation in (1 - E) / K
        p0 = h * (1 - x / 2 + x * x / 6 - x ** 3 / 24 + x ** 4 / 120)
        p1 = h * (0.5 - x / 6 + x * x / 24 - x ** 3 / 120 + x ** 4 / 720)
    else:
        p0 = (1 - E) / K
        p1 = 1 / K - (1 - E) / (K * K * h)
    return complex(E), complex(p0), complex(p1)


# ---------------------------------------------------------------------------
# numpy path

def z_sweep_numpy(B, s_in, a_in, sigS, sigA, cs, ca, n0, S, A):
    Es, p0s, p1s = cs
    Ea, p0a, p1a = ca
    nz = B.shape[1]
    S[:, 0, n0:] = s_in[:, n0:]
    A[:, 0, n0:] = a_in[:, n0:]
    fs0 = sigS[0, n0:] * B[:, 0, n0:]
    fa0 = sigA[0, n0:] * B[:, 0, n0:]
    for j in range(nz - 1):
        fs1 = sigS[j + 1, n0:] * B[:, j + 1, n0:]
        fa1 = sigA[j + 1, n0:] * B[:, j + 1, n0:]
        S[:, j + 1, n0:] = Es * S[:, j, n0:] + p0s * fs0 + p1s * (fs1 - fs0)
        A[:, j + 1, n0:] = Ea * A[:, j, n0:] + p0a * fa0 + p1a * (fa1 - fa0)
        fs0, fa0 = fs1, fa1


def tau_sweep_numpy(S, A, B0, cS, cSh, cA, cAh, R, Rh, dt, n0, B):
    nt = B.shape[2]
    B[:, :, :n0] = 0
    B[:, :, n0] = B0
    half = 0.5 * dt
    for n in range(n0, nt - 1):
        s0 = S[:, :, n]
        s1 = S[:, :, n + 1]
        a0 = A[:, :, n]
        a1 = A[:, :, n + 1]
        fm = cSh[:, n] * (0.5 * (s0 + s1)) + cAh[:, n] * (0.5 * (a0 + a1))
        b = B[:, :, n]
        k1 = cS[:, n] * s0 + cA[:, n] * a0 - R[n] * b
        k2 = fm - Rh[n] * (b + half * k1)
        k3 = fm - Rh[n] * (b + half * k2)
        k4 = cS[:, n + 1] * s1 + cA[:, n + 1] * a1 - R[n + 1] * (b + dt * k3)
        B[:, :, n + 1] = b + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rel_change_numpy(new, old, n0):
    nb = new.shape[0]
    if nb == 0:
        return 0.0
    a = new[:, :, n0:].reshape(nb, -1)
    b = old[:, :, n0:].reshape(nb, -1)
    diff = np.abs(a - b).max(axis=1)
    scale = np.abs(a).max(axis=1)
    out = np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), diff)
    return float(out.max())


# ---------------------------------------------------------------------------
# numba path

if HAVE_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def z_sweep_numba(B, s_in, a_in, sigS, sigA, cs, ca, n0, S, A):
        Es, p0s, p1s = cs
        Ea, p0a, p1a = ca
        nb, nz, nt = B.shape
        for b in range(nb):
            for n in range(n0, nt):
                S[b, 0, n] = s_in[b, n]
                A[b, 0, n] = a_in[b, n]
            for j in range(nz - 1):
                for n in range(n0, nt):
                    bj = B[b, j, n]
                    bj1 = B[b, j + 1, n]
                    fs0 = sigS[j, n] * bj
                    fs1 = sigS[j + 1, n] * bj1
                    fa0 = sigA[j, n] * bj
                    fa1 = sigA[j + 1, n] * bj1
                    S[b, j + 1, n] = Es * S[b, j, n] + p0s * fs0 + p1s * (fs1 - fs0)
                    A[b, j + 1, n] = Ea * A[b, j, n] + p0a * fa0 + p1a * (fa1 - fa0)

    @numba.njit(cache=True, nogil=True)
    def tau_sweep_numba(S, A, B0, cS, cSh, cA, cAh, R, Rh, dt, n0, B):
        nb, nz, nt = B.shape
        half = 0.5 * dt
        sixth = dt / 6.0
        for b in range(nb):
            for j in range(nz):
                for n in range(n0):
                    B[b, j, n] = 0
                bv = B0[b, j]
                B[b, j, n0] = bv
                for n in range(n0, nt - 1):
                    s0 = S[b, j, n]
                    s1 = S[b, j, n + 1]
                    a0 = A[b, j, n]
                    a1 = A[b, j, n + 1]
                    fm = cSh[j, n] * (0.5 * (s0 + s1)) + cAh[j, n] * (0.5 * (a0 + a1))
                    k1 = cS[j, n] * s0 + cA[j, n] * a0 - R[n] * bv
                    k2 = fm - Rh[n] * (bv + half * k1)
                    k3 = fm - Rh[n] * (bv + half * k2)
                    k4 = cS[j, n + 1] * s1 + cA[j, n + 1] * a1 - R[n + 1] * (bv + dt * k3)
                    bv = bv + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                    B[b, j, n + 1] = bv

    @numba.njit(cache=True, nogil=True)
    def rel_change_numba(new, old, n0):
        nb, nz, nt = new.shape
        worst = 0.0
        for b in range(nb):
            diff = 0.0
            scale = 0.0
            for j in range(nz):
                for n in range(n0, nt):
                    v = new[b, j, n]
                    d = v - old[b, j, n]
                    ad = d.real * d.real + d.imag * d.imag
                    av = v.real * v.real + v.imag * v.imag
                    if ad > diff:
                        diff = ad
                    if av > scale:
                        scale = av
            r = np.sqrt(diff / scale) if scale > 0 else np.sqrt(diff)
            if r > worst:
                worst = r
        return worst

else:  # pragma: no cover
    z_sweep_numba = None
    tau_sweep_numba = None
    rel_change_numba = None


if USE_NUMBA:
    z_sweep = z_sweep_numba
    tau_sweep = tau_sweep_numba
    rel_change = rel_change_numba
else:
    if _DISABLE is False and not HAVE_NUMBA:  # pragma: no cover
        warnings.warn("numba not available; using the numpy kernels", RuntimeWarning)
    z_sweep = z_sweep_numpy
    tau_sweep = tau_sweep_numpy
    rel_change = rel_change_numpy


def backend():
    return "numba" if z_sweep is z_sweep_numba and HAVE_NUMBA else "numpy"


@contextlib.contextmanager
def use_backend(name):
    """Temporarily swap the module-level kernels (not thread-safe)."""
    global z_sweep, tau_sweep, rel_change
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    if name not in ("numba", "numpy"):
        raise ValueError("backend must be 'numba' or 'numpy'")
    saved = z_sweep, tau_sweep, rel_change
    if name == "numba":
        z_sweep, tau_sweep, rel_change = z_sweep_numba, tau_sweep_numba, rel_change_numba
    else:
        z_sweep, tau_sweep, rel_change = z_sweep_numpy, tau_sweep_numpy, rel_change_numpy
    try:
        yield
    finally:
        z_sweep, tau_sweep, rel_change = saved
