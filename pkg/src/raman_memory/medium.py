"""Atomic ensemble constants and linear optical response.

Rates are angular (rad/us), lengths in mm, times in us.  Detunings are
measured as line-centre minus field frequency, referenced to the populated
|1>-|2> line.  The storage |3>-|2> line sits Delta_hf below it, so a field
with detuning D on the populated line has detuning D - Delta_hf on the
storage line.

Frequency layout of the three fields (signal, control, anti-Stokes)::

    w_c = w_s - Delta_hf,   w_a = w_s - 2 Delta_hf

which in detuning form gives D_c = D_s + Delta_hf and D_a = D_s + 2 Delta_hf.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

TWO_PI = 2.0 * np.pi
C_MM_PER_US = 299_792.458

CS_HYPERFINE_GHZ = 9.192631770
CS_NATURAL_LINEWIDTH_MHZ = 5.2


def mhz(value):
    """MHz -> rad/us."""
    return TWO_PI * value


def ghz(value):
    """GHz -> rad/us."""
    return TWO_PI * 1e3 * value


@dataclass(frozen=True)
class MediumParams:
    """Constants of a pressure-broadened two-line ensemble.

    ``gamma_N`` and ``gamma_P`` are angular half-widths (rad/us); ``d0`` is the
    optical depth the ensemble would have at natural linewidth.
    """

    d0: float = 2.9e4
    gamma_N: float = mhz(CS_NATURAL_LINEWIDTH_MHZ)
    gamma_P: float = mhz(96.0 - CS_NATURAL_LINEWIDTH_MHZ)
    Delta_hf: float = ghz(CS_HYPERFINE_GHZ)
    L: float = 72.0
    alpha: float = 0.0
    c: float = C_MM_PER_US

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self):
        out = []
        if not self.d0 > 0:
            out.append("d0 must be > 0")
        if not self.gamma_N > 0:
            out.append("gamma_N must be > 0")
        if not self.gamma_P >= 0:
            out.append("gamma_P must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            out.append("alpha out of [0,1]")
        if not self.L > 0:
            out.append("L must be > 0")
        if not self.c > 0:
            out.append("c must be > 0")
        return out

    @property
    def gamma(self):
        return self.gamma_N + self.gamma_P

    @property
    def d(self):
        """Pressure-broadened optical depth ``d0 * gamma_N / gamma``."""
        return self.d0 * self.gamma_N / self.gamma

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class DetuningConfig:
    """Signal detuning; the anti-Stokes detuning is derived from it."""

    Delta_s: float
    Delta_hf: float = ghz(CS_HYPERFINE_GHZ)

    @property
    def Delta_a(self):
        return self.Delta_s + 2.0 * self.Delta_hf

    @property
    def Delta_c(self):
        """Control detuning from the populated line."""
        return self.Delta_s + self.Delta_hf

    @classmethod
    def bns(cls, medium: MediumParams):
        return cls(-2.0 * medium.Delta_hf, medium.Delta_hf)

    @classmethod
    def std(cls, medium: MediumParams):
        return cls(2.0 * medium.Delta_hf, medium.Delta_hf)

    @classmethod
    def for_medium(cls, Delta_s, medium: MediumParams):
        return cls(float(Delta_s), medium.Delta_hf)


@dataclass(frozen=True)
class LinearResponse:
    """Complex linear response rates (rad/us) for the three fields.

    Real part is the amplitude absorption rate, imaginary part the
    dispersive phase rate, both per unit retarded-frame propagation time
    ``L / c``.
    """

    kappa_s: complex
    kappa_a: complex
    kappa_c: complex = 0j

    def depth(self, kappa, medium: MediumParams):
        """Dimensionless single-pass exponent ``kappa * L / c``."""
        return kappa * medium.L / medium.c


def complex_detunings(cfg: DetuningConfig, medium: MediumParams):
    """Return ``(Gamma_s, Gamma_a) = (gamma + i Delta_s, gamma + i Delta_a)``."""
    g = medium.gamma
    return complex(g, cfg.Delta_s), complex(g, cfg.Delta_a)


def raman_detunings(cfg: DetuningConfig, medium: MediumParams):
    """Complex detunings entering the Raman couplings of the equations of motion.

    The signal is Raman-coupled through the populated line at ``Delta_s``.
    The anti-Stokes Raman channel runs through the control on the populated
    line and the anti-Stokes on the storage line, both at ``Delta_s +
    Delta_hf`` by two-photon resonance.
    """
    g = medium.gamma
    return complex(g, cfg.Delta_s), complex(g, cfg.Delta_c)


def _line_sum(medium, detuning, weight_pop, weight_store):
    g = medium.gamma
    total = 0j
    if weight_pop:
        total += weight_pop * g / complex(g, detuning)
    if weight_store:
        total += weight_store * g / complex(g, detuning - medium.Delta_hf)
    return total * medium.d * medium.c / (2.0 * medium.L)


def field_kappa(medium: MediumParams, detuning, *, populated=True, storage=True):
    """kappa of a weak field at ``detuning`` from the populated line.

    Sum over both lines of ``(c d_x / 2L) gamma / (gamma + i D_x)`` with
    population weights ``1 - alpha`` and ``alpha``; on resonance the
    intensity falls as ``exp(-d)``.
    """
    wp = (1.0 - medium.alpha) if populated else 0.0
    ws = medium.alpha if storage else 0.0
    return _line_sum(medium, detuning, wp, ws)


def linear_loss(medium: MediumParams, cfg: DetuningConfig, *, include_populated_tail=True):
    """Linear response of signal, anti-Stokes and control.

    ``include_populated_tail`` controls whether the signal's kappa keeps the
    far-detuned populated-line contribution (default) or only the
    alpha-weighted storage-line term.
    """
    k_s = field_kappa(medium, cfg.Delta_s, populated=include_populated_tail)
    k_a = field_kappa(medium, cfg.Delta_a)
    k_c = field_kappa(medium, cfg.Delta_c)
    return LinearResponse(k_s, k_a, k_c)


def absorption_spectrum(medium: MediumParams, detuning_grid):
    """Optical depth versus detuning from the populated line.

    Returns an ``(n, 2)`` array of ``(detuning, optical_depth)`` with the
    detuning column echoed back in the input units (rad/us).
    """
    grid = np.asarray(detuning_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("detuning grid must be a non-empty 1-D array")
    if grid.size > 1:
        steps = np.diff(grid)
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise ValueError("detuning grid must be strictly monotone")
    g2 = medium.gamma ** 2
    pop = (1.0 - medium.alpha) * g2 / (g2 + grid ** 2)
    store = medium.alpha * g2 / (g2 + (grid - medium.Delta_hf) ** 2)
    od = medium.d * (pop + store)
    return np.column_stack([grid, od])


def phase_mismatch(medium: MediumParams, cfg: DetuningConfig):
    """Four-wave-mixing phase mismatch ``2 k_c - k_s - k_a`` in rad/mm.

    Only the dispersive (medium) parts survive: the vacuum parts cancel
    because ``2 w_c = w_s + w_a``.
    """
    resp = linear_loss(medium, cfg)
    return (2.0 * resp.kappa_c.imag - resp.kappa_s.imag - resp.kappa_a.imag) / medium.c


def phase_mismatch_scan(medium: MediumParams, Delta_s_grid):
    return np.array([phase_mismatch(medium, DetuningConfig.for_medium(D, medium))
                     for D in np.asarray(Delta_s_grid, dtype=float)])
