"""Zero-delay g2 of the retrieved light under the thermal-noise model.

Retrieved light = memory signal + thermal Raman noise (one mode) + thermal
fluorescence, mixed incoherently::

    g2 = 1 + (a N^2 + 2 N_SRS N + N_SRS^2 + N_F^2 (g2_F - 1)) / (N + N_SRS + N_F)^2

with ``N`` the retrieved signal photons and ``a = g2_in G_ss / eta^2 - 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict, replace

import numpy as np
from scipy.optimize import brentq


@dataclass(frozen=True)
class G2Model:
    a: float
    N_SRS: float
    N_F: float
    g2_F: float = 2.0
    g2_in: float = 0.0
    N_L: float = 0.0

    def __post_init__(self):
        if self.N_SRS < 0 or self.N_F < 0:
            raise ValueError("noise photon numbers must be >= 0")
        if self.N_L != 0:
            raise ValueError("control leakage is not part of the model (N_L must be 0)")

    @classmethod
    def from_quartic(cls, g2_in, G_ss, eta, N_SRS, N_F, g2_F=2.0):
        if not eta > 0:
            raise ValueError("eta must be > 0")
        return cls(a=g2_in * G_ss / eta ** 2 - 1.0, N_SRS=N_SRS, N_F=N_F, g2_F=g2_F, g2_in=g2_in)

    def fock(self):
        """Same noise with a single-photon input (a = -1)."""
        return replace(self, a=-1.0, g2_in=0.0)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        keys = {"a", "N_SRS", "N_F", "g2_F", "g2_in", "N_L"}
        params = doc.get("params", doc)
        return cls(**{k: float(v) for k, v in params.items() if k in keys})


@dataclass(frozen=True)
class StatPoint:
    N_out: float
    g2: float
    g2_err: float = float("nan")

    def __post_init__(self):
        if self.N_out < 0:
            raise ValueError("N_out must be >= 0")
        if self.g2 < 0:
            raise ValueError("g2 must be >= 0")


def _numerator(model, N):
    return (model.a * N * N + 2.0 * model.N_SRS * N + model.N_SRS ** 2
            + model.N_F ** 2 * (model.g2_F - 1.0))


def g2_out(model: G2Model, N_out):
    N = np.asarray(N_out, dtype=float)
    if np.any(N < 0):
        raise ValueError("N_out must be >= 0")
    den = (N + model.N_SRS + model.N_F) ** 2
    if np.any(den == 0):
        raise ValueError("g2 undefined: no light in the output")
    out = 1.0 + _numerator(model, N) / den
    return float(out) if out.ndim == 0 else out


def crossing_photon_number(model: G2Model):
    """Retrieved photon number at which g2 falls to 1, or None.

    Positive root of ``a N^2 + 2 N_SRS N + c = 0`` with ``c = N_SRS^2 +
    N_F^2 (g2_F - 1)``; only exists for ``a < 0``.
    """
    a = model.a
    c = model.N_SRS ** 2 + model.N_F ** 2 * (model.g2_F - 1.0)
    if a >= 0:
        return 0.0 if (model.N_SRS == 0 and c == 0) else None
    disc = model.N_SRS ** 2 - a * c
    if disc < 0:
        return None
    return (model.N_SRS + math.sqrt(disc)) / (-a)


def heralding_threshold(model: G2Model, eta):
    """Smallest heralding efficiency giving g2 < 1 for a single-photon input.

    Returns ``None`` ("not reachable") when the crossing lies beyond unit
    heralding efficiency.
    """
    if not eta > 0:
        raise ValueError("eta must be > 0")
    n_star = crossing_photon_number(model.fock())
    if n_star is None:
        return None
    eta_h = n_star / eta
    return eta_h if eta_h <= 1.0 else None


def heralding_threshold_numeric(model: G2Model, eta, xtol=1e-15):
    """Bracketed root of ``g2_out(N) - 1`` on the Fock branch (cross-check)."""
    fm = model.fock()
    if model.N_SRS == 0 and model.N_F == 0:
        return 0.0

    def f(N):
        return _numerator(fm, N)  # sign of g2 - 1

    hi = max(eta, 1e-12)
    if f(hi) > 0:
        return None
    root = brentq(f, 0.0, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)
    return root / eta


def fock_prediction(model: G2Model, eta, eta_h_grid):
    eta_h = np.asarray(eta_h_grid, dtype=float)
    if np.any((eta_h < 0) | (eta_h > 1)):
        raise ValueError("heralding efficiencies must lie in [0, 1]")
    return g2_out(model.fock(), eta * eta_h)


def incoherent_sum(N1, g2_1, N2, g2_2):
    tot = N1 + N2
    if not tot > 0:
        raise ValueError("N1 + N2 must be > 0")
    return (N1 * N1 * g2_1 + 2.0 * N1 * N2 + N2 * N2 * g2_2) / (tot * tot)


def g2_signal_only(g2_in, eta, G_ss_quartic, N_in, N_SRS):
    """g2 of memory output plus Raman noise, assuming thermal noise statistics."""
    den = (eta * N_in + N_SRS) ** 2
    if not den > 0:
        raise ValueError("signal branch carries no light")
    return 2.0 - N_in ** 2 * (2.0 * eta ** 2 - g2_in * G_ss_quartic) / den


def prediction_rows(model, eta, eta_h_grid):
    g2 = np.atleast_1d(fock_prediction(model, eta, eta_h_grid))
    return list(zip(np.asarray(eta_h_grid, float), g2))


PREDICTION_HEADER = ("eta_h", "g2_out")
