"""Control/signal envelopes and read-in / storage / read-out sequences.

Times in us, Rabi frequencies in rad/us, energies in pJ, beam waists in um.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

LN2 = np.log(2.0)

# Gaussian time integral of |envelope|^2 per unit fwhm.
GAUSS_AREA = np.sqrt(np.pi / (4.0 * LN2))

DEFAULT_FWHM = 0.010
DEFAULT_WINDOW = 0.035
DEFAULT_WAIST_UM = 130.0

# Fixed by matching the simulated BNS efficiency at 930 pJ / 70 ns to the
# measured 23.0 %; see presets.calibrate_dipole_constant.
DEFAULT_DIPOLE_CONSTANT = 559.7


@dataclass(frozen=True)
class ControlPulse:
    peak_rabi: complex
    center: float
    fwhm: float = DEFAULT_FWHM
    shape: str = "gaussian"

    def __post_init__(self):
        if not self.fwhm > 0:
            raise ValueError("control pulse fwhm must be > 0")
        if self.shape != "gaussian":
            raise ValueError(f"unsupported control shape {self.shape!r}")


def envelope(pulse: ControlPulse, t):
    """Field envelope whose intensity has FWHM ``pulse.fwhm``."""
    t = np.asarray(t, dtype=float)
    x = (t - pulse.center) / pulse.fwhm
    return pulse.peak_rabi * np.exp(-2.0 * LN2 * x * x)


def energy_to_peak_rabi(energy, waist, fwhm, dipole_constant=DEFAULT_DIPOLE_CONSTANT):
    """Peak Rabi frequency of a Gaussian pulse of given energy.

    Peak intensity is ``energy / (fwhm * GAUSS_AREA * pi waist^2 / 2)`` in
    pJ/(us um^2) and ``Omega = dipole_constant * sqrt(I)``.  Zero energy maps
    to zero; negative energy and nonpositive geometry are rejected.
    """
    if energy < 0:
        raise ValueError("pulse energy must be >= 0")
    for name, val in (("waist", waist), ("fwhm", fwhm), ("dipole_constant", dipole_constant)):
        if not val > 0:
            raise ValueError(f"{name} must be > 0")
    area = np.pi * waist ** 2 / 2.0
    peak_intensity = energy / (fwhm * GAUSS_AREA * area)
    return dipole_constant * np.sqrt(peak_intensity)


@dataclass(frozen=True)
class SignalPulse:
    """Input signal: a shape normalised to ``N_in`` photons on the sample grid.

    ``custom`` overrides the Gaussian with any callable ``t -> complex``.
    """

    N_in: float
    center: float = 0.0
    fwhm: float = DEFAULT_FWHM
    shape: str = "gaussian"
    custom: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.N_in < 0:
            raise ValueError("N_in must be >= 0")
        if self.shape not in ("gaussian", "custom"):
            raise ValueError(f"unsupported signal shape {self.shape!r}")

    def raw(self, t):
        if self.custom is not None:
            return np.asarray(self.custom(np.asarray(t)), dtype=complex)
        x = (np.asarray(t, dtype=float) - self.center) / self.fwhm
        return np.exp(-2.0 * LN2 * x * x).astype(complex)

    def sample(self, t):
        t = np.asarray(t, dtype=float)
        dt = t[1] - t[0] if t.size > 1 else 1.0
        return normalize_envelope(self.raw(t), dt, self.N_in)


def normalize_envelope(samples, dt, N_in):
    """Rescale ``samples`` so that ``sum |s|^2 dt == N_in``."""
    samples = np.asarray(samples, dtype=complex)
    if N_in == 0:
        return np.zeros_like(samples)
    norm = np.sum(np.abs(samples) ** 2) * dt
    if not norm > 0:
        raise ValueError("cannot normalise an all-zero envelope to N_in > 0")
    return samples * np.sqrt(N_in / norm)


@dataclass(frozen=True)
class PulseSequence:
    read_in: ControlPulse
    read_out: ControlPulse
    storage_time: float
    signal: SignalPulse
    integration_window: float = DEFAULT_WINDOW

    def __post_init__(self):
        gap = self.read_out.center - self.read_in.center
        if not np.isclose(gap, self.storage_time, rtol=0, atol=1e-12):
            raise ValueError("read_out.center must equal read_in.center + storage_time")
        if not self.integration_window > 0:
            raise ValueError("integration window must be > 0")
        if self.storage_time < self.integration_window:
            raise ValueError("input and retrieval windows overlap")

    @property
    def N_in(self):
        return self.signal.N_in

    @property
    def input_window(self):
        h = self.integration_window / 2.0
        return (self.read_in.center - h, self.read_in.center + h)

    @property
    def retrieval_window(self):
        h = self.integration_window / 2.0
        return (self.read_out.center - h, self.read_out.center + h)

    def windows(self):
        return {"input": self.input_window, "retrieval": self.retrieval_window}

    def control(self, t):
        return envelope(self.read_in, t) + envelope(self.read_out, t)

    def max_rabi(self):
        return max(abs(self.read_in.peak_rabi), abs(self.read_out.peak_rabi))

    def with_signal(self, **changes):
        return replace(self, signal=replace(self.signal, **changes))


def build_sequence(read_in_energy, read_out_energy, storage_time, N_in,
                   signal_shape="gaussian", *, fwhm=DEFAULT_FWHM,
                   window=DEFAULT_WINDOW, waist=DEFAULT_WAIST_UM,
                   dipole_constant=DEFAULT_DIPOLE_CONSTANT, t_read_in=0.0,
                   custom=None):
    """Assemble a memory sequence from pulse energies (pJ) and timings (us).

    The signal is co-centred with the read-in pulse and shares its width.
    """
    if not storage_time > fwhm:
        raise ValueError("storage_time must exceed the pulse fwhm")
    om_in = energy_to_peak_rabi(read_in_energy, waist, fwhm, dipole_constant)
    om_out = energy_to_peak_rabi(read_out_energy, waist, fwhm, dipole_constant)
    shape = "custom" if custom is not None else signal_shape
    return PulseSequence(
        read_in=ControlPulse(om_in, t_read_in, fwhm),
        read_out=ControlPulse(om_out, t_read_in + storage_time, fwhm),
        storage_time=storage_time,
        signal=SignalPulse(N_in, t_read_in, fwhm, shape, custom),
        integration_window=window,
    )
