"""Optical Kerr shutter model: gating-probability profiles and width bookkeeping.

The shutter opens where pump and photon overlap while the pump sweeps through
the fiber, so the gating probability is a pump-intensity Gaussian convolved
with a rectangle of width equal to the pump-photon walk-off.  Profiles are
peak-normalized to the configured efficiency; pump power is metadata only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .biphoton import AxisGrid, intensity_std
from .dispersion import FUSED_SILICA, FiberSegment, fwhm_to_sigma, walkoff


@dataclass(frozen=True)
class GateConfig:
    pump_fwhm_fs: float = 148.0
    fiber: FiberSegment = field(default_factory=lambda: FiberSegment(35.0))
    lambda_pump_nm: float = 775.0
    lambda_photon_nm: float = 714.0
    peak_efficiency: float = 0.16
    pump_power_w: float = 0.8  # recorded only; efficiency is configured, not derived

    def __post_init__(self):
        if self.pump_fwhm_fs <= 0:
            raise ValueError("pump FWHM must be positive")
        if not 0.0 <= self.peak_efficiency <= 1.0:
            raise ValueError("peak efficiency must lie in [0, 1]")

    def walkoff_fs(self) -> float:
        return walkoff(self.fiber, self.lambda_photon_nm, self.lambda_pump_nm)


@dataclass
class GateProfile:
    """Sampled gating probability g(t) for one shutter."""

    axis: AxisGrid
    values: np.ndarray
    peak_efficiency: float
    walkoff_fs: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.axis.count,):
            raise ValueError("profile length does not match its axis")
        if np.any(self.values < 0):
            raise ValueError("gating probability must be non-negative")


def gate_profile(config: GateConfig, grid: AxisGrid | None = None) -> GateProfile:
    """Gating probability on `grid`: Gaussian pump (convolved) rectangle sweep.

    The convolution is evaluated in closed form through the Gaussian integral
    (error function); a zero walk-off degenerates to the bare pump Gaussian.
    The grid must span at least 3*(pump FWHM + |walk-off|) on both sides.
    """
    w = abs(config.walkoff_fs())
    need = 3.0 * (config.pump_fwhm_fs + w)
    if grid is None:
        grid = AxisGrid(0.0, 2.0 * need / 1024, 1024)
    if grid.min > -need or grid.max < need - grid.step:
        raise ValueError(
            f"gate grid span must cover +-{need:.1f} fs "
            f"(pump FWHM {config.pump_fwhm_fs} fs, walk-off {w:.1f} fs)"
        )
    t = grid.samples()
    sigma_p = fwhm_to_sigma(config.pump_fwhm_fs)
    if w == 0.0:
        g = np.exp(-(t**2) / (2.0 * sigma_p**2))
    else:
        rt2 = math.sqrt(2.0) * sigma_p
        g = erf((t + w / 2.0) / rt2) - erf((t - w / 2.0) / rt2)
    g *= config.peak_efficiency / g.max()
    return GateProfile(grid, g, config.peak_efficiency, config.walkoff_fs())


def gate_sigma(profile: GateProfile) -> float:
    """Intensity-weighted standard deviation of the profile, fs."""
    if not np.any(profile.values > 0):
        raise ValueError("cannot take the width of an all-zero profile")
    return intensity_std(profile.axis.samples(), profile.values)


def gate_fwhm(profile: GateProfile) -> float:
    """Full width at half maximum by linear interpolation of the crossings."""
    g = profile.values
    if not np.any(g > 0):
        raise ValueError("cannot take the width of an all-zero profile")
    t = profile.axis.samples()
    half = g.max() / 2.0
    above = g >= half
    i0 = int(np.argmax(above))
    i1 = len(g) - 1 - int(np.argmax(above[::-1]))
    if i0 == 0 or i1 == len(g) - 1:
        raise ValueError("profile does not fall below half maximum inside the grid")
    left = t[i0 - 1] + (half - g[i0 - 1]) / (g[i0] - g[i0 - 1]) * (t[i0] - t[i0 - 1])
    right = t[i1] + (g[i1] - half) / (g[i1] - g[i1 + 1]) * (t[i1 + 1] - t[i1])
    return right - left


def predict_jti_width(dtau_s: float, dtau_i: float, tau_p: float, intrinsic: float) -> float:
    """Quadrature width estimate sqrt(dtau_s^2 + dtau_i^2 + 2 tau_p^2 + intrinsic^2).

    Pure arithmetic; the caller supplies all four terms in one consistent
    width convention (the factor 2 accounts for one pump pulse per shutter).
    """
    for name, v in (("dtau_s", dtau_s), ("dtau_i", dtau_i), ("tau_p", tau_p), ("intrinsic", intrinsic)):
        if v < 0:
            raise ValueError(f"{name} must be >= 0")
    return math.sqrt(dtau_s**2 + dtau_i**2 + 2.0 * tau_p**2 + intrinsic**2)
