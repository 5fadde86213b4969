"""Unit conversions, refractive-index models, group velocity / GVD and walk-off.

Internal unit conventions used across the package:
    wavelength    nm (vacuum)
    time          fs
    frequency     rad/fs (angular)
    length        mm (fiber / crystal segments)
    GVD           fs^2/mm

Fused silica dispersion uses the three-term Sellmeier formula of
I. H. Malitson, J. Opt. Soc. Am. 55, 1205 (1965), valid from 0.21 um to
3.71 um at 20 degrees Celsius.  First and second wavelength derivatives
are evaluated analytically from the Sellmeier form, never by finite
difference.

Transport fibers carry per-wavelength GVD overrides because the effective
fiber dispersion (material + waveguide) generally differs from the bulk
value; the shipped `SIGNAL_TRANSPORT_FIBER` / `IDLER_TRANSPORT_FIBER`
constants encode the measured totals for the two arms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

#: speed of light in nm/fs
SPEED_OF_LIGHT_NM_FS = 299.792458

#: FWHM / sigma ratio of a Gaussian, 2*sqrt(2 ln 2)
GAUSSIAN_FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


def fwhm_to_sigma(fwhm: float) -> float:
    """Convert a Gaussian full width at half maximum to a standard deviation."""
    return fwhm / GAUSSIAN_FWHM_PER_SIGMA


def sigma_to_fwhm(sigma: float) -> float:
    """Convert a Gaussian standard deviation to a full width at half maximum."""
    return sigma * GAUSSIAN_FWHM_PER_SIGMA


def wavelength_to_omega(wavelength_nm):
    """Vacuum wavelength (nm) -> angular frequency (rad/fs)."""
    lam = np.asarray(wavelength_nm, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("wavelength must be strictly positive")
    out = 2.0 * np.pi * SPEED_OF_LIGHT_NM_FS / lam
    return float(out) if np.isscalar(wavelength_nm) else out


def omega_to_wavelength(omega_rad_fs):
    """Angular frequency (rad/fs) -> vacuum wavelength (nm)."""
    omega = np.asarray(omega_rad_fs, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("angular frequency must be strictly positive")
    out = 2.0 * np.pi * SPEED_OF_LIGHT_NM_FS / omega
    return float(out) if np.isscalar(omega_rad_fs) else out


@dataclass(frozen=True)
class SellmeierModel:
    """Three-term Sellmeier model n^2 = 1 + sum B_k lam^2 / (lam^2 - C_k^2), lam in um."""

    b: tuple[float, float, float]
    c_um: tuple[float, float, float]
    validity_nm: tuple[float, float]
    name: str = "sellmeier"

    def _check(self, wavelength_nm: float) -> float:
        lo, hi = self.validity_nm
        if not (lo <= wavelength_nm <= hi):
            raise ValueError(
                f"wavelength {wavelength_nm} nm outside {self.name} validity "
                f"range [{lo}, {hi}] nm"
            )
        return wavelength_nm / 1000.0

    def index(self, wavelength_nm: float) -> float:
        um = self._check(wavelength_nm)
        return math.sqrt(self._n2(um))

    def _n2(self, um: float) -> float:
        u2 = um * um
        return 1.0 + sum(b * u2 / (u2 - c * c) for b, c in zip(self.b, self.c_um))

    def d_index(self, wavelength_nm: float) -> float:
        """dn/dlambda in 1/nm (analytic)."""
        um = self._check(wavelength_nm)
        # d(n^2)/dum = -2 um sum B C^2 / (um^2 - C^2)^2
        dn2 = -2.0 * um * sum(
            b * c * c / (um * um - c * c) ** 2 for b, c in zip(self.b, self.c_um)
        )
        return dn2 / (2.0 * math.sqrt(self._n2(um))) / 1000.0

    def d2_index(self, wavelength_nm: float) -> float:
        """d^2 n / dlambda^2 in 1/nm^2 (analytic)."""
        um = self._check(wavelength_nm)
        n = math.sqrt(self._n2(um))
        dn2 = -2.0 * um * sum(
            b * c * c / (um * um - c * c) ** 2 for b, c in zip(self.b, self.c_um)
        )
        d2n2 = 2.0 * sum(
            b * c * c * (3.0 * um * um + c * c) / (um * um - c * c) ** 3
            for b, c in zip(self.b, self.c_um)
        )
        dn_um = dn2 / (2.0 * n)
        d2n_um = (d2n2 - 2.0 * dn_um * dn_um) / (2.0 * n)
        return d2n_um / 1.0e6


@dataclass(frozen=True)
class ConstantIndex:
    """Dispersionless model n(lambda) = n0; useful for degenerate checks."""

    n0: float = 1.0
    validity_nm: tuple[float, float] = (1.0, 1.0e7)
    name: str = "constant"

    def _check(self, wavelength_nm: float) -> None:
        lo, hi = self.validity_nm
        if not (lo <= wavelength_nm <= hi):
            raise ValueError(
                f"wavelength {wavelength_nm} nm outside {self.name} validity "
                f"range [{lo}, {hi}] nm"
            )

    def index(self, wavelength_nm: float) -> float:
        self._check(wavelength_nm)
        return self.n0

    def d_index(self, wavelength_nm: float) -> float:
        self._check(wavelength_nm)
        return 0.0

    def d2_index(self, wavelength_nm: float) -> float:
        self._check(wavelength_nm)
        return 0.0


#: Malitson (1965) fused silica
FUSED_SILICA = SellmeierModel(
    b=(0.6961663, 0.4079426, 0.8974794),
    c_um=(0.0684043, 0.1162414, 9.896161),
    validity_nm=(210.0, 3710.0),
    name="fused silica",
)


def group_index(wavelength_nm: float, model=FUSED_SILICA) -> float:
    """Group index n_g = n - lambda dn/dlambda."""
    return model.index(wavelength_nm) - wavelength_nm * model.d_index(wavelength_nm)


def gvd(wavelength_nm: float, model=FUSED_SILICA) -> float:
    """Group velocity dispersion beta2 = lam^3/(2 pi c^2) d^2n/dlam^2, in fs^2/mm."""
    d2 = model.d2_index(wavelength_nm)
    beta2_per_nm = wavelength_nm**3 / (2.0 * np.pi * SPEED_OF_LIGHT_NM_FS**2) * d2
    return beta2_per_nm * 1.0e6


@dataclass(frozen=True)
class FiberSegment:
    """A length of guiding medium with an optional per-wavelength GVD override.

    `gvd_override` maps wavelength (nm) to effective GVD (fs^2/mm); when a
    wavelength is listed it takes precedence over the material model.
    """

    length_mm: float
    gvd_override: Mapping[float, float] | None = None
    index_model: SellmeierModel | ConstantIndex = FUSED_SILICA

    def __post_init__(self):
        if self.length_mm < 0:
            raise ValueError("fiber length must be >= 0")

    def gvd_at(self, wavelength_nm: float) -> float:
        """Effective GVD (fs^2/mm) at one wavelength."""
        if self.gvd_override:
            for lam, val in self.gvd_override.items():
                if abs(lam - wavelength_nm) < 1.0e-6:
                    return val
        return gvd(wavelength_nm, self.index_model)

    def total_gvd(self, wavelength_nm: float) -> float:
        """Accumulated quadratic spectral phase (fs^2) over the segment."""
        return self.gvd_at(wavelength_nm) * self.length_mm


def walkoff(segment: FiberSegment, lambda_photon_nm: float, lambda_pump_nm: float) -> float:
    """Pump-photon group delay difference over the segment, in fs (signed).

    Positive when the photon lags the pump (higher group index).  Callers
    gating on the sweep window use the magnitude.
    """
    ng_photon = group_index(lambda_photon_nm, segment.index_model)
    ng_pump = group_index(lambda_pump_nm, segment.index_model)
    return segment.length_mm * 1.0e6 * (ng_photon - ng_pump) / SPEED_OF_LIGHT_NM_FS


# Shipped transport fibers: effective GVD fixed by the measured per-arm
# totals (10,910 fs^2 over 0.5 m at 714 nm; 344,064 fs^2 over 21.2 m at 847 nm).
SIGNAL_TRANSPORT_FIBER = FiberSegment(
    length_mm=500.0, gvd_override={714.0: 10910.0 / 500.0}
)
IDLER_TRANSPORT_FIBER = FiberSegment(
    length_mm=21200.0, gvd_override={847.0: 344064.0 / 21200.0}
)
