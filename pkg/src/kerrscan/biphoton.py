"""Two-photon joint amplitudes: construction, spectral phase, Fourier transforms.

States live on centered uniform grids.  Spectral states are sampled in
absolute angular frequency (rad/fs); temporal states are envelope times (fs)
with the optical carriers removed, so the time axes stay coarse.  The
forward transform convention is

    f(t_s, t_i) = (2 pi)^-1  integral f(w_s, w_i) exp(-i(w_s t_s + w_i t_i)) dw_s dw_i

evaluated in carrier-relative variables, which makes the discrete transform
unitary (Parseval-exact) up to rounding.

Normalization is unit L2 norm with trapezoidal measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dispersion import (
    GAUSSIAN_FWHM_PER_SIGMA,
    SPEED_OF_LIGHT_NM_FS,
    fwhm_to_sigma,
    wavelength_to_omega,
)

SPECTRAL = "spectral"
TEMPORAL = "temporal"


@dataclass(frozen=True)
class AxisGrid:
    """Uniform centered axis: samples are center + (k - count/2) * step."""

    center: float
    step: float
    count: int

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("axis step must be > 0")
        if self.count < 16 or (self.count & (self.count - 1)) != 0:
            raise ValueError("axis count must be a power of two >= 16")

    def samples(self) -> np.ndarray:
        return self.center + (np.arange(self.count) - self.count // 2) * self.step

    @property
    def min(self) -> float:
        return self.center - (self.count // 2) * self.step

    @property
    def max(self) -> float:
        return self.center + (self.count // 2 - 1) * self.step


@dataclass
class JointAmplitude:
    """Complex two-photon amplitude on a rectangular grid.

    Rows index the signal axis, columns the idler axis.  For temporal states
    `carrier` records the removed spectral centers (rad/fs) so the inverse
    transform can restore absolute frequencies.
    """

    domain: str
    axis_s: AxisGrid
    axis_i: AxisGrid
    values: np.ndarray
    carrier: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.domain not in (SPECTRAL, TEMPORAL):
            raise ValueError(f"unknown domain {self.domain!r}")
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.axis_s.count, self.axis_i.count):
            raise ValueError("value matrix shape does not match axis grids")
        if not np.all(np.isfinite(self.values.view(float))):
            raise ValueError("joint amplitude contains non-finite entries")


@dataclass(frozen=True)
class SourceConfig:
    """Downconversion source parameters (all widths are intensity FWHMs)."""

    lambda_signal_nm: float = 714.0
    lambda_idler_nm: float = 847.0
    lambda_pump_nm: float = 387.5
    photon_filter_fwhm_nm: float = 6.0
    pump_filter_fwhm_nm: float = 0.1
    chirp_signal_fs2: float = 10910.0
    chirp_idler_fs2: float = 344064.0
    compressor_fs2: float | None = -(344064.0 + 10910.0)

    def __post_init__(self):
        for name in ("lambda_signal_nm", "lambda_idler_nm", "lambda_pump_nm"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.photon_filter_fwhm_nm <= 0 or self.pump_filter_fwhm_nm <= 0:
            raise ValueError("filter bandwidths must be positive")

    def sigma_signal(self) -> float:
        return filter_sigma(self.lambda_signal_nm, self.photon_filter_fwhm_nm)

    def sigma_idler(self) -> float:
        return filter_sigma(self.lambda_idler_nm, self.photon_filter_fwhm_nm)

    def sigma_pump(self) -> float:
        return filter_sigma(self.lambda_pump_nm, self.pump_filter_fwhm_nm)


def filter_sigma(wavelength_nm: float, fwhm_nm: float) -> float:
    """Intensity sigma (rad/fs) of a bandpass filter given its FWHM in nm."""
    if fwhm_nm <= 0:
        raise ValueError("filter bandwidth must be positive")
    dw = 2.0 * np.pi * SPEED_OF_LIGHT_NM_FS * fwhm_nm / wavelength_nm**2
    return fwhm_to_sigma(dw)


def _trapezoid_weights(n: int, step: float) -> np.ndarray:
    w = np.full(n, step)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def norm(state: JointAmplitude) -> float:
    """L2 norm with trapezoidal measure."""
    ws = _trapezoid_weights(state.axis_s.count, state.axis_s.step)
    wi = _trapezoid_weights(state.axis_i.count, state.axis_i.step)
    return float(np.sqrt(np.einsum("ij,i,j->", np.abs(state.values) ** 2, ws, wi)))


def grid_count_for_chirp(sigma_omega: float, phi2_fs2: float, minimum: int = 512) -> int:
    """Smallest power-of-two axis count that keeps a chirped Gaussian resolvable.

    Two constraints at span +-6 sigma: the edge phase advance per sample stays
    below pi, and the time window after transform holds +-7 chirped sigmas.
    """
    half = 6.0 * sigma_omega
    sigma_t = math.hypot(1.0 / (2.0 * sigma_omega), abs(phi2_fs2) * sigma_omega)
    n_phase = 2.0 * half * abs(phi2_fs2) * half / np.pi
    n_span = 2.0 * half * 7.0 * sigma_t / np.pi
    n = max(minimum, int(np.ceil(max(n_phase, n_span))))
    return 1 << (n - 1).bit_length()


def default_grids(config: SourceConfig, count: int | None = None) -> tuple[AxisGrid, AxisGrid]:
    """Spectral grids spanning +-6 sigma of the widest factor per axis.

    When `count` is omitted it is widened automatically so the configured
    chirps (including the compressed idler) survive the transform to time.
    """
    sig_s, sig_i = config.sigma_signal(), config.sigma_idler()
    if count is None:
        comp = config.compressor_fs2 or 0.0
        count = max(
            grid_count_for_chirp(sig_s, config.chirp_signal_fs2),
            grid_count_for_chirp(sig_i, config.chirp_idler_fs2),
            grid_count_for_chirp(sig_i, config.chirp_idler_fs2 + comp),
        )
    grid_s = AxisGrid(wavelength_to_omega(config.lambda_signal_nm), 12.0 * sig_s / count, count)
    grid_i = AxisGrid(wavelength_to_omega(config.lambda_idler_nm), 12.0 * sig_i / count, count)
    return grid_s, grid_i


def build_jsa(
    config: SourceConfig,
    grids: tuple[AxisGrid, AxisGrid] | None = None,
    count: int | None = None,
) -> JointAmplitude:
    """Construct the transform-limited joint spectral amplitude.

    The amplitude is the product of a sum-frequency Gaussian (pump filter), and
    one marginal Gaussian per photon (interference filters), normalized to unit
    L2 norm.  Phase is identically zero.
    """
    if grids is None:
        grids = default_grids(config, count)
    grid_s, grid_i = grids

    w_s = wavelength_to_omega(config.lambda_signal_nm)
    w_i = wavelength_to_omega(config.lambda_idler_nm)
    w_p = wavelength_to_omega(config.lambda_pump_nm)
    sig_s, sig_i, sig_p = config.sigma_signal(), config.sigma_idler(), config.sigma_pump()

    # every Gaussian factor must fit at +-5 sigma
    for name, grid, center, sig in (
        ("signal", grid_s, w_s, sig_s),
        ("idler", grid_i, w_i, sig_i),
    ):
        if grid.min > center - 5.0 * sig or grid.max < center + 5.0 * sig:
            raise ValueError(f"{name} grid does not cover +-5 sigma of its filter")
    u_min = grid_s.min + grid_i.min
    u_max = grid_s.max + grid_i.max
    if u_min > w_p - 5.0 * sig_p or u_max < w_p + 5.0 * sig_p:
        raise ValueError("grids do not cover +-5 sigma of the sum-frequency factor")

    xs = grid_s.samples()[:, None]
    yi = grid_i.samples()[None, :]
    vals = np.exp(
        -((xs + yi - w_p) ** 2) / (4.0 * sig_p**2)
        - ((xs - w_s) ** 2) / (4.0 * sig_s**2)
        - ((yi - w_i) ** 2) / (4.0 * sig_i**2)
    ).astype(complex)
    state = JointAmplitude(SPECTRAL, grid_s, grid_i, vals)
    state.values /= norm(state)
    return state


def apply_quadratic_phase(state: JointAmplitude, phi2_s: float, phi2_i: float) -> JointAmplitude:
    """Multiply by exp(i phi2 (w - w_center)^2 / 2) on each spectral axis."""
    if state.domain != SPECTRAL:
        raise ValueError("quadratic spectral phase requires a spectral-domain state")
    xs = state.axis_s.samples()[:, None] - state.axis_s.center
    yi = state.axis_i.samples()[None, :] - state.axis_i.center
    phase = np.exp(1j * (phi2_s * xs**2 / 2.0 + phi2_i * yi**2 / 2.0))
    return JointAmplitude(SPECTRAL, state.axis_s, state.axis_i, state.values * phase)


def _conjugate_axis(axis: AxisGrid, center: float) -> AxisGrid:
    return AxisGrid(center, 2.0 * np.pi / (axis.count * axis.step), axis.count)


def to_temporal(state: JointAmplitude) -> JointAmplitude:
    """Centered 2D transform to envelope time; norm-preserving."""
    if state.domain != SPECTRAL:
        raise ValueError("to_temporal expects a spectral-domain state")
    scale = state.axis_s.step * state.axis_i.step / (2.0 * np.pi)
    vals = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(state.values))) * scale
    return JointAmplitude(
        TEMPORAL,
        _conjugate_axis(state.axis_s, 0.0),
        _conjugate_axis(state.axis_i, 0.0),
        vals,
        carrier=(state.axis_s.center, state.axis_i.center),
    )


def to_spectral(state: JointAmplitude) -> JointAmplitude:
    """Inverse of `to_temporal`; restores the recorded carrier frequencies."""
    if state.domain != TEMPORAL:
        raise ValueError("to_spectral expects a temporal-domain state")
    cs, ci = state.carrier
    grid_s = _conjugate_axis(state.axis_s, cs)
    grid_i = _conjugate_axis(state.axis_i, ci)
    scale = state.axis_s.step * state.axis_i.step * state.axis_s.count * state.axis_i.count / (2.0 * np.pi)
    vals = np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(state.values))) * scale
    return JointAmplitude(SPECTRAL, grid_s, grid_i, vals)


def intensity(state: JointAmplitude) -> np.ndarray:
    """|f|^2 as a real matrix."""
    return np.abs(state.values) ** 2


def marginals(state: JointAmplitude) -> tuple[np.ndarray, np.ndarray]:
    """Marginal intensity densities along each axis (integrated over the other)."""
    inten = intensity(state)
    return inten.sum(axis=1) * state.axis_i.step, inten.sum(axis=0) * state.axis_s.step


def rotated_stats(state: JointAmplitude) -> tuple[float, float]:
    """Standard deviations of (x_s + x_i) and (x_s - x_i) under |f|^2.

    Exact second moments on the grid; no fitting.
    """
    inten = intensity(state)
    w = inten / inten.sum()
    xs = state.axis_s.samples()[:, None]
    yi = state.axis_i.samples()[None, :]
    out = []
    for coord in (xs + yi, xs - yi):
        mu = float((w * coord).sum())
        out.append(float(np.sqrt((w * (coord - mu) ** 2).sum())))
    return out[0], out[1]


def intensity_std(x: np.ndarray, y: np.ndarray) -> float:
    """Intensity-weighted standard deviation of a sampled 1D profile."""
    y = np.asarray(y, dtype=float)
    total = y.sum()
    if total <= 0:
        raise ValueError("profile has no positive weight")
    mu = float((y * x).sum() / total)
    return float(np.sqrt((y * (np.asarray(x) - mu) ** 2).sum() / total))


# ---------------------------------------------------------------------------
# Single-arm pulses: the same machinery in one dimension, used for per-photon
# width checks (a photon's own wavepacket, as opposed to the joint envelope).

def gaussian_pulse(
    sigma_omega: float,
    phi2_fs2: float = 0.0,
    count: int = 1024,
    span_sigmas: float = 6.0,
) -> tuple[AxisGrid, np.ndarray]:
    """Spectral envelope exp(-x^2/(4 sigma^2)) exp(i phi2 x^2/2), unit norm."""
    if sigma_omega <= 0:
        raise ValueError("spectral width must be positive")
    grid = AxisGrid(0.0, 2.0 * span_sigmas * sigma_omega / count, count)
    x = grid.samples()
    vals = np.exp(-(x**2) / (4.0 * sigma_omega**2) + 1j * phi2_fs2 * x**2 / 2.0)
    w = _trapezoid_weights(count, grid.step)
    vals /= np.sqrt(np.sum(np.abs(vals) ** 2 * w))
    return grid, vals


def pulse_to_temporal(grid: AxisGrid, values: np.ndarray) -> tuple[AxisGrid, np.ndarray]:
    """1D transform t <- w with the unitary (2 pi)^-1/2 convention."""
    scale = grid.step / np.sqrt(2.0 * np.pi)
    vals = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(values))) * scale
    return _conjugate_axis(grid, 0.0), vals


def temporal_pulse_std(sigma_omega: float, phi2_fs2: float = 0.0, count: int = 1024) -> float:
    """Temporal intensity sigma of a (possibly chirped) Gaussian pulse, via FFT."""
    grid, vals = gaussian_pulse(sigma_omega, phi2_fs2, count)
    tgrid, tvals = pulse_to_temporal(grid, vals)
    return intensity_std(tgrid.samples(), np.abs(tvals) ** 2)
