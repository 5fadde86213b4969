"""Measurement analysis chain: background subtraction, rotated slice averaging,
Gaussian fitting, and the time-bandwidth witness.

Width conventions: fitted and reported Delta values are Gaussian standard
deviations (sigma); FWHM values, where shown, are labeled as such.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class FitResult:
    amplitude: float
    center: float
    sigma: float
    offset: float
    covariance: np.ndarray  # 4x4, parameter order (amplitude, center, sigma, offset)
    residual_rms: float
    converged: bool

    def sigma_error(self) -> float:
        return float(np.sqrt(max(self.covariance[2, 2], 0.0)))


@dataclass(frozen=True)
class WitnessReport:
    """Time-bandwidth witness: product below 1 certifies inseparability."""

    delta_t_fs: float
    delta_t_err_fs: float
    delta_omega_inv_fs: float
    delta_omega_err_inv_fs: float
    product: float
    product_err: float
    sigmas_of_violation: float


def subtract_background(raw: np.ndarray, background: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """raw - scale * background, negatives retained."""
    raw = np.asarray(raw, dtype=float)
    background = np.asarray(background, dtype=float)
    if raw.shape != background.shape:
        raise ValueError("raw and background shapes differ")
    if scale < 0:
        raise ValueError("background scale must be >= 0")
    return raw - scale * background


def rotated_slice_profile(
    values: np.ndarray,
    axis_s: np.ndarray,
    axis_i: np.ndarray,
    direction: str = "difference",
    band_count: int = 5,
) -> tuple[np.ndarray, np.ndarray]:
    """Averaged diagonal cross sections of a 2D map.

    The map is resampled onto rotated coordinates u = x_s + x_i and
    d = x_s - x_i by bilinear interpolation.  For `direction="difference"`
    the mean of `band_count` adjacent u-bands centered on the distribution's
    u-centroid is returned as a profile over d; `direction="sum"` swaps the
    roles.  Points falling outside the original grid contribute zero.
    """
    values = np.asarray(values, dtype=float)
    axis_s = np.asarray(axis_s, dtype=float)
    axis_i = np.asarray(axis_i, dtype=float)
    if values.shape != (axis_s.size, axis_i.size):
        raise ValueError("map shape does not match the axes")
    if axis_s.size < 2 or axis_i.size < 2:
        raise ValueError("axes must hold at least two samples")
    if band_count < 1:
        raise ValueError("band_count must be >= 1")
    if direction not in ("difference", "sum"):
        raise ValueError(f"unknown slice direction {direction!r}")

    step_s = axis_s[1] - axis_s[0]
    step_i = axis_i[1] - axis_i[0]
    h = max(step_s, step_i)

    weights = np.clip(values, 0.0, None)
    total = weights.sum()
    if total <= 0:
        raise ValueError("map has no positive weight; cannot locate the ridge")
    xs = axis_s[:, None]
    yi = axis_i[None, :]
    u_centroid = float((weights * (xs + yi)).sum() / total)
    d_centroid = float((weights * (xs - yi)).sum() / total)

    u_axis = np.arange(axis_s[0] + axis_i[0], axis_s[-1] + axis_i[-1] + h / 2, h)
    d_axis = np.arange(axis_s[0] - axis_i[-1], axis_s[-1] - axis_i[0] + h / 2, h)

    def bilinear(x, y):
        fi = (x - axis_s[0]) / step_s
        fj = (y - axis_i[0]) / step_i
        inside = (fi >= 0) & (fi <= axis_s.size - 1) & (fj >= 0) & (fj <= axis_i.size - 1)
        fi = np.clip(fi, 0, axis_s.size - 1 - 1e-12)
        fj = np.clip(fj, 0, axis_i.size - 1 - 1e-12)
        i0 = fi.astype(int)
        j0 = fj.astype(int)
        wi = fi - i0
        wj = fj - j0
        i1 = np.minimum(i0 + 1, axis_s.size - 1)
        j1 = np.minimum(j0 + 1, axis_i.size - 1)
        v = (
            values[i0, j0] * (1 - wi) * (1 - wj)
            + values[i1, j0] * wi * (1 - wj)
            + values[i0, j1] * (1 - wi) * wj
            + values[i1, j1] * wi * wj
        )
        return np.where(inside, v, 0.0)

    if direction == "difference":
        band_axis, band_center, prof_axis = u_axis, u_centroid, d_axis
    else:
        band_axis, band_center, prof_axis = d_axis, d_centroid, u_axis
    k_center = int(round((band_center - band_axis[0]) / h))
    k_lo = k_center - (band_count - 1) // 2
    k_lo = max(0, min(k_lo, band_axis.size - band_count))

    rows = []
    for k in range(k_lo, k_lo + band_count):
        band = band_axis[k]
        if direction == "difference":
            x = (band + prof_axis) / 2.0
            y = (band - prof_axis) / 2.0
        else:
            x = (prof_axis + band) / 2.0
            y = (prof_axis - band) / 2.0
        rows.append(bilinear(x, y))
    return prof_axis, np.mean(rows, axis=0)


def _gauss_model(x, amplitude, center, sigma, offset):
    return amplitude * np.exp(-((x - center) ** 2) / (2.0 * sigma**2)) + offset


def fit_gaussian(
    x: np.ndarray,
    y: np.ndarray,
    initial: tuple[float, float, float, float] | None = None,
    weights: np.ndarray | None = None,
    max_iter: int = 200,
    tol: float = 1.0e-8,
) -> FitResult:
    """Least-squares Gaussian-plus-offset fit by damped Gauss-Newton.

    Parameters are (amplitude, center, sigma, offset).  Without an initial
    guess, starting values come from the profile moments.  Non-convergence is
    flagged on the result rather than raised.  With `weights` (1/variance),
    the covariance is the plain inverse normal matrix; with unit weights it
    is scaled by the reduced chi-square.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise ValueError("x and y lengths differ")
    if x.size < 8:
        raise ValueError("need at least 8 samples to fit")
    if np.ptp(y) == 0:
        raise ValueError("profile is constant; nothing to fit")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be >= 0")

    if initial is None:
        offset0 = float(np.min(y))
        bump = np.clip(y - offset0, 0.0, None)
        mass = bump.sum()
        center0 = float((bump * x).sum() / mass)
        var0 = float((bump * (x - center0) ** 2).sum() / mass)
        sigma0 = math.sqrt(max(var0, (x[1] - x[0]) ** 2))
        params = np.array([float(np.max(y) - offset0), center0, sigma0, offset0])
    else:
        params = np.array(initial, dtype=float)
        if params[2] == 0:
            raise ValueError("initial sigma must be nonzero")

    def cost(p):
        r = _gauss_model(x, *p) - y
        return float(np.sum(w * r * r)), r

    lam = 1.0e-3
    best_cost, r = cost(params)
    converged = False
    for _ in range(max_iter):
        amplitude, center, sigma, _ = params
        e = np.exp(-((x - center) ** 2) / (2.0 * sigma**2))
        jac = np.empty((x.size, 4))
        jac[:, 0] = e
        jac[:, 1] = amplitude * e * (x - center) / sigma**2
        jac[:, 2] = amplitude * e * (x - center) ** 2 / sigma**3
        jac[:, 3] = 1.0
        jtw = jac.T * w
        normal = jtw @ jac
        grad = jtw @ r
        step = None
        for _ in range(12):
            try:
                step = np.linalg.solve(normal + lam * np.diag(np.diag(normal)), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = params + step
            trial_cost, trial_r = cost(trial)
            if np.isfinite(trial_cost) and trial_cost <= best_cost:
                lam = max(lam / 3.0, 1.0e-12)
                break
            lam *= 10.0
        else:
            break
        rel = np.max(np.abs(step) / (np.abs(params) + 1.0e-30))
        params, best_cost, r = trial, trial_cost, trial_r
        if rel < tol:
            converged = True
            break

    params[2] = abs(params[2])
    amplitude, center, sigma, offset = params
    e = np.exp(-((x - center) ** 2) / (2.0 * sigma**2))
    jac = np.empty((x.size, 4))
    jac[:, 0] = e
    jac[:, 1] = amplitude * e * (x - center) / sigma**2
    jac[:, 2] = amplitude * e * (x - center) ** 2 / sigma**3
    jac[:, 3] = 1.0
    normal = (jac.T * w) @ jac
    dof = max(x.size - 4, 1)
    try:
        cov = np.linalg.inv(normal)
        if weights is None:
            cov = cov * (best_cost / dof)
    except np.linalg.LinAlgError:
        cov = np.full((4, 4), np.nan)
        converged = False
    cov = (cov + cov.T) / 2.0
    return FitResult(
        amplitude=float(amplitude),
        center=float(center),
        sigma=float(sigma),
        offset=float(offset),
        covariance=cov,
        residual_rms=float(np.sqrt(np.mean(r * r))),
        converged=converged,
    )


def witness(
    delta_t_fs: float,
    delta_t_err_fs: float,
    delta_omega_inv_fs: float,
    delta_omega_err_inv_fs: float,
) -> WitnessReport:
    """Evaluate the separability bound Delta(w_s+w_i) * Delta(t_s-t_i) >= 1.

    The product error follows from relative errors in quadrature; the
    violation is (1 - product) / error, negative when the bound holds.
    """
    if delta_t_fs <= 0 or delta_omega_inv_fs <= 0:
        raise ValueError("widths must be positive")
    product = delta_t_fs * delta_omega_inv_fs
    rel = math.hypot(
        delta_t_err_fs / delta_t_fs, delta_omega_err_inv_fs / delta_omega_inv_fs
    )
    err = product * rel
    violation = (1.0 - product) / err if err > 0 else math.inf if product < 1 else 0.0
    if product == 1.0:
        violation = 0.0
    return WitnessReport(
        delta_t_fs=delta_t_fs,
        delta_t_err_fs=delta_t_err_fs,
        delta_omega_inv_fs=delta_omega_inv_fs,
        delta_omega_err_inv_fs=delta_omega_err_inv_fs,
        product=product,
        product_err=err,
        sigmas_of_violation=violation,
    )


@dataclass
class SensitivityResult:
    """Fitted difference-time width versus background scale."""

    rows: list[tuple[float, float, float, bool]]  # (scale, sigma_fs, err_fs, converged)
    statistical_fs: float
    systematic_fs: float

    def combined_fs(self) -> float:
        return math.hypot(self.statistical_fs, self.systematic_fs)


def background_sensitivity(
    raw: np.ndarray,
    background: np.ndarray,
    axis_s: np.ndarray,
    axis_i: np.ndarray,
    scale_grid: np.ndarray,
    band_count: int = 5,
) -> SensitivityResult:
    """Refit the difference-time width for each background scale.

    The systematic component is the half-range of the fitted width over
    scales within [0.9, 1.1]; the statistical component is the fit error at
    the scale closest to 1.  Combine them in quadrature via `combined_fs`.
    """
    scales = np.asarray(scale_grid, dtype=float)
    if scales.size == 0 or np.any(scales < 0):
        raise ValueError("scale grid must be nonempty and non-negative")
    rows = []
    for scale in scales:
        sub = subtract_background(raw, background, scale)
        coords, prof = rotated_slice_profile(sub, axis_s, axis_i, "difference", band_count)
        fit = fit_gaussian(coords, prof)
        rows.append((float(scale), fit.sigma, fit.sigma_error(), fit.converged))
    central = np.array([r[1] for r in rows if 0.9 <= r[0] <= 1.1 and r[3]])
    systematic = float(np.ptp(central) / 2.0) if central.size >= 2 else 0.0
    anchor = min(rows, key=lambda r: abs(r[0] - 1.0))
    return SensitivityResult(rows=rows, statistical_fs=anchor[2], systematic_fs=systematic)
