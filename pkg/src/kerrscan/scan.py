"""Raster-scan coincidence measurement simulator.

Expected coincidence rates are the 2D cross-correlation of the joint temporal
intensity with the two gate profiles; singles follow from each marginal and
its own gate; accidentals use the pulsed-source product formula
S_s * S_i / f_rep plus a constant pump-leak floor.  Counts are Poisson with a
counter-based RNG (Philox) keyed on the scan seed so results are independent
of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .gate import GateProfile
from .timetags import TimeTagStream


@dataclass(frozen=True)
class ScanConfig:
    """Raster scan parameters; delay axes are symmetric linspaces in fs."""

    half_span_fs: float = 1500.0
    pixels: int = 128
    dwell_s: float | None = None  # None: auto, >= 200 expected true counts at peak
    rep_rate_hz: float = 80.0e6
    pair_rate_hz: float = 4.0e5
    arm_rate_signal_hz: float = 3.6e6
    arm_rate_idler_hz: float = 2.6e6
    noise_floor_signal_hz: float = 2.0e5
    noise_floor_idler_hz: float = 4.8e5
    pump_leak_rate_hz: float = 1.0e3
    seed: int = 12345

    def __post_init__(self):
        if self.half_span_fs <= 0 or self.pixels < 2:
            raise ValueError("scan axes must have positive span and >= 2 pixels")
        if self.dwell_s is not None and self.dwell_s <= 0:
            raise ValueError("dwell must be > 0")
        if self.rep_rate_hz <= 0:
            raise ValueError("repetition rate must be > 0")
        for name in (
            "pair_rate_hz",
            "arm_rate_signal_hz",
            "arm_rate_idler_hz",
            "noise_floor_signal_hz",
            "noise_floor_idler_hz",
            "pump_leak_rate_hz",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def delay_axes(self) -> tuple[np.ndarray, np.ndarray]:
        ax = np.linspace(-self.half_span_fs, self.half_span_fs, self.pixels)
        return ax, ax.copy()


@dataclass
class ScanResult:
    """One simulated raster scan, with the noiseless truth retained."""

    raw: np.ndarray
    background_estimate: np.ndarray
    singles_s: np.ndarray
    singles_i: np.ndarray
    expected_truth: np.ndarray
    delays_s: np.ndarray
    delays_i: np.ndarray
    dwell_s: float
    seed: int
    config: ScanConfig | None = None

    def __post_init__(self):
        for name in ("raw", "background_estimate", "singles_s", "singles_i"):
            arr = getattr(self, name)
            if np.any(arr < 0):
                raise ValueError(f"{name} contains negative counts")
        shape = (len(self.delays_s), len(self.delays_i))
        if self.raw.shape != shape or self.background_estimate.shape != shape:
            raise ValueError("count matrices do not match the delay axes")


def _resample_kernel(gate: GateProfile, step: float) -> tuple[np.ndarray, int]:
    """Gate samples on a lattice of pitch `step`; returns (values, index of lag 0)."""
    t = gate.axis.samples()
    k_max = int(np.ceil(max(abs(t[0]), abs(t[-1])) / step))
    lattice = np.arange(-k_max, k_max + 1) * step
    return np.interp(lattice, t, gate.values, left=0.0, right=0.0), k_max


def _lag_correlate_fft(jti: np.ndarray, kernel_s, kernel_i) -> np.ndarray:
    """Full cross-correlation over all integer lags, via FFT along each axis."""
    out = jti
    for axis, (kern, _) in enumerate((kernel_s, kernel_i)):
        n = out.shape[axis] + kern.size - 1
        nfft = 1 << (n - 1).bit_length()
        spec = np.fft.rfft(out, nfft, axis=axis)
        kspec = np.fft.rfft(kern[::-1], nfft)
        shape = [1, 1]
        shape[axis] = kspec.size
        spec = spec * kspec.reshape(shape)
        out = np.fft.irfft(spec, nfft, axis=axis)
        out = np.take(out, np.arange(n), axis=axis)
    return out


def expected_coincidence_map(
    jti: np.ndarray,
    axis_ts: np.ndarray,
    axis_ti: np.ndarray,
    gate_s: GateProfile,
    gate_i: GateProfile,
    delays_s: np.ndarray,
    delays_i: np.ndarray,
    pair_rate_hz: float,
    method: str = "fft",
) -> np.ndarray:
    """Expected coincidence rate C(t_s, t_i) over the delay grid, in 1/s.

    C = pair_rate * integral JTI(u, v) g_s(u - t_s) g_i(v - t_i) du dv.
    Gates are first resampled onto the JTI lattice (linear interpolation);
    `method` selects the FFT path or the direct summation reference path,
    which agree to rounding.
    """
    step_s = float(axis_ts[1] - axis_ts[0])
    step_i = float(axis_ti[1] - axis_ti[0])
    ks = _resample_kernel(gate_s, step_s)
    ki = _resample_kernel(gate_i, step_i)

    if method == "fft":
        full = _lag_correlate_fft(jti, ks, ki)
        # lag m of the correlation sits at delay axis_t[0] + (m - k_max)*step
        lag_s = axis_ts[0] + (np.arange(full.shape[0]) - ks[1]) * step_s
        lag_i = axis_ti[0] + (np.arange(full.shape[1]) - ki[1]) * step_i
        out = np.empty((len(delays_s), full.shape[1]))
        for col in range(full.shape[1]):
            out[:, col] = np.interp(delays_s, lag_s, full[:, col], left=0.0, right=0.0)
        final = np.empty((len(delays_s), len(delays_i)))
        for row in range(out.shape[0]):
            final[row, :] = np.interp(delays_i, lag_i, out[row, :], left=0.0, right=0.0)
        corr = final
    elif method == "direct":
        kern_s, kmax_s = ks
        kern_i, kmax_i = ki
        lat_s = (np.arange(kern_s.size) - kmax_s) * step_s
        lat_i = (np.arange(kern_i.size) - kmax_i) * step_i
        gs = np.empty((len(axis_ts), len(delays_s)))
        gi = np.empty((len(axis_ti), len(delays_i)))
        for m, d in enumerate(delays_s):
            gs[:, m] = np.interp(axis_ts - d, lat_s, kern_s, left=0.0, right=0.0)
        for m, d in enumerate(delays_i):
            gi[:, m] = np.interp(axis_ti - d, lat_i, kern_i, left=0.0, right=0.0)
        corr = np.einsum("uv,um,vn->mn", jti, gs, gi, optimize=True)
    else:
        raise ValueError(f"unknown method {method!r}")
    return pair_rate_hz * corr * step_s * step_i


def singles_map(
    marginal: np.ndarray,
    axis_t: np.ndarray,
    gate: GateProfile,
    arm_rate_hz: float,
    noise_floor_hz: float,
    delays: np.ndarray,
) -> np.ndarray:
    """Gated singles rate versus that arm's own delay, in 1/s."""
    step = float(axis_t[1] - axis_t[0])
    kern, kmax = _resample_kernel(gate, step)
    lattice = (np.arange(kern.size) - kmax) * step
    out = np.empty(len(delays))
    for m, d in enumerate(delays):
        g = np.interp(axis_t - d, lattice, kern, left=0.0, right=0.0)
        out[m] = arm_rate_hz * np.sum(marginal * g) * step + noise_floor_hz
    return out


def accidental_map(
    singles_s: np.ndarray,
    singles_i: np.ndarray,
    rep_rate_hz: float,
    pump_leak_rate_hz: float = 0.0,
) -> np.ndarray:
    """Accidental coincidence rate S_s(t_s) S_i(t_i) / f_rep + leak, in 1/s."""
    if rep_rate_hz <= 0:
        raise ValueError("repetition rate must be > 0")
    return np.outer(singles_s, singles_i) / rep_rate_hz + pump_leak_rate_hz


def sample_scan(
    truth: np.ndarray,
    accidental: np.ndarray,
    dwell_s: float,
    seed: int,
    delays_s: np.ndarray,
    delays_i: np.ndarray,
    singles_rate_s: np.ndarray | None = None,
    singles_rate_i: np.ndarray | None = None,
    config: ScanConfig | None = None,
) -> ScanResult:
    """Poisson-sample a raster scan; the background estimate is an independent
    draw of the accidental map (the delayed-window measurement of the same mean).
    """
    if dwell_s <= 0:
        raise ValueError("dwell must be > 0")
    if truth.shape != accidental.shape:
        raise ValueError("truth and accidental maps must share a shape")
    rng = np.random.Generator(np.random.Philox(key=seed))
    raw = rng.poisson((truth + accidental) * dwell_s)
    background = rng.poisson(accidental * dwell_s)
    shape = truth.shape
    if singles_rate_s is None:
        sing_s = np.zeros(shape, dtype=np.int64)
    else:
        sing_s = rng.poisson(np.broadcast_to(singles_rate_s[:, None] * dwell_s, shape))
    if singles_rate_i is None:
        sing_i = np.zeros(shape, dtype=np.int64)
    else:
        sing_i = rng.poisson(np.broadcast_to(singles_rate_i[None, :] * dwell_s, shape))
    return ScanResult(
        raw=raw,
        background_estimate=background,
        singles_s=sing_s,
        singles_i=sing_i,
        expected_truth=truth.copy(),
        delays_s=np.asarray(delays_s, dtype=float),
        delays_i=np.asarray(delays_i, dtype=float),
        dwell_s=dwell_s,
        seed=seed,
        config=config,
    )


def generate_timetags(
    rate_a_hz: float,
    rate_b_hz: float,
    pair_rate_hz: float,
    rep_rate_hz: float,
    duration_s: float,
    seed: int,
    jitter_a_ps: float = 0.0,
    jitter_b_ps: float = 0.0,
    independent_singles: bool = False,
) -> tuple[TimeTagStream, TimeTagStream]:
    """Synthetic pulsed-source tag streams in integer picoseconds.

    `rate_a_hz` / `rate_b_hz` are the total per-channel rates, of which
    `pair_rate_hz` is correlated.  By default each laser slot holds at most
    one event category (pair / a-only / b-only), which makes the zero-delay
    coincidence rate exactly the pair rate; `independent_singles=True`
    instead throws unpaired singles independently per channel, allowing
    chance same-slot coincidences.
    """
    if duration_s <= 0:
        raise ValueError("duration must be > 0")
    if rep_rate_hz <= 0:
        raise ValueError("repetition rate must be > 0")
    for name, v in (("rate_a_hz", rate_a_hz), ("rate_b_hz", rate_b_hz), ("pair_rate_hz", pair_rate_hz)):
        if v < 0:
            raise ValueError(f"{name} must be >= 0")
    if pair_rate_hz > min(rate_a_hz, rate_b_hz):
        raise ValueError("pair rate cannot exceed either total channel rate")

    p_pair = pair_rate_hz / rep_rate_hz
    q_a = (rate_a_hz - pair_rate_hz) / rep_rate_hz
    q_b = (rate_b_hz - pair_rate_hz) / rep_rate_hz
    if independent_singles:
        scale = 1.0 - p_pair
        q_a = q_a / scale if scale > 0 else 0.0
        q_b = q_b / scale if scale > 0 else 0.0
        if p_pair > 1 or q_a > 1 or q_b > 1:
            raise ValueError("per-slot event probability exceeds 1; lower the rates")
    elif p_pair + q_a + q_b > 1:
        raise ValueError("per-slot event probability exceeds 1; lower the rates")

    period_ps = int(round(1.0e12 / rep_rate_hz))
    n_slots = int(round(duration_s * rep_rate_hz))
    rng = np.random.Generator(np.random.Philox(key=seed))

    tags_a: list[np.ndarray] = []
    tags_b: list[np.ndarray] = []
    chunk = 8_000_000
    for start in range(0, n_slots, chunk):
        n = min(chunk, n_slots - start)
        u = rng.random(n)
        if independent_singles:
            pair = u < p_pair
            fire_a = pair | (rng.random(n) < q_a) & ~pair
            fire_b = pair | (rng.random(n) < q_b) & ~pair
        else:
            fire_a = u < p_pair + q_a  # pair or a-only
            fire_b = (u < p_pair) | ((u >= p_pair + q_a) & (u < p_pair + q_a + q_b))
        base = (start + np.arange(n, dtype=np.int64)) * period_ps
        tags_a.append(base[fire_a])
        tags_b.append(base[fire_b])

    def _finish(parts: list[np.ndarray], jitter: float, channel: int) -> TimeTagStream:
        t = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
        if jitter > 0:
            t = t + np.rint(rng.normal(0.0, jitter, t.size)).astype(np.int64)
            t.sort()
        return TimeTagStream(channel=channel, times=t)

    return _finish(tags_a, jitter_a_ps, 0), _finish(tags_b, jitter_b_ps, 1)
