"""Windowed coincidence counting on sorted integer time-tag streams.

Counting semantics: a pair (a, b) coincides at offset `off` within window `w`
iff |(b - a) - off| <= w/2, i.e. the window is a full width.  The default
"gated" mode counts a-tags having at least one partner; "paired" mode counts
one-to-one matches, greedily in time order, and is symmetric under stream
exchange with negated offset.

Kernels are single-pass two-pointer merges over both streams, compiled with
numba.  Binary tag file layout (little endian): magic b"TTAG", version u16,
channel u16, count u64, then count u64 timestamps in ps.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

TTAG_MAGIC = b"TTAG"
TTAG_VERSION = 1
_HEADER = struct.Struct("<4sHHQ")


@dataclass
class TimeTagStream:
    channel: int
    times: np.ndarray  # int64 ps, nondecreasing

    def __post_init__(self):
        self.times = np.ascontiguousarray(self.times, dtype=np.int64)
        if self.times.ndim != 1:
            raise ValueError("time tags must form a 1D array")
        if self.times.size > 1 and np.any(np.diff(self.times) < 0):
            raise ValueError(f"channel {self.channel}: time tags are not sorted")

    def __len__(self) -> int:
        return self.times.size


@njit(cache=True)
def _count_gated(a, b, window, offset):
    n, m = a.size, b.size
    cnt = 0
    j = 0
    for i in range(n):
        target = a[i] + offset
        lo = 2 * target - window
        while j < m and 2 * b[j] < lo:
            j += 1
        if j < m and 2 * b[j] <= 2 * target + window:
            cnt += 1
    return cnt


@njit(cache=True)
def _count_paired(a, b, window, offset):
    n, m = a.size, b.size
    cnt = 0
    i = 0
    j = 0
    while i < n and j < m:
        d = 2 * (b[j] - a[i] - offset)
        if d < -window:
            j += 1
        elif d > window:
            i += 1
        else:
            cnt += 1
            i += 1
            j += 1
    return cnt


@njit(cache=True)
def _histogram(a, b, span, bin_width, counts):
    k_max = counts.size // 2
    m = b.size
    j_lo = 0
    for i in range(a.size):
        lo = a[i] - span
        hi = a[i] + span
        while j_lo < m and b[j_lo] < lo:
            j_lo += 1
        j = j_lo
        while j < m and b[j] <= hi:
            d = b[j] - a[i]
            if d >= 0:
                k = (2 * d + bin_width) // (2 * bin_width)
            else:
                k = -((-2 * d + bin_width) // (2 * bin_width))
            if -k_max <= k <= k_max:
                counts[k + k_max] += 1
            j += 1


def count_coincidences(
    a: TimeTagStream,
    b: TimeTagStream,
    window_ps: int,
    offset_ps: int = 0,
    mode: str = "gated",
) -> int:
    """Coincidences between two sorted streams (see module docstring)."""
    if window_ps <= 0:
        raise ValueError("window must be > 0")
    if mode == "gated":
        return int(_count_gated(a.times, b.times, np.int64(window_ps), np.int64(offset_ps)))
    if mode == "paired":
        return int(_count_paired(a.times, b.times, np.int64(window_ps), np.int64(offset_ps)))
    raise ValueError(f"unknown counting mode {mode!r}")


def estimate_accidentals(
    a: TimeTagStream,
    b: TimeTagStream,
    window_ps: int,
    rep_period_ps: int = 12500,
    mode: str = "gated",
) -> int:
    """Accidental estimate: the coincidence count one laser period away."""
    return count_coincidences(a, b, window_ps, offset_ps=rep_period_ps, mode=mode)


def correlation_histogram(
    a: TimeTagStream,
    b: TimeTagStream,
    range_ps: int,
    bin_ps: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of pairwise delays (b - a) within +-range.

    Bins are centered on integer multiples of `bin_ps`; returns
    (bin centers, counts).  For pulsed streams the comb peaks sit at
    multiples of the repetition period.
    """
    if bin_ps <= 0:
        raise ValueError("bin width must be > 0")
    if range_ps < bin_ps:
        raise ValueError("range must be >= one bin")
    k_max = int(range_ps // bin_ps)
    counts = np.zeros(2 * k_max + 1, dtype=np.int64)
    # sweep limit: outermost bin edge
    span = np.int64(k_max * bin_ps + bin_ps // 2)
    _histogram(a.times, b.times, span, np.int64(bin_ps), counts)
    centers = (np.arange(2 * k_max + 1) - k_max) * bin_ps
    return centers, counts


def save_timetags(stream: TimeTagStream, path) -> None:
    path = Path(path)
    if np.any(stream.times < 0):
        raise ValueError("tag file format stores unsigned timestamps; found negative tag")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(TTAG_MAGIC, TTAG_VERSION, stream.channel, stream.times.size))
        fh.write(stream.times.astype("<u8").tobytes())


def load_timetags(path) -> TimeTagStream:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{path}: file shorter than the 16-byte header")
    magic, version, channel, count = _HEADER.unpack_from(blob)
    if magic != TTAG_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {TTAG_MAGIC!r}")
    if version != TTAG_VERSION:
        raise ValueError(f"{path}: unsupported tag file version {version}")
    body = blob[_HEADER.size:]
    if len(body) != 8 * count:
        raise ValueError(
            f"{path}: header promises {count} tags but body holds {len(body) // 8}"
        )
    times = np.frombuffer(body, dtype="<u8").astype(np.int64)
    if np.any(times < 0):
        raise ValueError(f"{path}: timestamp exceeds the signed 64-bit range")
    return TimeTagStream(channel=channel, times=times)
