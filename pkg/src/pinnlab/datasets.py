"""Training-set construction, sensor-style ingestion and denoising.

CSV formats (all floats written with 17 significant digits):

* pendulum: header ``time_s,angle_rad``, one sample per line;
* frames (long form): header ``time_s,row,col,value_c``, lines grouped by
  timestamp and row-major within a frame.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .simulate import FrameStack, Series1D

__all__ = [
    "FrameStack",
    "Series1D",
    "TrainingSet",
    "DenoiseConfig",
    "ParseError",
    "linspace_indices",
    "uniform_indices",
    "adjacent_indices",
    "strided_split",
    "sample_linspace",
    "sample_uniform",
    "sample_adjacent",
    "build_training_set",
    "add_gaussian_noise",
    "spike_scan",
    "spike_indices",
    "drop_frames",
    "savgol_coeffs",
    "savgol_smooth",
    "odd_window",
    "denoise",
    "reduce_frame",
    "remove_offset",
    "load_pendulum_csv",
    "write_pendulum_csv",
    "load_frames_csv",
    "write_frames_csv",
]


class ParseError(ValueError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


@dataclass
class TrainingSet:
    train_x: np.ndarray
    train_y: np.ndarray
    colloc_x: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def counts(self):
        return {
            "n_data": int(len(self.train_y)),
            "n_colloc": 0 if self.colloc_x is None else int(len(self.colloc_x)),
            "n_test": int(len(self.test_y)),
        }


@dataclass(frozen=True)
class DenoiseConfig:
    spike_threshold: float = 100.0
    savgol_window: int = 401
    savgol_order: int = 3

    def __post_init__(self):
        if self.spike_threshold <= 0:
            raise ValueError("spike threshold must be positive")
        if self.savgol_window % 2 == 0:
            raise ValueError(f"Savitzky-Golay window must be odd, got {self.savgol_window}")
        if self.savgol_window <= self.savgol_order:
            raise ValueError("Savitzky-Golay window must exceed the polynomial order")


# -- index selection ---------------------------------------------------------------


def _check_n(n, size):
    if not 1 <= n <= size:
        raise ValueError(f"requested {n} points from a source of {size}")


def linspace_indices(size, n):
    """``n`` evenly strided indices including both endpoints."""
    _check_n(n, size)
    return np.unique(np.round(np.linspace(0, size - 1, n)).astype(int))


def uniform_indices(size, n, seed):
    """``n`` distinct indices drawn without replacement, sorted."""
    _check_n(n, size)
    return np.sort(np.random.default_rng(seed).choice(size, size=n, replace=False))


def adjacent_indices(size, n=None, fraction=None):
    """The first ``n`` indices, or the first ``fraction`` of them."""
    if (n is None) == (fraction is None):
        raise ValueError("give exactly one of n or fraction")
    if fraction is not None:
        if not 0 < fraction <= 1:
            raise ValueError("fraction must lie in (0, 1]")
        n = max(1, int(math.floor(fraction * size + 1e-9)))
    _check_n(n, size)
    return np.arange(n)


def strided_split(size, train_stride, test_stride, offset=0):
    """Interleaved train/test strides over ``range(size)``; test excludes train."""
    if train_stride < 1 or test_stride < 1 or offset < 0:
        raise ValueError("strides must be >= 1 and offset >= 0")
    train = np.arange(offset, size, train_stride)
    test = np.setdiff1d(np.arange(offset, size, test_stride), train)
    return train, test


# -- training sets -----------------------------------------------------------------


def _source_arrays(source):
    """Per-sample inputs and targets, plus the number of selectable units."""
    if isinstance(source, Series1D):
        return source.times[:, None], source.values.copy()
    return source.points()


def _expand_frames(stack, frame_idx):
    ppf = stack.shape[0] * stack.shape[1]
    return (np.asarray(frame_idx)[:, None] * ppf + np.arange(ppf)[None, :]).ravel()


def collocation_points(source, n, mode="linspace", seed=0):
    """Collocation inputs spanning the whole source domain.

    For a series, ``linspace`` gives evenly spaced times. For a frame stack it
    takes every pixel of ``n // pixels_per_frame`` evenly spaced frames.
    ``uniform`` draws points uniformly from the input bounding box.
    """
    if n <= 0:
        return None
    x, _ = _source_arrays(source)
    lo, hi = x.min(axis=0), x.max(axis=0)
    if mode == "uniform":
        rng = np.random.default_rng(seed)
        return lo + (hi - lo) * rng.random((n, x.shape[1]))
    if mode != "linspace":
        raise ValueError(f"unknown collocation mode {mode!r}")
    if isinstance(source, Series1D):
        return np.linspace(lo[0], hi[0], n)[:, None]
    ppf = source.shape[0] * source.shape[1]
    k = max(1, min(len(source), n // ppf))
    return x[_expand_frames(source, linspace_indices(len(source), k))]


def build_training_set(
    source,
    train_units,
    *,
    strategy,
    unit="samples",
    test="full",
    test_units=None,
    n_colloc=0,
    colloc="linspace",
    colloc_seed=0,
    extra=None,
):
    """Assemble a :class:`TrainingSet` from selected units of ``source``.

    Units are samples of a series, or frames (``unit="frames"``) / pixel
    points (``unit="points"``) of a stack. ``test`` is ``"full"`` (the whole
    source, the reference solution), ``"complement"`` (everything not used
    for training) or ``"given"`` (``test_units``).
    """
    x, y = _source_arrays(source)
    train_units = np.asarray(train_units, dtype=int)
    if isinstance(source, FrameStack) and unit == "frames":
        train_idx = _expand_frames(source, train_units)
    else:
        train_idx = train_units
    if test == "full":
        test_idx = np.arange(len(y))
    elif test == "complement":
        test_idx = np.setdiff1d(np.arange(len(y)), train_idx)
    elif test == "given":
        tu = np.asarray(test_units, dtype=int)
        test_idx = _expand_frames(source, tu) if unit == "frames" and isinstance(source, FrameStack) else tu
    else:
        raise ValueError(f"unknown test split {test!r}")
    prov = {"strategy": strategy, "unit": unit, "test": test, "colloc": colloc}
    prov.update(extra or {})
    ts = TrainingSet(
        x[train_idx],
        y[train_idx],
        collocation_points(source, n_colloc, colloc, colloc_seed),
        x[test_idx],
        y[test_idx],
        train_idx,
        test_idx,
        prov,
    )
    ts.provenance.update(ts.counts)
    return ts


def _n_units(source, unit):
    if isinstance(source, Series1D) or unit == "points":
        return _source_arrays(source)[1].size
    return len(source)


def sample_linspace(source, n, *, unit="frames", **kw):
    unit = "samples" if isinstance(source, Series1D) else unit
    idx = linspace_indices(_n_units(source, unit), n)
    return build_training_set(source, idx, strategy="linspace", unit=unit, extra={"n": n}, **kw)


def sample_uniform(source, n, seed, *, unit="frames", **kw):
    unit = "samples" if isinstance(source, Series1D) else unit
    idx = uniform_indices(_n_units(source, unit), n, seed)
    return build_training_set(
        source, idx, strategy="uniform", unit=unit, extra={"n": n, "seed": seed}, **kw
    )


def sample_adjacent(source, n=None, fraction=None, *, unit="frames", **kw):
    unit = "samples" if isinstance(source, Series1D) else unit
    idx = adjacent_indices(_n_units(source, unit), n, fraction)
    return build_training_set(
        source, idx, strategy="adjacent", unit=unit, extra={"n": n, "fraction": fraction}, **kw
    )


def add_gaussian_noise(targets, sigma, seed):
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    targets = np.asarray(targets, dtype=np.float64)
    if sigma == 0:
        return targets.copy()
    return targets + np.random.default_rng(seed).normal(0.0, sigma, size=targets.shape)


# -- denoising --------------------------------------------------------------------


@dataclass
class SpikeScan:
    indices: np.ndarray
    stuck_pixels: int


def spike_scan(stack, threshold):
    """Anchor-based spike detection over every pixel's time series.

    Each pixel keeps an anchor, initially its first measurement. A
    measurement further than ``threshold`` from the anchor flags its frame;
    otherwise it becomes the new anchor. ``stuck_pixels`` counts pixels
    whose anchor never moved past the first frame although later frames
    exist (a spiky first frame poisons the whole series).
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    frames = stack.frames if isinstance(stack, FrameStack) else np.asarray(stack, dtype=float)
    if frames.shape[0] == 0:
        raise ValueError("empty frame stack")
    series = frames.reshape(frames.shape[0], -1)
    anchor = series[0].copy()
    flagged = np.zeros(series.shape[0], dtype=bool)
    updated = np.zeros(series.shape[1], dtype=bool)
    for k in range(series.shape[0]):
        m = series[k]
        bad = np.abs(anchor - m) > threshold
        flagged[k] = bad.any()
        anchor = np.where(bad, anchor, m)
        if k > 0:
            updated |= ~bad
    stuck = int(np.count_nonzero(~updated)) if series.shape[0] > 1 else 0
    return SpikeScan(np.flatnonzero(flagged), stuck)


def spike_indices(stack, threshold):
    """Sorted, unique frame indices flagged by :func:`spike_scan`."""
    return spike_scan(stack, threshold).indices


def drop_frames(stack, indices):
    idx = np.unique(np.asarray(indices, dtype=int))
    if idx.size and (idx[0] < 0 or idx[-1] >= len(stack)):
        raise IndexError(f"frame index out of range for a stack of {len(stack)}")
    keep = np.ones(len(stack), dtype=bool)
    keep[idx] = False
    return FrameStack(stack.timestamps[keep], stack.frames[keep])


def odd_window(window):
    """Round an even window length up to the next odd one."""
    return window + 1 if window % 2 == 0 else window


def _check_savgol(window, order, n):
    if window % 2 == 0:
        raise ValueError(f"window must be odd, got {window}")
    if window <= order:
        raise ValueError("window must exceed the polynomial order")
    if order < 0:
        raise ValueError("order must be >= 0")
    if n < window:
        raise ValueError(f"series of length {n} is shorter than the window {window}")


def _fit_matrix(positions, eval_at, order, scale):
    """Matrix mapping samples at ``positions`` to their LSQ polynomial at ``eval_at``."""
    a = np.vander(positions / scale, order + 1, increasing=True)
    e = np.vander(np.asarray(eval_at, dtype=float) / scale, order + 1, increasing=True)
    return e @ np.linalg.pinv(a)


def savgol_coeffs(window, order):
    """Weights giving the window-centre value of the least-squares polynomial."""
    half = window // 2
    pos = np.arange(-half, half + 1, dtype=float)
    return _fit_matrix(pos, [0.0], order, max(half, 1))[0]


def savgol_smooth(values, window, order, axis=0):
    """Savitzky-Golay smoothing along ``axis``.

    Interior samples are replaced by the centre value of a polynomial fitted
    over the centred window. The first and last ``window // 2`` samples are
    taken from one polynomial fitted to the first/last full window.
    """
    x = np.moveaxis(np.asarray(values, dtype=np.float64), axis, -1)
    n = x.shape[-1]
    _check_savgol(window, order, n)
    half = window // 2
    out = np.empty_like(x)
    out[..., half : n - half] = sliding_window_view(x, window, axis=-1) @ savgol_coeffs(window, order)
    if half:
        pos = np.arange(window, dtype=float) - half
        edge = _fit_matrix(pos, pos[:half], order, max(half, 1))
        out[..., :half] = x[..., :window] @ edge.T
        edge = _fit_matrix(pos, pos[-half:], order, max(half, 1))
        out[..., n - half :] = x[..., n - window :] @ edge.T
    return np.moveaxis(out, -1, axis)


@dataclass
class DenoiseReport:
    dropped_frames: int
    dropped_fraction: float
    stuck_pixels: int
    savgol_window: int
    savgol_order: int
    window_requested: int


def denoise(stack, config, window_requested=None):
    """Drop spiky frames, then smooth every pixel over time."""
    scan = spike_scan(stack, config.spike_threshold)
    clean = drop_frames(stack, scan.indices)
    if len(clean) == 0:
        raise ValueError("every frame was flagged as a spike")
    smoothed = savgol_smooth(clean.frames, config.savgol_window, config.savgol_order, axis=0)
    report = DenoiseReport(
        int(scan.indices.size),
        float(scan.indices.size / len(stack)),
        scan.stuck_pixels,
        config.savgol_window,
        config.savgol_order,
        config.savgol_window if window_requested is None else int(window_requested),
    )
    return FrameStack(clean.timestamps, smoothed), report


def reduce_frame(stack, k):
    """Centred ``k x k`` crop; odd leftovers go to the bottom/right."""
    ny, nx = stack.shape
    if not 1 <= k <= min(nx, ny):
        raise ValueError(f"crop size {k} does not fit a {ny}x{nx} frame")
    r0, c0 = (ny - k) // 2, (nx - k) // 2
    return FrameStack(stack.timestamps.copy(), stack.frames[:, r0 : r0 + k, c0 : c0 + k].copy())


def remove_offset(series):
    mid = (series.values.max() + series.values.min()) / 2.0
    return Series1D(series.times.copy(), series.values - mid, series.velocities)


# -- CSV ---------------------------------------------------------------------------


def _f(x):
    return format(float(x), ".17g")


def write_pendulum_csv(series, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "angle_rad"])
        for t, v in zip(series.times, series.values):
            w.writerow([_f(t), _f(v)])


def _read_rows(path, header):
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(path, 1, "empty file")
    if [c.strip() for c in rows[0]] != header:
        raise ParseError(path, 1, f"expected header {','.join(header)}")
    if len(rows) == 1:
        raise ParseError(path, 2, "no data rows")
    return path, rows[1:]


def load_pendulum_csv(path):
    path, rows = _read_rows(path, ["time_s", "angle_rad"])
    t = np.empty(len(rows))
    v = np.empty(len(rows))
    for i, row in enumerate(rows):
        line = i + 2
        if len(row) != 2:
            raise ParseError(path, line, f"expected 2 fields, got {len(row)}")
        try:
            t[i], v[i] = float(row[0]), float(row[1])
        except ValueError as exc:
            raise ParseError(path, line, str(exc)) from None
    try:
        return Series1D(t, v)
    except ValueError as exc:
        raise ParseError(path, 2, str(exc)) from None


def write_frames_csv(stack, path):
    ny, nx = stack.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "row", "col", "value_c"])
        for t, frame in zip(stack.timestamps, stack.frames):
            ts = _f(t)
            for r in range(ny):
                for c in range(nx):
                    w.writerow([ts, r, c, _f(frame[r, c])])


def load_frames_csv(path):
    path, rows = _read_rows(path, ["time_s", "row", "col", "value_c"])
    times, rr, cc, vals = [], [], [], []
    for i, row in enumerate(rows):
        line = i + 2
        if len(row) != 4:
            raise ParseError(path, line, f"expected 4 fields, got {len(row)}")
        try:
            times.append(float(row[0]))
            rr.append(int(row[1]))
            cc.append(int(row[2]))
            vals.append(float(row[3]))
        except ValueError as exc:
            raise ParseError(path, line, str(exc)) from None
    rr, cc = np.array(rr), np.array(cc)
    if rr.min() < 0 or cc.min() < 0:
        raise ParseError(path, 2, "negative pixel index")
    ny, nx = rr.max() + 1, cc.max() + 1
    ppf = ny * nx
    if len(rows) % ppf:
        raise ParseError(path, len(rows) + 1, f"row count is not a multiple of {ny}x{nx} pixels")
    expect_r = np.tile(np.repeat(np.arange(ny), nx), len(rows) // ppf)
    expect_c = np.tile(np.arange(nx), ny * (len(rows) // ppf))
    bad = np.flatnonzero((rr != expect_r) | (cc != expect_c))
    if bad.size:
        raise ParseError(path, int(bad[0]) + 2, "pixels not in row-major order within a frame")
    t = np.array(times).reshape(-1, ppf)
    bad = np.flatnonzero(np.any(t != t[:, :1], axis=1))
    if bad.size:
        raise ParseError(path, int(bad[0]) * ppf + 2, "timestamp changes inside a frame")
    try:
        return FrameStack(t[:, 0], np.array(vals).reshape(-1, ny, nx))
    except ValueError as exc:
        raise ParseError(path, 2, str(exc)) from None
