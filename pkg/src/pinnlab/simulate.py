"""Reference data: Euler-Cromer pendulum and explicit finite-difference heat."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ConfigError(ValueError):
    pass


@dataclass
class Series1D:
    times: np.ndarray
    values: np.ndarray
    velocities: np.ndarray = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-D and of equal length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return self.times.size


@dataclass
class FrameStack:
    """Frames of shape ``(n_frames, ny, nx)``, row-major, with one timestamp each."""

    timestamps: np.ndarray
    frames: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3:
            if self.frames.size == 0:
                self.frames = self.frames.reshape(0, 0, 0)
            else:
                raise ValueError(f"frames must be 3-D, got shape {self.frames.shape}")
        if self.frames.shape[0] != self.timestamps.size:
            raise ValueError("one timestamp per frame required")
        if self.timestamps.size > 1 and np.any(np.diff(self.timestamps) < 0):
            raise ValueError("timestamps must be non-decreasing")

    def __len__(self):
        return self.timestamps.size

    @property
    def shape(self):
        """``(ny, nx)`` of one frame."""
        return self.frames.shape[1:]

    def points(self):
        """Flatten to ``(t, x, y)`` inputs and temperature targets.

        ``x`` is the column index and ``y`` the row index of a pixel.
        """
        nt, ny, nx = self.frames.shape
        t, y, x = np.meshgrid(self.timestamps, np.arange(ny), np.arange(nx), indexing="ij")
        inputs = np.stack([t.ravel(), x.ravel().astype(float), y.ravel().astype(float)], axis=1)
        return inputs, self.frames.ravel().copy()


@dataclass
class PendulumSimConfig:
    n_points: int = 1500
    t_end: float = 6.0
    phi0: float = -math.pi / 2
    omega0: float = 0.0
    g: float = 9.8
    L: float = 0.325
    b: float = 0.001

    def __post_init__(self):
        if self.n_points < 2:
            raise ConfigError("need at least 2 time points")
        if self.t_end <= 0:
            raise ConfigError("t_end must be positive")
        if not -2 * math.pi <= self.phi0 <= 2 * math.pi:
            raise ConfigError("phi0 must lie in [-2pi, 2pi]")

    @property
    def dt(self):
        return self.t_end / (self.n_points - 1)


def euler_cromer(config):
    """Semi-implicit Euler with per-step velocity damping.

    ``w[i+1] = w[i] - b w[i] - (g/L) sin(phi[i]) dt`` and
    ``phi[i+1] = phi[i] + w[i+1] dt``; note ``b`` is applied per step, not
    multiplied by ``dt``.
    """
    n, dt = config.n_points, config.dt
    k = config.g / config.L
    phi = np.empty(n)
    omega = np.empty(n)
    phi[0], omega[0] = config.phi0, config.omega0
    for i in range(n - 1):
        omega[i + 1] = omega[i] - config.b * omega[i] - k * math.sin(phi[i]) * dt
        phi[i + 1] = phi[i] + omega[i + 1] * dt
    times = np.linspace(0.0, config.t_end, n)
    return Series1D(times, phi, omega)


def pendulum_energy(series, config):
    """Energy per unit mass, ``L^2 w^2 / 2 + g L (1 - cos phi)``."""
    if series.velocities is None:
        raise ValueError("series carries no velocities")
    w, phi = series.velocities, series.values
    return 0.5 * config.L**2 * w**2 + config.g * config.L * (1.0 - np.cos(phi))


@dataclass
class HeatSimConfig:
    nx: int = 8
    ny: int = 8
    dx: float = 1.0
    dy: float = 1.0
    dt: float = 0.0125
    steps: int = 160
    alpha: float = 10.0
    beta: float = 10.0
    source: tuple = None  # (row, col, power): adds power*dt to that cell every step
    save_every: int = 1
    initial: np.ndarray = None  # (ny, nx); defaults to gaussian_field(...)

    @property
    def stable_dt(self):
        return 1.0 / (2.0 * (self.alpha / self.dx**2 + self.beta / self.dy**2))

    def validate(self):
        if self.nx < 2 or self.ny < 2:
            raise ConfigError("grid must be at least 2x2")
        if self.dt <= 0 or self.steps < 0 or self.save_every < 1:
            raise ConfigError("dt > 0, steps >= 0 and save_every >= 1 required")
        if self.dt > self.stable_dt:
            raise ConfigError(
                f"dt={self.dt} violates the explicit stability limit {self.stable_dt:.6g}"
            )
        if self.initial is not None and np.shape(self.initial) != (self.ny, self.nx):
            raise ConfigError(f"initial field must have shape {(self.ny, self.nx)}")


def gaussian_field(ny, nx, center=None, width=None, base=20.0, peak=30.0):
    """``base + peak * exp(...)``; an anisotropic bump, by default off-centre."""
    cy, cx = (0.5625 * ny, 0.3125 * nx) if center is None else center
    wy, wx = (0.25 * ny, 0.3125 * nx) if width is None else width
    y, x = np.mgrid[0:ny, 0:nx].astype(float)
    return base + peak * np.exp(-((x - cx) ** 2 / (2 * wx**2) + (y - cy) ** 2 / (2 * wy**2)))


def fd_heat_solve(config):
    """Explicit 5-point scheme with insulated (mirrored ghost cell) edges.

    Returns frames at steps ``0, save_every, 2*save_every, ...``.
    """
    config.validate()
    u = (
        gaussian_field(config.ny, config.nx)
        if config.initial is None
        else np.array(config.initial, dtype=np.float64)
    )
    cx = config.alpha * config.dt / config.dx**2
    cy = config.beta * config.dt / config.dy**2
    frames, times = [u.copy()], [0.0]
    for k in range(1, config.steps + 1):
        p = np.pad(u, 1, mode="edge")
        u = u + cx * (p[1:-1, 2:] - 2 * u + p[1:-1, :-2]) + cy * (p[2:, 1:-1] - 2 * u + p[:-2, 1:-1])
        if config.source is not None:
            r, c, power = config.source
            u[int(r), int(c)] += power * config.dt
        if k % config.save_every == 0:
            frames.append(u.copy())
            times.append(k * config.dt)
    return FrameStack(np.array(times), np.array(frames))
