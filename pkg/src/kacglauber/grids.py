"""Time-space grid containers shared by the solver, simulator and cost code.

A PathGrid holds colored profiles on a uniform time grid; a PotentialGrid
holds colored control fields with piecewise-linear interpolation in time.
Space grids are uniform on the torus with nodes at j/M; integrals are flat
sums over nodes (the midpoint rule for cells centered at the nodes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage as _sndi

from .errors import BoxViolation, ConfigError


def space_mean(arr: np.ndarray, d: int) -> np.ndarray:
    """Integral over the torus: mean over the trailing d axes."""
    return np.asarray(arr, dtype=float).mean(axis=tuple(range(-d, 0)))


def resample_periodic(arr: np.ndarray, d: int, n_to: int, method: str = "linear") -> np.ndarray:
    """Resample the trailing d axes onto an (n_to,)*d torus grid.

    ``linear`` wraps around the torus; ``trig`` goes through the Fourier
    coefficients (exact for band-limited fields).
    """
    arr = np.asarray(arr, dtype=float)
    n_from = arr.shape[-1]
    if n_from == n_to:
        return arr.copy()
    lead = arr.shape[:-d]
    work = arr.reshape((-1,) + arr.shape[-d:])
    if method == "trig":
        out = np.empty((work.shape[0],) + (n_to,) * d)
        for j in range(work.shape[0]):
            spec = np.fft.fftn(work[j])
            big = np.zeros((n_to,) * d, dtype=complex)
            # copy the centered spectrum block that fits in both grids
            keep = min(n_from, n_to)
            half = keep // 2
            sl_lo = slice(0, half + keep % 2)
            sl_hi = slice(-half, None) if half else slice(0, 0)
            for axes_sel in np.ndindex(*([2] * d)):
                src = tuple(sl_lo if s == 0 else sl_hi for s in axes_sel)
                big[src] = spec[src]
            out[j] = np.fft.ifftn(big).real * (n_to / n_from) ** d
        return out.reshape(lead + (n_to,) * d)
    if method != "linear":
        raise ConfigError(f"unknown resampling method {method!r}")
    coords = np.meshgrid(*([np.arange(n_to) * n_from / n_to] * d), indexing="ij")
    out = np.empty((work.shape[0],) + (n_to,) * d)
    for j in range(work.shape[0]):
        out[j] = _sndi.map_coordinates(work[j], coords, order=1, mode="grid-wrap")
    return out.reshape(lead + (n_to,) * d)


def _check_uniform_times(times: np.ndarray) -> None:
    if times.ndim != 1 or times.size < 1:
        raise ConfigError("time grid must be a nonempty 1-d array")
    if times.size > 1:
        steps = np.diff(times)
        if np.any(steps <= 0) or np.abs(steps - steps[0]).max() > 1e-9 * max(steps[0], 1e-12):
            raise ConfigError("time grid must be uniform and increasing")


@dataclass
class PathGrid:
    """Colored profiles on a uniform time grid.

    ``fields`` has shape (n_times, n_colors) + (M,)*d.  ``colors`` carries
    the (a_i, p_i) pairs needed for box checks and pairings.
    """

    times: np.ndarray
    fields: np.ndarray
    colors: tuple[tuple[float, float], ...]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.fields = np.asarray(self.fields, dtype=float)
        _check_uniform_times(self.times)
        if self.fields.shape[0] != self.times.size:
            raise ConfigError("fields first axis must match the time grid")
        if self.fields.shape[1] != len(self.colors):
            raise ConfigError("fields second axis must match the color count")

    @property
    def n_times(self) -> int:
        return self.times.size

    @property
    def n_colors(self) -> int:
        return len(self.colors)

    @property
    def d(self) -> int:
        return self.fields.ndim - 2

    @property
    def M(self) -> int:
        return self.fields.shape[-1]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.n_times > 1 else 0.0

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.colors])

    def color_sum(self) -> np.ndarray:
        """Uncolored profile sum_i m_i, shape (n_times,) + (M,)*d."""
        return self.fields.sum(axis=1)

    def box_margin(self) -> float:
        """min over colors and times of p_i - ||m_i||_inf."""
        sup = np.abs(self.fields).max(axis=tuple(range(2, self.fields.ndim)))
        if self.d == 0:
            sup = np.abs(self.fields)
        return float((self.probabilities[None, :] - sup).min())

    def check_box(self, tol: float = 1e-9) -> None:
        if self.box_margin() < -tol:
            raise BoxViolation(f"profile leaves the box by {-self.box_margin():.3e}")

    def interval_index(self, t: float) -> int:
        """Index k with times[k] <= t < times[k+1], clamped to the grid."""
        k = int(np.searchsorted(self.times, t, side="right") - 1)
        return min(max(k, 0), self.n_times - 2) if self.n_times > 1 else 0

    def at(self, t: float) -> np.ndarray:
        """Piecewise-linear value in time, clamped outside the grid."""
        if self.n_times == 1:
            return self.fields[0]
        k = self.interval_index(t)
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        w = min(max(w, 0.0), 1.0)
        return (1.0 - w) * self.fields[k] + w * self.fields[k + 1]

    def restrict(self, t_end: float) -> "PathGrid":
        """Sub-path on [t0, t_end]; t_end must sit on the grid."""
        k = int(round((t_end - self.times[0]) / self.dt))
        if abs(self.times[0] + k * self.dt - t_end) > 1e-9:
            raise ConfigError("restriction endpoint must lie on the time grid")
        return PathGrid(self.times[: k + 1].copy(), self.fields[: k + 1].copy(), self.colors)


@dataclass
class PotentialGrid:
    """Colored control fields V_i(t, r) on a uniform time grid.

    Piecewise linear in time; a single time slice means a time-constant
    field.  ``dt_fields`` optionally carries an analytic time derivative
    sampled on the same grid.
    """

    times: np.ndarray
    fields: np.ndarray
    dt_fields: np.ndarray | None = None
    space_interp: str = "linear"

    def __post_init__(self):
        self.times = np.atleast_1d(np.asarray(self.times, dtype=float))
        self.fields = np.asarray(self.fields, dtype=float)
        _check_uniform_times(self.times)
        if self.fields.shape[0] != self.times.size:
            raise ConfigError("fields first axis must match the time grid")
        if self.dt_fields is not None:
            self.dt_fields = np.asarray(self.dt_fields, dtype=float)
            if self.dt_fields.shape != self.fields.shape:
                raise ConfigError("dt_fields must match fields in shape")

    @property
    def n_colors(self) -> int:
        return self.fields.shape[1]

    @property
    def d(self) -> int:
        return self.fields.ndim - 2

    @property
    def M(self) -> int:
        return self.fields.shape[-1]

    @property
    def is_constant(self) -> bool:
        return self.times.size == 1

    def sup_norm(self) -> float:
        return float(np.abs(self.fields).max())

    def _interval(self, t: float) -> tuple[int, float]:
        k = int(np.searchsorted(self.times, t, side="right") - 1)
        k = min(max(k, 0), self.times.size - 2)
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return k, min(max(w, 0.0), 1.0)

    def at(self, t: float) -> np.ndarray:
        if self.is_constant:
            return self.fields[0]
        k, w = self._interval(t)
        return (1.0 - w) * self.fields[k] + w * self.fields[k + 1]

    def dt_at(self, t: float) -> np.ndarray:
        """Time derivative; analytic slices when given, else the slope of
        the interpolation on the containing interval."""
        if self.is_constant:
            return np.zeros_like(self.fields[0])
        k, w = self._interval(t)
        if self.dt_fields is not None:
            return (1.0 - w) * self.dt_fields[k] + w * self.dt_fields[k + 1]
        return (self.fields[k + 1] - self.fields[k]) / (self.times[k + 1] - self.times[k])

    def resample_space(self, n_to: int, method: str | None = None) -> "PotentialGrid":
        method = method or self.space_interp
        fields = resample_periodic(self.fields, self.d, n_to, method)
        dt_fields = None
        if self.dt_fields is not None:
            dt_fields = resample_periodic(self.dt_fields, self.d, n_to, method)
        return PotentialGrid(self.times.copy(), fields, dt_fields, self.space_interp)


def constant_potential(values, d: int, M: int) -> PotentialGrid:
    """Time-constant, space-constant control from one value per color."""
    values = np.asarray(values, dtype=float)
    fields = np.broadcast_to(
        values.reshape((1, values.size) + (1,) * d), (1, values.size) + (M,) * d
    ).copy()
    return PotentialGrid(np.zeros(1), fields)


def time_derivative(path: PathGrid) -> np.ndarray:
    """d/dt of the path fields: central differences inside, one-sided
    second-order stencils at both endpoints."""
    if path.n_times < 3:
        raise ConfigError("need at least three time slices for the derivative")
    return np.gradient(path.fields, path.times, axis=0, edge_order=2)
