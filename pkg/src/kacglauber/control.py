"""Control synthesis: the tilt that turns a given path into the typical one.

For a strictly interior colored path m(t, r) the tilted drift can be
inverted in closed form.  With A_i = beta((J*m) + a_i theta) and
Y_i = (d/dt m_i) cosh A_i, the field

    2 V_i = log( Y_i + sqrt( Y_i^2 + p_i^2 - m_i^2 ) ) - A_i - log(p_i - m_i)

makes m the solution of the tilted mesoscopic equation started from
m(0).  On unperturbed solutions the formula returns V = 0 identically.

Paths touching the box boundary admit no bounded control; synthesis
refuses them.  ``mollify_path`` prepares rough paths: it extends beyond
the horizon with the unperturbed flow, smooths with a one-sided temporal
kernel and a compact spatial bump, and blends the result with the
untouched path near t = 0 through a C^2 partition of unity, preserving
box margins throughout (every output value is a convex combination of
input values).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import control_cost, path_cost
from .errors import ConfigError, MarginViolation
from .grids import PathGrid, PotentialGrid, time_derivative
from .meanfield import integrate, mesh_convolve, mesh_kernel
from .model import ModelParams

DEFAULT_MARGIN = 1e-3


def synthesize_potential(
    path: PathGrid, params: ModelParams, margin: float = DEFAULT_MARGIN
) -> PotentialGrid:
    """Closed-form control field driving the tilted flow along ``path``.

    Requires the strict interior margin p_i - ||m_i||_inf >= ``margin`` at
    every time.  The time derivative at t = 0 uses the one-sided stencil
    of the first three snapshots.
    """
    if path.box_margin() < margin:
        raise MarginViolation(
            f"path margin {path.box_margin():.3e} below required {margin:.3e}"
        )
    kern = mesh_kernel(params, path.M)
    g = time_derivative(path)
    a = params.a_values.reshape((-1,) + (1,) * path.d)
    p = params.probabilities.reshape((-1,) + (1,) * path.d)
    fields = np.empty_like(path.fields)
    for k in range(path.n_times):
        m = path.fields[k]
        conv = mesh_convolve(kern, m.sum(axis=0))
        A = params.beta * (conv[None] + a * params.theta)
        Y = g[k] * np.cosh(A)
        root = np.sqrt(Y * Y + p * p - m * m)
        fields[k] = 0.5 * (np.log(Y + root) - A - np.log(p - m))
    return PotentialGrid(times=path.times.copy(), fields=fields)


@dataclass(frozen=True)
class RoundTripReport:
    """Outcome of re-integrating a path under its synthesized control."""

    sup_error: float
    path_cost_value: float
    control_cost_value: float
    potential: PotentialGrid

    @property
    def cost_gap(self) -> float:
        return abs(self.path_cost_value - self.control_cost_value)


def verify_roundtrip(
    path: PathGrid,
    params: ModelParams,
    dt: float = 1e-3,
    margin: float = DEFAULT_MARGIN,
) -> RoundTripReport:
    """Synthesize V from ``path``, re-integrate the tilted flow from the
    path's initial profile, and compare.

    Also evaluates the accumulated Hamiltonian cost of the path and the
    control cost of the synthesized field; the two coincide at quadrature
    level.
    """
    V = synthesize_potential(path, params, margin=margin)
    sol = integrate(
        path.fields[0],
        params,
        V=V,
        dt=dt,
        dt_rec=path.dt,
        T=float(path.times[-1]),
        t0=float(path.times[0]),
    )
    sup_err = float(np.abs(sol.fields - path.fields).max())
    kern = mesh_kernel(params, path.M)
    i0 = path_cost(path, params, kernel=kern).value
    kv = control_cost(path, V, params, kernel=kern)
    return RoundTripReport(
        sup_error=sup_err, path_cost_value=i0, control_cost_value=kv, potential=V
    )


def _smoothstep_c2(x: np.ndarray) -> np.ndarray:
    """Quintic smoothstep: 0 -> 1 on [0, 1] with vanishing first and
    second derivatives at both ends."""
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10.0 - 15.0 * x + 6.0 * x * x)


def _one_sided_kernel(n: int) -> np.ndarray:
    """Discrete forward-looking bump weights on offsets 0..n, sum 1."""
    s = np.arange(n + 1) / n
    w = np.zeros(n + 1)
    inner = (s > 0) & (s < 1)
    w[inner] = np.exp(-1.0 / (s[inner] * (1.0 - s[inner])))
    total = w.sum()
    if total <= 0:
        raise ConfigError("temporal mollifier support holds no grid points")
    return w / total


def _space_bump(M: int, d: int, radius: float) -> np.ndarray:
    """Nonnegative compact bump on the mesh, normalized to sum 1."""
    off = ((np.arange(M) / M + 0.5) % 1.0 - 0.5) / radius
    if d == 1:
        t = np.abs(off)
    else:
        mesh = np.meshgrid(*([off] * d), indexing="ij")
        t = np.sqrt(sum(m * m for m in mesh))
    w = np.zeros_like(t)
    w[t < 1] = np.exp(-1.0 / (1.0 - t[t < 1] ** 2))
    return w / w.sum()


def mollify_path(
    path: PathGrid,
    params: ModelParams,
    eps0: float,
    eps1: float,
    eta: float,
    dt: float = 1e-3,
) -> PathGrid:
    """C^2-blend a path with its space-time mollification.

    The path is first extended past the horizon by the unperturbed flow
    started from the final slice (so the one-sided temporal kernel, which
    looks forward over [0, eps0], never runs off the data), then smoothed
    in space by a compact bump of radius ``eps1`` and in time by the
    forward kernel.  A C^2 partition of unity keeps [0, eta] untouched and
    uses the smoothed path from 2 eta on.

    Every output value is a convex combination of input/extension values,
    so box margins are preserved.
    """
    if not (0 < eta and 2 * eta <= path.times[-1] - path.times[0]):
        raise ConfigError("eta must satisfy 0 < 2 eta <= horizon")
    dt_rec = path.dt
    n_fwd = max(2, int(np.ceil(eps0 / dt_rec)))
    ext = integrate(
        path.fields[-1],
        params,
        dt=min(dt, dt_rec),
        dt_rec=dt_rec,
        T=n_fwd * dt_rec,
        t0=0.0,
    )
    extended = np.concatenate([path.fields, ext.fields[1:]], axis=0)

    bump = _space_bump(path.M, path.d, eps1)
    bump_hat = np.fft.rfftn(bump)
    space_smoothed = np.empty_like(extended)
    flat = extended.reshape(-1, *extended.shape[-path.d:])
    out_flat = space_smoothed.reshape(-1, *extended.shape[-path.d:])
    dims = tuple(range(path.d))
    for j in range(flat.shape[0]):
        out_flat[j] = np.fft.irfftn(bump_hat * np.fft.rfftn(flat[j]),
                                    s=flat[j].shape, axes=dims)

    w = _one_sided_kernel(n_fwd)
    n_keep = path.n_times
    smooth = np.zeros_like(path.fields)
    for j, wj in enumerate(w):
        if wj:
            smooth += wj * space_smoothed[j : j + n_keep]

    rel = (path.times - path.times[0] - eta) / eta
    chi1 = 1.0 - _smoothstep_c2(rel)
    chi1 = chi1.reshape((-1,) + (1,) * (path.fields.ndim - 1))
    blended = chi1 * path.fields + (1.0 - chi1) * smooth
    return PathGrid(times=path.times.copy(), fields=blended, colors=path.colors)
