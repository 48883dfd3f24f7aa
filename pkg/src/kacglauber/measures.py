"""Colored empirical measures and the weak-topology path metric.

The empirical magnetization of color i pairs a test function G against
gamma^d sum_x alpha_i(x) sigma(x) G(x/L).  On a block-coarsened grid the
same pairing becomes a flat sum against cell densities, which is also the
form used for mesoscopic profiles, so one pairing routine serves both.

The metric is a weighted sum over a bank of test functions with sup-norm
at most one: rho(mu, nu) = sum_k 2^{-k} |<mu - nu, H_k>|, summed over
colors, with the path version taking the sup over the time grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product as _iproduct

import numpy as np

from .errors import ConfigError
from .grids import PathGrid
from .model import DiscreteKernel, DisorderField, ModelParams, grid_mesh


def coarsen(site_field: np.ndarray, d: int, M: int) -> np.ndarray:
    """Cell densities on an (M,)*d grid from site values on (L,)*d.

    Each cell value is the cell average of the site values times (L/M)^d /
    (L/M)^d = the plain average; densities stay relative to Lebesgue
    measure.  L must be a multiple of M.
    """
    L = site_field.shape[-1]
    if L % M:
        raise ConfigError("coarsening resolution must divide the lattice side")
    b = L // M
    lead = site_field.shape[: site_field.ndim - d]
    shape = lead + sum(((M, b),) * d, ())
    work = site_field.reshape(shape)
    axes = tuple(len(lead) + 2 * k + 1 for k in range(d))
    return work.mean(axis=axes)


@dataclass(frozen=True)
class ColoredEmpirical:
    """Colored signed cell densities of one spin configuration."""

    density: np.ndarray  # (n_colors,) + (M,)*d
    d: int

    @property
    def M(self) -> int:
        return self.density.shape[-1]

    @property
    def n_colors(self) -> int:
        return self.density.shape[0]


def empirical(sigma: np.ndarray, disorder: DisorderField, d: int, M: int | None = None) -> ColoredEmpirical:
    """Block-averaged colored empirical densities at resolution M (default L)."""
    site = disorder.indicators * sigma[None, ...]
    M = M if M is not None else sigma.shape[-1]
    return ColoredEmpirical(density=coarsen(site, d, M), d=d)


def pair(density: np.ndarray, test_values: np.ndarray, d: int) -> np.ndarray:
    """<mu, G> for cell densities against test values on the same grid.

    Broadcasts over leading axes: pairing a (n_colors, M) density with a
    (K, M) bank returns nothing useful, so align shapes before the call;
    the sum runs over the trailing d axes only.
    """
    return (np.asarray(density, dtype=float) * test_values).sum(
        axis=tuple(range(-d, 0))
    ) / test_values.shape[-1] ** d


class TestBank:
    """Bank (H_k) of smooth test functions with sup-norm <= 1.

    The default bank is the constant 1 followed by cos/sin of 2 pi n r with
    integer frequency vectors ordered by |n|_1 then lexicographically,
    truncated at K entries (default 16).  Values on an n-point grid are
    cached per resolution.
    """

    __test__ = False  # not a pytest class, despite the name

    def __init__(self, d: int, K: int = 16):
        if K < 1:
            raise ConfigError("bank truncation must be >= 1")
        self.d = d
        self.K = K
        self._grid_cache: dict[int, np.ndarray] = {}
        self._freqs = self._enumerate(d, K)

    @staticmethod
    def _enumerate(d: int, K: int) -> list[tuple[str, tuple[int, ...]]]:
        entries: list[tuple[str, tuple[int, ...]]] = [("const", (0,) * d)]
        radius = 1
        while len(entries) < K:
            shell = [
                v
                for v in _iproduct(range(-radius, radius + 1), repeat=d)
                if sum(abs(c) for c in v) == radius
            ]
            # one representative per +-v pair; cos is even, sin flips sign
            seen = set()
            for v in sorted(shell):
                if tuple(-c for c in v) in seen:
                    continue
                seen.add(v)
                entries.append(("cos", v))
                entries.append(("sin", v))
            radius += 1
        return entries[:K]

    def weights(self) -> np.ndarray:
        return 0.5 ** np.arange(1, self.K + 1)

    def on_grid(self, n: int) -> np.ndarray:
        """Bank values, shape (K,) + (n,)*d."""
        if n not in self._grid_cache:
            mesh = grid_mesh(n, self.d)
            rows = []
            for kind, v in self._freqs:
                if kind == "const":
                    rows.append(np.ones((n,) * self.d))
                    continue
                phase = 2.0 * np.pi * sum(c * m for c, m in zip(v, mesh))
                rows.append(np.cos(phase) if kind == "cos" else np.sin(phase))
            vals = np.stack(rows)
            vals.setflags(write=False)
            self._grid_cache[n] = vals
        return self._grid_cache[n]


def _bank_pairings(density: np.ndarray, d: int, bank: TestBank) -> np.ndarray:
    """<mu_i, H_k> for all colors and bank entries, shape (n_colors, K)."""
    density = np.asarray(density, dtype=float)
    vals = bank.on_grid(density.shape[-1])
    flat_mu = density.reshape(density.shape[0], -1)
    flat_h = vals.reshape(bank.K, -1)
    return flat_mu @ flat_h.T / flat_h.shape[1]


def rho(mu_density: np.ndarray, nu_density: np.ndarray, d: int, bank: TestBank) -> float:
    """Colored weak distance: sum_i sum_k 2^{-k} |<mu_i - nu_i, H_k>|.

    The two densities may live on different grid resolutions.
    """
    pm = _bank_pairings(mu_density, d, bank)
    pn = _bank_pairings(nu_density, d, bank)
    return float((np.abs(pm - pn) * bank.weights()[None, :]).sum())


def path_distance(path_a: PathGrid, path_b: PathGrid, bank: TestBank) -> float:
    """sup over the common time grid of the colored weak distance."""
    if path_a.n_times != path_b.n_times or np.abs(path_a.times - path_b.times).max() > 1e-9:
        raise ConfigError("paths must share the same time grid")
    best = 0.0
    for k in range(path_a.n_times):
        best = max(best, rho(path_a.fields[k], path_b.fields[k], path_a.d, bank))
    return best


def in_neighborhood(path: PathGrid, target: PathGrid, delta: float, bank: TestBank) -> bool:
    """Strict delta-neighborhood membership in the path metric."""
    return path_distance(path, target, bank) < delta


def shifted_lattice_convolution(
    sigma: np.ndarray, params: ModelParams, fine_factor: int
) -> np.ndarray:
    """(pi * J)(r) on a q-times finer grid: gamma^d sum_y J(r - y/L) sigma(y).

    Returns shape (qL,)*d.  Each residue class of the fine grid is one
    circular convolution with a fractionally shifted kernel sample.
    """
    q = fine_factor
    L = params.L
    d = params.d
    out = np.empty((q * L,) * d)
    base = (np.arange(L) / L + 0.5) % 1.0 - 0.5
    for shift in _iproduct(range(q), repeat=d):
        if d == 1:
            offs = base + shift[0] / (q * L)
            table = params.kernel.evaluate(offs) / L**d
        else:
            axes = [base + s / (q * L) for s in shift]
            mesh = np.meshgrid(*axes, indexing="ij")
            table = params.kernel.evaluate(np.stack(mesh, axis=-1)) / L**d
        conv = np.fft.irfftn(np.fft.rfftn(table) * np.fft.rfftn(sigma.astype(float)),
                             s=(L,) * d, axes=tuple(range(d)))
        sel = tuple(slice(s, None, q) for s in shift)
        out[sel] = conv
    return out


def delta_diagnostic(
    path: PathGrid,
    disorder: DisorderField,
    params: ModelParams,
    bank: TestBank,
    fine_factor: int = 2,
) -> np.ndarray:
    """Disorder-averaging error along an empirical path, one value per color.

    Integrates |<lambda_i^gamma(alpha) - p_i lambda, G_i(s) tanh[...]>| over
    time for G_i = the leading bank entry, with the Lebesgue term evaluated
    on a ``fine_factor`` times finer grid than the lattice.  The path must
    be an uncoarsened empirical path (M = L), so sites can be recovered.
    """
    if path.M != params.L:
        raise ConfigError("diagnostic needs the empirical path at full resolution")
    G = bank.on_grid(params.L)[0]
    G_fine = bank.on_grid(fine_factor * params.L)[0]
    a = params.a_values
    p = params.probabilities
    vals = np.zeros((path.n_times, params.n_colors))
    for k in range(path.n_times):
        sigma = path.fields[k].sum(axis=0)
        cache = np.fft.irfftn(
            np.fft.rfftn(_lattice_table(params)) * np.fft.rfftn(sigma),
            s=params.shape, axes=tuple(range(params.d)),
        )
        fine = shifted_lattice_convolution(sigma, params, fine_factor)
        for i in range(params.n_colors):
            quenched = params.gamma**params.d * float(
                (disorder.indicator(i) * G * np.tanh(params.beta * (cache + a[i] * params.theta))).sum()
            )
            averaged = p[i] * float(
                (G_fine * np.tanh(params.beta * (fine + a[i] * params.theta))).mean()
            )
            vals[k, i] = abs(quenched - averaged)
    return np.trapezoid(vals, x=path.times, axis=0)


_TABLE_CACHE: dict[tuple, np.ndarray] = {}


def _lattice_table(params: ModelParams) -> np.ndarray:
    key = (params.kernel, params.L, params.d)
    if key not in _TABLE_CACHE:
        from .model import build_kernel

        _TABLE_CACHE[key] = build_kernel(params.kernel, params.L, params.d).table
    return _TABLE_CACHE[key]
