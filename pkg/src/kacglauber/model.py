"""Lattice model: parameters, interaction kernel, quenched disorder, spin state.

The system lives on the periodic lattice {0,...,L-1}^d, identified with the unit
torus through the scaling x -> x/L.  The interaction is of Kac type: a fixed
smooth even profile J on the torus with unit integral, sampled on lattice
offsets and weighted by L^{-d}.  The self-interaction entry of the lattice
table is zero; the energy cost of flipping site x is then exactly
2 sigma(x) [ (J * sigma)(x) + theta alpha(x) ] with the discrete convolution.

Each site carries a quenched color drawn iid from a finite palette; color i
has field value a_i and probability p_i.  Colors are reproducible from the
seed alone.

Profiles may take negative values (e.g. a raised cosine shifted down via
``amplitude``); only the normalization integral must be positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate as _sint
from scipy import ndimage as _sndi

from .errors import ConfigError

# Full cache refresh after this many incremental updates.
RECOMPUTE_EVERY = 1_000_000

_WRAP_TERMS = 6  # summation range for the periodized Gaussian


def _wrap_half(r: np.ndarray) -> np.ndarray:
    """Map coordinates to the fundamental domain [-1/2, 1/2)."""
    return (np.asarray(r, dtype=float) + 0.5) % 1.0 - 0.5


def _profile_gaussian(r: np.ndarray, width: float) -> np.ndarray:
    # periodized Gaussian; each summand is even in r so the table is
    # exactly symmetric once |r| is taken
    r = np.abs(_wrap_half(r))
    out = np.zeros_like(r)
    for k in range(-_WRAP_TERMS, _WRAP_TERMS + 1):
        out += np.exp(-0.5 * ((r + k) / width) ** 2)
    return out / (width * np.sqrt(2.0 * np.pi))


def _profile_raised_cosine(r: np.ndarray, width: float) -> np.ndarray:
    del width
    return 1.0 + np.cos(2.0 * np.pi * _wrap_half(r))


_BUMP_MASS: float | None = None


def _bump_mass() -> float:
    """Integral of exp(-1/(1-t^2)) over (-1, 1), computed once."""
    global _BUMP_MASS
    if _BUMP_MASS is None:
        val, _ = _sint.quad(lambda t: np.exp(-1.0 / (1.0 - t * t)), -1.0, 1.0)
        _BUMP_MASS = val
    return _BUMP_MASS


def _profile_bump(r: np.ndarray, width: float) -> np.ndarray:
    r = np.abs(_wrap_half(r))
    out = np.zeros_like(r)
    inside = r < width
    t = r[inside] / width
    out[inside] = np.exp(-1.0 / (1.0 - t * t))
    return out / (width * _bump_mass())


_PROFILES = {
    "gaussian": _profile_gaussian,
    "raised_cosine": _profile_raised_cosine,
    "bump": _profile_bump,
    "zero": None,
}


@dataclass(frozen=True)
class KernelSpec:
    """Interaction profile on the unit torus.

    Parameters
    ----------
    profile : str
        One of ``gaussian`` (periodized, std ``width``), ``raised_cosine``
        (1 + cos 2 pi r), ``bump`` (compact support of radius ``width``)
        or ``zero`` (no interaction).
    width : float
        Length scale of the profile; ignored by ``raised_cosine``/``zero``.
    amplitude : float
        Multiplies the profile before normalization.  A non-positive total
        integral is a configuration error.
    normalize : bool
        Rescale the sampled table so its full Riemann sum is exactly one.
    """

    profile: str = "gaussian"
    width: float = 0.1
    amplitude: float = 1.0
    normalize: bool = True

    def __post_init__(self):
        if self.profile not in _PROFILES:
            raise ConfigError(f"unknown kernel profile {self.profile!r}")
        if self.profile in ("gaussian", "bump") and not 0.0 < self.width <= 0.5:
            raise ConfigError("kernel width must lie in (0, 1/2]")

    def evaluate(self, r: np.ndarray) -> np.ndarray:
        """Profile value at torus points; last axis indexes the dimension."""
        r = np.asarray(r, dtype=float)
        if r.ndim == 0:
            r = r.reshape(1)
        if self.profile == "zero":
            return np.zeros(r.shape[:-1] if r.ndim > 1 else r.shape)
        fn = _PROFILES[self.profile]
        if r.ndim == 1:  # a list of 1-d coordinates
            vals = fn(r, self.width)
        else:
            vals = np.prod([fn(r[..., i], self.width) for i in range(r.shape[-1])], axis=0)
        return self.amplitude * vals


@dataclass(frozen=True)
class ModelParams:
    """Static description of one quenched ferromagnet.

    ``colors`` lists (field value a_i, probability p_i); probabilities must
    sum to one.  ``L`` is the side length, so the Kac scale is 1/L.
    """

    d: int
    L: int
    theta: float
    colors: tuple[tuple[float, float], ...]
    T: float
    beta: float = 1.0
    kernel: KernelSpec = field(default_factory=KernelSpec)

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError("dimension must be >= 1")
        if self.L < 2:
            raise ConfigError("lattice side must be >= 2")
        if self.theta < 0:
            raise ConfigError("disorder strength theta must be >= 0")
        if self.beta <= 0:
            raise ConfigError("inverse temperature must be positive")
        if self.T <= 0:
            raise ConfigError("time horizon must be positive")
        colors = tuple((float(a), float(p)) for a, p in self.colors)
        object.__setattr__(self, "colors", colors)
        if len(colors) < 2:
            raise ConfigError("need at least two colors")
        probs = np.array([p for _, p in colors])
        if np.any(probs < 0) or np.any(probs > 1):
            raise ConfigError("color probabilities must lie in [0, 1]")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ConfigError("color probabilities must sum to 1")

    @property
    def gamma(self) -> float:
        return 1.0 / self.L

    @property
    def n_colors(self) -> int:
        return len(self.colors)

    @property
    def n_sites(self) -> int:
        return self.L**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.L,) * self.d

    @property
    def a_values(self) -> np.ndarray:
        return np.array([a for a, _ in self.colors])

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.colors])


def axis_coords(n: int) -> np.ndarray:
    """Torus coordinates j/n of an n-point grid."""
    return np.arange(n) / n


def grid_mesh(n: int, d: int) -> list[np.ndarray]:
    """Meshgrid (ij indexing) of torus coordinates for an (n,)*d grid."""
    return list(np.meshgrid(*([axis_coords(n)] * d), indexing="ij"))


def _offset_coords(n: int) -> np.ndarray:
    # offset z -> wrapped coordinate z/n in [-1/2, 1/2)
    return _wrap_half(np.arange(n) / n)


def _tabulate(spec: KernelSpec, n: int, d: int) -> np.ndarray:
    ax = _offset_coords(n)
    if d == 1:
        vals = spec.evaluate(ax)
    else:
        mesh = np.meshgrid(*([ax] * d), indexing="ij")
        vals = spec.evaluate(np.stack(mesh, axis=-1))
    return vals / n**d


@dataclass(frozen=True, eq=False)
class DiscreteKernel:
    """Kernel table over periodic offsets, weighted by n^{-d}.

    ``table[z] = n^{-d} J(z/n)`` with the origin entry zeroed when
    ``lattice`` is true (self-interaction drops out of the energy).  The
    zeroed value is kept in ``origin_value`` so Riemann sums can be checked
    against the continuum normalization.
    """

    table: np.ndarray
    origin_value: float
    n: int
    d: int

    @property
    def shape(self) -> tuple[int, ...]:
        return self.table.shape

    @cached_property
    def _hat(self) -> np.ndarray:
        return np.fft.rfftn(self.table)

    @cached_property
    def abs_sum(self) -> float:
        """n^{-d} sum |J| over the table (bound for |J * f| / ||f||_inf)."""
        return float(np.abs(self.table).sum())

    def convolve(self, f: np.ndarray) -> np.ndarray:
        """Circular convolution sum_z table[z] f(x - z)."""
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise ConfigError("field shape does not match kernel table")
        axes = tuple(range(self.d))
        out = np.fft.irfftn(self._hat * np.fft.rfftn(f), s=self.shape, axes=axes)
        return out

    def row(self, site: tuple[int, ...]) -> np.ndarray:
        """Table centered at ``site``: row[y] = table[y - site]."""
        return np.roll(self.table, shift=site, axis=tuple(range(self.d)))


def build_kernel(spec: KernelSpec, n: int, d: int, lattice: bool = True) -> DiscreteKernel:
    """Sample a profile on an (n,)*d offset grid.

    With ``normalize`` the table is rescaled so the full Riemann sum equals
    one exactly; a non-positive sum is a configuration error.  Lattice
    kernels then drop the origin entry, mesh kernels (``lattice=False``)
    keep it.
    """
    table = _tabulate(spec, n, d)
    if spec.profile == "zero":
        return DiscreteKernel(table=table, origin_value=0.0, n=n, d=d)
    if spec.normalize:
        total = table.sum()
        if total <= 0:
            raise ConfigError("kernel profile has non-positive integral; cannot normalize")
        table = table / total
    origin = (0,) * d
    origin_value = float(table[origin])
    if lattice:
        table = table.copy()
        table[origin] = 0.0
    table.setflags(write=False)
    return DiscreteKernel(table=table, origin_value=origin_value, n=n, d=d)


def convolve_bruteforce(kernel: DiscreteKernel, f: np.ndarray) -> np.ndarray:
    """O(n^{2d}) reference convolution by explicit offset sum."""
    out = np.zeros_like(np.asarray(f, dtype=float))
    it = np.ndindex(*kernel.shape)
    for z in it:
        w = kernel.table[z]
        if w != 0.0:
            out += w * np.roll(f, shift=z, axis=tuple(range(kernel.d)))
    return out


@dataclass(frozen=True)
class DisorderField:
    """Quenched iid colors on the lattice, reproducible from the seed."""

    color: np.ndarray
    seed: int
    n_colors: int

    def indicator(self, i: int) -> np.ndarray:
        return (self.color == i).astype(float)

    @cached_property
    def indicators(self) -> np.ndarray:
        """Stacked indicator fields, shape (n_colors,) + lattice shape."""
        return np.stack([self.indicator(i) for i in range(self.n_colors)])

    def fraction(self, i: int) -> float:
        return float(np.mean(self.color == i))


def sample_disorder(params: ModelParams, seed: int) -> DisorderField:
    """Draw iid colors; deterministic for a given (params, seed)."""
    rng = np.random.default_rng(seed)
    color = rng.choice(params.n_colors, size=params.shape, p=params.probabilities)
    color = color.astype(np.int8)
    color.setflags(write=False)
    return DisorderField(color=color, seed=seed, n_colors=params.n_colors)


class SpinConfig:
    """Spin field with an incrementally maintained convolution cache.

    ``field`` always holds (J * sigma) with the lattice kernel.  Flips
    update it in O(n^d) vectorized work; a full refresh runs every
    RECOMPUTE_EVERY flips to stop drift.
    """

    def __init__(self, sigma: np.ndarray, kernel: DiscreteKernel):
        sigma = np.asarray(sigma)
        if sigma.shape != kernel.shape:
            raise ConfigError("spin shape does not match kernel table")
        if not np.all(np.abs(sigma) == 1):
            raise ConfigError("spins must be +-1")
        self.sigma = sigma.astype(np.int8)
        self.kernel = kernel
        self.field = kernel.convolve(self.sigma)
        self._flips = 0

    def flip(self, site: tuple[int, ...]) -> None:
        s = int(self.sigma[site])
        self.sigma[site] = -s
        self.field -= (2.0 * s) * self.kernel.row(site)
        self._flips += 1
        if self._flips % RECOMPUTE_EVERY == 0:
            self.refresh()

    def refresh(self) -> None:
        self.field = self.kernel.convolve(self.sigma)

    def copy(self) -> "SpinConfig":
        out = SpinConfig.__new__(SpinConfig)
        out.sigma = self.sigma.copy()
        out.kernel = self.kernel
        out.field = self.field.copy()
        out._flips = self._flips
        return out


def sample_spins(params: ModelParams, m0, rng: np.random.Generator) -> np.ndarray:
    """Independent signs with site means m0 (scalar or lattice field)."""
    m0 = np.broadcast_to(np.asarray(m0, dtype=float), params.shape)
    if np.any(np.abs(m0) > 1):
        raise ConfigError("initial magnetization profile must lie in [-1, 1]")
    u = rng.random(params.shape)
    return np.where(u < (1.0 + m0) / 2.0, 1, -1).astype(np.int8)


def block_average(f: np.ndarray, l: int) -> np.ndarray:
    """Mean over the periodic sup-norm box of radius l around each site."""
    if l < 0:
        raise ConfigError("block radius must be >= 0")
    if l == 0:
        return np.asarray(f, dtype=float).copy()
    return _sndi.uniform_filter(np.asarray(f, dtype=float), size=2 * l + 1, mode="wrap")


def ergodic_defect(disorder: DisorderField, params: ModelParams, l: int, delta: float) -> np.ndarray:
    """Volume fraction where the block-averaged color indicator misses p_i by > delta.

    Returns one value per color: gamma^d #{x : |avg - p_i| > delta}.
    """
    out = np.empty(params.n_colors)
    for i in range(params.n_colors):
        avg = block_average(disorder.indicator(i), l)
        out[i] = params.gamma**params.d * np.count_nonzero(
            np.abs(avg - params.probabilities[i]) > delta
        )
    return out
