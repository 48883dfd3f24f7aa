"""Path-cost functionals for colored profiles.

The central object is the pointwise Hamiltonian: for one color with mass
bound p, local field combination A = beta((J*u)(r) + a theta), occupation
u and drift g, the dissipation of a constant tilt v is

    B(u, v) = (p-u) e^{A}/(2 cosh A) (e^{2v} - 1)
            + (p+u) e^{-A}/(2 cosh A) (e^{-2v} - 1),

and the Hamiltonian is the Legendre-type supremum

    H(u, g) = sup_v { g v - B(u, v) / 2 }.

The supremum is available in closed form.  Interior (|u| < p):

    R = sqrt( (g cosh A)^2 + p^2 - u^2 ),   D = g cosh A + R,
    H = (g/2) ( log( D / (p-u) ) - A ) + p/2 - (u/2) tanh A - R/(2 cosh A),

attained at v* = ( log( D / (p-u) ) - A ) / 2.  On the boundary u = +-p the
drift must push inward (g <= 0 at +p, g >= 0 at -p), where with s = sgn(u)

    H = 1_{g != 0} (|g|/2) ( log( |g| cosh A / (p e^{-sA}) ) - 1 )
      + p e^{-sA} / (2 cosh A);

outward drift or |u| > p cost +infinity.  A bounded golden-section search
of the defining supremum serves as an independent oracle for all of this.

Path costs integrate the Hamiltonian over time and the torus (trapezoid in
time, flat node sum in space).  Infinite node costs make the path cost
infinite; reports keep the full pointwise breakdown.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .grids import PathGrid, PotentialGrid, space_mean, time_derivative
from .meanfield import initial_profile, mesh_convolve, mesh_kernel
from .model import DiscreteKernel, ModelParams

BOUNDARY_TOL = 1e-12
V_SEARCH_HALFWIDTH = 30.0


@dataclass(frozen=True)
class PointwiseState:
    """One space-time point: per-color occupations and drifts.

    ``field`` is the interaction value (J*u)(r) supplied by the caller; the
    Hamiltonian never recomputes convolutions.
    """

    u: np.ndarray
    g: np.ndarray
    field: float
    colors: tuple[tuple[float, float], ...]
    theta: float
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "u", np.atleast_1d(np.asarray(self.u, dtype=float)))
        object.__setattr__(self, "g", np.atleast_1d(np.asarray(self.g, dtype=float)))
        if self.u.shape != self.g.shape or self.u.size != len(self.colors):
            raise ConfigError("state needs one (u_i, g_i) pair per color")

    @property
    def a_values(self) -> np.ndarray:
        return np.array([a for a, _ in self.colors])

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.colors])

    @property
    def A(self) -> np.ndarray:
        return self.beta * (self.field + self.a_values * self.theta)


def dissipation(u, v, A, p):
    """B(u, v): expected jump dissipation of a constant tilt v.  All
    arguments broadcast."""
    u, v, A, p = np.broadcast_arrays(u, v, A, p)
    up = np.exp(A) / (2.0 * np.cosh(A))
    dn = np.exp(-A) / (2.0 * np.cosh(A))
    return (p - u) * up * np.expm1(2.0 * v) + (p + u) * dn * np.expm1(-2.0 * v)


def _stable_D(g, coshA, p, u):
    """D = g cosh A + R without cancellation for g << 0."""
    gc = g * coshA
    R = np.sqrt(gc * gc + p * p - u * u)
    with np.errstate(divide="ignore", invalid="ignore"):
        neg = (p * p - u * u) / (R - gc)
    return np.where(g >= 0, gc + R, neg), R


def hamiltonian_closed(u, g, A, p, boundary_tol: float = BOUNDARY_TOL):
    """Closed-form H(u, g) per color; +inf outside the box or for outward
    boundary drift.  All arguments broadcast; returns an array (or scalar)
    with np.inf marking infinite cost."""
    u, g, A, p = np.broadcast_arrays(
        np.asarray(u, dtype=float),
        np.asarray(g, dtype=float),
        np.asarray(A, dtype=float),
        np.asarray(p, dtype=float),
    )
    coshA = np.cosh(A)
    out = np.full(u.shape, np.inf)

    outside = np.abs(u) > p + boundary_tol
    boundary = (~outside) & (p - np.abs(u) <= boundary_tol)
    interior = (~outside) & (~boundary)

    if np.any(interior):
        ui, gi, Ai, pi_, ci = (x[interior] for x in (u, g, A, p, coshA))
        D, R = _stable_D(gi, ci, pi_, ui)
        with np.errstate(divide="ignore"):
            val = (
                0.5 * gi * (np.log(D / (pi_ - ui)) - Ai)
                + 0.5 * pi_
                - 0.5 * ui * np.tanh(Ai)
                - R / (2.0 * ci)
            )
        out[interior] = val

    if np.any(boundary):
        ub, gb, Ab, pb, cb = (x[boundary] for x in (u, g, A, p, coshA))
        s = np.sign(ub)
        s[s == 0] = 1.0  # p = 0 collapses the box to u = 0
        compatible = (gb * s <= 0) & (pb > 0)
        val = np.full(ub.shape, np.inf)
        base = pb * np.exp(-s * Ab) / (2.0 * cb)
        gmag = np.abs(gb)
        with np.errstate(divide="ignore", invalid="ignore"):
            moving = 0.5 * gmag * (np.log(gmag * cb / (pb * np.exp(-s * Ab))) - 1.0)
        val[compatible] = np.where(gmag[compatible] > 0, moving[compatible], 0.0) + base[compatible]
        # a zero-mass color only admits u = g = 0, at zero cost
        degenerate = (pb == 0) & (gb == 0)
        val[degenerate] = 0.0
        out[boundary] = val

    return out if out.shape else float(out)


def optimal_tilt(u, g, A, p):
    """Maximizer v* of g v - B(u, v)/2 in the interior |u| < p."""
    u, g, A, p = np.broadcast_arrays(
        np.asarray(u, dtype=float),
        np.asarray(g, dtype=float),
        np.asarray(A, dtype=float),
        np.asarray(p, dtype=float),
    )
    D, _ = _stable_D(g, np.cosh(A), p, u)
    return 0.5 * (np.log(D / (p - u)) - A)


def state_hamiltonian(state: PointwiseState) -> np.ndarray:
    return hamiltonian_closed(state.u, state.g, state.A, state.probabilities)


def state_optimal_tilt(state: PointwiseState) -> np.ndarray:
    return optimal_tilt(state.u, state.g, state.A, state.probabilities)


def hamiltonian_numeric(
    u: float,
    g: float,
    A: float,
    p: float,
    halfwidth: float = V_SEARCH_HALFWIDTH,
    tol: float = 1e-10,
) -> float:
    """Golden-section evaluation of sup_v { g v - B(u, v)/2 }.

    Scans [-halfwidth, halfwidth]; when the objective at an edge beats the
    interior and is still climbing there, the supremum is infinite and
    math.inf comes back.  Kept free of the closed form so the two can be
    checked against each other.
    """

    def phi(v: float) -> float:
        return g * v - 0.5 * float(dissipation(u, v, A, p))

    lo, hi = -halfwidth, halfwidth
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d_ = a + invphi * (b - a)
    fc, fd = phi(c), phi(d_)
    while b - a > tol:
        if fc > fd:
            b, d_, fd = d_, c, fc
            c = b - invphi * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d_, fd
            d_ = a + invphi * (b - a)
            fd = phi(d_)
    v_star = 0.5 * (a + b)
    best = phi(v_star)
    eps = 1e-6
    for edge, inner in ((hi, hi - eps), (lo, lo + eps)):
        fe, fi = phi(edge), phi(inner)
        if fe >= best and fe > fi:
            # Still climbing at the bracket edge: either a true divergence
            # or an asymptote approached from below.  Doubling the bracket
            # settles it; a saturating objective moves by O(e^{-2|v|}),
            # a divergent one by at least |g| * halfwidth.
            far = phi(2.0 * edge)
            if far - fe > 1e-8:
                return math.inf
            return far
    return best


def tilt_derivative(u, v, A, p, g):
    """d/dv of g v - B(u, v)/2; zero at the optimizer."""
    up = np.exp(A) / (2.0 * np.cosh(A))
    dn = np.exp(-A) / (2.0 * np.cosh(A))
    return g - (p - u) * up * np.exp(2.0 * v) + (p + u) * dn * np.exp(-2.0 * v)


# ---------------------------------------------------------------------------
# exponential tilt compensator


def tilt_compensator(
    mu_density: np.ndarray,
    pi_density: np.ndarray,
    V_values: np.ndarray,
    conv: np.ndarray,
    params: ModelParams,
    d: int | None = None,
) -> float:
    """F_V(mu, pi): the compensator density integrated over the torus.

    ``mu_density`` and ``pi_density`` hold per-color cell densities on a
    common grid, ``V_values`` the control fields there, and ``conv`` the
    interaction field (pi * J) on the same grid.
    """
    d = params.d if d is None else d
    a = params.a_values.reshape((-1,) + (1,) * d)
    t = np.tanh(params.beta * (conv[None] + a * params.theta))
    s2 = np.sinh(2.0 * V_values)
    c2m1 = 2.0 * np.sinh(V_values) ** 2  # cosh(2V) - 1, no cancellation
    density = mu_density * (t * s2 + c2m1) - pi_density * (t * c2m1 + s2)
    return float(space_mean(density, d).sum())


def profile_compensator(
    u_fields: np.ndarray,
    V_values: np.ndarray,
    params: ModelParams,
    kernel: DiscreteKernel,
) -> float:
    """Gamma_V(u): the compensator at disorder-averaged colored profiles."""
    conv = mesh_convolve(kernel, u_fields.sum(axis=0))
    p = params.probabilities.reshape((-1,) + (1,) * params.d)
    mu = np.broadcast_to(p, u_fields.shape)
    return tilt_compensator(mu, u_fields, V_values, conv, params)


def control_cost(
    path: PathGrid,
    V: PotentialGrid,
    params: ModelParams,
    kernel: DiscreteKernel | None = None,
) -> float:
    """K_V along a colored path: int <V, dphi/dt> - 1/2 int Gamma_V(phi).

    Trapezoid rule on the path's time grid, flat node sums in space.
    """
    kern = kernel if kernel is not None else mesh_kernel(params, path.M)
    if V.M != path.M:
        V = V.resample_space(path.M)
    dphi = time_derivative(path)
    vals = np.empty(path.n_times)
    for k, t in enumerate(path.times):
        Vk = V.at(t)
        pairing = float(space_mean(Vk * dphi[k], path.d).sum())
        gamma_k = profile_compensator(path.fields[k], Vk, params, kern)
        vals[k] = pairing - 0.5 * gamma_k
    return float(np.trapezoid(vals, x=path.times))


# ---------------------------------------------------------------------------
# path cost


@dataclass
class CostReport:
    """Cost of one colored path with its pointwise breakdown.

    ``value`` is math.inf when any node is infinite (``infinite`` is the
    explicit tag; never test the float alone).  ``node_costs`` has shape
    (n_times, n_colors) + mesh.
    """

    value: float
    infinite: bool
    node_costs: np.ndarray
    times: np.ndarray
    reason: str | None = None

    @property
    def d(self) -> int:
        return self.node_costs.ndim - 2

    def per_time(self) -> np.ndarray:
        """Space-integrated cost density at each time node, colors summed."""
        return space_mean(self.node_costs, self.d).sum(axis=1)

    def per_color(self) -> np.ndarray:
        """Time-integrated cost per color."""
        dens = space_mean(self.node_costs, self.d)
        return np.trapezoid(dens, x=self.times, axis=0)

    def per_cell(self) -> np.ndarray:
        """Time-integrated, color-summed cost per mesh cell (times 1/M^d)."""
        dens = np.trapezoid(self.node_costs.sum(axis=1), x=self.times, axis=0)
        return dens / self.node_costs.shape[-1] ** self.d


def path_nodes_hamiltonian(
    path: PathGrid, params: ModelParams, kernel: DiscreteKernel | None = None
) -> np.ndarray:
    """Pointwise Hamiltonian on every (time, color, cell) node of a path."""
    kern = kernel if kernel is not None else mesh_kernel(params, path.M)
    g = time_derivative(path)
    a = params.a_values.reshape((-1,) + (1,) * path.d)
    p = params.probabilities.reshape((-1,) + (1,) * path.d)
    out = np.empty_like(path.fields)
    for k in range(path.n_times):
        conv = mesh_convolve(kern, path.fields[k].sum(axis=0))
        A = params.beta * (conv[None] + a * params.theta)
        out[k] = hamiltonian_closed(path.fields[k], g[k], A, p)
    return out


def path_cost(
    path: PathGrid,
    params: ModelParams,
    m0=None,
    kernel: DiscreteKernel | None = None,
    initial_tol: float = 1e-6,
) -> CostReport:
    """Accumulated Hamiltonian cost of a colored path.

    With ``m0`` given, enforces the quenched initial condition
    phi_i(0) = p_i m0 within ``initial_tol`` in the sup norm; a mismatch
    makes the cost infinite without evaluating the integrand.
    """
    if m0 is not None:
        want = initial_profile(params, m0, path.M)
        gap = float(np.abs(path.fields[0] - want).max())
        if gap > initial_tol:
            return CostReport(
                value=math.inf,
                infinite=True,
                node_costs=np.full_like(path.fields, np.inf),
                times=path.times.copy(),
                reason=f"initial profile off by {gap:.3e} in sup norm",
            )
    node = path_nodes_hamiltonian(path, params, kernel)
    if np.isinf(node).any():
        return CostReport(
            value=math.inf,
            infinite=True,
            node_costs=node,
            times=path.times.copy(),
            reason="infinite node cost",
        )
    dens = space_mean(node, path.d).sum(axis=1)
    total = float(np.trapezoid(dens, x=path.times))
    return CostReport(value=total, infinite=False, node_costs=node, times=path.times.copy())


# ---------------------------------------------------------------------------
# growth bounds


def growth_envelopes(u, g, p, K: float, C: float) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper growth envelopes for the per-color Hamiltonian.

    Upper: (|g|/2) [ (log|g|)^+ + 1_{g>0} (log 1/(p-u))^+
                     + 1_{g<0} (log 1/(p+u))^+ + K ] + C, colors summed by
    the caller.  Lower: (|g|/2) [ log|g| - K ] - C with x log x -> 0.
    """
    u, g, p = np.broadcast_arrays(
        np.asarray(u, dtype=float), np.asarray(g, dtype=float), np.asarray(p, dtype=float)
    )
    gmag = np.abs(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        loggap_up = np.where(g > 0, -np.log(np.maximum(p - u, 1e-300)), 0.0)
        loggap_dn = np.where(g < 0, -np.log(np.maximum(p + u, 1e-300)), 0.0)
        xlogx = np.where(gmag > 0, gmag * np.log(gmag), 0.0)
    upper = 0.5 * (
        gmag * np.maximum(np.log(np.maximum(gmag, 1e-300)), 0.0)
        + gmag * np.maximum(loggap_up, 0.0)
        + gmag * np.maximum(loggap_dn, 0.0)
        + gmag * K
    ) + C
    lower = 0.5 * (xlogx - gmag * K) - C
    return lower, upper


@dataclass(frozen=True)
class GrowthCheck:
    ok: bool
    worst_upper_margin: float
    worst_lower_margin: float
    n_samples: int


def check_growth_bounds(u, g, A, p, K: float, C: float) -> GrowthCheck:
    """Verify the growth envelopes against the closed form, per color.

    Margins are (envelope - H) for the upper and (H - envelope) for the
    lower bound; both must come out nonnegative for ``ok``.
    """
    H = hamiltonian_closed(u, g, A, p)
    lower, upper = growth_envelopes(u, g, p, K, C)
    um = float((upper - H).min())
    lm = float((H - lower).min())
    return GrowthCheck(ok=(um >= 0.0 and lm >= 0.0), worst_upper_margin=um,
                       worst_lower_margin=lm, n_samples=int(np.asarray(H).size))


def growth_bounds_check(samples: dict[str, np.ndarray], K: float, C: float) -> GrowthCheck:
    """check_growth_bounds on a batch from sample_interior_states."""
    return check_growth_bounds(samples["u"], samples["g"], samples["A"], samples["p"], K, C)


def sample_interior_states(
    n: int,
    rng: np.random.Generator,
    margin: float = 1e-3,
    g_max: float = 5.0,
    theta_max: float = 2.0,
    field_max: float = 1.5,
) -> dict[str, np.ndarray]:
    """Random strict-interior pointwise data for oracle comparisons.

    Returns per-sample arrays u, g, A, p covering |u| <= p - margin,
    |g| <= g_max, |theta| <= theta_max, |field| <= field_max, a in [-1, 1],
    at beta = 1.
    """
    p = rng.uniform(0.15, 0.85, size=n)
    u = rng.uniform(-1.0, 1.0, size=n) * (p - margin)
    g = rng.uniform(-g_max, g_max, size=n)
    field = rng.uniform(-field_max, field_max, size=n)
    a = rng.uniform(-1.0, 1.0, size=n)
    theta = rng.uniform(-theta_max, theta_max, size=n)
    A = field + a * theta
    return {"u": u, "g": g, "A": A, "p": p}


# ---------------------------------------------------------------------------
# energy functional and contraction


def _linear_part(path: PathGrid, G: PotentialGrid) -> float:
    """l_T(pi, G): boundary pairings minus the time-derivative pairing."""
    d = path.d
    GT = G.at(path.times[-1])
    G0 = G.at(path.times[0])
    if GT.shape[-1] != path.M:
        raise ConfigError("test field grid must match the path grid")
    ends = float(space_mean(path.fields[-1] * GT, d).sum()) - float(
        space_mean(path.fields[0] * G0, d).sum()
    )
    mid = np.array(
        [float(space_mean(path.fields[k] * G.dt_at(t), d).sum()) for k, t in enumerate(path.times)]
    )
    return ends - float(np.trapezoid(mid, x=path.times))


def energy_functional(
    path: PathGrid,
    G: PotentialGrid,
    params: ModelParams,
    kernel: DiscreteKernel | None = None,
) -> float:
    """Quadratic energy of a colored path against one bank entry G.

    l_T + l~_T - 2 sum_i int { <p_i lambda, G_i^2>
                               - <pi_i, G_i^2 tanh[...]> } ds.
    Nonpositive on mesoscopic solutions; diverges along sharpening banks
    when the path fails the weak formulation.
    """
    kern = kernel if kernel is not None else mesh_kernel(params, path.M)
    if G.M != path.M:
        G = G.resample_space(path.M)
    d = path.d
    a = params.a_values.reshape((-1,) + (1,) * d)
    p = params.probabilities.reshape((-1,) + (1,) * d)
    lin = _linear_part(path, G)
    weak = np.empty(path.n_times)
    quad = np.empty(path.n_times)
    for k, t in enumerate(path.times):
        Gk = G.at(t)
        conv = mesh_convolve(kern, path.fields[k].sum(axis=0))
        tanh_i = np.tanh(params.beta * (conv[None] + a * params.theta))
        weak[k] = float(space_mean(path.fields[k] * Gk, d).sum()) - float(
            space_mean(p * Gk * tanh_i, d).sum()
        )
        quad[k] = float(space_mean(p * Gk**2, d).sum()) - float(
            space_mean(path.fields[k] * Gk**2 * tanh_i, d).sum()
        )
    lin_tilde = float(np.trapezoid(weak, x=path.times))
    return lin + lin_tilde - 2.0 * float(np.trapezoid(quad, x=path.times))


def energy_sup(path: PathGrid, bank: list[PotentialGrid], params: ModelParams) -> float:
    """Max of the energy functional over a finite bank of test fields."""
    kern = mesh_kernel(params, path.M)
    return max(energy_functional(path, G, params, kern) for G in bank)


def contraction_infimum(
    pi_values: np.ndarray,
    times: np.ndarray,
    params: ModelParams,
    max_sweeps: int = 60,
    tol: float = 1e-10,
) -> tuple[float, PathGrid]:
    """Infimum of the colored cost over decompositions of an uncolored path.

    ``pi_values`` has shape (n_times,) + mesh and fixes the color sum, so
    the interaction field is frozen and mesh cells decouple; each cell is a
    convex problem in its split trajectory.  Starts from the proportional
    split and runs projected coordinate descent over time nodes with
    bounded line searches.  Two colors only.
    """
    from scipy.optimize import minimize_scalar

    if params.n_colors != 2:
        raise ConfigError("contraction descent handles exactly two colors")
    pi_values = np.asarray(pi_values, dtype=float)
    n_times = pi_values.shape[0]
    if n_times < 3:
        raise ConfigError("need at least three time slices")
    d = params.d
    M = pi_values.shape[-1]
    kern = mesh_kernel(params, M)
    a = params.a_values
    (p1, p2) = params.probabilities
    dt = float(times[1] - times[0])
    # interaction field per node, from the frozen color sum
    A = np.empty((n_times, 2) + pi_values.shape[1:])
    for k in range(n_times):
        conv = mesh_convolve(kern, pi_values[k])
        for i in range(2):
            A[k, i] = params.beta * (conv + a[i] * params.theta)

    flat_pi = pi_values.reshape(n_times, -1)
    flat_A = A.reshape(n_times, 2, -1)
    n_cells = flat_pi.shape[1]
    w = np.full(n_times, dt)
    w[0] = w[-1] = dt / 2.0  # trapezoid weights

    def deriv(vec: np.ndarray) -> np.ndarray:
        return np.gradient(vec, dt, edge_order=2)

    def cell_cost(s: np.ndarray, c: int) -> float:
        pi_c = flat_pi[:, c]
        ds = deriv(s)
        dpi = deriv(pi_c)
        h1 = hamiltonian_closed(s, ds, flat_A[:, 0, c], p1)
        h2 = hamiltonian_closed(pi_c - s, dpi - ds, flat_A[:, 1, c], p2)
        tot = (w * (h1 + h2)).sum()
        return float(tot)

    total = 0.0
    split = np.empty_like(flat_pi)
    for c in range(n_cells):
        pi_c = flat_pi[:, c]
        lo = np.maximum(-p1, pi_c - p2)
        hi = np.minimum(p1, pi_c + p2)
        span = hi - lo
        s = np.clip(p1 * pi_c, lo + 1e-12 * span, hi - 1e-12 * span)
        best = cell_cost(s, c)
        for _ in range(max_sweeps):
            improved = 0.0
            for k in range(n_times):
                cur = s[k]

                def local(x: float, k=k) -> float:
                    s[k] = x
                    return cell_cost(s, c)

                if hi[k] - lo[k] < 1e-12:
                    continue
                res = minimize_scalar(
                    local, bounds=(lo[k] + 1e-12, hi[k] - 1e-12), method="bounded",
                    options={"xatol": 1e-12},
                )
                if res.fun < best:
                    improved += best - res.fun
                    best = res.fun
                    s[k] = res.x
                else:
                    s[k] = cur
            if improved < tol:
                break
        split[:, c] = s
        total += best / n_cells
    fields = np.stack(
        [split.reshape((n_times,) + pi_values.shape[1:]),
         pi_values - split.reshape((n_times,) + pi_values.shape[1:])],
        axis=1,
    )
    return total, PathGrid(times=np.asarray(times, dtype=float), fields=fields, colors=tuple(params.colors))
