"""Event-driven kinetic Monte Carlo for the quenched spin system.

Single spin flips with rate 1/(1 + exp(beta DeltaH)), where the energy
cost of flipping x is DeltaH = 2 sigma(x) [ (J * sigma)(x) + theta alpha(x) ]
with the lattice kernel (self-interaction zero).  A colored control field
V tilts the rates to exp(-2 sigma(x) V_i(t, x/L)) c_x.

Sampling runs by thinning a homogeneous candidate stream: candidates
arrive at rate cbar L^d with cbar = exp(2 ||V||_inf) (cbar = 1 untilted),
land on a uniform site and are accepted with probability c / cbar.  This
is exact: rates never exceed the bound.

Records store block-averaged colored profiles on a uniform snapshot grid,
the initial spins, and the full event log (times and sites), which at the
scales this package targets is small; likelihood ratios and martingale
functionals are then recovered by exact piecewise replay rather than
snapshot quadrature.  Replica streams come from spawned seed sequences, so
results are deterministic per (master seed, replica index) regardless of
how replicas are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError
from .grids import PathGrid, PotentialGrid
from .measures import coarsen, pair
from .model import (
    DiscreteKernel,
    DisorderField,
    ModelParams,
    SpinConfig,
    build_kernel,
    sample_spins,
)

# 4-point Gauss-Legendre nodes/weights on [0, 1]
_GL_X = np.array(
    [0.5 - 0.43056815579702629, 0.5 - 0.16999052179242813,
     0.5 + 0.16999052179242813, 0.5 + 0.43056815579702629]
)
_GL_W = np.array(
    [0.17392742256872693, 0.32607257743127307, 0.32607257743127307, 0.17392742256872693]
)


def lattice_kernel(params: ModelParams) -> DiscreteKernel:
    return build_kernel(params.kernel, params.L, params.d)


def flip_energy(spin: SpinConfig, site: tuple[int, ...], disorder: DisorderField, params: ModelParams) -> float:
    """Energy cost of flipping ``site``: 2 sigma (field + theta alpha)."""
    a = params.a_values[disorder.color[site]]
    return 2.0 * float(spin.sigma[site]) * (float(spin.field[site]) + params.theta * a)


def flip_rate(spin: SpinConfig, site: tuple[int, ...], disorder: DisorderField, params: ModelParams) -> float:
    """Heat-bath rate 1 / (1 + exp(beta DeltaH))."""
    return float(expit(-params.beta * flip_energy(spin, site, disorder, params)))


def perturbed_rate(
    spin: SpinConfig,
    site: tuple[int, ...],
    disorder: DisorderField,
    params: ModelParams,
    V_now: np.ndarray,
) -> float:
    """Tilted rate exp(-2 sigma V_color) times the heat-bath rate.

    ``V_now`` holds per-color lattice fields at the current time.
    """
    i = int(disorder.color[site])
    v = float(V_now[(i,) + site])
    return float(np.exp(-2.0 * float(spin.sigma[site]) * v)) * flip_rate(spin, site, disorder, params)


def _site_potential(V_now: np.ndarray, disorder: DisorderField) -> np.ndarray:
    """Collapse per-color fields onto sites through the color map."""
    out = np.zeros(disorder.color.shape)
    for i in range(V_now.shape[0]):
        out += (disorder.color == i) * V_now[i]
    return out


def all_rates(spin: SpinConfig, a_site: np.ndarray, params: ModelParams) -> np.ndarray:
    """Untilted rates at every site, vectorized."""
    h = spin.field + params.theta * a_site
    return expit(-2.0 * params.beta * spin.sigma * h)


@dataclass
class TrajectoryRecord:
    """One realized trajectory with everything needed to replay it."""

    path: PathGrid
    sigma0: np.ndarray
    event_times: np.ndarray
    event_sites: np.ndarray  # flat indices into the lattice
    seed_key: tuple
    n_events: int
    log_weight_jumps: float = 0.0
    log_weight_comp: float = 0.0
    raw_spins: np.ndarray | None = None

    @property
    def log_weight(self) -> float:
        """Eventwise Girsanov log-weight: jump sum minus compensator."""
        return self.log_weight_jumps - self.log_weight_comp


def replica_rng(master_seed: int, replica: int) -> np.random.Generator:
    """Independent, reproducible stream for one replica index."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(replica,)))


def _prepare_potential(V: PotentialGrid | None, params: ModelParams) -> PotentialGrid | None:
    if V is None:
        return None
    V_lat = V.resample_space(params.L) if V.M != params.L else V
    return V_lat


def _comp_pieces(t0: float, t1: float, V: PotentialGrid) -> list[tuple[float, float]]:
    """Split [t0, t1] at the knots of the potential's time grid."""
    if V.is_constant or t1 <= t0:
        return [(t0, t1)]
    knots = V.times[(V.times > t0) & (V.times < t1)]
    pts = np.concatenate(([t0], knots, [t1]))
    return [(float(a), float(b)) for a, b in zip(pts[:-1], pts[1:])]


class _TiltState:
    """Per-interval tilt bookkeeping shared by the simulator and replays."""

    def __init__(self, params: ModelParams, disorder: DisorderField, V: PotentialGrid):
        self.params = params
        self.disorder = disorder
        self.V = V
        self._cache_t: float | None = None
        self._site_V: np.ndarray | None = None

    def site_potential(self, t: float) -> np.ndarray:
        if self._cache_t is None or t != self._cache_t:
            self._site_V = _site_potential(self.V.at(t), self.disorder)
            self._cache_t = t
        return self._site_V

    def compensator(self, t0: float, t1: float, spin: SpinConfig, a_site: np.ndarray) -> float:
        """int_{t0}^{t1} sum_x ( c^V_x - c_x ) ds for frozen spins."""
        if t1 <= t0:
            return 0.0
        rates = all_rates(spin, a_site, self.params)
        total = 0.0
        sig = spin.sigma.astype(float)
        if self.V.is_constant:
            sv = self.site_potential(self.V.times[0])
            val = float((rates * np.expm1(-2.0 * sig * sv)).sum())
            return val * (t1 - t0)
        for a, b in _comp_pieces(t0, t1, self.V):
            h = b - a
            for x, w in zip(_GL_X, _GL_W):
                sv = _site_potential(self.V.at(a + x * h), self.disorder)
                total += w * h * float((rates * np.expm1(-2.0 * sig * sv)).sum())
        return total


def simulate(
    params: ModelParams,
    disorder: DisorderField,
    m0=0.0,
    V: PotentialGrid | None = None,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
    seed_key: tuple = (),
    dt_rec: float = 1e-2,
    M: int | None = None,
    T: float | None = None,
    record_raw: bool = False,
    sigma0: np.ndarray | None = None,
    kernel: DiscreteKernel | None = None,
) -> TrajectoryRecord:
    """Run one trajectory of the (possibly tilted) spin dynamics.

    Parameters
    ----------
    m0 : scalar or lattice field
        Initial magnetization profile; spins start as independent signs
        with these means (ignored when ``sigma0`` is given).
    V : PotentialGrid, optional
        Colored control field; activates the tilted rates and the
        likelihood-ratio accumulators.
    seed / rng : exactly one must be given.
    dt_rec : float
        Snapshot spacing; must divide the horizon.
    M : int
        Snapshot resolution (divides L, default L).

    Returns a TrajectoryRecord; ``path`` holds colored block-averaged
    profiles at the snapshot times.
    """
    if (seed is None) == (rng is None):
        raise ConfigError("pass exactly one of seed or rng")
    if rng is None:
        rng = np.random.default_rng(seed)
        seed_key = seed_key or (seed,)
    T = params.T if T is None else T
    M = params.L if M is None else M
    kern = kernel if kernel is not None else lattice_kernel(params)
    V_lat = _prepare_potential(V, params)
    cbar = float(np.exp(2.0 * V_lat.sup_norm())) if V_lat is not None else 1.0
    tilt = _TiltState(params, disorder, V_lat) if V_lat is not None else None

    n_rec = int(round(T / dt_rec))
    if abs(n_rec * dt_rec - T) > 1e-9:
        raise ConfigError("snapshot interval must divide the horizon")

    if sigma0 is None:
        sigma0 = sample_spins(params, m0, rng)
    spin = SpinConfig(sigma0, kern)
    sigma0 = spin.sigma.copy()
    a_site = params.a_values[disorder.color]

    n_sites = params.n_sites
    total_rate = cbar * n_sites
    shape = params.shape

    snapshots = np.empty((n_rec + 1, params.n_colors) + (M,) * params.d)
    raw = np.empty((n_rec + 1,) + shape, dtype=np.int8) if record_raw else None

    def snap(k: int) -> None:
        site_dens = disorder.indicators * spin.sigma
        snapshots[k] = coarsen(site_dens, params.d, M)
        if raw is not None:
            raw[k] = spin.sigma

    snap(0)
    next_rec = 1
    t = 0.0
    interval_start = 0.0
    jumps_acc = 0.0
    comp_acc = 0.0
    ev_times: list[float] = []
    ev_sites: list[int] = []

    while True:
        dt = rng.exponential(1.0 / total_rate)
        t_next = t + dt
        end = min(t_next, T)
        while next_rec <= n_rec and next_rec * dt_rec < end:
            snap(next_rec)
            next_rec += 1
        if t_next >= T:
            if tilt is not None:
                comp_acc += tilt.compensator(interval_start, T, spin, a_site)
            break
        flat = int(rng.integers(n_sites))
        site = np.unravel_index(flat, shape)
        h = float(spin.field[site]) + params.theta * float(a_site[site])
        s = float(spin.sigma[site])
        c = float(expit(-2.0 * params.beta * s * h))
        if tilt is not None:
            v_here = float(tilt.site_potential(t_next)[site]) if not V_lat.is_constant else float(
                tilt.site_potential(V_lat.times[0])[site]
            )
            c *= float(np.exp(-2.0 * s * v_here))
        if rng.random() * cbar < c:
            if tilt is not None:
                comp_acc += tilt.compensator(interval_start, t_next, spin, a_site)
                interval_start = t_next
                jumps_acc += -2.0 * s * v_here
            spin.flip(site)
            ev_times.append(t_next)
            ev_sites.append(flat)
        t = t_next

    while next_rec <= n_rec:
        snap(next_rec)
        next_rec += 1

    times = dt_rec * np.arange(n_rec + 1)
    path = PathGrid(times=times, fields=snapshots, colors=tuple(params.colors))
    return TrajectoryRecord(
        path=path,
        sigma0=sigma0,
        event_times=np.array(ev_times),
        event_sites=np.array(ev_sites, dtype=np.int64),
        seed_key=tuple(seed_key),
        n_events=len(ev_times),
        log_weight_jumps=jumps_acc,
        log_weight_comp=comp_acc,
        raw_spins=raw,
    )


def replay(
    record: TrajectoryRecord,
    params: ModelParams,
    disorder: DisorderField,
    interval_fn,
    jump_fn=None,
    kernel: DiscreteKernel | None = None,
    T: float | None = None,
) -> None:
    """Walk a stored trajectory, calling back on every constant piece.

    ``interval_fn(t0, t1, spin)`` sees each maximal interval on which the
    spins are frozen; ``jump_fn(t, site, spin)`` fires just before each
    flip is applied.
    """
    kern = kernel if kernel is not None else lattice_kernel(params)
    spin = SpinConfig(record.sigma0, kern)
    T = float(record.path.times[-1]) if T is None else T
    t = 0.0
    for te, flat in zip(record.event_times, record.event_sites):
        te = float(te)
        if te > T:
            break
        site = np.unravel_index(int(flat), params.shape)
        if te > t:
            interval_fn(t, te, spin)
        if jump_fn is not None:
            jump_fn(te, site, spin)
        spin.flip(site)
        t = te
    if T > t:
        interval_fn(t, T, spin)


def rn_log_weight(
    record: TrajectoryRecord,
    params: ModelParams,
    disorder: DisorderField,
    V: PotentialGrid,
    kernel: DiscreteKernel | None = None,
) -> tuple[float, float]:
    """Girsanov log dP^V/dP along a stored trajectory, two ways.

    Returns ``(eventwise, closedform)``.  The eventwise route sums the
    log rate ratios at the jumps and subtracts the integrated rate
    difference; the closed-form route assembles the same number from the
    pairing of the empirical measures with V and the integrated tilt
    compensator.  Both integrate exactly over the constant-spin pieces
    (4-point Gauss per potential knot when V depends on time), so they
    agree to quadrature accuracy; the record need not have been generated
    under V.
    """
    kern = kernel if kernel is not None else lattice_kernel(params)
    V_lat = _prepare_potential(V, params)
    tilt = _TiltState(params, disorder, V_lat)
    a_site = params.a_values[disorder.color]
    gamma_d = params.gamma**params.d
    state = {"jumps": 0.0, "comp": 0.0, "F_int": 0.0, "dtV": 0.0}
    indicators = disorder.indicators

    def F_now(t: float, spin: SpinConfig) -> float:
        from .cost import tilt_compensator

        pi_dens = indicators * spin.sigma
        return tilt_compensator(indicators, pi_dens, V_lat.at(t), spin.field, params)

    def interval(t0: float, t1: float, spin: SpinConfig) -> None:
        state["comp"] += tilt.compensator(t0, t1, spin, a_site)
        if V_lat.is_constant:
            state["F_int"] += F_now(0.0, spin) * (t1 - t0)
            return
        for a, b in _comp_pieces(t0, t1, V_lat):
            h = b - a
            for x, w in zip(_GL_X, _GL_W):
                tm = a + x * h
                state["F_int"] += w * h * F_now(tm, spin)
                dtV = V_lat.dt_at(tm)
                pi_dens = indicators * spin.sigma
                state["dtV"] += w * h * float(pair(pi_dens, dtV, params.d).sum())

    def jump(t: float, site, spin: SpinConfig) -> None:
        sv = _site_potential(V_lat.at(t), disorder)
        state["jumps"] += -2.0 * float(spin.sigma[site]) * float(sv[site])

    replay(record, params, disorder, interval, jump, kern)

    # boundary pairings of the empirical measure with V;
    # sigma_T comes cheaply from the event log
    sigT = record.sigma0.copy()
    for flat in record.event_sites:
        site = np.unravel_index(int(flat), params.shape)
        sigT[site] = -sigT[site]
    T = float(record.path.times[-1])
    pi_T = indicators * sigT
    pi_0 = indicators * record.sigma0
    ell = float(pair(pi_T, V_lat.at(T), params.d).sum()) - float(
        pair(pi_0, V_lat.at(0.0), params.d).sum()
    ) - state["dtV"]
    closed = (ell - 0.5 * state["F_int"]) / gamma_d
    eventwise = state["jumps"] - state["comp"]
    return eventwise, closed


@dataclass(frozen=True)
class MartingaleReport:
    """Monte Carlo summary of the density-field martingale at time T."""

    values: np.ndarray
    quadratic_variations: np.ndarray
    mean: float
    variance: float
    mean_qv: float

    @property
    def ratio(self) -> float:
        return self.variance / self.mean_qv


def martingale_functional(
    record: TrajectoryRecord,
    params: ModelParams,
    disorder: DisorderField,
    G: PotentialGrid,
    kernel: DiscreteKernel | None = None,
) -> tuple[float, float]:
    """(N(T), <N, N>(T)) for one trajectory and one colored test field."""
    kern = kernel if kernel is not None else lattice_kernel(params)
    G_lat = _prepare_potential(G, params)
    a = params.a_values
    gamma_d = params.gamma**params.d
    indicators = disorder.indicators
    acc = {"drift": 0.0, "dtG": 0.0, "qv": 0.0}

    def terms(t: float, spin: SpinConfig) -> tuple[float, float, float]:
        Gt = G_lat.at(t)
        pi_dens = indicators * spin.sigma
        pair_G = float(pair(pi_dens, Gt, params.d).sum())
        drift = pair_G
        qv_sum = 0.0
        for i in range(params.n_colors):
            th = np.tanh(params.beta * (spin.field + a[i] * params.theta))
            drift -= gamma_d * float((indicators[i] * Gt[i] * th).sum())
            qv_sum += float((indicators[i] * Gt[i] ** 2 * (-1.0 + spin.sigma * th)).sum())
        return drift, qv_sum, pair_G

    def interval(t0: float, t1: float, spin: SpinConfig) -> None:
        if G_lat.is_constant:
            drift, qv_sum, _ = terms(t0, spin)
            acc["drift"] += drift * (t1 - t0)
            acc["qv"] += -2.0 * gamma_d**2 * qv_sum * (t1 - t0)
            return
        for a_, b_ in _comp_pieces(t0, t1, G_lat):
            h = b_ - a_
            for x, w in zip(_GL_X, _GL_W):
                tm = a_ + x * h
                drift, qv_sum, _ = terms(tm, spin)
                acc["drift"] += w * h * drift
                acc["qv"] += -2.0 * gamma_d**2 * w * h * qv_sum
                pi_dens = indicators * spin.sigma
                acc["dtG"] += w * h * float(pair(pi_dens, G_lat.dt_at(tm), params.d).sum())

    replay(record, params, disorder, interval, kernel=kern)

    sigT = record.sigma0.copy()
    for flat in record.event_sites:
        site = np.unravel_index(int(flat), params.shape)
        sigT[site] = -sigT[site]
    T = float(record.path.times[-1])
    ell = (
        float(pair(indicators * sigT, G_lat.at(T), params.d).sum())
        - float(pair(indicators * record.sigma0, G_lat.at(0.0), params.d).sum())
        - acc["dtG"]
    )
    N = ell + acc["drift"]
    return N, acc["qv"]


def martingale_diagnostic(
    params: ModelParams,
    G: PotentialGrid,
    n_replicas: int,
    master_seed: int,
    m0=0.0,
    dt_rec: float = 1e-1,
    fresh_disorder: bool = True,
    disorder: DisorderField | None = None,
) -> MartingaleReport:
    """Replica statistics of the density-field martingale.

    Checks that the empirical mean vanishes and the empirical variance
    matches the mean quadratic variation; variances scale like gamma^d.
    """
    kern = lattice_kernel(params)
    if disorder is None:
        disorder = sample_disorder_det(params, master_seed)
    vals = np.empty(n_replicas)
    qvs = np.empty(n_replicas)
    for r in range(n_replicas):
        rng = replica_rng(master_seed, r)
        dis = disorder
        if fresh_disorder:
            from .model import sample_disorder

            dis = sample_disorder(params, int(rng.integers(2**31)))
        rec = simulate(
            params, dis, m0=m0, rng=rng, seed_key=(master_seed, r), dt_rec=dt_rec, kernel=kern
        )
        vals[r], qvs[r] = martingale_functional(rec, params, dis, G, kern)
    return MartingaleReport(
        values=vals,
        quadratic_variations=qvs,
        mean=float(vals.mean()),
        variance=float(vals.var(ddof=1)),
        mean_qv=float(qvs.mean()),
    )


def sample_disorder_det(params: ModelParams, master_seed: int) -> DisorderField:
    from .model import sample_disorder

    return sample_disorder(params, master_seed)


@dataclass(frozen=True)
class ReplacementReport:
    """Disorder-replacement error along one trajectory, with the empirical
    pieces entering its a priori bound."""

    error: float
    delta: float
    block_radius: int
    defects: np.ndarray
    tilt_constant: float
    bound_main: float


def disorder_replacement_error(
    record: TrajectoryRecord,
    params: ModelParams,
    disorder: DisorderField,
    V: PotentialGrid,
    block_radius: int,
    delta: float,
    kernel: DiscreteKernel | None = None,
) -> ReplacementReport:
    """|int F(quenched colors) - F(averaged colors) dt| along a trajectory."""
    from .cost import tilt_compensator
    from .model import ergodic_defect

    kern = kernel if kernel is not None else lattice_kernel(params)
    V_lat = _prepare_potential(V, params)
    indicators = disorder.indicators
    p = params.probabilities.reshape((-1,) + (1,) * params.d)
    p_fields = np.broadcast_to(p, indicators.shape)
    acc = {"diff": 0.0}

    def both(t: float, spin: SpinConfig) -> float:
        pi_dens = indicators * spin.sigma
        Vt = V_lat.at(t)
        fq = tilt_compensator(indicators, pi_dens, Vt, spin.field, params)
        fa = tilt_compensator(p_fields, pi_dens, Vt, spin.field, params)
        return fq - fa

    def interval(t0: float, t1: float, spin: SpinConfig) -> None:
        if V_lat.is_constant:
            acc["diff"] += both(0.0, spin) * (t1 - t0)
            return
        for a_, b_ in _comp_pieces(t0, t1, V_lat):
            h = b_ - a_
            for x, w in zip(_GL_X, _GL_W):
                acc["diff"] += w * h * both(a_ + x * h, spin)

    replay(record, params, disorder, interval, kernel=kern)
    defects = ergodic_defect(disorder, params, block_radius, delta)
    sup_each = np.abs(V_lat.fields).max(axis=tuple(range(2, V_lat.fields.ndim))).max(axis=0)
    C = float((np.sinh(sup_each) ** 2 + np.abs(np.sinh(2.0 * sup_each))).sum())
    T = float(record.path.times[-1])
    return ReplacementReport(
        error=abs(acc["diff"]),
        delta=delta,
        block_radius=block_radius,
        defects=defects,
        tilt_constant=C,
        bound_main=T * C * (delta + float(defects.sum())),
    )
