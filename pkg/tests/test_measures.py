import numpy as np
import pytest

from kacglauber.errors import ConfigError
from kacglauber.grids import PathGrid, constant_potential, resample_periodic, time_derivative
from kacglauber.measures import (
    TestBank,
    coarsen,
    delta_diagnostic,
    empirical,
    in_neighborhood,
    pair,
    path_distance,
    rho,
    shifted_lattice_convolution,
)
from kacglauber.model import ModelParams, KernelSpec, sample_disorder, sample_spins

from conftest import two_color


# ---------------------------------------------------------------------------
# pairings


def test_pair_is_riemann_sum():
    M = 8
    dens = np.arange(M, dtype=float)
    test = np.ones(M)
    assert pair(dens, test, 1) == pytest.approx(dens.mean())


def test_pair_oscillation_kills_constant():
    M = 64
    r = np.arange(M) / M
    dens = np.ones(M)
    assert abs(pair(dens, np.cos(2 * np.pi * r), 1)) < 1e-14


def test_empirical_measure_values(rng):
    params = two_color(L=16)
    dis = sample_disorder(params, 4)
    sigma = sample_spins(params, 0.0, rng)
    emp = empirical(sigma, dis, params.d)
    # cell values are sigma * indicator on the matching site
    for i in range(2):
        assert np.array_equal(emp.density[i], sigma * dis.indicator(i))
    # pairing against 1 gives the colored space mean
    assert pair(emp.density[0], np.ones(16), 1) == pytest.approx(
        (sigma * dis.indicator(0)).mean()
    )


def test_coarsen_block_means():
    f = np.arange(8, dtype=float)
    out = coarsen(f, 1, 4)
    assert np.array_equal(out, [0.5, 2.5, 4.5, 6.5])
    with pytest.raises(ConfigError):
        coarsen(f, 1, 3)


def test_coarsen_2d():
    f = np.arange(16, dtype=float).reshape(4, 4)
    out = coarsen(f, 2, 2)
    assert out.shape == (2, 2)
    assert out[0, 0] == pytest.approx(np.mean([0, 1, 4, 5]))


def test_coarsen_preserves_pairing_against_constants(rng):
    f = rng.standard_normal(32)
    assert pair(coarsen(f, 1, 8), np.ones(8), 1) == pytest.approx(pair(f, np.ones(32), 1))


# ---------------------------------------------------------------------------
# test bank


def test_bank_first_entry_is_constant():
    bank = TestBank(1, 4)
    H = bank.on_grid(16)
    assert np.array_equal(H[0], np.ones(16))


def test_bank_sup_norm_bounded():
    for d in (1, 2):
        bank = TestBank(d, 8)
        H = bank.on_grid(8)
        assert np.max(np.abs(H)) <= 1.0 + 1e-12


def test_bank_weights_geometric():
    bank = TestBank(1, 5)
    assert np.allclose(bank.weights(), [0.5, 0.25, 0.125, 0.0625, 0.03125])


def test_bank_entries_distinct_under_pairing(rng):
    # bank entries are L2-orthogonal trigonometric modes
    bank = TestBank(1, 6)
    H = bank.on_grid(64)
    G = H.reshape(6, -1)
    gram = G @ G.T / 64
    off = gram - np.diag(np.diag(gram))
    assert np.max(np.abs(off)) < 1e-12


def test_bank_resolution_consistency():
    # mode k sampled on coarse and fine grids pairs identically against
    # a band-limited density
    bank = TestBank(1, 4)
    H32, H64 = bank.on_grid(32), bank.on_grid(64)
    r32, r64 = np.arange(32) / 32, np.arange(64) / 64
    dens32, dens64 = np.cos(2 * np.pi * r32), np.cos(2 * np.pi * r64)
    for k in range(4):
        assert pair(dens32, H32[k], 1) == pytest.approx(pair(dens64, H64[k], 1), abs=1e-12)


# ---------------------------------------------------------------------------
# the metric


def test_rho_zero_on_equal(rng):
    bank = TestBank(1, 8)
    x = rng.standard_normal((2, 16))
    assert rho(x, x, 1, bank) == 0.0


def test_rho_symmetry_triangle(rng):
    bank = TestBank(1, 8)
    x, y, z = rng.standard_normal((3, 2, 16))
    dxy = rho(x, y, 1, bank)
    assert dxy == pytest.approx(rho(y, x, 1, bank))
    assert dxy <= rho(x, z, 1, bank) + rho(z, y, 1, bank) + 1e-14


def test_rho_bounded_by_total_variation(rng):
    # |<f, H>| <= mean|f| since sup|H| <= 1; weights sum < 1
    bank = TestBank(1, 16)
    x = rng.standard_normal((2, 32))
    y = rng.standard_normal((2, 32))
    tv = np.abs(x - y).mean(axis=-1).sum()
    assert rho(x, y, 1, bank) <= tv + 1e-12


def test_rho_across_resolutions():
    # same continuum density sampled at two resolutions is metrically close
    bank = TestBank(1, 8)
    r32, r128 = np.arange(32) / 32, np.arange(128) / 128
    x = np.stack([0.3 + 0.2 * np.sin(2 * np.pi * r32), np.zeros(32)])
    y = np.stack([0.3 + 0.2 * np.sin(2 * np.pi * r128), np.zeros(128)])
    assert rho(x, y, 1, bank) < 1e-12


def test_path_distance_and_neighborhood():
    bank = TestBank(1, 8)
    times = np.linspace(0, 1, 5)
    a = np.zeros((5, 2, 16))
    b = np.zeros((5, 2, 16))
    b[3, 0] += 0.5  # constant-mode bump at one time
    pa = PathGrid(times=times, fields=a, colors=((1.0, 0.5), (-1.0, 0.5)))
    pb = PathGrid(times=times, fields=b, colors=((1.0, 0.5), (-1.0, 0.5)))
    dist = path_distance(pa, pb, bank)
    assert dist == pytest.approx(0.5 * 0.5)  # weight 2^-1 times pairing gap
    assert in_neighborhood(pa, pb, 0.3, bank)
    assert not in_neighborhood(pa, pb, 0.2, bank)


def test_path_distance_needs_shared_times():
    bank = TestBank(1, 4)
    pa = PathGrid(times=np.linspace(0, 1, 5), fields=np.zeros((5, 2, 8)),
                  colors=((1.0, 0.5), (-1.0, 0.5)))
    pb = PathGrid(times=np.linspace(0, 1, 9), fields=np.zeros((9, 2, 8)),
                  colors=((1.0, 0.5), (-1.0, 0.5)))
    with pytest.raises(ConfigError):
        path_distance(pa, pb, bank)


# ---------------------------------------------------------------------------
# grids


def test_pathgrid_interpolation():
    times = np.array([0.0, 1.0])
    fields = np.zeros((2, 1, 4))
    fields[1] = 1.0
    path = PathGrid(times=times, fields=fields, colors=((1.0, 1.0), (-1.0, 0.0))[:1])
    assert np.allclose(path.at(0.25), 0.25)
    assert np.allclose(path.at(-1.0), 0.0)  # clamped
    assert np.allclose(path.at(2.0), 1.0)


def test_pathgrid_box_margin():
    fields = np.zeros((2, 2, 4))
    fields[:, 0] = 0.4
    path = PathGrid(times=np.array([0.0, 1.0]), fields=fields,
                    colors=((1.0, 0.5), (-1.0, 0.5)))
    assert path.box_margin() == pytest.approx(0.1)


def test_time_derivative_linear_exact():
    times = np.linspace(0, 1, 11)
    fields = np.tile(times[:, None, None], (1, 1, 4)) * 3.0
    path = PathGrid(times=times, fields=fields, colors=((1.0, 1.0),))
    dt = time_derivative(path)
    assert np.allclose(dt, 3.0, atol=1e-12)


def test_time_derivative_quadratic_edges():
    # edge_order=2 differences are exact on quadratics
    times = np.linspace(0, 1, 11)
    vals = times**2
    fields = np.tile(vals[:, None, None], (1, 1, 4))
    path = PathGrid(times=times, fields=fields, colors=((1.0, 1.0),))
    dt = time_derivative(path)
    assert np.allclose(dt[:, 0, 0], 2 * times, atol=1e-12)


def test_resample_periodic_linear_and_trig():
    r16 = np.arange(16) / 16
    f = np.cos(2 * np.pi * r16)
    up = resample_periodic(f, 1, 64, method="trig")
    r64 = np.arange(64) / 64
    assert np.max(np.abs(up - np.cos(2 * np.pi * r64))) < 1e-12
    lin = resample_periodic(f, 1, 64, method="linear")
    assert np.max(np.abs(lin - np.cos(2 * np.pi * r64))) < 0.02


def test_constant_potential_shape():
    V = constant_potential([0.3, -0.2], 1, 8)
    assert V.fields.shape == (1, 2, 8)
    assert V.is_constant
    assert np.allclose(V.at(0.7)[1], -0.2)
    assert np.allclose(V.dt_at(0.7), 0.0)


# ---------------------------------------------------------------------------
# disorder-averaging diagnostic


def test_delta_diagnostic_small_for_degenerate_disorder(rng):
    # with one color of probability 1 the quenched and averaged fields agree
    # up to the lattice-vs-mesh quadrature gap
    params = ModelParams(d=1, L=64, theta=1.0, colors=((1.0, 1.0), (-1.0, 0.0)),
                         T=0.2, kernel=KernelSpec("gaussian", 0.25))
    dis = sample_disorder(params, 0)
    sigma = sample_spins(params, 0.0, rng)
    times = np.linspace(0, 0.2, 3)
    dens = np.stack([np.stack([sigma * dis.indicator(i) for i in range(2)])] * 3)
    path = PathGrid(times=times, fields=dens, colors=params.colors)
    bank = TestBank(1, 4)
    res = delta_diagnostic(path, dis, params, bank)
    assert res.shape == (2,)
    assert res.max() < 5e-3


def test_delta_diagnostic_detects_disorder_mismatch(rng):
    # genuine two-color disorder at small L leaves an O(gamma^{1/2}) residual
    params = two_color(L=32, T=0.2)
    dis = sample_disorder(params, 5)
    sigma = sample_spins(params, 0.0, rng)
    times = np.linspace(0, 0.2, 3)
    dens = np.stack([np.stack([sigma * dis.indicator(i) for i in range(2)])] * 3)
    path = PathGrid(times=times, fields=dens, colors=params.colors)
    bank = TestBank(1, 4)
    values = delta_diagnostic(path, dis, params, bank)
    assert np.all(values >= 0.0)


def test_shifted_lattice_convolution_matches_plain(rng):
    # fine_factor=1 reduces to the ordinary lattice convolution
    params = two_color(L=32)
    sigma = sample_spins(params, 0.0, rng).astype(float)
    from kacglauber.model import build_kernel

    kern = build_kernel(params.kernel, 32, 1)
    fine = shifted_lattice_convolution(sigma, params, 1)
    # the fine-grid field keeps the self term the lattice energy drops
    expected = kern.convolve(sigma) + kern.origin_value * sigma
    assert np.max(np.abs(fine - expected)) < 1e-12
