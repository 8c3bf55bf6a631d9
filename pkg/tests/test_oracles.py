import math

import mpmath
import numpy as np
import pytest
import scipy.special
from hypothesis import given, strategies as st

from porepinn.bc import dirichlet, neumann
from porepinn.net import ConfigError
from porepinn.oracles.analytic import (Analytic2DParams, RootFindingError, Series1DParams, analytic_1d_approx,
                                       analytic_1d_series, analytic_2d, transcendental_roots)
from porepinn.oracles.fdm import NumericalInstability, SolverError, darcy_on_grid, fdm_pressure, fdm_transport
from porepinn.oracles.grid import GridField, mse, pointwise_error, read_csv, write_csv
from porepinn.oracles.special import erfc, erfcx, exp_erfc
from porepinn.physics import Analytic, Homogeneous

mpmath.mp.dps = 40

# frozen from a 40-digit mpmath evaluation
ERFC_HALF = 0.47950012218695346


def mp_erfc(x):
    return float(mpmath.erfc(mpmath.mpf(float(x))))


# -- special functions --------------------------------------------------------


def test_erfc_frozen_value():
    assert erfc(0.5) == pytest.approx(ERFC_HALF, abs=1e-16)


def test_erfc_against_high_precision_reference():
    xs = np.concatenate([np.linspace(-6, 27, 3301), [-1.999999, 1.999999, 2.0, 2.000001]])
    ref = np.array([mp_erfc(x) for x in xs])
    assert np.abs(erfc(xs) - ref).max() < 1e-12


def test_erfcx_relative_accuracy():
    xs = np.concatenate([np.linspace(-5, 5, 501), np.logspace(0.5, 6, 60)])
    ref = np.array([float(mpmath.exp(mpmath.mpf(x) ** 2) * mpmath.erfc(mpmath.mpf(x))) for x in xs])
    assert np.abs(erfcx(xs) / ref - 1).max() < 1e-12


def test_erfcx_large_argument_asymptote():
    x = 1e8
    assert erfcx(x) == pytest.approx(1 / (x * math.sqrt(math.pi)), rel=1e-12)


@given(st.floats(-30, 30), st.floats(-700, 700))
def test_exp_erfc_matches_scipy_where_representable(z, a):
    ref = math.exp(a) * scipy.special.erfc(z) if abs(a) < 700 else None
    got = exp_erfc(a, z)
    assert np.isfinite(got)
    if ref is not None and np.isfinite(ref) and ref > 1e-300:
        assert got == pytest.approx(ref, rel=1e-11)


def test_exp_erfc_no_overflow():
    # exp(800) overflows but exp(800) * erfc(30) does not
    got = exp_erfc(800.0, 30.0)
    ref = float(mpmath.exp(800) * mpmath.erfc(30))
    assert got == pytest.approx(ref, rel=1e-12)


def test_scalar_in_scalar_out():
    assert np.ndim(erfc(0.3)) == 0 and np.ndim(erfcx(0.3)) == 0


# -- transcendental roots and the 1D solutions -------------------------------------


def test_roots_lie_in_their_intervals():
    h = 12.5
    beta = transcendental_roots(h, 200)
    i = np.arange(1, 201)
    assert np.all(beta > (i - 1) * np.pi) and np.all(beta < i * np.pi)
    assert np.abs(beta / np.tan(beta) + h).max() < 1e-10 * beta.max()


@given(st.floats(0.01, 500))
def test_root_residual_property(h):
    beta = transcendental_roots(h, 30)
    assert np.all(np.abs(beta / np.tan(beta) + h) < 1e-10 * np.maximum(1, beta))


def test_roots_need_positive_h():
    with pytest.raises(ValueError):
        transcendental_roots(0.0, 5)


def test_series_parameter_validation():
    with pytest.raises(ConfigError):
        Series1DParams(L=0, u_x=0.5, D_x=0.02)
    with pytest.raises(ConfigError):
        Series1DParams(L=1, u_x=0.5, D_x=0.02, n_terms=0)


P1 = Series1DParams(1.0, 0.5, 0.02)


def test_series_and_approximation_agree():
    X, T = np.meshgrid(np.linspace(0, 1, 41), np.linspace(0.1, 10, 41))
    assert np.abs(analytic_1d_series(X, T, P1) - analytic_1d_approx(X, T, P1)).max() < 1e-4


def test_one_d_boundary_and_limits():
    t = np.linspace(0.1, 10, 7)
    assert np.allclose(analytic_1d_approx(0.0, t, P1), 1.0, atol=1e-12)
    assert analytic_1d_approx(1.0, 0.1, P1) < 1e-40
    assert analytic_1d_series(0.5, 50.0, P1) == pytest.approx(1.0, abs=1e-12)
    # zero gradient at the outlet
    h = 1e-5
    g = (analytic_1d_series(1.0, 3.0, P1) - analytic_1d_series(1.0 - h, 3.0, P1)) / h
    assert abs(g) < 1e-3


def test_approximation_reduces_to_leading_erfc_far_from_outlet():
    # with a long column the outlet terms vanish
    p = Series1DParams(50.0, 0.5, 0.02)
    x, t = 0.4, 1.0
    lead = 0.5 * erfc((x - 0.5 * t) / (2 * math.sqrt(0.02 * t))) + 0.5 * exp_erfc(0.5 * x / 0.02, (x + 0.5 * t) / (2 * math.sqrt(0.02 * t)))
    assert analytic_1d_approx(x, t, p) == pytest.approx(lead, abs=1e-14)


# -- 2D strip -----------------------------------------------------------------------


STRIP = Analytic2DParams(W=1.0, y1=0.3, y2=0.7, u_x=0.5, D_x=0.02, D_y=0.02, C0=0.2)


def test_strip_parameter_validation():
    with pytest.raises(ConfigError):
        Analytic2DParams(W=1.0, y1=0.7, y2=0.3, u_x=0.5, D_x=0.02, D_y=0.02)


def test_line_source_reduces_to_one_d():
    p = Analytic2DParams(W=1.0, y1=0.0, y2=1.0, u_x=0.5, D_x=0.02, D_y=0.02)
    long = Series1DParams(50.0, 0.5, 0.02)
    x, y = np.meshgrid(np.linspace(0.01, 1, 30), np.linspace(0, 1, 7))
    t = 0.75
    assert np.abs(analytic_2d(x, y, t, p) - analytic_1d_approx(x, t, long)).max() < 1e-6


def test_strip_symmetric_about_injection_centre():
    x, y = np.meshgrid(np.linspace(0, 1, 21), np.linspace(0, 1, 21))
    c = analytic_2d(x, y, 1.0, STRIP)
    assert np.abs(c - c[::-1]).max() < 1e-12


def test_strip_boundary_values_and_wall_gradient():
    y = np.linspace(0, 1, 11)
    inj = analytic_2d(np.zeros_like(y), y, 0.5, STRIP)
    assert np.array_equal(inj, np.where((y >= 0.3 - 1e-12) & (y <= 0.7 + 1e-12), 0.2, 0.0))
    h = 1e-6
    g = (analytic_2d(0.3, h, 1.0, STRIP) - analytic_2d(0.3, 0.0, 1.0, STRIP)) / h
    assert abs(g) < 1e-4


def test_strip_pure_dispersion_is_finite_and_bounded():
    p = Analytic2DParams(W=1.0, y1=0.3, y2=0.7, u_x=0.0, D_x=0.02, D_y=0.02, C0=0.2)
    x, y = np.meshgrid(np.linspace(0, 1, 11), np.linspace(0, 1, 11))
    c = analytic_2d(x, y, 1.0, p)
    assert np.all(np.isfinite(c)) and c.min() >= -1e-12 and c.max() <= 0.2 + 1e-12


# -- grid fields -------------------------------------------------------------------


def test_grid_csv_roundtrip_bit_exact(tmp_path):
    vals = np.random.default_rng(0).standard_normal((4, 5)) * 1e-7
    g = GridField(vals, (0.0, 0.1, 1.0, 2.0), 0.75)
    write_csv(g, tmp_path / "g.csv")
    back = read_csv(tmp_path / "g.csv")
    assert back.values.tobytes() == g.values.tobytes()
    assert back.extent == g.extent and back.time == 0.75
    assert (tmp_path / "g.csv").read_text().splitlines()[0] == "5,4,0.0,0.1,1.0,2.0,0.75"


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=6, max_size=6))
def test_grid_csv_roundtrip_property(tmp_path_factory, values):
    g = GridField(np.array(values).reshape(2, 3), (0.0, 0.0, 1.0, 1.0), 1.0)
    path = tmp_path_factory.mktemp("csv") / "g.csv"
    write_csv(g, path)
    assert read_csv(path).values.tobytes() == g.values.tobytes()


def test_grid_invariants_and_metrics():
    with pytest.raises(ValueError):
        GridField(np.zeros((2, 2)), (0.0, 0.0, 0.0, 1.0))
    a = GridField(np.zeros((2, 3)), (0, 0, 1, 1))
    b = a.with_values([[1, -1, 0], [0, 0, 2]])
    assert mse(a, b) == pytest.approx(1.0)
    assert np.array_equal(pointwise_error(a, b).values, [[1, 1, 0], [0, 0, 2]])
    with pytest.raises(ValueError):
        mse(a, GridField(np.zeros((3, 3)), (0, 0, 1, 1)))


def test_grid_restrict_picks_subset_nodes():
    g = GridField(np.arange(25.0).reshape(5, 5), (0, 0, 1, 1))
    r = g.restrict(3, 3)
    assert np.array_equal(r.values, [[0, 2, 4], [10, 12, 14], [20, 22, 24]])
    with pytest.raises(ValueError):
        g.restrict(4, 4)


# -- finite differences --------------------------------------------------------------

P_BC = {"x0": dirichlet(0.1), "x1": dirichlet(0.1), "y0": dirichlet(1.0), "y1": dirichlet(1.0)}


def test_pressure_linear_field_exact():
    bc = {"x0": dirichlet(1.0), "x1": dirichlet(0.0), "y0": lambda s: 1 - s, "y1": lambda s: 1 - s}
    P = fdm_pressure(Homogeneous(1.0), bc, 21, 11)
    X, _ = P.mesh()
    assert np.abs(P.values - (1 - X)).max() < 1e-9


def test_pressure_layered_coefficient_exact():
    # zeta piecewise in x: flux continuity gives a piecewise-linear profile, exact with harmonic faces
    nx = 21
    z = np.ones((5, nx))
    z[:, 11:] = 4.0
    bc = {"x0": dirichlet(1.0), "x1": dirichlet(0.0)}
    xs = np.linspace(0, 1, nx)
    # series resistances: 10.5 faces at zeta=1 ... compute expected from the discrete flux
    r = np.array([1 / (2 * a * b / (a + b)) for a, b in zip(z[0, :-1], z[0, 1:])])
    drop = np.concatenate([[0], np.cumsum(r)]) / r.sum()
    bc["y0"] = lambda s: np.interp(s, xs, 1 - drop)
    bc["y1"] = bc["y0"]
    P = fdm_pressure(z, bc, nx, 5)
    assert np.abs(P.values - (1 - drop)[None, :]).max() < 1e-9


def test_pressure_symmetry_and_centre_value():
    P, info = fdm_pressure(Homogeneous(1e-3), P_BC, 101, 101, mu_phi=1e-3, return_info=True)
    v = P.values
    assert np.abs(v - v[::-1]).max() < 1e-8 and np.abs(v - v[:, ::-1]).max() < 1e-8
    # transposing swaps the face values, so P + P^T solves the problem with 1.1 on every face
    inner = (slice(1, -1), slice(1, -1))
    assert np.abs((v + v.T)[inner] - 1.1).max() < 1e-8
    assert v[50, 50] == pytest.approx(0.55, abs=1e-6)
    assert info["iterations"] > 0


def test_pressure_heterogeneous_needs_more_iterations():
    _, hom = fdm_pressure(Homogeneous(1e-3), P_BC, 101, 101, mu_phi=1e-3, return_info=True)
    _, het = fdm_pressure(Analytic("gaussian_lobes", (1e-3, 100.0)), P_BC, 101, 101, mu_phi=1e-3,
                          return_info=True)
    assert het["iterations"] > hom["iterations"]


def test_pressure_errors():
    with pytest.raises(ValueError):
        fdm_pressure(Homogeneous(1.0), {"x0": dirichlet(1.0)}, 11, 11)
    with pytest.raises(ValueError):
        fdm_pressure(Homogeneous(1.0), {**P_BC, "x0": neumann()}, 11, 11)
    with pytest.raises(SolverError):
        fdm_pressure(Homogeneous(1.0), P_BC, 101, 101, tol=1e-30)


def test_darcy_on_grid_uniform_gradient():
    P = GridField(np.tile(1 - np.linspace(0, 1, 11), (6, 1)), (0, 0, 1, 1))
    ux, uy = darcy_on_grid(P, np.full((6, 11), 2.0))
    assert np.allclose(ux, 2.0) and np.allclose(uy, 0.0)


C_BC = {"x0": dirichlet(0.2, (0.3, 0.7)), "x1": neumann(), "y0": neumann(), "y1": neumann()}


def _strip_reference(n, u):
    p = Analytic2DParams(W=1.0, y1=0.3, y2=0.7, u_x=u, D_x=0.02, D_y=0.02, C0=0.2)
    xs = np.linspace(0, 1, n)
    X, Y = np.meshgrid(xs, xs)
    return analytic_2d(X, Y, 1.0, p)


@pytest.mark.parametrize("u", [0.0, 0.5])
def test_transport_matches_strip_solution(u):
    res = fdm_transport((u, 0.0), 0.02, 0.02, C_BC, nx=101, ny=101, t_end=1.0)
    assert np.mean((res.final.values - _strip_reference(101, u)) ** 2) <= 1e-5


def test_transport_refinement_reduces_error():
    errs = []
    for n in (21, 41, 81):  # injection edges fall on nodes
        res = fdm_transport((0.5, 0.0), 0.02, 0.02, C_BC, nx=n, ny=n, t_end=1.0)
        errs.append(math.sqrt(np.mean((res.final.values - _strip_reference(n, 0.5)) ** 2)))
    assert errs[0] / errs[1] >= 1.5 and errs[1] / errs[2] >= 1.5


def test_transport_snapshots_and_mass_conservation():
    # closed box: all faces zero gradient, mass stays put
    bc = {f: neumann() for f in ("x0", "x1", "y0", "y1")}
    X, Y = np.meshgrid(np.linspace(0, 1, 41), np.linspace(0, 1, 41))
    ic = np.exp(-((X - 0.5) ** 2 + (Y - 0.5) ** 2) / 0.02)
    res = fdm_transport((0.0, 0.0), 0.01, 0.01, bc, ic=ic, nx=41, ny=41, t_end=0.5,
                        snapshots=(0.25,), track_mass=True)
    assert set(res.snapshots) == {0.25, 0.5}
    assert res.snapshots[0.25].time == 0.25
    mass = np.array(res.mass)
    assert np.abs(mass - mass[0]).max() < 1e-3 * mass[0]
    assert res.final.values.max() < ic.max()


def test_transport_detects_instability():
    with pytest.raises(NumericalInstability):
        # a negative diffusion coefficient makes explicit stepping blow up
        fdm_transport((0.0, 0.0), -0.02, 0.02, C_BC, nx=21, ny=21, t_end=1.0)


def test_transport_rejects_bad_cfl():
    with pytest.raises(ValueError):
        fdm_transport((0.5, 0.0), 0.02, 0.02, C_BC, nx=11, ny=11, cfl=1.5)
