import json
import math
from pathlib import Path

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracsde import specfun
from fracsde.errors import DomainError, QuadratureError
from fracsde.paths import make_grid

FIXTURES = Path(__file__).parent / "fixtures"
orders = st.floats(min_value=0.5, max_value=1.0, exclude_min=True)


def mp_gamma_triple(a):
    # oracle: the defining integral and its a-derivatives by quadrature
    a = mp.mpf(a)
    f = lambda k: mp.quad(lambda x: x ** (a - 1) * mp.log(x) ** k * mp.exp(-x), [0, 1, mp.inf])
    return float(f(0)), float(f(1)), float(f(2))


@pytest.mark.parametrize("a", [0.5, 0.6, 0.75, 0.9, 1.0, 1.5, 2.0, 2.7, 3.0])
def test_gamma_eval_matches_integral_definition(a):
    mp.mp.dps = 30
    ref = mp_gamma_triple(a)
    g = specfun.gamma_eval(a)
    for got, want in zip((g.value, g.d1, g.d2), ref):
        assert got == pytest.approx(want, rel=1e-12, abs=1e-15)


def test_gamma_examples():
    assert specfun.gamma_eval(1.0).value == 1.0
    assert specfun.gamma_eval(2.0).value == 1.0
    assert specfun.gamma_eval(1.0).d1 == pytest.approx(-0.577215664901532, rel=1e-13)
    assert specfun.gamma_eval(0.75).value == pytest.approx(1.2254167024651776, rel=1e-13)


def test_gamma_d1_against_central_difference():
    h = 1e-5
    fd = (specfun.gamma_eval(1 + h).value - specfun.gamma_eval(1 - h).value) / (2 * h)
    assert fd == pytest.approx(-0.5772156649, abs=1e-8)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
def test_gamma_domain(bad):
    with pytest.raises(DomainError):
        specfun.gamma_eval(bad)


def test_gamma_recurrence_random():
    rng = np.random.default_rng(2024)
    for a in rng.uniform(0.5, 2.0, 100):
        a = float(a) if a > 0.5 else 0.5000001
        assert specfun.gamma_eval(a).value * a == pytest.approx(specfun.gamma_eval(a + 1).value, rel=1e-12)


@given(st.floats(min_value=0.05, max_value=6.0))
def test_gamma_triple_invariants(a):
    g = specfun.gamma_eval(a)
    assert g.value >= 0.8856
    assert g.d2 > 0


@given(orders)
def test_gamma_on_working_interval(a):
    g = specfun.gamma_eval(a)
    assert g.value >= 1.0
    assert abs(g.d1) <= specfun.GAMMA_PRIME_SUP + 1e-12


def test_gamma_prime_sup_is_attained_at_half():
    grid = np.linspace(0.5, 1.0, 2001)
    sup = max(abs(specfun.gamma_eval(a).d1) for a in grid)
    assert sup == pytest.approx(specfun.GAMMA_PRIME_SUP, rel=1e-12)


def test_gamma_argmin():
    a = specfun.gamma_argmin()
    assert 1 < a < 2
    assert a == pytest.approx(1.4616321, abs=1e-7)
    assert abs(specfun.gamma_eval(a).d1) <= 1e-12
    assert specfun.gamma_eval(a - 1e-3).d1 < 0 < specfun.gamma_eval(a + 1e-3).d1


def test_gamma_argmin_bisection_oracle():
    lo, hi = 1.0, 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if specfun.gamma_eval(mid).d1 < 0 else (lo, mid)
    assert specfun.gamma_argmin() == pytest.approx(0.5 * (lo + hi), abs=1e-12)


def test_inv_gamma_diff_examples():
    assert specfun.inv_gamma_diff(0.9, 0.9)[0] == 0.0
    lhs, bound = specfun.inv_gamma_diff(1.0, 0.5 + 1e-9)
    assert lhs <= bound
    lhs, _ = specfun.inv_gamma_diff(0.8, 0.9)
    g8, g9 = math.gamma(0.8), math.gamma(0.9)
    assert lhs == pytest.approx(abs(g9 - g8) / (g8 * g9), rel=1e-13)


def test_inv_gamma_diff_ratio_random_pairs():
    rng = np.random.default_rng(7)
    for a, b in rng.uniform(0.5 + 1e-12, 1.0, (1000, 2)):
        lhs, bound = specfun.inv_gamma_diff(a, b)
        assert lhs / abs(a - b) <= specfun.GAMMA_PRIME_SUP


@pytest.mark.parametrize("a,b", [(0.5, 0.9), (0.9, 1.2), (0.4, 0.7)])
def test_inv_gamma_diff_domain(a, b):
    with pytest.raises(DomainError):
        specfun.inv_gamma_diff(a, b)


def lag_quad(f, t):
    # u = t - s, then u = t e^{-y} removes the endpoint singularity
    mp.mp.dps = 30
    t = mp.mpf(t)
    return float(mp.quad(lambda y: f(t * mp.exp(-y)) * t * mp.exp(-y), [0, 1, 10, 50, mp.inf]))


def l2_oracle(a, b, t):
    a, b = mp.mpf(a), mp.mpf(b)
    return lag_quad(lambda u: (u ** (a - 1) - u ** (b - 1)) ** 2, t)


def test_kernel_l2_diff_examples():
    assert specfun.kernel_l2_diff(0.8, 0.8, 0.3) == 0.0
    assert specfun.kernel_l2_diff(1.0, 0.75, 1.0) == pytest.approx(1 / 3, rel=1e-14)
    assert specfun.kernel_l2_diff(0.9, 0.8, 0.5) == pytest.approx(l2_oracle(0.9, 0.8, 0.5), rel=1e-10)


def test_kernel_l2_diff_against_quadrature_random():
    rng = np.random.default_rng(11)
    for _ in range(100):
        a, b = rng.uniform(0.55, 1.0, 2)
        t = rng.uniform(0.01, 2.0)
        assert specfun.kernel_l2_diff(a, b, t) == pytest.approx(l2_oracle(a, b, t), rel=1e-10)


@pytest.mark.parametrize("d", [1e-3, 1e-6, 1e-10])
def test_kernel_l2_diff_near_diagonal(d):
    mp.mp.dps = 50
    a, b, t = 0.7 + d, 0.7, 0.3
    A, B, T = mp.mpf(a), mp.mpf(b), mp.mpf(t)
    exact = T ** (2 * A - 1) / (2 * A - 1) - 2 * T ** (A + B - 1) / (A + B - 1) + T ** (2 * B - 1) / (2 * B - 1)
    assert specfun.kernel_l2_diff(a, b, t) == pytest.approx(float(exact), rel=1e-11)


@given(orders, orders, st.floats(min_value=1e-6, max_value=2.0))
def test_kernel_l2_diff_nonnegative_and_symmetric(a, b, t):
    v = specfun.kernel_l2_diff(a, b, t)
    assert v >= 0
    assert v == pytest.approx(specfun.kernel_l2_diff(b, a, t), rel=1e-12, abs=1e-300)


def test_kernel_l2_envelope_frozen_constant():
    C = json.loads((FIXTURES / "kernel_l2_envelope.json").read_text())["C"]
    assert math.isfinite(C)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(3000):
        a, b = rng.uniform(0.6, 1.0, 2)
        t = float(rng.uniform(0.0, 2.0)) or 1.0
        env = (t ** (2 * a - 1) + t ** (2 * b - 1)) * (math.log(t) ** 2 + 1) * (a - b) ** 2
        worst = max(worst, specfun.kernel_l2_diff(a, b, t) / env)
    assert worst <= C


def test_kernel_l2_diff_domain():
    with pytest.raises(DomainError):
        specfun.kernel_l2_diff(0.8, 0.9, 0.0)
    with pytest.raises(DomainError):
        specfun.kernel_l2_diff(0.5, 0.9, 1.0)


def test_singular_quad_examples():
    assert specfun.singular_quad(lambda u: 1.0, 1.0, 1e-12) == pytest.approx(1.0, rel=1e-12)
    assert specfun.singular_quad(lambda u: u**-0.5, 1.0, 1e-12) == pytest.approx(2.0, rel=1e-12)
    assert specfun.singular_quad(lambda u: math.log(u) ** 2, 1.0, 1e-12) == pytest.approx(2.0, rel=1e-12)


def test_singular_quad_ln2_midpoint_crosscheck():
    # midpoint refinement in the log-stretched variable u = e^{-y}
    y = (np.arange(200000) + 0.5) * (60 / 200000)
    mid = np.sum(y**2 * np.exp(-y)) * (60 / 200000)
    assert specfun.singular_quad(lambda u: math.log(u) ** 2, 1.0, 1e-12) == pytest.approx(mid, rel=1e-6)


@pytest.mark.parametrize("c", [-0.9, -0.5, 0.0, 0.7])
@pytest.mark.parametrize("k", [0, 1, 2])
def test_singular_quad_power_log_family(c, k):
    t = 0.7
    mp.mp.dps = 30
    exact = lag_quad(lambda u: u**c * mp.log(u) ** k, t)
    got = specfun.singular_quad(lambda u: u**c * math.log(u) ** k, t, 1e-10)
    assert got == pytest.approx(exact, rel=1e-10)


def test_singular_quad_errors():
    with pytest.raises(DomainError):
        specfun.singular_quad(lambda u: 1.0, 1.0, 1e-16)
    with pytest.raises(QuadratureError) as info:
        specfun.singular_quad(lambda u: math.sin(1 / u) / u, 1.0, 1e-10)
    assert math.isfinite(info.value.estimate)


def test_kernel_weights_plain():
    grid = make_grid(1.0, 8)
    kw = specfun.kernel_weights(1.0, grid, "plain")
    m = kw.matrix
    for k in range(1, 9):
        assert np.allclose(m[k, :k], grid.h, rtol=1e-15)
    assert np.all(np.triu(m[:, :8]) == 0)


@pytest.mark.parametrize("a", [0.55, 0.75, 0.9, 1.0])
def test_kernel_weights_row_sums_telescope(a):
    grid = make_grid(1.0, 64)
    m = specfun.kernel_weights(a, grid, "plain").matrix
    t = grid.nodes
    for k in range(1, 65):
        assert m[k].sum() == pytest.approx(t[k] ** a / a, rel=1e-13)
        assert np.all(m[k, :k] > 0)


def test_kernel_weights_example_row3():
    grid = make_grid(1.0, 4)
    m = specfun.kernel_weights(0.75, grid, "plain").matrix
    assert m[3].sum() == pytest.approx(0.75**0.75 / 0.75, rel=1e-14)


def test_kernel_weights_log_single_step():
    h = 0.25
    grid = make_grid(h, 1)
    w = specfun.kernel_weights(0.75, grid, "log").matrix[1, 0]
    closed = h**0.75 * (math.log(h) - 1 / 0.75) / 0.75
    assert w == pytest.approx(closed, rel=1e-13)
    quad = specfun.singular_quad(lambda u: u ** (-0.25) * math.log(u), h, 1e-12)
    assert w == pytest.approx(quad, rel=1e-11)


@pytest.mark.parametrize("a", [0.6, 0.8, 1.0])
def test_log_weights_are_order_derivatives(a):
    h, n, e = 0.01, 16, 1e-6
    fd = (specfun.plain_lag_weights(a + e if a < 1 else a, h, n) - specfun.plain_lag_weights(a - e, h, n)) / (
        (2 * e) if a < 1 else e
    )
    exact = specfun.log_lag_weights(a, h, n)
    assert np.allclose(fd, exact, rtol=1e-5 if a < 1 else 1e-3)


@pytest.mark.parametrize("a", [0.6, 0.8, 0.95])
def test_diffusion_log_kernels_are_order_derivatives(a):
    h, n, e = 0.01, 16, 1e-6
    for plain, log in [
        (specfun.left_point_kernel, specfun.left_point_log_kernel),
        (specfun.l2_lag_kernel, specfun.l2_lag_log_kernel),
    ]:
        fd = (plain(a + e, h, n) - plain(a - e, h, n)) / (2 * e)
        assert np.allclose(fd, log(a, h, n), rtol=1e-6)


def test_l2_kernel_squares_integrate_the_squared_kernel():
    a, h, n = 0.7, 0.05, 10
    k2 = h * specfun.l2_lag_kernel(a, h, n) ** 2  # kernel multiplies increments of variance h
    for l in range(1, n + 1):
        exact = ((l * h) ** (2 * a - 1) - ((l - 1) * h) ** (2 * a - 1)) / (2 * a - 1)
        assert k2[l - 1] == pytest.approx(exact, rel=1e-12)
