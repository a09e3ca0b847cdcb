import math

import numpy as np
import pytest
from scipy.special import digamma

from fracsde import models, specfun
from fracsde.errors import DomainError
from fracsde.paths import make_grid, sample_noise
from fracsde.solver import SchemeConfig, Trajectory, solve_path, solve_paths
from fracsde.variation import difference_quotient, solve_first_variation, variation_paths

L2 = SchemeConfig(diffusion_rule="integrated_l2_weights")


def run(model, beta, grid, dB, cfg=SchemeConfig()):
    base = solve_path(model, beta, grid, dB, cfg)
    return solve_first_variation(model, beta, base, dB, cfg)


def test_no_sources_no_variation():
    g = make_grid(1.0, 16)
    v = run(models.deterministic_drift(c=0.0), 0.8, g, np.zeros(16))
    assert np.all(v.variation == 0)


def test_starts_at_zero():
    g = make_grid(1.0, 16)
    v = run(models.linear(), 0.8, g, sample_noise(g, 1, 0).replica(0))
    assert v.variation[0] == 0.0


def test_deterministic_variation_is_order_derivative():
    g = make_grid(1.0, 64)
    beta = 0.8
    t = g.nodes[1:]
    Y = run(models.deterministic_drift(), beta, g, np.zeros(64)).variation[1:]
    exact = t**beta * (np.log(t) - digamma(beta + 1)) / math.gamma(beta + 1)
    assert np.allclose(Y, exact, rtol=1e-11, atol=1e-13)


@pytest.mark.parametrize("cfg", [SchemeConfig(), L2])
@pytest.mark.parametrize("beta", [0.7, 0.95])
def test_variation_is_exact_derivative_of_scheme(cfg, beta):
    g = make_grid(1.0, 64)
    dB = sample_noise(g, 3, 6).increments
    m = models.linear(lam=0.8, mu=0.3, s0=0.6, s1=0.4)
    e = 1e-6
    Xp, _ = solve_paths(m, beta + e, g, dB, cfg)
    Xm, _ = solve_paths(m, beta - e, g, dB, cfg)
    X0, _ = solve_paths(m, beta, g, dB, cfg)
    Y = variation_paths(m, beta, g, X0, dB, cfg)
    assert np.allclose((Xp - Xm) / (2 * e), Y, rtol=1e-6, atol=1e-7)


def test_additive_noise_closed_form_pathwise():
    g = make_grid(1.0, 32)
    beta, s0 = 0.85, 0.7
    dB = sample_noise(g, 1, 2).replica(0)
    m = models.additive_noise(sigma0=s0)
    v = run(m, beta, g, dB)
    X = v.base.values
    klog = specfun.toeplitz_lower(specfun.left_point_log_kernel(beta, g.h, 32))
    expected = -digamma(beta) * (X - m.x0) + s0 / math.gamma(beta) * (klog @ dB)
    assert np.allclose(v.variation, expected, atol=1e-13)


def test_additive_noise_variance_matches_isometry():
    g = make_grid(1.0, 256)
    beta, m = 0.9, 10_000
    nb = sample_noise(g, m, 31)
    X, _ = solve_paths(models.additive_noise(), beta, g, nb.increments, L2)
    Y = variation_paths(models.additive_noise(), beta, g, X, nb.increments, L2)[:, -1]
    psi = digamma(beta)
    target = specfun.singular_quad(lambda u: u ** (2 * beta - 2) * (math.log(u) - psi) ** 2, 1.0, 1e-12)
    target /= math.gamma(beta) ** 2
    var = Y.var(ddof=1)
    se = math.sqrt(np.var((Y - Y.mean()) ** 2, ddof=1) / m)
    assert abs(var - target) <= 3 * se


def test_variation_linear_in_noise_amplitude():
    g = make_grid(1.0, 32)
    dB = sample_noise(g, 1, 9).replica(0)
    y1 = run(models.additive_noise(sigma0=1.0), 0.8, g, dB).variation
    y2 = run(models.additive_noise(sigma0=2.0), 0.8, g, dB).variation
    assert np.allclose(y2, 2 * y1, rtol=1e-13, atol=1e-15)


def test_difference_quotient_deterministic():
    g = make_grid(1.0, 16)
    m = models.deterministic_drift()
    xa = solve_path(m, 1.0, g, np.zeros(16))
    xb = solve_path(m, 0.75, g, np.zeros(16))
    q = difference_quotient(xa, xb)
    assert q[-1] == pytest.approx((1 - 1 / math.gamma(1.75)) / 0.25, rel=1e-12)


def test_difference_quotient_identical_values():
    g = make_grid(1.0, 4)
    vals = np.linspace(0, 1, 5)
    assert np.all(difference_quotient(Trajectory(g, 0.9, vals), Trajectory(g, 0.8, vals)) == 0)


def test_difference_quotient_errors():
    g = make_grid(1.0, 4)
    a = Trajectory(g, 0.9, np.zeros(5))
    with pytest.raises(DomainError):
        difference_quotient(a, a)
    with pytest.raises(DomainError):
        difference_quotient(a, Trajectory(make_grid(2.0, 4), 0.8, np.zeros(5)))
    with pytest.raises(DomainError):
        solve_first_variation(models.linear(), 0.8, a, np.zeros(4))


def test_quotient_close_to_variation_for_nearby_orders():
    g = make_grid(1.0, 128)
    nb = sample_noise(g, 2000, 4)
    m = models.linear()
    Xb, _ = solve_paths(m, 0.9, g, nb.increments)
    Xa, _ = solve_paths(m, 0.91, g, nb.increments)
    Y = variation_paths(m, 0.9, g, Xb, nb.increments)
    q = (Xa - Xb) / 0.01
    assert np.mean((q[:, -1] - Y[:, -1]) ** 2) < 0.01 * np.mean(Y[:, -1] ** 2)
