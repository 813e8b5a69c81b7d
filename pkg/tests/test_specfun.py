import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thetanet.specfun import (
    DomainError,
    QuadratureError,
    QuadratureSpec,
    beta_fn,
    check_lemma_asymptotics,
    gamma_fn,
    log_gamma,
    singular_integral,
)

mpmath.mp.dps = 30


def test_gamma_small_values():
    assert gamma_fn(1) == pytest.approx(1, rel=1e-15)
    assert gamma_fn(5) == pytest.approx(24, rel=1e-14)
    assert gamma_fn(0.5) == pytest.approx(1.7724538509055159, rel=1e-13)
    assert gamma_fn(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-13)


@pytest.mark.parametrize("x", [1e-3, 0.25, 1.5, 7.3, 29.9, 30.5, 120.0, 170.2])
def test_gamma_against_mpmath(x):
    assert gamma_fn(x) == pytest.approx(float(mpmath.gamma(x)), rel=1e-12)
    assert log_gamma(x) == pytest.approx(float(mpmath.loggamma(x)), rel=1e-12, abs=1e-13)


@pytest.mark.parametrize("bad", [0.0, -1.0, -0.5])
def test_gamma_domain(bad):
    with pytest.raises(DomainError):
        gamma_fn(bad)


def test_beta_examples():
    assert beta_fn(1, 1) == pytest.approx(1, rel=1e-14)
    assert beta_fn(0.5, 1) == pytest.approx(2, rel=1e-14)
    oracle = mpmath.quad(lambda u: u ** -0.5 * (1 - u) ** 100, [0, 1e-4, 0.01, 1])
    assert beta_fn(0.5, 101) == pytest.approx(float(oracle), rel=1e-10)


@pytest.mark.parametrize("a,b", [(0.5, 1e6), (1.5, 1e4 + 1), (0.25, 3e5), (40.0, 50.0)])
def test_beta_large_arguments(a, b):
    assert beta_fn(a, b) == pytest.approx(float(mpmath.beta(a, b)), rel=1e-10)


@pytest.mark.parametrize("a,b", [(0, 1), (1, 0), (-1, 2)])
def test_beta_domain(a, b):
    with pytest.raises(DomainError):
        beta_fn(a, b)


_grid = st.sampled_from([0.25 * k for k in range(1, 17)])


@given(_grid, _grid)
def test_beta_gamma_identity(a, b):
    assert beta_fn(a, b) * gamma_fn(a + b) == pytest.approx(gamma_fn(a) * gamma_fn(b), rel=1e-9)


def test_singular_integral_power():
    assert singular_integral(lambda u: u ** -0.5, -0.5) == pytest.approx(2.0, rel=1e-10)


BETA_CASES = [(a, b) for a in (0.05, 0.3, 0.5, 1.0, 2.5) for b in (0.5, 1.0, 11.0, 500.0)]


@pytest.mark.parametrize("a,b", BETA_CASES)
def test_singular_integral_reproduces_beta(a, b):
    assert len(BETA_CASES) == 20

    def f(u, v):
        return u ** (a - 1) * v ** (b - 1)

    got = singular_integral(f, a - 1, complement=True, breakpoints=[min(0.5, 4.0 / b)])
    assert got == pytest.approx(beta_fn(a, b), rel=1e-8)


def test_singular_integral_beta_power_integrand():
    # u^(k+a-3)(1-u)^(n+theta) with k=2, a=0.5, n=10
    got = singular_integral(lambda u: u ** -0.5 * (1 - u) ** 10, -0.5)
    assert got == pytest.approx(beta_fn(0.5, 11), rel=1e-10)


def test_singular_integral_marked_integrand():
    n, a = 10**4, 0.5
    rows = check_lemma_asymptotics("marked-integral", [n], {"alpha": a})
    asym = n ** (1 - a) * gamma_fn(a) / (1 - a)
    assert rows[0].exact == pytest.approx(asym, rel=0.05)
    # closed form via analytic continuation of the Beta function:
    # int u^(a-2)(1-(1-u)^n) du = B(a-1,1) - B(a-1,n+1)
    mpmath.mp.dps = 40
    exact = mpmath.beta(a - 1, 1) - mpmath.beta(a - 1, n + 1)
    assert rows[0].exact == pytest.approx(float(exact), rel=1e-10)


def test_quadrature_error_carries_estimate():
    spec = QuadratureSpec(rtol=1e-14, atol=1e-300, max_depth=1)
    with pytest.raises(QuadratureError) as info:
        singular_integral(lambda u: np.sin(1.0 / u) / u ** 0.5, -0.5, spec)
    assert np.isfinite(info.value.estimate)
    assert info.value.error > 0


@pytest.mark.parametrize("kwargs", [dict(rtol=0), dict(atol=-1), dict(max_depth=0)])
def test_quadrature_spec_validation(kwargs):
    with pytest.raises(ValueError):
        QuadratureSpec(**kwargs)


def test_singular_exponent_must_be_integrable():
    with pytest.raises(ValueError):
        singular_integral(lambda u: 1 / u, -1.0)


# ---------------------------------------------------------------------------
# integral asymptotics


@pytest.mark.parametrize("n", [10, 100, 1000])
def test_exp_bound_holds_pointwise(n):
    (row,) = check_lemma_asymptotics("exp-bound", [n], {"points": 1000})
    assert row.residual <= 0


def test_exp_bound_example_grid():
    (row,) = check_lemma_asymptotics("exp-bound", [100], {"u_max": 50.0, "points": 5001})
    assert row.residual <= 0
    # independent pointwise evaluation in high precision
    u = np.linspace(0, 50, 201)
    for x in u:
        diff = abs((1 - mpmath.mpf(x) / 100) ** 100 - mpmath.exp(-x))
        assert diff <= 2 * x**2 * mpmath.exp(-x) / 100 + mpmath.mpf(10) ** -25


def test_beta_power_ratio_tends_to_one():
    rows = check_lemma_asymptotics("beta-power", [100, 1000, 10000], {"k": 2, "alpha": 0.5})
    gaps = [abs(r.exact / r.asymptotic - 1) for r in rows]
    assert gaps[0] > gaps[1] > gaps[2]
    for r, g in zip(rows, gaps):
        assert g * r.n < 1.0
        # residual * n^(k+a-1) stays bounded
        assert abs(r.residual) * r.n ** (2 + 0.5 - 1) < 2.0
        assert r.exact == pytest.approx(float(mpmath.beta(0.5, r.n + 1)), rel=1e-10)


def test_marked_integral_residual_bounded():
    rows = check_lemma_asymptotics("marked-integral", [100, 1000, 10000], {"alpha": 0.5, "theta2": 0})
    res = [r.residual for r in rows]
    assert max(abs(x) for x in res) < 3.0
    # the residual settles towards -1/(1-a) = -2
    assert abs(res[2] + 2) < abs(res[0] + 2) + 1e-9


@pytest.mark.parametrize("lemma,params", [
    ("beta-power", {"k": 1}),
    ("beta-power", {"alpha": 1.5}),
    ("marked-integral", {"theta1": -2}),
    ("exp-bound", {"u_max": 1e9}),
    ("nope", {}),
])
def test_lemma_invalid_params(lemma, params):
    with pytest.raises(ValueError):
        check_lemma_asymptotics(lemma, [10, 100], params)


def test_lemma_grid_must_increase():
    with pytest.raises(ValueError):
        check_lemma_asymptotics("beta-power", [100, 10])
