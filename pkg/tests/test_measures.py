import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from thetanet.measures import (
    BetaDirac,
    EdgewiseOnly,
    GeneralProduct,
    ZeroRateError,
    effective_event_rate,
    measure_from_dict,
    measure_to_dict,
    merger_rate,
    sample_event,
    tabulate_u_cdf,
    tilted_density,
    u_table_quadrature_check,
)
from thetanet.specfun import singular_integral


def test_rate_n1_has_no_mergers():
    assert effective_event_rate(BetaDirac(0.5, 1.0), 1) == 0.0
    assert effective_event_rate(GeneralProduct(((1.0, 0.3, 1.0),), theta=0.7), 1) == 0.0
    assert effective_event_rate(BetaDirac(0.5, 1.0, theta=2.0), 1) == 0.0


def test_edgewise_rate_counts_pairs():
    assert effective_event_rate(EdgewiseOnly(0.3), 5) == pytest.approx(3.0)


def test_beta_rate_n2_closed_form():
    rate = effective_event_rate(BetaDirac(0.5, 1.0), 2)
    assert rate == pytest.approx(2.0, rel=1e-10)
    quad = singular_integral(lambda u: u ** -0.5, -0.5)  # u^2 u^(a-3)
    assert rate == pytest.approx(quad, rel=1e-10)


@pytest.mark.parametrize("alpha", [0.1, 0.25, 0.5, 0.75, 0.95])
def test_beta_rate_n2_is_inverse_alpha(alpha):
    assert merger_rate(BetaDirac(alpha, 1.0), 2) == pytest.approx(1 / alpha, rel=1e-8)


@pytest.mark.parametrize("n", [3, 10, 257, 10**4])
@pytest.mark.parametrize("alpha,beta", [(0.5, 1.0), (0.2, 2.5), (0.8, 0.5)])
def test_beta_rate_matches_quadrature(n, alpha, beta):
    m = BetaDirac(alpha, beta)
    assert merger_rate(m, n) == pytest.approx(u_table_quadrature_check(m, n), rel=1e-8)


def test_rescaled_rate():
    m = BetaDirac(0.5, 1.0)
    assert effective_event_rate(m, 100, rescale=True) == pytest.approx(merger_rate(m, 100) * 0.1)
    with pytest.raises(ValueError):
        effective_event_rate(EdgewiseOnly(1.0), 10, rescale=True)


def test_atom_rate_closed_form():
    w, u, n = 2.0, 0.3, 10
    p2 = 1 - (1 - u) ** n - n * u * (1 - u) ** (n - 1)
    assert merger_rate(GeneralProduct(((w, u, 0.5),)), n) == pytest.approx(w * p2 / u**2, rel=1e-12)


measures = st.one_of(
    st.builds(BetaDirac, st.floats(0.05, 0.95), st.floats(0.2, 5.0)),
    st.builds(lambda w, u, q, th: GeneralProduct(((w, u, q),), th),
              st.floats(0.1, 5), st.floats(0.01, 1.0), st.floats(0.05, 1.0), st.floats(0, 2)),
    st.builds(EdgewiseOnly, st.floats(0, 3)),
)


@given(measures, st.integers(1, 300))
def test_rate_nondecreasing_in_n(m, n):
    assert effective_event_rate(m, n + 1) >= effective_event_rate(m, n) * (1 - 1e-12)


@given(measures)
def test_measure_dict_round_trip(m):
    assert measure_from_dict(measure_to_dict(m)) == m


@pytest.mark.parametrize("bad", [
    dict(type="beta_dirac", alpha=1.0, beta=1.0),
    dict(type="beta_dirac", alpha=0.5, beta=0.0),
    dict(type="atoms", atoms=[[1.0, 0.0, 1.0]]),
    dict(type="atoms", atoms=[[1.0, 0.5, 1.5]]),
    dict(type="atoms", atoms=[[-1.0, 0.5, 1.0]]),
    dict(type="edgewise", theta=-1.0),
    dict(type="nope"),
])
def test_invalid_measures(bad):
    with pytest.raises(ValueError):
        measure_from_dict(bad)


# ---------------------------------------------------------------------------
# sampling


def test_edgewise_only_samples_pairs():
    rng = np.random.default_rng(1)
    assert all(sample_event(EdgewiseOnly(1.0), 5, rng).kind == "pair" for _ in range(100))


def test_zero_rate_raises():
    with pytest.raises(ZeroRateError):
        sample_event(BetaDirac(0.5, 1.0), 1, np.random.default_rng(0))
    with pytest.raises(ZeroRateError):
        sample_event(EdgewiseOnly(0.0), 10, np.random.default_rng(0))


def test_single_atom_conditioned_binomial():
    n, u0, q0 = 10, 0.15, 0.4
    m = GeneralProduct(((1.5, u0, q0),))
    rng = np.random.default_rng(11)
    draws = 10**5
    ks = np.empty(draws, dtype=int)
    for j in range(draws):
        ev = sample_event(m, n, rng)
        assert ev.u == u0 and ev.q == q0 and ev.kind == "merger"
        ks[j] = ev.colored_count
    pmf = stats.binom.pmf(np.arange(n + 1), n, u0)
    pmf[:2] = 0
    pmf /= pmf.sum()
    obs = np.bincount(ks, minlength=n + 1)
    for k in range(n + 1):
        sd = math.sqrt(draws * pmf[k] * (1 - pmf[k]))
        assert abs(obs[k] - draws * pmf[k]) <= 3 * sd + 1e-9, k


def _bin_mass(m, n, a, b):
    """Tilted mass on [a, b] by quadrature, independent of the sampler."""
    if a == 0.0:
        return singular_integral(lambda s: tilted_density(m, n, b * s) * b, m.alpha - 1.0)
    return singular_integral(lambda s, sc: tilted_density(m, n, a + (b - a) * s, (1 - b) + (b - a) * sc) * (b - a),
                             0.0, complement=True)


@pytest.mark.parametrize("method", ["exact", "table"])
def test_u_histogram_chi_square(method):
    m, n, draws, bins = BetaDirac(0.5, 1.0), 100, 10**5, 20
    table = tabulate_u_cdf(m, n)
    edges = np.array([0.0] + [table.sample(j / bins) for j in range(1, bins)] + [1.0])
    expected = np.array([_bin_mass(m, n, a, b) for a, b in zip(edges[:-1], edges[1:])])
    expected /= merger_rate(m, n)
    assert expected.sum() == pytest.approx(1.0, rel=1e-8)
    rng = np.random.default_rng(2024)
    us = np.array([sample_event(m, n, rng, method=method).u for _ in range(draws)])
    obs = np.histogram(us, edges)[0]
    chi2 = float(np.sum((obs - draws * expected) ** 2 / (draws * expected)))
    assert chi2 < stats.chi2.ppf(0.99, bins - 1)


def test_table_single_atom_degenerate():
    t = tabulate_u_cdf(GeneralProduct(((1.0, 0.37, 1.0),)), 10)
    assert t.discrete
    assert all(t.sample(p) == 0.37 for p in (0.0, 0.3, 0.999))


def test_table_n2_inverse_is_square():
    t = tabulate_u_cdf(BetaDirac(0.5, 1.0), 2)
    ps = np.linspace(0, 0.999, 500)
    got = np.array([t.sample(p) for p in ps])
    assert np.max(np.abs(got - ps**2)) < 1e-6
    # knots themselves sit on the closed-form CDF sqrt(u)
    assert np.max(np.abs(t.probs - np.sqrt(t.knots))) < 1e-7


def test_table_n1000_normalised_and_increasing():
    t = tabulate_u_cdf(BetaDirac(0.5, 1.0), 1000)
    assert t.probs[-1] == 1.0
    assert t.probs[0] == 0.0
    assert np.all(np.diff(t.probs) > 0)
    assert np.all(np.diff(t.knots) > 0)
    assert len(t.knots) <= 4096


def test_table_grid_size_validated():
    with pytest.raises(ValueError):
        tabulate_u_cdf(BetaDirac(0.5, 1.0), 10, grid_size=10)
