"""Gamma and Beta functions, endpoint-singular quadrature, and numeric
checks of the integral asymptotics used by the convergence arguments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "QuadratureError",
    "QuadratureSpec",
    "LemmaRow",
    "gamma_fn",
    "log_gamma",
    "beta_fn",
    "log_beta",
    "singular_integral",
    "check_lemma_asymptotics",
    "log_one_minus",
]

LOG_SPACE_SWITCH = 30.0


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class QuadratureError(ArithmeticError):
    """Requested tolerance not reached; carries the best estimate."""

    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(f"{message} (estimate={estimate!r}, error bound={error!r})")
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class QuadratureSpec:
    rtol: float = 1e-10
    atol: float = 1e-14
    max_depth: int = 20

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if int(self.max_depth) < 1:
            raise ValueError("max_depth must be >= 1")


DEFAULT_SPEC = QuadratureSpec()


def gamma_fn(x: float) -> float:
    """Gamma function on the positive half-line."""
    x = float(x)
    if not x > 0:
        raise DomainError(f"gamma_fn requires x > 0, got {x!r}")
    if x > LOG_SPACE_SWITCH:
        return math.exp(math.lgamma(x))
    return math.gamma(x)


def log_gamma(x: float) -> float:
    x = float(x)
    if not x > 0:
        raise DomainError(f"log_gamma requires x > 0, got {x!r}")
    return math.lgamma(x)


_STIRLING = (1 / 12, -1 / 360, 1 / 1260, -1 / 1680, 1 / 1188, -691 / 360360)


def _stirling_tail(x: float) -> float:
    """lgamma(x) - [(x-1/2) log x - x + log(2 pi)/2], for x >= 15."""
    inv, inv2 = 1.0 / x, 1.0 / (x * x)
    return inv * sum(c * inv2**k for k, c in enumerate(_STIRLING))


def _lgamma_ratio(big: float, small: float) -> float:
    """lgamma(big) - lgamma(big + small) without cancellation (big >= 15)."""
    s = big + small
    return (-(big - 0.5) * math.log1p(small / big) - small * math.log(s) + small
            + _stirling_tail(big) - _stirling_tail(s))


def log_beta(a: float, b: float) -> float:
    a, b = float(a), float(b)
    if not (a > 0 and b > 0):
        raise DomainError(f"beta_fn requires a, b > 0, got ({a!r}, {b!r})")
    small, big = min(a, b), max(a, b)
    if big >= 15:
        return math.lgamma(small) + _lgamma_ratio(big, small)
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def beta_fn(a: float, b: float) -> float:
    """B(a, b); switches to log space once any Gamma argument exceeds 30."""
    a, b = float(a), float(b)
    if not (a > 0 and b > 0):
        raise DomainError(f"beta_fn requires a, b > 0, got ({a!r}, {b!r})")
    if a + b > LOG_SPACE_SWITCH:
        return math.exp(log_beta(a, b))
    return math.gamma(a) * math.gamma(b) / math.gamma(a + b)


def log_one_minus(u, v):
    """log(1-u) given u and v = 1-u, accurate at both ends."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(u < 0.5, np.log1p(-np.minimum(u, 0.5)), np.log(v))


# ---------------------------------------------------------------------------
# tanh-sinh quadrature

_T_MAX = 6.5  # beyond this the nodes sit closer than 1e-300 to the endpoints


def _ts_level(h: float, odd_only: bool):
    """Nodes x in (0,1), complements 1-x and weights for step h."""
    m = int(math.ceil(_T_MAX / h))
    j = np.arange(-m, m + 1)
    if odd_only:
        j = j[j % 2 != 0]
    t = j * h
    s = 0.5 * math.pi * np.sinh(t)
    # x = 1/(1+exp(-2s)), 1-x = 1/(1+exp(2s)); both accurate near the ends
    with np.errstate(over="ignore"):
        x = 1.0 / (1.0 + np.exp(-2.0 * s))
        xc = 1.0 / (1.0 + np.exp(2.0 * s))
    w = h * math.pi * np.cosh(t) * x * xc
    keep = (x > 0) & (xc > 0) & (w > 0)
    return x[keep], xc[keep], w[keep]


def _tanh_sinh(g: Callable, spec: QuadratureSpec):
    """Integrate g(x, 1-x) over (0,1); returns (estimate, error)."""
    h = 1.0
    x, xc, w = _ts_level(h, False)
    total = float(np.sum(w * g(x, xc)))
    prev = total
    err = math.inf
    for _ in range(spec.max_depth):
        h *= 0.5
        x, xc, w = _ts_level(h, True)
        total = 0.5 * total + float(np.sum(w * g(x, xc)))
        err = abs(total - prev)
        if not math.isfinite(total):
            break
        if err <= max(spec.atol, spec.rtol * abs(total)):
            return total, err
        prev = total
    raise QuadratureError("tanh-sinh tolerance not reached", total, err)


def singular_integral(
    f: Callable,
    singular_exponent: float,
    spec: QuadratureSpec | None = None,
    *,
    breakpoints: Sequence[float] = (),
    complement: bool = False,
) -> float:
    """Integral of f over (0, 1) where f(u) ~ u**singular_exponent at 0.

    ``f`` is vectorised. With ``complement=True`` it is called as
    ``f(u, 1 - u)`` with the second argument computed without
    cancellation, which matters for integrands singular at 1.
    Optional interior breakpoints split the range; the first piece
    absorbs the endpoint exponent through u = s**(1/(e+1)).
    """
    spec = spec or DEFAULT_SPEC
    e = float(singular_exponent)
    if not e > -1:
        raise DomainError("singular_exponent must be > -1")
    raw = f if complement else (lambda u, v: f(u))

    def call(u, v):
        # nodes that underflowed onto an endpoint carry no weight
        out = np.zeros_like(u)
        ok = (u > 0) & (v > 0)
        out[ok] = raw(u[ok], v[ok])
        return out

    cuts = sorted(float(b) for b in breakpoints if 0.0 < float(b) < 1.0)
    edges = [0.0] + cuts + [1.0]
    total = 0.0
    err_total = 0.0
    for k in range(len(edges) - 1):
        a, b = edges[k], edges[k + 1]
        width = b - a
        if k == 0 and e < 0:
            p = 1.0 / (e + 1.0)

            def g(s, sc, a=a, b=b, p=p):
                u = b * s**p
                with np.errstate(divide="ignore"):
                    v = (1.0 - b) + b * -np.expm1(p * np.log1p(-sc))
                return call(u, v) * (b * p) * s ** (p - 1.0)

        else:

            def g(x, xc, a=a, b=b, width=width):
                u = a + width * x
                v = (1.0 - b) + width * xc
                return call(u, v) * width

        piece_spec = QuadratureSpec(spec.rtol, spec.atol / (len(edges) - 1), spec.max_depth)
        try:
            val, err = _tanh_sinh(g, piece_spec)
        except QuadratureError as exc:
            raise QuadratureError("singular_integral tolerance not reached",
                                  total + exc.estimate, err_total + exc.error) from None
        total += val
        err_total += err
    return total


# ---------------------------------------------------------------------------
# asymptotic lemma checks


@dataclass(frozen=True)
class LemmaRow:
    n: int
    exact: float
    asymptotic: float
    residual: float


def _lemma_beta_power(n_grid, params):
    k = int(params.get("k", 2))
    alpha = float(params.get("alpha", 0.5))
    theta = float(params.get("theta", 0.0))
    if k < 2 or not 0 < alpha < 1 or theta <= -1:
        raise ValueError("needs k >= 2, alpha in (0,1), theta > -1")
    rows = []
    for n in n_grid:
        exact = beta_fn(k + alpha - 2, n + theta + 1)
        asym = n ** (2 - alpha - k) * gamma_fn(k + alpha - 2)
        rows.append(LemmaRow(int(n), exact, asym, exact - asym))
    return rows


def _lemma_marked_integral(n_grid, params):
    alpha = float(params.get("alpha", 0.5))
    theta1 = float(params.get("theta1", 0.0))
    theta2 = float(params.get("theta2", 0.0))
    if not 0 < alpha < 1 or theta1 <= -1:
        raise ValueError("needs alpha in (0,1), theta1 > -1")
    gam = gamma_fn(alpha) / (1 - alpha)
    rows = []
    for n in n_grid:
        m = n + theta2
        if m <= 0:
            raise ValueError("n + theta2 must be positive")

        def f(u, v, m=m):
            # written as u^(a-1) * (1-(1-u)^m)/u to stay finite for tiny u
            lv = log_one_minus(u, v)
            return u ** (alpha - 1) * np.exp(theta1 * lv) * (-np.expm1(m * lv) / u)

        bps = [x / n for x in (0.5, 4.0, 32.0, 256.0)]
        exact = singular_integral(f, alpha - 1, breakpoints=bps, complement=True)
        asym = n ** (1 - alpha) * gam
        rows.append(LemmaRow(int(n), exact, asym, exact - asym))
    return rows


def _lemma_exp_bound(n_grid, params):
    points = int(params.get("points", 1001))
    rows = []
    for n in n_grid:
        u_max = float(params.get("u_max", n / 2))
        if u_max > n / 2 or points < 2:
            raise ValueError("the bound is only claimed on [0, n/2]")
        u = np.linspace(0.0, u_max, points)
        # (1-u/n)^n - e^{-u} = e^{-u} * expm1(n log(1-u/n) + u)
        diff = np.abs(np.exp(-u) * np.expm1(n * np.log1p(-u / n) + u))
        bound = 2.0 * u**2 * np.exp(-u) / n
        slack = diff - bound
        j = int(np.argmax(slack))
        rows.append(LemmaRow(int(n), float(diff.max()), float(bound[j]), float(slack[j])))
    return rows


_LEMMAS = {
    "beta-power": _lemma_beta_power,
    "marked-integral": _lemma_marked_integral,
    "exp-bound": _lemma_exp_bound,
}


LEMMA_IDS = tuple(_LEMMAS)


def check_lemma_asymptotics(lemma_id: str, n_grid: Sequence[int], params: dict | None = None) -> list[LemmaRow]:
    """Residual tables for the three integral asymptotics.

    ``"beta-power"``: B(k+a-2, n+theta+1) against n**(2-a-k) Gamma(k+a-2).
    ``"marked-integral"``: int u^(a-2)(1-u)^theta1 (1-(1-u)^(n+theta2)) du
    against n**(1-a) Gamma(a)/(1-a).
    ``"exp-bound"``: for each n, the worst slack of
    |(1-u/n)^n - e^-u| - 2 u^2 e^-u / n over a grid on [0, n/2]
    (``exact`` holds the max difference, ``residual`` the max slack).
    """
    if lemma_id not in _LEMMAS:
        raise ValueError(f"unknown lemma id {lemma_id!r}")
    grid = [int(n) for n in n_grid]
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
        raise ValueError("n_grid must be strictly increasing positive integers")
    return _LEMMAS[lemma_id](grid, dict(params or {}))
