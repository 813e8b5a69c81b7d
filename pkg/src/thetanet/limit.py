"""The deterministic limit of the rescaled spectrum.

Drift of the Smoluchowski-type hierarchy, its Jacobian, an RK4
integrator, the exact polynomial solution c_{t,i} = p_i(t) e^{-i gamma t},
and the exact finite-n drift used to check convergence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P

from .specfun import gamma_fn, log_one_minus, singular_integral

__all__ = [
    "LimitSolution",
    "StepTooLargeError",
    "partitions_2plus",
    "decay_rate",
    "drift_F",
    "jacobian_F",
    "solve_ode",
    "closed_form",
    "prelimit_drift",
    "prelimit_drift_parts",
]

FEAS_TOL = 1e-12


class StepTooLargeError(ArithmeticError):
    pass


def decay_rate(alpha: float) -> float:
    """gamma = Gamma(alpha) / (1 - alpha)."""
    return gamma_fn(alpha) / (1.0 - alpha)


@lru_cache(maxsize=None)
def _partitions(i: int, max_part: int) -> tuple:
    """Partitions of i into parts <= max_part, as descending tuples."""
    if i == 0:
        return ((),)
    out = []
    for first in range(min(i, max_part), 0, -1):
        for rest in _partitions(i - first, first):
            out.append((first,) + rest)
    return tuple(out)


def partitions_2plus(i: int, d: int) -> list:
    """Multiplicity vectors l in N^d with sum_j j l_j = i and l_i = 0.

    Returned in lexicographic order of the vectors.
    """
    if not 1 <= i <= d:
        raise ValueError("need 1 <= i <= d")
    out = []
    for parts in _partitions(i, i - 1):
        ell = [0] * d
        for p in parts:
            ell[p - 1] += 1
        out.append(tuple(ell))
    return sorted(out)


@lru_cache(maxsize=None)
def _gain_terms(d: int, alpha: float) -> tuple:
    """Per size i: list of (coef, l) with coef = Gamma(a+|l|-2) prod j^l_j / l_j!."""
    terms = []
    for i in range(1, d + 1):
        row = []
        for ell in partitions_2plus(i, d):
            k = sum(ell)
            coef = gamma_fn(alpha + k - 2)
            for j, lj in enumerate(ell, start=1):
                coef *= j**lj / math.factorial(lj)
            row.append((coef, ell))
        terms.append(tuple(row))
    return tuple(terms)


def _check_feasible(c, d=None):
    c = np.asarray(c, dtype=float)
    if c.ndim != 1 or (d is not None and len(c) != d):
        raise ValueError("c must be a vector of length d")
    if np.any(c < -FEAS_TOL) or np.dot(np.arange(1, len(c) + 1), c) > 1 + FEAS_TOL:
        raise ValueError("c must be nonnegative with sum_i i c_i <= 1")
    return c


def _monomial(c, ell):
    v = 1.0
    for j, lj in enumerate(ell):
        if lj:
            v *= c[j] ** lj
    return v


def drift_F(c, alpha: float) -> np.ndarray:
    """F_i(c) = sum_l prod_j (j c_j)^l_j / l_j! Gamma(a+|l|-2) - gamma i c_i."""
    c = _check_feasible(c)
    d = len(c)
    gam = decay_rate(alpha)
    out = np.empty(d)
    for i, row in enumerate(_gain_terms(d, float(alpha))):
        out[i] = sum(coef * _monomial(c, ell) for coef, ell in row) - gam * (i + 1) * c[i]
    return out


def jacobian_F(c, alpha: float) -> np.ndarray:
    """dF_i/dc_k by differentiating each monomial (no division by c_k)."""
    c = _check_feasible(c)
    d = len(c)
    jac = np.zeros((d, d))
    for i, row in enumerate(_gain_terms(d, float(alpha))):
        for coef, ell in row:
            for k, lk in enumerate(ell):
                if lk == 0:
                    continue
                v = coef * lk * c[k] ** (lk - 1)
                for j, lj in enumerate(ell):
                    if j != k and lj:
                        v *= c[j] ** lj
                jac[i, k] += v
        jac[i, i] -= decay_rate(alpha) * (i + 1)
    return jac


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LimitSolution:
    """c_t either as polynomials (``p``) or on a time grid (``times``, ``grid``)."""

    alpha: float
    d: int
    gamma: float
    p: tuple | None = None
    times: np.ndarray | None = None
    grid: np.ndarray | None = None

    def values(self, t) -> np.ndarray:
        """c at the times t, shape (len(t), d); grids are interpolated linearly."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.p is not None:
            out = np.empty((len(t), self.d))
            for i, coeffs in enumerate(self.p):
                out[:, i] = P.polyval(t, coeffs) * np.exp(-(i + 1) * self.gamma * t)
            return out
        if np.any(t < self.times[0] - 1e-12) or np.any(t > self.times[-1] + 1e-12):
            raise ValueError("time outside the solved grid")
        return np.stack([np.interp(t, self.times, self.grid[:, i]) for i in range(self.d)], axis=1)

    def mass(self, t) -> np.ndarray:
        return self.values(t) @ np.arange(1, self.d + 1)


def _rk4(c0, alpha, t_max, step):
    steps = int(round(t_max / step))
    if steps < 1 or abs(steps * step - t_max) > 1e-9 * max(1.0, t_max):
        steps = max(1, int(math.ceil(t_max / step)))
    h = t_max / steps
    d = len(c0)
    rows = _gain_terms(d, float(alpha))
    gam = decay_rate(alpha)
    idx = np.arange(1, d + 1)

    def f(c):
        out = -gam * idx * c
        for i, row in enumerate(rows):
            for coef, ell in row:
                out[i] += coef * _monomial(c, ell)
        return out

    grid = np.empty((steps + 1, d))
    grid[0] = c0
    c = np.array(c0, dtype=float)
    for s in range(steps):
        k1 = f(c)
        k2 = f(c + 0.5 * h * k1)
        k3 = f(c + 0.5 * h * k2)
        k4 = f(c + h * k3)
        c = c + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        grid[s + 1] = c
    return np.linspace(0.0, t_max, steps + 1), grid


def solve_ode(c0, alpha: float, t_max: float, step: float = 1e-3, check: bool = True) -> LimitSolution:
    """Classical RK4 on dc/dt = F(c), verified against a half-step run."""
    c0 = _check_feasible(c0)
    if not step > 0 or not t_max >= 0:
        raise ValueError("need step > 0 and t_max >= 0")
    d = len(c0)
    if t_max == 0:
        return LimitSolution(alpha, d, decay_rate(alpha), times=np.zeros(1), grid=c0[None, :].copy())
    times, grid = _rk4(c0, alpha, t_max, step)
    if check:
        _, fine = _rk4(c0, alpha, t_max, (times[1] - times[0]) / 2)
        gap = float(np.max(np.abs(fine[::2] - grid)))
        if gap > 1e-8:
            raise StepTooLargeError(f"halving check differs by {gap:.3e} > 1e-8")
    return LimitSolution(alpha, d, decay_rate(alpha), times=times, grid=grid)


def closed_form(c0, alpha: float, d: int | None = None) -> LimitSolution:
    """Polynomials p_i from the recursion
    p_i(t) = c0_i + sum_l Gamma(a+|l|-2) prod_j j^l_j/l_j! int_0^t prod_j p_j^l_j ds.
    """
    c0 = _check_feasible(c0)
    d = len(c0) if d is None else d
    if len(c0) != d:
        raise ValueError("c0 must have length d")
    polys = []
    for i, row in enumerate(_gain_terms(d, float(alpha))):
        acc = np.array([c0[i]])
        for coef, ell in row:
            prod = np.array([1.0])
            for j, lj in enumerate(ell):
                for _ in range(lj):
                    prod = P.polymul(prod, polys[j])
            acc = P.polyadd(acc, coef * P.polyint(prod))
        polys.append(acc)
    return LimitSolution(alpha, d, decay_rate(alpha), p=tuple(polys))


# ---------------------------------------------------------------------------
# finite-n drift


def _breaks(n: int):
    return [x / n for x in (0.5, 4.0, 32.0, 256.0) if x / n < 1]


@lru_cache(maxsize=4096)
def _gain_integral(ell: tuple, n: int, alpha: float, beta: float) -> float:
    """int prod_j p_j(u)^l_j u^(a-3) (1-u)^(n-||l||+b-1) du."""
    k = sum(ell)
    norm = sum(j * lj for j, lj in enumerate(ell, start=1))
    power = n - norm + beta - 1.0
    e = alpha - 3.0 + k

    def f(u, v):
        lv = log_one_minus(u, v)
        val = np.exp(power * lv) * u**e
        for j, lj in enumerate(ell, start=1):
            if lj:
                # p_j(u)/u, finite as u -> 0
                val = val * (-np.expm1(j * lv) / u) ** lj
        return val

    return singular_integral(f, e, breakpoints=_breaks(n), complement=True)


@lru_cache(maxsize=4096)
def _loss_integral(i: int, n: int, alpha: float, beta: float) -> float:
    """int p_i(u) (1-(1-u)^(n-i)) u^(a-3) (1-u)^(b-1) du."""
    if n - i <= 0:
        return 0.0

    def f(u, v):
        lv = log_one_minus(u, v)
        return (u ** (alpha - 1.0) * (-np.expm1(i * lv) / u) * (-np.expm1((n - i) * lv) / u)
                * np.exp((beta - 1.0) * lv))

    return singular_integral(f, alpha - 1.0, breakpoints=_breaks(n), complement=True)


def _log_binom(a: float, b: int) -> float:
    return math.lgamma(a + 1) - math.lgamma(b + 1) - math.lgamma(a - b + 1)


def prelimit_drift_parts(c, n: int, alpha: float, beta: float):
    """(F^{n,+}, F^{n,-}) at c on the 1/n grid."""
    c = _check_feasible(c)
    counts = np.rint(np.asarray(c) * n)
    if np.any(np.abs(counts - np.asarray(c) * n) > 1e-9 * max(1, n)):
        raise ValueError("c must lie on the 1/n grid")
    d = len(c)
    plus = np.zeros(d)
    minus = np.zeros(d)
    for i in range(1, d + 1):
        total = 0.0
        for ell in partitions_2plus(i, d):
            if any(lj > counts[j] for j, lj in enumerate(ell)):
                continue
            logc = sum(_log_binom(counts[j], lj) for j, lj in enumerate(ell) if lj)
            total += math.exp(logc) * _gain_integral(ell, int(n), float(alpha), float(beta))
        plus[i - 1] = n ** (alpha - 2.0) * total
        if counts[i - 1] > 0:
            minus[i - 1] = n ** (alpha - 1.0) * c[i - 1] * _loss_integral(i, int(n), float(alpha), float(beta))
    return plus, minus


def prelimit_drift(c, n: int, alpha: float, beta: float) -> np.ndarray:
    """Exact drift F^n(c) = F^{n,+}(c) - F^{n,-}(c) of the rescaled spectrum."""
    plus, minus = prelimit_drift_parts(c, n, alpha, beta)
    return plus - minus


def feasible_grid(n: int, d: int, points: int, seed: int = 0) -> np.ndarray:
    """``points`` vectors on the lattice (1/1000) Z^d, feasible for all n that 1000 divides.

    Drawn reproducibly: counts (per 1000 vertices) uniform on the simplex
    sum_i i m_i <= 1000.
    """
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < points:
        w = rng.dirichlet(np.ones(d + 1))[:d]
        m = np.floor(w * 1000 / np.arange(1, d + 1))
        c = m / 1000.0
        if np.dot(np.arange(1, d + 1), c) <= 1:
            out.append(c)
    return np.array(out)
