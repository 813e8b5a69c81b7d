"""Fluctuations around the deterministic limit.

U^n_t = sigma_n (C^n_t - c_t) converges to the linear SDE
dU_i = <grad F_i(c_t), U> dt - i c_{t,i} dL_t, where L is the compensated
spectrally positive Levy process with Levy measure u^(a-3) du on (0, inf).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .limit import LimitSolution, jacobian_F

__all__ = [
    "InsufficientSamplesError",
    "FluctuationPath",
    "LevySimConfig",
    "LimitPaths",
    "ScalingReport",
    "sigma_n",
    "empirical_fluctuations",
    "default_truncation",
    "neglected_variance_bound",
    "simulate_limit_paths",
    "simulate_limit_U",
    "iqr",
    "loglog_slope",
    "ks_distance",
    "tail_and_scaling_stats",
]

PATH_BLOCK = 1000  # paths per independently seeded block


class InsufficientSamplesError(ValueError):
    pass


def sigma_n(n: int, alpha: float) -> float:
    """Fluctuation scale n^((1-a)/(2-a))."""
    if n < 1 or not 0 < alpha < 1:
        raise ValueError("need n >= 1 and alpha in (0,1)")
    return float(n) ** ((1.0 - alpha) / (2.0 - alpha))


@dataclass
class FluctuationPath:
    times: np.ndarray
    U: np.ndarray  # (S, d)
    source: str  # "empirical(n=...)" or "limit(eps=...)"


def empirical_fluctuations(trajectories, limit: LimitSolution, alpha: float) -> list:
    """sigma_n (C^n_t - c_t) for each trajectory."""
    out = []
    for tr in trajectories:
        times = np.asarray(tr.times, dtype=float)
        if tr.values.shape[1] != limit.d:
            raise ValueError("spectrum order differs from the limit's d")
        if limit.times is not None and (times[0] < limit.times[0] - 1e-12 or times[-1] > limit.times[-1] + 1e-12):
            raise ValueError("trajectory times fall outside the limit grid")
        c = limit.values(times)
        out.append(FluctuationPath(times, sigma_n(tr.n, alpha) * (tr.values - c), f"empirical(n={tr.n})"))
    return out


# ---------------------------------------------------------------------------
# limit process


def neglected_variance_bound(eps: float, alpha: float, scale: float = 1.0) -> float:
    """(i c)^2 eps^a / a: variance per unit time of the jumps below eps."""
    return scale**2 * eps**alpha / alpha


def default_truncation(alpha: float, threshold: float = 1e-4) -> float:
    """Largest eps with eps^a / a <= threshold (using i c_i <= 1)."""
    return (alpha * threshold) ** (1.0 / alpha)


@dataclass(frozen=True)
class LevySimConfig:
    """Limit simulation settings.

    Jumps above ``atom_threshold`` are explicit Poisson atoms; the
    compensated jumps in (eps, atom_threshold] enter as a centred
    Gaussian increment with the same variance; jumps below eps are
    dropped.  Setting ``atom_threshold <= eps`` gives the literal
    truncated scheme.
    """

    alpha: float
    eps: float | None = None
    h: float = 1e-3
    t_max: float = 1.0
    seed: int = 0
    variance_threshold: float = 1e-4
    atom_threshold: float = 1e-2

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0,1)")
        if self.eps is None:
            object.__setattr__(self, "eps", default_truncation(self.alpha, self.variance_threshold))
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0,1)")
        if not (self.h > 0 and self.t_max >= 0):
            raise ValueError("need h > 0 and t_max >= 0")

    def kappa(self, level: float) -> float:
        """Compensator int_level^inf u u^(a-3) du = level^(a-1)/(1-a)."""
        return level ** (self.alpha - 1.0) / (1.0 - self.alpha)

    def atom_rate(self, level: float) -> float:
        """Rate of jumps above level: level^(a-2)/(2-a)."""
        return level ** (self.alpha - 2.0) / (2.0 - self.alpha)


@dataclass
class LimitPaths:
    times: np.ndarray
    U: np.ndarray  # (P, S, d)
    atom_counts: np.ndarray  # (P,)
    cfg: LevySimConfig

    def path(self, j: int) -> FluctuationPath:
        return FluctuationPath(self.times, self.U[j], f"limit(eps={self.cfg.eps:.3g})")


def _time_grid(t_max, h, sample_times):
    base = np.arange(0.0, t_max, h)
    grid = np.unique(np.concatenate([base, np.asarray(sample_times, dtype=float), [0.0, t_max]]))
    # merge points closer than h/1000 to a sample time
    keep = [grid[0]]
    st = set(np.round(np.asarray(sample_times, dtype=float), 15))
    for x in grid[1:]:
        if x - keep[-1] < h * 1e-3:
            if np.round(x, 15) in st:
                keep[-1] = x
            continue
        keep.append(x)
    return np.array(keep)


def simulate_limit_paths(
    limit: LimitSolution,
    cfg: LevySimConfig,
    n_paths: int,
    sample_times: Sequence[float] | None = None,
    *,
    drift: bool = True,
    random_jumps: bool = True,
    compensate: bool = True,
    forced_atoms: Sequence[tuple] = (),
) -> LimitPaths:
    """Euler scheme for the limit U, started at 0, recorded at ``sample_times``.

    Paths come in blocks of ``PATH_BLOCK`` with their own seed streams,
    so results depend only on (cfg, n_paths).
    ``forced_atoms`` are extra (time, size) jumps applied to every path.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    alpha, d = cfg.alpha, limit.d
    sample_times = np.asarray([cfg.t_max] if sample_times is None else sample_times, dtype=float)
    if np.any(sample_times < 0) or np.any(sample_times > cfg.t_max + 1e-12):
        raise ValueError("sample times must lie in [0, t_max]")
    grid = _time_grid(cfg.t_max, cfg.h, sample_times)
    idx = np.arange(1, d + 1)
    c_grid = limit.values(grid)
    bound = neglected_variance_bound(cfg.eps, alpha, float(np.max(c_grid * idx)) if len(grid) else 0.0)
    if bound > cfg.variance_threshold:
        raise ValueError(f"eps too large: neglected variance bound {bound:.3e} exceeds {cfg.variance_threshold:.3e}")
    steps = len(grid) - 1
    dts = np.diff(grid)
    mids = 0.5 * (grid[:-1] + grid[1:])
    c_mid = limit.values(mids) if steps else np.zeros((0, d))
    jac = [jacobian_F(np.clip(c, 0, None), alpha) for c in c_grid[:-1]] if drift else None
    use_band = random_jumps and cfg.atom_threshold > cfg.eps
    atom_level = cfg.atom_threshold if use_band else cfg.eps
    band_var = (cfg.atom_threshold**alpha - cfg.eps**alpha) / alpha if use_band else 0.0
    kap = cfg.kappa(atom_level if random_jumps else cfg.eps) if compensate else 0.0
    comp = (idx[None, :] * c_mid) * (kap * dts)[:, None]  # (steps, d)
    rec_index = np.searchsorted(grid, sample_times - 1e-12)
    rec_index = np.clip(rec_index, 0, len(grid) - 1)

    forced = np.zeros((steps, d))
    for s0, u0 in forced_atoms:
        k = min(int(np.searchsorted(grid, s0, side="right")) - 1, steps - 1)
        forced[k] -= idx * limit.values([s0])[0] * u0

    U_out = np.zeros((n_paths, len(sample_times), d))
    counts_out = np.zeros(n_paths, dtype=np.int64)
    rate = cfg.atom_rate(atom_level) * cfg.t_max
    for b, start in enumerate(range(0, n_paths, PATH_BLOCK)):
        P = min(PATH_BLOCK, n_paths - start)
        rng = np.random.default_rng(np.random.SeedSequence(int(cfg.seed), spawn_key=(b,)))
        jumps = np.zeros((steps, P, d))
        if random_jumps and steps:
            counts = rng.poisson(rate, size=P)
            total = int(counts.sum())
            owner = np.repeat(np.arange(P), counts)
            at = rng.uniform(0.0, cfg.t_max, size=total)
            size = atom_level * rng.uniform(size=total) ** (-1.0 / (2.0 - alpha))
            step_of = np.clip(np.searchsorted(grid, at, side="right") - 1, 0, steps - 1)
            contrib = -(idx[None, :] * limit.values(at)) * size[:, None]
            np.add.at(jumps, (step_of, owner), contrib)
            counts_out[start:start + P] = counts
            if use_band:
                z = rng.standard_normal((steps, P)) * np.sqrt(band_var * dts)[:, None]
                jumps -= z[:, :, None] * (idx[None, :] * c_mid)[:, None, :]
        U = np.zeros((P, d))
        r = 0
        while r < len(rec_index) and rec_index[r] == 0:
            U_out[start:start + P, r] = U
            r += 1
        for k in range(steps):
            U += jumps[k] + forced[k]
            if drift:
                U += dts[k] * (U @ jac[k].T)
            U += comp[k]
            while r < len(rec_index) and rec_index[r] == k + 1:
                U_out[start:start + P, r] = U
                r += 1
    return LimitPaths(sample_times, U_out, counts_out, cfg)


def simulate_limit_U(limit: LimitSolution, cfg: LevySimConfig, sample_times=None, **kw) -> FluctuationPath:
    """One path of the limit process."""
    if sample_times is None:
        sample_times = _time_grid(cfg.t_max, cfg.h, [cfg.t_max])
    return simulate_limit_paths(limit, cfg, 1, sample_times, **kw).path(0)


# ---------------------------------------------------------------------------
# statistics


def iqr(x, axis=0):
    q75, q25 = np.percentile(x, [75, 25], axis=axis)
    return q75 - q25


def loglog_slope(xs, ys):
    """Least-squares slope of log y on log x with its standard error."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    if len(lx) == 2:
        return float((ly[1] - ly[0]) / (lx[1] - lx[0])), 0.0
    res = stats.linregress(lx, ly)
    return float(res.slope), float(res.stderr)


def ks_distance(a, b) -> float:
    return float(stats.ks_2samp(np.ravel(a), np.ravel(b)).statistic)


@dataclass
class ScalingReport:
    ns: list
    iqr: dict  # n -> array of IQRs per marginal
    slope: np.ndarray
    slope_stderr: np.ndarray
    ks: dict = field(default_factory=dict)  # n -> array of KS distances per marginal

    def to_dict(self) -> dict:
        return {
            "n": [int(n) for n in self.ns],
            "iqr": {str(n): np.asarray(v).tolist() for n, v in self.iqr.items()},
            "slope": np.asarray(self.slope).tolist(),
            "slope_stderr": np.asarray(self.slope_stderr).tolist(),
            "ks": {str(n): np.asarray(v).tolist() for n, v in self.ks.items()},
        }


def tail_and_scaling_stats(samples: Mapping[int, np.ndarray], alpha: float,
                           limit_samples: np.ndarray | None = None,
                           min_replicas: int = 100) -> ScalingReport:
    """Spread of C^n_T - c_T across n and KS distance of U^n to the limit.

    ``samples[n]`` has replicas along axis 0 (any trailing marginal
    shape); ``limit_samples`` holds limit draws with the same trailing
    shape.
    """
    ns = sorted(samples)
    if len(ns) < 2:
        raise InsufficientSamplesError("need at least two values of n")
    arrs = {n: np.asarray(samples[n], dtype=float) for n in ns}
    if any(a.shape[0] < min_replicas for a in arrs.values()):
        raise InsufficientSamplesError(f"need at least {min_replicas} replicas per n")
    spreads = {n: np.atleast_1d(iqr(arrs[n], axis=0)) for n in ns}
    flat = np.stack([spreads[n].ravel() for n in ns])
    slopes = np.zeros(flat.shape[1])
    errs = np.zeros(flat.shape[1])
    for j in range(flat.shape[1]):
        if np.all(flat[:, j] > 0):
            slopes[j], errs[j] = loglog_slope(ns, flat[:, j])
        else:
            slopes[j], errs[j] = np.nan, np.nan
    shape = spreads[ns[0]].shape
    ks = {}
    if limit_samples is not None:
        lim = np.asarray(limit_samples, dtype=float)
        for n in ns:
            u = sigma_n(n, alpha) * arrs[n]
            a2 = u.reshape(u.shape[0], -1)
            l2 = lim.reshape(lim.shape[0], -1)
            if a2.shape[1] != l2.shape[1]:
                raise ValueError("limit samples have a different marginal shape")
            ks[n] = np.array([ks_distance(a2[:, j], l2[:, j]) for j in range(a2.shape[1])]).reshape(shape)
    return ScalingReport(ns, spreads, slopes.reshape(shape), errs.reshape(shape), ks)
