"""Replica simulation of the rescaled block-size spectrum (and bubble)."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _backend
from .measures import (
    BetaDirac,
    EdgewiseOnly,
    GeneralProduct,
    ThetaMeasure,
    binomial_tail_weights,
    colored_count_weights,
    measure_from_dict,
    measure_to_dict,
)

__all__ = [
    "ConfigError",
    "EventCapExceeded",
    "RunConfig",
    "SpectrumTrajectory",
    "BubbleTrajectory",
    "Ensemble",
    "EventTables",
    "build_event_tables",
    "replica_bit_generator",
    "run_trajectory",
    "run_bubble_trajectory",
    "run_ensemble",
    "trace_events",
]

DEFAULT_MAX_EVENTS = 10**9


class ConfigError(ValueError):
    pass


class EventCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    measure: ThetaMeasure
    n: int
    d: int
    t_max: float
    sample_times: tuple
    replicas: int = 1
    seed: int = 0
    m0: int | None = None  # None: spectrum only; otherwise bubble from m0 marks
    max_events: int = DEFAULT_MAX_EVENTS

    def __post_init__(self):
        object.__setattr__(self, "sample_times", tuple(float(t) for t in self.sample_times))
        if not isinstance(self.measure, (BetaDirac, GeneralProduct, EdgewiseOnly)):
            raise ConfigError("measure must be a ThetaMeasure")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError("n must be a positive integer")
        if int(self.d) != self.d or not 1 <= self.d <= self.n:
            raise ConfigError("need 1 <= d <= n")
        if not (math.isfinite(self.t_max) and self.t_max >= 0):
            raise ConfigError("t_max must be finite and >= 0")
        ts = self.sample_times
        if not ts:
            raise ConfigError("sample_times must be non-empty")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigError("sample_times must be strictly increasing")
        if ts[0] < 0 or ts[-1] > self.t_max:
            raise ConfigError("sample_times must lie in [0, t_max]")
        if int(self.replicas) != self.replicas or self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.m0 is not None and not 1 <= self.m0 <= self.n:
            raise ConfigError("m0 must lie in [1, n]")
        if self.max_events < 1:
            raise ConfigError("max_events must be >= 1")
        if isinstance(self.measure, BetaDirac) and self.measure.theta > 0:
            raise ConfigError("edgewise rate with a Beta measure in rescaled time is not supported")

    @property
    def mode(self) -> str:
        return "spectrum" if self.m0 is None else f"bubble:{self.m0}"

    @property
    def rescaled(self) -> bool:
        return isinstance(self.measure, BetaDirac)

    def to_dict(self) -> dict:
        return {
            "measure": measure_to_dict(self.measure),
            "n": int(self.n),
            "d": int(self.d),
            "t_max": float(self.t_max),
            "sample_times": list(self.sample_times),
            "replicas": int(self.replicas),
            "seed": int(self.seed),
            "mode": self.mode,
            "max_events": int(self.max_events),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        try:
            mode = d.get("mode", "spectrum")
            if mode == "spectrum":
                m0 = None
            elif isinstance(mode, str) and mode.startswith("bubble:"):
                m0 = int(mode.split(":", 1)[1])
            else:
                raise ConfigError(f"bad mode {mode!r}")
            t_max = float(d["t_max"])
            times = d.get("sample_times")
            if times is None:
                times = default_sample_times(t_max)
            return cls(
                measure=measure_from_dict(d["measure"]),
                n=int(d["n"]),
                d=int(d["d"]),
                t_max=t_max,
                sample_times=tuple(times),
                replicas=int(d.get("replicas", 1)),
                seed=int(d.get("seed", 0)),
                m0=m0,
                max_events=int(d.get("max_events", DEFAULT_MAX_EVENTS)),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def default_sample_times(t_max: float, points: int = 11) -> list:
    if t_max == 0:
        return [0.0]
    return [t_max * i / (points - 1) for i in range(points)]


@dataclass
class SpectrumTrajectory:
    replica: int
    times: np.ndarray
    counts: np.ndarray  # (S, d) integer counts
    n: int
    events_nonsilent: int
    events_silent: int
    stream: str

    @property
    def values(self) -> np.ndarray:
        """Rescaled spectrum C^n_t = counts / n."""
        return self.counts / self.n


@dataclass
class BubbleTrajectory:
    replica: int
    times: np.ndarray
    lam: np.ndarray  # (S, d)
    mass: np.ndarray  # (S,)
    m0: int
    final_lam: np.ndarray | None = None  # full profile at the last sample time
    final_counts: np.ndarray | None = None


@dataclass
class Ensemble:
    config: RunConfig
    trajectories: list
    bubbles: list | None = None
    failures: dict = field(default_factory=dict)  # replica -> exception


@dataclass(frozen=True)
class EventTables:
    class_cum: np.ndarray
    class_kind: np.ndarray
    class_q: np.ndarray
    k_offsets: np.ndarray
    k_cum: np.ndarray

    @property
    def total_rate(self) -> float:
        return float(self.class_cum[-1]) if len(self.class_cum) else 0.0


@lru_cache(maxsize=32)
def build_event_tables(measure: ThetaMeasure, n: int) -> EventTables:
    """Event classes with cumulative rates and per-class K tables.

    The Beta measure is put on rescaled time (merger rates times
    n^(a-1)); the other measures run in natural time.
    """
    rates, kinds, qs, kcums = [], [], [], []
    if isinstance(measure, BetaDirac) and n >= 2:
        w = colored_count_weights(measure, n) * float(n) ** (measure.alpha - 1.0)
        rates.append(w.sum())
        kinds.append(0)
        qs.append(1.0)
        kcums.append(np.cumsum(w))
    if isinstance(measure, GeneralProduct) and n >= 2:
        for wt, u, q in measure.atoms:
            pmf = binomial_tail_weights(n, u)
            r = wt * pmf.sum() / u**2
            if r > 0:
                rates.append(r)
                kinds.append(0)
                qs.append(q)
                kcums.append(np.cumsum(pmf))
    if measure.theta > 0 and n >= 2:
        rates.append(measure.theta * n * (n - 1) / 2.0)
        kinds.append(1)
        qs.append(1.0)
        kcums.append(np.ones(1))
    offsets = np.zeros(len(kcums) + 1, dtype=np.int64)
    for i, kc in enumerate(kcums):
        offsets[i + 1] = offsets[i] + len(kc)
    k_cum = np.concatenate(kcums) if kcums else np.zeros(0)
    return EventTables(
        np.cumsum(np.array(rates, dtype=float)),
        np.array(kinds, dtype=np.int64),
        np.array(qs, dtype=float),
        offsets,
        k_cum,
    )


def replica_bit_generator(seed: int, replica: int) -> np.random.Philox:
    """Counter-based stream keyed by (seed, replica)."""
    return np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(replica),)))


def _run(config: RunConfig, replica: int, backend=None, trace=None):
    kernel = _backend.get_kernel(backend)
    tables = build_event_tables(config.measure, config.n)
    bg = replica_bit_generator(config.seed, replica)
    try:
        out = kernel.run_events(
            config.n, tables.class_cum, tables.class_kind, tables.class_q,
            tables.k_offsets, tables.k_cum, np.asarray(config.sample_times, dtype=float),
            config.d, bg, config.m0 or 0, config.max_events, trace,
        )
    except kernel.EventCapExceeded as exc:
        raise EventCapExceeded(f"replica {replica}: {exc}") from None
    spec, lam, mass, nonsilent, silent, final_counts, final_lam, n_traced = out
    traj = SpectrumTrajectory(replica, np.asarray(config.sample_times), spec, config.n,
                              int(nonsilent), int(silent), f"philox:{config.seed}:{replica}")
    bub = None
    if config.m0:
        bub = BubbleTrajectory(replica, np.asarray(config.sample_times), lam, mass, config.m0,
                               final_lam, final_counts)
    return traj, bub, n_traced


def run_trajectory(config: RunConfig, replica: int = 0, backend: str | None = None) -> SpectrumTrajectory:
    """One replica of the spectrum, recorded at ``config.sample_times``."""
    return _run(config, replica, backend)[0]


def run_bubble_trajectory(config: RunConfig, replica: int = 0, backend: str | None = None):
    if not config.m0:
        raise ConfigError("bubble run needs m0")
    traj, bub, _ = _run(config, replica, backend)
    return traj, bub


def trace_events(config: RunConfig, replica: int, max_rows: int, backend: str | None = None):
    """Spectrum counts[1..d] after each of the first ``max_rows`` events."""
    trace = np.zeros((max_rows, config.d), dtype=np.int64)
    traj, _, n_traced = _run(config, replica, backend, trace)
    return trace[:n_traced], traj


def _replica_task(args):
    config_dict, replica, backend = args
    config = RunConfig.from_dict(config_dict)
    try:
        traj, bub, _ = _run(config, replica, backend)
        return replica, traj, bub, None
    except Exception as exc:  # reported per replica, others continue
        return replica, None, None, exc


def resolve_workers(workers: int | None) -> int:
    env = os.environ.get("THETANET_WORKERS")
    if env:
        try:
            workers = int(env)
        except ValueError:
            raise ConfigError(f"THETANET_WORKERS must be an integer, got {env!r}") from None
    workers = 1 if workers is None else int(workers)
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    return workers


def run_ensemble(config: RunConfig, workers: int | None = 1, backend: str | None = None) -> Ensemble:
    """All replicas; output independent of the worker count."""
    workers = resolve_workers(workers)
    tasks = [(config.to_dict(), r, backend) for r in range(config.replicas)]
    if workers == 1:
        results = [_replica_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replica_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    results.sort(key=lambda r: r[0])
    ens = Ensemble(config, [], [] if config.m0 else None)
    for replica, traj, bub, exc in results:
        if exc is not None:
            ens.failures[replica] = exc
            continue
        ens.trajectories.append(traj)
        if config.m0:
            ens.bubbles.append(bub)
    return ens
