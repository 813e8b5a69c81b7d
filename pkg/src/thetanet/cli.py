"""Command-line front end.

Exit codes: 0 ok, 2 invalid configuration, 3 I/O error, 4 event cap
exceeded, 5 statistically insufficient input.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .bubble import (
    BubbleQuery,
    admissible_profiles,
    bubble_profile_bruteforce,
    bubble_profile_probability,
    bubble_size_pmf,
    spectrum_of_blocks,
)
from .fluct import InsufficientSamplesError, LevySimConfig, simulate_limit_paths, tail_and_scaling_stats
from .limit import closed_form, solve_ode
from .measures import BetaDirac
from .partition import parse_partition
from .records import fmt, read_run, write_run
from .simulate import ConfigError, EventCapExceeded, RunConfig, default_sample_times, resolve_workers, run_ensemble
from .specfun import LEMMA_IDS, check_lemma_asymptotics

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_CAP, EXIT_STATS = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def _floats(text: str) -> list:
    return [float(x) for x in text.replace(",", " ").split()]


def _write_text(path, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        p = Path(path)
        if p.parent and not p.parent.exists():
            p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from exc


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from exc


def _json_dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _c0(args, d: int) -> np.ndarray:
    if args.c0 is None:
        c0 = np.zeros(d)
        c0[0] = 1.0
        return c0
    try:
        c0 = np.asarray(json.loads(args.c0), dtype=float)
    except (ValueError, TypeError) as exc:
        raise CliError(EXIT_CONFIG, f"--c0 must be a JSON list: {exc}") from exc
    if c0.ndim != 1 or len(c0) != d:
        raise CliError(EXIT_CONFIG, f"--c0 must have length d={d}")
    return c0


# ---------------------------------------------------------------------------


def _simulate_config(args) -> RunConfig:
    if args.config:
        try:
            raw = json.loads(_read_text(args.config))
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_CONFIG, f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise CliError(EXIT_CONFIG, "config must be a JSON object")
        overrides = {"n": args.n, "d": args.d, "t_max": args.t_max, "replicas": args.replicas,
                     "seed": args.seed, "mode": args.mode}
        for key, val in overrides.items():
            if val is not None:
                raw[key] = val
        if args.sample_times is not None:
            raw["sample_times"] = _floats(args.sample_times)
    else:
        if args.alpha is not None:
            measure = {"type": "beta_dirac", "alpha": args.alpha,
                       "beta": 1.0 if args.beta is None else args.beta, "theta": args.theta or 0.0}
        elif args.theta is not None:
            measure = {"type": "edgewise", "theta": args.theta}
        else:
            raise CliError(EXIT_CONFIG, "give --config, --alpha or --theta")
        t_max = 1.0 if args.t_max is None else args.t_max
        raw = {
            "measure": measure,
            "n": args.n if args.n is not None else 1000,
            "d": args.d if args.d is not None else 4,
            "t_max": t_max,
            "sample_times": _floats(args.sample_times) if args.sample_times else default_sample_times(t_max),
            "replicas": args.replicas if args.replicas is not None else 1,
            "seed": args.seed if args.seed is not None else 0,
            "mode": args.mode or "spectrum",
        }
    try:
        return RunConfig.from_dict(raw)
    except (ConfigError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"invalid config: {exc}") from exc


def cmd_simulate(args) -> int:
    config = _simulate_config(args)
    try:
        workers = resolve_workers(args.workers)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    started, t0 = _now(), time.perf_counter()
    ens = run_ensemble(config, workers)
    runtime = {"started": started, "finished": _now(), "wall_time_s": time.perf_counter() - t0,
               "workers": workers, "backend": BACKEND}
    try:
        write_run(ens, args.out, runtime)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write run to {args.out}: {exc}") from exc
    if ens.failures:
        first = ens.failures[min(ens.failures)]
        code = EXIT_CAP if isinstance(first, EventCapExceeded) else EXIT_IO if isinstance(first, OSError) else 1
        raise CliError(code, f"{len(ens.failures)} replica(s) failed, first: {first}")
    return EXIT_OK


def cmd_ode(args) -> int:
    c0 = _c0(args, args.d)
    try:
        sol = solve_ode(c0, args.alpha, args.t_max, args.step)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "size", "value"])
    for s in range(0, len(sol.times), max(1, args.stride)):
        for i in range(sol.d):
            w.writerow([fmt(sol.times[s]), i + 1, fmt(sol.grid[s, i])])
    _write_text(args.out, buf.getvalue())
    return EXIT_OK


def cmd_closed_form(args) -> int:
    c0 = _c0(args, args.d)
    try:
        sol = closed_form(c0, args.alpha, args.d)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    _write_text(args.out, _json_dump({"alpha": args.alpha, "gamma": sol.gamma, "p": [list(map(float, p)) for p in sol.p]}))
    return EXIT_OK


def cmd_fluctuations(args) -> int:
    if len(args.dirs) < 2:
        raise CliError(EXIT_STATS, "need at least two run directories with distinct n")
    runs = []
    for d in args.dirs:
        try:
            runs.append(read_run(d))
        except (OSError, KeyError) as exc:
            raise CliError(EXIT_IO, f"cannot read run {d}: {exc}") from exc
    alphas = {r[0].measure.alpha for r in runs if isinstance(r[0].measure, BetaDirac)}
    if len(alphas) != 1 or len(runs) != sum(isinstance(r[0].measure, BetaDirac) for r in runs):
        raise CliError(EXIT_CONFIG, "runs must share one Beta measure")
    alpha = alphas.pop()
    ns = [r[0].n for r in runs]
    if len(set(ns)) != len(ns):
        raise CliError(EXIT_STATS, "run directories must have distinct n")
    d = min(r[0].d for r in runs)
    t_eval = args.time if args.time is not None else min(r[0].sample_times[-1] for r in runs)
    c0 = np.zeros(d)
    c0[0] = 1.0
    lim = closed_form(c0, alpha)
    c_t = lim.values([t_eval])[0]
    samples = {}
    for config, trajs, _ in runs:
        times = np.asarray(config.sample_times)
        j = np.nonzero(np.isclose(times, t_eval, rtol=0, atol=1e-12))[0]
        if len(j) == 0:
            raise CliError(EXIT_CONFIG, f"time {t_eval} is not a sample time of n={config.n}")
        samples[config.n] = np.array([tr.values[j[0], :d] for tr in trajs]) - c_t
    limit_draws = None
    if args.limit_paths > 0:
        cfg = LevySimConfig(alpha, t_max=t_eval, seed=args.seed)
        limit_draws = simulate_limit_paths(lim, cfg, args.limit_paths, [t_eval]).U[:, 0, :]
    try:
        report = tail_and_scaling_stats(samples, alpha, limit_draws, min_replicas=args.min_replicas)
    except InsufficientSamplesError as exc:
        raise CliError(EXIT_STATS, str(exc)) from exc
    out = report.to_dict()
    out.update({"alpha": alpha, "time": t_eval, "target_slope": -(1 - alpha) / (2 - alpha),
                "limit_paths": args.limit_paths, "limit_seed": args.seed})
    _write_text(Path(args.out), _json_dump(out))
    return EXIT_OK


def _parse_spectrum(text: str) -> tuple:
    raw = json.loads(text)
    if isinstance(raw, dict):
        items = [(int(k), int(v)) for k, v in raw.items()]
    else:
        items = [(int(s), int(k)) for s, k in raw]
    return tuple(sorted((s, k) for s, k in items if k))


def cmd_bubble(args) -> int:
    try:
        if args.partition:
            blocks = parse_partition(_read_text(args.partition))
            c = spectrum_of_blocks(blocks)
        elif args.spectrum:
            c = _parse_spectrum(args.spectrum)
            blocks, v = [], 0
            for s, k in c:
                for _ in range(k):
                    blocks.append(list(range(v, v + s)))
                    v += s
        else:
            raise CliError(EXIT_CONFIG, "give --partition or --spectrum")
    except (ValueError, TypeError) as exc:
        raise CliError(EXIT_CONFIG, f"bad partition/spectrum: {exc}") from exc
    n = sum(s * k for s, k in c)
    if not 0 <= args.m0 <= n:
        raise CliError(EXIT_CONFIG, "m0 must lie in [0, n]")
    exact = n <= args.exact_limit
    profiles = []
    for ell in admissible_profiles(c, args.m0):
        p = bubble_profile_probability(BubbleQuery(n, args.m0, ell, c), exact=exact)
        if p:
            row = {"profile": [list(x) for x in ell], "probability": float(p)}
            if exact:
                row["exact"] = str(p)
            profiles.append(row)
    size = bubble_size_pmf(c, args.m0, exact=exact)
    out = {"n": n, "m0": args.m0, "spectrum": [list(x) for x in c], "profiles": profiles,
           "size_pmf": {str(m): float(p) for m, p in zip(size.support, size.probs)}}
    if args.oracle:
        try:
            brute = bubble_profile_bruteforce(blocks, args.m0)
        except ValueError as exc:
            raise CliError(EXIT_CONFIG, str(exc)) from exc
        formula = {tuple(tuple(x) for x in r["profile"]): Fraction(r["exact"]) if exact else r["probability"]
                   for r in profiles}
        keys = set(brute) | set(formula)
        out["oracle_max_discrepancy"] = float(max(abs(brute.get(k, 0) - formula.get(k, 0)) for k in keys))
    _write_text(args.out, _json_dump(out))
    return EXIT_OK


def cmd_verify_lemmas(args) -> int:
    ids = LEMMA_IDS if args.lemma == "all" else (args.lemma,)
    params = {"alpha": args.alpha, "k": args.k, "theta": args.theta, "theta1": args.theta1, "theta2": args.theta2}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lemma", "n", "exact", "asymptotic", "residual"])
    for lid in ids:
        grid = [int(x) for x in _floats(args.n_grid)]
        if lid == "exp-bound":
            grid = [int(x) for x in _floats(args.n_grid_bound)]
        try:
            rows = check_lemma_asymptotics(lid, grid, params | ({"points": args.points} if lid == "exp-bound" else {}))
        except ValueError as exc:
            raise CliError(EXIT_CONFIG, str(exc)) from exc
        for r in rows:
            w.writerow([lid, r.n, fmt(r.exact), fmt(r.asymptotic), fmt(r.residual)])
    _write_text(args.out, buf.getvalue())
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        config, trajs, _ = read_run(args.dir)
    except (OSError, KeyError) as exc:
        raise CliError(EXIT_IO, f"cannot read run {args.dir}: {exc}") from exc
    if not isinstance(config.measure, BetaDirac):
        raise CliError(EXIT_CONFIG, "compare needs a Beta-measure run")
    if not trajs:
        raise CliError(EXIT_STATS, "run has no trajectories")
    c0 = np.zeros(config.d)
    c0[0] = 1.0
    c = closed_form(c0, config.measure.alpha).values(config.sample_times)
    vals = np.stack([t.values for t in trajs])  # (R, S, d)
    mean_dev = np.abs(vals.mean(axis=0) - c)
    per_rep = np.abs(vals - c[None]).max(axis=(1, 2))
    out = {
        "n": config.n, "alpha": config.measure.alpha, "replicas": len(trajs),
        "times": list(config.sample_times),
        "mean": vals.mean(axis=0).tolist(), "limit": c.tolist(),
        "sup_mean_deviation": float(mean_dev.max()),
        "replica_sup_deviation_quantiles": {q: float(np.quantile(per_rep, float(q))) for q in ("0.5", "0.95", "1.0")},
        "fraction_replicas_within_0.1": float(np.mean(per_rep <= 0.1)),
    }
    _write_text(Path(args.out) if args.out else Path(args.dir) / "compare_report.json", _json_dump(out))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thetanet", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"thetanet {__version__} ({BACKEND} kernel)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate replicas of the rescaled spectrum")
    s.add_argument("--config")
    s.add_argument("--alpha", type=float)
    s.add_argument("--beta", type=float)
    s.add_argument("--theta", type=float)
    s.add_argument("--n", type=int)
    s.add_argument("--d", type=int)
    s.add_argument("--t-max", type=float)
    s.add_argument("--sample-times", help="comma separated")
    s.add_argument("--replicas", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--mode", help="spectrum or bubble:M0")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    for name, func, text in (("ode", cmd_ode, "integrate the limit ODE on a time grid"),
                             ("closed-form", cmd_closed_form, "polynomial coefficients of the exact limit")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--alpha", type=float, default=0.5)
        s.add_argument("--d", type=int, default=4)
        s.add_argument("--c0", help="JSON list of length d (default: all singletons)")
        s.add_argument("--out", default="-")
        if name == "ode":
            s.add_argument("--t-max", type=float, default=1.0)
            s.add_argument("--step", type=float, default=1e-3)
            s.add_argument("--stride", type=int, default=1, help="write every k-th grid point")
        s.set_defaults(func=func)

    s = sub.add_parser("fluctuations", help="fluctuation scaling and law from run directories")
    s.add_argument("dirs", nargs="+")
    s.add_argument("--time", type=float)
    s.add_argument("--limit-paths", type=int, default=10000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--min-replicas", type=int, default=100)
    s.add_argument("--out", default="fluct_report.json")
    s.set_defaults(func=cmd_fluctuations)

    s = sub.add_parser("bubble", help="bubble profile law for a partition or spectrum")
    s.add_argument("--partition", help="partition dump file")
    s.add_argument("--spectrum", help='JSON, e.g. {"1": 2, "3": 1}')
    s.add_argument("--m0", type=int, required=True)
    s.add_argument("--oracle", action="store_true")
    s.add_argument("--exact-limit", type=int, default=64, help="rational arithmetic up to this n")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_bubble)

    s = sub.add_parser("verify-lemmas", help="residual tables of the integral asymptotics")
    s.add_argument("--lemma", choices=("all",) + LEMMA_IDS, default="all")
    s.add_argument("--n-grid", default="100,1000,10000")
    s.add_argument("--n-grid-bound", default="10,100,1000")
    s.add_argument("--points", type=int, default=1000)
    s.add_argument("--alpha", type=float, default=0.5)
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--theta", type=float, default=0.0)
    s.add_argument("--theta1", type=float, default=0.0)
    s.add_argument("--theta2", type=float, default=0.0)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_verify_lemmas)

    s = sub.add_parser("compare", help="mean trajectory against the deterministic limit")
    s.add_argument("dir")
    s.add_argument("--out")
    s.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        print(f"thetanet: {exc}", file=sys.stderr)
        return exc.code
    except EventCapExceeded as exc:
        print(f"thetanet: {exc}", file=sys.stderr)
        return EXIT_CAP
    except OSError as exc:
        print(f"thetanet: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
