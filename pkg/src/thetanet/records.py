"""CSV and manifest persistence for simulation runs."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from pathlib import Path

import numpy as np

from . import __version__
from .simulate import BubbleTrajectory, Ensemble, RunConfig, SpectrumTrajectory

__all__ = [
    "fmt",
    "trajectories_csv",
    "write_run",
    "read_run",
    "sha256_file",
    "load_manifest_schema",
]

TRAJ_HEADER = ["replica", "time", "size", "value"]


def fmt(x) -> str:
    """Float with 17 significant digits; integers unchanged."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def trajectories_csv(ens: Ensemble) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJ_HEADER)
    bubbles = {b.replica: b for b in (ens.bubbles or [])}
    for tr in ens.trajectories:
        vals = tr.values
        b = bubbles.get(tr.replica)
        for s, t in enumerate(tr.times):
            ts = fmt(t)
            for i in range(vals.shape[1]):
                w.writerow([tr.replica, ts, i + 1, fmt(vals[s, i])])
            if b is not None:
                for i in range(b.lam.shape[1]):
                    w.writerow([tr.replica, ts, f"lambda_{i + 1}", int(b.lam[s, i])])
                w.writerow([tr.replica, ts, "bubble_mass", int(b.mass[s])])
    return buf.getvalue()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_run(ens: Ensemble, out_dir, runtime: dict) -> Path:
    """Write trajectories.csv and manifest.json into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traj_path = out / "trajectories.csv"
    traj_path.write_text(trajectories_csv(ens), encoding="utf-8")
    manifest = {
        "tool": "thetanet",
        "version": __version__,
        "config": ens.config.to_dict(),
        "seed": int(ens.config.seed),
        "replicas": [
            {"replica": int(t.replica), "events_nonsilent": int(t.events_nonsilent),
             "events_silent": int(t.events_silent), "stream": t.stream}
            for t in ens.trajectories
        ],
        "failed_replicas": {str(k): repr(v) for k, v in sorted(ens.failures.items())},
        "files": {"trajectories.csv": sha256_file(traj_path)},
        "runtime": runtime,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def read_run(run_dir):
    """(config, trajectories, bubbles) from a run directory."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    config = RunConfig.from_dict(manifest["config"])
    times = np.asarray(config.sample_times)
    d = config.d
    spec: dict = {}
    lam: dict = {}
    mass: dict = {}
    tindex = {fmt(t): j for j, t in enumerate(times)}
    with open(run_dir / "trajectories.csv", newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        header = next(rows)
        if header != TRAJ_HEADER:
            raise ValueError(f"unexpected CSV header {header!r}")
        for rep, t, size, value in rows:
            r, j = int(rep), tindex[t]
            if size.startswith("lambda_"):
                lam.setdefault(r, np.zeros((len(times), d), dtype=np.int64))[j, int(size[7:]) - 1] = int(value)
            elif size == "bubble_mass":
                mass.setdefault(r, np.zeros(len(times), dtype=np.int64))[j] = int(value)
            else:
                spec.setdefault(r, np.zeros((len(times), d)))[j, int(size) - 1] = float(value)
    events = {e["replica"]: e for e in manifest["replicas"]}
    trajs = []
    for r in sorted(spec):
        counts = np.rint(spec[r] * config.n).astype(np.int64)
        ev = events.get(r, {})
        trajs.append(SpectrumTrajectory(r, times, counts, config.n, ev.get("events_nonsilent", 0),
                                        ev.get("events_silent", 0), ev.get("stream", "")))
    bubbles = [BubbleTrajectory(r, times, lam[r], mass[r], config.m0) for r in sorted(lam)] if lam else None
    return config, trajs, bubbles


def load_manifest_schema() -> dict:
    path = Path(__file__).with_name("schemas") / "manifest.schema.json"
    return json.loads(path.read_text(encoding="utf-8"))
