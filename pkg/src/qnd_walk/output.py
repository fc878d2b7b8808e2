"""CSV and JSON writers.  Floats are printed with 17 significant digits."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .trajectory import TrajectoryRecord


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def trajectory_header(n_classes: int) -> list[str]:
    return (
        ["traj", "step", "outcome", "log_p"]
        + [f"theta_bar_{k}" for k in range(n_classes)]
        + ["purity", "converged_class"]
    )


def trajectory_lines(rec: TrajectoryRecord) -> Iterable[str]:
    cfg = rec.config
    labels = None if cfg.is_gaussian else cfg.models[0].outcomes
    conv = "" if rec.converged_class is None else str(rec.converged_class)
    for k, n in enumerate(rec.steps):
        n = int(n)
        if n == 0:
            outcome = logp = ""
        else:
            o = rec.outcomes[n - 1]
            if labels is None:
                outcome = fmt(o)
            else:
                outcome = cfg.models[(n - 1) % len(cfg.models)].outcomes[int(o)]
            logp = fmt(rec.log_conditional[n - 1])
        w = ",".join(fmt(v) for v in rec.class_weights[k])
        yield f"{rec.trajectory_index},{n},{outcome},{logp},{w},{fmt(rec.purity[k])},{conv}"


def write_trajectories_csv(records: Sequence[TrajectoryRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    C = records[0].class_weights.shape[1] if records else 0
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(trajectory_header(C)) + "\n")
        for rec in sorted(records, key=lambda r: r.trajectory_index):
            for line in trajectory_lines(rec):
                fh.write(line + "\n")
    return path


def write_histogram_csv(rows: Sequence[tuple[float, float, int]], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write("bin_left,bin_right,count\n")
        for lo, hi, c in rows:
            fh.write(f"{fmt(lo)},{fmt(hi)},{int(c)}\n")
    return path


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats with strings so the JSON stays standard."""
    if isinstance(o, float) and not np.isfinite(o):
        return str(o)
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def write_json(obj, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_clean(json.loads(json.dumps(obj, default=_default, allow_nan=True))), indent=2)
    path.write_text(text + "\n")
    return path
