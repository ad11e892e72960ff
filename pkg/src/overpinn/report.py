"""Error metrics, metric records and grayscale heatmaps."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

RECORD_COLUMNS = ("run_id", "mode", "seed", "output", "final_rel_l2", "frame_times",
                  "frame_rel_l2", "wall_time", "steps")
RECORD_SCHEMA_VERSION = 1


def relative_l2(pred, ref) -> float:
    """||pred - ref||_2 / ||ref||_2 over all samples."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    ref = np.asarray(ref, dtype=np.float64).ravel()
    if pred.shape != ref.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {ref.shape}")
    norm = np.linalg.norm(ref)
    if norm == 0:
        raise ZeroDivisionError("reference has zero norm")
    return float(np.linalg.norm(pred - ref) / norm)


def slice_errors(pred, ref, times: Sequence[float], atol: float = 1e-9) -> list[float]:
    """Relative L2 per requested time between two FieldSeries."""
    return [relative_l2(pred.frame_at(t, atol), ref.frame_at(t, atol)) for t in times]


def render_heatmap(values, path) -> Path:
    """Write an 8-bit binary PGM with min-max scaling; the range goes to ``<path>.txt``.

    Rows of the image are the first array axis.  A constant field renders
    as mid-gray.
    """
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("heatmap data must be 2-D")
    if not np.all(np.isfinite(a)):
        raise ValueError("heatmap data must be finite")
    lo, hi = float(a.min()), float(a.max())
    if hi > lo:
        img = np.rint((a - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        img = np.full(a.shape, 128, dtype=np.uint8)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())
    Path(str(path) + ".txt").write_text(f"min {lo!r}\nmax {hi!r}\nrows {a.shape[0]}\ncols {a.shape[1]}\n")
    return path


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][:w * h], dtype=np.uint8).reshape(h, w)


@dataclass
class MetricsRecord:
    run_id: str
    mode: str
    seed: int
    final_rel_l2: dict[str, float]
    frame_rel_l2: dict[str, list[float]] = field(default_factory=dict)
    frame_times: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    steps: int = 0

    def __post_init__(self):
        for k, v in self.final_rel_l2.items():
            if v < 0 or any(x < 0 for x in self.frame_rel_l2.get(k, [])):
                raise ValueError("errors must be non-negative")
            if k in self.frame_rel_l2 and self.frame_times and \
                    len(self.frame_rel_l2[k]) != len(self.frame_times):
                raise ValueError("per-frame errors do not match the frame count")

    def rows(self) -> list[dict]:
        return [{"run_id": self.run_id, "mode": self.mode, "seed": self.seed, "output": k,
                 "final_rel_l2": repr(float(v)),
                 "frame_times": json.dumps([float(t) for t in self.frame_times]),
                 "frame_rel_l2": json.dumps([float(x) for x in self.frame_rel_l2.get(k, [])]),
                 "wall_time": repr(float(self.wall_time)), "steps": self.steps}
                for k, v in self.final_rel_l2.items()]


def write_records(records: Sequence[MetricsRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# overpinn metrics records v{RECORD_SCHEMA_VERSION}\n")
        w = csv.DictWriter(fh, fieldnames=RECORD_COLUMNS)
        w.writeheader()
        for r in records:
            w.writerows(r.rows())


def read_records(path) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# overpinn metrics records"):
            raise ValueError("not a metrics record file")
        out: dict[str, MetricsRecord] = {}
        for row in csv.DictReader(fh):
            rec = out.setdefault(row["run_id"], MetricsRecord(
                row["run_id"], row["mode"], int(row["seed"]), {}, {},
                json.loads(row["frame_times"]), float(row["wall_time"]), int(row["steps"])))
            rec.final_rel_l2[row["output"]] = float(row["final_rel_l2"])
            rec.frame_rel_l2[row["output"]] = json.loads(row["frame_rel_l2"])
    return list(out.values())


def write_slice_csv(path, times: Sequence[float], curves: dict[str, Sequence[float]]) -> None:
    """One row per time, one column per labelled error curve."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *curves])
        for i, t in enumerate(times):
            w.writerow([repr(float(t)), *(repr(float(c[i])) for c in curves.values())])


def read_slice_csv(path) -> tuple[list[float], dict[str, list[float]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0][1:]
    times = [float(r[0]) for r in rows[1:]]
    return times, {n: [float(r[i + 1]) for r in rows[1:]] for i, n in enumerate(names)}
